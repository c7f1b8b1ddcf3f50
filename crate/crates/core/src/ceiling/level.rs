//! Untruncated building blocks of one level: the staircase `kappa_n`, the
//! windows `nu_n`, `upsilon_n`, and the functions `X~_n`, `Y~_n`.

use std::f64::consts::TAU;

use num_traits::ToPrimitive;

use super::bump::bump;
use crate::error::{Error, Result};
use crate::pairgen::{r_of, top_rung, LevelRecord};

/// Integer data of one level plus its staircase step `eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelGeometry {
    pub n: usize,
    pub p: i64,
    pub q: i64,
    pub ppp: i64,
    pub qpp: i64,
    pub qp: i64,
    pub r: i64,
    /// `floor((1 - 2/n) r_n)`.
    pub top: i64,
    /// `top * q_n * q'_{n-1}`.
    pub h: i64,
    pub eps: f64,
    inv_p: i64,
    inv_ppp: i64,
    inv_q: i64,
}

fn to_i64(x: &num_bigint::BigInt, what: &str) -> Result<i64> {
    x.to_i64()
        .filter(|v| v.abs() < (1i64 << 52))
        .ok_or_else(|| Error::InfeasibleScale(format!("{what}={x} is too large for float evaluation")))
}

/// Inverse of `a` modulo `m` (0 when `m = 1`).
pub fn mod_inverse(a: i64, m: i64) -> Option<i64> {
    if m == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (a.rem_euclid(m), m);
    let (mut s0, mut s1) = (1i64, 0i64);
    while r1 != 0 {
        let t = r0 / r1;
        (r0, r1) = (r1, r0 - t * r1);
        (s0, s1) = (s1, s0 - t * s1);
    }
    (r0 == 1).then(|| s0.rem_euclid(m))
}

impl LevelGeometry {
    pub fn new(rec: &LevelRecord, eps: f64) -> Result<Self> {
        if rec.n < 2 {
            return Err(Error::InvalidArgument(format!("level {} is below 2; the windows degenerate", rec.n)));
        }
        let q = to_i64(&rec.q, "q")?;
        let qpp = to_i64(&rec.q_prime_prev, "q'")?;
        let qp = to_i64(&rec.q_prime, "q'")?;
        let p = to_i64(&rec.p, "p")?;
        let ppp = to_i64(&rec.p_prime_prev, "p'")?;
        let inv_p = mod_inverse(p, q).ok_or_else(|| Error::InvalidSchedule(format!("p={p} not invertible mod {q}")))?;
        let inv_ppp =
            mod_inverse(ppp, qpp).ok_or_else(|| Error::InvalidSchedule(format!("p'={ppp} not invertible mod {qpp}")))?;
        let inv_q = mod_inverse(q, qpp).ok_or_else(|| {
            Error::InvalidSchedule(format!("gcd(q_n, q'_(n-1)) != 1 at level {} (q={q}, q'={qpp})", rec.n))
        })?;
        let r_big = r_of(&rec.q, &rec.q_prime_prev, &rec.q_prime);
        let r = to_i64(&r_big, "r")?;
        let top = to_i64(&top_rung(rec.n, &r_big), "top")?;
        Ok(LevelGeometry { n: rec.n, p, q, ppp, qpp, qp, r, top, h: top * q * qpp, eps, inv_p, inv_ppp, inv_q })
    }

    /// Number of cells `q_n q'_{n-1}`.
    pub fn cells(&self) -> i64 {
        self.q * self.qpp
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `beta_{n,j} = j/(q'_{n-1} q'_n)`.
    pub fn beta(&self, j: i64) -> f64 {
        j as f64 / (self.qpp as f64 * self.qp as f64)
    }

    /// Step count of the staircase at local coordinate `t = {q'_{n-1} y}`.
    fn kappa_steps(&self, t: f64) -> f64 {
        let n2 = self.nf() * self.nf();
        let s = t * (self.qp as f64 / (self.q as f64 * self.qpp as f64));
        let k = s.floor() as i64;
        let mut sum = (k - 1).clamp(0, self.r) as f64;
        if k >= 1 && k <= self.r {
            sum += bump(n2 * (s - k as f64));
        }
        sum
    }

    /// `kappa_n(y)`, of period `1/q'_{n-1}`.
    pub fn kappa(&self, y: f64) -> f64 {
        let t = frac(self.qpp as f64 * frac(y));
        let n = self.nf();
        let right = 1.0 - bump(n * t - n + 2.0);
        if right == 0.0 {
            return 0.0;
        }
        self.eps * self.kappa_steps(t) * right
    }

    /// `nu_n` on the real line.
    pub fn nu(&self, x: f64) -> f64 {
        let n2 = self.nf() * self.nf();
        let s = n2 * self.q as f64 * x;
        bump(s) - bump(s - n2 + 2.0)
    }

    /// `upsilon_n` on the real line.
    pub fn upsilon(&self, y: f64) -> f64 {
        let n2 = self.nf() * self.nf();
        let s = n2 * self.qpp as f64 * y;
        bump(s + 2.0) - bump(s - n2 + 3.0)
    }

    fn y_offset(&self) -> f64 {
        2.0 / (self.nf() * self.nf() * self.qpp as f64)
    }

    /// `nu_n(x) upsilon_n(y)` restricted to `[0,1/q) x [-2/(n^2 q'), 1/q' - 2/(n^2 q'))`
    /// and extended by zero to the torus.
    pub fn window(&self, x: f64, y: f64) -> f64 {
        let xl = frac(x);
        if xl >= 1.0 / self.q as f64 {
            return 0.0;
        }
        let off = self.y_offset();
        let yl = frac(y + off) - off;
        if yl >= 1.0 / self.qpp as f64 - off {
            return 0.0;
        }
        self.nu(xl) * self.upsilon(yl)
    }

    /// The `j`-th translate `window(x - j p/q, y - j p'/q')`, with exact rational shifts.
    pub fn window_shifted(&self, j: i64, x: f64, y: f64) -> f64 {
        let sx = (j * self.p).rem_euclid(self.q) as f64 / self.q as f64;
        let sy = (j * self.ppp).rem_euclid(self.qpp) as f64 / self.qpp as f64;
        self.window(x - sx, y - sy)
    }

    /// Index `j` of the cell whose window is nonzero at `(x, y)`, with the local
    /// coordinates inside that cell.
    pub fn cell(&self, x: f64, y: f64) -> (i64, f64, f64) {
        let xf = frac(x);
        let a = ((xf * self.q as f64).floor() as i64).min(self.q - 1);
        let xl = xf - a as f64 / self.q as f64;
        let off = self.y_offset();
        let yp = frac(y + off);
        let b = ((yp * self.qpp as f64).floor() as i64).min(self.qpp - 1);
        let yl = yp - b as f64 / self.qpp as f64 - off;
        (self.crt(a, b), xl, yl)
    }

    /// The unique `j mod q q'` with `j p = a mod q` and `j p' = b mod q'`.
    pub fn crt(&self, a: i64, b: i64) -> i64 {
        let ja = (a * self.inv_p).rem_euclid(self.q);
        let jb = (b * self.inv_ppp).rem_euclid(self.qpp);
        let t = ((jb - ja).rem_euclid(self.qpp) as i128 * self.inv_q as i128).rem_euclid(self.qpp as i128) as i64;
        ja + self.q * t
    }

    /// `X~_n(x, y)`; exactly one cell contributes at any point.
    pub fn xtilde(&self, x: f64, y: f64) -> f64 {
        let (j, xl, yl) = self.cell(x, y);
        if xl >= 1.0 / self.q as f64 || yl >= 1.0 / self.qpp as f64 - self.y_offset() {
            return 0.0;
        }
        let w = self.nu(xl) * self.upsilon(yl);
        if w == 0.0 {
            return 0.0;
        }
        self.kappa(y - self.beta(j)) * w
    }

    /// `X~_n` as the literal sum over all cells (test oracle; cost `q q'`).
    pub fn xtilde_sum(&self, x: f64, y: f64) -> f64 {
        (0..self.cells())
            .map(|j| {
                let w = self.window_shifted(j, x, y);
                if w == 0.0 {
                    0.0
                } else {
                    self.kappa(y - self.beta(j)) * w
                }
            })
            .sum()
    }

    /// `phi~_n(y)`, of period `1/q'_{n-1}`.
    pub fn phitilde(&self, y: f64) -> f64 {
        self.phitilde_local(frac(self.qpp as f64 * frac(y)))
    }

    /// `phi~_n` in the local coordinate `t = {q'_{n-1} y}`.
    pub fn phitilde_local(&self, t: f64) -> f64 {
        let n = self.nf();
        let n3 = n * n * n;
        bump(n3 * t - n3 + n * n) - bump(n3 * t - n3 + n)
    }

    /// `e^{-q_n}`.
    pub fn y_amplitude(&self) -> f64 {
        (-(self.q as f64)).exp()
    }

    /// `Y~_n(x, y) = -cos(2 pi q_n x) e^{-q_n} phi~_n(y)`.
    pub fn ytilde(&self, x: f64, y: f64) -> f64 {
        -(TAU * super::trig::frac_mul(self.q, x)).cos() * self.y_amplitude() * self.phitilde(y)
    }
}

pub(crate) fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use num_bigint::BigInt;

    pub(crate) fn record(n: usize, p: i64, q: i64, ppp: i64, qpp: i64, qp: i64) -> LevelRecord {
        LevelRecord {
            n,
            p: BigInt::from(p),
            q: BigInt::from(q),
            prime_index: 0,
            p_prime_prev: BigInt::from(ppp),
            q_prime_prev: BigInt::from(qpp),
            p_prime: BigInt::from(1),
            q_prime: BigInt::from(qp),
            inserted: false,
            parity: true,
        }
    }

    fn geom() -> LevelGeometry {
        // q = 5, q' = 3, q'_n = 212: r = floor(212/15) - 1 = 13, top = floor(13*3/5) = 7.
        LevelGeometry::new(&record(5, 2, 5, 1, 3, 212), 0.01).unwrap()
    }

    #[test]
    fn integer_data() {
        let g = geom();
        assert_eq!(g.r, 13);
        assert_eq!(g.top, 7);
        assert_eq!(g.h, 7 * 15);
        assert_eq!(mod_inverse(3, 7), Some(5));
        assert_eq!(mod_inverse(2, 4), None);
        for j in 0..g.cells() {
            let a = (j * g.p).rem_euclid(g.q);
            let b = (j * g.ppp).rem_euclid(g.qpp);
            assert_eq!(g.crt(a, b), j);
        }
    }

    #[test]
    fn kappa_vanishes_below_first_step_and_near_the_top() {
        let g = geom();
        let step = g.q as f64 / g.qp as f64;
        for i in 0..20 {
            let y = step * i as f64 / 20.0;
            assert_eq!(g.kappa(y), 0.0);
        }
        let n = g.n as f64;
        for i in 0..20 {
            let y = ((1.0 - 1.0 / n) + (1.0 / n) * i as f64 / 20.0) / g.qpp as f64;
            assert_eq!(g.kappa(y), 0.0, "{y}");
        }
    }

    #[test]
    fn kappa_plateaus() {
        let g = geom();
        let step = g.q as f64 / g.qp as f64;
        let n2 = (g.n * g.n) as f64;
        for i in 0..=g.top {
            for s in 1..8 {
                let y = step * (i as f64 + 1.0 / n2 + (1.0 - 2.0 / n2) * s as f64 / 8.0);
                assert_eq!(g.kappa(y), i as f64 * g.eps, "i={i}");
            }
        }
        let sup = (0..10_000).map(|i| g.kappa(i as f64 / 10_000.0)).fold(0.0, f64::max);
        assert!(sup <= g.r as f64 * g.eps + 1e-15);
    }

    #[test]
    fn window_plateau_and_zero() {
        let g = geom();
        // Center of the plateau of R-bar^0 at (x, y).
        let x = 0.5 / g.q as f64;
        let y = 0.5 * (1.0 - 1.0 / g.n as f64) / g.qpp as f64;
        assert_eq!(g.window(x, y), 1.0);
        assert_eq!(g.window(0.0, y), 0.0);
        assert_eq!(g.window_shifted(1, x, y), 0.0);
    }

    #[test]
    fn cell_evaluation_matches_full_sum() {
        let g = geom();
        for i in 0..400 {
            let x = (i as f64 * 0.618_033_988_7).fract();
            let y = (i as f64 * 0.414_213_562_3 + 0.1).fract();
            let a = g.xtilde(x, y);
            let b = g.xtilde_sum(x, y);
            assert!((a - b).abs() < 1e-15, "{x} {y} {a} {b}");
        }
    }

    #[test]
    fn phitilde_ranges() {
        let g = geom();
        let n = g.n as f64;
        for i in 0..=50 {
            let t = (1.0 - 1.0 / n) * i as f64 / 50.0;
            assert_eq!(g.phitilde_local(t), 0.0);
            let t1 = (1.0 - 1.0 / n + 1.0 / (n * n)) + (1.0 / n - 1.0 / (n * n) - 1.0 / (n * n)) * i as f64 / 50.0;
            assert_eq!(g.phitilde_local(t1), 1.0);
        }
        let y = (1.0 - 1.0 / (2.0 * n)) / g.qpp as f64;
        assert_eq!(g.ytilde(0.0, y), -(-5.0f64).exp());
    }
}

//! Birkhoff sums `S_m phi(z) = sum_{i<m} phi(z + i (alpha, alpha'))`.
//!
//! For a character `chi(z) = e^{2 pi i (l x + k y)}` with rotation number
//! `omega = l alpha + k alpha'`,
//! `S_m chi(z) = (chi(T^m z) - chi(z)) / (e^{2 pi i omega} - 1)`, which is what
//! the fast path evaluates; frequencies with tiny `omega` use
//! `e^{i pi (m-1) theta} sin(pi m theta)/sin(pi theta)` directly.
//! Negative `m` means `S_m = -sum_{m <= i < 0} phi(T^i z)`, so that
//! `S_{m+k}(z) = S_m(z) + S_k(T^m z)` for all integers.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::arith::{Angle, PrecisionPolicy};
use crate::ceiling::trig::{cis, TrigPolynomial};
use crate::ceiling::CeilingSpec;
use crate::error::{Error, Result};
use crate::pairgen::YPair;

/// Below this `|||omega|||` a frequency is summed term by term instead of
/// through the difference quotient.
pub const DIRECT_THRESHOLD: f64 = 1.0 / 1_048_576.0;

/// Below this the sine ratio is replaced by its series, `2^-(bits/2)`.
pub const SERIES_THRESHOLD: f64 = 1.0 / 18_446_744_073_709_551_616.0;

/// One frequency with its cached rotation number.
#[derive(Clone, Copy, Debug)]
pub struct CharacterSum {
    pub l: i64,
    pub k: i64,
    pub c: Complex64,
    pub omega: Angle,
    /// Signed representative of `omega` in `[-1/2, 1/2)`.
    pub theta: f64,
    /// `c / (e^{2 pi i omega} - 1)`, or 0 on the direct path.
    cd: Complex64,
    step: Complex64,
    pub direct: bool,
}

impl CharacterSum {
    fn new(l: i64, k: i64, c: Complex64, alpha: Angle, alpha_p: Angle) -> Self {
        let omega = alpha.mul_int(l as i128).add(alpha_p.mul_int(k as i128));
        let theta = omega.signed_f64();
        let direct = theta.abs() < DIRECT_THRESHOLD;
        let cd = if direct {
            Complex64::new(0.0, 0.0)
        } else {
            // e^{2 pi i t} - 1 = 2 i sin(pi t) e^{i pi t}
            let den = Complex64::new(0.0, 2.0 * (PI * theta).sin()) * cis(theta / 2.0);
            c / den
        };
        CharacterSum { l, k, c, omega, theta, cd, step: cis(theta), direct }
    }

    /// `min(m, 1/(2 |||omega|||))`.
    pub fn bound(&self, m: i64) -> f64 {
        let m = m.unsigned_abs() as f64;
        if self.theta == 0.0 {
            m
        } else {
            m.min(0.5 / self.theta.abs())
        }
    }

    /// `sum_{i<m} e^{2 pi i i omega}` from the exact angles.
    pub fn geometric(&self, m: i64) -> Complex64 {
        geometric_sum(self.omega, m)
    }
}

/// `sum_{0 <= i < m} e^{2 pi i i w}` (negated sum over `m <= i < 0` for `m < 0`).
pub fn geometric_sum(w: Angle, m: i64) -> Complex64 {
    let t1 = w.signed_f64();
    if t1.abs() < SERIES_THRESHOLD {
        let mf = m as f64;
        let a = PI * t1;
        let mag = mf * (1.0 - a * a * (mf * mf - 1.0) / 6.0);
        return cis((mf - 1.0) * t1 / 2.0) * mag;
    }
    let wm = w.mul_int(m as i128);
    let tm = wm.signed_f64();
    let ratio = (PI * tm).sin() / (PI * t1).sin();
    // e^{i pi (t_m - t_1)} with both halves taken exactly.
    let phase = wm.half_signed().sub(w.half_signed());
    cis(phase.to_f64()) * ratio
}

/// Precomputed frequency data for fast Birkhoff sums of a fixed polynomial.
#[derive(Clone, Debug)]
pub struct BirkhoffKernel {
    constant: f64,
    terms: Vec<CharacterSum>,
    /// `(l, range)` over non-direct terms, which come first in `terms`.
    groups: Vec<(i64, std::ops::Range<usize>)>,
    n_fast: usize,
    lmax: i64,
    kmax: i64,
    alpha: Angle,
    alpha_p: Angle,
    policy: PrecisionPolicy,
}

fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

/// Tables `e^{2 pi i j x}` for `0 <= j <= jmax`, from an exact angle.
fn angle_table(x: Angle, jmax: i64) -> Vec<Complex64> {
    (0..=jmax).map(|j| cis(x.mul_int(j as i128).to_f64())).collect()
}

#[inline]
fn table_get(t: &[Complex64], j: i64) -> Complex64 {
    if j >= 0 {
        t[j as usize]
    } else {
        t[(-j) as usize].conj()
    }
}

/// `(2 pi i l)^ox (2 pi i k)^oy`.
#[inline]
fn deriv_factor(l: i64, k: i64, ox: u32, oy: u32) -> Complex64 {
    if ox == 0 && oy == 0 {
        return Complex64::new(1.0, 0.0);
    }
    Complex64::new(0.0, TAU * l as f64).powu(ox) * Complex64::new(0.0, TAU * k as f64).powu(oy)
}

impl BirkhoffKernel {
    pub fn new(poly: &TrigPolynomial, pair: &YPair) -> Self {
        let (alpha, alpha_p) = (pair.alpha_angle(), pair.alpha_prime_angle());
        let mut fast = Vec::new();
        let mut slow = Vec::new();
        for t in poly.terms() {
            let cs = CharacterSum::new(t.l, t.k, t.c, alpha, alpha_p);
            if cs.direct {
                slow.push(cs);
            } else {
                fast.push(cs);
            }
        }
        let n_fast = fast.len();
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=fast.len() {
            if i == fast.len() || fast[i].l != fast[start].l {
                groups.push((fast[start].l, start..i));
                start = i;
            }
        }
        let (lmax, kmax) = poly.max_freq();
        fast.extend(slow);
        BirkhoffKernel {
            constant: poly.constant_term(),
            terms: fast,
            groups,
            n_fast,
            lmax,
            kmax,
            alpha,
            alpha_p,
            policy: pair.policy,
        }
    }

    pub fn from_spec(spec: &CeilingSpec) -> Self {
        Self::new(spec.phi(), &spec.pair)
    }

    pub fn terms(&self) -> &[CharacterSum] {
        &self.terms
    }

    pub fn policy(&self) -> PrecisionPolicy {
        self.policy
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// `T^m z` as exact angles.
    pub fn orbit(&self, x: Angle, y: Angle, m: i64) -> (Angle, Angle) {
        (x.add(self.alpha.mul_int(m as i128)), y.add(self.alpha_p.mul_int(m as i128)))
    }

    /// `T^m (x, y)` reduced to `[0, 1)`.
    pub fn translate(&self, x: f64, y: f64, m: i64) -> (f64, f64) {
        let (a, b) = self.orbit(Angle::from_f64(x), Angle::from_f64(y), m);
        (a.to_f64(), b.to_f64())
    }

    /// `phi(x, y)` from exact angles.
    pub fn phi_at(&self, x: Angle, y: Angle) -> f64 {
        self.value_at(x, y, 0, 0)
    }

    fn value_at(&self, x: Angle, y: Angle, ox: u32, oy: u32) -> f64 {
        let ex = angle_table(x, self.lmax);
        let ey = angle_table(y, self.kmax);
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            acc += t.c * deriv_factor(t.l, t.k, ox, oy) * table_get(&ex, t.l) * table_get(&ey, t.k);
        }
        let base = if ox == 0 && oy == 0 { self.constant } else { 0.0 };
        base + 2.0 * acc.re
    }

    /// `D_x^ox D_y^oy S_m phi(x, y)`.
    pub fn sum(&self, x: f64, y: f64, m: i64, ox: u32, oy: u32) -> Result<f64> {
        self.sum_at(Angle::from_f64(x), Angle::from_f64(y), m, ox, oy)
    }

    pub fn sum_at(&self, x: Angle, y: Angle, m: i64, ox: u32, oy: u32) -> Result<f64> {
        self.policy.check_iterate(m)?;
        if m == 0 {
            return Ok(0.0);
        }
        let (xm, ym) = self.orbit(x, y, m);
        let ex0 = angle_table(x, self.lmax);
        let ey0 = angle_table(y, self.kmax);
        let ex1 = angle_table(xm, self.lmax);
        let ey1 = angle_table(ym, self.kmax);
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, range) in &self.groups {
            let (mut b0, mut b1) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for t in &self.terms[range.clone()] {
                let w = t.cd * deriv_factor(t.l, t.k, ox, oy);
                b0 += w * table_get(&ey0, t.k);
                b1 += w * table_get(&ey1, t.k);
            }
            acc += table_get(&ex1, *l) * b1 - table_get(&ex0, *l) * b0;
        }
        for t in &self.terms[self.n_fast..] {
            acc += t.c
                * deriv_factor(t.l, t.k, ox, oy)
                * t.geometric(m)
                * table_get(&ex0, t.l)
                * table_get(&ey0, t.k);
        }
        let base = if ox == 0 && oy == 0 { self.constant * m as f64 } else { 0.0 };
        Ok(base + 2.0 * acc.re)
    }

    /// `S_m phi(., y)` as a trigonometric polynomial in `x`.
    pub fn line_x(&self, y: f64, m: i64) -> Result<LineSum> {
        self.policy.check_iterate(m)?;
        let ya = Angle::from_f64(y);
        let ey0 = angle_table(ya, self.kmax);
        let eym = angle_table(ya.add(self.alpha_p.mul_int(m as i128)), self.kmax);
        let ea = angle_table(self.alpha.mul_int(m as i128), self.lmax);
        let mut coeffs: Vec<(i64, Complex64)> = Vec::with_capacity(self.groups.len());
        for (l, range) in &self.groups {
            let e = table_get(&ea, *l);
            let mut c = Complex64::new(0.0, 0.0);
            for t in &self.terms[range.clone()] {
                c += t.cd * (e * table_get(&eym, t.k) - table_get(&ey0, t.k));
            }
            coeffs.push((*l, c));
        }
        for t in &self.terms[self.n_fast..] {
            coeffs.push((t.l, t.c * t.geometric(m) * table_get(&ey0, t.k)));
        }
        coeffs.sort_by_key(|c| c.0);
        let mut merged: Vec<(i64, Complex64)> = Vec::with_capacity(coeffs.len());
        for (l, c) in coeffs {
            match merged.last_mut() {
                Some(last) if last.0 == l => last.1 += c,
                _ => merged.push((l, c)),
            }
        }
        Ok(LineSum { base: self.constant * m as f64, coeffs: merged })
    }

    /// `S_m chi_{l,k}(z)` for one character, from the exact geometric ratio.
    pub fn character_sum(&self, l: i64, k: i64, m: i64, x: f64, y: f64) -> Complex64 {
        let w = self.alpha.mul_int(l as i128).add(self.alpha_p.mul_int(k as i128));
        let phase = Angle::from_f64(x).mul_int(l as i128).add(Angle::from_f64(y).mul_int(k as i128));
        geometric_sum(w, m) * cis(phase.to_f64())
    }

    /// `min(m, 1/(2 |||l alpha + k alpha'|||))`.
    pub fn character_bound(&self, l: i64, k: i64, m: i64) -> Result<f64> {
        character_bound_angles(self.alpha, self.alpha_p, l, k, m)
    }

    /// `sum_{(l,k) != 0} |c| min(m, 1/(2 |||omega|||))` over both halves: bounds `|S_m phi - m|`.
    pub fn mean_growth_bound(&self, m: i64) -> f64 {
        2.0 * self.terms.iter().map(|t| t.c.norm() * t.bound(m)).sum::<f64>()
    }

    /// Bound on `|grad S_m phi|` valid for every `|m'| <= |m|`.
    pub fn gradient_bound(&self, m: i64) -> f64 {
        2.0 * self
            .terms
            .iter()
            .map(|t| t.c.norm() * TAU * ((t.l * t.l + t.k * t.k) as f64).sqrt() * t.bound(m))
            .sum::<f64>()
    }

    /// Runs `m = 1..=m_max` over the product grid `xs x ys`, calling
    /// `visit(m, values, grad_norms)` with row-major (`ys` outer) slices.
    /// `grad_norms` is empty unless requested.
    pub fn sweep(
        &self,
        xs: &[f64],
        ys: &[f64],
        m_max: i64,
        with_grad: bool,
        mut visit: impl FnMut(i64, &[f64], &[f64]),
    ) -> Result<()> {
        self.policy.check_iterate(m_max)?;
        let (gx, gy) = (xs.len(), ys.len());
        let xa: Vec<Angle> = xs.iter().map(|&x| Angle::from_f64(x)).collect();
        let ya: Vec<Angle> = ys.iter().map(|&y| Angle::from_f64(y)).collect();
        let exs: Vec<Vec<Complex64>> = xa.iter().map(|&x| angle_table(x, self.lmax)).collect();
        let eys: Vec<Vec<Complex64>> = ya.iter().map(|&y| angle_table(y, self.kmax)).collect();
        let fast = &self.terms[..self.n_fast];
        let slow = &self.terms[self.n_fast..];
        let npts = gx * gy;
        // Offsets -sum cd chi(z), and their gradients.
        let mut off = vec![Complex64::new(0.0, 0.0); npts * 3];
        for v in 0..gy {
            for u in 0..gx {
                let mut s = [Complex64::new(0.0, 0.0); 3];
                for t in fast {
                    let e = t.cd * table_get(&exs[u], t.l) * table_get(&eys[v], t.k);
                    s[0] -= e;
                    s[1] -= e * Complex64::new(0.0, TAU * t.l as f64);
                    s[2] -= e * Complex64::new(0.0, TAU * t.k as f64);
                }
                for (c, val) in s.iter().enumerate() {
                    off[(v * gx + u) * 3 + c] = *val;
                }
            }
        }
        let mut p: Vec<Complex64> = fast.iter().map(|_| Complex64::new(1.0, 0.0)).collect();
        let mut values = vec![0.0; npts];
        let mut grads = if with_grad { vec![0.0; npts] } else { Vec::new() };
        let mut bx = vec![Complex64::new(0.0, 0.0); self.groups.len()];
        let mut by = vec![Complex64::new(0.0, 0.0); self.groups.len()];
        for m in 1..=m_max {
            if m % 1024 == 0 {
                for (pi, t) in p.iter_mut().zip(fast) {
                    *pi = cis(t.omega.mul_int(m as i128).to_f64());
                }
            } else {
                for (pi, t) in p.iter_mut().zip(fast) {
                    *pi *= t.step;
                }
            }
            for v in 0..gy {
                for (g, (_, range)) in self.groups.iter().enumerate() {
                    let (mut s, mut sy) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                    for i in range.clone() {
                        let t = &fast[i];
                        let e = t.cd * p[i] * table_get(&eys[v], t.k);
                        s += e;
                        if with_grad {
                            sy += e * (TAU * t.k as f64);
                        }
                    }
                    bx[g] = s;
                    by[g] = sy;
                }
                for u in 0..gx {
                    let (mut a, mut ax, mut ay) =
                        (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                    for (g, (l, _)) in self.groups.iter().enumerate() {
                        let e = table_get(&exs[u], *l);
                        a += bx[g] * e;
                        if with_grad {
                            ax += bx[g] * e * (TAU * *l as f64);
                            ay += by[g] * e;
                        }
                    }
                    let idx = v * gx + u;
                    let i = Complex64::new(0.0, 1.0);
                    let mut val = a + off[idx * 3];
                    let mut dx = ax * i + off[idx * 3 + 1];
                    let mut dy = ay * i + off[idx * 3 + 2];
                    for t in slow {
                        let e = t.c * t.geometric(m) * table_get(&exs[u], t.l) * table_get(&eys[v], t.k);
                        val += e;
                        dx += e * Complex64::new(0.0, TAU * t.l as f64);
                        dy += e * Complex64::new(0.0, TAU * t.k as f64);
                    }
                    values[idx] = self.constant * m as f64 + 2.0 * val.re;
                    if with_grad {
                        grads[idx] = (4.0 * (dx.re * dx.re + dy.re * dy.re)).sqrt();
                    }
                }
            }
            visit(m, &values, &grads);
        }
        Ok(())
    }
}

/// A Birkhoff sum restricted to a horizontal line: `base + 2 Re sum_l c_l e^{2 pi i l x}`.
#[derive(Clone, Debug)]
pub struct LineSum {
    pub base: f64,
    pub coeffs: Vec<(i64, Complex64)>,
}

impl LineSum {
    /// The `order`-th `x`-derivative at every point of `xs`.
    pub fn eval_many(&self, xs: &[f64], order: u32) -> Vec<f64> {
        let weights: Vec<Complex64> = self
            .coeffs
            .iter()
            .map(|(l, c)| c * Complex64::new(0.0, TAU * *l as f64).powu(order))
            .collect();
        xs.iter()
            .map(|&x| {
                let step = cis(x);
                let (mut pw, mut at) = (Complex64::new(1.0, 0.0), 0i64);
                let mut acc = Complex64::new(0.0, 0.0);
                for ((l, _), w) in self.coeffs.iter().zip(&weights) {
                    if l - at > 64 {
                        pw = cis(frac_mul(*l, x));
                    } else {
                        for _ in at..*l {
                            pw *= step;
                        }
                    }
                    at = *l;
                    acc += w * pw;
                }
                let base = if order == 0 { self.base } else { 0.0 };
                base + 2.0 * acc.re
            })
            .collect()
    }

    pub fn eval(&self, x: f64, order: u32) -> f64 {
        self.eval_many(&[x], order)[0]
    }
}

fn frac_mul(l: i64, x: f64) -> f64 {
    Angle::from_f64(x).mul_int(l as i128).to_f64()
}

/// `min(|m|, 1/(2 |||l alpha + k alpha'|||))`.
pub fn character_bound_angles(alpha: Angle, alpha_p: Angle, l: i64, k: i64, m: i64) -> Result<f64> {
    if l == 0 && k == 0 {
        return Err(Error::InvalidArgument("character bound needs (l, k) != (0, 0)".into()));
    }
    let w = alpha.mul_int(l as i128).add(alpha_p.mul_int(k as i128));
    let d = w.dist_to_int();
    let m = m.unsigned_abs() as f64;
    Ok(if d == 0.0 { m } else { m.min(0.5 / d) })
}

/// `min(|m|, 1/(2 |||l alpha + k alpha'|||))` for the pair of `spec`.
pub fn character_bound(spec: &CeilingSpec, l: i64, k: i64, m: i64) -> Result<f64> {
    character_bound_angles(spec.pair.alpha_angle(), spec.pair.alpha_prime_angle(), l, k, m)
}

/// `S_m phi(z)` by compensated summation along the orbit; `S_0 = 0`.
pub fn birkhoff_naive(spec: &CeilingSpec, x: f64, y: f64, m: i64) -> Result<f64> {
    let k = spec.kernel();
    k.policy().check_iterate(m)?;
    let (x0, y0) = (Angle::from_f64(x), Angle::from_f64(y));
    let (lo, hi, sign) = if m >= 0 { (0, m, 1.0) } else { (m, 0, -1.0) };
    let s = neumaier((lo..hi).map(|i| {
        let (a, b) = k.orbit(x0, y0, i);
        k.phi_at(a, b)
    }));
    Ok(sign * s)
}

/// `D_x^ox D_y^oy S_m phi(z)` through the closed form.
pub fn birkhoff_fast(spec: &CeilingSpec, x: f64, y: f64, m: i64, ox: u32, oy: u32) -> Result<f64> {
    spec.kernel().sum(x, y, m, ox, oy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ceiling::{assemble_phi_with, CeilingOptions};
    use crate::pairgen::{build_pair_with, BuildOptions, GrowthLaw, Seed};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn spec() -> &'static CeilingSpec {
        static S: OnceLock<CeilingSpec> = OnceLock::new();
        S.get_or_init(|| {
            let seed = Seed { alpha: vec![0, 1, 1, 2], alpha_prime: vec![0] };
            let opts = BuildOptions { close_alpha: true, ..Default::default() };
            let pair = build_pair_with(&GrowthLaw::Power { k: 2.0, c: 20.0 }, 1, &seed, &opts).unwrap();
            assemble_phi_with(&pair, &CeilingOptions { grid_exponent: 7, ..Default::default() }).unwrap()
        })
    }

    #[test]
    fn trivial_sums() {
        let s = spec();
        assert_eq!(birkhoff_naive(s, 0.2, 0.3, 0).unwrap(), 0.0);
        assert_eq!(birkhoff_fast(s, 0.2, 0.3, 0, 0, 0).unwrap(), 0.0);
        let one = birkhoff_naive(s, 0.2, 0.3, 1).unwrap();
        assert!((one - s.eval(0.2, 0.3)).abs() < 1e-13);
        let f1 = birkhoff_fast(s, 0.2, 0.3, 1, 0, 0).unwrap();
        assert!((f1 - one).abs() < 1e-12);
    }

    #[test]
    fn geometric_sum_matches_direct() {
        for &(w, m) in &[(0.3, 17i64), (1e-9, 1000), (0.5, 7), (0.123_456, -13), (1e-25, 50)] {
            let a = Angle::from_f64(w);
            let direct: Complex64 = if m >= 0 {
                (0..m).map(|i| cis(a.mul_int(i as i128).to_f64())).sum()
            } else {
                -(m..0).map(|i| cis(a.mul_int(i as i128).to_f64())).sum::<Complex64>()
            };
            let g = geometric_sum(a, m);
            assert!((g - direct).norm() < 1e-11 * (1.0 + direct.norm()), "{w} {m} {g} {direct}");
        }
    }

    #[test]
    fn finite_difference_derivative() {
        let s = spec();
        let (x, y, m, h) = (0.41, 0.13, 37, 1e-7);
        let d = birkhoff_fast(s, x, y, m, 1, 0).unwrap();
        let fd = (birkhoff_fast(s, x + h, y, m, 0, 0).unwrap() - birkhoff_fast(s, x - h, y, m, 0, 0).unwrap()) / (2.0 * h);
        assert!((d - fd).abs() <= 1e-4 * d.abs().max(1.0), "{d} {fd}");
    }

    #[test]
    fn character_bound_rejects_zero() {
        assert!(character_bound(spec(), 0, 0, 3).is_err());
        assert_eq!(character_bound(spec(), 2, 1, 1).unwrap(), 1.0);
    }

    #[test]
    fn sweep_agrees_with_pointwise() {
        let s = spec();
        let k = s.kernel();
        let xs = [0.1, 0.35, 0.8];
        let ys = [0.05, 0.6];
        let mut worst = 0.0f64;
        k.sweep(&xs, &ys, 1500, true, |m, vals, grads| {
            if m % 499 == 0 {
                for (v, &y) in ys.iter().enumerate() {
                    for (u, &x) in xs.iter().enumerate() {
                        let want = k.sum(x, y, m, 0, 0).unwrap();
                        worst = worst.max((vals[v * 3 + u] - want).abs() / (1.0 + want.abs()));
                        let gx = k.sum(x, y, m, 1, 0).unwrap();
                        let gy = k.sum(x, y, m, 0, 1).unwrap();
                        let g = (gx * gx + gy * gy).sqrt();
                        assert!((grads[v * 3 + u] - g).abs() <= 1e-9 * (1.0 + g));
                    }
                }
            }
        })
        .unwrap();
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn line_matches_pointwise() {
        let k = spec().kernel();
        let line = k.line_x(0.37, 211).unwrap();
        let xs = [0.0, 0.1, 0.55, 0.999];
        for o in 0..3 {
            let got = line.eval_many(&xs, o);
            for (x, g) in xs.iter().zip(got) {
                let want = k.sum(*x, 0.37, 211, o, 0).unwrap();
                assert!((g - want).abs() <= 1e-9 * (1.0 + want.abs()), "{o} {g} {want}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fast_matches_naive(x in 0.0f64..1.0, y in 0.0f64..1.0, m in -300i64..600) {
            let s = spec();
            let a = birkhoff_fast(s, x, y, m, 0, 0).unwrap();
            let b = birkhoff_naive(s, x, y, m).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{} {}", a, b);
        }

        #[test]
        fn cocycle(x in 0.0f64..1.0, y in 0.0f64..1.0, m in -2000i64..2000, k in -2000i64..2000) {
            let s = spec();
            let ker = s.kernel();
            let (xm, ym) = ker.translate(x, y, m);
            let lhs = ker.sum(x, y, m + k, 0, 0).unwrap();
            let rhs = ker.sum(x, y, m, 0, 0).unwrap() + ker.sum(xm, ym, k, 0, 0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn mean_growth(x in 0.0f64..1.0, y in 0.0f64..1.0, m in 1i64..5000) {
            let ker = spec().kernel();
            let s = ker.sum(x, y, m, 0, 0).unwrap();
            prop_assert!((s - m as f64).abs() <= ker.mean_growth_bound(m) + 1e-9);
        }
    }
}

//! Fourier truncations `X_n` and `Y_n` of the untruncated level functions.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::level::LevelGeometry;
use super::trig::{Term, TrigPolynomial};
use crate::error::{Error, Result};

/// `true` when `(l, k)` lies in the excluded set `(q_n Z) x (q'_n Z \ {0})`.
pub fn excluded(g: &LevelGeometry, l: i64, k: i64) -> bool {
    k != 0 && l % g.q == 0 && k % g.qp == 0
}

/// DFT coefficients of `X~_n` sampled on the `2^grid_exponent` square grid,
/// kept on the disk `l^2 + k^2 <= radius^2` minus the excluded set.
///
/// The samples of `X~_n` split over the `q_n` columns of cells, so every bin
/// factors as `N^-2 sum_a N_a(l) H_a(k)` with `N_a` the transform of the
/// `x`-window of column `a` and `H_a` that of the column's `y` profile.
pub fn truncate_x(g: &LevelGeometry, radius: usize, grid_exponent: u32) -> Result<TrigPolynomial> {
    if grid_exponent > 24 {
        return Err(Error::InvalidArgument(format!("grid exponent {grid_exponent} is too large")));
    }
    let n = 1usize << grid_exponent;
    if n < 4 * radius {
        return Err(Error::Aliasing(format!("grid 2^{grid_exponent} = {n} is below 4 x radius {radius}")));
    }
    let ni = n as i64;
    let mask = n - 1;
    let r = radius as i64;
    let tw: Vec<Complex64> = (0..n).map(|m| super::trig::cis(-(m as f64) / n as f64)).collect();

    let width = 2 * radius + 1;
    let mut na = vec![Complex64::new(0.0, 0.0); g.q as usize * (radius + 1)];
    let mut ha = vec![Complex64::new(0.0, 0.0); g.q as usize * width];
    let off = 2.0 / ((g.n * g.n) as f64 * g.qpp as f64);
    let nf = n as f64;
    let (qf, qppf) = (g.q as f64, g.qpp as f64);
    for a in 0..g.q {
        let row_n = &mut na[a as usize * (radius + 1)..(a as usize + 1) * (radius + 1)];
        let u0 = ((a as f64 / qf) * nf).ceil() as i64;
        let mut u = u0;
        while (u as f64) / nf < (a + 1) as f64 / qf && u < ni {
            let w = g.nu(u as f64 / nf - a as f64 / qf);
            if w != 0.0 {
                let mut idx = 0usize;
                let step = u as usize % n;
                for c in row_n.iter_mut() {
                    *c += tw[idx] * w;
                    idx = (idx + step) & mask;
                }
            }
            u += 1;
        }
        let row_h = &mut ha[a as usize * width..(a as usize + 1) * width];
        for b in 0..g.qpp {
            let j = g.crt(a, b);
            let beta = g.beta(j);
            let lo = b as f64 / qppf - off;
            let hi = (b + 1) as f64 / qppf - off;
            let mut v = (lo * nf).ceil() as i64;
            while (v as f64) / nf < hi {
                let y = v as f64 / nf;
                let w = g.upsilon(y - b as f64 / qppf);
                if w != 0.0 {
                    let val = w * g.kappa(y - beta);
                    if val != 0.0 {
                        let vm = v.rem_euclid(ni) as usize;
                        // k runs from -R to R.
                        let mut idx = ((-r).rem_euclid(ni) as usize * vm) % n;
                        for c in row_h.iter_mut() {
                            *c += tw[idx] * val;
                            idx = (idx + vm) & mask;
                        }
                    }
                }
                v += 1;
            }
        }
    }

    let scale = 1.0 / (nf * nf);
    let mut terms = Vec::new();
    let mut constant = 0.0;
    for l in 0..=r {
        let kmax = ((r * r - l * l) as f64).sqrt().floor() as i64;
        for k in -kmax..=kmax {
            if l == 0 && k < 0 {
                continue;
            }
            if excluded(g, l, k) {
                continue;
            }
            let mut c = Complex64::new(0.0, 0.0);
            for a in 0..g.q as usize {
                c += na[a * (radius + 1) + l as usize] * ha[a * width + (k + r) as usize];
            }
            c *= scale;
            if l == 0 && k == 0 {
                constant = c.re;
            } else {
                terms.push(Term { l, k, c });
            }
        }
    }
    TrigPolynomial::from_half(constant, terms)
}

/// Fourier coefficients of `phi~_n` on the frequencies `|k| < q'_n`; only
/// multiples of `q'_{n-1}` are nonzero.
pub fn phi_coefficients(g: &LevelGeometry) -> Vec<(i64, Complex64)> {
    let n3 = (g.n * g.n * g.n) as usize;
    let m = (64 * n3).next_power_of_two().max(1 << 16);
    let mut buf: Vec<Complex64> = (0..m).map(|i| Complex64::new(g.phitilde_local(i as f64 / m as f64), 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    let mut out = Vec::new();
    let jmax = (g.qp - 1) / g.qpp;
    for j in -jmax..=jmax {
        if (j.unsigned_abs() as usize) >= m / 2 {
            continue;
        }
        let c = buf[j.rem_euclid(m as i64) as usize] / m as f64;
        out.push((j * g.qpp, c));
    }
    out
}

/// Sup-norm budget for the terms of `Y_n` that are dropped as negligible.
pub const Y_NEGLIGIBLE: f64 = 1e-18;

/// `Y_n = -cos(2 pi q_n x) e^{-q_n} phi_n(y)` with `phi_n` the truncation of `phi~_n` to `|k| < q'_n`.
pub fn truncate_y(g: &LevelGeometry) -> Result<TrigPolynomial> {
    let amp = -0.5 * g.y_amplitude();
    if amp == 0.0 {
        return Ok(TrigPolynomial::zero());
    }
    let mut coeffs: Vec<(i64, Complex64)> = phi_coefficients(g).into_iter().map(|(k, c)| (k, c * amp)).collect();
    // Drop the smallest terms while their total stays below Y_NEGLIGIBLE.
    coeffs.sort_by(|a, b| a.1.norm().total_cmp(&b.1.norm()).then(a.0.cmp(&b.0)));
    let mut dropped = 0.0;
    let mut start = 0;
    while start < coeffs.len() && dropped + 2.0 * coeffs[start].1.norm() <= Y_NEGLIGIBLE {
        dropped += 2.0 * coeffs[start].1.norm();
        start += 1;
    }
    let mut kept = coeffs.split_off(start);
    kept.sort_by_key(|t| t.0);
    TrigPolynomial::from_half(0.0, kept.into_iter().map(|(k, c)| Term { l: g.q, k, c }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ceiling::level::tests::record;

    fn small() -> LevelGeometry {
        LevelGeometry::new(&record(3, 1, 3, 1, 2, 23), 0.05).unwrap()
    }

    /// Full 2-D DFT of the sampled function, as an oracle.
    fn brute(g: &LevelGeometry, e: u32) -> Vec<Complex64> {
        let n = 1usize << e;
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut a: Vec<Complex64> = (0..n * n)
            .map(|i| {
                let (v, u) = (i / n, i % n);
                Complex64::new(g.xtilde(u as f64 / n as f64, v as f64 / n as f64), 0.0)
            })
            .collect();
        for row in a.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for u in 0..n {
            for v in 0..n {
                col[v] = a[v * n + u];
            }
            fft.process(&mut col);
            for v in 0..n {
                a[v * n + u] = col[v] / (n * n) as f64;
            }
        }
        a
    }

    #[test]
    fn matches_brute_force_dft() {
        let g = small();
        let e = 7;
        let n = 1i64 << e;
        let radius = 32;
        let p = truncate_x(&g, radius, e).unwrap();
        let b = brute(&g, e);
        for l in -(radius as i64)..=radius as i64 {
            for k in -(radius as i64)..=radius as i64 {
                let want = if l * l + k * k <= (radius * radius) as i64 && !excluded(&g, l, k) {
                    b[(k.rem_euclid(n) * n + l.rem_euclid(n)) as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let got = p.coefficient(l, k);
                assert!((got - want).norm() < 1e-13, "({l},{k}) {got} {want}");
            }
        }
    }

    #[test]
    fn excluded_and_constant() {
        let g = small();
        let e = 8;
        let p = truncate_x(&g, 40, e).unwrap();
        assert_eq!(p.coefficient(0, g.qp), Complex64::new(0.0, 0.0));
        let n = 1usize << e;
        let mut mean = 0.0;
        for v in 0..n {
            for u in 0..n {
                mean += g.xtilde(u as f64 / n as f64, v as f64 / n as f64);
            }
        }
        mean /= (n * n) as f64;
        assert!((p.constant_term() - mean).abs() < 1e-10);
    }

    #[test]
    fn aliasing_guard() {
        let g = small();
        assert!(matches!(truncate_x(&g, 64, 7), Err(Error::Aliasing(_))));
    }

    #[test]
    fn y_support_and_mean() {
        let g = small();
        let y = truncate_y(&g).unwrap();
        assert!(y.terms().iter().all(|t| t.l == g.q && t.k.abs() < g.qp && t.k % g.qpp == 0));
        assert_eq!(y.coefficient(0, 2), Complex64::new(0.0, 0.0));
        // phi_0 by midpoint quadrature of phi~ as the oracle.
        let m = 200_000;
        let mean: f64 = (0..m).map(|i| g.phitilde_local((i as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64;
        let c = y.coefficient(g.q, 0);
        assert!((c.re + mean * g.y_amplitude() / 2.0).abs() < 1e-9 * g.y_amplitude());
        assert!((0.0..=1.0).contains(&mean));
    }
}

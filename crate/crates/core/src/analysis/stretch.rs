//! Uniform stretch: the sublevel-measure definition and the derivative criterion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance carried by the sampled measurement.
pub const MEASURE_TOL: f64 = 0.02;

/// Minimum number of samples for [`measure_stretch`].
pub const MIN_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchReport {
    pub a: f64,
    pub b: f64,
    /// `sup g - inf g` on the samples.
    pub k_measured: f64,
    /// Worst `|lambda(I_uv) / expected - 1|` over the window grid.
    pub distortion: f64,
    pub criterion_epsilon: Option<f64>,
    pub criterion_k: Option<f64>,
    pub criterion_pass: bool,
    pub definition_pass: bool,
}

/// Measure of `{x : u <= g(x) <= v}` for the piecewise linear interpolant.
fn sublevel_measure(xs: &[f64], g: &[f64], u: f64, v: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.len() - 1 {
        let (x0, x1, g0, g1) = (xs[i], xs[i + 1], g[i], g[i + 1]);
        let dx = x1 - x0;
        if g0 == g1 {
            if g0 >= u && g0 <= v {
                total += dx;
            }
            continue;
        }
        let (lo, hi) = if g0 < g1 { (g0, g1) } else { (g1, g0) };
        let ov = (hi.min(v) - lo.max(u)).max(0.0);
        total += dx * ov / (hi - lo);
    }
    total
}

/// Definition-side measurement on samples `g[i] = g(xs[i])` with `xs`
/// increasing; `windows` levels per side give the `(u, v)` grid.
pub fn measure_stretch(xs: &[f64], g: &[f64], windows: usize) -> Result<StretchReport> {
    if xs.len() != g.len() || xs.len() < MIN_SAMPLES {
        return invalid(format!("need at least {MIN_SAMPLES} matching samples, got {} and {}", xs.len(), g.len()));
    }
    if windows < 2 {
        return invalid("need at least 2 windows");
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || g.iter().any(|v| !v.is_finite()) {
        return invalid("samples must be finite with increasing abscissae");
    }
    let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let k = hi - lo;
    if k <= 0.0 {
        return Err(Error::Degenerate("g is constant on the interval".into()));
    }
    let (a, b) = (xs[0], xs[xs.len() - 1]);
    let span = (g[g.len() - 1] - g[0]).abs();
    let mut distortion: f64 = 0.0;
    if span == 0.0 {
        distortion = f64::INFINITY;
    } else {
        let levels: Vec<f64> = (0..=windows).map(|i| lo + k * i as f64 / windows as f64).collect();
        for i in 0..windows {
            for j in i + 1..=windows {
                let (u, v) = (levels[i], levels[j]);
                let expected = (v - u) / span * (b - a);
                let got = sublevel_measure(xs, g, u, v);
                distortion = distortion.max((got / expected - 1.0).abs());
            }
        }
    }
    Ok(StretchReport {
        a,
        b,
        k_measured: k,
        distortion,
        criterion_epsilon: None,
        criterion_k: None,
        criterion_pass: false,
        definition_pass: false,
    })
}

/// `(epsilon, K)` from `inf|g'|`, `sup|g''|` and the interval length.
pub fn stretch_criterion(inf_g1: f64, sup_g2: f64, length: f64) -> Result<(f64, f64)> {
    if !(inf_g1.is_finite() && sup_g2.is_finite() && length.is_finite()) || length <= 0.0 || sup_g2 < 0.0 {
        return invalid("criterion bounds must be finite with positive length");
    }
    if inf_g1 <= 0.0 {
        return Err(Error::Degenerate("inf |g'| vanishes".into()));
    }
    Ok((sup_g2 * length / inf_g1, inf_g1 * length))
}

/// Fills the pass flags: the criterion passes when it returns `eps <= eps_max`
/// and `K >= k_min`; the definition when the measurement meets the same targets.
pub fn judge(mut rep: StretchReport, crit: Option<(f64, f64)>, eps_max: f64, k_min: f64) -> StretchReport {
    if let Some((e, k)) = crit {
        rep.criterion_epsilon = Some(e);
        rep.criterion_k = Some(k);
        rep.criterion_pass = e <= eps_max && k >= k_min;
    }
    rep.definition_pass = rep.distortion <= eps_max + MEASURE_TOL && rep.k_measured >= k_min * (1.0 - MEASURE_TOL);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_is_undistorted() {
        let xs = grid(1001, 0.0, 1.0);
        let g: Vec<f64> = xs.iter().map(|x| 7.5 * x).collect();
        let r = measure_stretch(&xs, &g, 16).unwrap();
        assert!(r.distortion <= 1e-9);
        assert!((r.k_measured - 7.5).abs() < 1e-12);
    }

    #[test]
    fn folding_sine_fails() {
        let xs = grid(2001, 0.0, 1.0);
        let g: Vec<f64> = xs.iter().map(|x| (std::f64::consts::TAU * x).sin()).collect();
        let r = measure_stretch(&xs, &g, 8).unwrap();
        assert!(r.distortion > 0.5);
    }

    #[test]
    fn constant_is_degenerate() {
        let xs = grid(1000, 0.0, 1.0);
        assert!(matches!(measure_stretch(&xs, &vec![2.0; 1000], 4), Err(Error::Degenerate(_))));
        assert!(measure_stretch(&xs[..10], &[0.0; 10], 4).is_err());
    }

    #[test]
    fn criterion_formula() {
        assert_eq!(stretch_criterion(3.0, 0.0, 1.0).unwrap(), (0.0, 3.0));
        let (e, k) = stretch_criterion(10.0, 1.0, 0.1).unwrap();
        assert!((k - 1.0).abs() < 1e-15 && (e - 0.01).abs() < 1e-15);
        assert!(matches!(stretch_criterion(0.0, 1.0, 1.0), Err(Error::Degenerate(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        // Quadratics and exponentials with a nonvanishing derivative.
        #[test]
        fn criterion_implies_definition(c1 in 1.0f64..50.0, c2 in -20.0f64..20.0, len in 0.01f64..1.0, flip in any::<bool>()) {
            let xs = grid(2000, 0.0, len);
            let sgn = if flip { -1.0 } else { 1.0 };
            // g' = sgn (c1 + c2 x) stays away from zero when |c2| len < c1 / 2.
            let c2 = if c2.abs() * len > c1 / 2.0 { c2.signum() * c1 / (2.0 * len) } else { c2 };
            let g: Vec<f64> = xs.iter().map(|x| sgn * (c1 * x + c2 * x * x / 2.0)).collect();
            let inf1 = c1 - c2.abs() * len;
            let (e, k) = stretch_criterion(inf1, c2.abs(), len).unwrap();
            let r = judge(measure_stretch(&xs, &g, 10).unwrap(), Some((e, k)), e, k);
            prop_assert!(r.distortion <= e + MEASURE_TOL, "{} {}", r.distortion, e);
            prop_assert!(r.k_measured >= k * (1.0 - MEASURE_TOL));
            prop_assert!(r.definition_pass);
        }
    }
}

//! The special flow under `phi`: points `(x, y, s)` with `0 <= s < phi(x, y)`
//! move up in `s` and jump to `T(x, y)` at the ceiling.

use serde::{Deserialize, Serialize};

use crate::ceiling::CeilingSpec;
use crate::error::{invalid, Error, Result};

/// Relative width within which `s + t = S_m phi(z)` counts as a tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

impl FlowPoint {
    pub fn new(x: f64, y: f64, s: f64) -> Self {
        FlowPoint { x, y, s }
    }

    /// Checks `0 <= s < phi(x, y)` and reduces `x, y` to `[0, 1)`.
    pub fn checked(spec: &CeilingSpec, x: f64, y: f64, s: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && s.is_finite()) {
            return invalid("flow point must be finite");
        }
        let (x, y) = (x.rem_euclid(1.0), y.rem_euclid(1.0));
        let phi = spec.eval(x, y);
        if s < 0.0 || s >= phi {
            return invalid(format!("s = {s} is outside [0, phi(z)) = [0, {phi})"));
        }
        Ok(FlowPoint { x, y, s })
    }

    /// Distance on the torus in `(x, y)` plus the difference in `s`.
    pub fn distance(&self, other: &FlowPoint) -> f64 {
        let d = |a: f64, b: f64| {
            let t = (a - b).rem_euclid(1.0);
            t.min(1.0 - t)
        };
        d(self.x, other.x).max(d(self.y, other.y)).max((self.s - other.s).abs())
    }
}

/// Distance between two flow points that also identifies `(z, phi(z))` with `(T z, 0)`.
pub fn flow_distance(spec: &CeilingSpec, a: &FlowPoint, b: &FlowPoint) -> f64 {
    let up = |p: &FlowPoint| {
        let (x, y) = spec.kernel().translate(p.x, p.y, 1);
        FlowPoint { x, y, s: p.s - spec.eval(p.x, p.y) }
    };
    a.distance(b).min(up(a).distance(b)).min(a.distance(&up(b)))
}

/// The unique `m` with `S_m phi(z) <= s + t < S_{m+1} phi(z)`; a value of
/// `s + t` within `TIE_TOL` of `S_{m+1}` advances to `m + 1`.
pub fn time_index(spec: &CeilingSpec, x: f64, y: f64, s: f64, t: f64) -> Result<i64> {
    Ok(locate(spec, x, y, s + t)?.0)
}

/// Returns `(m, S_m phi(z))`.
fn locate(spec: &CeilingSpec, x: f64, y: f64, u: f64) -> Result<(i64, f64)> {
    if !u.is_finite() {
        return invalid("flow time must be finite");
    }
    let k = spec.kernel();
    let (lo_v, hi_v) = (spec.min_value, spec.max_value);
    let cands = [u / lo_v, u / hi_v];
    let lo_f = cands[0].min(cands[1]).floor() - 1.0;
    let hi_f = cands[0].max(cands[1]).ceil() + 1.0;
    let limit = k.policy().max_iterate as f64;
    if lo_f.abs() > limit || hi_f.abs() > limit {
        return Err(Error::Precision(format!("flow time {u} needs more than {limit} iterates")));
    }
    let tol = TIE_TOL * (1.0 + u.abs());
    let target = u + tol;
    // Invariant: S_lo <= target < S_hi. Each probe also narrows the far side
    // through phi >= min_value, and the next probe assumes unit slope.
    let (mut lo, mut hi) = (lo_f as i64, hi_f as i64);
    let mut s_lo: Option<f64> = None;
    let mut m = u.round() as i64;
    while hi - lo > 1 {
        if m <= lo || m >= hi {
            m = lo + (hi - lo) / 2;
        }
        let v = k.sum(x, y, m, 0, 0)?;
        if v <= target {
            lo = m;
            s_lo = Some(v);
            hi = hi.min(m + ((target - v) / lo_v).floor() as i64 + 1);
            m += ((target - v).round() as i64).max(1);
        } else {
            hi = m;
            let back = ((v - target) / lo_v).ceil() as i64;
            if m - back > lo {
                lo = m - back;
                s_lo = None;
            }
            m -= ((v - target).round() as i64).max(1);
        }
    }
    let s_lo = match s_lo {
        Some(v) => v,
        None => k.sum(x, y, lo, 0, 0)?,
    };
    Ok((lo, s_lo))
}

/// `Phi_t(x, y, s)`, for either sign of `t`.
pub fn flow_map(spec: &CeilingSpec, p: FlowPoint, t: f64) -> Result<FlowPoint> {
    let u = p.s + t;
    let (m, sm) = locate(spec, p.x, p.y, u)?;
    let (x, y) = spec.kernel().translate(p.x, p.y, m);
    let phi = spec.eval(x, y);
    let s = (u - sm).clamp(0.0, phi.next_down_or_self());
    Ok(FlowPoint { x, y, s })
}

trait NextDown {
    fn next_down_or_self(self) -> f64;
}

impl NextDown for f64 {
    fn next_down_or_self(self) -> f64 {
        if self > 0.0 {
            f64::from_bits(self.to_bits() - 1)
        } else {
            self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ceiling::{assemble_phi_with, CeilingOptions};
    use crate::pairgen::{build_pair_with, BuildOptions, GrowthLaw, Seed};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
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

    fn sample(rng: &mut ChaCha8Rng, s: &CeilingSpec) -> FlowPoint {
        loop {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let h = rng.random::<f64>() * s.max_value;
            if h < s.eval(x, y) {
                return FlowPoint { x, y, s: h };
            }
        }
    }

    #[test]
    fn identity_at_zero() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = sample(&mut rng, s);
            let q = flow_map(s, p, 0.0).unwrap();
            assert_eq!(time_index(s, p.x, p.y, p.s, 0.0).unwrap(), 0);
            assert!(p.distance(&q) < 1e-14, "{p:?} {q:?}");
        }
    }

    #[test]
    fn index_brackets_and_monotone() {
        let s = spec();
        let k = s.kernel();
        let (x, y) = (0.3, 0.6);
        let mut prev = i64::MIN;
        for i in -200..200 {
            let t = i as f64 * 3.7;
            let m = time_index(s, x, y, 0.0, t).unwrap();
            assert!(m >= prev);
            prev = m;
            assert!(k.sum(x, y, m, 0, 0).unwrap() <= t + 1e-9);
            assert!(k.sum(x, y, m + 1, 0, 0).unwrap() > t - 1e-9);
        }
    }

    #[test]
    fn tie_advances() {
        let s = spec();
        let k = s.kernel();
        let v = k.sum(0.2, 0.7, 5, 0, 0).unwrap();
        assert_eq!(time_index(s, 0.2, 0.7, 0.0, v).unwrap(), 5);
        assert_eq!(time_index(s, 0.2, 0.7, 0.0, v * (1.0 - 1e-14)).unwrap(), 5);
        assert_eq!(time_index(s, 0.2, 0.7, 0.0, v * (1.0 - 1e-9)).unwrap(), 4);
    }

    #[test]
    fn rejects_bad_points() {
        let s = spec();
        assert!(FlowPoint::checked(s, 0.1, 0.1, -0.1).is_err());
        assert!(FlowPoint::checked(s, 0.1, 0.1, 100.0).is_err());
        assert!(flow_map(s, FlowPoint::new(0.1, 0.1, 0.0), f64::NAN).is_err());
    }

    #[test]
    fn preserves_measure_of_a_box() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inside = |p: &FlowPoint| p.x < 0.5 && p.y < 0.5 && p.s < 0.6;
        let n = 4000;
        let (mut a, mut b) = (0usize, 0usize);
        for _ in 0..n {
            let p = sample(&mut rng, s);
            a += inside(&p) as usize;
            b += inside(&flow_map(s, p, 57.3).unwrap()) as usize;
        }
        let (pa, pb) = (a as f64 / n as f64, b as f64 / n as f64);
        let se = (pa * (1.0 - pa) / n as f64).sqrt() * 2f64.sqrt();
        assert!((pa - pb).abs() <= 3.0 * se, "{pa} {pb} {se}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn semigroup(seed in any::<u64>(), t1 in -500.0f64..500.0, t2 in -500.0f64..500.0) {
            let s = spec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = sample(&mut rng, s);
            let a = flow_map(s, flow_map(s, p, t1).unwrap(), t2).unwrap();
            let b = flow_map(s, p, t1 + t2).unwrap();
            prop_assert!(flow_distance(s, &a, &b) <= 1e-8, "{:?} {:?}", a, b);
        }
    }
}

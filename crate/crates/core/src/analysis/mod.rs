//! Stretch and mixing diagnostics.

pub mod correlation;
pub mod stretch;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub use correlation::{box_measure, correlation, correlation_series, CorrelationPoint, FlowRegion};
pub use stretch::{judge, measure_stretch, stretch_criterion, StretchReport};

use crate::ceiling::CeilingSpec;
use crate::error::{invalid, Error, Result};
use crate::flow::time_index;
use crate::pairgen::YPair;
use crate::towers::{Rect, TowerSpec};

/// The two pieces of `J_n` in `[0, 1/q_n)`: `{q x}` in `[1/n, 1/2 - 1/n]` and `[1/2 + 1/n, 1 - 1/n]`.
pub fn j_components(q: i64, n: usize) -> [(f64, f64); 2] {
    let (qf, nf) = (q as f64, n as f64);
    [(1.0 / nf / qf, (0.5 - 1.0 / nf) / qf), ((0.5 + 1.0 / nf) / qf, (1.0 - 1.0 / nf) / qf)]
}

pub fn in_j(q: i64, n: usize, x: f64) -> bool {
    let t = (q as f64 * x).rem_euclid(1.0);
    let nf = n as f64;
    (t >= 1.0 / nf && t <= 0.5 - 1.0 / nf) || (t >= 0.5 + 1.0 / nf && t <= 1.0 - 1.0 / nf)
}

/// Intervals partitioning `J_n`, each of length in `[L/2, L]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOnePartition {
    pub n: usize,
    pub q: i64,
    pub length: f64,
    /// Number of equal pieces per component of `J_n`.
    pub per_component: usize,
}

impl StepOnePartition {
    /// `length = None` takes the whole component of `J_n`.
    pub fn new(n: usize, q: i64, length: Option<f64>) -> Result<Self> {
        if n < 5 {
            return invalid(format!("J_n is empty or degenerate for n = {n} < 5"));
        }
        let comp = (0.5 - 2.0 / n as f64) / q as f64;
        let l = length.unwrap_or(comp);
        if !(l > 0.0) || l > 2.0 * comp {
            return invalid(format!("interval length {l} must lie in (0, {}]", 2.0 * comp));
        }
        let per = (comp / l).ceil().max(1.0) as usize;
        Ok(StepOnePartition { n, q, length: l, per_component: per })
    }

    pub fn len(&self) -> usize {
        2 * self.per_component * self.q as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `i`-th interval, ordered by left end.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let cell = i / (2 * self.per_component);
        let rest = i % (2 * self.per_component);
        let (c, k) = (rest / self.per_component, rest % self.per_component);
        let (a, b) = j_components(self.q, self.n)[c];
        let w = (b - a) / self.per_component as f64;
        let off = cell as f64 / self.q as f64;
        (off + a + w * k as f64, off + a + w * (k + 1) as f64)
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|i| self.interval(i)).collect()
    }
}

/// Schedule-derived time windows at level `n`; `hi < lo` means empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindows {
    pub n: usize,
    /// `[2 q'_n, q_{n+1}/(n+1)^2]`.
    pub step1: (f64, f64),
    /// `[q_n/n^2, q'_n/n^2]`.
    pub step2: (f64, f64),
    /// `[q'_n/n^2, 2 q'_n]`.
    pub step3: (f64, f64),
}

impl TimeWindows {
    pub fn all(&self) -> [(&'static str, (f64, f64)); 3] {
        [("step1", self.step1), ("step2", self.step2), ("step3", self.step3)]
    }
}

pub fn time_windows(pair: &YPair, n: usize) -> Result<TimeWindows> {
    let rec = pair.level(n)?;
    let f = |x: &BigInt| x.to_f64().unwrap_or(f64::INFINITY);
    let (q, qp) = (f(&rec.q), f(&rec.q_prime));
    let q_next = if n + 1 < pair.alpha.len() { f(pair.alpha.q(n + 1)) } else { f64::NAN };
    let n2 = (n * n) as f64;
    let n12 = ((n + 1) * (n + 1)) as f64;
    Ok(TimeWindows { n, step1: (2.0 * qp, q_next / n12), step2: (q / n2, qp / n2), step3: (qp / n2, 2.0 * qp) })
}

/// One row of a stretch scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StretchRow {
    pub interval: (f64, f64),
    pub y: f64,
    pub m: i64,
    pub report: StretchReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Intervals used, spread evenly over the partition.
    pub intervals: usize,
    /// Fibers `y` per interval.
    pub ys: usize,
    /// Points of the derivative grid per interval.
    pub derivative_grid: usize,
    /// Samples for the definition-side measurement.
    pub samples: usize,
    pub windows: usize,
    pub eps_max: f64,
    pub k_min: f64,
    pub length: Option<f64>,
    /// Restricts `y` to `{q'_{n-1} y}` in `[eta, 1 - eta - t/q'_n]` when set.
    pub eta: Option<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            intervals: 16,
            ys: 4,
            derivative_grid: 64,
            samples: 1200,
            windows: 12,
            eps_max: 0.1,
            k_min: 1.0,
            length: None,
            eta: None,
        }
    }
}

/// Stretch of `x -> S_m phi(x, y)` on the interval, with `m` the return
/// count at the interval midpoint.
pub fn stretch_at(spec: &CeilingSpec, a: f64, b: f64, y: f64, t: f64, opts: &ScanOptions) -> Result<StretchRow> {
    let mid = 0.5 * (a + b);
    let m = time_index(spec, mid, y, 0.0, t)?;
    let line = spec.kernel().line_x(y, m)?;
    let g = opts.derivative_grid.max(2);
    let dxs: Vec<f64> = (0..g).map(|i| a + (b - a) * i as f64 / (g - 1) as f64).collect();
    let d1 = line.eval_many(&dxs, 1);
    let d2 = line.eval_many(&dxs, 2);
    let inf1 = d1.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let sup2 = d2.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let crit = if d1.iter().all(|v| *v > 0.0) || d1.iter().all(|v| *v < 0.0) {
        stretch_criterion(inf1, sup2, b - a).ok()
    } else {
        None
    };
    let n = opts.samples.max(stretch::MIN_SAMPLES);
    let xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let vals = line.eval_many(&xs, 0);
    let report = match measure_stretch(&xs, &vals, opts.windows) {
        Ok(r) => judge(r, crit, opts.eps_max, opts.k_min),
        Err(Error::Degenerate(_)) => StretchReport {
            a,
            b,
            k_measured: 0.0,
            distortion: f64::INFINITY,
            criterion_epsilon: None,
            criterion_k: None,
            criterion_pass: false,
            definition_pass: false,
        },
        Err(e) => return Err(e),
    };
    Ok(StretchRow { interval: (a, b), y, m, report })
}

/// Stretch reports over a spread of partition intervals and fibers.
pub fn stretch_scan(spec: &CeilingSpec, n: usize, t: f64, opts: &ScanOptions) -> Result<Vec<StretchRow>> {
    if !(t >= 0.0) {
        return invalid("stretch scan needs t >= 0");
    }
    let rec = spec.pair.level(n)?;
    let q = rec.q.to_i64().ok_or_else(|| Error::InfeasibleScale("q_n too large".into()))?;
    let part = StepOnePartition::new(n, q, opts.length)?;
    let ys = fiber_sample(spec, n, t, opts)?;
    let total = part.len();
    let count = opts.intervals.min(total).max(1);
    let mut rows = Vec::new();
    for c in 0..count {
        let (a, b) = part.interval(c * total / count);
        for &y in &ys {
            rows.push(stretch_at(spec, a, b, y, t, opts)?);
        }
    }
    Ok(rows)
}

fn fiber_sample(spec: &CeilingSpec, n: usize, t: f64, opts: &ScanOptions) -> Result<Vec<f64>> {
    let k = opts.ys.max(1);
    let golden = 0.618_033_988_749_894_9;
    match opts.eta {
        None => Ok((0..k).map(|i| (0.5 + i as f64 * golden).fract()).collect()),
        Some(eta) => {
            let rec = spec.pair.level(n)?;
            let qpp = rec.q_prime_prev.to_f64().unwrap_or(f64::INFINITY);
            let theta = t / rec.q_prime.to_f64().unwrap_or(f64::INFINITY);
            let (lo, hi) = (eta, 1.0 - eta - theta);
            if !(hi > lo) {
                return invalid(format!("restricted fiber band [{lo}, {hi}] is empty"));
            }
            Ok((0..k)
                .map(|i| {
                    let u = lo + (hi - lo) * (0.5 + i as f64 * golden).fract();
                    let cell = (i as f64 * 0.754_877_666).fract() * qpp;
                    (cell.floor() + u) / qpp
                })
                .collect())
        }
    }
}

/// Limits on the staircase comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseLimits {
    /// Largest `i2 - i1`; `None` takes `max(1, q'_n / (q_n (q'_{n-1})^6))`.
    pub max_gap: Option<i64>,
    /// Admissible `m` range; `None` takes `[1, max(1, 2 q'_n / n^2)]`.
    pub m_range: Option<(i64, i64)>,
}

impl Default for StaircaseLimits {
    fn default() -> Self {
        StaircaseLimits { max_gap: None, m_range: None }
    }
}

fn check_level_point(spec: &TowerSpec, i: i64, j: i64, z: (f64, f64)) -> Result<()> {
    let m = BigInt::from(j) + BigInt::from(i) * spec.cells();
    let r = crate::towers::level_rect(spec, &m)?;
    if !r.contains_f64(z.0, z.1) {
        return invalid(format!("point {z:?} is not in level j={j}, i={i}"));
    }
    Ok(())
}

/// `|S_m phi(z2) - S_m phi(z1) - (i2 - i1) m eps_n|` for `z1` in
/// `B^{j + i1 q q'}` and `z2` in `B^{j + i2 q q'}`.
#[allow(clippy::too_many_arguments)]
pub fn staircase_deviation(
    spec: &CeilingSpec,
    n: usize,
    m: i64,
    i1: i64,
    i2: i64,
    j: i64,
    z1: (f64, f64),
    z2: (f64, f64),
    limits: &StaircaseLimits,
) -> Result<f64> {
    let level = spec.level(n)?;
    let tower = TowerSpec::new(&spec.pair, n)?;
    let g = &level.geom;
    let nf = n as f64;
    // i2 <= (1 - 4/n) r_n, compared in integers.
    if i1 < 0 || i1 > i2 || i2 as i128 * n as i128 > (n as i128 - 4) * g.r as i128 {
        return invalid(format!("need 0 <= i1 <= i2 <= (1 - 4/n) r_n = {}", (1.0 - 4.0 / nf) * g.r as f64));
    }
    let gap = limits.max_gap.unwrap_or_else(|| (g.qp as f64 / (g.q as f64 * (g.qpp as f64).powi(6))).floor().max(1.0) as i64);
    if i2 - i1 > gap {
        return invalid(format!("i2 - i1 = {} exceeds {gap}", i2 - i1));
    }
    if j < 0 || j >= g.cells() {
        return invalid(format!("j = {j} outside [0, {})", g.cells()));
    }
    if m < 1 {
        return invalid("m must be positive");
    }
    let (lo, hi) = limits.m_range.unwrap_or_else(|| default_m_range(g.qp, n));
    if m < lo || m > hi {
        return invalid(format!("m = {m} outside [{lo}, {hi}]"));
    }
    check_level_point(&tower, i1, j, z1)?;
    check_level_point(&tower, i2, j, z2)?;
    let k = spec.kernel();
    let a = k.sum(z1.0, z1.1, m, 0, 0)?;
    let b = k.sum(z2.0, z2.1, m, 0, 0)?;
    Ok((b - a - (i2 - i1) as f64 * m as f64 * g.eps).abs())
}

pub fn default_m_range(qp: i64, n: usize) -> (i64, i64) {
    (1, (2 * qp / (n * n) as i64).max(1))
}

/// Point of `B^{j + i q q'}` at relative position `(u, v)` of the level.
pub fn level_point(spec: &TowerSpec, i: i64, j: i64, u: f64, v: f64) -> Result<(f64, f64)> {
    let m = BigInt::from(j) + BigInt::from(i) * spec.cells();
    let r = crate::towers::level_rect(spec, &m)?;
    let [x0, w, y0, h] = r.to_f64();
    Ok(((x0 + u * w).rem_euclid(1.0), (y0 + v * h).rem_euclid(1.0)))
}

/// The Step-3 split of the fibers at time `t`.
#[derive(Clone, Debug)]
pub struct RegionSplit {
    pub theta: f64,
    pub eta: f64,
    /// `{1 - theta + eta <= {q'_{n-1} y} <= 1 - eta}`.
    pub unstable: Vec<Rect>,
    /// `{{q'_{n-1} y} <= 1 - theta - eta}`.
    pub stable: Vec<Rect>,
    pub mu_unstable: BigRational,
    pub mu_stable: BigRational,
    pub remainder: BigRational,
}

pub fn region_split(pair: &YPair, n: usize, t: f64, eta: f64) -> Result<RegionSplit> {
    if !(eta > 0.0 && eta < 0.5) {
        return invalid("eta must lie in (0, 1/2)");
    }
    if !(t >= 0.0 && t.is_finite()) {
        return invalid("t must be finite and nonnegative");
    }
    let rec = pair.level(n)?;
    let theta = t / rec.q_prime.to_f64().unwrap_or(f64::INFINITY);
    let qf = |x: f64| BigRational::from_float(x).expect("finite");
    let one = BigRational::from_integer(1.into());
    let zero = BigRational::zero();
    let (th, et) = (qf(theta), qf(eta));
    let clamp = |x: BigRational| if x < zero { zero.clone() } else if x > one { one.clone() } else { x };
    let u_lo = clamp(&one - &th + &et);
    let u_hi = clamp(&one - &et);
    let s_hi = clamp(&one - &th - &et);
    let qpp = rec.q_prime_prev.clone();
    let bands = |lo: &BigRational, hi: &BigRational| -> Result<Vec<Rect>> {
        if hi <= lo {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let count = qpp.to_u64().ok_or_else(|| Error::InfeasibleScale("q'_(n-1) too large".into()))?;
        for c in 0..count {
            let base = BigRational::new(BigInt::from(c), qpp.clone());
            let y0 = &base + lo / BigRational::from_integer(qpp.clone());
            let h = (hi - lo) / BigRational::from_integer(qpp.clone());
            out.push(Rect::new(zero.clone(), one.clone(), y0, h)?);
        }
        Ok(out)
    };
    let unstable = bands(&u_lo, &u_hi)?;
    let stable = bands(&zero, &s_hi)?;
    let width = |lo: &BigRational, hi: &BigRational| if hi > lo { hi - lo } else { zero.clone() };
    let mu_unstable = width(&u_lo, &u_hi);
    let mu_stable = s_hi.clone();
    let remainder = &one - &mu_unstable - &mu_stable;
    Ok(RegionSplit { theta, eta, unstable, stable, mu_unstable, mu_stable, remainder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ceiling::{assemble_phi_with, CeilingOptions};
    use crate::pairgen::{build_pair_with, BuildOptions, GrowthLaw, Seed};
    use num_traits::One;

    fn pair() -> YPair {
        let seed = Seed { alpha: vec![0, 1, 1, 1, 1, 2], alpha_prime: vec![0] };
        let opts = BuildOptions { close_alpha: true, ..Default::default() };
        build_pair_with(&GrowthLaw::Power { k: 2.0, c: 20.0 }, 1, &seed, &opts).unwrap()
    }

    #[test]
    fn partition_covers_j() {
        let p = StepOnePartition::new(6, 7, Some(0.004)).unwrap();
        let iv = p.intervals();
        let mut total = 0.0;
        for (a, b) in &iv {
            assert!(b - a >= 0.002 - 1e-15 && b - a <= 0.004 + 1e-15);
            assert!(in_j(7, 6, *a + 1e-12) && in_j(7, 6, *b - 1e-12));
            total += b - a;
        }
        assert!((total - 2.0 * (0.5 - 2.0 / 6.0)).abs() < 1e-12);
        assert!(iv.windows(2).all(|w| w[0].1 <= w[1].0 + 1e-15));
        assert!(StepOnePartition::new(6, 7, Some(1.0)).is_err());
    }

    #[test]
    fn region_split_examples() {
        let p = pair();
        let n = p.levels[0].n;
        let s = region_split(&p, n, 0.0, 0.1).unwrap();
        assert!(s.unstable.is_empty());
        assert_eq!(s.mu_stable, BigRational::one() - BigRational::from_float(0.1).unwrap());
        let qp = p.levels[0].q_prime.to_f64().unwrap();
        let s = region_split(&p, n, qp, 0.1).unwrap();
        assert!(s.stable.is_empty());
        for t in [0.0, 0.3 * qp, 0.5 * qp, 0.95 * qp, 3.0 * qp] {
            let s = region_split(&p, n, t, 0.05).unwrap();
            assert_eq!(&s.mu_unstable + &s.mu_stable + &s.remainder, BigRational::one());
            let areas: BigRational = s.unstable.iter().chain(&s.stable).map(|r| r.area()).fold(BigRational::zero(), |a, b| a + b);
            assert_eq!(areas, &s.mu_unstable + &s.mu_stable);
        }
        assert!(region_split(&p, n, 1.0, 0.6).is_err());
    }

    #[test]
    fn windows_follow_schedule() {
        let p = pair();
        let n = p.levels[0].n;
        let w = time_windows(&p, n).unwrap();
        let qp = p.levels[0].q_prime.to_f64().unwrap();
        assert_eq!(w.step3, ((qp / (n * n) as f64), 2.0 * qp));
        assert_eq!(w.step2.1, w.step3.0);
    }

    #[test]
    fn constant_ceiling_never_stretches() {
        let p = pair();
        let spec = assemble_phi_with(&p, &CeilingOptions { grid_exponent: 7, ..Default::default() }).unwrap();
        let n = spec.levels[0].n();
        let flat = spec.without_level(n).unwrap();
        let rows = stretch_scan(&flat, n, 50.0, &ScanOptions { intervals: 3, ys: 2, ..Default::default() }).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| !r.report.criterion_pass && !r.report.definition_pass));
    }

    #[test]
    fn staircase_trivial_cases() {
        let p = pair();
        let spec = assemble_phi_with(&p, &CeilingOptions { grid_exponent: 8, ..Default::default() }).unwrap();
        let n = spec.levels[0].n();
        let tower = TowerSpec::new(&p, n).unwrap();
        let z = level_point(&tower, 0, 3, 0.4, 0.6).unwrap();
        let lim = StaircaseLimits { max_gap: None, m_range: Some((1, 5)) };
        assert_eq!(staircase_deviation(&spec, n, 5, 0, 0, 3, z, z, &lim).unwrap(), 0.0);
        let z2 = level_point(&tower, 0, 3, 0.7, 0.2).unwrap();
        let d = staircase_deviation(&spec, n, 5, 0, 0, 3, z, z2, &lim).unwrap();
        let k = spec.kernel();
        let direct = (k.sum(z2.0, z2.1, 5, 0, 0).unwrap() - k.sum(z.0, z.1, 5, 0, 0).unwrap()).abs();
        assert_eq!(d, direct);
        assert!(staircase_deviation(&spec, n, 5, 1, 0, 3, z, z2, &lim).is_err());
        assert!(staircase_deviation(&spec, n, 5, 0, 0, 3, z, (0.999, 0.999), &lim).is_err());
        let hi = default_m_range(spec.level(n).unwrap().geom.qp, n).1;
        assert!(staircase_deviation(&spec, n, hi, 0, 0, 3, z, z2, &StaircaseLimits::default()).is_ok());
        assert!(staircase_deviation(&spec, n, hi + 1, 0, 0, 3, z, z2, &StaircaseLimits::default()).is_err());
    }
}

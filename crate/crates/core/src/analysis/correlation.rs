//! Monte-Carlo correlations `mu(Phi_{-t} A cap B) - mu(A) mu(B)` of the special flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ceiling::CeilingSpec;
use crate::error::{invalid, Result};
use crate::flow::{flow_map, FlowPoint};

/// Minimum sample count for a correlation estimate.
pub const MIN_SAMPLES: usize = 1000;

/// A box `[x0, x1) x [y0, y1) x [s0, s1)` in the flow space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRegion {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub s0: f64,
    pub s1: f64,
}

impl FlowRegion {
    pub fn new(x: (f64, f64), y: (f64, f64), s: (f64, f64)) -> Result<Self> {
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && a < b;
        if !(ok(x.0, x.1) && ok(y.0, y.1) && ok(s.0, s.1)) || x.0 < 0.0 || x.1 > 1.0 || y.0 < 0.0 || y.1 > 1.0 || s.0 < 0.0 {
            return invalid("flow box needs 0 <= x0 < x1 <= 1, 0 <= y0 < y1 <= 1, 0 <= s0 < s1");
        }
        Ok(FlowRegion { x0: x.0, x1: x.1, y0: y.0, y1: y.1, s0: s.0, s1: s.1 })
    }

    pub fn contains(&self, p: &FlowPoint) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1 && p.s >= self.s0 && p.s < self.s1
    }
}

/// `mu(A)` for the normalized measure (`phi` has mean 1). Exact when the box
/// lies below `min phi`; otherwise a 512^2 midpoint rule, flagged by `false`.
pub fn box_measure(spec: &CeilingSpec, a: &FlowRegion) -> (f64, bool) {
    let area = (a.x1 - a.x0) * (a.y1 - a.y0);
    if a.s1 <= spec.min_value {
        return (area * (a.s1 - a.s0), true);
    }
    let g = 512;
    let mut acc = 0.0;
    for i in 0..g {
        for j in 0..g {
            let x = a.x0 + (a.x1 - a.x0) * (i as f64 + 0.5) / g as f64;
            let y = a.y0 + (a.y1 - a.y0) * (j as f64 + 0.5) / g as f64;
            acc += (spec.eval(x, y).min(a.s1) - a.s0).max(0.0);
        }
    }
    (area * acc / (g * g) as f64, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Draws one point of the normalized measure from stream `index`.
pub fn sample_point(spec: &CeilingSpec, seed: u64, index: u64) -> FlowPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
        let s = rng.random::<f64>() * spec.max_value;
        if s < spec.eval(x, y) {
            return FlowPoint { x, y, s };
        }
    }
}

/// Estimates `mu(Phi_{-t} A cap B) - mu(A) mu(B)` from `samples` points.
pub fn correlation(spec: &CeilingSpec, a: &FlowRegion, b: &FlowRegion, t: f64, samples: usize, seed: u64) -> Result<CorrelationPoint> {
    Ok(correlation_series(spec, a, b, &[t], samples, seed)?[0])
}

/// [`correlation`] at several times over one shared sample.
pub fn correlation_series(
    spec: &CeilingSpec,
    a: &FlowRegion,
    b: &FlowRegion,
    times: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<CorrelationPoint>> {
    if samples < MIN_SAMPLES {
        return invalid(format!("correlation needs at least {MIN_SAMPLES} samples"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return invalid("times must be finite");
    }
    let (mu_a, _) = box_measure(spec, a);
    let (mu_b, _) = box_measure(spec, b);
    // Only points starting in B need to be flowed.
    let hits: Vec<Vec<u32>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let p = sample_point(spec, seed, i);
            if !b.contains(&p) {
                return Ok(vec![0; times.len()]);
            }
            times
                .iter()
                .map(|&t| Ok(a.contains(&flow_map(spec, p, t)?) as u32))
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let nf = samples as f64;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let c: u64 = hits.iter().map(|h| h[k] as u64).sum();
            let p = c as f64 / nf;
            CorrelationPoint { t, estimate: p - mu_a * mu_b, stderr: (p * (1.0 - p) / nf).sqrt(), mu_a, mu_b, samples, seed }
        })
        .collect())
}

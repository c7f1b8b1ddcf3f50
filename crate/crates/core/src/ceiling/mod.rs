//! The ceiling `phi = phi0 + sum_n (X_n + Y_n)`.

pub mod bump;
pub mod level;
pub mod trig;
pub mod truncate;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

pub use bump::{bump, bump_derivatives, derivative_norms};
pub use level::LevelGeometry;
pub use trig::{Term, TrigPolynomial};
pub use truncate::{truncate_x, truncate_y};

use crate::error::{invalid, Error, Result};
use crate::pairgen::{verify_pair, PairDocument, YPair};

/// Target for `sum_n r_n eps_n` when the staircase scale is automatic.
pub const AUTO_SCALE_BUDGET: f64 = 0.4;

/// Largest grid used by the positivity certificate.
pub const MAX_CERTIFY_GRID: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CeilingOptions {
    /// Global factor on `(q'_{n-1})^7/q'_n`; `None` picks it so that `sum r_n eps_n = AUTO_SCALE_BUDGET`.
    pub staircase_scale: Option<f64>,
    pub grid_exponent: u32,
    /// Truncation radius per used level; missing entries default to `min(q'_n^2, 2^(grid_exponent-2))`.
    pub radii: Vec<usize>,
    /// Extra factor on `eps_n` per used level; missing entries are 1.
    pub level_weights: Vec<f64>,
    /// Coefficients of `X_n` with modulus below this are dropped.
    pub prune_tol: f64,
}

impl Default for CeilingOptions {
    fn default() -> Self {
        CeilingOptions { staircase_scale: None, grid_exponent: 10, radii: Vec::new(), level_weights: Vec::new(), prune_tol: 0.0 }
    }
}

/// One level of the ceiling.
#[derive(Clone, Debug, PartialEq)]
pub struct CeilingLevel {
    pub geom: LevelGeometry,
    pub x: TrigPolynomial,
    pub y: TrigPolynomial,
    pub radius: usize,
    pub weight: f64,
}

impl CeilingLevel {
    pub fn n(&self) -> usize {
        self.geom.n
    }

    pub fn eps(&self) -> f64 {
        self.geom.eps
    }

    /// `max |X_n - X~_n|` over the `grid x grid` lattice `(u/grid, v/grid)`.
    /// Pick `grid` coprime to the sampling grid so the points are fresh.
    pub fn truncation_sup_error(&self, grid: usize) -> Result<f64> {
        let vals = self.x.eval_grid(grid)?;
        let g = grid as f64;
        let worst = vals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (x, y) = ((i % grid) as f64 / g, (i / grid) as f64 / g);
                (v - self.geom.xtilde(x, y)).abs()
            })
            .fold(0.0, f64::max);
        Ok(worst)
    }
}

/// Grid-plus-curvature bounds on `phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub grid: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct CeilingSpec {
    pub pair: YPair,
    pub phi0: f64,
    /// First level used, if any.
    pub n0: Option<usize>,
    pub staircase_scale: f64,
    pub options: CeilingOptions,
    pub levels: Vec<CeilingLevel>,
    pub certificate: Certificate,
    /// Certified lower bound on `phi`.
    pub min_value: f64,
    /// Certified upper bound on `phi`.
    pub max_value: f64,
    combined: TrigPolynomial,
    kernel: std::sync::OnceLock<std::sync::Arc<crate::birkhoff::BirkhoffKernel>>,
}

/// `(q'_{n-1})^7 / q'_n` in floating point.
pub fn raw_eps(qpp: &num_bigint::BigInt, qp: &num_bigint::BigInt) -> f64 {
    let r = num_rational::BigRational::new(qpp.pow(7), qp.clone());
    crate::arith::ratio_to_f64(&r)
}

/// Builds `phi` with an explicit staircase scale.
pub fn assemble_phi(pair: &YPair, staircase_scale: f64, grid_exponent: u32) -> Result<CeilingSpec> {
    let opts = CeilingOptions { staircase_scale: Some(staircase_scale), grid_exponent, ..Default::default() };
    assemble_phi_with(pair, &opts)
}

/// Levels used by the ceiling: from the first level after which the schedule
/// verifies, and with `n >= 3` so that the towers are nonempty.
pub fn used_levels(pair: &YPair) -> Vec<usize> {
    let report = verify_pair(pair);
    match report.first_passing_level {
        Some(n0) => pair.levels.iter().map(|l| l.n).filter(|&n| n >= n0 && n >= 3).collect(),
        None => Vec::new(),
    }
}

fn quantize(c: f64) -> f64 {
    const Q: f64 = 4_503_599_627_370_496.0; // 2^52
    (c * Q).round() / Q
}

pub fn assemble_phi_with(pair: &YPair, opts: &CeilingOptions) -> Result<CeilingSpec> {
    if let Some(s) = opts.staircase_scale {
        if !(s.is_finite() && s > 0.0) {
            return invalid(format!("staircase scale must be positive, got {s}"));
        }
    }
    if opts.level_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return invalid("level weights must be positive");
    }
    let used = used_levels(pair);
    let weight = |i: usize| opts.level_weights.get(i).copied().unwrap_or(1.0);
    let mut raw = Vec::new();
    for &n in &used {
        let rec = pair.level(n)?;
        let r = crate::pairgen::r_of(&rec.q, &rec.q_prime_prev, &rec.q_prime).to_f64().unwrap_or(0.0);
        raw.push((raw_eps(&rec.q_prime_prev, &rec.q_prime), r.max(0.0)));
    }
    let scale = match opts.staircase_scale {
        Some(s) => s,
        None => {
            let total: f64 = raw.iter().enumerate().map(|(i, (e, r))| weight(i) * e * r).sum();
            if total > 0.0 {
                AUTO_SCALE_BUDGET / total
            } else {
                1.0
            }
        }
    };
    let mut levels = Vec::new();
    for (i, &n) in used.iter().enumerate() {
        let rec = pair.level(n)?;
        let eps = scale * weight(i) * raw[i].0;
        let geom = LevelGeometry::new(rec, eps)?;
        let default_radius = {
            let qp2 = (geom.qp as f64).powi(2);
            let cap = (1usize << opts.grid_exponent) / 4;
            if qp2 < cap as f64 {
                qp2 as usize
            } else {
                cap
            }
        };
        let radius = opts.radii.get(i).copied().unwrap_or(default_radius);
        let mut x = truncate_x(&geom, radius, opts.grid_exponent)?;
        if opts.prune_tol > 0.0 {
            x = x.prune(opts.prune_tol);
        }
        x.set_constant(quantize(x.constant_term()));
        let y = truncate_y(&geom)?;
        levels.push(CeilingLevel { geom, x, y, radius, weight: weight(i) });
    }
    finish(pair.clone(), scale, opts.clone(), levels)
}

fn finish(pair: YPair, scale: f64, options: CeilingOptions, levels: Vec<CeilingLevel>) -> Result<CeilingSpec> {
    let consts: f64 = levels.iter().map(|l| l.x.constant_term() + l.y.constant_term()).sum();
    let phi0 = 1.0 - consts;
    let mut combined = TrigPolynomial::constant(0.0);
    for l in &levels {
        combined = combined.add(&l.x).add(&l.y);
    }
    combined.set_constant(phi0 + consts);
    let certificate = certify(&combined)?;
    let min_value = certificate.grid_min - certificate.margin;
    let max_value = certificate.grid_max + certificate.margin;
    if !(min_value > 0.0) {
        return Err(Error::NonpositiveCeiling(format!(
            "grid minimum {:.6e} minus margin {:.3e} on a {}^2 grid is not positive; lower the staircase scale",
            certificate.grid_min, certificate.margin, certificate.grid
        )));
    }
    let n0 = levels.first().map(|l| l.n());
    Ok(CeilingSpec {
        pair,
        phi0,
        n0,
        staircase_scale: scale,
        options,
        levels,
        certificate,
        min_value,
        max_value,
        combined,
        kernel: Default::default(),
    })
}

/// Grid extrema plus `H h^2/4`, with `H` a bound on second directional
/// derivatives: at an interior extremum the gradient vanishes, and every point
/// is within `h/sqrt 2` of the grid.
fn certify(p: &TrigPolynomial) -> Result<Certificate> {
    if p.is_empty() {
        let c = p.constant_term();
        return Ok(Certificate { grid: 1, grid_min: c, grid_max: c, margin: 0.0 });
    }
    let (lmax, kmax) = p.max_freq();
    let mut m = (2 * lmax.max(kmax) as usize + 1).next_power_of_two().max(64);
    if m > MAX_CERTIFY_GRID {
        return Err(Error::InfeasibleScale(format!(
            "frequencies up to {} need a certificate grid above {MAX_CERTIFY_GRID}^2; lower the truncation radii",
            lmax.max(kmax)
        )));
    }
    let h2 = p.derivative_bound(2);
    let h1 = p.derivative_bound(1);
    loop {
        let g = p.eval_grid(m)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &g {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        let h = 1.0 / m as f64;
        let margin = (h2 * h * h / 4.0).min(h1 * h / std::f64::consts::SQRT_2);
        if margin <= 0.05 * lo.abs() || 2 * m > MAX_CERTIFY_GRID {
            return Ok(Certificate { grid: m, grid_min: lo, grid_max: hi, margin });
        }
        m *= 2;
    }
}

impl CeilingSpec {
    /// The combined polynomial `phi`.
    pub fn phi(&self) -> &TrigPolynomial {
        &self.combined
    }

    /// Cached frequency data for Birkhoff sums.
    pub fn kernel(&self) -> &crate::birkhoff::BirkhoffKernel {
        self.kernel.get_or_init(|| std::sync::Arc::new(crate::birkhoff::BirkhoffKernel::from_spec(self)))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.combined.eval(x, y)
    }

    pub fn eval_deriv(&self, x: f64, y: f64, ox: u32, oy: u32) -> f64 {
        self.combined.eval_deriv(x, y, ox, oy)
    }

    pub fn level(&self, n: usize) -> Result<&CeilingLevel> {
        self.levels
            .iter()
            .find(|l| l.n() == n)
            .ok_or_else(|| Error::InvalidArgument(format!("level {n} is not used by this ceiling")))
    }

    pub fn eps(&self) -> Vec<(usize, f64)> {
        self.levels.iter().map(|l| (l.n(), l.eps())).collect()
    }

    /// `phi0 + sum of constant coefficients`; equals 1.
    pub fn mean(&self) -> f64 {
        self.phi0 + self.levels.iter().map(|l| l.x.constant_term() + l.y.constant_term()).sum::<f64>()
    }

    pub fn eval_kappa(&self, n: usize, y: f64) -> Result<f64> {
        Ok(self.level(n)?.geom.kappa(y))
    }

    pub fn eval_window(&self, n: usize, x: f64, y: f64) -> Result<f64> {
        Ok(self.level(n)?.geom.window(x, y))
    }

    pub fn eval_xtilde(&self, n: usize, x: f64, y: f64) -> Result<f64> {
        Ok(self.level(n)?.geom.xtilde(x, y))
    }

    pub fn eval_ytilde(&self, n: usize, x: f64, y: f64) -> Result<f64> {
        Ok(self.level(n)?.geom.ytilde(x, y))
    }

    /// The same ceiling without the terms of level `n`, with `phi0` readjusted
    /// to keep mean 1 and a fresh positivity certificate.
    pub fn without_level(&self, n: usize) -> Result<CeilingSpec> {
        self.level(n)?;
        let levels = self.levels.iter().filter(|l| l.n() != n).cloned().collect();
        finish(self.pair.clone(), self.staircase_scale, self.options.clone(), levels)
    }

    /// Total number of stored frequencies of `phi`.
    pub fn frequency_count(&self) -> usize {
        self.combined.len()
    }

    pub fn to_document(&self) -> CeilingDocument {
        CeilingDocument {
            pair: PairDocument::from_pair(&self.pair),
            phi0: self.phi0,
            staircase_scale: self.staircase_scale,
            options: self.options.clone(),
            min_value: self.min_value,
            max_value: self.max_value,
            levels: self
                .levels
                .iter()
                .map(|l| LevelCoefficients {
                    n: l.n(),
                    eps: l.eps(),
                    weight: l.weight,
                    radius: l.radius,
                    x_constant: l.x.constant_term(),
                    x_terms: encode_terms(&l.x),
                    y_terms: encode_terms(&l.y),
                })
                .collect(),
        }
    }

    /// Rebuilds from a document without recomputing any coefficient.
    pub fn from_document(doc: &CeilingDocument) -> Result<CeilingSpec> {
        let pair = doc.pair.to_pair()?;
        let mut levels = Vec::new();
        for l in &doc.levels {
            let rec = pair.level(l.n)?;
            let geom = LevelGeometry::new(rec, l.eps)?;
            let x = TrigPolynomial::from_half(l.x_constant, decode_terms(&l.x_terms)?)?;
            let y = TrigPolynomial::from_half(0.0, decode_terms(&l.y_terms)?)?;
            levels.push(CeilingLevel { geom, x, y, radius: l.radius, weight: l.weight });
        }
        let spec = finish(pair, doc.staircase_scale, doc.options.clone(), levels)?;
        if spec.phi0 != doc.phi0 {
            return Err(Error::Config(format!("document phi0 {} does not match its coefficients", doc.phi0)));
        }
        Ok(spec)
    }
}

fn encode_terms(p: &TrigPolynomial) -> Vec<String> {
    // `{}` on f64 prints the shortest string that parses back to the same value.
    p.terms().iter().map(|t| format!("{} {} {} {}", t.l, t.k, t.c.re, t.c.im)).collect()
}

fn decode_terms(lines: &[String]) -> Result<Vec<Term>> {
    lines
        .iter()
        .map(|s| {
            let f: Vec<&str> = s.split_whitespace().collect();
            let bad = || Error::Config(format!("bad coefficient line '{s}'"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(Term {
                l: f[0].parse().map_err(|_| bad())?,
                k: f[1].parse().map_err(|_| bad())?,
                c: Complex64::new(f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?),
            })
        })
        .collect()
}

/// Serialized form of a [`CeilingSpec`]; coefficients are decimal strings
/// that parse back to the identical binary values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CeilingDocument {
    pub pair: PairDocument,
    pub phi0: f64,
    pub staircase_scale: f64,
    pub options: CeilingOptions,
    pub min_value: f64,
    pub max_value: f64,
    pub levels: Vec<LevelCoefficients>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCoefficients {
    pub n: usize,
    pub eps: f64,
    pub weight: f64,
    pub radius: usize,
    pub x_constant: f64,
    /// `"l k re im"` per stored half-plane frequency.
    pub x_terms: Vec<String>,
    pub y_terms: Vec<String>,
}

impl CeilingDocument {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairgen::{build_pair, build_pair_with, BuildOptions, GrowthLaw, Seed};

    fn small_pair() -> YPair {
        let seed = Seed { alpha: vec![0, 1, 1, 2], alpha_prime: vec![0] };
        build_pair_with(&GrowthLaw::Power { k: 2.0, c: 20.0 }, 1, &seed, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn no_usable_level_gives_constant_one() {
        let pair = build_pair(&GrowthLaw::default(), 1, &Seed::default()).unwrap();
        assert!(used_levels(&pair).is_empty());
        let spec = assemble_phi(&pair, 1.0, 6).unwrap();
        assert_eq!(spec.min_value, 1.0);
        assert_eq!(spec.eval(0.3, 0.7), 1.0);
        assert_eq!(spec.mean(), 1.0);
    }

    #[test]
    fn mean_is_exactly_one_and_positive() {
        let pair = small_pair();
        let spec = assemble_phi_with(&pair, &CeilingOptions { grid_exponent: 8, ..Default::default() }).unwrap();
        assert_eq!(spec.levels.len(), 1);
        assert_eq!(spec.mean(), 1.0);
        assert_eq!(spec.phi().constant_term(), 1.0);
        assert!(spec.min_value > 0.0);
        let l = &spec.levels[0];
        assert!((l.geom.r as f64 * l.eps() - AUTO_SCALE_BUDGET).abs() < 1e-12);
        let rec = pair.level(l.n()).unwrap();
        let e7 = raw_eps(&rec.q_prime_prev, &rec.q_prime);
        assert!((l.eps() - spec.staircase_scale * e7).abs() <= 1e-15 * l.eps());
    }

    #[test]
    fn huge_scale_is_rejected() {
        let pair = small_pair();
        let e = assemble_phi(&pair, 1e6, 8).unwrap_err();
        assert!(matches!(e, Error::NonpositiveCeiling(_)), "{e:?}");
    }

    #[test]
    fn document_round_trip() {
        let pair = small_pair();
        let spec = assemble_phi_with(&pair, &CeilingOptions { grid_exponent: 7, ..Default::default() }).unwrap();
        let text = spec.to_document().to_toml().unwrap();
        let back = CeilingSpec::from_document(&CeilingDocument::from_toml(&text).unwrap()).unwrap();
        assert_eq!(back.phi(), spec.phi());
        assert_eq!(back.phi0, spec.phi0);
        assert_eq!(back.to_document(), spec.to_document());
    }

    #[test]
    fn certificate_brackets_dense_samples() {
        let pair = small_pair();
        let spec = assemble_phi_with(&pair, &CeilingOptions { grid_exponent: 8, ..Default::default() }).unwrap();
        for i in 0..5000 {
            let x = (i as f64 * 0.754_877_666).fract();
            let y = (i as f64 * 0.569_840_291).fract();
            let v = spec.eval(x, y);
            assert!(v >= spec.min_value && v <= spec.max_value);
        }
    }
}

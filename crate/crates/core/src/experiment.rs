//! Experiment configuration and the pipelines behind the command-line front end.
//!
//! A run reads one TOML document, writes the fully resolved configuration
//! next to its outputs, and emits CSV tables plus (for `full-report`) a
//! summary document. Every output is a pure function of the configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    correlation_series, default_m_range, level_point, staircase_deviation, stretch_scan, time_windows, FlowRegion,
    ScanOptions, StaircaseLimits, StretchRow,
};
use crate::arith::{PrecisionPolicy, ENGINE_BITS};
use crate::birkhoff::{birkhoff_fast, birkhoff_naive};
use crate::ceiling::{assemble_phi_with, CeilingOptions, CeilingSpec};
use crate::error::{Error, Result};
use crate::pairgen::{build_pair_with, verify_pair, BuildOptions, GrowthLaw, Seed, Verdict, YPair, DEFAULT_BUDGET_BITS};
use crate::towers::{geometry_report, rank_one_defect, DefectReport, GeometryReport, TowerSpec};

/// Relative tolerance attached to Birkhoff sums computed by the fast kernel.
pub const SUM_REL_TOL: f64 = 1e-9;

/// Either the word `"auto"` or an explicit value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AutoRepr<T>", into = "AutoRepr<T>")]
pub enum Auto<T: Clone> {
    Auto,
    Value(T),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AutoRepr<T> {
    Value(T),
    Word(String),
}

impl<T: Clone> TryFrom<AutoRepr<T>> for Auto<T> {
    type Error = String;

    fn try_from(r: AutoRepr<T>) -> std::result::Result<Self, String> {
        match r {
            AutoRepr::Value(v) => Ok(Auto::Value(v)),
            AutoRepr::Word(w) if w == "auto" => Ok(Auto::Auto),
            AutoRepr::Word(w) => Err(format!("expected \"auto\" or a value, got \"{w}\"")),
        }
    }
}

impl<T: Clone> From<Auto<T>> for AutoRepr<T> {
    fn from(a: Auto<T>) -> Self {
        match a {
            Auto::Auto => AutoRepr::Word("auto".into()),
            Auto::Value(v) => AutoRepr::Value(v),
        }
    }
}

impl<T: Clone> Auto<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(v.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    /// `paper-exponential`, `power` or `explicit-floor-list`.
    pub law: String,
    pub power_k: f64,
    pub power_c: f64,
    /// Used by `explicit-floor-list`, one per schedule step.
    pub floors: Vec<u64>,
    pub levels: usize,
    pub seed_alpha: Vec<u64>,
    pub seed_alpha_prime: Vec<u64>,
    pub tower_margin: bool,
    pub close_alpha: bool,
    pub budget_bits: u32,
}

impl Default for PairConfig {
    fn default() -> Self {
        let seed = Seed::default();
        let opts = BuildOptions::default();
        PairConfig {
            law: "power".into(),
            power_k: 2.0,
            power_c: 50.0,
            floors: Vec::new(),
            levels: 2,
            seed_alpha: seed.alpha,
            seed_alpha_prime: seed.alpha_prime,
            tower_margin: opts.tower_margin,
            close_alpha: opts.close_alpha,
            budget_bits: DEFAULT_BUDGET_BITS,
        }
    }
}

impl PairConfig {
    pub fn growth_law(&self) -> Result<GrowthLaw> {
        let law = match self.law.as_str() {
            "paper-exponential" => GrowthLaw::Exponential,
            "power" => GrowthLaw::Power { k: self.power_k, c: self.power_c },
            "explicit-floor-list" => GrowthLaw::ExplicitFloors(self.floors.iter().map(|&f| BigInt::from(f)).collect()),
            other => return Err(Error::Config(format!("unknown growth law \"{other}\""))),
        };
        law.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(law)
    }

    pub fn build(&self) -> Result<YPair> {
        let seed = Seed { alpha: self.seed_alpha.clone(), alpha_prime: self.seed_alpha_prime.clone() };
        let opts = BuildOptions { tower_margin: self.tower_margin, close_alpha: self.close_alpha, budget_bits: self.budget_bits };
        build_pair_with(&self.growth_law()?, self.levels, &seed, &opts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeilingConfig {
    pub staircase_scale: Auto<f64>,
    pub grid_exponent: u32,
    /// Per used level; missing entries take the library default.
    pub radii: Vec<usize>,
    pub level_weights: Vec<f64>,
    pub prune_tol: f64,
}

impl Default for CeilingConfig {
    fn default() -> Self {
        let o = CeilingOptions::default();
        CeilingConfig {
            staircase_scale: Auto::Auto,
            grid_exponent: o.grid_exponent,
            radii: o.radii,
            level_weights: o.level_weights,
            prune_tol: o.prune_tol,
        }
    }
}

impl CeilingConfig {
    pub fn options(&self) -> CeilingOptions {
        CeilingOptions {
            staircase_scale: self.staircase_scale.value(),
            grid_exponent: self.grid_exponent,
            radii: self.radii.clone(),
            level_weights: self.level_weights.clone(),
            prune_tol: self.prune_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecisionConfig {
    pub bits: u32,
    /// Largest Birkhoff iterate the run must certify.
    pub max_iterate: u64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig { bits: ENGINE_BITS, max_iterate: 1 << 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StretchConfig {
    /// Times tried at every level; `auto` takes the ends and geometric middle of each window.
    pub times: Auto<Vec<f64>>,
    pub intervals: usize,
    pub ys: usize,
    pub derivative_grid: usize,
    pub samples: usize,
    pub windows: usize,
    pub eps_max: f64,
    pub k_min: f64,
    /// Partition interval length; `auto` takes a whole component of `J_n`.
    pub length: Auto<f64>,
    /// Fiber band margin; `auto` leaves fibers unrestricted.
    pub eta: Auto<f64>,
}

impl Default for StretchConfig {
    fn default() -> Self {
        let o = ScanOptions::default();
        StretchConfig {
            times: Auto::Auto,
            intervals: o.intervals,
            ys: o.ys,
            derivative_grid: o.derivative_grid,
            samples: o.samples,
            windows: o.windows,
            eps_max: o.eps_max,
            k_min: o.k_min,
            length: Auto::Auto,
            eta: Auto::Auto,
        }
    }
}

impl StretchConfig {
    pub fn options(&self) -> ScanOptions {
        ScanOptions {
            intervals: self.intervals,
            ys: self.ys,
            derivative_grid: self.derivative_grid,
            samples: self.samples,
            windows: self.windows,
            eps_max: self.eps_max,
            k_min: self.k_min,
            length: self.length.value(),
            eta: self.eta.value(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseConfig {
    pub configs: usize,
    pub max_gap: Auto<i64>,
    /// Upper end of the `m` range; `auto` is `2 q'_n / n^2`.
    pub m_max: Auto<i64>,
    /// Relative positions are drawn from `[margin, 1 - margin]`.
    pub margin: f64,
    pub ratio_max: f64,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        StaircaseConfig { configs: 40, max_gap: Auto::Auto, m_max: Auto::Auto, margin: 0.1, ratio_max: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub samples: usize,
    /// `A = B` is the torus times `[0, height * min phi)`.
    pub height: f64,
    /// `auto` takes `0` and the ends and geometric middle of each window.
    pub times: Auto<Vec<f64>>,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig { samples: 10_000, height: 0.5, times: Auto::Auto }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub defect_grid: usize,
    /// Tower geometry is checked only when `r_n q_n q'_{n-1}` is at most this.
    pub geometry_cell_limit: u64,
    pub geometry_samples: usize,
    pub birkhoff_cases: usize,
    pub birkhoff_max_m: i64,
    pub stretch: StretchConfig,
    pub staircase: StaircaseConfig,
    pub correlation: CorrelationConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 1,
            defect_grid: 16,
            geometry_cell_limit: 100_000,
            geometry_samples: 2000,
            birkhoff_cases: 100,
            birkhoff_max_m: 10_000,
            stretch: StretchConfig::default(),
            staircase: StaircaseConfig::default(),
            correlation: CorrelationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pair: PairConfig,
    pub ceiling: CeilingConfig,
    pub precision: PrecisionConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    /// Range checks that do not need the pair.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.pair.growth_law()?;
        if self.pair.levels == 0 {
            return bad("pair.levels must be positive".into());
        }
        let c = &self.ceiling;
        if c.grid_exponent < 4 || c.grid_exponent > 16 {
            return bad(format!("ceiling.grid_exponent must lie in [4, 16], got {}", c.grid_exponent));
        }
        if let Auto::Value(s) = c.staircase_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("ceiling.staircase_scale must be positive, got {s}"));
            }
        }
        if c.level_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) || c.radii.contains(&0) {
            return bad("ceiling weights and radii must be positive".into());
        }
        if !(c.prune_tol >= 0.0) {
            return bad("ceiling.prune_tol must be nonnegative".into());
        }
        if self.precision.max_iterate == 0 {
            return bad("precision.max_iterate must be positive".into());
        }
        let a = &self.analysis;
        if a.defect_grid < 2 || a.birkhoff_max_m < 1 {
            return bad("analysis.defect_grid >= 2 and analysis.birkhoff_max_m >= 1 required".into());
        }
        let s = &a.stretch;
        if s.samples < crate::analysis::stretch::MIN_SAMPLES || s.windows < 2 || s.derivative_grid < 2 {
            return bad("stretch needs samples >= 1000, windows >= 2 and derivative_grid >= 2".into());
        }
        if !(s.eps_max > 0.0 && s.k_min > 0.0) {
            return bad("stretch.eps_max and stretch.k_min must be positive".into());
        }
        let times_ok = |t: &Auto<Vec<f64>>| t.value().is_none_or(|v| v.iter().all(|x| x.is_finite() && *x >= 0.0));
        if !times_ok(&s.times) || !times_ok(&a.correlation.times) {
            return bad("explicit times must be finite and nonnegative".into());
        }
        if let Auto::Value(l) = s.length {
            if !(l.is_finite() && l > 0.0) {
                return bad("stretch.length must be positive".into());
            }
        }
        if let Auto::Value(e) = s.eta {
            if !(e > 0.0 && e < 0.5) {
                return bad("stretch.eta must lie in (0, 1/2)".into());
            }
        }
        let st = &a.staircase;
        if !(st.margin >= 0.0 && st.margin < 0.5) || !(st.ratio_max > 0.0) {
            return bad("staircase.margin must lie in [0, 1/2) and ratio_max be positive".into());
        }
        if st.max_gap.value().is_some_and(|g| g < 1) || st.m_max.value().is_some_and(|m| m < 1) {
            return bad("staircase.max_gap and staircase.m_max must be positive".into());
        }
        let co = &a.correlation;
        if co.samples < crate::analysis::correlation::MIN_SAMPLES || !(co.height > 0.0 && co.height <= 1.0) {
            return bad("correlation needs samples >= 1000 and height in (0, 1]".into());
        }
        Ok(())
    }
}

/// Process exit status for an error: 2 config, 3 infeasible scale, 4 precision,
/// 5 nonpositive ceiling, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidSchedule(_) | Error::Aliasing(_) => 2,
        Error::InfeasibleScale(_) => 3,
        Error::Precision(_) => 4,
        Error::NonpositiveCeiling(_) => 5,
        Error::Degenerate(_) | Error::Io(_) => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    BuildPair,
    BuildCeiling,
    Birkhoff,
    TowerReport,
    StretchScan,
    Staircase,
    Correlation,
    FullReport,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::BuildPair,
        Command::BuildCeiling,
        Command::Birkhoff,
        Command::TowerReport,
        Command::StretchScan,
        Command::Staircase,
        Command::Correlation,
        Command::FullReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::BuildPair => "build-pair",
            Command::BuildCeiling => "build-ceiling",
            Command::Birkhoff => "birkhoff",
            Command::TowerReport => "tower-report",
            Command::StretchScan => "stretch-scan",
            Command::Staircase => "staircase",
            Command::Correlation => "correlation",
            Command::FullReport => "full-report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Config(format!("unknown command {s}")))
    }
}

// ---------------------------------------------------------------------------
// Table rows
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffRow {
    pub x: f64,
    pub y: f64,
    pub m: i64,
    pub naive: f64,
    pub fast: f64,
    pub abs_error: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerRow {
    pub geometry: Option<GeometryReport>,
    pub defect: DefectReport,
    pub r: i64,
    pub cells: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StretchEntry {
    pub n: usize,
    pub window: String,
    pub t: f64,
    pub row: StretchRow,
}

#[derive(Clone, Debug, Serialize)]
pub struct StaircaseRow {
    pub n: usize,
    pub j: i64,
    pub i1: i64,
    pub i2: i64,
    pub m: i64,
    pub u: f64,
    pub v: f64,
    pub deviation: f64,
    /// `(i2 - i1) m eps_n`.
    pub scale: f64,
    pub ratio: f64,
    pub abs_tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationRow {
    pub window: String,
    pub point: crate::analysis::CorrelationPoint,
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

fn certify_precision(cfg: &ExperimentConfig, pair: &YPair) -> Result<()> {
    let max_q = pair.alpha.q(pair.alpha.last_index()).max(pair.alpha_prime.q(pair.alpha_prime.last_index())).clone();
    PrecisionPolicy { bits: cfg.precision.bits, max_iterate: cfg.precision.max_iterate }.certify(&max_q)
}

pub fn build_pair_stage(cfg: &ExperimentConfig) -> Result<YPair> {
    let pair = cfg.pair.build()?;
    certify_precision(cfg, &pair)?;
    Ok(pair)
}

pub fn build_ceiling_stage(cfg: &ExperimentConfig, pair: &YPair) -> Result<CeilingSpec> {
    assemble_phi_with(pair, &cfg.ceiling.options())
}

pub fn birkhoff_stage(cfg: &ExperimentConfig, spec: &CeilingSpec) -> Result<Vec<BirkhoffRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.analysis.seed);
    (0..cfg.analysis.birkhoff_cases)
        .map(|_| {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let m = rng.random_range(1..=cfg.analysis.birkhoff_max_m);
            let naive = birkhoff_naive(spec, x, y, m)?;
            let fast = birkhoff_fast(spec, x, y, m, 0, 0)?;
            Ok(BirkhoffRow { x, y, m, naive, fast, abs_error: (fast - naive).abs(), tolerance: SUM_REL_TOL * (1.0 + naive.abs()) })
        })
        .collect()
}

pub fn tower_stage(cfg: &ExperimentConfig, spec: &CeilingSpec) -> Result<Vec<TowerRow>> {
    let a = &cfg.analysis;
    spec.levels
        .iter()
        .map(|l| {
            let n = l.n();
            let g = &l.geom;
            let cells = g.cells();
            let geometry = if (cells as u64).saturating_mul(g.r.max(1) as u64) <= a.geometry_cell_limit {
                Some(geometry_report(&spec.pair, n, a.geometry_cell_limit, a.geometry_samples, a.seed)?)
            } else {
                None
            };
            let defect = rank_one_defect(spec, n, a.defect_grid)?;
            Ok(TowerRow { geometry, defect, r: g.r, cells })
        })
        .collect()
}

/// Named windows `(n, label, times)` used by the stretch and correlation sweeps.
fn window_times(spec: &CeilingSpec, min_n: usize) -> Result<Vec<(usize, String, Vec<f64>)>> {
    let mut out = Vec::new();
    for l in &spec.levels {
        let n = l.n();
        if n < min_n {
            continue;
        }
        for (name, (lo, hi)) in time_windows(&spec.pair, n)?.all() {
            if lo.is_finite() && hi.is_finite() && hi > lo && lo > 0.0 {
                out.push((n, format!("n{n}.{name}"), vec![lo, (lo * hi).sqrt(), hi]));
            }
        }
    }
    Ok(out)
}

pub fn stretch_stage(cfg: &ExperimentConfig, spec: &CeilingSpec) -> Result<Vec<StretchEntry>> {
    let s = &cfg.analysis.stretch;
    let opts = s.options();
    let plan: Vec<(usize, String, Vec<f64>)> = match s.times.value() {
        None => window_times(spec, 5)?,
        Some(ts) => spec.levels.iter().filter(|l| l.n() >= 5).map(|l| (l.n(), "explicit".to_string(), ts.clone())).collect(),
    };
    let mut out = Vec::new();
    for (n, window, times) in plan {
        for t in times {
            for row in stretch_scan(spec, n, t, &opts)? {
                out.push(StretchEntry { n, window: window.clone(), t, row });
            }
        }
    }
    Ok(out)
}

pub fn staircase_stage(cfg: &ExperimentConfig, spec: &CeilingSpec) -> Result<Vec<StaircaseRow>> {
    let st = &cfg.analysis.staircase;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.analysis.seed ^ 0x5ca1_ab1e);
    let mut out = Vec::new();
    let admissible: Vec<_> = spec
        .levels
        .iter()
        .filter(|l| l.n() > 4 && (l.n() as i64 - 4) * l.geom.r / l.n() as i64 >= 1)
        .collect();
    if admissible.is_empty() {
        return Ok(out);
    }
    let mean = spec.max_value;
    for c in 0..st.configs {
        let l = admissible[c % admissible.len()];
        let (n, g) = (l.n(), &l.geom);
        let tower = TowerSpec::new(&spec.pair, n)?;
        let i2max = (n as i64 - 4) * g.r / n as i64;
        let gap = st.max_gap.value().unwrap_or_else(|| (g.qp as f64 / (g.q as f64 * (g.qpp as f64).powi(6))).floor().max(1.0) as i64);
        let (m_lo, m_hi) = default_m_range(g.qp, n);
        let m_hi = st.m_max.value().unwrap_or(m_hi);
        let i1 = rng.random_range(0..i2max);
        let i2 = rng.random_range(i1 + 1..=(i1 + gap).min(i2max));
        let m = rng.random_range(m_lo..=m_hi);
        let j = rng.random_range(0..g.cells());
        let span = 1.0 - 2.0 * st.margin;
        let (u, v) = (st.margin + span * rng.random::<f64>(), st.margin + span * rng.random::<f64>());
        let z1 = level_point(&tower, i1, j, u, v)?;
        let z2 = level_point(&tower, i2, j, u, v)?;
        let limits = StaircaseLimits { max_gap: Some(gap), m_range: Some((m_lo, m_hi)) };
        let deviation = staircase_deviation(spec, n, m, i1, i2, j, z1, z2, &limits)?;
        let scale = (i2 - i1) as f64 * m as f64 * g.eps;
        out.push(StaircaseRow {
            n,
            j,
            i1,
            i2,
            m,
            u,
            v,
            deviation,
            scale,
            ratio: deviation / scale,
            abs_tolerance: 2.0 * SUM_REL_TOL * (1.0 + m as f64 * mean),
        });
    }
    Ok(out)
}

/// The region used for the correlation sweep.
pub fn correlation_region(cfg: &ExperimentConfig, spec: &CeilingSpec) -> Result<FlowRegion> {
    FlowRegion::new((0.0, 1.0), (0.0, 1.0), (0.0, cfg.analysis.correlation.height * spec.min_value))
}

pub fn correlation_stage(cfg: &ExperimentConfig, spec: &CeilingSpec) -> Result<Vec<CorrelationRow>> {
    let co = &cfg.analysis.correlation;
    let plan: Vec<(String, Vec<f64>)> = match co.times.value() {
        None => {
            let mut p = vec![("zero".to_string(), vec![0.0])];
            p.extend(window_times(spec, 0)?.into_iter().map(|(_, w, t)| (w, t)));
            p
        }
        Some(ts) => vec![("explicit".to_string(), ts)],
    };
    let region = correlation_region(cfg, spec)?;
    let mut out = Vec::new();
    for (window, times) in plan {
        for point in correlation_series(spec, &region, &region, &times, co.samples, cfg.analysis.seed)? {
            out.push(CorrelationRow { window: window.clone(), point });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LevelSummary {
    pub n: usize,
    pub q: String,
    pub q_prime: String,
    pub eps: f64,
    pub h: i64,
    pub defect: f64,
    pub defect_upper_first_order: f64,
    pub defect_upper_rigorous: f64,
    pub geometry: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StretchSummary {
    pub window: String,
    pub t: f64,
    pub rows: usize,
    pub criterion_pass: usize,
    pub definition_pass: usize,
    /// Rows where the criterion passes but the measured distortion exceeds its epsilon plus the tolerance.
    pub implication_violations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CorrelationSummary {
    pub mu: f64,
    /// `mu - mu^2`.
    pub variance: f64,
    pub estimate_at_zero: Option<f64>,
    pub largest_window: String,
    pub largest_window_mean_abs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub command: String,
    pub pair_pass: bool,
    pub min_value: f64,
    pub max_value: f64,
    pub staircase_scale: f64,
    pub frequencies: usize,
    /// `decreasing` when each level's defect is below the previous one.
    pub defect_trend: String,
    pub levels: Vec<LevelSummary>,
    pub stretch: Vec<StretchSummary>,
    pub staircase_configs: usize,
    pub staircase_worst_ratio: f64,
    pub correlation: CorrelationSummary,
    pub config: ExperimentConfig,
}

impl Summary {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

fn summarize_stretch(rows: &[StretchEntry]) -> Vec<StretchSummary> {
    let mut out: Vec<StretchSummary> = Vec::new();
    for e in rows {
        let r = &e.row.report;
        let viol = r.criterion_pass && !(r.distortion <= r.criterion_epsilon.unwrap_or(0.0) + crate::analysis::stretch::MEASURE_TOL);
        match out.last_mut() {
            Some(s) if s.window == e.window && s.t == e.t => {
                s.rows += 1;
                s.criterion_pass += r.criterion_pass as usize;
                s.definition_pass += r.definition_pass as usize;
                s.implication_violations += viol as usize;
            }
            _ => out.push(StretchSummary {
                window: e.window.clone(),
                t: e.t,
                rows: 1,
                criterion_pass: r.criterion_pass as usize,
                definition_pass: r.definition_pass as usize,
                implication_violations: viol as usize,
            }),
        }
    }
    out
}

pub fn summarize_correlation(rows: &[CorrelationRow]) -> CorrelationSummary {
    let mu = rows.first().map_or(f64::NAN, |r| r.point.mu_a);
    let estimate_at_zero = rows.iter().find(|r| r.point.t == 0.0).map(|r| r.point.estimate);
    let largest = rows
        .iter()
        .filter(|r| r.point.t > 0.0)
        .max_by(|a, b| a.point.t.total_cmp(&b.point.t))
        .map(|r| r.window.clone())
        .unwrap_or_default();
    let sel: Vec<f64> = rows.iter().filter(|r| r.window == largest).map(|r| r.point.estimate.abs()).collect();
    let mean = if sel.is_empty() { f64::NAN } else { sel.iter().sum::<f64>() / sel.len() as f64 };
    CorrelationSummary { mu, variance: mu - mu * mu, estimate_at_zero, largest_window: largest, largest_window_mean_abs: mean }
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

fn io_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(&self.header).map_err(|e| io_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn verdict(v: Verdict) -> String {
    format!("{v:?}").to_lowercase()
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Writes the files of one run and returns their paths.
pub struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Writer { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn text(&mut self, name: &str, s: &str) -> Result<()> {
        let p = self.path(name);
        write_text(&p, s)
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.path(name);
        t.write(&p)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }
}

fn write_pair(w: &mut Writer, pair: &YPair) -> Result<bool> {
    w.text("pair.toml", &pair.to_document())?;
    let rep = verify_pair(pair);
    let mut t = Table::new(&[
        "n",
        "q [count]",
        "q_prime_prev [count]",
        "q_prime [count]",
        "inserted",
        "growth_prime",
        "growth_next",
        "coprime_prev",
        "coprime_cur",
        "parity",
        "tower_margin",
        "pass",
        "tolerance [exact]",
    ]);
    for (rec, l) in pair.levels.iter().zip(&rep.levels) {
        t.push(vec![
            l.n.to_string(),
            rec.q.to_string(),
            rec.q_prime_prev.to_string(),
            rec.q_prime.to_string(),
            rec.inserted.to_string(),
            verdict(l.growth_prime),
            verdict(l.growth_next),
            verdict(l.coprime_prev),
            verdict(l.coprime_cur),
            verdict(l.parity),
            verdict(l.tower_margin),
            l.pass().to_string(),
            "0".into(),
        ]);
    }
    w.table("pair_report.csv", &t)?;
    Ok(rep.pass)
}

/// Grid on which the truncation error of each level is reported.
pub const TRUNCATION_GRID: usize = 257;

fn write_ceiling(w: &mut Writer, spec: &CeilingSpec) -> Result<()> {
    w.text("ceiling.toml", &spec.to_document().to_toml()?)?;
    let mut t = Table::new(&[
        "n",
        "eps [phi units]",
        "weight",
        "radius [frequency]",
        "x_terms [count]",
        "y_terms [count]",
        "r [count]",
        "h [iterates]",
        "truncation_sup_error [phi units]",
        "min_value [phi units]",
        "certificate_margin [phi units]",
    ]);
    for l in &spec.levels {
        t.push(vec![
            l.n().to_string(),
            f(l.eps()),
            f(l.weight),
            l.radius.to_string(),
            l.x.len().to_string(),
            l.y.len().to_string(),
            l.geom.r.to_string(),
            l.geom.h.to_string(),
            f(l.truncation_sup_error(TRUNCATION_GRID)?),
            f(spec.min_value),
            f(spec.certificate.margin),
        ]);
    }
    w.table("ceiling_levels.csv", &t)
}

fn write_birkhoff(w: &mut Writer, rows: &[BirkhoffRow]) -> Result<()> {
    let mut t = Table::new(&[
        "x [turns]",
        "y [turns]",
        "m [iterates]",
        "naive [phi units]",
        "fast [phi units]",
        "abs_error [phi units]",
        "tolerance [phi units]",
    ]);
    for r in rows {
        t.push(vec![f(r.x), f(r.y), r.m.to_string(), f(r.naive), f(r.fast), f(r.abs_error), f(r.tolerance)]);
    }
    w.table("birkhoff.csv", &t)
}

fn write_towers(w: &mut Writer, rows: &[TowerRow]) -> Result<()> {
    let mut t = Table::new(&[
        "n",
        "r [count]",
        "cells [count]",
        "h [iterates]",
        "tiling",
        "rbar_inside",
        "translated_inclusion",
        "beta_ok",
        "filled [measure]",
        "filled_ok",
        "levels_disjoint",
        "defect_grid [points per side]",
        "defect [phi units]",
        "argmax_m [iterates]",
        "defect_upper_first_order [phi units]",
        "defect_upper_rigorous [phi units]",
        "top_below [phi units]",
        "top_above [phi units]",
        "separator [phi units]",
    ]);
    for r in rows {
        let g = r.geometry.as_ref();
        let b = |x: Option<bool>| x.map(|v| v.to_string()).unwrap_or_else(|| "skipped".into());
        let d = &r.defect;
        t.push(vec![
            d.n.to_string(),
            r.r.to_string(),
            r.cells.to_string(),
            d.h.to_string(),
            b(g.map(|g| g.tiling)),
            b(g.map(|g| g.rbar_inside)),
            b(g.map(|g| g.translated_inclusion)),
            b(g.map(|g| g.beta_ok)),
            g.map(|g| f(g.filled)).unwrap_or_default(),
            b(g.map(|g| g.filled_ok)),
            b(g.and_then(|g| g.levels_disjoint)),
            d.grid.to_string(),
            f(d.defect),
            d.argmax_m.to_string(),
            f(d.upper_first_order),
            f(d.upper_rigorous),
            f(d.top_below),
            f(d.top_above),
            opt(d.separator),
        ]);
    }
    w.table("towers.csv", &t)
}

fn write_stretch(w: &mut Writer, rows: &[StretchEntry]) -> Result<()> {
    let mut t = Table::new(&[
        "n",
        "window",
        "t [flow time]",
        "a [turns]",
        "b [turns]",
        "y [turns]",
        "m [iterates]",
        "k_measured [phi units]",
        "distortion [ratio]",
        "criterion_epsilon [ratio]",
        "criterion_k [phi units]",
        "criterion_pass",
        "definition_pass",
        "tolerance [ratio]",
    ]);
    for e in rows {
        let r = &e.row.report;
        t.push(vec![
            e.n.to_string(),
            e.window.clone(),
            f(e.t),
            f(e.row.interval.0),
            f(e.row.interval.1),
            f(e.row.y),
            e.row.m.to_string(),
            f(r.k_measured),
            f(r.distortion),
            opt(r.criterion_epsilon),
            opt(r.criterion_k),
            r.criterion_pass.to_string(),
            r.definition_pass.to_string(),
            f(crate::analysis::stretch::MEASURE_TOL),
        ]);
    }
    w.table("stretch.csv", &t)
}

fn write_staircase(w: &mut Writer, rows: &[StaircaseRow]) -> Result<()> {
    let mut t = Table::new(&[
        "n",
        "j",
        "i1",
        "i2",
        "m [iterates]",
        "u [level fraction]",
        "v [level fraction]",
        "deviation [phi units]",
        "scale [phi units]",
        "ratio",
        "abs_tolerance [phi units]",
    ]);
    for r in rows {
        t.push(vec![
            r.n.to_string(),
            r.j.to_string(),
            r.i1.to_string(),
            r.i2.to_string(),
            r.m.to_string(),
            f(r.u),
            f(r.v),
            f(r.deviation),
            f(r.scale),
            f(r.ratio),
            f(r.abs_tolerance),
        ]);
    }
    w.table("staircase.csv", &t)
}

fn write_correlation(w: &mut Writer, rows: &[CorrelationRow]) -> Result<()> {
    let mut t = Table::new(&[
        "window",
        "t [flow time]",
        "estimate [probability]",
        "stderr [probability]",
        "mu_a [probability]",
        "mu_b [probability]",
        "samples",
        "seed",
    ]);
    for r in rows {
        let p = &r.point;
        t.push(vec![
            r.window.clone(),
            f(p.t),
            f(p.estimate),
            f(p.stderr),
            f(p.mu_a),
            f(p.mu_b),
            p.samples.to_string(),
            p.seed.to_string(),
        ]);
    }
    w.table("correlation.csv", &t)
}

/// Runs `command`, writing into `cfg.output.dir`; returns the written paths.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut w = Writer::new(Path::new(&cfg.output.dir))?;
    w.text("config.toml", &cfg.to_toml()?)?;
    let pair = build_pair_stage(cfg)?;
    if command == Command::BuildPair {
        write_pair(&mut w, &pair)?;
        return Ok(w.files);
    }
    let spec = build_ceiling_stage(cfg, &pair)?;
    match command {
        Command::BuildPair => unreachable!(),
        Command::BuildCeiling => {
            write_pair(&mut w, &pair)?;
            write_ceiling(&mut w, &spec)?;
        }
        Command::Birkhoff => write_birkhoff(&mut w, &birkhoff_stage(cfg, &spec)?)?,
        Command::TowerReport => write_towers(&mut w, &tower_stage(cfg, &spec)?)?,
        Command::StretchScan => write_stretch(&mut w, &stretch_stage(cfg, &spec)?)?,
        Command::Staircase => write_staircase(&mut w, &staircase_stage(cfg, &spec)?)?,
        Command::Correlation => write_correlation(&mut w, &correlation_stage(cfg, &spec)?)?,
        Command::FullReport => {
            let summary = full_report(cfg, &pair, &spec, &mut w)?;
            w.text("summary.toml", &summary.to_toml()?)?;
        }
    }
    Ok(w.files)
}

fn full_report(cfg: &ExperimentConfig, pair: &YPair, spec: &CeilingSpec, w: &mut Writer) -> Result<Summary> {
    let pair_pass = write_pair(w, pair)?;
    write_ceiling(w, spec)?;
    let birk = birkhoff_stage(cfg, spec)?;
    write_birkhoff(w, &birk)?;
    let towers = tower_stage(cfg, spec)?;
    write_towers(w, &towers)?;
    let stretch = stretch_stage(cfg, spec)?;
    write_stretch(w, &stretch)?;
    let stairs = staircase_stage(cfg, spec)?;
    write_staircase(w, &stairs)?;
    let corr = correlation_stage(cfg, spec)?;
    write_correlation(w, &corr)?;

    let levels: Vec<LevelSummary> = towers
        .iter()
        .zip(&spec.levels)
        .map(|(t, l)| {
            let rec = spec.pair.level(l.n()).expect("used level");
            LevelSummary {
                n: l.n(),
                q: rec.q.to_string(),
                q_prime: rec.q_prime.to_string(),
                eps: l.eps(),
                h: t.defect.h,
                defect: t.defect.defect,
                defect_upper_first_order: t.defect.upper_first_order,
                defect_upper_rigorous: t.defect.upper_rigorous,
                geometry: match &t.geometry {
                    Some(g) if g.pass() => "pass".into(),
                    Some(_) => "fail".into(),
                    None => "skipped".into(),
                },
            }
        })
        .collect();
    let decreasing = levels.len() >= 2 && levels.windows(2).all(|p| p[1].defect < p[0].defect);
    Ok(Summary {
        command: Command::FullReport.name().into(),
        pair_pass,
        min_value: spec.min_value,
        max_value: spec.max_value,
        staircase_scale: spec.staircase_scale,
        frequencies: spec.frequency_count(),
        defect_trend: if decreasing { "decreasing" } else { "not-decreasing" }.into(),
        levels,
        stretch: summarize_stretch(&stretch),
        staircase_configs: stairs.len(),
        staircase_worst_ratio: stairs.iter().map(|r| r.ratio).fold(0.0, f64::max),
        correlation: summarize_correlation(&corr),
        config: cfg.clone(),
    })
}

/// A matplotlib script over the CSV outputs of a run.
pub const PLOT_SCRIPT: &str = r#"import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out")


def read(name):
    path = out / name
    if not path.exists():
        return None
    with path.open() as fh:
        return list(csv.DictReader(fh))


rows = read("correlation.csv")
if rows:
    t = [float(r["t [flow time]"]) for r in rows]
    e = [float(r["estimate [probability]"]) for r in rows]
    s = [float(r["stderr [probability]"]) for r in rows]
    fig, ax = plt.subplots()
    ax.errorbar([max(v, 1e-1) for v in t], e, yerr=[3 * v for v in s], fmt="o")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("correlation")
    fig.savefig(out / "correlation.png", dpi=150)

rows = read("towers.csv")
if rows:
    n = [int(r["n"]) for r in rows]
    fig, ax = plt.subplots()
    ax.plot(n, [float(r["defect [phi units]"]) for r in rows], "o-", label="defect")
    ax.plot(n, [float(r["defect_upper_first_order [phi units]"]) for r in rows], "s--", label="upper bracket")
    ax.set_xlabel("n")
    ax.legend()
    fig.savefig(out / "defect.png", dpi=150)

rows = read("stretch.csv")
if rows:
    fig, ax = plt.subplots()
    ok = [r for r in rows if r["criterion_pass"] == "true"]
    ax.scatter([float(r["criterion_epsilon [ratio]"]) for r in ok], [float(r["distortion [ratio]"]) for r in ok], s=8)
    ax.set_xlabel("criterion epsilon")
    ax.set_ylabel("measured distortion")
    fig.savefig(out / "stretch.png", dpi=150)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.pair = PairConfig {
            law: "explicit-floor-list".into(),
            floors: vec![49, 500, 81060, 100_000_000],
            levels: 2,
            seed_alpha: vec![0, 1, 1, 1, 1, 1],
            close_alpha: true,
            ..Default::default()
        };
        c.ceiling.grid_exponent = 8;
        c.ceiling.radii = vec![8, 4];
        c.ceiling.level_weights = vec![1.0, 1e-16];
        c
    }

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let s = c.to_toml().unwrap();
        assert!(s.contains("staircase_scale = \"auto\""));
        assert_eq!(ExperimentConfig::from_toml(&s).unwrap(), c);
        let mut d = small();
        d.ceiling.staircase_scale = Auto::Value(0.25);
        d.analysis.correlation.times = Auto::Value(vec![0.0, 1.5]);
        let s = d.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&s).unwrap(), d);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "[pair]\nlaw = \"cubic\"",
            "[ceiling]\nstaircase_scale = \"big\"",
            "[ceiling]\nstaircase_scale = -1.0",
            "[analysis.correlation]\nsamples = 10",
            "[pair]\nunknown = 1",
        ] {
            let e = ExperimentConfig::from_toml(bad).unwrap_err();
            assert_eq!(exit_code(&e), 2, "{bad}: {e}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InfeasibleScale(String::new())), 3);
        assert_eq!(exit_code(&Error::Precision(String::new())), 4);
        assert_eq!(exit_code(&Error::NonpositiveCeiling(String::new())), 5);
        assert_eq!(exit_code(&Error::Io(String::new())), 1);
    }

    #[test]
    fn command_names() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("plot".parse::<Command>().is_err());
    }

    #[test]
    fn exponential_law_is_infeasible() {
        let mut c = ExperimentConfig::default();
        c.pair.law = "paper-exponential".into();
        c.pair.levels = 3;
        c.pair.seed_alpha = vec![0, 3];
        let dir = tempfile::tempdir().unwrap();
        c.output.dir = dir.path().to_string_lossy().into();
        let e = run(Command::BuildPair, &c).unwrap_err();
        assert_eq!(exit_code(&e), 3);
        assert!(e.to_string().contains("e^{3q}"), "{e}");
    }

    #[test]
    fn precision_is_checked() {
        let mut c = small();
        c.precision.bits = 80;
        assert_eq!(exit_code(&build_pair_stage(&c).unwrap_err()), 4);
    }

    #[test]
    fn build_ceiling_writes_documents() {
        let mut c = small();
        let dir = tempfile::tempdir().unwrap();
        c.output.dir = dir.path().to_string_lossy().into();
        let files = run(Command::BuildCeiling, &c).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into()).collect();
        assert_eq!(names, ["config.toml", "pair.toml", "pair_report.csv", "ceiling.toml", "ceiling_levels.csv"]);
        let echoed = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
        assert_eq!(echoed, c);
        let csv = fs::read_to_string(dir.path().join("ceiling_levels.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn birkhoff_rows_within_tolerance() {
        let mut c = small();
        c.analysis.birkhoff_cases = 20;
        c.analysis.birkhoff_max_m = 2000;
        let pair = build_pair_stage(&c).unwrap();
        let spec = build_ceiling_stage(&c, &pair).unwrap();
        let rows = birkhoff_stage(&c, &spec).unwrap();
        assert_eq!(rows.len(), 20);
        assert!(rows.iter().all(|r| r.abs_error <= r.tolerance));
    }

    #[test]
    fn correlation_summary_picks_latest_window() {
        let p = |t: f64, e: f64| crate::analysis::CorrelationPoint { t, estimate: e, stderr: 0.01, mu_a: 0.5, mu_b: 0.5, samples: 1000, seed: 1 };
        let rows = vec![
            CorrelationRow { window: "zero".into(), point: p(0.0, 0.25) },
            CorrelationRow { window: "a".into(), point: p(10.0, 0.1) },
            CorrelationRow { window: "b".into(), point: p(100.0, -0.02) },
            CorrelationRow { window: "b".into(), point: p(50.0, 0.04) },
        ];
        let s = summarize_correlation(&rows);
        assert_eq!(s.largest_window, "b");
        assert!((s.largest_window_mean_abs - 0.03).abs() < 1e-15);
        assert_eq!(s.variance, 0.25);
        assert_eq!(s.estimate_at_zero, Some(0.25));
    }
}

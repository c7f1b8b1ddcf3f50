use num_bigint::BigInt;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use torusflow_core as tf;
use tf::analysis::{self, FlowRegion, ScanOptions};
use tf::ceiling::{assemble_phi_with, CeilingOptions, CeilingSpec};
use tf::experiment::{self, Command, ExperimentConfig};
use tf::pairgen::{build_pair_with, verify_pair, BuildOptions, Seed, YPair};
use tf::{flow, towers, Error};

create_exception!(torusflow, TorusflowError, PyException);
create_exception!(torusflow, ConfigError, TorusflowError);
create_exception!(torusflow, InfeasibleScaleError, TorusflowError);
create_exception!(torusflow, PrecisionError, TorusflowError);
create_exception!(torusflow, NonpositiveCeilingError, TorusflowError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match experiment::exit_code(&e) {
        2 => ConfigError::new_err(msg),
        3 => InfeasibleScaleError::new_err(msg),
        4 => PrecisionError::new_err(msg),
        5 => NonpositiveCeilingError::new_err(msg),
        _ => TorusflowError::new_err(msg),
    }
}

/// Convergents `(p_k, q_k)` of a quotient list.
#[pyfunction]
fn cf_convergents(quotients: Vec<BigInt>) -> PyResult<Vec<(BigInt, BigInt)>> {
    tf::cf_convergents(&quotients).map_err(err)
}

#[pyclass(module = "torusflow", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Level {
    n: usize,
    q: BigInt,
    q_prime_prev: BigInt,
    q_prime: BigInt,
    inserted: bool,
    passes: bool,
}

/// A translation pair `(alpha, alpha')` with its level schedule.
#[pyclass(module = "torusflow", frozen)]
struct Pair {
    inner: YPair,
}

#[pymethods]
impl Pair {
    /// `law` is `"power"`, `"paper-exponential"` or `"explicit-floor-list"`.
    #[new]
    #[pyo3(signature = (law="power", levels=2, seed_alpha=vec![0, 2], seed_alpha_prime=vec![0], k=2.0, c=50.0, floors=vec![], close_alpha=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        law: &str,
        levels: usize,
        seed_alpha: Vec<u64>,
        seed_alpha_prime: Vec<u64>,
        k: f64,
        c: f64,
        floors: Vec<u64>,
        close_alpha: bool,
    ) -> PyResult<Self> {
        let cfg = experiment::PairConfig {
            law: law.into(),
            power_k: k,
            power_c: c,
            floors,
            levels,
            seed_alpha: seed_alpha.clone(),
            seed_alpha_prime: seed_alpha_prime.clone(),
            close_alpha,
            ..Default::default()
        };
        let law = cfg.growth_law().map_err(err)?;
        let opts = BuildOptions { close_alpha, ..Default::default() };
        let seed = Seed { alpha: seed_alpha, alpha_prime: seed_alpha_prime };
        Ok(Pair { inner: build_pair_with(&law, levels, &seed, &opts).map_err(err)? })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha_angle().to_f64()
    }

    #[getter]
    fn alpha_prime(&self) -> f64 {
        self.inner.alpha_prime_angle().to_f64()
    }

    #[getter]
    fn alpha_quotients(&self) -> Vec<BigInt> {
        self.inner.alpha.quotients.clone()
    }

    #[getter]
    fn alpha_prime_quotients(&self) -> Vec<BigInt> {
        self.inner.alpha_prime.quotients.clone()
    }

    #[getter]
    fn levels(&self) -> Vec<Level> {
        let rep = verify_pair(&self.inner);
        self.inner
            .levels
            .iter()
            .zip(&rep.levels)
            .map(|(l, r)| Level {
                n: l.n,
                q: l.q.clone(),
                q_prime_prev: l.q_prime_prev.clone(),
                q_prime: l.q_prime.clone(),
                inserted: l.inserted,
                passes: r.pass(),
            })
            .collect()
    }

    /// True when every level passes the growth, coprimality and parity checks.
    fn verify(&self) -> bool {
        verify_pair(&self.inner).pass
    }

    fn to_toml(&self) -> String {
        self.inner.to_document()
    }

    fn __repr__(&self) -> String {
        format!("Pair(levels={}, law={})", self.inner.levels.len(), self.inner.law.name())
    }
}

#[pyclass(module = "torusflow", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Defect {
    n: usize,
    h: i64,
    defect: f64,
    upper_first_order: f64,
    upper_rigorous: f64,
    separator: Option<f64>,
}

#[pyclass(module = "torusflow", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct StretchRow {
    a: f64,
    b: f64,
    y: f64,
    m: i64,
    k_measured: f64,
    distortion: f64,
    criterion_epsilon: Option<f64>,
    criterion_pass: bool,
    definition_pass: bool,
}

/// The ceiling `phi` over a pair, with the flow and analysis operations on it.
#[pyclass(module = "torusflow", frozen)]
struct Ceiling {
    inner: CeilingSpec,
}

#[pymethods]
impl Ceiling {
    #[new]
    #[pyo3(signature = (pair, grid_exponent=10, staircase_scale=None, radii=vec![], level_weights=vec![]))]
    fn new(pair: &Pair, grid_exponent: u32, staircase_scale: Option<f64>, radii: Vec<usize>, level_weights: Vec<f64>) -> PyResult<Self> {
        let opts = CeilingOptions { staircase_scale, grid_exponent, radii, level_weights, ..Default::default() };
        Ok(Ceiling { inner: assemble_phi_with(&pair.inner, &opts).map_err(err)? })
    }

    #[getter]
    fn min_value(&self) -> f64 {
        self.inner.min_value
    }

    #[getter]
    fn max_value(&self) -> f64 {
        self.inner.max_value
    }

    #[getter]
    fn staircase_scale(&self) -> f64 {
        self.inner.staircase_scale
    }

    /// `(n, eps_n)` for every used level.
    fn eps(&self) -> Vec<(usize, f64)> {
        self.inner.eps()
    }

    #[pyo3(name = "__call__")]
    fn call(&self, x: f64, y: f64) -> f64 {
        self.inner.eval(x, y)
    }

    /// The exact staircase part of level `n` at `(x, y)`.
    fn xtilde(&self, n: usize, x: f64, y: f64) -> PyResult<f64> {
        self.inner.eval_xtilde(n, x, y).map_err(err)
    }

    /// `S_m phi(x, y)` by the closed-form kernel.
    fn birkhoff(&self, x: f64, y: f64, m: i64) -> PyResult<f64> {
        tf::birkhoff::birkhoff_fast(&self.inner, x, y, m, 0, 0).map_err(err)
    }

    /// `S_m phi(x, y)` by direct summation.
    fn birkhoff_naive(&self, x: f64, y: f64, m: i64) -> PyResult<f64> {
        tf::birkhoff::birkhoff_naive(&self.inner, x, y, m).map_err(err)
    }

    /// `Phi_t(x, y, s)` as `(x, y, s)`.
    fn flow(&self, x: f64, y: f64, s: f64, t: f64) -> PyResult<(f64, f64, f64)> {
        let p = flow::FlowPoint::checked(&self.inner, x, y, s).map_err(err)?;
        let q = flow::flow_map(&self.inner, p, t).map_err(err)?;
        Ok((q.x, q.y, q.s))
    }

    #[pyo3(signature = (n, grid=16))]
    fn defect(&self, py: Python<'_>, n: usize, grid: usize) -> PyResult<Defect> {
        let d = py.detach(|| towers::rank_one_defect(&self.inner, n, grid)).map_err(err)?;
        Ok(Defect {
            n: d.n,
            h: d.h,
            defect: d.defect,
            upper_first_order: d.upper_first_order,
            upper_rigorous: d.upper_rigorous,
            separator: d.separator,
        })
    }

    #[pyo3(signature = (n, t, intervals=16, ys=4, k_min=1.0, eps_max=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn stretch_scan(&self, py: Python<'_>, n: usize, t: f64, intervals: usize, ys: usize, k_min: f64, eps_max: f64) -> PyResult<Vec<StretchRow>> {
        let opts = ScanOptions { intervals, ys, k_min, eps_max, ..Default::default() };
        let rows = py.detach(|| analysis::stretch_scan(&self.inner, n, t, &opts)).map_err(err)?;
        Ok(rows
            .into_iter()
            .map(|r| StretchRow {
                a: r.interval.0,
                b: r.interval.1,
                y: r.y,
                m: r.m,
                k_measured: r.report.k_measured,
                distortion: r.report.distortion,
                criterion_epsilon: r.report.criterion_epsilon,
                criterion_pass: r.report.criterion_pass,
                definition_pass: r.report.definition_pass,
            })
            .collect())
    }

    /// Correlation of the box `[0,1)^2 x [0, height * min phi)` with itself,
    /// as `(t, estimate, stderr)` triples.
    #[pyo3(signature = (times, height=0.5, samples=10000, seed=1))]
    fn correlation(&self, py: Python<'_>, times: Vec<f64>, height: f64, samples: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
        let region = FlowRegion::new((0.0, 1.0), (0.0, 1.0), (0.0, height * self.inner.min_value)).map_err(err)?;
        let pts = py.detach(|| analysis::correlation_series(&self.inner, &region, &region, &times, samples, seed)).map_err(err)?;
        Ok(pts.into_iter().map(|p| (p.t, p.estimate, p.stderr)).collect())
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_document().to_toml().map_err(err)
    }

    #[staticmethod]
    fn from_toml(s: &str) -> PyResult<Self> {
        let doc = tf::ceiling::CeilingDocument::from_toml(s).map_err(err)?;
        Ok(Ceiling { inner: CeilingSpec::from_document(&doc).map_err(err)? })
    }
}

/// Normalizes a TOML experiment configuration, filling in every default.
#[pyfunction]
fn resolve_config(toml: &str) -> PyResult<String> {
    ExperimentConfig::from_toml(toml).and_then(|c| c.to_toml()).map_err(err)
}

/// Runs one pipeline command on a TOML configuration; returns the written files.
#[pyfunction]
#[pyo3(signature = (command, config, out=None))]
fn run(py: Python<'_>, command: &str, config: &str, out: Option<String>) -> PyResult<Vec<String>> {
    let cmd: Command = command.parse().map_err(err)?;
    let mut cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    let files = py.detach(|| experiment::run(cmd, &cfg)).map_err(err)?;
    Ok(files.into_iter().map(|p| p.to_string_lossy().into_owned()).collect())
}

#[pymodule]
fn torusflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("TorusflowError", py.get_type::<TorusflowError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("InfeasibleScaleError", py.get_type::<InfeasibleScaleError>())?;
    m.add("PrecisionError", py.get_type::<PrecisionError>())?;
    m.add("NonpositiveCeilingError", py.get_type::<NonpositiveCeilingError>())?;
    m.add_class::<Pair>()?;
    m.add_class::<Level>()?;
    m.add_class::<Ceiling>()?;
    m.add_class::<Defect>()?;
    m.add_class::<StretchRow>()?;
    m.add_function(wrap_pyfunction!(cf_convergents, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

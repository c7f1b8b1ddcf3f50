//! Translation pairs `(alpha, alpha')` with an alternating growth schedule.
//!
//! Level `n` uses the convergent `p_n/q_n` of `alpha` and two consecutive
//! convergents of `alpha'`: `q'_{n-1}` at an even index (so that
//! `alpha' - p'_{n-1}/q'_{n-1} > 0`) and `q'_n` right after it.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{cf_value, Angle, CFNumber, PrecisionPolicy, ENGINE_BITS};
use crate::error::{invalid, Error, Result};

/// Default cap on the size of any growth floor, in bits.
pub const DEFAULT_BUDGET_BITS: u32 = 174;

const SEARCH_CAP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum GrowthLaw {
    /// `G(q) = e^{3q}`.
    Exponential,
    /// `G(q) = max(c, q^k)`.
    Power { k: f64, c: f64 },
    /// One floor per schedule step, in the order `q'_{n0}, q_{n0+1}, q'_{n0+1}, ...`.
    ExplicitFloors(Vec<BigInt>),
}

impl Default for GrowthLaw {
    fn default() -> Self {
        GrowthLaw::Power { k: 2.0, c: 50.0 }
    }
}

impl GrowthLaw {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthLaw::Exponential => "paper-exponential",
            GrowthLaw::Power { .. } => "power",
            GrowthLaw::ExplicitFloors(_) => "explicit-floor-list",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthLaw::Exponential => Ok(()),
            GrowthLaw::Power { k, c } => {
                if !(k.is_finite() && *k > 1.0 && c.is_finite() && *c > 1.0) {
                    return invalid(format!("power law needs k > 1 and C > 1, got k={k}, C={c}"));
                }
                Ok(())
            }
            GrowthLaw::ExplicitFloors(f) => {
                if f.iter().any(|x| !x.is_positive()) {
                    return invalid("explicit floors must be positive");
                }
                Ok(())
            }
        }
    }

    /// Smallest integer admitted after `q` at schedule step `step`, i.e. `ceil(G(q))`,
    /// and never below `q + 1`.
    pub fn floor(&self, q: &BigInt, step: usize, budget_bits: u32) -> Result<BigInt> {
        let raw = match self {
            GrowthLaw::Exponential => {
                let x = q.to_u64().ok_or_else(|| infeasible(q, "e^{3q}", budget_bits))?;
                let log2 = 3.0 * x as f64 * std::f64::consts::LOG2_E;
                if log2 > budget_bits as f64 {
                    return Err(infeasible(q, "e^{3q}", budget_bits));
                }
                exp_ceil(3 * x)
            }
            GrowthLaw::Power { k, c } => {
                let qf = q.to_f64().unwrap_or(f64::INFINITY);
                let log2 = k * qf.log2();
                if log2 > budget_bits as f64 || c.log2() > budget_bits as f64 {
                    return Err(infeasible(q, "q^k", budget_bits));
                }
                let pow = if k.fract() == 0.0 {
                    q.pow(*k as u32)
                } else {
                    float_ceil(qf.powf(*k))
                };
                pow.max(float_ceil(*c))
            }
            GrowthLaw::ExplicitFloors(f) => f
                .get(step)
                .cloned()
                .ok_or_else(|| Error::InvalidSchedule(format!("no explicit floor for step {step}")))?,
        };
        if raw.bits() as u32 > budget_bits {
            return Err(infeasible(q, "floor", budget_bits));
        }
        Ok(raw.max(q + 1))
    }
}

fn infeasible(q: &BigInt, what: &str, budget: u32) -> Error {
    Error::InfeasibleScale(format!(
        "growth floor {what} at q={q} exceeds the {budget}-bit schedule budget"
    ))
}

fn float_ceil(x: f64) -> BigInt {
    let r = num_rational::BigRational::from_float(x.ceil()).expect("finite floor");
    r.to_integer()
}

/// `ceil(e^x)` for a nonnegative integer `x`, from a fixed-point Taylor sum.
pub fn exp_ceil(x: u64) -> BigInt {
    if x == 0 {
        return BigInt::one();
    }
    let int_bits = (x as f64 * std::f64::consts::LOG2_E).ceil() as usize + 2;
    let prec = int_bits + 96;
    let scale = BigInt::one() << prec;
    let xb = BigInt::from(x);
    let mut term = scale.clone();
    let mut sum = scale.clone();
    let mut k = 1u64;
    let mut nterms = 1u64;
    while !term.is_zero() {
        term = &term * &xb / k;
        sum += &term;
        k += 1;
        nterms += 1;
    }
    // Each truncated division loses < 1 ulp; the sum lies in [sum, sum + nterms].
    let lo = sum.div_ceil(&scale);
    let hi = (&sum + BigInt::from(nterms)).div_ceil(&scale);
    debug_assert_eq!(lo, hi, "e^{x} is too close to an integer");
    hi
}

/// Options for [`build_pair_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    /// Also require the tower conditions at levels `n >= 3`: `floor((1-2/n) r_n) >= 1`
    /// and the top admissible rung clearing the staircase cutoff.
    pub tower_margin: bool,
    /// After the last level, append one quotient to `alpha` so that
    /// `q_{N+1} >= G(q'_N)`.
    pub close_alpha: bool,
    pub budget_bits: u32,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { tower_margin: true, close_alpha: false, budget_bits: DEFAULT_BUDGET_BITS }
    }
}

/// Initial quotients for both numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub alpha: Vec<u64>,
    pub alpha_prime: Vec<u64>,
}

impl Default for Seed {
    fn default() -> Self {
        Seed { alpha: vec![0, 2], alpha_prime: vec![0] }
    }
}

/// One level of the schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    /// Index of `p_n/q_n` in the expansion of `alpha`; the formulas use this `n`.
    pub n: usize,
    pub p: BigInt,
    pub q: BigInt,
    /// Index of `q'_{n-1}` in the expansion of `alpha'` (even).
    pub prime_index: usize,
    pub p_prime_prev: BigInt,
    pub q_prime_prev: BigInt,
    pub p_prime: BigInt,
    pub q_prime: BigInt,
    /// A unit quotient was inserted into `alpha'` to fix the parity.
    pub inserted: bool,
    /// `alpha' - p'_{n-1}/q'_{n-1} > 0`.
    pub parity: bool,
}

/// A translation vector together with its schedule.
#[derive(Clone, Debug)]
pub struct YPair {
    pub alpha: CFNumber,
    pub alpha_prime: CFNumber,
    pub law: GrowthLaw,
    pub levels: Vec<LevelRecord>,
    pub options: BuildOptions,
    pub policy: PrecisionPolicy,
    alpha_angle: Angle,
    alpha_prime_angle: Angle,
}

impl YPair {
    /// Assembles a pair from explicit expansions, reading the levels off the
    /// given indices `(n, prime_index)`.
    pub fn from_parts(
        alpha: CFNumber,
        alpha_prime: CFNumber,
        law: GrowthLaw,
        level_indices: &[(usize, usize)],
        options: BuildOptions,
    ) -> Result<Self> {
        let mut levels = Vec::new();
        for &(n, e) in level_indices {
            if n >= alpha.len() || e + 1 >= alpha_prime.len() {
                return invalid(format!("level indices ({n},{e}) out of range"));
            }
            levels.push(LevelRecord {
                n,
                p: alpha.p(n).clone(),
                q: alpha.q(n).clone(),
                prime_index: e,
                p_prime_prev: alpha_prime.p(e).clone(),
                q_prime_prev: alpha_prime.q(e).clone(),
                p_prime: alpha_prime.p(e + 1).clone(),
                q_prime: alpha_prime.q(e + 1).clone(),
                inserted: false,
                parity: e % 2 == 0,
            });
        }
        Self::finish(alpha, alpha_prime, law, levels, options)
    }

    fn finish(
        mut alpha: CFNumber,
        mut alpha_prime: CFNumber,
        law: GrowthLaw,
        levels: Vec<LevelRecord>,
        options: BuildOptions,
    ) -> Result<Self> {
        let max_q = levels
            .iter()
            .flat_map(|l| [l.q.clone(), l.q_prime.clone()])
            .max()
            .unwrap_or_else(BigInt::one);
        let policy = PrecisionPolicy::for_engine(&max_q)?;
        if alpha.len() < 2 || alpha_prime.len() < 2 {
            return invalid("both expansions need at least two quotients");
        }
        let bits = ENGINE_BITS + 64
            + alpha.q(alpha.last_index()).bits() as u32 * 2
            + alpha_prime.q(alpha_prime.last_index()).bits() as u32 * 2;
        alpha.precision_bits = bits;
        alpha_prime.precision_bits = bits;
        let alpha_angle = cf_value(&alpha, bits)?.to_angle();
        let alpha_prime_angle = cf_value(&alpha_prime, bits)?.to_angle();
        Ok(YPair { alpha, alpha_prime, law, levels, options, policy, alpha_angle, alpha_prime_angle })
    }

    pub fn alpha_angle(&self) -> Angle {
        self.alpha_angle
    }

    pub fn alpha_prime_angle(&self) -> Angle {
        self.alpha_prime_angle
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, n: usize) -> Result<&LevelRecord> {
        self.levels
            .iter()
            .find(|l| l.n == n)
            .ok_or_else(|| Error::InvalidArgument(format!("level {n} is not in the schedule")))
    }

    /// Human-readable key-value document.
    pub fn to_document(&self) -> String {
        let doc = PairDocument::from_pair(self);
        toml::to_string(&doc).expect("pair document serializes")
    }
}

/// Builds a pair with [`BuildOptions::default`].
pub fn build_pair(law: &GrowthLaw, levels: usize, seed: &Seed) -> Result<YPair> {
    build_pair_with(law, levels, seed, &BuildOptions::default())
}

/// Alternately extends `alpha'` and `alpha`, each time taking the smallest
/// quotient that reaches the growth floor and then incrementing it until the
/// coprimality (and, if requested, tower) conditions hold.
pub fn build_pair_with(law: &GrowthLaw, levels: usize, seed: &Seed, opts: &BuildOptions) -> Result<YPair> {
    law.validate()?;
    if levels == 0 {
        return invalid("levels must be >= 1");
    }
    if seed.alpha.len() < 2 {
        return invalid("alpha seed needs at least two quotients");
    }
    let mut alpha = CFNumber::from_u64(&seed.alpha, 0)?;
    let mut alpha_p = CFNumber::from_u64(&seed.alpha_prime, 0)?;
    let n_start = alpha.last_index();
    let mut recs = Vec::with_capacity(levels);
    for level in 0..levels {
        let n = n_start + level;
        let mut inserted = false;
        if alpha_p.last_index() % 2 == 1 {
            alpha_p.push(BigInt::one())?;
            inserted = true;
        }
        let e = alpha_p.last_index();
        let qpp = alpha_p.q(e).clone();
        if level > 0 {
            let floor = law.floor(&qpp, 2 * level - 1, opts.budget_bits)?;
            let a = search_quotient(&alpha, &floor, |q| q.gcd(&qpp).is_one())?;
            alpha.push(a)?;
        } else if !alpha.q(n).gcd(&qpp).is_one() {
            return Err(Error::InvalidSchedule(format!(
                "seed denominators q={} and q'={} share a factor",
                alpha.q(n),
                qpp
            )));
        }
        let q = alpha.q(n).clone();
        let floor = law.floor(&q, 2 * level, opts.budget_bits)?;
        let a = search_quotient(&alpha_p, &floor, |qp| {
            qp.gcd(&q).is_one() && (!opts.tower_margin || tower_margin_ok(n, &q, &qpp, qp))
        })?;
        alpha_p.push(a)?;
        recs.push(LevelRecord {
            n,
            p: alpha.p(n).clone(),
            q,
            prime_index: e,
            p_prime_prev: alpha_p.p(e).clone(),
            q_prime_prev: qpp,
            p_prime: alpha_p.p(e + 1).clone(),
            q_prime: alpha_p.q(e + 1).clone(),
            inserted,
            parity: e % 2 == 0,
        });
    }
    if opts.close_alpha {
        let last = recs.last().unwrap();
        let floor = law.floor(&last.q_prime, 2 * levels - 1, opts.budget_bits)?;
        let a = search_quotient(&alpha, &floor, |_| true)?;
        alpha.push(a)?;
    }
    YPair::finish(alpha, alpha_p, law.clone(), recs, opts.clone())
}

/// Smallest quotient `a >= 1` with `a q_N + q_{N-1} >= floor` and `accept` true.
fn search_quotient(cf: &CFNumber, floor: &BigInt, accept: impl Fn(&BigInt) -> bool) -> Result<BigInt> {
    let n = cf.last_index();
    let q1 = cf.q(n).clone();
    let q2 = if n >= 1 { cf.q(n - 1).clone() } else { BigInt::zero() };
    let need = floor - &q2;
    let mut a = if need.is_positive() { need.div_ceil(&q1) } else { BigInt::one() };
    if a < BigInt::one() {
        a = BigInt::one();
    }
    for _ in 0..SEARCH_CAP {
        let cand = &a * &q1 + &q2;
        if accept(&cand) {
            return Ok(a);
        }
        a += 1;
    }
    Err(Error::InvalidSchedule(format!("no admissible quotient within {SEARCH_CAP} of the floor {floor}")))
}

/// `r_n = floor(q'_n/(q_n q'_{n-1})) - 1`.
pub fn r_of(q: &BigInt, qpp: &BigInt, qp: &BigInt) -> BigInt {
    qp / (q * qpp) - 1
}

/// Largest staircase rung used by the towers, `floor((1-2/n) r_n)`.
pub fn top_rung(n: usize, r: &BigInt) -> BigInt {
    if n < 3 || !r.is_positive() {
        return BigInt::zero();
    }
    (r * BigInt::from(n - 2)) / BigInt::from(n)
}

/// Tower conditions on `q'_n` at level `n >= 3`: at least one full rung, and
/// the plateau of the top rung `i` lies below the cutoff of the staircase,
/// `(i + 1 - 1/n^2) q_n/q'_n <= (1 - 2/n)/q'_{n-1}`.
pub fn tower_margin_ok(n: usize, q: &BigInt, qpp: &BigInt, qp: &BigInt) -> bool {
    if n < 3 {
        return true;
    }
    let r = r_of(q, qpp, qp);
    let i = top_rung(n, &r);
    if i < BigInt::one() {
        return false;
    }
    let nb = BigInt::from(n);
    let lhs = (&nb * &nb * (i + 1) - 1) * q * qpp;
    let rhs = &nb * (&nb - 2) * qp;
    lhs <= rhs
}

// ---------------------------------------------------------------------------
// verification
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

impl Verdict {
    fn of(b: bool) -> Self {
        if b {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn ok(self) -> bool {
        self != Verdict::Fail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub n: usize,
    /// `q'_n >= G(q_n)`.
    pub growth_prime: Verdict,
    /// `q_{n+1} >= G(q'_n)`, vacuous without a successor.
    pub growth_next: Verdict,
    pub coprime_prev: Verdict,
    pub coprime_cur: Verdict,
    pub parity: Verdict,
    /// Tower conditions (informational, `Vacuous` below `n = 3`).
    pub tower_margin: Verdict,
}

impl LevelReport {
    pub fn pass(&self) -> bool {
        [self.growth_prime, self.growth_next, self.coprime_prev, self.coprime_cur, self.parity]
            .iter()
            .all(|v| v.ok())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub levels: Vec<LevelReport>,
    /// First level index from which every later level passes.
    pub first_passing_level: Option<usize>,
    pub pass: bool,
}

/// Exact per-level verdicts for growth, coprimality and parity.
pub fn verify_pair(pair: &YPair) -> PairReport {
    let budget = pair.options.budget_bits;
    let mut out = Vec::new();
    for (idx, l) in pair.levels.iter().enumerate() {
        let growth_prime = match pair.law.floor(&l.q, 2 * idx, budget) {
            Ok(f) => Verdict::of(l.q_prime >= f),
            Err(_) => Verdict::Fail,
        };
        let growth_next = if l.n + 1 < pair.alpha.len() {
            match pair.law.floor(&l.q_prime, 2 * idx + 1, budget) {
                Ok(f) => Verdict::of(pair.alpha.q(l.n + 1) >= &f),
                Err(_) => Verdict::Fail,
            }
        } else {
            Verdict::Vacuous
        };
        let parity_exact = l.prime_index % 2 == 0
            && alpha_prime_above(pair, &l.p_prime_prev, &l.q_prime_prev);
        let tower_margin = if l.n < 3 {
            Verdict::Vacuous
        } else {
            Verdict::of(tower_margin_ok(l.n, &l.q, &l.q_prime_prev, &l.q_prime))
        };
        out.push(LevelReport {
            n: l.n,
            growth_prime,
            growth_next,
            coprime_prev: Verdict::of(l.q.gcd(&l.q_prime_prev).is_one()),
            coprime_cur: Verdict::of(l.q.gcd(&l.q_prime).is_one()),
            parity: Verdict::of(parity_exact),
            tower_margin,
        });
    }
    let mut first = None;
    for i in (0..out.len()).rev() {
        if out[i].pass() {
            first = Some(out[i].n);
        } else {
            break;
        }
    }
    let pass = out.iter().all(|l| l.pass());
    PairReport { levels: out, first_passing_level: first, pass }
}

/// `alpha' > p/q`, decided on the high-precision value of `alpha'`.
fn alpha_prime_above(pair: &YPair, p: &BigInt, q: &BigInt) -> bool {
    let v = cf_value(&pair.alpha_prime, pair.alpha_prime.precision_bits).expect("pair value");
    let x = v.to_ratio();
    x > num_rational::BigRational::new(p.clone(), q.clone())
}

// ---------------------------------------------------------------------------
// document form
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LevelDocument {
    pub n: usize,
    pub q: String,
    pub q_prime_prev: String,
    pub q_prime: String,
    pub prime_index: usize,
    pub inserted: bool,
    pub parity: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PairDocument {
    pub law: String,
    pub law_parameters: Vec<String>,
    pub alpha_quotients: Vec<String>,
    pub alpha_prime_quotients: Vec<String>,
    pub tower_margin: bool,
    pub close_alpha: bool,
    pub budget_bits: u32,
    pub levels: Vec<LevelDocument>,
}

impl PairDocument {
    pub fn from_pair(p: &YPair) -> Self {
        let law_parameters = match &p.law {
            GrowthLaw::Exponential => vec![],
            GrowthLaw::Power { k, c } => vec![format!("{k:?}"), format!("{c:?}")],
            GrowthLaw::ExplicitFloors(f) => f.iter().map(|x| x.to_string()).collect(),
        };
        PairDocument {
            law: p.law.name().to_string(),
            law_parameters,
            alpha_quotients: p.alpha.quotients.iter().map(|x| x.to_string()).collect(),
            alpha_prime_quotients: p.alpha_prime.quotients.iter().map(|x| x.to_string()).collect(),
            tower_margin: p.options.tower_margin,
            close_alpha: p.options.close_alpha,
            budget_bits: p.options.budget_bits,
            levels: p
                .levels
                .iter()
                .map(|l| LevelDocument {
                    n: l.n,
                    q: l.q.to_string(),
                    q_prime_prev: l.q_prime_prev.to_string(),
                    q_prime: l.q_prime.to_string(),
                    prime_index: l.prime_index,
                    inserted: l.inserted,
                    parity: l.parity,
                })
                .collect(),
        }
    }

    /// Rebuilds the pair from the stored expansions.
    pub fn to_pair(&self) -> Result<YPair> {
        let parse = |v: &[String]| -> Result<Vec<BigInt>> {
            v.iter()
                .map(|s| s.parse::<BigInt>().map_err(|e| Error::Config(format!("bad integer {s}: {e}"))))
                .collect()
        };
        let law = match self.law.as_str() {
            "paper-exponential" => GrowthLaw::Exponential,
            "power" => {
                let k = self.law_parameters.first().and_then(|s| s.parse().ok());
                let c = self.law_parameters.get(1).and_then(|s| s.parse().ok());
                match (k, c) {
                    (Some(k), Some(c)) => GrowthLaw::Power { k, c },
                    _ => return Err(Error::Config("power law needs k and C".into())),
                }
            }
            "explicit-floor-list" => GrowthLaw::ExplicitFloors(parse(&self.law_parameters)?),
            other => return Err(Error::Config(format!("unknown law {other}"))),
        };
        let alpha = CFNumber::new(parse(&self.alpha_quotients)?, 0)?;
        let alpha_prime = CFNumber::new(parse(&self.alpha_prime_quotients)?, 0)?;
        let idx: Vec<(usize, usize)> = self.levels.iter().map(|l| (l.n, l.prime_index)).collect();
        let opts = BuildOptions {
            tower_margin: self.tower_margin,
            close_alpha: self.close_alpha,
            budget_bits: self.budget_bits,
        };
        let mut pair = YPair::from_parts(alpha, alpha_prime, law, &idx, opts)?;
        for (rec, doc) in pair.levels.iter_mut().zip(&self.levels) {
            rec.inserted = doc.inserted;
        }
        Ok(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::big;
    use proptest::prelude::*;

    #[test]
    fn exp_ceil_small_values() {
        assert_eq!(exp_ceil(0), big(1));
        assert_eq!(exp_ceil(1), big(3));
        assert_eq!(exp_ceil(6), big(404));
        assert_eq!(exp_ceil(9), big(8104));
        // e^30 = 10686474581524.46...
        assert_eq!(exp_ceil(30), big(10_686_474_581_525));
    }

    #[test]
    fn power_law_default_seed_two_levels() {
        let p = build_pair(&GrowthLaw::default(), 2, &Seed::default()).unwrap();
        let l1 = &p.levels[0];
        let l2 = &p.levels[1];
        assert_eq!(l1.q, big(2));
        assert!(l1.q_prime >= big(50).max(&l1.q * &l1.q));
        assert!(l2.q >= big(50).max(&l1.q_prime * &l1.q_prime));
        assert!(verify_pair(&p).pass);
    }

    #[test]
    fn exponential_law_single_level() {
        let p = build_pair(&GrowthLaw::Exponential, 1, &Seed::default()).unwrap();
        // e^6 = 403.43; 404 is even and shares a factor with q = 2.
        assert_eq!(p.levels[0].q_prime, big(405));
        // Brute force: every smaller candidate fails the floor or the gcd.
        for cand in 1u64..405 {
            assert!(cand < 404 || big(cand).gcd(&big(2)) != big(1));
        }
        let r = verify_pair(&p);
        assert!(r.pass);
        assert_eq!(r.levels[0].growth_next, Verdict::Vacuous);
    }

    #[test]
    fn exponential_law_three_levels_is_infeasible() {
        let seed = Seed { alpha: vec![0, 3], alpha_prime: vec![0] };
        let e = build_pair(&GrowthLaw::Exponential, 3, &seed).unwrap_err();
        assert!(matches!(e, Error::InfeasibleScale(_)));
    }

    #[test]
    fn shared_factor_is_reported() {
        // alpha = [0; 2, 5] gives q_2 = 11; alpha' = [0; 11, 1] gives q'_1 = 11, q'_2 = 12.
        let alpha = CFNumber::from_u64(&[0, 2, 5], 0).unwrap();
        let alpha_p = CFNumber::from_u64(&[0, 11, 1, 3], 0).unwrap();
        let pair = YPair::from_parts(alpha, alpha_p, GrowthLaw::Power { k: 1.01, c: 2.0 }, &[(2, 2)], BuildOptions::default())
            .unwrap();
        assert_eq!(pair.levels[0].q, big(11));
        // q'_{n-1} = q'_2 = 12 is coprime, q'_n = q'_3 = 3*12 + 11 = 47 is coprime too; force a clash:
        let alpha_p = CFNumber::from_u64(&[0, 10, 1, 1], 0).unwrap(); // q': 1, 10, 11, 21
        let alpha = CFNumber::from_u64(&[0, 2, 5], 0).unwrap();
        let pair = YPair::from_parts(alpha, alpha_p, GrowthLaw::Power { k: 1.01, c: 2.0 }, &[(2, 2)], BuildOptions::default())
            .unwrap();
        assert_eq!(pair.levels[0].q_prime_prev, big(11));
        let r = verify_pair(&pair);
        assert_eq!(r.levels[0].coprime_prev, Verdict::Fail);
        assert!(!r.pass);
    }

    #[test]
    fn odd_prime_index_fails_parity() {
        let alpha = CFNumber::from_u64(&[0, 1, 1, 1], 0).unwrap();
        let alpha_p = CFNumber::from_u64(&[0, 2, 30, 5], 0).unwrap();
        let pair = YPair::from_parts(alpha, alpha_p, GrowthLaw::Power { k: 1.5, c: 2.0 }, &[(3, 1)], BuildOptions::default())
            .unwrap();
        assert_eq!(verify_pair(&pair).levels[0].parity, Verdict::Fail);
    }

    #[test]
    fn document_roundtrip() {
        let seed = Seed { alpha: vec![0, 1, 1, 2], alpha_prime: vec![0, 1, 2] };
        let p = build_pair_with(
            &GrowthLaw::Power { k: 1.5, c: 20.0 },
            2,
            &seed,
            &BuildOptions { close_alpha: true, ..Default::default() },
        )
        .unwrap();
        let doc: PairDocument = toml::from_str(&p.to_document()).unwrap();
        let q = doc.to_pair().unwrap();
        assert_eq!(q.levels, p.levels);
        assert_eq!(q.alpha_angle(), p.alpha_angle());
        assert_eq!(q.alpha_prime_angle(), p.alpha_prime_angle());
    }

    #[test]
    fn tower_margin_levels() {
        let seed = Seed { alpha: vec![0, 1, 1, 1, 1, 1], alpha_prime: vec![0, 1, 1, 1, 1] };
        let p = build_pair(&GrowthLaw::Power { k: 2.0, c: 50.0 }, 1, &seed).unwrap();
        let l = &p.levels[0];
        assert_eq!(l.n, 5);
        assert!(tower_margin_ok(5, &l.q, &l.q_prime_prev, &l.q_prime));
        assert_eq!(verify_pair(&p).levels[0].tower_margin, Verdict::Pass);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn builder_output_verifies(k in 1.05f64..2.5, c in 2.0f64..60.0, levels in 1usize..3,
                                   extra in prop::collection::vec(1u64..4, 1..4), margin in any::<bool>()) {
            let mut alpha = vec![0];
            alpha.extend(&extra);
            let seed = Seed { alpha, alpha_prime: vec![0, 1] };
            let opts = BuildOptions { tower_margin: margin, ..Default::default() };
            let law = GrowthLaw::Power { k, c };
            match build_pair_with(&law, levels, &seed, &opts) {
                Ok(p) => {
                    let again = build_pair_with(&law, levels, &seed, &opts).unwrap();
                    prop_assert_eq!(&again.levels, &p.levels);
                    let rep = verify_pair(&p);
                    prop_assert!(rep.pass, "{:?}", rep);
                    for l in &p.levels {
                        prop_assert!(l.q.gcd(&l.q_prime_prev).is_one());
                        if margin && l.n >= 3 {
                            prop_assert!(tower_margin_ok(l.n, &l.q, &l.q_prime_prev, &l.q_prime));
                        }
                    }
                }
                Err(Error::InfeasibleScale(_)) | Err(Error::Precision(_)) => {}
                Err(Error::InvalidSchedule(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}

//! Continued fractions, fixed-point reals and torus angles.
//!
//! Numbers on the circle are carried in two forms. [`BigFixed`] is an
//! arbitrary-precision dyadic rational used wherever an exact or certified
//! value is needed. [`Angle`] is a 128-bit fixed-point point of `R/Z` whose
//! wrapping arithmetic makes orbit sums `x + m*alpha mod 1` exact for the
//! rounded `alpha`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};

/// Width of the orbit engine.
pub const ENGINE_BITS: u32 = 128;

// ---------------------------------------------------------------------------
// BigFixed
// ---------------------------------------------------------------------------

/// Dyadic rational `mant / 2^bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigFixed {
    mant: BigInt,
    bits: u32,
}

impl BigFixed {
    pub fn zero(bits: u32) -> Self {
        BigFixed { mant: BigInt::zero(), bits }
    }

    pub fn from_int(n: &BigInt, bits: u32) -> Self {
        BigFixed { mant: n << bits as usize, bits }
    }

    /// Nearest dyadic to `num/den` (ties away from zero).
    pub fn from_ratio(num: &BigInt, den: &BigInt, bits: u32) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        let (num, den) = if den.is_negative() { (-num, -den) } else { (num.clone(), den.clone()) };
        let scaled = num << bits as usize;
        BigFixed { mant: div_round(&scaled, &den), bits }
    }

    /// Exact conversion of a finite float, rounded if `bits` is too small.
    pub fn from_f64(x: f64, bits: u32) -> Self {
        assert!(x.is_finite());
        let r = BigRational::from_float(x).expect("finite");
        Self::from_ratio(r.numer(), r.denom(), bits)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mant
    }

    pub fn with_bits(&self, bits: u32) -> Self {
        if bits >= self.bits {
            BigFixed { mant: &self.mant << (bits - self.bits) as usize, bits }
        } else {
            let den = BigInt::one() << (self.bits - bits) as usize;
            BigFixed { mant: div_round(&self.mant, &den), bits }
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let b = self.bits.max(o.bits);
        BigFixed { mant: self.with_bits(b).mant + o.with_bits(b).mant, bits: b }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let b = self.bits.max(o.bits);
        BigFixed { mant: self.with_bits(b).mant - o.with_bits(b).mant, bits: b }
    }

    pub fn neg(&self) -> Self {
        BigFixed { mant: -&self.mant, bits: self.bits }
    }

    /// Product rounded back to `self.bits`.
    pub fn mul(&self, o: &Self) -> Self {
        let raw = &self.mant * &o.mant;
        let den = BigInt::one() << o.bits as usize;
        BigFixed { mant: div_round(&raw, &den), bits: self.bits }
    }

    pub fn mul_int(&self, k: &BigInt) -> Self {
        BigFixed { mant: &self.mant * k, bits: self.bits }
    }

    pub fn floor(&self) -> BigInt {
        self.mant.div_floor(&(BigInt::one() << self.bits as usize))
    }

    /// Fractional part in `[0, 1)`.
    pub fn frac(&self) -> Self {
        let one = BigInt::one() << self.bits as usize;
        BigFixed { mant: self.mant.mod_floor(&one), bits: self.bits }
    }

    pub fn to_ratio(&self) -> BigRational {
        BigRational::new(self.mant.clone(), BigInt::one() << self.bits as usize)
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.to_ratio())
    }

    /// Top 128 bits of the fractional part, rounded to nearest.
    pub fn to_angle(&self) -> Angle {
        let f = self.frac();
        let m = if f.bits >= ENGINE_BITS {
            let den = BigInt::one() << (f.bits - ENGINE_BITS) as usize;
            div_round(&f.mant, &den)
        } else {
            &f.mant << (ENGINE_BITS - f.bits) as usize
        };
        let wrapped = m.mod_floor(&(BigInt::one() << ENGINE_BITS as usize));
        Angle(bigint_to_u128(&wrapped))
    }
}

impl PartialOrd for BigFixed {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for BigFixed {
    fn cmp(&self, o: &Self) -> Ordering {
        let b = self.bits.max(o.bits);
        self.with_bits(b).mant.cmp(&o.with_bits(b).mant)
    }
}

impl fmt::Display for BigFixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// `|||x|||`, the distance from `x` to the nearest integer.
pub fn dist_to_int(x: &BigFixed) -> BigFixed {
    let f = x.frac();
    let one = BigFixed::from_int(&BigInt::one(), x.bits);
    let g = one.sub(&f);
    if f <= g {
        f
    } else {
        g
    }
}

/// Exact `|||r|||` for a rational.
pub fn dist_to_int_ratio(r: &BigRational) -> BigRational {
    let f = r - r.floor();
    let g = BigRational::one() - &f;
    if f <= g {
        f
    } else {
        g
    }
}

// ---------------------------------------------------------------------------
// Angle
// ---------------------------------------------------------------------------

/// A point of `R/Z` stored as `x * 2^128`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Angle(pub u128);

const TWO_M128: f64 = 1.0 / 340_282_366_920_938_463_463_374_607_431_768_211_456.0;
const TWO_P128: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

impl Angle {
    pub const ZERO: Angle = Angle(0);

    /// Reduces `x` mod 1.
    pub fn from_f64(x: f64) -> Angle {
        let f = x - x.floor();
        if f >= 1.0 {
            return Angle(0);
        }
        // Split to keep all 53 bits of f.
        let hi = (f * 18_446_744_073_709_551_616.0).floor();
        let lo = ((f * 18_446_744_073_709_551_616.0) - hi) * 18_446_744_073_709_551_616.0;
        Angle(((hi as u128) << 64).wrapping_add(lo.max(0.0) as u128))
    }

    /// Exact rounding of `num/den mod 1`.
    pub fn from_ratio(num: &BigInt, den: &BigInt) -> Angle {
        BigFixed::from_ratio(num, den, ENGINE_BITS + 2).to_angle()
    }

    /// Value in `[0, 1)`.
    pub fn to_f64(self) -> f64 {
        let v = self.0 as f64 * TWO_M128;
        if v >= 1.0 {
            0.0
        } else {
            v
        }
    }

    /// Representative in `[-1/2, 1/2)`; full relative precision near 0.
    pub fn signed_f64(self) -> f64 {
        (self.0 as i128) as f64 * TWO_M128
    }

    pub fn add(self, o: Angle) -> Angle {
        Angle(self.0.wrapping_add(o.0))
    }

    pub fn sub(self, o: Angle) -> Angle {
        Angle(self.0.wrapping_sub(o.0))
    }

    pub fn neg(self) -> Angle {
        Angle(self.0.wrapping_neg())
    }

    /// `k * self mod 1`, exact.
    pub fn mul_int(self, k: i128) -> Angle {
        Angle(self.0.wrapping_mul(k as u128))
    }

    /// Half of the signed representative, as an angle.
    pub fn half_signed(self) -> Angle {
        Angle(((self.0 as i128) >> 1) as u128)
    }

    /// `|||self|||` as a float.
    pub fn dist_to_int(self) -> f64 {
        self.signed_f64().abs()
    }

    pub fn to_ratio(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::one() << ENGINE_BITS as usize)
    }

    /// Largest angle error produced by `from_f64` on an exact input.
    pub fn f64_resolution() -> f64 {
        TWO_P128.recip()
    }
}

// ---------------------------------------------------------------------------
// Continued fractions
// ---------------------------------------------------------------------------

/// How the value of a finite quotient list is completed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Tail {
    /// Append the all-ones tail: the value is `(p_N F + p_{N-1})/(q_N F + q_{N-1})`
    /// with `F` the golden ratio.
    #[default]
    Noble,
    /// Terminate: the value is `p_N/q_N`.
    Terminating,
}

/// Partial quotients of a number together with its convergents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CFNumber {
    pub quotients: Vec<BigInt>,
    pub convergents: Vec<(BigInt, BigInt)>,
    pub precision_bits: u32,
}

/// Convergents `p_n/q_n` from the standard recurrence.
pub fn cf_convergents(quotients: &[BigInt]) -> Result<Vec<(BigInt, BigInt)>> {
    if quotients.is_empty() {
        return invalid("empty quotient list");
    }
    if quotients[0].is_negative() {
        return invalid("a0 must be nonnegative");
    }
    if let Some(i) = quotients.iter().skip(1).position(|a| !a.is_positive()) {
        return invalid(format!("quotient a{} must be positive", i + 1));
    }
    let (mut p2, mut p1) = (BigInt::zero(), BigInt::one());
    let (mut q2, mut q1) = (BigInt::one(), BigInt::zero());
    let mut out = Vec::with_capacity(quotients.len());
    for a in quotients {
        let p = a * &p1 + &p2;
        let q = a * &q1 + &q2;
        out.push((p.clone(), q.clone()));
        p2 = std::mem::replace(&mut p1, p);
        q2 = std::mem::replace(&mut q1, q);
    }
    Ok(out)
}

impl CFNumber {
    pub fn new(quotients: Vec<BigInt>, precision_bits: u32) -> Result<Self> {
        let convergents = cf_convergents(&quotients)?;
        Ok(CFNumber { quotients, convergents, precision_bits })
    }

    pub fn from_u64(quotients: &[u64], precision_bits: u32) -> Result<Self> {
        Self::new(quotients.iter().map(|&a| BigInt::from(a)).collect(), precision_bits)
    }

    pub fn len(&self) -> usize {
        self.quotients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotients.is_empty()
    }

    pub fn p(&self, n: usize) -> &BigInt {
        &self.convergents[n].0
    }

    pub fn q(&self, n: usize) -> &BigInt {
        &self.convergents[n].1
    }

    pub fn last_index(&self) -> usize {
        self.quotients.len() - 1
    }

    /// Appends one quotient and its convergent.
    pub fn push(&mut self, a: BigInt) -> Result<()> {
        if !a.is_positive() {
            return invalid("appended quotient must be positive");
        }
        let n = self.quotients.len();
        let (p1, q1) = self.convergents[n - 1].clone();
        let (p2, q2) = if n >= 2 {
            self.convergents[n - 2].clone()
        } else {
            (BigInt::one(), BigInt::zero())
        };
        self.convergents.push((&a * &p1 + p2, &a * &q1 + q2));
        self.quotients.push(a);
        Ok(())
    }

    /// Convergent `p_N/q_N` as an exact rational.
    pub fn last_ratio(&self) -> BigRational {
        let (p, q) = self.convergents.last().unwrap();
        BigRational::new(p.clone(), q.clone())
    }

    /// Value at `self.precision_bits` with the noble tail.
    pub fn value(&self) -> Result<BigFixed> {
        cf_value(self, self.precision_bits)
    }
}

/// Value of the continued fraction with the noble tail.
pub fn cf_value(cf: &CFNumber, bits: u32) -> Result<BigFixed> {
    cf_value_with(cf, bits, Tail::Noble)
}

/// Value of the continued fraction with an explicit tail rule.
pub fn cf_value_with(cf: &CFNumber, bits: u32, tail: Tail) -> Result<BigFixed> {
    if cf.convergents.len() < 2 {
        return invalid("need at least two convergents");
    }
    let n = cf.last_index();
    let (pn, qn) = &cf.convergents[n];
    let (pm, qm) = &cf.convergents[n - 1];
    // The last two convergents differ by exactly 1/(q_N q_{N-1}).
    let sep = (qn * qm).bits() as u32 + 1;
    if bits < sep {
        return Err(Error::Precision(format!(
            "{bits} bits cannot separate convergents at distance 1/{}",
            qn * qm
        )));
    }
    match tail {
        Tail::Terminating => Ok(BigFixed::from_ratio(pn, qn, bits)),
        Tail::Noble => {
            let g = bits + 64;
            let scale = BigInt::one() << g as usize;
            // 2^g * golden ratio, within one unit.
            let root5 = (BigInt::from(5) << (2 * g) as usize).sqrt();
            let phi = (&scale + root5) >> 1usize;
            let num = pn * &phi + pm * &scale;
            let den = qn * &phi + qm * &scale;
            Ok(BigFixed::from_ratio(&num, &den, bits))
        }
    }
}

/// Exact `1/(q_n(q_n+q_{n+1})) <= |x - p_n/q_n| <= 1/(q_n q_{n+1})` for one `n`.
pub fn check_convergent_bounds(cf: &CFNumber, x: &BigRational, n: usize) -> bool {
    if n + 1 >= cf.convergents.len() {
        return true;
    }
    let (p, q) = &cf.convergents[n];
    let q1 = cf.q(n + 1);
    let d = (x - BigRational::new(p.clone(), q.clone())).abs();
    let upper = BigRational::new(BigInt::one(), q * q1);
    let lower = BigRational::new(BigInt::one(), q * (q + q1));
    d <= upper && d >= lower
}

/// Exact check that `|||q_{n-1} x||| < |||q x|||` for every `0 < q < q_n`, `q != q_{n-1}`.
pub fn check_best_approximation(cf: &CFNumber, x: &BigRational, n: usize) -> bool {
    if n == 0 || n >= cf.convergents.len() {
        return true;
    }
    let qn = cf.q(n).to_u64().expect("small q_n");
    let qm = cf.q(n - 1).clone();
    let best = dist_to_int_ratio(&(x * BigRational::from_integer(qm.clone())));
    (1..qn).all(|q| {
        let qb = BigInt::from(q);
        qb == qm || dist_to_int_ratio(&(x * BigRational::from_integer(qb))) > best
    })
}

// ---------------------------------------------------------------------------
// Precision policy
// ---------------------------------------------------------------------------

/// Working precision together with the largest iterate it certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrecisionPolicy {
    pub bits: u32,
    pub max_iterate: u64,
}

impl PrecisionPolicy {
    /// Bits required to certify `max_iterate` steps at denominator scale `max_q`.
    pub fn required_bits(max_iterate: u64, max_q: &BigInt) -> u32 {
        ceil_log2_u64(max_iterate) + ceil_log2(max_q) + 64
    }

    /// Checks the policy against the largest denominator in use.
    pub fn certify(&self, max_q: &BigInt) -> Result<()> {
        let need = Self::required_bits(self.max_iterate, max_q);
        if self.bits < need {
            return Err(Error::Precision(format!(
                "{} bits < {} needed for {} iterates at q={}",
                self.bits, need, self.max_iterate, max_q
            )));
        }
        if self.bits > ENGINE_BITS {
            return Err(Error::Precision(format!(
                "orbit engine carries {ENGINE_BITS} bits, policy asks for {}",
                self.bits
            )));
        }
        Ok(())
    }

    /// Largest iterate count the engine certifies at denominator scale `max_q`.
    pub fn for_engine(max_q: &BigInt) -> Result<Self> {
        let spare = ENGINE_BITS as i64 - 64 - ceil_log2(max_q) as i64;
        if spare < 1 {
            return Err(Error::Precision(format!("denominator {max_q} too large for the orbit engine")));
        }
        let max_iterate = if spare >= 63 { u64::MAX >> 1 } else { 1u64 << spare };
        Ok(PrecisionPolicy { bits: ENGINE_BITS, max_iterate })
    }

    pub fn check_iterate(&self, m: i64) -> Result<()> {
        if m.unsigned_abs() > self.max_iterate {
            return Err(Error::Precision(format!(
                "iterate {m} exceeds certified range {}",
                self.max_iterate
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

pub fn ceil_log2(x: &BigInt) -> u32 {
    if x <= &BigInt::one() {
        return 0;
    }
    let m1: BigInt = x - 1;
    m1.bits() as u32
}

pub fn ceil_log2_u64(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// `round(a/b)` for `b > 0`, ties away from zero.
pub fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    if a.sign() == Sign::Minus {
        -((-a * &two + b).div_floor(&(b * &two)))
    } else {
        (a * &two + b).div_floor(&(b * &two))
    }
}

fn bigint_to_u128(x: &BigInt) -> u128 {
    let (_, digits) = x.to_u64_digits();
    let lo = digits.first().copied().unwrap_or(0) as u128;
    let hi = digits.get(1).copied().unwrap_or(0) as u128;
    lo | (hi << 64)
}

/// Correctly scaled float of a rational with arbitrary-size parts.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let n = r.numer();
    let d = r.denom();
    let shift = n.bits() as i64 - d.bits() as i64;
    // Scale to a quotient with ~64 significant bits.
    let k = 64 - shift;
    let q = if k >= 0 { (n << k as usize) / d } else { n / (d << (-k) as usize) };
    q.to_f64().unwrap() * 2f64.powi(-(k as i32))
}

pub fn big(x: u64) -> BigInt {
    BigInt::from(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cf(q: &[u64]) -> CFNumber {
        CFNumber::from_u64(q, 128).unwrap()
    }

    #[test]
    fn convergent_examples() {
        let c = cf_convergents(&[big(0), big(2)]).unwrap();
        assert_eq!(c, vec![(big(0), big(1)), (big(1), big(2))]);
        let c = cf_convergents(&[0, 1, 1, 1, 1, 1].map(big)).unwrap();
        assert_eq!(c.last().unwrap(), &(big(5), big(8)));
        let c = cf_convergents(&[big(0), big(1_000_000)]).unwrap();
        assert_eq!(c, vec![(big(0), big(1)), (big(1), big(1_000_000))]);
        assert!(matches!(cf_convergents(&[]), Err(Error::InvalidArgument(_))));
        assert!(cf_convergents(&[big(1), big(0)]).is_err());
    }

    #[test]
    fn ones_converge_to_fibonacci_ratio() {
        // [1;1,1,1,1] = 8/5
        let c = cf(&[1, 1, 1, 1, 1]);
        assert_eq!(c.convergents.last().unwrap(), &(big(8), big(5)));
    }

    #[test]
    fn dist_to_int_examples() {
        let d = |x: f64| dist_to_int(&BigFixed::from_f64(x, 64)).to_f64();
        assert_eq!(d(0.25), 0.25);
        assert_eq!(d(3.75), 0.25);
        assert_eq!(d(17.0), 0.0);
        assert_eq!(d(-0.25), 0.25);
    }

    #[test]
    fn value_examples() {
        let v = cf_value_with(&cf(&[0, 2]), 64, Tail::Terminating).unwrap();
        assert_eq!(v.to_f64(), 0.5);
        let ones = cf(&[1; 20]);
        let v = cf_value(&ones, 128).unwrap();
        // Golden ratio oracle from an independent integer square root.
        let g = BigFixed::from_ratio(
            &(BigInt::from(5u8) << 400usize).sqrt().checked_add(&(BigInt::one() << 200usize)).unwrap(),
            &(BigInt::from(2) << 200usize),
            128,
        );
        assert!(v.sub(&g).to_f64().abs() < 1e-15);
        assert!(matches!(cf_value(&cf(&[0, 3]), 2), Err(Error::Precision(_))));
        assert!(cf_value(&cf(&[3]), 64).is_err());
    }

    #[test]
    fn noble_value_lies_between_last_convergents() {
        let c = cf(&[0, 3, 7, 2, 9]);
        let v = cf_value(&c, 200).unwrap().to_ratio();
        let n = c.last_index();
        let a = BigRational::new(c.p(n).clone(), c.q(n).clone());
        let b = BigRational::new(c.p(n - 1).clone(), c.q(n - 1).clone());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        assert!(lo < v && v < hi);
    }

    #[test]
    fn angle_roundtrip() {
        for &x in &[0.0, 0.25, 0.999, 0.1234567] {
            assert!((Angle::from_f64(x).to_f64() - x).abs() < 1e-16);
        }
        assert_eq!(Angle::from_f64(-0.25).to_f64(), 0.75);
        let a = Angle::from_ratio(&big(1), &big(3));
        assert!((a.mul_int(3).signed_f64()).abs() < 1e-37);
        assert!((Angle::from_f64(0.75).signed_f64() + 0.25).abs() < 1e-16);
    }

    #[test]
    fn policy() {
        let p = PrecisionPolicy { bits: 128, max_iterate: 1 << 20 };
        assert!(p.certify(&big(1 << 40)).is_ok());
        assert!(p.certify(&(BigInt::one() << 50usize)).is_err());
        assert!(PrecisionPolicy { bits: 200, max_iterate: 10 }.certify(&big(10)).is_err());
        let e = PrecisionPolicy::for_engine(&big(1000)).unwrap();
        assert!(e.certify(&big(1000)).is_ok());
    }

    fn quotient_list() -> impl Strategy<Value = Vec<u64>> {
        (0u64..20, prop::collection::vec(1u64..=20, 1..14)).prop_map(|(a0, mut rest)| {
            rest.insert(0, a0);
            rest
        })
    }

    proptest! {
        #[test]
        fn recurrence_and_coprimality(q in quotient_list()) {
            let c = cf(&q);
            for (i, (p, qq)) in c.convergents.iter().enumerate() {
                prop_assert!(p.gcd(qq).is_one());
                if i >= 2 {
                    prop_assert_eq!(qq.clone(), &c.quotients[i] * c.q(i - 1) + c.q(i - 2));
                    prop_assert!(qq > c.q(i - 1));
                }
            }
        }

        #[test]
        fn convergent_bounds_hold(q in quotient_list()) {
            let c = cf(&q);
            let x = c.last_ratio();
            for n in 0..c.len() {
                prop_assert!(check_convergent_bounds(&c, &x, n));
            }
        }

        #[test]
        fn best_approximation_holds(q in quotient_list()) {
            let c = cf(&q);
            let x = c.last_ratio();
            for n in 1..c.last_index() {
                if c.q(n) <= &big(10_000) {
                    prop_assert!(check_best_approximation(&c, &x, n));
                }
            }
        }

        #[test]
        fn dist_symmetries(num in -10_000i64..10_000, den in 1i64..500, k in -50i64..50) {
            let x = BigFixed::from_ratio(&BigInt::from(num), &BigInt::from(den), 96);
            let d = dist_to_int(&x);
            prop_assert_eq!(d.clone(), dist_to_int(&x.add(&BigFixed::from_int(&BigInt::from(k), 96))));
            prop_assert_eq!(d.clone(), dist_to_int(&x.neg()));
            prop_assert!(d.to_f64() <= 0.5);
        }

        #[test]
        fn angle_orbits_are_exact_mod_one(num in 1u64..1000, den in 1001u64..5000, m in 0i128..100_000) {
            let a = Angle::from_ratio(&big(num), &big(den));
            let exact = Angle::from_ratio(&(BigInt::from(m) * big(num)), &big(den));
            let err = a.mul_int(m).sub(exact).signed_f64().abs();
            prop_assert!(err <= (m as f64 + 1.0) * 2f64.powi(-127));
        }
    }
}

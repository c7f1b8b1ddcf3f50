//! Exact geometry of the level-`n` tower over `B_n^0` and the rank-one checks.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{ratio_to_f64, Angle};
use crate::birkhoff::BirkhoffKernel;
use crate::ceiling::CeilingSpec;
use crate::error::{invalid, Error, Result};
use crate::flow::{flow_map, FlowPoint};
use crate::pairgen::{r_of, YPair};

type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

fn frac(x: &Q) -> Q {
    x - x.floor()
}

/// Rectangle on the torus: `[x0, x0 + w) x [y0, y0 + h)` mod 1 with
/// `x0, y0` in `[0, 1)` and widths in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: Q,
    pub w: Q,
    pub y0: Q,
    pub h: Q,
}

/// A non-wrapping box `[x0, x1) x [y0, y1)` inside the unit square.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub x0: Q,
    pub x1: Q,
    pub y0: Q,
    pub y1: Q,
}

fn split(a: &Q, w: &Q) -> Vec<(Q, Q)> {
    let end = a + w;
    if end <= Q::one() {
        vec![(a.clone(), end)]
    } else {
        vec![(a.clone(), Q::one()), (Q::zero(), end - Q::one())]
    }
}

fn overlap(a0: &Q, a1: &Q, b0: &Q, b1: &Q) -> Q {
    let lo = if a0 > b0 { a0 } else { b0 };
    let hi = if a1 < b1 { a1 } else { b1 };
    if hi > lo {
        hi - lo
    } else {
        Q::zero()
    }
}

impl Rect {
    pub fn new(x0: Q, w: Q, y0: Q, h: Q) -> Result<Rect> {
        let unit = Q::one();
        if !(w > Q::zero() && w <= unit && h > Q::zero() && h <= unit) {
            return invalid("rectangle widths must lie in (0, 1]");
        }
        Ok(Rect { x0: frac(&x0), w, y0: frac(&y0), h })
    }

    /// From corner coordinates `[x0, x1] x [y0, y1]`.
    pub fn from_bounds(x0: Q, x1: Q, y0: Q, y1: Q) -> Result<Rect> {
        let (w, h) = (&x1 - &x0, &y1 - &y0);
        Rect::new(x0, w, y0, h)
    }

    pub fn area(&self) -> Q {
        &self.w * &self.h
    }

    pub fn translate(&self, dx: &Q, dy: &Q) -> Rect {
        Rect { x0: frac(&(&self.x0 + dx)), w: self.w.clone(), y0: frac(&(&self.y0 + dy)), h: self.h.clone() }
    }

    /// The at most two non-wrapping pieces per axis.
    pub fn pieces(&self) -> Vec<Piece> {
        let mut out = Vec::new();
        for (x0, x1) in split(&self.x0, &self.w) {
            for (y0, y1) in split(&self.y0, &self.h) {
                out.push(Piece { x0: x0.clone(), x1: x1.clone(), y0, y1 });
            }
        }
        out
    }

    pub fn intersection_area(&self, o: &Rect) -> Q {
        let mut total = Q::zero();
        for (a0, a1) in split(&self.x0, &self.w) {
            for (b0, b1) in split(&o.x0, &o.w) {
                let dx = overlap(&a0, &a1, &b0, &b1);
                if dx.is_zero() {
                    continue;
                }
                for (c0, c1) in split(&self.y0, &self.h) {
                    for (d0, d1) in split(&o.y0, &o.h) {
                        total += &dx * overlap(&c0, &c1, &d0, &d1);
                    }
                }
            }
        }
        total
    }

    /// Closed containment of `self` in `o`, after widening `self` by `slack` on every side.
    pub fn inside(&self, o: &Rect, slack: &Q) -> bool {
        let axis = |a: &Q, w: &Q, b: &Q, v: &Q| {
            if v.is_one() {
                return w + slack + slack <= *v;
            }
            let off = frac(&(a - slack - b));
            &off + w + slack + slack <= *v
        };
        axis(&self.x0, &self.w, &o.x0, &o.w) && axis(&self.y0, &self.h, &o.y0, &o.h)
    }

    pub fn contains_point(&self, x: &Q, y: &Q) -> bool {
        frac(&(x - &self.x0)) < self.w && frac(&(y - &self.y0)) < self.h
    }

    pub fn contains_f64(&self, x: f64, y: f64) -> bool {
        let (x0, w) = (ratio_to_f64(&self.x0), ratio_to_f64(&self.w));
        let (y0, h) = (ratio_to_f64(&self.y0), ratio_to_f64(&self.h));
        (x - x0).rem_euclid(1.0) < w && (y - y0).rem_euclid(1.0) < h
    }

    /// The point at relative position `(u, v)` in `[0, 1]^2`.
    pub fn point(&self, u: &Q, v: &Q) -> (Q, Q) {
        (frac(&(&self.x0 + u * &self.w)), frac(&(&self.y0 + v * &self.h)))
    }

    pub fn to_f64(&self) -> [f64; 4] {
        [ratio_to_f64(&self.x0), ratio_to_f64(&self.w), ratio_to_f64(&self.y0), ratio_to_f64(&self.h)]
    }
}

/// `true` when no two rectangles overlap in positive area; sweeps over `x`.
pub fn pairwise_disjoint(rects: &[Rect]) -> bool {
    first_overlap(rects).is_none()
}

/// Indices of some overlapping pair, if any.
pub fn first_overlap(rects: &[Rect]) -> Option<(usize, usize)> {
    let mut pieces: Vec<(Piece, usize)> = rects.iter().enumerate().flat_map(|(i, r)| r.pieces().into_iter().map(move |p| (p, i))).collect();
    pieces.sort_by(|a, b| a.0.x0.cmp(&b.0.x0));
    // Active pieces overlap each other in x, so their y-ranges must be disjoint.
    let mut active: BTreeMap<Q, (Q, usize, usize)> = BTreeMap::new();
    let mut expiry: BinaryHeap<Reverse<(Q, Q)>> = BinaryHeap::new();
    for (k, (p, owner)) in pieces.iter().enumerate() {
        while let Some(Reverse((x1, y0))) = expiry.peek() {
            if *x1 <= p.x0 {
                active.remove(y0);
                expiry.pop();
            } else {
                break;
            }
        }
        if let Some((_, (y1, o, _))) = active.range(..=p.y0.clone()).next_back() {
            if *y1 > p.y0 {
                return Some((*o, *owner));
            }
        }
        if let Some((y0, (_, o, _))) = active.range(p.y0.clone()..).next() {
            if *y0 < p.y1 {
                return Some((*o, *owner));
            }
        }
        active.insert(p.y0.clone(), (p.y1.clone(), *owner, k));
        expiry.push(Reverse((p.x1.clone(), p.y0.clone())));
    }
    None
}

/// Level-`n` tower data with exact integer and rational entries.
#[derive(Clone, Debug)]
pub struct TowerSpec {
    pub n: usize,
    pub p: BigInt,
    pub q: BigInt,
    pub ppp: BigInt,
    pub qpp: BigInt,
    pub qp: BigInt,
    pub r: BigInt,
    pub h: BigInt,
    pub base: Rect,
    /// Dyadic values of the orbit engine, used as the exact translation.
    pub alpha: Q,
    pub alpha_p: Q,
}

impl TowerSpec {
    pub fn new(pair: &YPair, n: usize) -> Result<TowerSpec> {
        let rec = pair.level(n)?;
        if n < 3 {
            return invalid(format!("towers need n >= 3, got {n}"));
        }
        if !rec.q.gcd(&rec.q_prime_prev).is_one() {
            return Err(Error::InvalidSchedule(format!("gcd(q_{n}, q'_{}) != 1", n - 1)));
        }
        let r = r_of(&rec.q, &rec.q_prime_prev, &rec.q_prime);
        if r < BigInt::one() {
            return Err(Error::InvalidSchedule(format!("r_{n} = {r} leaves no room for a tower")));
        }
        let cells = &rec.q * &rec.q_prime_prev;
        let nb = BigInt::from(n);
        let top = (&r * (&nb - 2u32)).div_floor(&nb);
        let h = top * &cells;
        let (qb, qpb) = (rec.q.clone(), rec.q_prime.clone());
        let mk = |a: BigInt, b: BigInt| Q::new(a, b);
        let base = Rect::from_bounds(
            mk(BigInt::one(), &nb * &qb),
            mk(&nb - 1u32, &nb * &qb),
            mk(qb.clone(), &nb * &qpb),
            mk((&nb - 1u32) * &qb, &nb * &qpb),
        )?;
        Ok(TowerSpec {
            n,
            p: rec.p.clone(),
            q: rec.q.clone(),
            ppp: rec.p_prime_prev.clone(),
            qpp: rec.q_prime_prev.clone(),
            qp: rec.q_prime.clone(),
            r,
            h,
            base,
            alpha: pair.alpha_angle().to_ratio(),
            alpha_p: pair.alpha_prime_angle().to_ratio(),
        })
    }

    pub fn cells(&self) -> BigInt {
        &self.q * &self.qpp
    }

    pub fn h_i64(&self) -> Result<i64> {
        self.h.to_i64().ok_or_else(|| Error::Precision(format!("h_{} = {} does not fit", self.n, self.h)))
    }

    /// `beta_{n,j} = j / (q'_{n-1} q'_n)`.
    pub fn beta(&self, j: &BigInt) -> Q {
        Q::new(j.clone(), &self.qpp * &self.qp)
    }

    /// Error of the dyadic translation after `m` steps, with room to spare.
    pub fn slack(&self, m: &BigInt) -> Q {
        Q::new(m.abs(), BigInt::one() << 120u32)
    }

    /// `R_n^j`.
    pub fn r_rect(&self, j: &BigInt) -> Rect {
        let x0 = Q::new(j * &self.p, self.q.clone());
        let y0 = Q::new(j * &self.ppp, self.qpp.clone());
        Rect::new(x0, Q::new(BigInt::one(), self.q.clone()), y0, Q::new(BigInt::one(), self.qpp.clone())).expect("positive widths")
    }

    /// `D_n^{j + i q_n q'_{n-1}}`.
    pub fn d_rect(&self, i: &BigInt, j: &BigInt) -> Rect {
        let n2 = BigInt::from(self.n * self.n);
        let unit = Q::new(self.q.clone(), self.qp.clone());
        let x0 = Q::new(BigInt::one(), &n2 * &self.q);
        let x1 = Q::new(&n2 - 1u32, &n2 * &self.q);
        let y0 = Q::from_integer(i.clone()) * &unit + &unit / Q::from_integer(n2.clone());
        let y1 = Q::from_integer(i + 1u32) * &unit - &unit / Q::from_integer(n2);
        let d0 = Rect::from_bounds(x0, x1, y0, y1).expect("nonempty D");
        d0.translate(&Q::new(j * &self.p, self.q.clone()), &Q::new(j * &self.ppp, self.qpp.clone()))
    }

    /// `Rbar_n^j`, the `j`-th image of `Rbar_n^0` under the translation.
    pub fn rbar_rect(&self, j: &BigInt) -> Rect {
        let nb = BigInt::from(self.n);
        let r0 = Rect::from_bounds(
            Q::new(BigInt::one(), &nb * &self.q),
            Q::new(&nb - 1u32, &nb * &self.q),
            Q::zero(),
            Q::new(&nb - 1u32, &nb * &self.qpp),
        )
        .expect("nonempty Rbar");
        self.shift(&r0, j)
    }

    fn shift(&self, r: &Rect, m: &BigInt) -> Rect {
        let mq = Q::from_integer(m.clone());
        r.translate(&(&mq * &self.alpha), &(&mq * &self.alpha_p))
    }
}

/// `B_n^h`, the image of the base under `h` steps.
pub fn level_rect(spec: &TowerSpec, h: &BigInt) -> Result<Rect> {
    if h.is_negative() || *h > spec.h {
        return invalid(format!("level {h} is outside [0, {}]", spec.h));
    }
    Ok(spec.shift(&spec.base, h))
}

/// Tower data together with its rectangle families.
#[derive(Clone, Debug)]
pub struct TowerGeometry {
    pub spec: TowerSpec,
    /// `R_n^j` for `0 <= j < q_n q'_{n-1}`.
    pub r: Vec<Rect>,
    /// `Rbar_n^j` for the same `j`.
    pub rbar: Vec<Rect>,
    /// `D_n^{j + i q_n q'_{n-1}}` for `0 <= i <= r_n`, indexed `i * cells + j`.
    pub d: Vec<Rect>,
}

pub fn tower_geometry(pair: &YPair, n: usize) -> Result<TowerGeometry> {
    let spec = TowerSpec::new(pair, n)?;
    let cells = spec.cells().to_usize().ok_or_else(|| Error::InfeasibleScale(format!("q_n q'_(n-1) = {} is too large", spec.cells())))?;
    let rn = spec.r.to_usize().ok_or_else(|| Error::InfeasibleScale(format!("r_{n} = {} is too large", spec.r)))?;
    if cells.saturating_mul(rn + 1) > 5_000_000 {
        return Err(Error::InfeasibleScale(format!("{} rectangles at level {n} is beyond desk scale", cells * (rn + 1))));
    }
    let r = (0..cells).map(|j| spec.r_rect(&BigInt::from(j))).collect();
    let rbar = (0..cells).map(|j| spec.rbar_rect(&BigInt::from(j))).collect();
    let mut d = Vec::with_capacity(cells * (rn + 1));
    for i in 0..=rn {
        for j in 0..cells {
            d.push(spec.d_rect(&BigInt::from(i), &BigInt::from(j)));
        }
    }
    Ok(TowerGeometry { spec, r, rbar, d })
}

/// Results of the exact geometric checks at one level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryReport {
    pub n: usize,
    pub tiling: bool,
    pub rbar_inside: bool,
    pub translated_inclusion: bool,
    pub inclusion_samples: usize,
    pub beta_ok: bool,
    /// `h_n area(B_n^0)`.
    pub filled: f64,
    pub filled_ok: bool,
    /// `None` when the level count is beyond the sweep budget.
    pub levels_disjoint: Option<bool>,
}

impl GeometryReport {
    pub fn pass(&self) -> bool {
        self.tiling && self.rbar_inside && self.translated_inclusion && self.beta_ok && self.filled_ok && self.levels_disjoint != Some(false)
    }
}

/// Exact tiling by the `R_n^j`: areas sum to 1 and no overlaps.
pub fn check_tiling(g: &TowerGeometry) -> bool {
    let total: Q = g.r.iter().map(|r| r.area()).fold(Q::zero(), |a, b| a + b);
    total.is_one() && pairwise_disjoint(&g.r)
}

/// `T_{0,-beta_j}(B^{j + i q q'}) inside D^{j + i q q'}` for `(i, j)` in `pairs`.
pub fn check_translated_inclusion(spec: &TowerSpec, pairs: &[(u64, u64)]) -> Result<bool> {
    let cells = spec.cells();
    for &(i, j) in pairs {
        let (ib, jb) = (BigInt::from(i), BigInt::from(j));
        let m = &jb + &ib * &cells;
        let lvl = spec.shift(&spec.base, &m);
        let moved = lvl.translate(&Q::zero(), &-spec.beta(&jb));
        if !moved.inside(&spec.d_rect(&ib, &jb), &spec.slack(&m)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs every exact check; levels are swept for disjointness when there are at most `sweep_limit` of them.
pub fn geometry_report(pair: &YPair, n: usize, sweep_limit: u64, samples: usize, seed: u64) -> Result<GeometryReport> {
    let g = tower_geometry(pair, n)?;
    let s = &g.spec;
    let cells = s.cells().to_u64().unwrap_or(u64::MAX);
    let rn = s.r.to_u64().unwrap_or(0);
    let tiling = check_tiling(&g);
    let rbar_inside = g.rbar.iter().zip(&g.r).enumerate().all(|(j, (a, b))| a.inside(b, &s.slack(&BigInt::from(j))));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    if cells.saturating_mul(rn) <= samples as u64 {
        for i in 0..rn {
            for j in 0..cells {
                pairs.push((i, j));
            }
        }
    } else {
        pairs.push((0, 0));
        pairs.push((rn - 1, cells - 1));
        while pairs.len() < samples {
            pairs.push((rng.random_range(0..rn), rng.random_range(0..cells)));
        }
    }
    let translated_inclusion = check_translated_inclusion(s, &pairs)?;
    let bound = Q::new(s.q.clone(), s.qp.clone());
    let beta_ok = (0..cells.min(100_000)).all(|j| {
        let b = s.beta(&BigInt::from(j));
        b >= Q::zero() && b <= bound && (j == 0 || b > s.beta(&BigInt::from(j - 1)))
    }) && s.beta(&BigInt::from(cells - 1)) <= bound;
    let filled = ratio_to_f64(&(Q::from_integer(s.h.clone()) * s.base.area()));
    let nf = n as f64;
    let filled_ok = filled >= (1.0 - 2.0 / nf).powi(3) - 0.05 && filled <= 1.0;
    let total_levels = s.h.to_u64().unwrap_or(u64::MAX).saturating_add(1);
    let levels_disjoint = if total_levels <= sweep_limit {
        let lv: Vec<Rect> = (0..total_levels).map(|h| s.shift(&s.base, &BigInt::from(h))).collect();
        Some(pairwise_disjoint(&lv))
    } else {
        None
    };
    Ok(GeometryReport { n, tiling, rbar_inside, translated_inclusion, inclusion_samples: pairs.len(), beta_ok, filled, filled_ok, levels_disjoint })
}

/// `kappa(y - beta_j)` at `points` relative positions inside `B^{j + i q q'}`,
/// returning the largest deviation from the first value.
pub fn staircase_constancy(ceiling: &CeilingSpec, spec: &TowerSpec, i: u64, j: u64, points: usize) -> Result<f64> {
    let level = ceiling.level(spec.n)?;
    let (ib, jb) = (BigInt::from(i), BigInt::from(j));
    let m = &jb + &ib * spec.cells();
    let rect = spec.shift(&spec.base, &m);
    let beta = spec.beta(&jb);
    let side = (points as f64).sqrt().ceil() as i64;
    let mut vals = Vec::new();
    for a in 0..side {
        for b in 0..side {
            if vals.len() == points {
                break;
            }
            let (_, y) = rect.point(&q(2 * a + 1, 2 * side), &q(2 * b + 1, 2 * side));
            let yy = frac(&(y - &beta));
            vals.push(level.geom.kappa(ratio_to_f64(&yy)));
        }
    }
    Ok(vals.iter().map(|v| (v - vals[0]).abs()).fold(0.0, f64::max))
}

/// Grid sample of `B_n^0`: `grid` points per side, corners included.
pub fn base_grid(spec: &TowerSpec, grid: usize) -> (Vec<f64>, Vec<f64>) {
    let [x0, w, y0, h] = spec.base.to_f64();
    let pts = |a: f64, d: f64| -> Vec<f64> { (0..grid).map(|i| a + d * i as f64 / (grid - 1) as f64).collect() };
    (pts(x0, w), pts(y0, h))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectReport {
    pub n: usize,
    pub h: i64,
    pub grid: usize,
    /// `max_{m <= h} (max - min)` of `S_m phi` over the grid: a lower estimate.
    pub defect: f64,
    pub argmax_m: i64,
    /// Adds `2 d max|grad S_m phi|` on the grid, `d` the half-diagonal of a grid cell.
    pub upper_first_order: f64,
    /// Adds `2 d` times a global bound on `|grad S_m phi|`; rigorous.
    pub upper_rigorous: f64,
    /// Grid maximum of `S_{h-1} phi` and minimum of `S_h phi`.
    pub top_below: f64,
    pub top_above: f64,
    /// Midpoint of the gap when the grid values are separated by more than the bracket.
    pub separator: Option<f64>,
}

pub fn rank_one_defect(ceiling: &CeilingSpec, n: usize, grid: usize) -> Result<DefectReport> {
    defect_with_kernel(ceiling.kernel(), &ceiling.pair, n, grid)
}

/// The defect of the Birkhoff sums of an arbitrary polynomial over the level-`n` base.
pub fn defect_with_kernel(kernel: &BirkhoffKernel, pair: &YPair, n: usize, grid: usize) -> Result<DefectReport> {
    if grid < 2 {
        return invalid("defect grid needs at least 2 points per side");
    }
    let spec = TowerSpec::new(pair, n)?;
    let h = spec.h_i64()?;
    kernel.policy().check_iterate(h)?;
    let (xs, ys) = base_grid(&spec, grid);
    let dx = (xs[1] - xs[0]) / 2.0;
    let dy = (ys[1] - ys[0]) / 2.0;
    let d = (dx * dx + dy * dy).sqrt();
    let (mut defect, mut argmax, mut upper) = (0.0f64, 0i64, 0.0f64);
    let (mut top_below, mut top_above) = (f64::NAN, f64::NAN);
    kernel.sweep(&xs, &ys, h, true, |m, vals, grads| {
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let g = grads.iter().cloned().fold(0.0, f64::max);
        if hi - lo > defect {
            defect = hi - lo;
            argmax = m;
        }
        upper = upper.max(hi - lo + 2.0 * d * g);
        if m == h - 1 {
            top_below = hi;
        }
        if m == h {
            top_above = lo;
        }
    })?;
    if h == 1 {
        top_below = 0.0;
    }
    let rigorous = defect + 2.0 * d * kernel.gradient_bound(h);
    let gap = top_above - top_below;
    let separator = if gap > 2.0 * (upper - defect) { Some((top_above + top_below) / 2.0) } else { None };
    Ok(DefectReport { n, h, grid, defect, argmax_m: argmax, upper_first_order: upper, upper_rigorous: rigorous, top_below, top_above, separator })
}

/// Largest fraction of each level inside one atom, and the tower summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonoReport {
    pub per_level: Vec<f64>,
    /// Area-weighted share of the levels outside their dominant atom.
    pub eps: f64,
    pub worst: f64,
}

fn summarize(per_level: Vec<f64>, areas: &[f64]) -> MonoReport {
    let total: f64 = areas.iter().sum();
    let inside: f64 = per_level.iter().zip(areas).map(|(p, a)| p * a).sum();
    let worst = per_level.iter().cloned().fold(1.0, f64::min);
    MonoReport { eps: if total > 0.0 { 1.0 - inside / total } else { 0.0 }, worst, per_level }
}

/// Exact monochromaticity of base levels against a partition of the torus.
pub fn monochromaticity(levels: &[Rect], partition: &[Rect]) -> Result<MonoReport> {
    if !pairwise_disjoint(partition) {
        return invalid("partition boxes overlap");
    }
    let mut per = Vec::with_capacity(levels.len());
    let mut areas = Vec::with_capacity(levels.len());
    for l in levels {
        let a = l.area();
        let best = partition.iter().map(|p| l.intersection_area(p)).max().unwrap_or_else(Q::zero);
        per.push(ratio_to_f64(&(best / &a)));
        areas.push(ratio_to_f64(&a));
    }
    Ok(summarize(per, &areas))
}

/// Monte-Carlo version of [`monochromaticity`], with its standard errors.
pub fn monochromaticity_mc(levels: &[Rect], partition: &[Rect], samples: usize, seed: u64) -> Result<(MonoReport, Vec<f64>)> {
    if !pairwise_disjoint(partition) {
        return invalid("partition boxes overlap");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per = Vec::new();
    let mut errs = Vec::new();
    let mut areas = Vec::new();
    for l in levels {
        let [x0, w, y0, h] = l.to_f64();
        let mut counts = vec![0usize; partition.len()];
        for _ in 0..samples {
            let x = (x0 + w * rng.random::<f64>()).rem_euclid(1.0);
            let y = (y0 + h * rng.random::<f64>()).rem_euclid(1.0);
            if let Some(k) = partition.iter().position(|p| p.contains_f64(x, y)) {
                counts[k] += 1;
            }
        }
        let p = counts.iter().cloned().max().unwrap_or(0) as f64 / samples as f64;
        per.push(p);
        errs.push((p * (1.0 - p) / samples as f64).sqrt());
        areas.push(w * h);
    }
    Ok((summarize(per, &areas), errs))
}

/// A box of the flow space: a torus rectangle times `[s0, s1)`.
#[derive(Clone, Debug)]
pub struct FlowBox {
    pub rect: Rect,
    pub s0: f64,
    pub s1: f64,
}

/// Monte-Carlo monochromaticity of the horizontal levels `Phi_t(B x {0})`.
pub fn flow_monochromaticity(
    ceiling: &CeilingSpec,
    base: &Rect,
    times: &[f64],
    partition: &[FlowBox],
    samples: usize,
    seed: u64,
) -> Result<MonoReport> {
    let [x0, w, y0, h] = base.to_f64();
    let mut per = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ti as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut counts = vec![0usize; partition.len()];
        for _ in 0..samples {
            let x = (x0 + w * rng.random::<f64>()).rem_euclid(1.0);
            let y = (y0 + h * rng.random::<f64>()).rem_euclid(1.0);
            let p = flow_map(ceiling, FlowPoint::new(x, y, 0.0), t)?;
            if let Some(k) = partition.iter().position(|b| b.rect.contains_f64(p.x, p.y) && p.s >= b.s0 && p.s < b.s1) {
                counts[k] += 1;
            }
        }
        per.push(counts.iter().cloned().max().unwrap_or(0) as f64 / samples as f64);
    }
    let areas = vec![1.0; per.len()];
    Ok(summarize(per, &areas))
}

/// Translation by `m` steps of the orbit engine, for callers holding exact points.
pub fn orbit_angle(pair: &YPair, m: i64) -> (Angle, Angle) {
    (pair.alpha_angle().mul_int(m as i128), pair.alpha_prime_angle().mul_int(m as i128))
}

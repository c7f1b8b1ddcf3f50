//! Real trigonometric polynomials on the two-torus.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};

/// One coefficient `c` of `e^{2 pi i (l x + k y)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub l: i64,
    pub k: i64,
    pub c: Complex64,
}

/// A hermitian polynomial stored on the half plane `l > 0` or `l = 0, k > 0`;
/// the conjugate half is implied, so evaluation is real.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigPolynomial {
    constant: f64,
    /// Sorted by `(l, k)`.
    terms: Vec<Term>,
}

/// `true` for the stored half plane.
pub fn in_half_plane(l: i64, k: i64) -> bool {
    l > 0 || (l == 0 && k > 0)
}

pub fn cis(turns: f64) -> Complex64 {
    let (s, c) = (TAU * turns).sin_cos();
    Complex64::new(c, s)
}

impl TrigPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        TrigPolynomial { constant: c, terms: Vec::new() }
    }

    /// From half-plane terms; duplicates are summed and exact zeros dropped.
    pub fn from_half(constant: f64, terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let mut map: BTreeMap<(i64, i64), Complex64> = BTreeMap::new();
        for t in terms {
            if !in_half_plane(t.l, t.k) {
                return invalid(format!("term ({},{}) is outside the stored half plane", t.l, t.k));
            }
            if !(t.c.re.is_finite() && t.c.im.is_finite()) {
                return invalid(format!("non-finite coefficient at ({},{})", t.l, t.k));
            }
            *map.entry((t.l, t.k)).or_default() += t.c;
        }
        let terms = map
            .into_iter()
            .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
            .map(|((l, k), c)| Term { l, k, c })
            .collect();
        Ok(TrigPolynomial { constant, terms })
    }

    /// From a full coefficient map; fails unless `c(-l,-k) = conj c(l,k)` within `tol`.
    pub fn from_full(coeffs: &BTreeMap<(i64, i64), Complex64>, tol: f64) -> Result<Self> {
        let mut half = Vec::new();
        let mut constant = 0.0;
        for (&(l, k), &c) in coeffs {
            let mirror = coeffs.get(&(-l, -k)).copied().unwrap_or_default();
            if (c - mirror.conj()).norm() > tol {
                return invalid(format!("coefficients at ({l},{k}) and ({},{}) are not conjugate", -l, -k));
            }
            if l == 0 && k == 0 {
                if c.im.abs() > tol {
                    return invalid("constant coefficient is not real");
                }
                constant = c.re;
            } else if in_half_plane(l, k) {
                half.push(Term { l, k, c });
            }
        }
        Self::from_half(constant, half)
    }

    pub fn hermitian(&self) -> bool {
        true
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn set_constant(&mut self, c: f64) {
        self.constant = c;
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of stored (half-plane) frequencies.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, l: i64, k: i64) -> Complex64 {
        if l == 0 && k == 0 {
            return Complex64::new(self.constant, 0.0);
        }
        let (ll, kk, conj) = if in_half_plane(l, k) { (l, k, false) } else { (-l, -k, true) };
        match self.terms.binary_search_by(|t| (t.l, t.k).cmp(&(ll, kk))) {
            Ok(i) if conj => self.terms[i].c.conj(),
            Ok(i) => self.terms[i].c,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Largest `|l|` and `|k|` in the support.
    pub fn max_freq(&self) -> (i64, i64) {
        let l = self.terms.iter().map(|t| t.l.abs()).max().unwrap_or(0);
        let k = self.terms.iter().map(|t| t.k.abs()).max().unwrap_or(0);
        (l, k)
    }

    /// Sum of `|c|` over all nonconstant frequencies (both halves).
    pub fn l1_nonconstant(&self) -> f64 {
        2.0 * self.terms.iter().map(|t| t.c.norm()).sum::<f64>()
    }

    /// `sum |c| |2 pi (l,k)|^p` over both halves: bounds the `p`-th directional derivative.
    pub fn derivative_bound(&self, p: i32) -> f64 {
        2.0 * self
            .terms
            .iter()
            .map(|t| t.c.norm() * (TAU * ((t.l * t.l + t.k * t.k) as f64).sqrt()).powi(p))
            .sum::<f64>()
    }

    pub fn add(&self, other: &TrigPolynomial) -> TrigPolynomial {
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.terms, &other.terms);
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => (x.l, x.k).cmp(&(y.l, y.k)),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(Term { c: a[i].c + b[j].c, ..a[i] });
                    i += 1;
                    j += 1;
                }
            }
        }
        TrigPolynomial { constant: self.constant + other.constant, terms: out }
    }

    pub fn scale(&self, s: f64) -> TrigPolynomial {
        TrigPolynomial {
            constant: self.constant * s,
            terms: self.terms.iter().map(|t| Term { c: t.c * s, ..*t }).collect(),
        }
    }

    /// Drops terms with `|c| < tol`.
    pub fn prune(&self, tol: f64) -> TrigPolynomial {
        TrigPolynomial {
            constant: self.constant,
            terms: self.terms.iter().copied().filter(|t| t.c.norm() >= tol).collect(),
        }
    }

    /// Groups of equal `l` as index ranges into `terms`.
    pub(crate) fn l_groups(&self) -> Vec<(i64, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.terms.len() {
            if i == self.terms.len() || self.terms[i].l != self.terms[start].l {
                out.push((self.terms[start].l, start..i));
                start = i;
            }
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_deriv(x, y, 0, 0)
    }

    /// `D_x^ox D_y^oy` of the polynomial at `(x, y)`.
    pub fn eval_deriv(&self, x: f64, y: f64, ox: u32, oy: u32) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let (_, kmax) = self.max_freq();
        let ey = PowerTable::new(y, kmax);
        for (l, range) in self.l_groups() {
            let mut inner = Complex64::new(0.0, 0.0);
            for t in &self.terms[range] {
                let mut c = t.c * ey.get(t.k);
                if oy > 0 {
                    c *= Complex64::new(0.0, TAU * t.k as f64).powu(oy);
                }
                inner += c;
            }
            let mut w = cis(frac_mul(l, x));
            if ox > 0 {
                w *= Complex64::new(0.0, TAU * l as f64).powu(ox);
            }
            acc += inner * w;
        }
        let base = if ox == 0 && oy == 0 { self.constant } else { 0.0 };
        base + 2.0 * acc.re
    }

    /// Sum over both halves in complex arithmetic; the imaginary part is rounding noise.
    pub fn eval_complex(&self, x: f64, y: f64) -> Complex64 {
        let mut acc = Complex64::new(self.constant, 0.0);
        for t in &self.terms {
            let e = cis(frac_mul(t.l, x) + frac_mul(t.k, y));
            acc += t.c * e + t.c.conj() * e.conj();
        }
        acc
    }

    /// Values on the grid `(u/m, v/m)`, row-major in `v`: `out[v*m + u]`.
    /// `m` must exceed twice the largest frequency.
    pub fn eval_grid(&self, m: usize) -> Result<Vec<f64>> {
        let (lmax, kmax) = self.max_freq();
        if (2 * lmax.max(kmax)) as usize >= m {
            return invalid(format!("grid {m} too small for frequencies up to {}", lmax.max(kmax)));
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(m);
        let groups = self.l_groups();
        let mut out = vec![self.constant; m * m];
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(groups.len());
        // One inverse FFT along y per distinct l.
        for (_, range) in &groups {
            col.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for t in &self.terms[range.clone()] {
                col[t.k.rem_euclid(m as i64) as usize] += t.c;
            }
            fft.process(&mut col);
            rows.push(col.clone());
        }
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for v in 0..m {
            line.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (g, (l, _)) in groups.iter().enumerate() {
                line[*l as usize] += rows[g][v];
            }
            fft.process(&mut line);
            for u in 0..m {
                out[v * m + u] += 2.0 * line[u].re;
            }
        }
        Ok(out)
    }
}

/// `frac(k x)` without forming a large product when `x` is near an integer.
pub fn frac_mul(k: i64, x: f64) -> f64 {
    let xf = x - x.floor();
    let v = k as f64 * xf;
    v - v.floor()
}

/// `e^{2 pi i k y}` for `|k| <= kmax`.
pub struct PowerTable {
    kmax: i64,
    vals: Vec<Complex64>,
}

impl PowerTable {
    pub fn new(y: f64, kmax: i64) -> Self {
        let vals = (0..=kmax).map(|k| cis(frac_mul(k, y))).collect();
        PowerTable { kmax, vals }
    }

    #[inline]
    pub fn get(&self, k: i64) -> Complex64 {
        debug_assert!(k.abs() <= self.kmax);
        if k >= 0 {
            self.vals[k as usize]
        } else {
            self.vals[(-k) as usize].conj()
        }
    }
}

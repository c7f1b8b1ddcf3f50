//! The smooth step `theta(s) = f(s)/(f(s)+f(1-s))`, `f(s) = exp(-1/s)`.

use std::sync::OnceLock;

/// Highest derivative order tabulated.
pub const MAX_ORDER: usize = 6;

pub fn bump(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

/// Truncated power series: `c[k]` is the coefficient of `t^k`.
#[derive(Clone, Copy, Debug)]
struct Jet([f64; MAX_ORDER + 1]);

impl Jet {
    fn var(x: f64) -> Jet {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = x;
        c[1] = 1.0;
        Jet(c)
    }

    fn constant(x: f64) -> Jet {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = x;
        Jet(c)
    }

    fn add(self, o: Jet) -> Jet {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(o.0) {
            *a += b;
        }
        Jet(c)
    }

    fn sub(self, o: Jet) -> Jet {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(o.0) {
            *a -= b;
        }
        Jet(c)
    }

    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; MAX_ORDER + 1];
        for i in 0..=MAX_ORDER {
            for j in 0..=MAX_ORDER - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }

    fn recip(self) -> Jet {
        let a0 = self.0[0];
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = 1.0 / a0;
        for k in 1..=MAX_ORDER {
            let mut s = 0.0;
            for i in 1..=k {
                s += self.0[i] * c[k - i];
            }
            c[k] = -s / a0;
        }
        Jet(c)
    }

    fn exp(self) -> Jet {
        // e' = a' e, solved coefficient by coefficient.
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = self.0[0].exp();
        for k in 1..=MAX_ORDER {
            let mut s = 0.0;
            for i in 1..=k {
                s += i as f64 * self.0[i] * c[k - i];
            }
            c[k] = s / k as f64;
        }
        Jet(c)
    }
}

/// Derivatives `theta^(k)(s)` for `k = 0..=MAX_ORDER`.
pub fn bump_derivatives(s: f64) -> [f64; MAX_ORDER + 1] {
    let mut out = [0.0; MAX_ORDER + 1];
    if s <= 0.0 {
        return out;
    }
    if s >= 1.0 {
        out[0] = 1.0;
        return out;
    }
    if s > 0.5 {
        // theta(s) = 1 - theta(1 - s) keeps the right end free of cancellation.
        let m = bump_derivatives(1.0 - s);
        out[0] = 1.0 - m[0];
        for k in 1..=MAX_ORDER {
            out[k] = if k % 2 == 1 { m[k] } else { -m[k] };
        }
        return out;
    }
    let t = Jet::var(s);
    let one = Jet::constant(1.0);
    let a = t.recip().mul(Jet::constant(-1.0)).exp();
    let b = one.sub(t).recip().mul(Jet::constant(-1.0)).exp();
    let th = a.mul(a.add(b).recip());
    let mut fact = 1.0;
    for k in 0..=MAX_ORDER {
        if k > 0 {
            fact *= k as f64;
        }
        out[k] = th.0[k] * fact;
    }
    out
}

/// `sup |theta^(p)|` for `p = 0..=MAX_ORDER`, from a fine scan plus local refinement.
pub fn derivative_norms() -> &'static [f64; MAX_ORDER + 1] {
    static TABLE: OnceLock<[f64; MAX_ORDER + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = 20_000;
        let mut best = [0.0f64; MAX_ORDER + 1];
        let mut arg = [0.0f64; MAX_ORDER + 1];
        for i in 1..n {
            let s = i as f64 / n as f64;
            let d = bump_derivatives(s);
            for k in 0..=MAX_ORDER {
                if d[k].abs() > best[k] {
                    best[k] = d[k].abs();
                    arg[k] = s;
                }
            }
        }
        for k in 1..=MAX_ORDER {
            let (mut lo, mut hi) = ((arg[k] - 1.0 / n as f64).max(0.0), (arg[k] + 1.0 / n as f64).min(1.0));
            for _ in 0..80 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if bump_derivatives(m1)[k].abs() < bump_derivatives(m2)[k].abs() {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            best[k] = best[k].max(bump_derivatives(0.5 * (lo + hi))[k].abs());
        }
        best[0] = 1.0;
        best
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plateaus_and_midpoint() {
        assert_eq!(bump(-1.0), 0.0);
        assert_eq!(bump(0.0), 0.0);
        assert_eq!(bump(2.0), 1.0);
        assert_eq!(bump(1.0), 1.0);
        assert_eq!(bump(0.5), 0.5);
    }

    #[test]
    fn jet_matches_finite_differences() {
        for &s in &[0.2, 0.37, 0.5, 0.81] {
            let d = bump_derivatives(s);
            let h = 1e-5;
            let fd1 = (bump(s + h) - bump(s - h)) / (2.0 * h);
            let fd2 = (bump(s + h) - 2.0 * bump(s) + bump(s - h)) / (h * h);
            assert!((d[0] - bump(s)).abs() < 1e-15);
            assert!((d[1] - fd1).abs() < 1e-7 * (1.0 + fd1.abs()));
            assert!((d[2] - fd2).abs() < 1e-3 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn derivatives_vanish_at_the_ends() {
        for k in 1..=MAX_ORDER {
            assert!(bump_derivatives(1e-3)[k].abs() < 1e-200);
            assert!(bump_derivatives(1.0 - 1e-3)[k].abs() < 1e-200);
        }
    }

    #[test]
    fn norm_table_is_sane() {
        let t = derivative_norms();
        assert_eq!(t[0], 1.0);
        // theta'(1/2) is a lower bound for the sup.
        assert!(t[1] >= bump_derivatives(0.5)[1]);
        assert!(t.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    proptest! {
        #[test]
        fn monotone_and_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(bump(lo) <= bump(hi));
            prop_assert!((bump(a) + bump(1.0 - a) - 1.0).abs() < 1e-15);
        }
    }
}

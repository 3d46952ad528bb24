use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;
const FINITE_PANELS: usize = 16;
const MAX_DOUBLINGS: u32 = 1100;

/// Upper integration limit. For `Infinite`, `tail_bound(T)` must bound
/// `|∫_T^∞ f|` from above.
pub enum Upper<'a> {
    Finite(f64),
    Infinite { tail_bound: &'a dyn Fn(f64) -> f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Estimated absolute error, including any truncated tail.
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    value: f64,
    error: f64,
    exhausted: bool,
}

struct Simpson<'f, F> {
    f: &'f F,
    evaluations: usize,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evaluations += 1;
        (self.f)(x)
    }

    fn panel(&mut self, a: f64, b: f64, tol: f64) -> Panel {
        let fa = self.eval(a);
        let fb = self.eval(b);
        let m = 0.5 * (a + b);
        let fm = self.eval(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let mut out = Panel {
            value: 0.0,
            error: 0.0,
            exhausted: false,
        };
        self.refine(a, b, fa, fm, fb, whole, tol, 0, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        out: &mut Panel,
    ) {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // Below this the bisection agreement is rounding noise.
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let converged = delta.abs() <= 15.0 * tol.max(floor);
        let stuck = depth >= MAX_DEPTH || lm <= a || rm >= b;
        if converged || stuck || !delta.is_finite() {
            out.value += left + right + delta / 15.0;
            out.error += delta.abs() / 15.0;
            out.exhausted |= stuck && !converged;
            return;
        }
        self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, out);
        self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, out);
    }
}

/// Adaptive Simpson quadrature of `f` over `[lo, hi]` to absolute tolerance
/// `tol`, with the error estimated from bisection agreement (Richardson).
///
/// A finite range is split into 16 equal panels before refinement. An
/// infinite range is cut at the first `T = lo + 2^k` whose tail bound is
/// below `tol / 2`, and `[lo, T]` is covered by doubling panels
/// `[lo, lo+1], [lo+1, lo+2], [lo+2, lo+4], ...`.
///
/// Fails with a numeric error carrying the best estimate when the
/// subdivision limit is hit and the accumulated error exceeds `tol`.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: Upper<'_>,
    tol: f64,
) -> Result<Quadrature> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if !lo.is_finite() {
        return Err(Error::Domain(format!("lower limit must be finite, got {lo}")));
    }
    let mut simpson = Simpson {
        f: &f,
        evaluations: 0,
    };
    let mut edges = vec![lo];
    let mut tail = 0.0;
    let panel_tol;
    match hi {
        Upper::Finite(hi) => {
            if !hi.is_finite() {
                return Err(Error::Domain("use Upper::Infinite for an infinite limit".into()));
            }
            if hi == lo {
                return Ok(Quadrature {
                    value: 0.0,
                    error: 0.0,
                    evaluations: 0,
                });
            }
            let width = (hi - lo) / FINITE_PANELS as f64;
            edges.extend((1..FINITE_PANELS).map(|i| lo + i as f64 * width));
            edges.push(hi);
            panel_tol = tol / FINITE_PANELS as f64;
        }
        Upper::Infinite { tail_bound } => {
            let mut span = 1.0f64;
            let mut k = 0;
            loop {
                let t = tail_bound(lo + span);
                if t.is_finite() && t.abs() < 0.5 * tol {
                    tail = t.abs();
                    break;
                }
                k += 1;
                if k > MAX_DOUBLINGS {
                    return Err(Error::quadrature("tail bound never fell below tol/2", f64::NAN, f64::INFINITY));
                }
                span *= 2.0;
            }
            let mut s = 1.0;
            edges.push(lo + s);
            while s < span {
                s *= 2.0;
                edges.push(lo + s);
            }
            panel_tol = 0.5 * tol / (edges.len() - 1) as f64;
        }
    }

    let mut value = 0.0;
    let mut error = tail;
    let mut exhausted = false;
    for w in edges.windows(2) {
        let p = simpson.panel(w[0], w[1], panel_tol);
        value += p.value;
        error += p.error;
        exhausted |= p.exhausted;
    }
    if !value.is_finite() {
        return Err(Error::quadrature("integrand produced a non-finite sum", value, f64::INFINITY));
    }
    if exhausted && error > tol {
        return Err(Error::quadrature(
            format!("subdivision limit reached with error {error:e} > {tol:e}"),
            value,
            error,
        ));
    }
    Ok(Quadrature {
        value,
        error,
        evaluations: simpson.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
        integrate_adaptive(f, lo, Upper::Finite(hi), tol).unwrap().value
    }

    #[test]
    fn constant_integrand() {
        assert_eq!(finite(|_| 1.0, 0.0, 1.0, 1e-12), 1.0);
        assert_eq!(finite(|_| 1.0, 2.0, 2.0, 1e-12), 0.0);
    }

    #[test]
    fn gaussian_kernel_against_antiderivative() {
        let v = finite(|u| u * (-u * u / 2.0).exp(), 0.0, 1.0, 1e-12);
        let exact = 1.0 - (-0.5f64).exp();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn infinite_range_with_tail_bound() {
        // ∫_0^∞ e^{-t} dt = 1, tail bound e^{-T}.
        let tail = |t: f64| (-t).exp();
        let q = integrate_adaptive(|t| (-t).exp(), 0.0, Upper::Infinite { tail_bound: &tail }, 1e-10).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
        assert!(q.error <= 1e-10);
        // ∫_1^∞ t^-2 dt = 1, tail bound 1/T.
        let tail = |t: f64| 1.0 / t;
        let q = integrate_adaptive(|t| 1.0 / (t * t), 1.0, Upper::Infinite { tail_bound: &tail }, 1e-8).unwrap();
        assert!((q.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reports_failure_on_non_integrable_spike() {
        let err = integrate_adaptive(|x: f64| 1.0 / x.abs(), -1.0, Upper::Finite(1.0), 1e-10);
        assert!(matches!(err, Err(Error::Numeric { .. })));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(integrate_adaptive(|x| x, 0.0, Upper::Finite(1.0), 0.0).is_err());
        assert!(integrate_adaptive(|x| x, 0.0, Upper::Finite(f64::INFINITY), 1e-6).is_err());
        let never = |_: f64| 1.0;
        assert!(integrate_adaptive(|x| x, 0.0, Upper::Infinite { tail_bound: &never }, 1e-6).is_err());
    }

    proptest! {
        #[test]
        fn additivity_over_adjacent_ranges(lo in -3.0f64..0.0, mid in 0.0f64..2.0, w in 0.1f64..3.0) {
            let f = |x: f64| (1.3 * x).sin() * (-0.2 * x * x).exp() + 0.5;
            let tol = 1e-9;
            let hi = mid + w;
            let whole = finite(f, lo, hi, tol);
            let parts = finite(f, lo, mid, tol) + finite(f, mid, hi, tol);
            prop_assert!((whole - parts).abs() <= 2.0 * tol);
        }
    }
}

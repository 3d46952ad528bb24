//! Sub-grid monitoring of Brownian paths near a level: Brownian-bridge
//! subdivision of individual steps, and walk-on-spheres for "does 3-D BM ever
//! enter this ball".
//!
//! Midpoints are drawn from the exact bridge law given the endpoints, so the
//! refined path has the same law as one simulated on the finer grid.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Bridge-crossing probabilities below `exp(-NEGLIGIBLE_EXPONENT)`, about
/// `1e-12`, are treated as zero.
pub(crate) const NEGLIGIBLE_EXPONENT: f64 = 27.6;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// First passage of a 1-D BM to `level` inside a step of length `h` from `a`
/// (above `level`) to `b`, subdividing until steps are at most `fine_dt`.
///
/// On the finest steps a crossing is the endpoint reaching `level` (time by
/// linear interpolation) or, with `bridge`, a bridge crossing drawn with its
/// exact probability (time at the step midpoint). Interior samples that stay
/// above `level` lower `min_seen`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn first_passage(
    t0: f64,
    h: f64,
    a: f64,
    b: f64,
    level: f64,
    fine_dt: f64,
    bridge: bool,
    rng: &mut ChaCha8Rng,
    min_seen: &mut f64,
) -> Option<f64> {
    if b > level {
        let e = 2.0 * (a - level) * (b - level) / h;
        if e > NEGLIGIBLE_EXPONENT {
            return None;
        }
        if h <= fine_dt {
            return (bridge && rng.random::<f64>() < (-e).exp()).then_some(t0 + 0.5 * h);
        }
    } else if h <= fine_dt {
        return Some((t0 + h * (a - level) / (a - b)).min(t0 + h));
    }
    let half = 0.5 * h;
    let c = 0.5 * (a + b) + half.sqrt() * 0.5f64.sqrt() * normal(rng);
    if let Some(g) = first_passage(t0, half, a, c, level, fine_dt, bridge, rng, min_seen) {
        return Some(g);
    }
    *min_seen = min_seen.min(c);
    first_passage(t0 + half, half, c, b, level, fine_dt, bridge, rng, min_seen)
}

fn norm(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Running minimum of `|W|` for 3-D BM, tracked through the interior of a
/// step from `xa` to `xb`.
pub(crate) struct NormMin {
    pub value: f64,
    pub time: f64,
    pub fine_dt: f64,
}

impl NormMin {
    /// Visits interior bridge points of the step in time order wherever the
    /// norm may fall to the current minimum; ties move the time later.
    pub(crate) fn scan_step(&mut self, t0: f64, h: f64, xa: [f64; 3], xb: [f64; 3], rng: &mut ChaCha8Rng) {
        if h <= self.fine_dt {
            return;
        }
        let ra = norm(&xa);
        // |W| <= m forces the projection on xa/|xa| below m, a 1-D bridge.
        let proj_b = (xa[0] * xb[0] + xa[1] * xb[1] + xa[2] * xb[2]) / ra;
        if proj_b > self.value && 2.0 * (ra - self.value) * (proj_b - self.value) > NEGLIGIBLE_EXPONENT * h {
            return;
        }
        let half = 0.5 * h;
        let sd = 0.5 * h.sqrt();
        let mid = [
            0.5 * (xa[0] + xb[0]) + sd * normal(rng),
            0.5 * (xa[1] + xb[1]) + sd * normal(rng),
            0.5 * (xa[2] + xb[2]) + sd * normal(rng),
        ];
        self.scan_step(t0, half, xa, mid, rng);
        let rm = norm(&mid);
        if rm <= self.value {
            self.value = rm;
            self.time = t0 + half;
        }
        self.scan_step(t0 + half, half, mid, xb, rng);
    }
}

/// Whether 3-D BM from `x` ever enters the closed ball of radius `level`
/// about the origin. Exact up to a relative boundary layer of `1e-12` and a
/// miss probability below `1e-10` for paths declared escaped.
pub(crate) fn ever_enters_ball(mut x: [f64; 3], level: f64, rng: &mut ChaCha8Rng) -> bool {
    let mut rho = norm(&x);
    let far = 1e10 * level;
    for _ in 0..100_000 {
        let d = rho - level;
        if d <= 1e-12 * level {
            return true;
        }
        if rho >= far {
            return false;
        }
        let u = [normal(rng), normal(rng), normal(rng)];
        let nu = norm(&u);
        for (xk, uk) in x.iter_mut().zip(u) {
            *xk += d * uk / nu;
        }
        rho = norm(&x);
    }
    false
}

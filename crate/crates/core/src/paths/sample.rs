use std::sync::Arc;

use super::grid::TimeGrid;
use super::stream::{gaussian_increments, StreamId};
use super::{Path, ProcessKind, ProcessParams};
use crate::error::{Error, Result};
use crate::williams;

/// Positivity floor applied after each Euler step of the Bessel SDE.
pub const BESSEL_FLOOR: f64 = 1e-8;

/// Standard BM from 0 on `grid`, accumulated step by step.
fn standard_bm(grid: &TimeGrid, stream: StreamId, start: f64) -> Vec<f64> {
    let inc = gaussian_increments(grid, stream, 1);
    let mut values = Vec::with_capacity(grid.len());
    let mut x = start;
    values.push(x);
    for d in inc {
        x += d;
        values.push(x);
    }
    values
}

/// `X_t = x0 + B_t`. `sigma` and `drift_a` are ignored.
pub fn sample_bm(grid: &Arc<TimeGrid>, params: &ProcessParams, stream: StreamId) -> Result<Path> {
    Path::new(grid.clone(), standard_bm(grid, stream, params.x0))
}

/// `X_t = x0 + sigma * B_t + a * t`.
pub fn sample_bm_drift(
    grid: &Arc<TimeGrid>,
    params: &ProcessParams,
    stream: StreamId,
) -> Result<Path> {
    params.validate()?;
    let inc = gaussian_increments(grid, stream, 1);
    let mut values = Vec::with_capacity(grid.len());
    let mut x = params.x0;
    values.push(x);
    for (i, d) in inc.into_iter().enumerate() {
        x = x + params.sigma * d + params.drift_a * grid.step(i);
        values.push(x);
    }
    Path::new(grid.clone(), values)
}

/// `X*_t = x0 + sigma * t * B_t + a * t`, with `B` the standard BM this stream
/// gives [`sample_bm`] from 0. Proportional increments need `x0 = 0`.
pub fn sample_tbt(grid: &Arc<TimeGrid>, params: &ProcessParams, stream: StreamId) -> Result<Path> {
    params.validate()?;
    let b = standard_bm(grid, stream, 0.0);
    let values = grid
        .times()
        .iter()
        .zip(b)
        .map(|(&t, b)| params.x0 + params.sigma * t * b + params.drift_a * t)
        .collect();
    Path::new(grid.clone(), values)
}

/// `|| (r0, 0, ..., 0) + W_t ||` for `n`-dimensional standard BM `W`. Exact in
/// law at the grid times.
pub fn sample_bes_norm(
    grid: &Arc<TimeGrid>,
    params: &ProcessParams,
    stream: StreamId,
) -> Result<Path> {
    params.validate()?;
    let n = params.dim_n as usize;
    let inc = gaussian_increments(grid, stream, n);
    let mut w = vec![0.0; n];
    w[0] = params.r0;
    let mut values = Vec::with_capacity(grid.len());
    values.push(params.r0);
    for step in inc.chunks_exact(n) {
        let mut sq = 0.0;
        for (coord, d) in w.iter_mut().zip(step) {
            *coord += d;
            sq += *coord * *coord;
        }
        values.push(sq.sqrt());
    }
    Path::new(grid.clone(), values)
}

/// Euler-Maruyama for `dX = dB + ((n-1)/2) dt / X` from `r0 > 0` on a uniform
/// grid, with the [`BESSEL_FLOOR`] applied after every step.
pub fn sample_bes_sde(
    grid: &Arc<TimeGrid>,
    params: &ProcessParams,
    stream: StreamId,
) -> Result<Path> {
    params.validate()?;
    let inc = gaussian_increments(grid, stream, 1);
    let values = euler_bessel(grid, params.dim_n, params.r0, &inc)?;
    Path::new(grid.clone(), values)
}

/// The Bessel Euler scheme driven by caller-supplied Brownian increments.
pub fn euler_bessel(grid: &TimeGrid, dim_n: u32, r0: f64, increments: &[f64]) -> Result<Vec<f64>> {
    if !(r0 > 0.0) {
        return Err(Error::Parameter(format!(
            "Bessel SDE needs r0 > 0 (drift is singular at 0), got {r0}"
        )));
    }
    if dim_n < 1 {
        return Err(Error::Parameter("dim_n must be >= 1".into()));
    }
    let dt = grid
        .uniform_step()
        .ok_or_else(|| Error::Grid("Bessel SDE scheme needs a uniform grid".into()))?;
    if increments.len() != grid.len() - 1 {
        return Err(Error::Shape(format!(
            "{} increments for {} grid steps",
            increments.len(),
            grid.len() - 1
        )));
    }
    let c = (f64::from(dim_n) - 1.0) / 2.0;
    let mut x = r0;
    let mut values = Vec::with_capacity(grid.len());
    values.push(x);
    for (i, &d) in increments.iter().enumerate() {
        x = x + d + c * (dt / x);
        if !x.is_finite() {
            return Err(Error::numeric_step("Bessel Euler step produced a non-finite value", i + 1));
        }
        x = x.max(BESSEL_FLOOR);
        values.push(x);
    }
    Ok(values)
}

/// Dispatches to the generator for `kind`.
pub fn sample(
    kind: ProcessKind,
    grid: &Arc<TimeGrid>,
    params: &ProcessParams,
    stream: StreamId,
) -> Result<Path> {
    match kind {
        ProcessKind::Bm => sample_bm(grid, params, stream),
        ProcessKind::BmDrift => sample_bm_drift(grid, params, stream),
        ProcessKind::Tbt => sample_tbt(grid, params, stream),
        ProcessKind::BesNorm => sample_bes_norm(grid, params, stream),
        ProcessKind::BesSde => sample_bes_sde(grid, params, stream),
        ProcessKind::Williams => match williams::construct_williams(params.r0, grid, stream) {
            Ok(w) => Ok(w.path),
            Err(Error::Truncated(w)) => Ok(w.path),
            Err(e) => Err(e),
        },
        other => Err(Error::Parameter(format!("{other:?} has no generator"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(times: &[f64]) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::explicit(times.to_vec()).unwrap())
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn bm_starts_at_x0_and_shifts_additively() {
        let g = grid(&[0.0, 0.5, 1.0, 3.0]);
        let s = StreamId::new(11, 2);
        let zero = sample_bm(&g, &ProcessParams::bm(0.0), s).unwrap();
        let five = sample_bm(&g, &ProcessParams::bm(5.0), s).unwrap();
        assert_eq!(zero.values()[0], 0.0);
        assert_eq!(five.values()[0], 5.0);
        for (a, b) in zero.values().iter().zip(five.values()) {
            assert!((a + 5.0 - b).abs() <= 1e-12, "{a} + 5 vs {b}");
        }
    }

    #[test]
    fn bm_variance_at_t2() {
        let g = grid(&[0.0, 1.0, 2.0]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| sample_bm(&g, &ProcessParams::bm(0.0), StreamId::new(1, i)).unwrap().values()[2])
            .collect();
        let (_, v) = mean_var(&xs);
        // SE of the sample variance of N(0, 2) is 2 * sqrt(2 / (n - 1)).
        let se = 2.0 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((v - 2.0).abs() < 3.0 * se, "var {v}");
    }

    #[test]
    fn deterministic_drift_line() {
        let g = grid(&[0.0, 1.0, 2.0]);
        let p = sample_bm_drift(&g, &ProcessParams::drifted(0.0, 1.0, 0.0), StreamId::new(3, 3)).unwrap();
        assert_eq!(p.values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn drift_reduces_to_bm() {
        let g = grid(&[0.0, 0.1, 0.7, 2.0]);
        let s = StreamId::new(4, 9);
        let bm = sample_bm(&g, &ProcessParams::bm(0.3), s).unwrap();
        let dr = sample_bm_drift(&g, &ProcessParams::drifted(0.3, 0.0, 1.0), s).unwrap();
        assert_eq!(bm, dr);
    }

    #[test]
    fn drift_rejects_negative_sigma() {
        let g = grid(&[0.0, 1.0]);
        assert!(matches!(
            sample_bm_drift(&g, &ProcessParams::drifted(0.0, 0.0, -1.0), StreamId::new(0, 0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn drift_mean_at_t3() {
        let g = grid(&[0.0, 3.0]);
        let n = 100_000;
        let params = ProcessParams::drifted(0.0, 2.0, 1.0);
        let xs: Vec<f64> = (0..n)
            .map(|i| sample_bm_drift(&g, &params, StreamId::new(5, i)).unwrap().values()[1])
            .collect();
        let (m, _) = mean_var(&xs);
        let se = 3f64.sqrt() / (n as f64).sqrt();
        assert!((m - 6.0).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn tbt_is_lifted_bm() {
        let g = grid(&[0.0, 0.25, 1.0, 1.5]);
        let s = StreamId::new(8, 1);
        let bm = sample_bm(&g, &ProcessParams::bm(0.0), s).unwrap();
        let tbt = sample_tbt(&g, &ProcessParams::drifted(0.0, 0.0, 1.0), s).unwrap();
        assert_eq!(tbt.values()[0], 0.0);
        for ((t, b), n) in g.times().iter().zip(bm.values()).zip(tbt.values()) {
            assert_eq!(*n, t * b);
            if *t > 0.0 {
                assert!((n / t - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
        let shifted = sample_tbt(&g, &ProcessParams::drifted(2.5, 0.0, 1.0), s).unwrap();
        assert_eq!(shifted.values()[0], 2.5);
    }

    #[test]
    fn tbt_residual_uncorrelated_with_value() {
        let g = grid(&[0.0, 1.0, 1.5]);
        let params = ProcessParams::drifted(0.0, 0.0, 1.0);
        let n = 100_000;
        let (mut sx, mut sd, mut sxd, mut sxd2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let p = sample_tbt(&g, &params, StreamId::new(6, i)).unwrap();
            let v = p.values();
            let d = v[2] - v[1] - 0.5 * v[1];
            sx += v[1];
            sd += d;
            sxd += v[1] * d;
            sxd2 += (v[1] * d).powi(2);
        }
        let nf = n as f64;
        let cov = sxd / nf - (sx / nf) * (sd / nf);
        let se = ((sxd2 / nf - (sxd / nf).powi(2)) / nf).sqrt();
        assert!(cov.abs() < 4.0 * se, "cov {cov}, se {se}");
    }

    #[test]
    fn bes_norm_basics() {
        let g = grid(&[0.0, 0.3, 1.0]);
        let one = sample_bes_norm(&g, &ProcessParams::bessel(1, 0.0), StreamId::new(1, 1)).unwrap();
        let bm = sample_bm(&g, &ProcessParams::bm(0.0), StreamId::new(1, 1)).unwrap();
        for (a, b) in one.values().iter().zip(bm.values()) {
            assert!(*a >= 0.0);
            assert_eq!(*a, b.abs());
        }
        let three = sample_bes_norm(&g, &ProcessParams::bessel(3, 1.0), StreamId::new(1, 1)).unwrap();
        assert_eq!(three.values()[0], 1.0);
        assert!(matches!(
            sample_bes_norm(&g, &ProcessParams::bessel(0, 1.0), StreamId::new(1, 1)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn euler_single_step_by_hand() {
        let g = TimeGrid::uniform(0.0, 0.5, 1).unwrap();
        let v = euler_bessel(&g, 3, 1.0, &[0.0]).unwrap();
        assert_eq!(v, vec![1.0, 1.5]);
    }

    #[test]
    fn euler_floor_and_errors() {
        let g = TimeGrid::uniform(0.0, 0.5, 1).unwrap();
        assert_eq!(euler_bessel(&g, 1, 1.0, &[-3.0]).unwrap()[1], BESSEL_FLOOR);
        assert!(matches!(euler_bessel(&g, 3, 0.0, &[0.0]), Err(Error::Parameter(_))));
        let uneven = TimeGrid::explicit(vec![0.0, 0.5, 2.0]).unwrap();
        assert!(matches!(euler_bessel(&uneven, 3, 1.0, &[0.0, 0.0]), Err(Error::Grid(_))));
        assert!(matches!(
            euler_bessel(&g, 3, 1.0, &[f64::INFINITY]),
            Err(Error::Numeric { step: Some(1), .. })
        ));
    }

    #[test]
    fn one_dimensional_sde_is_bm_until_floor() {
        let g = Arc::new(TimeGrid::uniform_to(1.0, 0.01).unwrap());
        let s = StreamId::new(12, 0);
        let bm = sample_bm(&g, &ProcessParams::bm(3.0), s).unwrap();
        let sde = sample_bes_sde(&g, &ProcessParams::bessel(1, 3.0), s).unwrap();
        let floor_hit = sde.values().iter().position(|&v| v == BESSEL_FLOOR).unwrap_or(g.len());
        assert_eq!(&bm.values()[..floor_hit], &sde.values()[..floor_hit]);
    }
}

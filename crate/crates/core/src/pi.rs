//! Ensemble tests of the proportional-increments identity
//! `E(N_{t+s} - N_t | F_t) = (s/t) N_t`, of the martingale property of
//! `N_t / t`, and the maps between the two.
//!
//! Conditional expectations are tested through orthogonality of the residual
//! to the `F_t`-measurable functionals `1` and `N_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{Path, PathEnsemble, ProcessKind, ProcessTag};
use crate::report::finite_or_null;

pub const MIN_ENSEMBLE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Constant,
    ValueAtT,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiTestConfig {
    /// `(t, s)` pairs; `t > 0`, `s >= 0`.
    pub test_times: Vec<(f64, f64)>,
    pub test_functionals: Vec<Functional>,
    /// Paths with `|N_t|` below this are left out at that `t`.
    pub zero_tolerance: f64,
    pub z_threshold: f64,
}

impl Default for PiTestConfig {
    fn default() -> Self {
        PiTestConfig {
            test_times: vec![(1.0, 0.5)],
            test_functionals: vec![Functional::Constant, Functional::ValueAtT],
            zero_tolerance: 1e-12,
            z_threshold: 4.0,
        }
    }
}

impl PiTestConfig {
    pub fn at(test_times: Vec<(f64, f64)>) -> Self {
        PiTestConfig {
            test_times,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((t, s)) = self.test_times.iter().find(|(t, s)| !(*t > 0.0) || !(*s >= 0.0)) {
            return Err(Error::Parameter(format!("need t > 0 and s >= 0, got ({t}, {s})")));
        }
        if !(self.zero_tolerance > 0.0) {
            return Err(Error::Parameter("zero_tolerance must be > 0".into()));
        }
        if !(self.z_threshold > 0.0) {
            return Err(Error::Parameter("z_threshold must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualEntry {
    pub t: f64,
    pub s: f64,
    pub functional: Functional,
    pub estimate: f64,
    #[serde(with = "finite_or_null")]
    pub stderr: f64,
    #[serde(with = "finite_or_null")]
    pub z: f64,
    pub n_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualReport {
    pub process_tag: ProcessTag,
    pub master_seed: u64,
    pub entries: Vec<ResidualEntry>,
    pub pass: bool,
}

impl ResidualReport {
    pub fn entry(&self, t: f64, s: f64, functional: Functional) -> Option<&ResidualEntry> {
        self.entries
            .iter()
            .find(|e| e.t == t && e.s == s && e.functional == functional)
    }
}

/// Mean, standard error and z-score of `xs`. A sample that is exactly zero
/// gets `z = 0`.
fn z_stats(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z = if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    (mean, se, z)
}

/// Shared driver: `residual(N_t, N_{t+s}, t, s)` per path, tested against
/// each configured functional of `N_t`.
fn residual_report(
    ens: &PathEnsemble,
    cfg: &PiTestConfig,
    residual: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<ResidualReport> {
    cfg.validate()?;
    if ens.len() < MIN_ENSEMBLE {
        return Err(Error::DegenerateInput(format!(
            "ensemble has {} paths, need at least {MIN_ENSEMBLE}",
            ens.len()
        )));
    }
    let grid = ens.grid();
    let mut entries = Vec::new();
    for &(t, s) in &cfg.test_times {
        let i = grid
            .index_of(t)
            .ok_or_else(|| Error::Grid(format!("t = {t} is not on the grid")))?;
        let j = grid
            .index_of(t + s)
            .ok_or_else(|| Error::Grid(format!("t + s = {} is not on the grid", t + s)))?;
        let kept: Vec<(f64, f64)> = ens
            .paths()
            .iter()
            .map(|p| (p.values()[i], p.values()[j]))
            .filter(|(now, _)| now.abs() >= cfg.zero_tolerance)
            .collect();
        if kept.is_empty() {
            return Err(Error::DegenerateInput(format!(
                "every path has |N_t| < {} at t = {t}",
                cfg.zero_tolerance
            )));
        }
        let res: Vec<(f64, f64)> = kept
            .iter()
            .map(|&(now, later)| {
                // s = 0 is an exact zero, not a statistical one.
                let d = if s == 0.0 { 0.0 } else { residual(now, later, t, s) };
                (now, d)
            })
            .collect();
        for &functional in &cfg.test_functionals {
            let xs: Vec<f64> = res
                .iter()
                .map(|&(now, d)| match functional {
                    Functional::Constant => d,
                    Functional::ValueAtT => d * now,
                })
                .collect();
            let (estimate, stderr, z) = if xs.len() >= 2 {
                z_stats(&xs)
            } else {
                (xs[0], f64::NAN, f64::NAN)
            };
            entries.push(ResidualEntry {
                t,
                s,
                functional,
                estimate,
                stderr,
                z,
                n_used: xs.len(),
            });
        }
    }
    let pass = entries.iter().all(|e| e.z.abs() <= cfg.z_threshold);
    Ok(ResidualReport {
        process_tag: *ens.process_tag(),
        master_seed: ens.master_seed(),
        entries,
        pass,
    })
}

/// Orthogonality of `N_{t+s} - N_t - (s/t) N_t` to the configured functionals.
pub fn pi_residuals(ens: &PathEnsemble, cfg: &PiTestConfig) -> Result<ResidualReport> {
    residual_report(ens, cfg, |now, later, t, s| later - now - (s / t) * now)
}

/// Orthogonality of `M_{t+s} - M_t` to the configured functionals.
pub fn martingale_residuals(ens: &PathEnsemble, cfg: &PiTestConfig) -> Result<ResidualReport> {
    residual_report(ens, cfg, |now, later, _, _| later - now)
}

/// `R_t = N_t / t`. Every grid time must be positive.
pub fn ratio_path(path: &Path) -> Result<Path> {
    if path.times()[0] <= 0.0 {
        return Err(Error::Domain("ratio N_t / t needs all grid times > 0".into()));
    }
    path.map_values(|t, v| v / t)
}

/// `N_t = t M_t`.
pub fn lift_martingale(path: &Path) -> Path {
    path.map_values(|t, v| t * v)
        .expect("t * v is finite for finite t and v on a valid path")
}

pub fn ratio_ensemble(ens: &PathEnsemble) -> Result<PathEnsemble> {
    if ens.grid().start() <= 0.0 {
        return Err(Error::Domain("ratio N_t / t needs all grid times > 0".into()));
    }
    ens.map_paths(ProcessKind::Ratio, ratio_path)
}

pub fn lift_ensemble(ens: &PathEnsemble) -> Result<PathEnsemble> {
    ens.map_paths(ProcessKind::Lift, |p| Ok(lift_martingale(p)))
}

/// `S^{(j)} = Σ_k c_k X^{(k, j)}`, path by path. Components should come from
/// independent streams; that is not checked, so combining an ensemble with
/// itself is allowed.
pub fn linear_combination(ensembles: &[PathEnsemble], coeffs: &[f64]) -> Result<PathEnsemble> {
    let Some(first) = ensembles.first() else {
        return Err(Error::Shape("no ensembles to combine".into()));
    };
    if ensembles.len() != coeffs.len() {
        return Err(Error::Shape(format!(
            "{} ensembles but {} coefficients",
            ensembles.len(),
            coeffs.len()
        )));
    }
    for e in &ensembles[1..] {
        if e.grid() != first.grid() {
            return Err(Error::Grid("ensembles are on different grids".into()));
        }
        if e.len() != first.len() {
            return Err(Error::Shape(format!(
                "ensemble sizes differ: {} vs {}",
                e.len(),
                first.len()
            )));
        }
    }
    let grid = first.grid().clone();
    let paths = (0..first.len())
        .map(|j| {
            let mut acc = vec![0.0; grid.len()];
            for (e, &c) in ensembles.iter().zip(coeffs) {
                for (a, v) in acc.iter_mut().zip(e.paths()[j].values()) {
                    *a += c * v;
                }
            }
            Path::new(grid.clone(), acc)
        })
        .collect::<Result<Vec<_>>>()?;
    PathEnsemble::new(
        grid,
        paths,
        first.master_seed(),
        first.stream_indices().to_vec(),
        ProcessTag::new(ProcessKind::Combination, first.process_tag().params),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{ProcessParams, TimeGrid};
    use std::sync::Arc;

    fn grid(times: &[f64]) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::explicit(times.to_vec()).unwrap())
    }

    fn constant_ensemble(value: f64, n: usize) -> PathEnsemble {
        let g = grid(&[0.0, 1.0, 1.5, 2.0]);
        let paths = (0..n).map(|_| Path::new(g.clone(), vec![value; 4]).unwrap()).collect();
        PathEnsemble::new(
            g,
            paths,
            0,
            (0..n as u64).collect(),
            ProcessTag::new(ProcessKind::Imported, ProcessParams::default()),
        )
        .unwrap()
    }

    fn simulate(kind: ProcessKind, params: ProcessParams, n: usize, seed: u64) -> PathEnsemble {
        PathEnsemble::simulate(&grid(&[0.0, 1.0, 1.5, 2.0]), n, seed, ProcessTag::new(kind, params)).unwrap()
    }

    #[test]
    fn ratio_and_lift_by_hand() {
        let g = grid(&[1.0, 2.0, 4.0]);
        let p = Path::new(g.clone(), vec![3.0; 3]).unwrap();
        assert_eq!(ratio_path(&p).unwrap().values(), &[3.0, 1.5, 0.75]);
        let g = grid(&[1.0, 2.0, 3.0]);
        let one = Path::new(g, vec![1.0; 3]).unwrap();
        assert_eq!(lift_martingale(&one).values(), &[1.0, 2.0, 3.0]);
        let at_zero = Path::new(grid(&[0.0, 1.0]), vec![1.0, 1.0]).unwrap();
        assert!(matches!(ratio_path(&at_zero), Err(Error::Domain(_))));
        assert_eq!(lift_martingale(&at_zero).values(), &[0.0, 1.0]);
    }

    #[test]
    fn lift_of_bm_is_tbt() {
        let bm = simulate(ProcessKind::Bm, ProcessParams::bm(0.0), 5, 3);
        let tbt = simulate(ProcessKind::Tbt, ProcessParams::drifted(0.0, 0.0, 1.0), 5, 3);
        for (a, b) in lift_ensemble(&bm).unwrap().paths().iter().zip(tbt.paths()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn s_zero_is_exact() {
        let ens = simulate(ProcessKind::BmDrift, ProcessParams::drifted(0.0, 1.0, 1.0), 200, 1);
        let r = pi_residuals(&ens, &PiTestConfig::at(vec![(1.0, 0.0)])).unwrap();
        assert!(r.pass);
        for e in &r.entries {
            assert_eq!((e.estimate, e.stderr, e.z), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn constant_ensemble_is_a_martingale() {
        let r = martingale_residuals(&constant_ensemble(1.0, 150), &PiTestConfig::default()).unwrap();
        assert!(r.pass);
        assert!(r.entries.iter().all(|e| e.estimate == 0.0));
    }

    #[test]
    fn exclusion_rule() {
        let err = pi_residuals(&constant_ensemble(0.0, 150), &PiTestConfig::default());
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
        let ens = constant_ensemble(1e-13, 150);
        let err = martingale_residuals(&ens, &PiTestConfig::default());
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn config_and_shape_errors() {
        let ens = constant_ensemble(1.0, 150);
        assert!(matches!(pi_residuals(&ens, &PiTestConfig::at(vec![(1.2, 0.5)])), Err(Error::Grid(_))));
        assert!(matches!(pi_residuals(&ens, &PiTestConfig::at(vec![(0.0, 0.5)])), Err(Error::Parameter(_))));
        assert!(matches!(
            pi_residuals(&constant_ensemble(1.0, 10), &PiTestConfig::default()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn combinations() {
        let a = simulate(ProcessKind::Tbt, ProcessParams::drifted(0.0, 0.0, 1.0), 8, 1);
        let b = simulate(ProcessKind::Tbt, ProcessParams::drifted(0.0, 0.0, 1.0), 8, 2);
        let same = linear_combination(std::slice::from_ref(&a), &[1.0]).unwrap();
        for (x, y) in same.paths().iter().zip(a.paths()) {
            assert_eq!(x.values(), y.values());
        }
        let zero = linear_combination(&[a.clone(), a.clone()], &[1.0, -1.0]).unwrap();
        assert!(zero.paths().iter().all(|p| p.values().iter().all(|&v| v == 0.0)));
        assert!(matches!(linear_combination(&[a.clone(), b], &[1.0]), Err(Error::Shape(_))));
        let other = PathEnsemble::simulate(
            &grid(&[0.0, 1.0, 2.0]),
            8,
            1,
            ProcessTag::new(ProcessKind::Bm, ProcessParams::bm(0.0)),
        )
        .unwrap();
        assert!(matches!(linear_combination(&[a.clone(), other], &[1.0, 1.0]), Err(Error::Grid(_))));
        let short = simulate(ProcessKind::Tbt, ProcessParams::drifted(0.0, 0.0, 1.0), 7, 2);
        assert!(matches!(linear_combination(&[a, short], &[1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn z_scores_are_scale_invariant() {
        let ens = simulate(ProcessKind::Tbt, ProcessParams::drifted(0.0, 0.0, 1.0), 2_000, 5);
        let cfg = PiTestConfig::at(vec![(1.0, 0.5), (1.0, 1.0)]);
        let base = pi_residuals(&ens, &cfg).unwrap();
        for c in [-3.0, 0.01, 250.0] {
            let scaled = linear_combination(std::slice::from_ref(&ens), &[c]).unwrap();
            let r = pi_residuals(&scaled, &cfg).unwrap();
            for (a, b) in base.entries.iter().zip(&r.entries) {
                // The constant functional is odd in N, the value functional even.
                let sign = if a.functional == Functional::Constant { c.signum() } else { 1.0 };
                assert!((sign * a.z - b.z).abs() < 1e-9, "c={c}: {} vs {}", a.z, b.z);
            }
        }
    }

    #[test]
    fn report_json_round_trip() {
        let ens = simulate(ProcessKind::Tbt, ProcessParams::drifted(0.0, 0.0, 1.0), 200, 5);
        let r = pi_residuals(&ens, &PiTestConfig::default()).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        let e = &json["entries"][0];
        for key in ["t", "s", "functional", "estimate", "stderr", "z", "n_used"] {
            assert!(e.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["process_tag"]["kind"], "tbt");
        let back: ResidualReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}

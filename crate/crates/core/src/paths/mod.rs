//! Discretized realizations of Brownian motion, drifted BM, `t·B_t`-type
//! processes and Bessel processes on explicit time grids.

mod grid;
pub mod io;
mod sample;
mod stream;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grid::{GridKind, TimeGrid};
pub use sample::{
    euler_bessel, sample, sample_bes_norm, sample_bes_sde, sample_bm, sample_bm_drift, sample_tbt,
    BESSEL_FLOOR,
};
pub use stream::{gaussian_increments, StreamId};

/// Parameters shared by all generators. Each generator reads the fields it needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub x0: f64,
    pub drift_a: f64,
    pub sigma: f64,
    pub dim_n: u32,
    pub r0: f64,
}

impl Default for ProcessParams {
    fn default() -> Self {
        ProcessParams {
            x0: 0.0,
            drift_a: 0.0,
            sigma: 1.0,
            dim_n: 1,
            r0: 0.0,
        }
    }
}

impl ProcessParams {
    pub fn bm(x0: f64) -> Self {
        ProcessParams {
            x0,
            ..Default::default()
        }
    }

    /// `x0 + sigma * B_t + a * t`, also used for `x0 + sigma * t * B_t + a * t`.
    pub fn drifted(x0: f64, drift_a: f64, sigma: f64) -> Self {
        ProcessParams {
            x0,
            drift_a,
            sigma,
            ..Default::default()
        }
    }

    pub fn bessel(dim_n: u32, r0: f64) -> Self {
        ProcessParams {
            dim_n,
            r0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Parameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.dim_n < 1 {
            return Err(Error::Parameter("dim_n must be >= 1".into()));
        }
        if !(self.r0 >= 0.0) {
            return Err(Error::Parameter(format!("r0 must be >= 0, got {}", self.r0)));
        }
        if !self.x0.is_finite() || !self.drift_a.is_finite() || !self.sigma.is_finite() || !self.r0.is_finite() {
            return Err(Error::Parameter("parameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Bm,
    BmDrift,
    Tbt,
    BesNorm,
    BesSde,
    Williams,
    /// `N_t / t` of another ensemble.
    Ratio,
    /// `t * M_t` of another ensemble.
    Lift,
    /// Linear combination of ensembles.
    Combination,
    /// Read back from CSV without generator metadata.
    Imported,
}

impl ProcessKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ProcessKind::Bm => 0,
            ProcessKind::BmDrift => 1,
            ProcessKind::Tbt => 2,
            ProcessKind::BesNorm => 3,
            ProcessKind::BesSde => 4,
            ProcessKind::Williams => 5,
            ProcessKind::Ratio => 6,
            ProcessKind::Lift => 7,
            ProcessKind::Combination => 8,
            ProcessKind::Imported => 9,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ProcessKind::Bm,
            1 => ProcessKind::BmDrift,
            2 => ProcessKind::Tbt,
            3 => ProcessKind::BesNorm,
            4 => ProcessKind::BesSde,
            5 => ProcessKind::Williams,
            6 => ProcessKind::Ratio,
            7 => ProcessKind::Lift,
            8 => ProcessKind::Combination,
            9 => ProcessKind::Imported,
            _ => return None,
        })
    }
}

/// Which process generated an ensemble, and with what parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessTag {
    pub kind: ProcessKind,
    pub params: ProcessParams,
}

impl ProcessTag {
    pub fn new(kind: ProcessKind, params: ProcessParams) -> Self {
        ProcessTag { kind, params }
    }
}

/// One realization; `values[i]` is the process at `grid.times()[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "path has {} values for a grid of {} times",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric_step(format!("non-finite path value {}", values[i]), i));
        }
        Ok(Path { grid, values })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Restriction to `grid`, whose times must all lie on this path's grid.
    pub fn project(&self, grid: &Arc<TimeGrid>) -> Result<Path> {
        let idx = self.grid.indices_of(grid)?;
        Ok(self.project_indices(&idx, grid.clone()))
    }

    pub(crate) fn project_indices(&self, idx: &[usize], grid: Arc<TimeGrid>) -> Path {
        Path {
            grid,
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }

    /// The first `len` samples.
    pub fn prefix(&self, len: usize) -> Result<Path> {
        let grid = Arc::new(self.grid.prefix(len)?);
        Ok(Path {
            grid,
            values: self.values[..len].to_vec(),
        })
    }

    pub(crate) fn map_values(&self, f: impl Fn(f64, f64) -> f64) -> Result<Path> {
        let values = self
            .grid
            .times()
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| f(t, v))
            .collect();
        Path::new(self.grid.clone(), values)
    }
}

/// `output[i] = min(values[0..=i])`.
pub fn running_infimum(path: &Path) -> Path {
    let mut low = f64::INFINITY;
    let values = path
        .values
        .iter()
        .map(|&v| {
            low = low.min(v);
            low
        })
        .collect();
    Path {
        grid: path.grid.clone(),
        values,
    }
}

/// `N` i.i.d. paths on a shared grid, with the stream index each came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    grid: Arc<TimeGrid>,
    paths: Vec<Path>,
    master_seed: u64,
    stream_indices: Vec<u64>,
    process_tag: ProcessTag,
}

impl PathEnsemble {
    pub fn new(
        grid: Arc<TimeGrid>,
        paths: Vec<Path>,
        master_seed: u64,
        stream_indices: Vec<u64>,
        process_tag: ProcessTag,
    ) -> Result<Self> {
        if stream_indices.len() != paths.len() {
            return Err(Error::Shape(format!(
                "{} stream indices for {} paths",
                stream_indices.len(),
                paths.len()
            )));
        }
        if let Some(i) = paths.iter().position(|p| p.grid.as_ref() != grid.as_ref()) {
            return Err(Error::Grid(format!("path {i} is on a different grid")));
        }
        // Share one allocation for the grid.
        let paths = paths
            .into_iter()
            .map(|p| Path {
                grid: grid.clone(),
                values: p.values,
            })
            .collect();
        Ok(PathEnsemble {
            grid,
            paths,
            master_seed,
            stream_indices,
            process_tag,
        })
    }

    /// Generates paths `0..n_paths` with the generator named by `tag`.
    pub fn simulate(
        grid: &Arc<TimeGrid>,
        n_paths: usize,
        master_seed: u64,
        tag: ProcessTag,
    ) -> Result<Self> {
        tag.params.validate()?;
        Self::generate(grid, n_paths, master_seed, tag, |g, s| sample(tag.kind, g, &tag.params, s))
    }

    /// Generates paths with an arbitrary per-stream generator, in parallel.
    pub fn generate<F>(
        grid: &Arc<TimeGrid>,
        n_paths: usize,
        master_seed: u64,
        tag: ProcessTag,
        generator: F,
    ) -> Result<Self>
    where
        F: Fn(&Arc<TimeGrid>, StreamId) -> Result<Path> + Sync,
    {
        let paths = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| generator(grid, StreamId::new(master_seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PathEnsemble {
            grid: grid.clone(),
            paths,
            master_seed,
            stream_indices: (0..n_paths as u64).collect(),
            process_tag: tag,
        })
    }

    /// Like [`simulate`](Self::simulate), but keeps each path only at the times
    /// of `keep`. Peak memory is one full path per worker.
    pub fn simulate_projected(
        sim_grid: &Arc<TimeGrid>,
        keep: &Arc<TimeGrid>,
        n_paths: usize,
        master_seed: u64,
        tag: ProcessTag,
    ) -> Result<Self> {
        tag.params.validate()?;
        let idx = sim_grid.indices_of(keep)?;
        let paths = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let full = sample(tag.kind, sim_grid, &tag.params, StreamId::new(master_seed, i))?;
                Ok(full.project_indices(&idx, keep.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PathEnsemble {
            grid: keep.clone(),
            paths,
            master_seed,
            stream_indices: (0..n_paths as u64).collect(),
            process_tag: tag,
        })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_indices(&self) -> &[u64] {
        &self.stream_indices
    }

    pub fn process_tag(&self) -> &ProcessTag {
        &self.process_tag
    }

    /// Cross-section of all paths at grid index `i`.
    pub fn values_at(&self, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.values[i]).collect()
    }

    /// Cross-section at time `t`, which must be on the grid.
    pub fn values_at_time(&self, t: f64) -> Result<Vec<f64>> {
        let i = self
            .grid
            .index_of(t)
            .ok_or_else(|| Error::Grid(format!("time {t} is not on the ensemble grid")))?;
        Ok(self.values_at(i))
    }

    pub fn project(&self, keep: &Arc<TimeGrid>) -> Result<Self> {
        let idx = self.grid.indices_of(keep)?;
        Ok(PathEnsemble {
            grid: keep.clone(),
            paths: self
                .paths
                .iter()
                .map(|p| p.project_indices(&idx, keep.clone()))
                .collect(),
            master_seed: self.master_seed,
            stream_indices: self.stream_indices.clone(),
            process_tag: self.process_tag,
        })
    }

    pub(crate) fn map_paths(
        &self,
        kind: ProcessKind,
        f: impl Fn(&Path) -> Result<Path> + Sync + Send,
    ) -> Result<Self> {
        let paths = self.paths.par_iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(PathEnsemble {
            grid: self.grid.clone(),
            paths,
            master_seed: self.master_seed,
            stream_indices: self.stream_indices.clone(),
            process_tag: ProcessTag::new(kind, self.process_tag.params),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(values: &[f64]) -> Path {
        let grid = Arc::new(TimeGrid::uniform(0.0, 1.0, values.len() - 1).unwrap());
        Path::new(grid, values.to_vec()).unwrap()
    }

    #[test]
    fn running_infimum_hand_cases() {
        assert_eq!(
            running_infimum(&path(&[1.0, 1.3, 0.8, 0.9])).values(),
            &[1.0, 1.0, 0.8, 0.8]
        );
        assert_eq!(running_infimum(&path(&[1.0, 2.0, 3.0])).values(), &[1.0; 3]);
        assert_eq!(running_infimum(&path(&[3.0, 2.0, 1.0])).values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn path_rejects_mismatch_and_nan() {
        let grid = Arc::new(TimeGrid::uniform(0.0, 1.0, 2).unwrap());
        assert!(matches!(Path::new(grid.clone(), vec![0.0; 2]), Err(Error::Shape(_))));
        assert!(matches!(
            Path::new(grid, vec![0.0, f64::NAN, 1.0]),
            Err(Error::Numeric { step: Some(1), .. })
        ));
    }

    #[test]
    fn ensemble_rejects_foreign_grid() {
        let g1 = Arc::new(TimeGrid::uniform(0.0, 1.0, 2).unwrap());
        let g2 = Arc::new(TimeGrid::uniform(0.0, 0.5, 2).unwrap());
        let p = Path::new(g2, vec![0.0; 3]).unwrap();
        let tag = ProcessTag::new(ProcessKind::Imported, ProcessParams::default());
        assert!(PathEnsemble::new(g1, vec![p], 0, vec![0], tag).is_err());
    }

    #[test]
    fn projection_matches_full_simulation() {
        let grid = Arc::new(TimeGrid::uniform_to(2.0, 0.01).unwrap());
        let keep = Arc::new(TimeGrid::explicit(vec![0.5, 1.0, 2.0]).unwrap());
        let tag = ProcessTag::new(ProcessKind::BesNorm, ProcessParams::bessel(3, 1.0));
        let full = PathEnsemble::simulate(&grid, 20, 9, tag).unwrap();
        let proj = PathEnsemble::simulate_projected(&grid, &keep, 20, 9, tag).unwrap();
        assert_eq!(full.project(&keep).unwrap(), proj);
    }

    #[test]
    fn ensemble_paths_do_not_depend_on_ensemble_size() {
        let grid = Arc::new(TimeGrid::uniform_to(1.0, 0.1).unwrap());
        let tag = ProcessTag::new(ProcessKind::Bm, ProcessParams::bm(0.0));
        let small = PathEnsemble::simulate(&grid, 3, 42, tag).unwrap();
        let big = PathEnsemble::simulate(&grid, 50, 42, tag).unwrap();
        assert_eq!(small.paths(), &big.paths()[..3]);
    }

    proptest! {
        #[test]
        fn running_infimum_is_idempotent_and_dominated(values in prop::collection::vec(-1e6f64..1e6, 2..64)) {
            let p = path(&values);
            let once = running_infimum(&p);
            let twice = running_infimum(&once);
            prop_assert_eq!(once.values(), twice.values());
            for (i, (&lo, &v)) in once.values().iter().zip(p.values()).enumerate() {
                prop_assert!(lo <= v);
                if i > 0 {
                    prop_assert!(lo <= once.values()[i - 1]);
                }
            }
        }
    }
}

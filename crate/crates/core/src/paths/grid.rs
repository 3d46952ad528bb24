use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking uniform spacing.
const UNIFORM_RTOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Uniform,
    GeometricTail,
    Explicit,
}

impl GridKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            GridKind::Uniform => 0,
            GridKind::GeometricTail => 1,
            GridKind::Explicit => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GridKind::Uniform),
            1 => Some(GridKind::GeometricTail),
            2 => Some(GridKind::Explicit),
            _ => None,
        }
    }
}

/// Strictly increasing sample times, `times[0] >= 0`, at least two points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    times: Vec<f64>,
    kind: GridKind,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    kind: GridKind,
    times: Vec<f64>,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;

    fn try_from(repr: GridRepr) -> Result<Self> {
        TimeGrid::new(repr.times, repr.kind)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(grid: TimeGrid) -> Self {
        GridRepr {
            kind: grid.kind,
            times: grid.times,
        }
    }
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, kind: GridKind) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Grid(format!(
                "grid needs at least 2 times, got {}",
                times.len()
            )));
        }
        if let Some(bad) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::Grid(format!("non-finite grid time {bad}")));
        }
        if times[0] < 0.0 {
            return Err(Error::Grid(format!("grid starts at negative time {}", times[0])));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!(
                "grid not strictly increasing at index {}: {} then {}",
                i + 1,
                times[i],
                times[i + 1]
            )));
        }
        if kind == GridKind::Uniform {
            let dt = times[1] - times[0];
            let uneven = times
                .windows(2)
                .any(|w| ((w[1] - w[0]) - dt).abs() > UNIFORM_RTOL * dt.max(f64::MIN_POSITIVE));
            if uneven {
                return Err(Error::Grid("grid tagged uniform has uneven spacing".into()));
            }
        }
        Ok(TimeGrid { times, kind })
    }

    /// `start, start + dt, ..., start + steps * dt`.
    pub fn uniform(start: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("uniform step must be positive, got {dt}")));
        }
        let times = (0..=steps).map(|i| start + i as f64 * dt).collect();
        TimeGrid::new(times, GridKind::Uniform)
    }

    /// Uniform grid on `[0, horizon]`; `horizon` must be a whole number of steps.
    pub fn uniform_to(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(Error::Grid(format!(
                "need dt > 0 and horizon > 0, got dt={dt}, horizon={horizon}"
            )));
        }
        let steps = (horizon / dt).round();
        if ((steps * dt) - horizon).abs() > UNIFORM_RTOL * horizon || steps < 1.0 {
            return Err(Error::Grid(format!(
                "horizon {horizon} is not a whole number of steps of {dt}"
            )));
        }
        TimeGrid::uniform(0.0, dt, steps as usize)
    }

    /// Uniform spacing `dt` on `[0, knee]`, then steps growing by `growth` per step
    /// until `horizon`. The final time is exactly `horizon`.
    pub fn geometric_tail(dt: f64, knee: f64, horizon: f64, growth: f64) -> Result<Self> {
        if !(dt > 0.0) || !(knee > 0.0) || !(horizon > knee) || !(growth >= 1.0) {
            return Err(Error::Grid(format!(
                "invalid geometric-tail grid: dt={dt}, knee={knee}, horizon={horizon}, growth={growth}"
            )));
        }
        let fine = (knee / dt).round() as usize;
        let mut times: Vec<f64> = (0..=fine).map(|i| i as f64 * dt).collect();
        let mut t = *times.last().unwrap_or(&0.0);
        let mut step = dt;
        while t < horizon {
            step *= growth;
            t += step;
            if t >= horizon || horizon - t < 0.5 * step {
                times.push(horizon);
                break;
            }
            times.push(t);
        }
        TimeGrid::new(times, GridKind::GeometricTail)
    }

    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        TimeGrid::new(times, GridKind::Explicit)
    }

    /// Default grid for Williams realizations started at `r`: horizon `200 r^2`,
    /// step `1e-3 r^2` on `[0, 20 r^2]`, 1% geometric growth after.
    pub fn williams_default(r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Parameter(format!("r must be positive, got {r}")));
        }
        let s = r * r;
        TimeGrid::geometric_tail(1e-3 * s, 20.0 * s, 200.0 * s, 1.01)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Length of the `i`-th interval `[t_i, t_{i+1}]`.
    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// The constant step of a uniform grid.
    pub fn uniform_step(&self) -> Option<f64> {
        (self.kind == GridKind::Uniform).then(|| self.times[1] - self.times[0])
    }

    pub fn max_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the grid time equal to `t` (within `1e-9` relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let pos = self.times.partition_point(|&x| x < t - tol);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= tol).then_some(pos)
    }

    /// Indices into `self` of every time in `sub`.
    pub fn indices_of(&self, sub: &TimeGrid) -> Result<Vec<usize>> {
        sub.times
            .iter()
            .map(|&t| {
                self.index_of(t)
                    .ok_or_else(|| Error::Grid(format!("time {t} is not on the grid")))
            })
            .collect()
    }

    /// The first `len` times as a grid of the same kind.
    pub fn prefix(&self, len: usize) -> Result<TimeGrid> {
        if len > self.times.len() {
            return Err(Error::Grid(format!(
                "prefix of length {len} exceeds grid length {}",
                self.times.len()
            )));
        }
        let kind = match self.kind {
            GridKind::GeometricTail => GridKind::Explicit,
            k => k,
        };
        TimeGrid::new(self.times[..len].to_vec(), kind)
    }

    /// Index of the last time `<= t`, or `None` if `t` precedes the grid.
    pub fn last_index_at_or_before(&self, t: f64) -> Option<usize> {
        let pos = self.times.partition_point(|&x| x <= t);
        pos.checked_sub(1)
    }
}

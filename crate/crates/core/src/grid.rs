//! Checkpoint time grids and the open sup-norm boxes around target profiles.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack added before flooring `n * t`, so that decimal inputs such as
/// `0.29` (stored just below 0.29) still land on the intended integer.
const FLOOR_SLACK: f64 = 1e-9;

/// The integer part `[n t]`.
pub fn checkpoint_index(n: usize, t: f64) -> usize {
    (n as f64 * t + FLOOR_SLACK).floor() as usize
}

/// An ordered finite subset `0 < t_1 < ... < t_j <= 1` of checkpoint times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::domain("time grid needs at least one checkpoint"));
        }
        if !times.iter().all(|t| t.is_finite() && *t > 0.0 && *t <= 1.0) {
            return Err(Error::domain(format!("checkpoints must lie in (0, 1]: {times:?}")));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!("checkpoints must be strictly increasing: {times:?}")));
        }
        Ok(TimeGrid { times })
    }

    /// The single checkpoint `J = (1)`.
    pub fn endpoint() -> Self {
        TimeGrid { times: vec![1.0] }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Step indices `[n t_i]`, non-decreasing.
    pub fn indices(&self, n: usize) -> Vec<usize> {
        self.times.iter().map(|&t| checkpoint_index(n, t)).collect()
    }

    pub fn is_endpoint(&self) -> bool {
        self.times == [1.0]
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        TimeGrid::new(times)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.times
    }
}

/// The open box `B(x, rho)` in sup-norm around a target profile `x`,
/// attached to the checkpoint grid it is measured on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    pub rho: f64,
}

impl BoxSpec {
    pub fn new(grid: TimeGrid, x: Vec<f64>, rho: f64) -> Result<Self> {
        if x.len() != grid.len() {
            return Err(Error::domain(format!(
                "target has {} coordinates but the grid has {} checkpoints",
                x.len(),
                grid.len()
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::domain(format!("box radius must be positive, got {rho}")));
        }
        if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain(format!("box centre must be nonnegative: {x:?}")));
        }
        Ok(BoxSpec { grid, x, rho })
    }

    /// Strict membership `max_i |y_i - x_i| < rho`.
    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.x.len() && y.iter().zip(&self.x).all(|(a, b)| (a - b).abs() < self.rho)
    }

    /// Membership of the rescaled length profile `lengths / n`.
    pub fn contains_profile(&self, lengths: &[usize], n: usize) -> bool {
        let scale = n as f64;
        lengths.len() == self.x.len()
            && lengths.iter().zip(&self.x).all(|(&l, &x)| (l as f64 / scale - x).abs() < self.rho)
    }

    /// Same centre and grid, different radius.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        BoxSpec::new(self.grid.clone(), self.x.clone(), rho)
    }
}

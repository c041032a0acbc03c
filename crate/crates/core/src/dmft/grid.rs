use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t = 0, δ, …, Nδ = T`.
///
/// Kernels hold one block per grid point, so there are `N + 1` time indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFields", into = "GridFields")]
pub struct TimeGrid {
    horizon: f64,
    delta: f64,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFields {
    horizon: f64,
    delta: f64,
}

impl TryFrom<GridFields> for TimeGrid {
    type Error = Error;

    fn try_from(g: GridFields) -> Result<Self> {
        TimeGrid::new(g.horizon, g.delta)
    }
}

impl From<TimeGrid> for GridFields {
    fn from(g: TimeGrid) -> Self {
        GridFields { horizon: g.horizon, delta: g.delta }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, delta: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite() && delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid needs positive horizon and step, got T={horizon}, δ={delta}"
            )));
        }
        let steps = (horizon / delta).round();
        if steps < 1.0 {
            return Err(Error::InvalidInput(format!("step δ={delta} exceeds horizon T={horizon}")));
        }
        let steps = steps as usize;
        if (steps as f64 * delta - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::InvalidInput(format!("horizon T={horizon} is not a whole number of steps δ={delta}")));
        }
        Ok(Self { horizon, delta, steps })
    }

    /// Grid with `steps` steps of size `delta`.
    pub fn from_steps(steps: usize, delta: f64) -> Result<Self> {
        Self::new(steps as f64 * delta, delta)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid times, `N + 1`.
    pub fn points(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points()).map(|i| self.time(i)).collect()
    }

    /// Index of the grid time nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.delta).round().max(0.0) as usize).min(self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_matches_horizon() {
        let g = TimeGrid::new(4.0, 0.05).unwrap();
        assert_eq!(g.steps(), 80);
        assert_eq!(g.points(), 81);
        assert!((g.time(80) - 4.0).abs() < 1e-12);
        assert_eq!(g.index_of(1.0), 20);
    }

    #[test]
    fn rejects_incommensurate_step() {
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        assert!(TimeGrid::new(0.01, 0.05).is_err());
        assert!(TimeGrid::new(-1.0, 0.05).is_err());
    }
}

//! Time series of pressure-drop values on the uniform time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = k·tau`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub tau: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// Grid on `[0, horizon]` whose step does not exceed `max_tau`.
    pub fn covering(horizon: f64, max_tau: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::config(format!("time horizon must be positive, got {horizon}")));
        }
        if !(max_tau > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {max_tau}")));
        }
        let n_steps = (horizon / max_tau - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            tau: horizon / n_steps as f64,
            n_steps,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.n_steps as f64
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.tau
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Composite trapezoid weights for `L²(0,T)` inner products.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.tau; self.len()];
        w[0] = 0.5 * self.tau;
        w[self.n_steps] = 0.5 * self.tau;
        w
    }
}

/// Samples of a scalar signal on a [`TimeGrid`], paired with the
/// trapezoid weights of the discrete `L²(0,T)` inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl MeasurementSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Contract(format!(
                "series has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.grid.trapezoid_weights()
    }

    /// Weighted pairing `Σ_k W_k x_k y_k`.
    pub fn inner(&self, other: &MeasurementSeries) -> f64 {
        weighted_inner(self.grid, &self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn sub(&self, other: &MeasurementSeries) -> MeasurementSeries {
        debug_assert_eq!(self.len(), other.len());
        MeasurementSeries {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &MeasurementSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn weighted_inner(grid: TimeGrid, x: &[f64], y: &[f64]) -> f64 {
    let n = grid.n_steps;
    let mut acc = 0.5 * (x[0] * y[0] + x[n] * y[n]);
    for k in 1..n {
        acc += x[k] * y[k];
    }
    acc * grid.tau
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_grid_hits_horizon() {
        let g = TimeGrid::covering(10.0, 0.001).unwrap();
        assert_eq!(g.n_steps, 10_000);
        assert!((g.horizon() - 10.0).abs() <= f64::EPSILON * 10.0);
        let g = TimeGrid::covering(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps, 4);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = TimeGrid::covering(2.0, 0.1).unwrap();
        let s = MeasurementSeries::new(g, g.times()).unwrap();
        let one = MeasurementSeries::new(g, vec![1.0; g.len()]).unwrap();
        assert!((s.inner(&one) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(TimeGrid::covering(-1.0, 0.1).is_err());
        assert!(TimeGrid::covering(1.0, 0.0).is_err());
    }
}

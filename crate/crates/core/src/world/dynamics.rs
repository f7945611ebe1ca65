use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::WorldError;

/// Discrete-time double integrator `x_{k+1} = A x_k + B u_k`.
///
/// The state is `[p; v]` with `dims` entries each, the input is an
/// acceleration with `dims` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
    pub dims: usize,
}

impl DynamicsModel {
    pub fn state_dim(&self) -> usize {
        2 * self.dims
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        (&self.a * x + &self.b * u).iter().copied().collect()
    }
}

pub fn build_dynamics(dt: f64, dims: usize) -> Result<DynamicsModel, WorldError> {
    if !(1..=3).contains(&dims) {
        return Err(WorldError::BadDims(dims));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(WorldError::BadTimeStep(dt));
    }
    let n = 2 * dims;
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DMatrix::<f64>::zeros(n, dims);
    for i in 0..dims {
        a[(i, dims + i)] = dt;
        b[(i, i)] = 0.5 * dt * dt;
        b[(dims + i, i)] = dt;
    }
    Ok(DynamicsModel { a, b, dt, dims })
}

/// Time-indexed states `x_0..x_H` and controls `u_0..u_{H-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub dt: f64,
}

impl Trajectory {
    /// Number of steps `H`; the last valid time index.
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn is_consistent(&self) -> bool {
        !self.states.is_empty() && self.states.len() == self.controls.len() + 1
    }
}

pub fn simulate(model: &DynamicsModel, x0: &[f64], controls: &[Vec<f64>]) -> Trajectory {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.to_vec());
    for u in controls {
        let next = model.step(states.last().unwrap(), u);
        states.push(next);
    }
    Trajectory {
        states,
        controls: controls.to_vec(),
        dt: model.dt,
    }
}

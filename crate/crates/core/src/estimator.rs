//! Decentralized estimation of the Fiedler eigenvector and eigenvalue.
//!
//! Each agent keeps a scalar estimate `nu` of its own component of the
//! Fiedler vector and two proportional-integral average-consensus trackers:
//! one for the network mean of `nu` (used to deflate the all-ones mode) and
//! one for the mean of `nu^2` (used to normalize and to read off lambda2).
//!
//! ```text
//! d nu_i / dt = -k1 avg1_i - k2 sum_j a_ij (nu_i - nu_j) - k3 (avg2_i - 1) nu_i
//! dz_i / dt   = gamma (x_i - z_i) - Kp sum_j a_ij (z_i - z_j) + Ki sum_j a_ij (w_i - w_j)
//! dw_i / dt   = -Ki sum_j a_ij (z_i - z_j)
//! ```
//!
//! At equilibrium `L nu = (k3/k2)(1 - Ave(nu^2)) nu`, which is why
//! [`lambda2_local`] reads the eigenvalue off the squared-mean tracker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Position;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("non-finite value received from neighbor {index}")]
    NonFiniteInput { index: usize },
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid gain `{name}`: {value} (must be positive)")]
    InvalidGain { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub kp_pi: f64,
    pub ki_pi: f64,
    pub gamma_pi: f64,
}

impl Default for EstimatorGains {
    fn default() -> Self {
        Self {
            k1: 30.0,
            k2: 5.0,
            k3: 100.0,
            gamma_pi: 150.0,
            kp_pi: 300.0,
            ki_pi: 60.0,
        }
    }
}

impl EstimatorGains {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        for (name, value) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("kp_pi", self.kp_pi),
            ("ki_pi", self.ki_pi),
            ("gamma_pi", self.gamma_pi),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(EstimatorError::InvalidGain { name, value });
            }
        }
        Ok(())
    }
}

/// State of one PI average-consensus tracker.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub z: f64,
    pub w: f64,
}

impl PiState {
    /// Tracker started at the local signal value.
    pub fn at(value: f64) -> Self {
        Self { z: value, w: 0.0 }
    }

    fn step(&self, input: f64, neighbors: impl Iterator<Item = (f64, PiState)>, gains: &EstimatorGains, dt: f64) -> PiState {
        let mut dz_cons = 0.0;
        let mut dw_cons = 0.0;
        for (a, other) in neighbors {
            dz_cons += a * (self.z - other.z);
            dw_cons += a * (self.w - other.w);
        }
        let dz = gains.gamma_pi * (input - self.z) - gains.kp_pi * dz_cons + gains.ki_pi * dw_cons;
        let dw = -gains.ki_pi * dz_cons;
        PiState {
            z: self.z + dt * dz,
            w: self.w + dt * dw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    /// This agent's Fiedler-component estimate.
    pub nu: f64,
    /// Tracks Ave(nu).
    pub avg1: PiState,
    /// Tracks Ave(nu^2).
    pub avg2: PiState,
}

impl EstimatorState {
    pub fn new(nu: f64) -> Self {
        Self {
            nu,
            avg1: PiState::at(nu),
            avg2: PiState::at(nu * nu),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.nu, self.avg1.z, self.avg1.w, self.avg2.z, self.avg2.w]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// What agent `i` hears from one neighbor during a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborReport {
    pub weight: f64,
    /// Received eigenvector estimate, possibly corrupted in transit.
    pub nu: f64,
    pub avg1: PiState,
    pub avg2: PiState,
}

/// One explicit-Euler round of the eigenvector estimator and both trackers.
///
/// Reads only the agent's own state and what its neighbors sent.
pub fn estimator_step(
    state: &EstimatorState,
    neighbors: &[NeighborReport],
    gains: &EstimatorGains,
    dt: f64,
) -> Result<EstimatorState, EstimatorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EstimatorError::InvalidStep(dt));
    }
    for (index, n) in neighbors.iter().enumerate() {
        let ok = [n.weight, n.nu, n.avg1.z, n.avg1.w, n.avg2.z, n.avg2.w]
            .iter()
            .all(|x| x.is_finite());
        if !ok {
            return Err(EstimatorError::NonFiniteInput { index });
        }
    }

    let coupling: f64 = neighbors.iter().map(|n| n.weight * (state.nu - n.nu)).sum();
    let dnu = -gains.k1 * state.avg1.z - gains.k2 * coupling - gains.k3 * (state.avg2.z - 1.0) * state.nu;

    let avg1 = state
        .avg1
        .step(state.nu, neighbors.iter().map(|n| (n.weight, n.avg1)), gains, dt);
    let avg2 = state
        .avg2
        .step(state.nu * state.nu, neighbors.iter().map(|n| (n.weight, n.avg2)), gains, dt);

    Ok(EstimatorState {
        nu: state.nu + dt * dnu,
        avg1,
        avg2,
    })
}

/// Local connectivity estimate `(k3/k2) (1 - avg2_z)`.
pub fn lambda2_local(state: &EstimatorState, gains: &EstimatorGains) -> f64 {
    gains.k3 / gains.k2 * (1.0 - state.avg2.z)
}

/// A neighbor as seen by the local gradient computation.
#[derive(Debug, Clone, Copy)]
pub struct GradientNeighbor<'a> {
    pub nu: f64,
    pub position: &'a Position,
    pub weight: f64,
}

/// Local estimate of the lambda2 gradient with respect to this agent's position:
/// `sum_j -a_ij (nu_i - nu_j)^2 (p_i - p_j) / sigma^2`.
pub fn lambda2_gradient_local(nu_i: f64, p_i: &Position, neighbors: &[GradientNeighbor<'_>], sigma: f64) -> Vec<f64> {
    let s2 = sigma * sigma;
    let mut g = vec![0.0; p_i.dim()];
    for n in neighbors {
        let dv = nu_i - n.nu;
        let coef = -n.weight * dv * dv / s2;
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += coef * (p_i.coords()[k] - n.position.coords()[k]);
        }
    }
    g
}

//! Actuator model: first-order low-pass `H(s) = w / (s + w)` discretized with a
//! zero-order hold, followed by single-integrator motion.

use serde::{Deserialize, Serialize};

use crate::graph::Position;

/// Which part of the command goes through the low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterTarget {
    /// Only the connectivity term.
    #[default]
    Connectivity,
    /// The summed command.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuationParams {
    /// Bypass the filter entirely.
    pub ideal: bool,
    /// Cutoff in rad/s.
    pub cutoff: f64,
    pub filter_target: FilterTarget,
}

impl Default for ActuationParams {
    fn default() -> Self {
        Self {
            ideal: false,
            cutoff: 10.0,
            filter_target: FilterTarget::Connectivity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub y: Vec<f64>,
    pub cutoff: f64,
}

impl FilterState {
    pub fn at_rest(dim: usize, cutoff: f64) -> Self {
        assert!(cutoff > 0.0, "cutoff must be positive");
        Self {
            y: vec![0.0; dim],
            cutoff,
        }
    }
}

/// Exact ZOH step: `y <- e^{-w dt} y + (1 - e^{-w dt}) u`.
pub fn lowpass_step(state: &mut FilterState, u: &[f64], dt: f64) -> Vec<f64> {
    let decay = (-state.cutoff * dt).exp();
    for (y, &x) in state.y.iter_mut().zip(u) {
        *y = decay * *y + (1.0 - decay) * x;
    }
    state.y.clone()
}

/// Explicit Euler step of a single integrator.
pub fn integrate_step(p: &Position, u: &[f64], dt: f64) -> Position {
    p.offset(u, dt)
}

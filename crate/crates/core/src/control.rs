//! Control laws: connectivity maintenance, rendezvous, formation keeping and
//! point-obstacle repulsion.
//!
//! The connectivity term scales the local lambda2 gradient by
//! `csch^2(lambda2_i - eps)`, which grows without bound as the local estimate
//! approaches the floor. Its argument is clamped at `csch_arg_min` and the
//! resulting vector is norm-capped at `u_c_max` so integration stays finite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CommGraph, Position};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid control parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlParams {
    /// Connectivity floor of the scalar connectivity law.
    pub epsilon: f64,
    /// Floor used by the modified edge weights.
    pub epsilon_bar: f64,
    /// Floor of the formation bias switch.
    pub epsilon_tilde: f64,
    /// Margin `k > 1`: the bias freezes its weights below `k * epsilon_tilde`.
    pub k_margin: f64,
    /// Per-agent gains; a single entry applies to every agent.
    pub gamma: Vec<f64>,
    pub u_c_max: f64,
    pub csch_arg_min: f64,
    /// Edge weights of the consensus term in formation control.
    pub formation_laplacian: FormationLaplacian,
}

/// Weights of the `-L p` consensus term used by formation control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormationLaplacian {
    /// One per neighbor, matching the `1 +` in the bias weights.
    #[default]
    Unit,
    /// The Gaussian communication weights `a_ij`.
    Weighted,
}

impl FormationLaplacian {
    fn weight(self, a_ij: f64) -> f64 {
        match self {
            FormationLaplacian::Unit => 1.0,
            FormationLaplacian::Weighted => a_ij,
        }
    }
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilon_bar: 0.1,
            epsilon_tilde: 0.2,
            k_margin: 2.0,
            gamma: vec![1.0],
            u_c_max: 100.0,
            csch_arg_min: 1e-3,
            formation_laplacian: FormationLaplacian::Unit,
        }
    }
}

impl ControlParams {
    pub fn validate(&self, agents: usize) -> Result<(), ControlError> {
        let positive = [
            ("epsilon", self.epsilon),
            ("epsilon_bar", self.epsilon_bar),
            ("epsilon_tilde", self.epsilon_tilde),
            ("u_c_max", self.u_c_max),
            ("csch_arg_min", self.csch_arg_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControlError::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(self.k_margin > 1.0 && self.k_margin.is_finite()) {
            return Err(ControlError::InvalidParameter {
                name: "k_margin",
                reason: format!("must exceed 1, got {}", self.k_margin),
            });
        }
        if self.gamma.len() != 1 && self.gamma.len() != agents {
            return Err(ControlError::InvalidParameter {
                name: "gamma",
                reason: format!("needs 1 or {agents} entries, got {}", self.gamma.len()),
            });
        }
        if let Some(g) = self.gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(ControlError::InvalidParameter {
                name: "gamma",
                reason: format!("entries must be positive, got {g}"),
            });
        }
        Ok(())
    }

    pub fn gamma_for(&self, agent: usize) -> f64 {
        if self.gamma.len() == 1 {
            self.gamma[0]
        } else {
            self.gamma[agent]
        }
    }

    /// `csch^2` with its argument clamped from below.
    pub fn csch2_clamped(&self, x: f64) -> f64 {
        csch2(x.max(self.csch_arg_min))
    }
}

pub fn csch2(x: f64) -> f64 {
    let s = x.sinh();
    1.0 / (s * s)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `v` in place so that its norm does not exceed `max`.
pub fn saturate(v: &mut [f64], max: f64) {
    let n = norm(v);
    if n > max {
        let s = max / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Modified edge weight
/// `gamma_i csch^2(lambda2_i - eps_bar) (nu_i - nu_j)^2 a_ij / sigma^2`.
pub fn modified_edge_weight(lambda2_i: f64, nu_i: f64, nu_j: f64, a_ij: f64, gamma_i: f64, params: &ControlParams, sigma: f64) -> f64 {
    let dv = nu_i - nu_j;
    gamma_i * params.csch2_clamped(lambda2_i - params.epsilon_bar) * dv * dv * a_ij / (sigma * sigma)
}

/// Connectivity control in scalar form: `gamma_i csch^2(lambda2_i - eps)` times
/// the local gradient, saturated at `u_c_max`.
pub fn connectivity_control(lambda2_i: f64, gradient: &[f64], gamma_i: f64, params: &ControlParams) -> Vec<f64> {
    let gain = gamma_i * params.csch2_clamped(lambda2_i - params.epsilon);
    let mut u: Vec<f64> = gradient.iter().map(|g| gain * g).collect();
    saturate(&mut u, params.u_c_max);
    u
}

/// Neighbor data agent `i` uses for its vector-form laws.
#[derive(Debug, Clone, Copy)]
pub struct ControlNeighbor<'a> {
    pub position: &'a Position,
    /// Received eigenvector estimate.
    pub nu: f64,
    pub weight: f64,
    /// Desired formation offset of the neighbor.
    pub offset: Option<&'a Position>,
}

/// Row `i` of `-Lbar p`: `sum_j abar_ij (p_j - p_i)`, unsaturated.
pub fn modified_laplacian_row(
    p_i: &Position,
    nu_i: f64,
    lambda2_i: f64,
    gamma_i: f64,
    neighbors: &[ControlNeighbor<'_>],
    params: &ControlParams,
    sigma: f64,
) -> Vec<f64> {
    let mut u = vec![0.0; p_i.dim()];
    for n in neighbors {
        let abar = modified_edge_weight(lambda2_i, nu_i, n.nu, n.weight, gamma_i, params, sigma);
        for (uk, (pj, pi)) in u.iter_mut().zip(n.position.coords().iter().zip(p_i.coords())) {
            *uk += abar * (pj - pi);
        }
    }
    u
}

/// Consensus rendezvous: `u_i = -sum_j a_ij (p_i - p_j)`.
pub fn rendezvous_control(positions: &[Position], graph: &CommGraph) -> Vec<Vec<f64>> {
    (0..positions.len())
        .map(|i| {
            let mut u = vec![0.0; positions[i].dim()];
            for (j, a) in graph.neighbors(i) {
                for (uk, d) in u.iter_mut().zip(positions[i].delta(&positions[j])) {
                    *uk -= a * d;
                }
            }
            u
        })
        .collect()
}

/// Formation bias for agent `i`.
///
/// Above `k * eps_tilde` the bias weights are `1 + abar_ij(lambda2_i)`;
/// otherwise the modified weight is evaluated at `lambda2_i = k * eps_tilde`,
/// which keeps the bias bounded however close the estimate gets to the floor.
pub fn formation_bias(
    offset_i: &Position,
    nu_i: f64,
    lambda2_i: f64,
    gamma_i: f64,
    neighbors: &[ControlNeighbor<'_>],
    params: &ControlParams,
    sigma: f64,
) -> Vec<f64> {
    let switch = params.k_margin * params.epsilon_tilde;
    let weight_arg = if lambda2_i > switch { lambda2_i } else { switch };
    let mut b = vec![0.0; offset_i.dim()];
    for n in neighbors {
        let Some(offset_j) = n.offset else { continue };
        let abar = modified_edge_weight(weight_arg, nu_i, n.nu, n.weight, gamma_i, params, sigma);
        for (bk, d) in b.iter_mut().zip(offset_i.delta(offset_j)) {
            *bk += (1.0 + abar) * d;
        }
    }
    b
}

/// Formation control for agent `i`: `-(L p)_i + b_i(p)`, with the consensus
/// weights chosen by `params.formation_laplacian`.
pub fn formation_control_agent(
    p_i: &Position,
    offset_i: &Position,
    nu_i: f64,
    lambda2_i: f64,
    gamma_i: f64,
    neighbors: &[ControlNeighbor<'_>],
    params: &ControlParams,
    sigma: f64,
) -> Vec<f64> {
    let mut u = formation_bias(offset_i, nu_i, lambda2_i, gamma_i, neighbors, params, sigma);
    for n in neighbors {
        let w = params.formation_laplacian.weight(n.weight);
        for (uk, d) in u.iter_mut().zip(p_i.delta(n.position)) {
            *uk -= w * d;
        }
    }
    u
}

/// Formation control for every agent from a common (uncorrupted) view.
pub fn formation_control(
    positions: &[Position],
    lambda2_est: &[f64],
    nus: &[f64],
    graph: &CommGraph,
    offsets: &[Position],
    params: &ControlParams,
    sigma: f64,
) -> Vec<Vec<f64>> {
    (0..positions.len())
        .map(|i| {
            let nbrs: Vec<ControlNeighbor<'_>> = graph
                .neighbors(i)
                .map(|(j, a)| ControlNeighbor {
                    position: &positions[j],
                    nu: nus[j],
                    weight: a,
                    offset: Some(&offsets[j]),
                })
                .collect();
            formation_control_agent(&positions[i], &offsets[i], nus[i], lambda2_est[i], params.gamma_for(i), &nbrs, params, sigma)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleParams {
    pub count: usize,
    /// Obstacles are placed uniformly in this box.
    pub band_min: Vec<f64>,
    pub band_max: Vec<f64>,
    pub influence_radius: f64,
    pub repulsion_gain: f64,
    pub u_obst_max: f64,
}

impl Default for ObstacleParams {
    fn default() -> Self {
        Self {
            count: 150,
            band_min: vec![4.0, -3.0],
            band_max: vec![9.0, 5.0],
            influence_radius: 0.5,
            repulsion_gain: 0.1,
            u_obst_max: 3.0,
        }
    }
}

/// Point obstacles with a bounded repulsive potential.
#[derive(Debug, Clone)]
pub struct ObstacleField {
    pub points: Vec<Position>,
    pub influence_radius: f64,
    pub repulsion_gain: f64,
    pub u_obst_max: f64,
}

impl ObstacleField {
    pub fn new(points: Vec<Position>, params: &ObstacleParams) -> Self {
        Self {
            points,
            influence_radius: params.influence_radius,
            repulsion_gain: params.repulsion_gain,
            u_obst_max: params.u_obst_max,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), &ObstacleParams::default())
    }
}

/// Sum of `gain (1/d - 1/rho) / d^2` pushes away from each obstacle within
/// `rho`, norm-capped at `u_obst_max`. An agent sitting exactly on an
/// obstacle gets a maximal push in a direction drawn from `rng`.
pub fn obstacle_avoidance(p_i: &Position, field: &ObstacleField, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = p_i.dim();
    let rho = field.influence_radius;
    let mut u = vec![0.0; m];
    for o in &field.points {
        let d = p_i.distance(o);
        if d >= rho {
            continue;
        }
        if d == 0.0 {
            let mut dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = norm(&dir);
            dir.iter_mut().for_each(|x| *x *= field.u_obst_max / n);
            return dir;
        }
        let mag = field.repulsion_gain * (1.0 / d - 1.0 / rho) / (d * d);
        for (uk, dk) in u.iter_mut().zip(p_i.delta(o)) {
            *uk += mag * dk / d;
        }
    }
    saturate(&mut u, field.u_obst_max);
    u
}

/// Elementwise `u_c + u_d + u_obst`.
pub fn total_control(u_c: &[Vec<f64>], u_d: &[Vec<f64>], u_obst: &[Vec<f64>]) -> Vec<Vec<f64>> {
    u_c.iter()
        .zip(u_d)
        .zip(u_obst)
        .map(|((c, d), o)| c.iter().zip(d).zip(o).map(|((a, b), e)| a + b + e).collect())
        .collect()
}

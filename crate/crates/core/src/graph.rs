//! Geometric communication graphs and the centralized spectral oracle.
//!
//! Edge weights decay as a Gaussian of inter-agent distance and drop to zero
//! beyond the communication range `R`. The Gaussian width is pinned by the
//! boundary condition `exp(-R^2 / (2 sigma^2)) = delta`, so the weight jumps
//! from `delta` to zero exactly at `R`.
//!
//! The oracle ([`spectral_oracle`], [`lambda2_gradient_exact`]) has global
//! knowledge and exists to validate the decentralized machinery and to record
//! ground truth; agents never consume it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{jacobi_eigen, EigenError, Matrix, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("position dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("position has non-finite coordinates")]
    NonFinitePosition,
    #[error("spectral oracle needs at least two agents (got {0})")]
    TooFewAgents(usize),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// A point in R^m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Position(Vec<f64>);

impl Position {
    pub fn new(coords: Vec<f64>) -> Result<Self, GraphError> {
        if coords.is_empty() {
            return Err(GraphError::InvalidParameter {
                name: "position",
                reason: "dimension must be at least 1".into(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GraphError::NonFinitePosition);
        }
        Ok(Self(coords))
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self(vec![x, y])
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// `self - other`, as a plain vector.
    pub fn delta(&self, other: &Position) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + scale * v`.
    pub fn offset(&self, v: &[f64], scale: f64) -> Position {
        Position(self.0.iter().zip(v).map(|(p, d)| p + scale * d).collect())
    }
}

impl From<Vec<f64>> for Position {
    fn from(v: Vec<f64>) -> Self {
        Position(v)
    }
}

/// Inverts the boundary condition `exp(-R^2 / (2 sigma^2)) = delta`.
pub fn sigma_from_range(range: f64, delta: f64) -> Result<f64, GraphError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(GraphError::InvalidParameter {
            name: "range",
            reason: format!("must be positive and finite, got {range}"),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GraphError::InvalidParameter {
            name: "delta",
            reason: format!("must lie in (0, 1), got {delta}"),
        });
    }
    Ok(range / (-2.0 * delta.ln()).sqrt())
}

/// Communication range `R`, boundary weight `delta`, and the derived width `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeParams {
    range: f64,
    delta: f64,
    sigma: f64,
}

impl RangeParams {
    pub fn new(range: f64, delta: f64) -> Result<Self, GraphError> {
        let sigma = sigma_from_range(range, delta)?;
        Ok(Self {
            range,
            delta,
            sigma,
        })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Default for RangeParams {
    fn default() -> Self {
        Self::new(4.0, 0.01).expect("default range parameters are valid")
    }
}

/// Gaussian edge weight, exactly zero beyond the communication range.
pub fn edge_weight(pi: &Position, pj: &Position, params: &RangeParams) -> Result<f64, GraphError> {
    if pi.dim() != pj.dim() {
        return Err(GraphError::DimensionMismatch(pi.dim(), pj.dim()));
    }
    let d = pi.distance(pj);
    if d <= params.range {
        Ok((-(d * d) / (2.0 * params.sigma * params.sigma)).exp())
    } else {
        Ok(0.0)
    }
}

/// Weighted undirected communication graph at one instant.
#[derive(Debug, Clone)]
pub struct CommGraph {
    weights: Matrix,
    degrees: Vec<f64>,
    laplacian: Matrix,
}

impl CommGraph {
    /// Builds a graph directly from a symmetric, nonnegative, zero-diagonal
    /// weight matrix. Used for abstract (non-geometric) graphs.
    pub fn from_weights(weights: Matrix) -> Result<Self, GraphError> {
        let n = weights.dim();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::InvalidParameter {
                    name: "weights",
                    reason: format!("diagonal entry {i} is nonzero"),
                });
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !(w >= 0.0 && w.is_finite()) || w != weights[(j, i)] {
                    return Err(GraphError::InvalidParameter {
                        name: "weights",
                        reason: format!("entry ({i},{j}) must be finite, nonnegative and symmetric"),
                    });
                }
            }
        }
        Ok(Self::assemble(weights))
    }

    fn assemble(weights: Matrix) -> Self {
        let n = weights.dim();
        let degrees: Vec<f64> = (0..n).map(|i| weights.row(i).iter().sum()).collect();
        let mut laplacian = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                laplacian[(i, j)] = if i == j { degrees[i] } else { -weights[(i, j)] };
            }
        }
        Self {
            weights,
            degrees,
            laplacian,
        }
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }

    /// Neighbors of `i` (positive weight) with their weights, ascending by index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .row(i)
            .iter()
            .enumerate()
            .filter(move |&(j, &w)| j != i && w > 0.0)
            .map(|(j, &w)| (j, w))
    }
}

/// Rebuilds the graph from scratch for the current positions.
pub fn build_graph(positions: &[Position], params: &RangeParams) -> Result<CommGraph, GraphError> {
    let n = positions.len();
    if let Some(first) = positions.first() {
        let m = first.dim();
        for p in positions {
            if p.dim() != m {
                return Err(GraphError::DimensionMismatch(m, p.dim()));
            }
            if !p.is_finite() {
                return Err(GraphError::NonFinitePosition);
            }
        }
    }
    let mut weights = Matrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = edge_weight(&positions[i], &positions[j], params)?;
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(CommGraph::assemble(weights))
}

/// Gap `lambda3 - lambda2` below which the Fiedler eigenvalue counts as repeated.
pub const DEGENERACY_GAP: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda2: f64,
    /// Unit eigenvector for `lambda2`, first nonzero component positive.
    pub fiedler: Vec<f64>,
    pub all_eigenvalues: Vec<f64>,
    /// `lambda2` is (numerically) repeated, so `fiedler` is not unique.
    pub degenerate: bool,
}

/// Full symmetric eigendecomposition of the Laplacian.
pub fn spectral_oracle(graph: &CommGraph) -> Result<SpectralResult, GraphError> {
    let n = graph.len();
    if n < 2 {
        return Err(GraphError::TooFewAgents(n));
    }
    let eig = jacobi_eigen(graph.laplacian(), JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS)?;
    let mut fiedler = eig.vector(1);
    if let Some(first) = fiedler.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            fiedler.iter_mut().for_each(|c| *c = -*c);
        }
    }
    let degenerate = n > 2 && eig.values[2] - eig.values[1] < DEGENERACY_GAP;
    Ok(SpectralResult {
        lambda2: eig.values[1],
        fiedler,
        all_eigenvalues: eig.values,
        degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct Lambda2Gradient {
    /// One m-vector per agent.
    pub per_agent: Vec<Vec<f64>>,
    /// Gradient assumes a simple eigenvalue; set when that does not hold.
    pub unreliable: bool,
}

/// Exact gradient of lambda2 with respect to every agent position, given the
/// Fiedler vector of the current graph.
pub fn lambda2_gradient_exact(
    positions: &[Position],
    graph: &CommGraph,
    spectral: &SpectralResult,
    sigma: f64,
) -> Lambda2Gradient {
    let n = positions.len();
    let v = &spectral.fiedler;
    let s2 = sigma * sigma;
    let per_agent = (0..n)
        .map(|i| {
            let mut g = vec![0.0; positions[i].dim()];
            for (j, a) in graph.neighbors(i) {
                let dv = v[i] - v[j];
                let coef = -a * dv * dv / s2;
                for (gk, dk) in g.iter_mut().zip(positions[i].delta(&positions[j])) {
                    *gk += coef * dk;
                }
            }
            g
        })
        .collect();
    Lambda2Gradient {
        per_agent,
        unreliable: spectral.degenerate,
    }
}

/// Oracle lambda2 for a set of positions; zero for a single agent.
pub fn lambda2_of(positions: &[Position], params: &RangeParams) -> Result<f64, GraphError> {
    if positions.len() < 2 {
        return Ok(0.0);
    }
    let g = build_graph(positions, params)?;
    Ok(spectral_oracle(&g)?.lambda2)
}

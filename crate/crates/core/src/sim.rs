//! Scenario engine: synchronous rounds of graph refresh, corrupted estimate
//! exchange, estimation, control, actuation and recording.
//!
//! Within a round every agent reads the estimates its neighbors published at
//! the end of the previous round. The centralized oracle is evaluated for the
//! trace only; nothing it produces reaches an agent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::actuation::{integrate_step, lowpass_step, FilterState, FilterTarget};
use crate::config::{ConfigError, Mode, ScenarioConfig};
use crate::control::{
    connectivity_control, formation_control_agent, obstacle_avoidance, ControlNeighbor, ObstacleField,
};
use crate::disturbance::{agent_stream, corrupt_with, stream, ChannelRng, FailureScope, StreamPurpose, SCENARIO_STREAM};
use crate::estimator::{
    estimator_step, lambda2_gradient_local, lambda2_local, EstimatorError, EstimatorState, GradientNeighbor, NeighborReport,
};
use crate::graph::{build_graph, spectral_oracle, CommGraph, GraphError, Position, RangeParams};

/// Oracle lambda2 at or below this counts as disconnected.
pub const LOSS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no connected initial placement after {0} attempts")]
    InitialPlacement(usize),
    #[error("non-finite state for agent {agent} at t = {t}")]
    NonFiniteState { t: f64, agent: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    /// Oracle lambda2 of the graph at the start of the round.
    pub lambda2_true: f64,
    /// Each agent's local estimate, as used for control this round.
    pub lambda2_est: Vec<f64>,
    /// Each agent's eigenvector-component estimate after this round.
    pub nu: Vec<f64>,
    /// Euclidean norm of the stacked connectivity commands.
    pub u_c_norm: f64,
    pub u_c_agent_norms: Vec<f64>,
    pub positions: Vec<Position>,
    pub connected: bool,
    /// False from the first disconnection onward.
    pub estimates_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Maintained,
    Lost { t_loss: f64 },
}

impl Outcome {
    pub fn is_maintained(&self) -> bool {
        matches!(self, Outcome::Maintained)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub obstacles: Vec<Position>,
    pub trace: Vec<TraceRecord>,
    pub outcome: Outcome,
}

impl RunResult {
    pub fn u_c_series(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.u_c_norm).collect()
    }
}

/// Switches that do not change agent behavior.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Compute oracle lambda2 for the trace. When off, `lambda2_true` is NaN.
    pub oracle: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { oracle: true }
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Position {
    Position::from(
        lo.iter()
            .zip(hi)
            .map(|(a, b)| if a == b { *a } else { rng.random_range(*a..*b) })
            .collect::<Vec<_>>(),
    )
}

/// Draws initial positions until the graph is connected, then the obstacles.
pub fn initial_layout(cfg: &ScenarioConfig) -> Result<(Vec<Position>, Vec<Position>), SimError> {
    let range = cfg.range_params();
    let mut rng = stream(cfg.seed, SCENARIO_STREAM);
    let mut placed = None;
    for _ in 0..cfg.max_init_retries.max(1) {
        let candidate: Vec<Position> = (0..cfg.n_agents)
            .map(|_| uniform_in(&mut rng, &cfg.init_box_min, &cfg.init_box_max))
            .collect();
        let g = build_graph(&candidate, &range)?;
        if spectral_oracle(&g)?.lambda2 > LOSS_TOLERANCE {
            placed = Some(candidate);
            break;
        }
    }
    let positions = placed.ok_or(SimError::InitialPlacement(cfg.max_init_retries.max(1)))?;
    let obstacles = (0..cfg.obstacles.count)
        .map(|_| uniform_in(&mut rng, &cfg.obstacles.band_min, &cfg.obstacles.band_max))
        .collect();
    Ok((positions, obstacles))
}

/// Per-round output before the oracle is consulted.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub lambda2_est: Vec<f64>,
    pub u_c: Vec<Vec<f64>>,
}

/// A scenario in progress.
pub struct Simulation {
    cfg: ScenarioConfig,
    range: RangeParams,
    offsets: Vec<Position>,
    field: ObstacleField,
    positions: Vec<Position>,
    estimators: Vec<EstimatorState>,
    filters: Vec<FilterState>,
    channels: Vec<ChannelRng>,
    obstacle_rngs: Vec<ChaCha8Rng>,
    round: usize,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let (positions, obstacles) = initial_layout(cfg)?;
        Self::with_layout(cfg, positions, obstacles)
    }

    /// Starts from explicit positions and obstacles.
    pub fn with_layout(cfg: &ScenarioConfig, positions: Vec<Position>, obstacles: Vec<Position>) -> Result<Self, SimError> {
        cfg.validate()?;
        let n = cfg.n_agents;
        let m = cfg.dim();
        if positions.len() != n {
            return Err(ConfigError::Invalid {
                key: "n_agents".into(),
                reason: format!("layout has {} positions", positions.len()),
            }
            .into());
        }
        let estimators = (0..n)
            .map(|i| {
                let mut rng = agent_stream(cfg.seed, i, StreamPurpose::Initialization);
                EstimatorState::new(rng.random_range(-1.0..=1.0))
            })
            .collect();
        let filter_dim = m;
        Ok(Self {
            range: cfg.range_params(),
            offsets: cfg.formation_offsets(),
            field: ObstacleField::new(obstacles, &cfg.obstacles),
            positions,
            estimators,
            filters: (0..n).map(|_| FilterState::at_rest(filter_dim, cfg.actuation.cutoff)).collect(),
            channels: (0..n).map(|i| ChannelRng::for_agent(cfg.seed, i)).collect(),
            obstacle_rngs: (0..n).map(|i| agent_stream(cfg.seed, i, StreamPurpose::Obstacle)).collect(),
            round: 0,
            cfg: cfg.clone(),
        })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn estimators(&self) -> &[EstimatorState] {
        &self.estimators
    }

    pub fn obstacles(&self) -> &[Position] {
        &self.field.points
    }

    pub fn time(&self) -> f64 {
        self.round as f64 * self.cfg.dt
    }

    pub fn graph(&self) -> Result<CommGraph, GraphError> {
        build_graph(&self.positions, &self.range)
    }

    /// Advances one synchronous round.
    pub fn step(&mut self) -> Result<StepOutput, SimError> {
        let cfg = &self.cfg;
        let n = cfg.n_agents;
        let dt = cfg.dt;
        let sigma = self.range.sigma();
        let dist = &cfg.disturbance;
        let graph = build_graph(&self.positions, &self.range)?;
        let published = self.estimators.clone();

        // Broadcast failures are decided once per sender, on the sender's stream.
        let broadcast_failed: Vec<bool> = match dist.failure_scope {
            FailureScope::Broadcast => self.channels.iter_mut().map(|c| c.draw_failure(dist.p_fail)).collect(),
            FailureScope::Link => Vec::new(),
        };

        let mut next_positions = Vec::with_capacity(n);
        let mut next_estimators = Vec::with_capacity(n);
        let mut lambda2_est = Vec::with_capacity(n);
        let mut u_c_all = Vec::with_capacity(n);

        for i in 0..n {
            let nbrs: Vec<(usize, f64)> = graph.neighbors(i).collect();
            let received: Vec<f64> = nbrs
                .iter()
                .map(|&(j, _)| {
                    let channel = &mut self.channels[i];
                    let failed = match dist.failure_scope {
                        FailureScope::Link => channel.draw_failure(dist.p_fail),
                        FailureScope::Broadcast => broadcast_failed[j],
                    };
                    let noise = channel.draw_noise(dist.eta);
                    corrupt_with(published[j].nu, failed, noise, dist)
                })
                .collect();

            let reports: Vec<NeighborReport> = nbrs
                .iter()
                .zip(&received)
                .map(|(&(j, a), &nu)| NeighborReport {
                    weight: a,
                    nu,
                    avg1: published[j].avg1,
                    avg2: published[j].avg2,
                })
                .collect();
            let state = estimator_step(&published[i], &reports, &cfg.estimator, dt)?;
            let lambda2_i = lambda2_local(&state, &cfg.estimator);

            let p_i = &self.positions[i];
            let grad_nbrs: Vec<GradientNeighbor<'_>> = nbrs
                .iter()
                .zip(&received)
                .map(|(&(j, a), &nu)| GradientNeighbor {
                    nu,
                    position: &self.positions[j],
                    weight: a,
                })
                .collect();
            let gradient = lambda2_gradient_local(state.nu, p_i, &grad_nbrs, sigma);
            let gamma_i = cfg.control.gamma_for(i);
            let u_c = connectivity_control(lambda2_i, &gradient, gamma_i, &cfg.control);

            let ctrl_nbrs: Vec<ControlNeighbor<'_>> = nbrs
                .iter()
                .zip(&received)
                .map(|(&(j, a), &nu)| ControlNeighbor {
                    position: &self.positions[j],
                    nu,
                    weight: a,
                    offset: Some(&self.offsets[j]),
                })
                .collect();
            let mut u_d = match cfg.mode {
                Mode::Formation => formation_control_agent(
                    p_i,
                    &self.offsets[i],
                    state.nu,
                    lambda2_i,
                    gamma_i,
                    &ctrl_nbrs,
                    &cfg.control,
                    sigma,
                ),
                Mode::Rendezvous => {
                    let mut u = vec![0.0; p_i.dim()];
                    for nb in &ctrl_nbrs {
                        for (uk, d) in u.iter_mut().zip(p_i.delta(nb.position)) {
                            *uk -= nb.weight * d;
                        }
                    }
                    u
                }
            };
            for (uk, v) in u_d.iter_mut().zip(&cfg.drift) {
                *uk += v;
            }
            let u_obst = obstacle_avoidance(p_i, &self.field, &mut self.obstacle_rngs[i]);

            let velocity: Vec<f64> = if cfg.actuation.ideal {
                u_c.iter().zip(&u_d).zip(&u_obst).map(|((c, d), o)| c + d + o).collect()
            } else {
                match cfg.actuation.filter_target {
                    FilterTarget::Connectivity => {
                        let y = lowpass_step(&mut self.filters[i], &u_c, dt);
                        y.iter().zip(&u_d).zip(&u_obst).map(|((c, d), o)| c + d + o).collect()
                    }
                    FilterTarget::Total => {
                        let raw: Vec<f64> = u_c.iter().zip(&u_d).zip(&u_obst).map(|((c, d), o)| c + d + o).collect();
                        lowpass_step(&mut self.filters[i], &raw, dt)
                    }
                }
            };
            let next = integrate_step(p_i, &velocity, dt);
            if !next.is_finite() || !state.is_finite() || !lambda2_i.is_finite() {
                return Err(SimError::NonFiniteState { t: self.time(), agent: i });
            }
            next_positions.push(next);
            next_estimators.push(state);
            lambda2_est.push(lambda2_i);
            u_c_all.push(u_c);
        }

        self.positions = next_positions;
        self.estimators = next_estimators;
        self.round += 1;
        Ok(StepOutput {
            lambda2_est,
            u_c: u_c_all,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult, SimError> {
    run_scenario_with(cfg, RunOptions::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, options: RunOptions) -> Result<RunResult, SimError> {
    let sim = Simulation::new(cfg)?;
    run_simulation(sim, options)
}

/// Runs an already-initialized simulation to the configured horizon.
pub fn run_simulation(mut sim: Simulation, options: RunOptions) -> Result<RunResult, SimError> {
    let steps = sim.cfg.steps();
    let range = sim.range;
    let mut trace = Vec::with_capacity(steps);
    let mut outcome = Outcome::Maintained;
    for _ in 0..steps {
        let t = sim.time();
        let positions = sim.positions.clone();
        let lambda2_true = if options.oracle {
            spectral_oracle(&build_graph(&positions, &range)?)?.lambda2
        } else {
            f64::NAN
        };
        let connected = !options.oracle || lambda2_true > LOSS_TOLERANCE;
        if !connected && outcome.is_maintained() {
            outcome = Outcome::Lost { t_loss: t };
        }
        let out = sim.step()?;
        let u_c_agent_norms: Vec<f64> = out.u_c.iter().map(|u| norm(u)).collect();
        let u_c_norm = u_c_agent_norms.iter().map(|x| x * x).sum::<f64>().sqrt();
        trace.push(TraceRecord {
            t,
            lambda2_true,
            lambda2_est: out.lambda2_est,
            nu: sim.estimators.iter().map(|e| e.nu).collect(),
            u_c_norm,
            u_c_agent_norms,
            positions,
            connected,
            estimates_valid: outcome.is_maintained(),
        });
    }
    Ok(RunResult {
        seed: sim.cfg.seed,
        obstacles: sim.field.points.clone(),
        config: sim.cfg,
        trace,
        outcome,
    })
}

/// Runs the scenario and, when disturbances are active, its undisturbed twin
/// (same seed) as the reference.
pub fn run_with_reference(cfg: &ScenarioConfig) -> Result<(RunResult, Option<RunResult>), SimError> {
    let main = run_scenario(cfg)?;
    if !cfg.disturbance.is_active() {
        return Ok((main, None));
    }
    let mut twin = cfg.clone();
    twin.disturbance = cfg.disturbance.disabled();
    Ok((main, Some(run_scenario(&twin)?)))
}

/// How a batch is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Independent runs, one per seed, results in seed order. A failed run does
/// not stop its siblings.
pub fn batch_run(cfg: &ScenarioConfig, seeds: &[u64]) -> Vec<Result<RunResult, SimError>> {
    batch_map(cfg, seeds, Execution::default(), |r| r)
}

/// Like [`batch_run`], but reduces each run with `f` as soon as it finishes
/// so that full traces need not be held at once.
pub fn batch_map<T, F>(cfg: &ScenarioConfig, seeds: &[u64], execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Result<RunResult, SimError>) -> T + Sync + Send,
{
    let one = |&seed: &u64| {
        let mut c = cfg.clone();
        c.seed = seed;
        f(run_scenario(&c))
    };
    match execution {
        Execution::Sequential => seeds.iter().map(one).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            seeds.par_iter().map(one).collect()
        }
    }
}

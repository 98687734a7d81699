//! Communication failures and additive white Gaussian noise on exchanged
//! eigenvector estimates.
//!
//! A received estimate is replaced by the default `nu_default` with
//! probability `p_fail`, and zero-mean Gaussian noise of variance `eta` is
//! added in either case.
//!
//! Randomness comes from ChaCha8 streams derived from the scenario seed.
//! Every (agent, purpose) pair owns its own stream, so switching noise on
//! does not shift the failure draws and vice versa. ChaCha8 output and the
//! ziggurat normal sampler of `rand_distr` are platform independent, which
//! keeps traces bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisturbanceError {
    #[error("p_fail must lie in [0, 1], got {0}")]
    FailureProbability(f64),
    #[error("eta must be finite and nonnegative, got {0}")]
    NoiseVariance(f64),
    #[error("nu_default must be finite, got {0}")]
    DefaultValue(f64),
}

/// Whether a failure drops one link or the sender's whole broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureScope {
    #[default]
    Link,
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    pub p_fail: f64,
    /// Noise variance.
    pub eta: f64,
    pub nu_default: f64,
    pub failure_scope: FailureScope,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            p_fail: 0.0,
            eta: 0.0,
            nu_default: 1.0,
            failure_scope: FailureScope::Link,
        }
    }
}

impl DisturbanceConfig {
    pub fn new(p_fail: f64, eta: f64) -> Result<Self, DisturbanceError> {
        let cfg = Self {
            p_fail,
            eta,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DisturbanceError> {
        if !(0.0..=1.0).contains(&self.p_fail) {
            return Err(DisturbanceError::FailureProbability(self.p_fail));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(DisturbanceError::NoiseVariance(self.eta));
        }
        if !self.nu_default.is_finite() {
            return Err(DisturbanceError::DefaultValue(self.nu_default));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.p_fail > 0.0 || self.eta > 0.0
    }

    /// Same defaults with both failure and noise switched off.
    pub fn disabled(&self) -> Self {
        Self {
            p_fail: 0.0,
            eta: 0.0,
            ..*self
        }
    }
}

/// What a random stream is used for. Part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Failure = 0,
    Noise = 1,
    Obstacle = 2,
    Initialization = 3,
}

const PURPOSES: u64 = 8;

/// Scenario-level stream for initial placement and obstacle layout.
pub const SCENARIO_STREAM: u64 = u64::MAX;

/// Independent ChaCha8 stream for one (agent, purpose) pair.
pub fn agent_stream(seed: u64, agent: usize, purpose: StreamPurpose) -> ChaCha8Rng {
    stream(seed, agent as u64 * PURPOSES + purpose as u64)
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The two channel streams owned by one receiving agent.
#[derive(Debug, Clone)]
pub struct ChannelRng {
    failure: ChaCha8Rng,
    noise: ChaCha8Rng,
}

impl ChannelRng {
    pub fn for_agent(seed: u64, agent: usize) -> Self {
        Self {
            failure: agent_stream(seed, agent, StreamPurpose::Failure),
            noise: agent_stream(seed, agent, StreamPurpose::Noise),
        }
    }

    /// One Bernoulli(p_fail) draw from the failure stream.
    pub fn draw_failure(&mut self, p_fail: f64) -> bool {
        self.failure.random::<f64>() < p_fail
    }

    /// One Normal(0, eta) draw from the noise stream.
    pub fn draw_noise(&mut self, eta: f64) -> f64 {
        let z: f64 = self.noise.sample(StandardNormal);
        eta.sqrt() * z
    }
}

/// Applies the failure/noise channel to one received estimate.
///
/// Draws exactly one Bernoulli and one Gaussian variate, in that order, from
/// their respective streams, whatever the configuration.
pub fn corrupt_estimate(nu_true: f64, cfg: &DisturbanceConfig, rng: &mut ChannelRng) -> f64 {
    let failed = rng.draw_failure(cfg.p_fail);
    let noise = rng.draw_noise(cfg.eta);
    corrupt_with(nu_true, failed, noise, cfg)
}

/// Channel output for an already-drawn failure flag and noise sample.
pub fn corrupt_with(nu_true: f64, failed: bool, noise: f64, cfg: &DisturbanceConfig) -> f64 {
    let base = if failed { cfg.nu_default } else { nu_true };
    base + noise
}

/// Expected failures per interaction round: `N * p_fail`.
pub fn system_failure_rate(agents: usize, p_fail: f64) -> f64 {
    agents as f64 * p_fail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_channel_is_identity() {
        let cfg = DisturbanceConfig::default();
        let mut rng = ChannelRng::for_agent(7, 0);
        for &x in &[-3.5, 0.0, 0.25, 1e9] {
            assert_eq!(corrupt_estimate(x, &cfg, &mut rng), x);
        }
    }

    #[test]
    fn certain_failure_yields_default() {
        let cfg = DisturbanceConfig::new(1.0, 0.0).unwrap();
        let mut rng = ChannelRng::for_agent(7, 3);
        for &x in &[-3.5, 0.0, 0.25] {
            assert_eq!(corrupt_estimate(x, &cfg, &mut rng), 1.0);
        }
    }

    #[test]
    fn failure_rate_formula() {
        assert_eq!(system_failure_rate(5, 0.2), 1.0);
        assert_eq!(system_failure_rate(7, 0.0), 0.0);
        assert_eq!(system_failure_rate(10, 0.05), 0.5);
    }

    #[test]
    fn validation() {
        assert!(DisturbanceConfig::new(1.5, 0.0).is_err());
        assert!(DisturbanceConfig::new(-0.1, 0.0).is_err());
        assert!(DisturbanceConfig::new(0.1, -1.0).is_err());
        assert!(DisturbanceConfig::new(0.1, f64::INFINITY).is_err());
        assert!(DisturbanceConfig::new(0.7, 5.0).is_ok());
    }

    #[test]
    fn noise_does_not_shift_failure_draws() {
        let quiet = DisturbanceConfig::new(0.3, 0.0).unwrap();
        let noisy = DisturbanceConfig::new(0.3, 2.0).unwrap();
        let mut a = ChannelRng::for_agent(11, 2);
        let mut b = ChannelRng::for_agent(11, 2);
        let mut noise_only = agent_stream(11, 2, StreamPurpose::Noise);
        for _ in 0..1000 {
            let x = corrupt_estimate(0.0, &quiet, &mut a);
            let y = corrupt_estimate(0.0, &noisy, &mut b);
            let z: f64 = noise_only.sample(StandardNormal);
            assert!((y - 2f64.sqrt() * z - x).abs() < 1e-12);
        }
    }

    #[test]
    fn streams_are_distinct_per_agent_and_purpose() {
        let mut a = agent_stream(1, 0, StreamPurpose::Failure);
        let mut b = agent_stream(1, 1, StreamPurpose::Failure);
        let mut c = agent_stream(1, 0, StreamPurpose::Noise);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        let xc: u64 = c.random();
        assert_ne!(xa, xb);
        assert_ne!(xa, xc);
    }
}

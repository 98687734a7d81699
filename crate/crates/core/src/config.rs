//! Scenario configuration: a TOML document with every field optional.
//!
//! Missing keys take their defaults, unknown keys are rejected, and
//! `section.key=value` overrides are applied to the parsed document before it
//! is validated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::ActuationParams;
use crate::control::{ControlParams, ObstacleParams};
use crate::disturbance::DisturbanceConfig;
use crate::estimator::EstimatorGains;
use crate::graph::{Position, RangeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected dotted.key=value")]
    Override(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rendezvous,
    #[default]
    Formation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangeConfig {
    /// Communication range R in meters.
    pub max_range: f64,
    /// Edge weight at distance R.
    pub threshold: f64,
}

impl Default for RangeConfig {
    fn default() -> Self {
        Self {
            max_range: 4.0,
            threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationConfig {
    /// Circumradius of the regular polygon used when `offsets` is empty.
    pub radius: f64,
    /// Explicit per-agent offsets; overrides `radius` when non-empty.
    pub offsets: Vec<Vec<f64>>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            radius: 1.5,
            offsets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub mode: Mode,
    /// Integration step (s).
    pub dt: f64,
    /// Simulated horizon (s).
    pub horizon: f64,
    /// Initial positions are drawn uniformly from this box.
    pub init_box_min: Vec<f64>,
    pub init_box_max: Vec<f64>,
    /// Common mission velocity added to every agent's desired control.
    pub drift: Vec<f64>,
    pub max_init_retries: usize,
    pub range: RangeConfig,
    pub estimator: EstimatorGains,
    pub control: ControlParams,
    pub formation: FormationConfig,
    pub obstacles: ObstacleParams,
    pub disturbance: DisturbanceConfig,
    pub actuation: ActuationParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_agents: 5,
            mode: Mode::Formation,
            dt: 1e-3,
            horizon: 5.0,
            init_box_min: vec![0.0, 0.0],
            init_box_max: vec![2.0, 2.0],
            drift: vec![2.0, 0.0],
            max_init_retries: 1000,
            range: RangeConfig::default(),
            estimator: EstimatorGains::default(),
            control: ControlParams::default(),
            formation: FormationConfig::default(),
            obstacles: ObstacleParams::default(),
            disturbance: DisturbanceConfig::default(),
            actuation: ActuationParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn dim(&self) -> usize {
        self.init_box_min.len()
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn range_params(&self) -> RangeParams {
        RangeParams::new(self.range.max_range, self.range.threshold).expect("validated range parameters")
    }

    /// Desired formation offsets: explicit ones, or a regular polygon.
    pub fn formation_offsets(&self) -> Vec<Position> {
        let m = self.dim();
        if !self.formation.offsets.is_empty() {
            return self.formation.offsets.iter().cloned().map(Position::from).collect();
        }
        let n = self.n_agents;
        (0..n)
            .map(|i| {
                let mut c = vec![0.0; m];
                if m == 1 {
                    c[0] = self.formation.radius * i as f64;
                } else {
                    let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    c[0] = self.formation.radius * th.cos();
                    c[1] = self.formation.radius * th.sin();
                }
                Position::from(c)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_agents < 2 {
            return Err(ConfigError::invalid("n_agents", format!("need at least 2 agents, got {}", self.n_agents)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        let m = self.init_box_min.len();
        if m == 0 {
            return Err(ConfigError::invalid("init_box_min", "dimension must be at least 1"));
        }
        for (key, v) in [
            ("init_box_max", &self.init_box_max),
            ("drift", &self.drift),
            ("obstacles.band_min", &self.obstacles.band_min),
            ("obstacles.band_max", &self.obstacles.band_max),
        ] {
            if v.len() != m {
                return Err(ConfigError::invalid(key, format!("expected {m} coordinates, got {}", v.len())));
            }
        }
        for (lo, hi, key) in [
            (&self.init_box_min, &self.init_box_max, "init_box_max"),
            (&self.obstacles.band_min, &self.obstacles.band_max, "obstacles.band_max"),
        ] {
            if lo.iter().zip(hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
                return Err(ConfigError::invalid(key, "every coordinate must be finite and >= the matching minimum"));
            }
        }
        RangeParams::new(self.range.max_range, self.range.threshold)
            .map_err(|e| ConfigError::invalid("range", e.to_string()))?;
        self.estimator
            .validate()
            .map_err(|e| ConfigError::invalid("estimator", e.to_string()))?;
        self.control
            .validate(self.n_agents)
            .map_err(|e| ConfigError::invalid("control", e.to_string()))?;
        self.disturbance.validate().map_err(|e| {
            let key = match e {
                crate::disturbance::DisturbanceError::FailureProbability(_) => "disturbance.p_fail",
                crate::disturbance::DisturbanceError::NoiseVariance(_) => "disturbance.eta",
                crate::disturbance::DisturbanceError::DefaultValue(_) => "disturbance.nu_default",
            };
            ConfigError::invalid(key, e.to_string())
        })?;
        if !(self.actuation.cutoff > 0.0 && self.actuation.cutoff.is_finite()) {
            return Err(ConfigError::invalid("actuation.cutoff", format!("must be positive, got {}", self.actuation.cutoff)));
        }
        let o = &self.obstacles;
        for (key, v) in [
            ("obstacles.influence_radius", o.influence_radius),
            ("obstacles.repulsion_gain", o.repulsion_gain),
            ("obstacles.u_obst_max", o.u_obst_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(key, format!("must be positive, got {v}")));
            }
        }
        if !(self.formation.radius > 0.0) {
            return Err(ConfigError::invalid("formation.radius", "must be positive"));
        }
        if !self.formation.offsets.is_empty() {
            if self.formation.offsets.len() != self.n_agents {
                return Err(ConfigError::invalid(
                    "formation.offsets",
                    format!("need {} offsets, got {}", self.n_agents, self.formation.offsets.len()),
                ));
            }
            if self.formation.offsets.iter().any(|o| o.len() != m || o.iter().any(|x| !x.is_finite())) {
                return Err(ConfigError::invalid("formation.offsets", format!("each offset needs {m} finite coordinates")));
            }
        }
        Ok(())
    }

    /// Effective configuration as a TOML document.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

/// Parses a TOML scenario document, applies `key=value` overrides, fills
/// defaults and validates.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for ov in overrides {
        apply_override(&mut doc, ov)?;
    }
    let cfg: ScenarioConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(doc: &mut toml::Table, ov: &str) -> Result<(), ConfigError> {
    let (key, raw) = ov.split_once('=').ok_or_else(|| ConfigError::Override(ov.to_string()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(ov.to_string()));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut table = doc;
    for part in path {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::invalid(key, format!("`{part}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.n_agents, 5);
        assert_eq!(cfg.mode, Mode::Formation);
        assert_eq!(cfg.obstacles.count, 150);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.horizon, 5.0);
        assert_eq!(cfg.steps(), 5000);
    }

    #[test]
    fn overrides_apply_after_parse() {
        let cfg = parse_config("[disturbance]\np_fail = 0.1\n", &["disturbance.p_fail=0.2".into()]).unwrap();
        assert_eq!(cfg.disturbance.p_fail, 0.2);
        let cfg = parse_config("", &["mode=rendezvous".into(), "n_agents=7".into()]).unwrap();
        assert_eq!(cfg.mode, Mode::Rendezvous);
        assert_eq!(cfg.n_agents, 7);
    }

    #[test]
    fn out_of_range_probability_names_the_key() {
        let err = parse_config("", &["disturbance.p_fail=1.5".into()]).unwrap_err();
        match err {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "disturbance.p_fail"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        let err = parse_config("bogus = 3\n", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = parse_config("[control]\nepsilon = \"small\"\n", &[]).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert!(matches!(parse_config("", &["novalue".into()]), Err(ConfigError::Override(_))));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse_config("", &["disturbance.eta=0.5".into(), "seed=42".into()]).unwrap();
        let back = parse_config(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn polygon_offsets() {
        let cfg = ScenarioConfig::default();
        let off = cfg.formation_offsets();
        assert_eq!(off.len(), 5);
        for o in &off {
            let r = (o.coords()[0].powi(2) + o.coords()[1].powi(2)).sqrt();
            assert!((r - 1.5).abs() < 1e-12);
        }
    }
}

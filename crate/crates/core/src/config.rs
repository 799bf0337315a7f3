//! Declarative scenario files (TOML, or JSON by extension).
//!
//! A file names a built-in scenario and may override any of its
//! parameters:
//!
//! ```toml
//! scenario = "example1"
//! epsilon = 0.05
//! step = 1e-3
//! horizon = 10.0
//! constants = "estimate"        # or { c1 = .., c2 = .., c3 = .., c4 = .. }
//!
//! [trigger]
//! kind = "delta"                # delta | quadratic | kappa | every-step | never
//! omega = { lower = [-1.5, -1.5], upper = [1.5, 1.5] }
//!
//! [delay]
//! kind = "constant"             # none | constant | sequence | random
//! value = 0.001
//!
//! [regions.p1]
//! type = "ball"
//! center = [0.0, 0.0]
//! radius = 0.1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::DelayModel;
use crate::regions::{Region, RegionError};
use crate::rtl::{Proposition, PropositionTable};
use crate::scenarios::{self, ConstantsSpec, PotentialGains, Scenario, ScenarioError};
use crate::trigger::{LyapunovConstants, TriggerError, TriggerKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("region '{name}': {source}")]
    Region { name: String, source: RegionError },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Constants(#[from] TriggerError),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionConfig {
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        dims: Option<Vec<usize>>,
    },
    Polyhedron {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        dims: Option<Vec<usize>>,
    },
}

impl RegionConfig {
    fn build(&self, name: &str) -> Result<Proposition, ConfigError> {
        let wrap = |source| ConfigError::Region { name: name.to_string(), source };
        let (region, label, dims) = match self {
            RegionConfig::Ball { center, radius, label, dims } => {
                (Region::ball(center.clone(), *radius).map_err(wrap)?, label, dims)
            }
            RegionConfig::Polyhedron { a, b, label, dims } => {
                (Region::polyhedron(a.clone(), b.clone()).map_err(wrap)?, label, dims)
            }
        };
        let prop = Proposition::new(label.clone().unwrap_or_else(|| name.to_string()), region);
        Ok(match dims {
            Some(d) => prop.with_projection(d.clone()),
            None => prop,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    #[serde(default)]
    pub kind: Option<TriggerKind>,
    #[serde(default)]
    pub omega: Option<OmegaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DelayConfig {
    pub fn build(&self, default_seed: u64) -> Result<DelayModel, ConfigError> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| invalid("delay", format!("kind '{}' needs '{key}'", self.kind)))
        };
        let model = match self.kind.as_str() {
            "none" => DelayModel::None,
            "constant" => DelayModel::Constant(need(self.value, "value")?),
            "sequence" => DelayModel::Sequence(
                self.values.clone().ok_or_else(|| invalid("delay", "kind 'sequence' needs 'values'"))?,
            ),
            "random" => DelayModel::RandomBounded {
                max: need(self.max, "max")?,
                seed: self.seed.unwrap_or(default_seed),
            },
            other => {
                return Err(invalid(
                    "delay",
                    format!("unknown kind '{other}' (expected none, constant, sequence or random)"),
                ))
            }
        };
        model.validate().map_err(|e| invalid("delay", e.to_string()))?;
        Ok(model)
    }
}

/// Parses `KIND[:PARAM]`: `none`, `constant:0.01`, `random:0.02`,
/// `sequence:0.01,0.02`.
pub fn parse_delay_spec(spec: &str, seed: u64) -> Result<DelayModel, ConfigError> {
    let (kind, param) = match spec.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (spec, None),
    };
    let number =
        |s: &str| s.trim().parse::<f64>().map_err(|_| invalid("delay", format!("'{s}' is not a number")));
    let cfg = match (kind, param) {
        ("none", None) => {
            DelayConfig { kind: "none".into(), value: None, values: None, max: None, seed: None }
        }
        ("constant", Some(p)) => {
            DelayConfig { kind: kind.into(), value: Some(number(p)?), values: None, max: None, seed: None }
        }
        ("random", Some(p)) => {
            DelayConfig { kind: kind.into(), value: None, values: None, max: Some(number(p)?), seed: None }
        }
        ("sequence", Some(p)) => DelayConfig {
            kind: kind.into(),
            value: None,
            values: Some(p.split(',').map(number).collect::<Result<_, _>>()?),
            max: None,
            seed: None,
        },
        _ => {
            return Err(invalid(
                "delay",
                format!("'{spec}' (expected none, constant:D, random:MAX or sequence:D1,D2,..)"),
            ))
        }
    };
    cfg.build(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantsConfig {
    Keyword(String),
    Explicit(LyapunovConstants),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub formula: Option<String>,
    #[serde(default)]
    pub regions: Option<BTreeMap<String, RegionConfig>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub trigger: Option<TriggerConfig>,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
    #[serde(default)]
    pub delay: Option<DelayConfig>,
    /// Potential-field gains for the unicycle scenario.
    #[serde(default)]
    pub gains: Option<PotentialGains>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json)
            .map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message })
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Built-in scenario with every override applied.
    pub fn resolve(&self) -> Result<Scenario, ConfigError> {
        let mut s = scenarios::by_name(&self.scenario)?;
        if let Some(f) = &self.formula {
            s.formula = f.clone();
        }
        if let Some(regions) = &self.regions {
            let mut table = PropositionTable::new();
            for (name, rc) in regions {
                table.insert(name.clone(), rc.build(name)?);
            }
            s.table = table;
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(invalid("epsilon", format!("must be positive, got {eps}")));
            }
            s.epsilon = eps;
        }
        if let Some(h) = self.step {
            s.step = h;
        }
        if let Some(t) = self.horizon {
            s.horizon = t;
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != s.system.dim() {
                return Err(invalid("x0", format!("expected {} entries, got {}", s.system.dim(), x0.len())));
            }
            s.x0 = DVector::from_vec(x0.clone());
        }
        if let Some(tc) = &self.trigger {
            if let Some(kind) = tc.kind {
                s.trigger = kind;
            }
            if let Some(omega) = &tc.omega {
                let n = s.system.dim();
                if omega.lower.len() != n || omega.upper.len() != n {
                    return Err(invalid("trigger.omega", format!("bounds must have {n} entries")));
                }
                s.omega = (omega.lower.clone(), omega.upper.clone());
            }
        }
        match &self.constants {
            None => {}
            Some(ConstantsConfig::Keyword(k)) if k == "estimate" => s.constants = ConstantsSpec::Estimate,
            Some(ConstantsConfig::Keyword(k)) => {
                return Err(invalid("constants", format!("expected \"estimate\" or a table, got \"{k}\"")))
            }
            Some(ConstantsConfig::Explicit(c)) => {
                c.validate()?;
                s.constants = ConstantsSpec::Explicit(*c);
            }
        }
        if let Some(d) = &self.delay {
            s.delay = d.build(self.seed())?;
        }
        if s.name == "example2" && (self.regions.is_some() || self.epsilon.is_some() || self.gains.is_some())
        {
            let lipschitz = s.controller.lipschitz().to_vec();
            let gains = self.gains.unwrap_or_default();
            s.controller =
                std::sync::Arc::new(scenarios::example2_controller(&s.table, s.epsilon, gains, lipschitz)?);
        } else if self.gains.is_some() {
            return Err(invalid("gains", format!("scenario '{}' has no potential-field gains", s.name)));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml() {
        let cfg = ScenarioConfig::parse("scenario = \"example1\"\n", false).unwrap();
        let s = cfg.resolve().unwrap();
        assert_eq!(s.epsilon, 0.05);
        assert_eq!(s.constants, ConstantsSpec::Estimate);
    }

    #[test]
    fn overrides() {
        let text = r#"
scenario = "example1"
epsilon = 0.04
step = 0.002
x0 = [0.1, 0.9]
constants = { c1 = 0.5, c2 = 0.5, c3 = 1.0, c4 = 1.0 }

[trigger]
kind = "kappa"
omega = { lower = [-2.0, -2.0], upper = [2.0, 2.0] }

[delay]
kind = "random"
max = 0.01

[regions.p1]
type = "polyhedron"
A = [[2.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
b = [0.2, 0.1, 0.1, 0.1]
"#;
        let cfg = ScenarioConfig::parse(text, false).unwrap();
        let s = cfg.resolve().unwrap();
        assert_eq!(s.trigger, TriggerKind::Kappa);
        assert_eq!(s.step, 0.002);
        assert_eq!(s.delay, DelayModel::RandomBounded { max: 0.01, seed: 0 });
        assert!(matches!(s.constants, ConstantsSpec::Explicit(c) if c.c1 == 0.5));
        assert!(s.table.get("p1").unwrap().holds_at(&[0.1, 0.1]).unwrap());
        assert!(!s.table.get("p1").unwrap().holds_at(&[0.11, 0.0]).unwrap());
    }

    #[test]
    fn json_input() {
        let cfg = ScenarioConfig::parse(r#"{"scenario": "example2", "horizon": 30}"#, true).unwrap();
        assert_eq!(cfg.resolve().unwrap().horizon, 30.0);
    }

    #[test]
    fn errors_carry_lines() {
        let err = ScenarioConfig::parse("scenario = \"example1\"\nepsilon = [\n", false).unwrap_err();
        assert!(err.contains("line 2") || err.contains("2:"), "{err}");
        let err = ScenarioConfig::parse("scenario = \"example1\"\nbogus = 1\n", false).unwrap_err();
        assert!(err.contains("bogus"), "{err}");
        let cfg = ScenarioConfig::parse("scenario = \"nope\"", false).unwrap();
        assert!(matches!(cfg.resolve(), Err(ConfigError::Scenario(_))));
        let cfg = ScenarioConfig::parse("scenario = \"example1\"\nconstants = \"guess\"", false).unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn delay_specs() {
        assert_eq!(parse_delay_spec("none", 1).unwrap(), DelayModel::None);
        assert_eq!(parse_delay_spec("constant:0.5", 1).unwrap(), DelayModel::Constant(0.5));
        assert_eq!(
            parse_delay_spec("random:0.2", 9).unwrap(),
            DelayModel::RandomBounded { max: 0.2, seed: 9 }
        );
        assert_eq!(parse_delay_spec("sequence:0.1,0.2", 1).unwrap(), DelayModel::Sequence(vec![0.1, 0.2]));
        assert!(parse_delay_spec("constant", 1).is_err());
        assert!(parse_delay_spec("constant:-1", 1).is_err());
        assert!(parse_delay_spec("weird:1", 1).is_err());
    }
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PenaltyCampaignConfig;
use crate::dynamics::ModelKind;
use crate::error::{Error, Result};
use crate::sim::{ControllerConfig, ControllerKind, Timing};

pub const DEFAULT_GAMMAS: [f64; 3] = [0.08, 0.10, 0.12];

/// Penalty weight: a fixed value or `"estimate"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSetting {
    Fixed(f64),
    Estimate,
}

impl FromStr for AlphaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "estimate" {
            return Ok(AlphaSetting::Estimate);
        }
        s.parse::<f64>()
            .map(AlphaSetting::Fixed)
            .map_err(|_| Error::Config(format!("alpha must be a number or 'estimate', got '{s}'")))
    }
}

impl fmt::Display for AlphaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSetting::Fixed(a) => write!(f, "{a}"),
            AlphaSetting::Estimate => f.write_str("estimate"),
        }
    }
}

impl Serialize for AlphaSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaSetting::Fixed(a) => s.serialize_f64(*a),
            AlphaSetting::Estimate => s.serialize_str("estimate"),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(a) => Ok(AlphaSetting::Fixed(a)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::One(x) => vec![x],
        Raw::Many(v) => v,
    })
}

/// Batch configuration. Every field has a default, so a config file only
/// needs the entries it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Empty means every controller that supports the model.
    #[serde(alias = "controller", deserialize_with = "one_or_many")]
    pub controllers: Vec<ControllerKind>,
    #[serde(alias = "gamma", deserialize_with = "one_or_many")]
    pub gammas: Vec<f64>,
    pub eta: f64,
    pub alpha: AlphaSetting,
    pub horizon: usize,
    pub episodes: usize,
    pub seed: u64,
    pub pedestrians: usize,
    /// `None` leaves the choice to the command: wall time for batches, no
    /// timing for single episodes.
    pub timing: Option<Timing>,
    /// Samples and safety factor used when `alpha = "estimate"`.
    pub penalty_samples: usize,
    pub safety_factor: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::DoubleIntegrator,
            controllers: Vec::new(),
            gammas: DEFAULT_GAMMAS.to_vec(),
            eta: 0.3,
            alpha: AlphaSetting::Estimate,
            horizon: 8,
            episodes: 100,
            seed: 0,
            pedestrians: 5,
            timing: None,
            penalty_samples: 100,
            safety_factor: 2.0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.gammas.is_empty() {
            return Err(Error::Config("at least one gamma value is required".into()));
        }
        for g in &self.gammas {
            if !(*g > 0.0 && *g <= 1.0) {
                return Err(Error::Config(format!("gamma values must lie in (0, 1], got {g}")));
            }
            if !((self.eta > *g || self.eta == 1.0) && self.eta <= 1.0) {
                return Err(Error::Config(format!("eta {} must lie in (gamma, 1] for gamma {g}", self.eta)));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("alpha must be positive, got {a}")));
            }
        }
        if self.model == ModelKind::Unicycle && self.controllers.contains(&ControllerKind::Orca) {
            return Err(Error::Config("the ORCA baseline requires the double-integrator model".into()));
        }
        Ok(())
    }

    /// Controllers to evaluate, in table order.
    pub fn active_controllers(&self) -> Vec<ControllerKind> {
        let mut list: Vec<ControllerKind> = if self.controllers.is_empty() {
            ControllerKind::ALL
                .into_iter()
                .filter(|k| *k != ControllerKind::Orca || self.model == ModelKind::DoubleIntegrator)
                .collect()
        } else {
            self.controllers.clone()
        };
        list.sort();
        list.dedup();
        list
    }

    /// Controller settings shared by every cell; γ and α are filled per cell.
    pub fn controller_config(&self, kind: ControllerKind) -> ControllerConfig {
        let mut c = ControllerConfig::new(kind, self.model);
        c.horizon = self.horizon;
        c.eta = self.eta;
        if let AlphaSetting::Fixed(a) = self.alpha {
            c.alpha = a;
        }
        c
    }

    pub fn penalty_config(&self, gamma: f64) -> PenaltyCampaignConfig {
        PenaltyCampaignConfig {
            model: self.model,
            gamma,
            eta: self.eta,
            horizon: self.horizon,
            n_samples: self.penalty_samples,
            safety_factor: self.safety_factor,
            seed: self.seed,
            pedestrians: self.pedestrians,
        }
    }
}

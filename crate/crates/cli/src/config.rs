use std::fmt;
use std::path::{Path, PathBuf};

use renewal_coupling::bounds::{BoundRequest, Tolerances};
use renewal_coupling::dist::LawSpec;
use renewal_coupling::sim::ExperimentConfig;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// A value that may be given literally or as the string `"auto"`.
#[derive(Debug, Clone, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T> Auto<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(v),
        }
    }
}

impl<T: Serialize> Serialize for Auto<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Auto::Auto => s.serialize_str("auto"),
            Auto::Value(v) => v.serialize(s),
        }
    }
}

struct AutoVisitor<T>(std::marker::PhantomData<T>);

impl<'de, T: Deserialize<'de>> Visitor<'de> for AutoVisitor<T> {
    type Value = Auto<T>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("\"auto\" or a value")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        if v == "auto" {
            Ok(Auto::Auto)
        } else {
            Err(E::invalid_value(de::Unexpected::Str(v), &self))
        }
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
        T::deserialize(de::value::F64Deserializer::new(v)).map(Auto::Value)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        T::deserialize(de::value::F64Deserializer::new(v as f64)).map(Auto::Value)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
        T::deserialize(de::value::F64Deserializer::new(v as f64)).map(Auto::Value)
    }

    fn visit_seq<A: de::SeqAccess<'de>>(self, seq: A) -> Result<Self::Value, A::Error> {
        T::deserialize(de::value::SeqAccessDeserializer::new(seq)).map(Auto::Value)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Auto<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(AutoVisitor(std::marker::PhantomData))
    }
}

fn auto<T>() -> Auto<T> {
    Auto::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub b_prime: f64,
    #[serde(default = "auto")]
    pub theta: Auto<f64>,
    #[serde(default = "default_ells")]
    pub ells: Vec<f64>,
    #[serde(default = "auto")]
    pub betas: Auto<Vec<f64>>,
    #[serde(default)]
    pub beta_max: Option<f64>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub tv_replicas: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default = "default_event_cap")]
    pub event_cap: usize,
    #[serde(default = "default_lorden_replicas")]
    pub lorden_replicas: usize,
    #[serde(default = "default_lorden_horizon")]
    pub lorden_horizon: f64,
    #[serde(default = "default_lorden_grid")]
    pub lorden_grid: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_tau_csv: bool,
}

fn default_ells() -> Vec<f64> {
    vec![1.0]
}
fn default_replicas() -> usize {
    10_000
}
fn default_event_cap() -> usize {
    1_000_000
}
fn default_lorden_replicas() -> usize {
    10_000
}
fn default_lorden_horizon() -> f64 {
    50.0
}
fn default_lorden_grid() -> usize {
    50
}

/// The run file: `[law]`, `[run]`, optional `[tolerances]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub law: LawSpec,
    pub run: RunSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn request(&self) -> BoundRequest {
        BoundRequest {
            law: self.law.clone(),
            b: self.run.b,
            b_prime: self.run.b_prime,
            theta: self.run.theta.clone().value(),
            ells: self.run.ells.clone(),
            betas: self.run.betas.clone().value(),
            beta_max: self.run.beta_max,
            t_grid: self.run.t_grid.clone(),
            tolerances: self.tolerances,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.request(), self.run.replicas, self.run.seed);
        cfg.tv_replicas = self.run.tv_replicas.unwrap_or(self.run.replicas);
        cfg.bins = self.run.bins;
        cfg.event_cap = self.run.event_cap;
        cfg.lorden_replicas = self.run.lorden_replicas;
        cfg.lorden_horizon = self.run.lorden_horizon;
        cfg.lorden_grid = self.run.lorden_grid;
        cfg
    }
}

//! Flat `key = value` experiment configuration with per-experiment defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("unknown key '{key}' for experiment {experiment}")]
    UnknownKey { key: String, experiment: Experiment },
    #[error("line {line}: expected key = value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    VerifyGammaMeasure,
    VerifyDirichletMeasure,
    VerifyIndependence,
    VerifyMoments,
    VerifyCrucialIdentity,
    VerifyIbp,
    GapTheta,
    GapOneParticle,
    GapLaguerre,
    GapJacobi,
    BoundsDirichlet,
    SimulateLaguerre,
    SimulateWf,
    RppCheck,
}

const THETA_KEYS: &[&str] = &["manifold", "length", "a", "b", "nx", "potential", "amplitude"];

impl Experiment {
    pub const ALL: [Experiment; 14] = [
        Experiment::VerifyGammaMeasure,
        Experiment::VerifyDirichletMeasure,
        Experiment::VerifyIndependence,
        Experiment::VerifyMoments,
        Experiment::VerifyCrucialIdentity,
        Experiment::VerifyIbp,
        Experiment::GapTheta,
        Experiment::GapOneParticle,
        Experiment::GapLaguerre,
        Experiment::GapJacobi,
        Experiment::BoundsDirichlet,
        Experiment::SimulateLaguerre,
        Experiment::SimulateWf,
        Experiment::RppCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyGammaMeasure => "verify-gamma-measure",
            Experiment::VerifyDirichletMeasure => "verify-dirichlet-measure",
            Experiment::VerifyIndependence => "verify-independence",
            Experiment::VerifyMoments => "verify-moments",
            Experiment::VerifyCrucialIdentity => "verify-crucial-identity",
            Experiment::VerifyIbp => "verify-ibp",
            Experiment::GapTheta => "gap-theta",
            Experiment::GapOneParticle => "gap-one-particle",
            Experiment::GapLaguerre => "gap-laguerre",
            Experiment::GapJacobi => "gap-jacobi",
            Experiment::BoundsDirichlet => "bounds-dirichlet",
            Experiment::SimulateLaguerre => "simulate-laguerre",
            Experiment::SimulateWf => "simulate-wf",
            Experiment::RppCheck => "rpp-check",
        }
    }

    /// Keys read by this experiment besides `seed`.
    pub fn keys(self) -> Vec<&'static str> {
        use Experiment::*;
        let own: &[&str] = match self {
            VerifyGammaMeasure => &["samples", "eps", "compensate", "mass_values", "cells", "ks_level"],
            VerifyDirichletMeasure => &["samples", "eps", "theta_mass", "sticks", "ks_level", "z_max"],
            VerifyIndependence => &["samples", "eps", "theta_mass", "cells"],
            VerifyMoments => &["samples", "eps", "mass_values", "z_max"],
            VerifyCrucialIdentity => &["samples", "eps", "theta_mass", "lambda", "z_max"],
            VerifyIbp => &["samples", "eps", "theta_mass", "ibp_eps", "z_max"],
            GapTheta => &["theta_mass"],
            GapOneParticle => &["theta_mass", "lambda", "s_min", "s_max", "s_nodes", "boundary"],
            GapLaguerre => &["lambda", "r_values", "s_max", "nodes"],
            GapJacobi => &["lambda", "alpha", "nodes"],
            BoundsDirichlet => &["samples", "eps", "theta_mass", "lambda", "z_max"],
            SimulateLaguerre => &[
                "lambda", "r", "dt", "steps", "thin", "burn_in", "csv_thin", "ks_level", "z_max",
            ],
            SimulateWf => &[
                "lambda", "alpha", "dt", "steps", "thin", "burn_in", "csv_thin", "ks_level", "z_max",
            ],
            RppCheck => &["theta_mass", "lambda", "eps_values"],
        };
        let uses_theta = !matches!(self, GapLaguerre | GapJacobi | SimulateLaguerre | SimulateWf);
        let mut keys = vec!["seed"];
        if uses_theta {
            keys.extend_from_slice(THETA_KEYS);
        }
        keys.extend_from_slice(own);
        keys
    }

    fn default_for(self, key: &str) -> &'static str {
        use Experiment::*;
        match (self, key) {
            (VerifyGammaMeasure | VerifyDirichletMeasure | VerifyIndependence, "samples") => {
                "100000"
            }
            (GapOneParticle, "nx") => "16",
            (GapTheta, "nx") => "256",
            (BoundsDirichlet, "nx") => "256",
            (SimulateLaguerre, "lambda") => "2",
            (SimulateWf, "alpha") => "1,2",
            (VerifyIbp, "potential") => "cosine",
            (VerifyIbp, "nx") => "512",
            (GapJacobi, "alpha") => "1,1",
            _ => global_default(key),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Float(f64, f64),
    Int(u64, u64),
    Bool,
    FloatList(f64, f64),
    Choice(&'static [&'static str]),
    /// A float in range, or the literal `auto`.
    FloatOrAuto(f64, f64),
}

fn kind_of(key: &str) -> Kind {
    match key {
        "seed" => Kind::Int(0, u64::MAX),
        "samples" => Kind::Int(2, 1_000_000_000),
        "eps" => Kind::Float(1e-12, 1.0),
        "compensate" => Kind::Bool,
        "sticks" => Kind::Int(0, 10_000_000),
        "manifold" => Kind::Choice(&["circle", "interval"]),
        "length" => Kind::Float(1e-6, 1e6),
        "a" | "b" => Kind::Float(-1e6, 1e6),
        "nx" => Kind::Int(4, 1_000_000),
        "potential" => Kind::Choice(&["zero", "cosine"]),
        "amplitude" => Kind::Float(-20.0, 20.0),
        "theta_mass" => Kind::Float(1e-6, 1e6),
        "mass_values" => Kind::FloatList(1e-6, 1e6),
        "cells" => Kind::Int(2, 64),
        "lambda" => Kind::Float(1e-6, 1e6),
        "r" => Kind::Float(1e-6, 1e4),
        "r_values" => Kind::FloatList(1e-6, 1e4),
        "alpha" => Kind::FloatList(1e-6, 1e4),
        "s_min" => Kind::Float(1e-12, 1.0),
        "s_max" => Kind::Float(1.0, 1e3),
        "s_nodes" => Kind::Int(3, 100_000),
        "boundary" => Kind::Choice(&["absorbing", "reflecting"]),
        "nodes" => Kind::Int(3, 1_000_000),
        "dt" => Kind::FloatOrAuto(1e-9, 1.0),
        "steps" => Kind::Int(1, 1_000_000_000),
        "thin" | "csv_thin" => Kind::Int(1, 1_000_000),
        "burn_in" => Kind::Int(0, 1_000_000_000),
        "eps_values" | "ibp_eps" => Kind::FloatList(1e-12, 1e3),
        "z_max" => Kind::Float(0.1, 100.0),
        "ks_level" => Kind::Float(1e-6, 0.5),
        other => panic!("no kind registered for key {other}"),
    }
}

fn global_default(key: &str) -> &'static str {
    match key {
        "seed" => "42",
        "samples" => "1000000",
        "eps" => "1e-6",
        "compensate" => "true",
        "sticks" => "0",
        "manifold" => "circle",
        "length" => "6.283185307179586",
        "a" => "0",
        "b" => "1",
        "nx" => "32",
        "potential" => "zero",
        "amplitude" => "0.3",
        "theta_mass" => "1",
        "mass_values" => "0.7,1,1.7",
        "cells" => "3",
        "lambda" => "1",
        "r" => "2",
        "r_values" => "0.5,1,3",
        "alpha" => "1,1",
        "s_min" => "1e-3",
        "s_max" => "40",
        "s_nodes" => "200",
        "boundary" => "absorbing",
        "nodes" => "2000",
        "dt" => "auto",
        "steps" => "10000000",
        "thin" => "10",
        "burn_in" => "1000",
        "csv_thin" => "100",
        "eps_values" => "0.5,0.1,0.01,0.001",
        "ibp_eps" => "0.5,1",
        "z_max" => "3",
        "ks_level" => "0.01",
        other => panic!("no default registered for key {other}"),
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_float(key: &str, raw: &str, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| invalid(key, format!("'{raw}' is not a number")))?;
    if !(v >= lo && v <= hi) {
        return Err(invalid(key, format!("{v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn validate(key: &str, raw: &str) -> Result<(), ConfigError> {
    match kind_of(key) {
        Kind::Float(lo, hi) => parse_float(key, raw, lo, hi).map(|_| ()),
        Kind::FloatOrAuto(lo, hi) => {
            if raw == "auto" {
                Ok(())
            } else {
                parse_float(key, raw, lo, hi).map(|_| ())
            }
        }
        Kind::Int(lo, hi) => {
            let v: u64 = raw
                .parse()
                .or_else(|_| {
                    // Accept integral floats such as 1e6.
                    raw.parse::<f64>()
                        .ok()
                        .filter(|f| f.fract() == 0.0 && *f >= 0.0 && *f < 1.8e19)
                        .map(|f| f as u64)
                        .ok_or(())
                })
                .map_err(|_| invalid(key, format!("'{raw}' is not a nonnegative integer")))?;
            if v < lo || v > hi {
                return Err(invalid(key, format!("{v} outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        Kind::Bool => match raw {
            "true" | "false" => Ok(()),
            _ => Err(invalid(key, format!("'{raw}' is not true/false"))),
        },
        Kind::FloatList(lo, hi) => {
            if raw.trim().is_empty() {
                return Err(invalid(key, "empty list"));
            }
            for item in raw.split(',') {
                parse_float(key, item, lo, hi)?;
            }
            Ok(())
        }
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(())
            } else {
                Err(invalid(key, format!("'{raw}' not one of {options:?}")))
            }
        }
    }
}

/// Fully resolved configuration: every key the experiment reads has a
/// validated value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    experiment: Experiment,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let values = experiment
            .keys()
            .into_iter()
            .map(|k| (k.to_string(), experiment.default_for(k).to_string()))
            .collect();
        ExperimentConfig { experiment, values }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_text(experiment: Experiment, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(experiment);
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !self.values.contains_key(key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                experiment: self.experiment,
            });
        }
        let value: String = value.split_whitespace().collect::<Vec<_>>().join("");
        validate(key, &value)?;
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: pair.to_string(),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("{} does not read key {key}", self.experiment))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated")
    }

    /// None for `auto`.
    pub fn f64_or_auto(&self, key: &str) -> Option<f64> {
        match self.raw(key) {
            "auto" => None,
            v => Some(v.parse().expect("validated")),
        }
    }

    pub fn u64(&self, key: &str) -> u64 {
        let raw = self.raw(key);
        raw.parse()
            .unwrap_or_else(|_| raw.parse::<f64>().expect("validated") as u64)
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn bool(&self, key: &str) -> bool {
        self.raw(key) == "true"
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        self.raw(key)
            .split(',')
            .map(|s| s.parse().expect("validated"))
            .collect()
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }
}

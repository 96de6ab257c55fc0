//! Machine-readable experiment reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// How `observed` is compared with `expected`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Tolerance {
    /// |observed - expected| <= value * |expected|.
    Relative { value: f64 },
    /// |observed - expected| <= value.
    Absolute { value: f64 },
    /// |observed - expected| / stderr < value.
    ZScore { value: f64, stderr: f64 },
    /// observed >= expected - value.
    AtLeast { value: f64 },
    /// observed <= expected + value.
    AtMost { value: f64 },
    /// KS p-value (observed) at least the level (expected).
    PValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    /// Stable identifier of the statement being checked.
    pub anchor: String,
    pub description: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl Claim {
    pub fn new(
        anchor: &str,
        description: impl Into<String>,
        expected: f64,
        observed: f64,
        tolerance: Tolerance,
    ) -> Self {
        let d = observed - expected;
        let pass = observed.is_finite()
            && match tolerance {
                Tolerance::Relative { value } => d.abs() <= value * expected.abs(),
                Tolerance::Absolute { value } => d.abs() <= value,
                Tolerance::ZScore { value, stderr } => {
                    if stderr > 0.0 {
                        (d / stderr).abs() < value
                    } else {
                        d == 0.0
                    }
                }
                Tolerance::AtLeast { value } => observed >= expected - value,
                Tolerance::AtMost { value } => observed <= expected + value,
                Tolerance::PValue => observed >= expected,
            };
        Claim {
            anchor: anchor.to_string(),
            description: description.into(),
            expected,
            observed,
            tolerance,
            pass,
        }
    }

    /// A claim that a z-score is below `z_max` in absolute value.
    pub fn z(anchor: &str, description: impl Into<String>, z: f64, z_max: f64) -> Self {
        Claim::new(anchor, description, 0.0, z, Tolerance::ZScore { value: z_max, stderr: 1.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Environment {
    pub seed: u64,
    pub version: String,
    /// Wall-clock run time; the only field that varies between identical runs.
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub claims: Vec<Claim>,
    pub environment: Environment,
    pub config: BTreeMap<String, String>,
    /// Experiment-specific numbers (gaps, identity checks, fits).
    pub results: serde_json::Value,
}

impl Report {
    pub fn pass(&self) -> bool {
        !self.claims.is_empty() && self.claims.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table of the claims.
    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.experiment);
        for c in &self.claims {
            s.push_str(&format!(
                "  [{}] {:<28} expected {:>12.6} observed {:>12.6}  {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.anchor,
                c.expected,
                c.observed,
                c.description
            ));
        }
        s
    }
}

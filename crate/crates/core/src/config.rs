//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{IntegrateError, IntegratorOptions, IvpProblem};
use crate::library::{LibraryError, LibrarySpec};
use crate::miner::MinerConfig;
use crate::system::{OdeSystem, SystemError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Problem(#[from] IntegrateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default)]
    pub rref: Option<f64>,
    #[serde(default = "default_residual")]
    pub residual: f64,
    #[serde(default = "default_true")]
    pub normalize_columns: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rref: None,
            residual: default_residual(),
            normalize_columns: true,
        }
    }
}

fn default_residual() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_t_end() -> f64 {
    10.0
}
fn default_m() -> usize {
    1000
}
fn default_p() -> usize {
    5
}
fn default_library() -> LibrarySpec {
    LibrarySpec::monomials(vec![0, 1]).expect("non-empty")
}

/// A run description: system, initial data, grid, library and tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub variables: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub equations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
    #[serde(rename = "T", default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_library")]
    pub library: LibrarySpec,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_ranges: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.variables.len();
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.equations.len() != n {
            return bad(format!(
                "{} variables but {} equations",
                n,
                self.equations.len()
            ));
        }
        if let Some(x0) = &self.initial {
            if x0.len() != n {
                return bad(format!("{} variables but {} initial values", n, x0.len()));
            }
        }
        if let Some(ranges) = &self.initial_ranges {
            if ranges.len() != n {
                return bad(format!(
                    "{} variables but {} initial ranges",
                    n,
                    ranges.len()
                ));
            }
            for (i, [lo, hi]) in ranges.iter().enumerate() {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return bad(format!("initial range {} must satisfy lo <= hi", i + 1));
                }
            }
        }
        if self.initial.is_none() && self.initial_ranges.is_none() {
            return bad("either `initial` or `initial_ranges` is required".into());
        }
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if self.t_end <= self.t0 {
            return bad(format!("T ({}) must exceed t0 ({})", self.t_end, self.t0));
        }
        self.system()?;
        Ok(())
    }

    pub fn system(&self) -> Result<OdeSystem, SystemError> {
        OdeSystem::new(
            self.variables.clone(),
            self.parameters
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            &self.equations,
        )
    }

    /// Seed used for sampling; `override_seed` wins over the config value.
    pub fn effective_seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.or(self.seed).unwrap_or(0)
    }

    /// `count` initial states: the fixed `initial` if present (and no seed
    /// override), otherwise uniform draws from `initial_ranges`.
    pub fn initial_states(
        &self,
        count: usize,
        override_seed: Option<u64>,
    ) -> Result<Vec<Vec<f64>>, ConfigError> {
        let use_fixed =
            self.initial.is_some() && (override_seed.is_none() || self.initial_ranges.is_none());
        if use_fixed {
            return Ok(vec![self.initial.clone().expect("checked"); count]);
        }
        let ranges = self
            .initial_ranges
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("no initial_ranges to sample from".into()))?;
        Ok(sample_initial_states(
            ranges,
            self.effective_seed(override_seed),
            count,
        ))
    }

    pub fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            iterations: self.p,
            rref_tolerance: self.tolerances.rref,
            normalize_columns: self.tolerances.normalize_columns,
            residual_tolerance: self.tolerances.residual,
            integrator: self.integrator,
        }
    }

    pub fn problem(&self, x0: Vec<f64>) -> Result<IvpProblem, ConfigError> {
        Ok(IvpProblem::new(
            self.system()?,
            self.t0,
            x0,
            self.t_end,
            self.m,
        )?)
    }
}

/// Uniform samples from per-component `[lo, hi]` ranges; deterministic in
/// `seed`.
pub fn sample_initial_states(ranges: &[[f64; 2]], seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            ranges
                .iter()
                .map(|&[lo, hi]| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "variables": ["x", "y"],
        "parameters": {"a": 2.0},
        "equations": ["y", "-a*x"],
        "initial": [1, 0]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.t0, 0.0);
        assert_eq!(c.t_end, 10.0);
        assert_eq!(c.m, 1000);
        assert_eq!(c.p, 5);
        assert_eq!(c.library.powers(), &[0, 1]);
        assert_eq!(c.integrator.rel_tol, 1e-10);
        assert!(c.tolerances.normalize_columns);
    }

    #[test]
    fn full_document_parses() {
        let text = r#"{
            "variables": ["x"], "equations": ["-x"], "initial": [1],
            "t0": 0, "T": 2, "m": 50, "p": 3,
            "library": {"powers": [1, 0], "unary": [{"kind": "sin", "frequency": 2}]},
            "integrator": {"rel_tol": 1e-8, "abs_tol": 1e-10},
            "tolerances": {"rref": 1e-12, "residual": 1e-5},
            "initial_ranges": [[0.5, 1.5]], "seed": 7
        }"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c.library.powers(), &[0, 1]);
        assert_eq!(c.library.unary()[0].frequency, 2.0);
        assert_eq!(c.miner_config().rref_tolerance, Some(1e-12));
        assert_eq!(c.effective_seed(None), 7);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let cases = [
            r#"{"variables": ["x"], "equations": ["1", "2"], "initial": [1]}"#,
            r#"{"variables": ["x"], "equations": ["1"], "initial": [1, 2]}"#,
            r#"{"variables": ["x"], "equations": ["1"]}"#,
            r#"{"variables": ["x"], "equations": ["1"], "initial_ranges": [[2, 1]]}"#,
            r#"{"variables": ["x"], "equations": ["1"], "initial": [1], "T": -1}"#,
            r#"{"variables": ["x"], "equations": ["1"], "initial": [1], "library": {"powers": []}}"#,
            r#"{"variables": ["x"], "equations": ["q"], "initial": [1]}"#,
            r#"{"variables": ["x"], "equations": ["1"], "initial": [1], "bogus": 1}"#,
        ];
        for case in cases {
            assert!(RunConfig::from_json(case).is_err(), "accepted {}", case);
        }
    }

    #[test]
    fn sampling_is_seeded_and_in_range() {
        let ranges = [[0.15, 1.60], [0.19, 2.16], [3.0, 3.0]];
        let a = sample_initial_states(&ranges, 42, 3);
        let b = sample_initial_states(&ranges, 42, 3);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(a, sample_initial_states(&ranges, 43, 3));
        for x in &a {
            for (v, [lo, hi]) in x.iter().zip(ranges) {
                assert!(*v >= lo && *v <= hi);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }
}

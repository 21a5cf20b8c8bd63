use std::fmt;
use std::path::{Path, PathBuf};

use rotasde_core::ensemble::{steps_for, InitialState};
use rotasde_core::integrators::{Scheme, StepConfig};
use rotasde_core::sde_model::DriftSource;
use rotasde_core::so_n::SqrtMethod;
use rotasde_core::{Mat, Rotation};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Converge,
    BrownianStats,
    CheckGeometry,
    Benchmark,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Simulate => "simulate",
            Experiment::Converge => "converge",
            Experiment::BrownianStats => "brownian-stats",
            Experiment::CheckGeometry => "check-geometry",
            Experiment::Benchmark => "benchmark",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Brownian,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSourceConfig {
    Converted,
    Printed,
}

impl From<DriftSourceConfig> for DriftSource {
    fn from(d: DriftSourceConfig) -> Self {
        match d {
            DriftSourceConfig::Converted => DriftSource::Converted,
            DriftSourceConfig::Printed => DriftSource::Printed,
        }
    }
}

/// `"exact"` or `"taylor(K)"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SqrtMethodConfig(pub SqrtMethod);

impl TryFrom<String> for SqrtMethodConfig {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let t = s.trim().to_ascii_lowercase();
        if t == "exact" {
            return Ok(Self(SqrtMethod::Exact));
        }
        t.strip_prefix("taylor(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|k| k.trim().parse::<u32>().ok())
            .filter(|&k| k >= 1)
            .map(|k| Self(SqrtMethod::Taylor(k)))
            .ok_or_else(|| format!("expected \"exact\" or \"taylor(K)\" with K >= 1, got {s:?}"))
    }
}

impl From<SqrtMethodConfig> for String {
    fn from(m: SqrtMethodConfig) -> Self {
        match m.0 {
            SqrtMethod::Exact => "exact".into(),
            SqrtMethod::Taylor(k) => format!("taylor({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    #[default]
    Identity,
    /// Independent random rotation per path from the seeded init stream.
    Random,
    /// Explicit rotation, given as rows.
    Matrix(Vec<Vec<f64>>),
}

fn default_n_paths() -> usize {
    1
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Tasp]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stride() -> usize {
    1
}

fn default_max_retries() -> usize {
    100
}

fn default_warmup() -> usize {
    100
}

fn default_reference_scheme() -> Scheme {
    Scheme::Tasp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; the subcommand takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub model: ModelKind,
    pub n: usize,
    pub delta: f64,
    pub t_final: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_sqrt")]
    pub sqrt_method: SqrtMethodConfig,
    #[serde(default = "default_drift_source")]
    pub drift_source: DriftSourceConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Keep every k-th state in trajectories.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    /// Per-step wall time in trajectory.csv; makes the file nondeterministic.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,

    // converge
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_delta: Option<f64>,
    #[serde(default = "default_reference_scheme")]
    pub reference_scheme: Scheme,
    /// Replace simulated errors by `delta^p`; exercises the fitting path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_error_exponent: Option<f64>,

    // brownian-stats
    /// Drive every path with zero increments.
    #[serde(default)]
    pub zero_noise: bool,

    // benchmark
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
}

fn default_sqrt() -> SqrtMethodConfig {
    SqrtMethodConfig(SqrtMethod::Exact)
}

fn default_drift_source() -> DriftSourceConfig {
    DriftSourceConfig::Converted
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, experiment: Experiment, o: &Overrides) {
        if let Some(e) = self.experiment {
            if e != experiment {
                eprintln!("warning: config experiment {e} overridden by subcommand {experiment}");
            }
        }
        self.experiment = Some(experiment);
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    /// Checks shared by every experiment.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.n < 2 {
            return bad("n", format!("must be at least 2, got {}", self.n));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", format!("must be positive, got {}", self.delta));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t_final", format!("must be positive, got {}", self.t_final));
        }
        if steps_for(self.t_final, self.delta).is_err() {
            return bad(
                "delta",
                format!(
                    "t_final / delta must be a positive integer, got {} / {}",
                    self.t_final, self.delta
                ),
            );
        }
        if self.n_paths < 1 {
            return bad("n_paths", "must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("schemes", "must list at least one scheme".into());
        }
        let mut seen = self.schemes.clone();
        seen.sort_by_key(|s| s.name());
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return bad("schemes", "duplicate entries".into());
        }
        if self.record_stride < 1 || !self.m_steps().is_multiple_of(self.record_stride) {
            return bad(
                "record_stride",
                format!("must divide the {} steps", self.m_steps()),
            );
        }
        if self.max_retries < 1 {
            return bad("max_retries", "must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1".into());
        }
        if let InitialConfig::Matrix(rows) = &self.initial {
            if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                return bad("initial", format!("matrix must be {0} x {0}", self.n));
            }
        }
        self.initial_state()?;
        Ok(())
    }

    pub fn m_steps(&self) -> usize {
        steps_for(self.t_final, self.delta).unwrap_or(0)
    }

    pub fn initial_state(&self) -> Result<InitialState, CliError> {
        Ok(match &self.initial {
            InitialConfig::Identity => InitialState::Identity,
            InitialConfig::Random => InitialState::Random,
            InitialConfig::Matrix(rows) => {
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let m = Mat::from_row_slice(self.n, self.n, &flat);
                let r = Rotation::with_tolerance(m, 1e-10)
                    .map_err(|e| CliError::Config(format!("initial: {e}")))?;
                InitialState::Fixed(r)
            }
        })
    }

    pub fn step_config(&self, delta: f64) -> StepConfig {
        let mut cfg = StepConfig::new(delta).with_sqrt_method(self.sqrt_method.0);
        cfg.max_retries = self.max_retries;
        cfg.record_timing = self.record_timing;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": "brownian", "n": 3, "delta": 0.01, "t_final": 1}"#;

    #[test]
    fn defaults_fill_optional_fields() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.n_paths, 1);
        assert_eq!(c.schemes, vec![Scheme::Tasp]);
        assert_eq!(c.initial, InitialConfig::Identity);
        assert_eq!(c.sqrt_method.0, SqrtMethod::Exact);
        assert_eq!(c.m_steps(), 100);
        c.validate().unwrap();
    }

    #[test]
    fn sqrt_method_round_trips() {
        for s in ["exact", "taylor(5)"] {
            let m = SqrtMethodConfig::try_from(s.to_string()).unwrap();
            assert_eq!(String::from(m), s);
        }
        assert!(SqrtMethodConfig::try_from("taylor(0)".to_string()).is_err());
        assert!(SqrtMethodConfig::try_from("cholesky".to_string()).is_err());
    }

    #[test]
    fn unknown_fields_are_named() {
        let text = r#"{"model": "brownian", "n": 3, "delta": 0.01, "t_final": 1, "nn": 2}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("nn"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.delta = 0.3;
        assert!(c.validate().unwrap_err().to_string().starts_with("delta"));
        c.delta = 0.01;
        c.initial = InitialConfig::Matrix(vec![vec![1.0, 0.0, 0.0]; 3]);
        assert!(c.validate().unwrap_err().to_string().starts_with("initial"));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let o = Overrides {
            seed: Some(9),
            threads: Some(2),
            output_dir: Some("elsewhere".into()),
        };
        c.apply(Experiment::Simulate, &o);
        assert_eq!(c.seed, 9);
        assert_eq!(c.threads, Some(2));
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.experiment, Some(Experiment::Simulate));
    }

    #[test]
    fn explicit_initial_matrix_is_accepted() {
        let text = r#"{"model": "brownian", "n": 2, "delta": 0.5, "t_final": 1,
            "initial": {"matrix": [[0, -1], [1, 0]]}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert!(matches!(c.initial_state().unwrap(), InitialState::Fixed(_)));
    }
}

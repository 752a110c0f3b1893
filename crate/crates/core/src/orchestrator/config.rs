use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evolver::EvolverConfig;
use crate::library::{LibraryConfig, DEFAULT_DEDUP_THRESHOLD, DEFAULT_EMBEDDING_DIM};
use crate::llm::{OpenAiConfig, RetryPolicy, DEFAULT_TEMPERATURE};
use crate::prover::{InformalSource, ProverConfig, UsageThresholds};
use crate::verify::{PisaConfig, RepairPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode `{other}` (expected live, record or replay)")),
        }
    }
}

/// Where chat replies come from in live and record modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatSource {
    #[default]
    Openai,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Openai,
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    #[default]
    Pisa,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProverOptions {
    pub decomposer_shots: usize,
    pub formalizer_shots: usize,
    pub informal_source: InformalSource,
    pub usage: UsageThresholds,
}

impl Default for ProverOptions {
    fn default() -> Self {
        let d = ProverConfig::default();
        Self {
            decomposer_shots: d.decomposer_shots,
            formalizer_shots: d.formalizer_shots,
            informal_source: d.informal_source,
            usage: d.usage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolverOptions {
    pub n_requests: usize,
    /// extend_dimensions, identify_key_concepts, parameterize, scale_complexity
    pub direction_weights: [f64; 4],
    pub transform_probability: f64,
}

impl Default for EvolverOptions {
    fn default() -> Self {
        let d = EvolverConfig::default();
        Self { n_requests: d.n_requests, direction_weights: d.direction_weights, transform_probability: d.transform_probability }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Logs, checkpoints and the library snapshot.
    pub run_dir: Option<PathBuf>,
    /// Problems ingested at the start of a fresh run.
    pub problems: Option<PathBuf>,
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub mode: Mode,
    pub source: ChatSource,
    pub embedder: EmbedderKind,
    pub models: Vec<String>,
    /// Scripted chat rules, for `source = "scripted"`.
    pub script: Option<PathBuf>,
    pub cassette: Option<PathBuf>,
    pub openai: OpenAiConfig,
    pub retry: RetryPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Live,
            source: ChatSource::Openai,
            embedder: EmbedderKind::Openai,
            models: vec!["gpt-3.5-turbo".into()],
            script: None,
            cassette: None,
            openai: OpenAiConfig::default(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierConfig {
    pub kind: VerifierKind,
    /// Mock verifier script; without one the mock accepts every non-hammer step.
    pub script: Option<PathBuf>,
    pub pisa: PisaConfig,
    pub repair: RepairPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    pub prover_workers: usize,
    pub evolver_workers: usize,
    pub attempt_budget: u32,
    pub temperature: f64,
    pub n_f: usize,
    pub n_d: usize,
    pub solver_refs: usize,
    pub dedup_threshold: f64,
    pub dedup_autojunk: bool,
    pub embedding_dim: usize,
    pub seed: u64,
    /// Wall-clock checkpoint period; 0 disables.
    pub checkpoint_interval_secs: f64,
    /// Checkpoint every this many ticks; 0 disables.
    pub checkpoint_every_ticks: u64,
    /// Stop after this many ticks; 0 means no limit.
    pub max_ticks: u64,
    /// Abort when every prover attempt errored for this many ticks in a row.
    pub max_consecutive_error_ticks: u32,
    pub prover: ProverOptions,
    pub evolver: EvolverOptions,
    pub paths: PathsConfig,
    pub llm: LlmConfig,
    pub verifier: VerifierConfig,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            prover_workers: 3,
            evolver_workers: 8,
            attempt_budget: 100,
            temperature: DEFAULT_TEMPERATURE,
            n_f: 6,
            n_d: 4,
            solver_refs: 3,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            dedup_autojunk: true,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
            checkpoint_interval_secs: 600.0,
            checkpoint_every_ticks: 0,
            max_ticks: 0,
            max_consecutive_error_ticks: 3,
            prover: ProverOptions::default(),
            evolver: EvolverOptions::default(),
            paths: PathsConfig::default(),
            llm: LlmConfig::default(),
            verifier: VerifierConfig::default(),
        }
    }
}

impl OrchestratorConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.paths.run_dir);
        fix(&mut self.paths.problems);
        fix(&mut self.paths.templates);
        fix(&mut self.llm.script);
        fix(&mut self.llm.cassette);
        fix(&mut self.verifier.script);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.prover_workers == 0 || self.evolver_workers == 0 {
            return bad("prover_workers and evolver_workers must be positive".into());
        }
        if self.attempt_budget == 0 || self.embedding_dim == 0 {
            return bad("attempt_budget and embedding_dim must be positive".into());
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return bad(format!("dedup_threshold {} is outside (0, 1]", self.dedup_threshold));
        }
        if !self.checkpoint_interval_secs.is_finite() || self.checkpoint_interval_secs < 0.0 {
            return bad("checkpoint_interval_secs must be a non-negative number".into());
        }
        if self.max_consecutive_error_ticks == 0 {
            return bad("max_consecutive_error_ticks must be positive".into());
        }
        if self.llm.models.is_empty() {
            return bad("llm.models is empty".into());
        }
        self.prover_config().validate().map_err(ConfigError::Invalid)?;
        self.evolver_config().validate().map_err(ConfigError::Invalid)?;
        self.verifier.repair.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn library_config(&self) -> LibraryConfig {
        LibraryConfig { dim: self.embedding_dim, dedup_threshold: self.dedup_threshold, dedup_autojunk: self.dedup_autojunk }
    }

    pub fn prover_config(&self) -> ProverConfig {
        let o = &self.prover;
        ProverConfig {
            n_f: self.n_f,
            decomposer_shots: o.decomposer_shots,
            formalizer_shots: o.formalizer_shots,
            informal_source: o.informal_source,
            temperature: self.temperature,
            usage: o.usage,
        }
    }

    pub fn evolver_config(&self) -> EvolverConfig {
        let o = &self.evolver;
        EvolverConfig {
            n_d: self.n_d,
            n_requests: o.n_requests,
            solver_refs: self.solver_refs,
            direction_weights: o.direction_weights,
            transform_probability: o.transform_probability,
            temperature: self.temperature,
        }
    }
}

use std::path::PathBuf;
use std::sync::Arc;

use super::config::{ChatSource, ConfigError, EmbedderKind, Mode, OrchestratorConfig, VerifierKind};
use crate::context::Context;
use crate::library::SkillLibrary;
use crate::llm::{
    Cassette, CassetteWriter, ChatBackend, Embedder, Gateway, HashEmbedder, ModelPool, OpenAiChat, OpenAiEmbedder,
    RecordingChat, RecordingEmbedder, ReplayChat, ReplayEmbedder, ScriptedChat, TemplateSet,
};
use crate::verify::{MockVerifier, PisaVerifier, Verifier};

fn required(path: &Option<PathBuf>, what: &str) -> Result<PathBuf, ConfigError> {
    path.clone().ok_or_else(|| ConfigError::Invalid(format!("{what} is not set")))
}

fn source_chat(config: &OrchestratorConfig) -> Result<Arc<dyn ChatBackend>, ConfigError> {
    Ok(match config.llm.source {
        ChatSource::Openai => Arc::new(OpenAiChat::new(&config.llm.openai)),
        ChatSource::Scripted => {
            let path = required(&config.llm.script, "llm.script")?;
            let text =
                std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
            Arc::new(ScriptedChat::from_toml(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?)
        }
    })
}

fn source_embedder(config: &OrchestratorConfig) -> Arc<dyn Embedder> {
    match config.llm.embedder {
        EmbedderKind::Openai => {
            let mut openai = config.llm.openai.clone();
            openai.embedding_dim = config.embedding_dim;
            Arc::new(OpenAiEmbedder::new(&openai))
        }
        EmbedderKind::Hash => Arc::new(HashEmbedder::new(config.embedding_dim)),
    }
}

/// The chat backend and embedder for the configured mode. Record mode
/// appends to the cassette; replay mode serves from it.
pub fn build_gateway(config: &OrchestratorConfig) -> Result<Gateway, ConfigError> {
    let (chat, embedder): (Arc<dyn ChatBackend>, Arc<dyn Embedder>) = match config.llm.mode {
        Mode::Live => (source_chat(config)?, source_embedder(config)),
        Mode::Record => {
            let path = required(&config.llm.cassette, "llm.cassette")?;
            let writer = CassetteWriter::open(&path).map_err(|source| ConfigError::Read { path, source })?;
            (
                Arc::new(RecordingChat::with_writer(source_chat(config)?, writer.clone())),
                Arc::new(RecordingEmbedder::with_writer(source_embedder(config), writer)),
            )
        }
        Mode::Replay => {
            let path = required(&config.llm.cassette, "llm.cassette")?;
            let cassette = Cassette::load(&path).map_err(|source| ConfigError::Read { path, source })?;
            (Arc::new(ReplayChat::new(&cassette)), Arc::new(ReplayEmbedder::new(&cassette, config.embedding_dim)))
        }
    };
    let pool = ModelPool::new(config.llm.models.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let templates = match &config.paths.templates {
        Some(dir) => TemplateSet::with_overrides(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        None => TemplateSet::builtin(),
    };
    Ok(Gateway::new(chat, embedder, pool).with_retry(config.llm.retry).with_templates(templates))
}

pub fn build_verifier(config: &OrchestratorConfig) -> Result<Arc<dyn Verifier>, ConfigError> {
    let v = &config.verifier;
    Ok(match v.kind {
        VerifierKind::Mock => match &v.script {
            Some(path) => Arc::new(MockVerifier::from_file(path).map_err(|e| ConfigError::Invalid(e.to_string()))?),
            None => Arc::new(MockVerifier::default()),
        },
        VerifierKind::Pisa => {
            Arc::new(PisaVerifier::new(v.pisa.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?)
        }
    })
}

/// A fresh, empty library plus the configured backends.
pub fn build_context(config: &OrchestratorConfig) -> Result<Context, ConfigError> {
    config.validate()?;
    let library = Arc::new(SkillLibrary::new(config.library_config()));
    let ctx = Context::new(library, Arc::new(build_gateway(config)?), build_verifier(config)?)
        .with_repair(config.verifier.repair.clone());
    Ok(ctx)
}

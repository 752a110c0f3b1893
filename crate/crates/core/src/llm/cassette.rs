//! Record/replay of backend traffic as newline-delimited JSON.
//!
//! Chat entries are keyed by the prompt digest plus the caller's stream and
//! call index. Replay first looks for an exact `(digest, stream, seq)` match;
//! entries recorded without a stream are served first-in first-out per
//! digest. Embedding entries are keyed by a digest of the text.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prompt_digest, BackendError, ChatBackend, ChatRequest, ChatResponse, Embedder, HashEmbedder, TokenUsage};
use crate::embedding::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CassetteEntry {
    Chat {
        digest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stream: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        template_id: String,
        model: String,
        response: String,
        #[serde(default)]
        usage: TokenUsage,
    },
    Embed {
        digest: String,
        vector: Embedding,
    },
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Cassette> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            entries.push(e);
        }
        Ok(Cassette { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Adds a response served to any caller that sends this prompt.
    pub fn push_chat(&mut self, template_id: &str, messages: &[super::Message], temperature: f64, response: &str) {
        self.entries.push(CassetteEntry::Chat {
            digest: prompt_digest(template_id, messages, temperature),
            stream: None,
            seq: None,
            template_id: template_id.to_string(),
            model: String::new(),
            response: response.to_string(),
            usage: TokenUsage::default(),
        });
    }

    pub fn chat_count(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, CassetteEntry::Chat { .. })).count()
    }
}

type ExactKey = (String, String, u64);

pub struct ReplayChat {
    responses: Vec<ChatResponse>,
    exact: HashMap<ExactKey, usize>,
    fifo: Mutex<HashMap<String, VecDeque<usize>>>,
}

impl ReplayChat {
    pub fn new(cassette: &Cassette) -> Self {
        let mut responses = Vec::new();
        let mut exact = HashMap::new();
        let mut fifo: HashMap<String, VecDeque<usize>> = HashMap::new();
        for e in &cassette.entries {
            if let CassetteEntry::Chat { digest, stream, seq, response, usage, .. } = e {
                let idx = responses.len();
                responses.push(ChatResponse { text: response.clone(), usage: *usage });
                match (stream, seq) {
                    (Some(s), Some(n)) => {
                        exact.insert((digest.clone(), s.clone(), *n), idx);
                    }
                    _ => fifo.entry(digest.clone()).or_default().push_back(idx),
                }
            }
        }
        Self { responses, exact, fifo: Mutex::new(fifo) }
    }
}

impl ChatBackend for ReplayChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let digest = prompt_digest(&req.template_id, &req.messages, req.temperature);
        if let Some(stream) = &req.stream {
            if let Some(&idx) = self.exact.get(&(digest.clone(), stream.clone(), req.seq)) {
                return Ok(self.responses[idx].clone());
            }
        }
        let mut fifo = self.fifo.lock().expect("replay lock");
        match fifo.get_mut(&digest).and_then(VecDeque::pop_front) {
            Some(idx) => Ok(self.responses[idx].clone()),
            None => Err(BackendError::Transport(format!(
                "no cassette entry for {} (template {}, stream {:?}, seq {})",
                &digest[..12],
                req.template_id,
                req.stream,
                req.seq
            ))),
        }
    }
}

/// An append handle on a cassette file. Clones share one lock, so a chat
/// recorder and an embedding recorder can write the same file.
#[derive(Clone)]
pub struct CassetteWriter {
    writer: Arc<Mutex<BufWriter<File>>>,
}

impl CassetteWriter {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<CassetteWriter> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CassetteWriter { writer: Arc::new(Mutex::new(BufWriter::new(file))) })
    }

    fn write(&self, entry: &CassetteEntry) -> Result<(), BackendError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| BackendError::Transport(e.to_string()))?;
        line.push(b'\n');
        let mut w = self.writer.lock().expect("cassette lock");
        w.write_all(&line).and_then(|_| w.flush()).map_err(|e| BackendError::Transport(format!("cassette write: {e}")))
    }
}

/// Passes calls through to `inner` and appends every successful exchange.
pub struct RecordingChat {
    inner: Arc<dyn ChatBackend>,
    sink: CassetteWriter,
}

impl RecordingChat {
    pub fn new(inner: Arc<dyn ChatBackend>, path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::with_writer(inner, CassetteWriter::open(path)?))
    }

    pub fn with_writer(inner: Arc<dyn ChatBackend>, sink: CassetteWriter) -> Self {
        Self { inner, sink }
    }
}

impl ChatBackend for RecordingChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let resp = self.inner.chat(req)?;
        self.sink.write(&CassetteEntry::Chat {
            digest: prompt_digest(&req.template_id, &req.messages, req.temperature),
            stream: req.stream.clone(),
            seq: req.stream.as_ref().map(|_| req.seq),
            template_id: req.template_id.clone(),
            model: req.model.clone(),
            response: resp.text.clone(),
            usage: resp.usage,
        })?;
        Ok(resp)
    }
}

pub struct RecordingEmbedder {
    inner: Arc<dyn Embedder>,
    sink: CassetteWriter,
    seen: Mutex<HashSet<String>>,
}

impl RecordingEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::with_writer(inner, CassetteWriter::open(path)?))
    }

    pub fn with_writer(inner: Arc<dyn Embedder>, sink: CassetteWriter) -> Self {
        Self { inner, sink, seen: Mutex::new(HashSet::new()) }
    }
}

impl Embedder for RecordingEmbedder {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let v = self.inner.embed(text)?;
        let digest = text_digest(text);
        if self.seen.lock().expect("cassette lock").insert(digest.clone()) {
            let vector = Embedding::new(v.clone()).map_err(|e| BackendError::Protocol(e.to_string()))?;
            self.sink.write(&CassetteEntry::Embed { digest, vector })?;
        }
        Ok(v)
    }
}

/// Recorded embeddings where available, the hash embedder otherwise.
pub struct ReplayEmbedder {
    recorded: HashMap<String, Vec<f32>>,
    fallback: HashEmbedder,
}

impl ReplayEmbedder {
    pub fn new(cassette: &Cassette, dim: usize) -> Self {
        let recorded = cassette
            .entries
            .iter()
            .filter_map(|e| match e {
                CassetteEntry::Embed { digest, vector } if vector.dim() == dim => {
                    Some((digest.clone(), vector.values().to_vec()))
                }
                _ => None,
            })
            .collect();
        Self { recorded, fallback: HashEmbedder::new(dim) }
    }
}

impl Embedder for ReplayEmbedder {
    fn dim(&self) -> usize {
        self.fallback.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        match self.recorded.get(&text_digest(text)) {
            Some(v) => Ok(v.clone()),
            None => self.fallback.embed(text),
        }
    }
}

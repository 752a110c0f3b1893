use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-worker state that must survive a checkpoint: its random stream and
/// how many LLM calls it has issued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Worker {
    pub label: String,
    pub rng: ChaCha8Rng,
    pub llm_calls: u64,
}

impl Worker {
    /// Workers sharing a seed get independent streams, one per `stream`.
    pub fn new(label: impl Into<String>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { label: label.into(), rng, llm_calls: 0 }
    }
}

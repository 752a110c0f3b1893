//! Proof checking behind a [`Verifier`] trait, the tactic auto-repair loop,
//! and the validity rules a proof must pass before it counts.

mod mock;
mod pisa;
mod repair;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::theory::{contains_cheat_keywords, extract_statement, parse_theory, proposition_of};

pub use mock::{BlockRef, MockRule, MockScript, MockVerifier, Verdict};
pub use pisa::{PisaConfig, PisaVerifier};
pub use repair::{repair_and_verify, RepairOutcome, RepairPolicy, DEFAULT_HEURISTICS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    /// The backend could not be reached or did not answer in time. Distinct
    /// from a proof that fails to check.
    #[error("verifier transport error: {0}")]
    Transport(String),
    #[error("invalid verifier configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub block_index: usize,
    /// `None` when the failure is not tied to a tactic step (e.g. a parse
    /// error in the statement).
    pub step_index: Option<usize>,
    pub message: String,
}

/// A concrete tactic found by a hammer step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammerProof {
    pub block_index: usize,
    pub step_index: usize,
    pub tactic: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifierOutcome {
    pub success: bool,
    pub failures: Vec<StepFailure>,
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repaired_source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hammer_proofs: Vec<HammerProof>,
}

/// Equality ignores `elapsed`.
impl PartialEq for VerifierOutcome {
    fn eq(&self, other: &Self) -> bool {
        self.success == other.success
            && self.failures == other.failures
            && self.repaired_source == other.repaired_source
            && self.hammer_proofs == other.hammer_proofs
    }
}

impl VerifierOutcome {
    pub fn failed_at(&self, block_index: usize, step_index: usize) -> bool {
        self.failures.iter().any(|f| f.block_index == block_index && f.step_index == Some(step_index))
    }

    pub fn hammer_at(&self, block_index: usize, step_index: usize) -> Option<&str> {
        self.hammer_proofs
            .iter()
            .find(|h| h.block_index == block_index && h.step_index == step_index)
            .map(|h| h.tactic.as_str())
    }

    /// Blocks with at least one failure.
    pub fn failed_blocks(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.failures.iter().map(|f| f.block_index).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub trait Verifier: Send + Sync {
    /// Checks a complete theory.
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError>;
}

impl<V: Verifier + ?Sized> Verifier for &V {
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError> {
        (**self).verify(source)
    }
}

impl<V: Verifier + ?Sized> Verifier for std::sync::Arc<V> {
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError> {
        (**self).verify(source)
    }
}

impl<V: Verifier + ?Sized> Verifier for Box<V> {
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError> {
        (**self).verify(source)
    }
}

/// A proof counts iff it has no cheat keywords, it checked, and one of its
/// lemma/theorem blocks states `formal_statement`. Statements are compared
/// after whitespace normalization with the keyword and lemma name removed,
/// so `theorem foo: P` matches `lemma foo': P`.
pub fn validity_check(source: &str, outcome: &VerifierOutcome, formal_statement: &str) -> bool {
    if contains_cheat_keywords(source) || !outcome.success {
        return false;
    }
    target_block(source, formal_statement).is_some()
}

/// Index of the block whose statement matches `formal_statement`.
pub fn target_block(source: &str, formal_statement: &str) -> Option<usize> {
    let want = proposition_of(&crate::theory::statement_of(formal_statement));
    parse_theory(source)
        .blocks
        .iter()
        .position(|b| extract_statement(b).is_ok_and(|s| proposition_of(&s) == want))
}

#[cfg(test)]
mod tests;

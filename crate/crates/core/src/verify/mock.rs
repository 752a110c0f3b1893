//! A scripted, deterministic verifier for offline runs.
//!
//! ```toml
//! allow = ["by auto", "by simp"]      # optional allow-list of step texts
//!
//! [[rule]]
//! block = "am_gm"                      # block name or index; omitted = any
//! step = 0                             # step index in the block; omitted = any
//! tactic = "sledgehammer"              # exact step text; omitted = any
//! verdict = "accept"
//! replacement = "by (metis power2_sum)"
//! ```
//!
//! Each tactic step is judged by the first matching rule, then the
//! allow-list if present; without one every step is accepted except a hammer
//! call. `sorry`/`oops` steps are accepted like a real checker would; they
//! are caught by the validity rules instead. An accepted hammer step reports
//! its `replacement` (default `by metis`) as the found proof.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{HammerProof, StepFailure, Verifier, VerifierOutcome, VerifyError};
use crate::theory::{parse_theory, tactic_steps, StepKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub block: Option<BlockRef>,
    #[serde(default)]
    pub step: Option<usize>,
    #[serde(default)]
    pub tactic: Option<String>,
    pub verdict: Verdict,
    #[serde(default)]
    pub replacement: Option<String>,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub allow: Option<Vec<String>>,
    #[serde(default, rename = "rule")]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn from_toml(text: &str) -> Result<Self, VerifyError> {
        toml::from_str(text).map_err(|e| VerifyError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("mock script serializes")
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockVerifier {
    script: MockScript,
}

const DEFAULT_HAMMER_PROOF: &str = "by metis";

impl MockVerifier {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, VerifyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VerifyError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(MockScript::from_toml(&text)?))
    }

    /// Accepts only steps whose text is in `allow`.
    pub fn with_allow_list<S: Into<String>>(allow: impl IntoIterator<Item = S>) -> Self {
        Self::new(MockScript { allow: Some(allow.into_iter().map(Into::into).collect()), rules: Vec::new() })
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn judge(&self, block_index: usize, block_name: Option<&str>, step_index: usize, kind: StepKind, text: &str) -> (Verdict, Option<&MockRule>) {
        let rule = self.script.rules.iter().find(|r| {
            let block_ok = match &r.block {
                None => true,
                Some(BlockRef::Index(i)) => *i == block_index,
                Some(BlockRef::Name(n)) => block_name == Some(n.as_str()),
            };
            block_ok && r.step.is_none_or(|s| s == step_index) && r.tactic.as_deref().is_none_or(|t| t == text)
        });
        if let Some(r) = rule {
            return (r.verdict, Some(r));
        }
        let verdict = match (&self.script.allow, kind) {
            (_, StepKind::Cheat) => Verdict::Accept,
            (Some(allow), _) => {
                if allow.iter().any(|a| a == text) {
                    Verdict::Accept
                } else {
                    Verdict::Reject
                }
            }
            (None, StepKind::Hammer) => Verdict::Reject,
            (None, _) => Verdict::Accept,
        };
        (verdict, None)
    }
}

impl Verifier for MockVerifier {
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError> {
        let started = Instant::now();
        let doc = parse_theory(source);
        let mut failures = Vec::new();
        let mut hammer_proofs = Vec::new();
        for step in tactic_steps(&doc) {
            let name = doc.blocks[step.block_index].name.as_deref();
            let (verdict, rule) = self.judge(step.block_index, name, step.step_index, step.kind, &step.text);
            match verdict {
                Verdict::Accept if step.kind == StepKind::Hammer => hammer_proofs.push(HammerProof {
                    block_index: step.block_index,
                    step_index: step.step_index,
                    tactic: rule.and_then(|r| r.replacement.clone()).unwrap_or_else(|| DEFAULT_HAMMER_PROOF.to_string()),
                }),
                Verdict::Accept => {}
                Verdict::Reject => failures.push(StepFailure {
                    block_index: step.block_index,
                    step_index: Some(step.step_index),
                    message: rule
                        .and_then(|r| r.message.clone())
                        .unwrap_or_else(|| format!("failed to finish proof: {}", step.text)),
                }),
            }
        }
        // A sledgehammer call by itself does not close a goal.
        let open_hammer = !hammer_proofs.is_empty();
        Ok(VerifierOutcome {
            success: failures.is_empty() && !open_hammer,
            failures,
            elapsed: started.elapsed(),
            repaired_source: None,
            hammer_proofs,
        })
    }
}

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Verifier, VerifierOutcome, VerifyError};
use crate::theory::{parse_theory, splice, tactic_steps, StepKind, HAMMER};

pub const DEFAULT_HEURISTICS: [&str; 11] = [
    "by auto",
    "by simp",
    "by blast",
    "by fastforce",
    "by force",
    "by eval",
    "by presburger",
    "by sos",
    "by arith",
    "by linarith",
    "by (auto simp: field_simps)",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairPolicy {
    pub heuristics: Vec<String>,
    pub hammer_token: String,
    #[serde(with = "secs")]
    pub per_step_timeout: Duration,
    #[serde(with = "secs")]
    pub whole_proof_timeout: Duration,
}

impl Default for RepairPolicy {
    fn default() -> Self {
        Self {
            heuristics: DEFAULT_HEURISTICS.iter().map(|s| s.to_string()).collect(),
            hammer_token: HAMMER.to_string(),
            per_step_timeout: Duration::from_secs(30),
            whole_proof_timeout: Duration::from_secs(360),
        }
    }
}

impl RepairPolicy {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.heuristics.len() != 11 {
            return Err(VerifyError::Config(format!("expected 11 heuristics, got {}", self.heuristics.len())));
        }
        let distinct: HashSet<&String> = self.heuristics.iter().collect();
        if distinct.len() != self.heuristics.len() {
            return Err(VerifyError::Config("heuristics must be distinct".into()));
        }
        if self.hammer_token.trim().is_empty() {
            return Err(VerifyError::Config("empty hammer token".into()));
        }
        Ok(())
    }

    /// Candidate tactics in the order they are tried.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.heuristics.iter().map(String::as_str).chain(std::iter::once(self.hammer_token.as_str()))
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub outcome: VerifierOutcome,
    /// The source that `outcome` describes.
    pub source: String,
    /// Verifier calls spent on candidate substitutions.
    pub candidates_tried: usize,
}

/// Verifies `source`, replacing every hammer placeholder and every failing
/// tactic step with the first candidate (heuristics in order, then the
/// hammer) that makes that step check. A hammer candidate only counts when
/// the backend returns a concrete tactic, which is inlined. Each position is
/// attempted at most once, so at most `heuristics + 1` candidates per step.
pub fn repair_and_verify<V: Verifier + ?Sized>(
    verifier: &V,
    source: &str,
    policy: &RepairPolicy,
) -> Result<RepairOutcome, VerifyError> {
    let mut current = source.to_string();
    let mut outcome = verifier.verify(&current)?;
    let mut tried = 0;
    let mut attempted: HashSet<(usize, usize)> = HashSet::new();
    let mut changed = false;

    loop {
        let doc = parse_theory(&current);
        let steps = tactic_steps(&doc);
        let target = steps.iter().find(|s| {
            let pos = (s.block_index, s.step_index);
            !attempted.contains(&pos)
                && (s.kind == StepKind::Hammer || outcome.failed_at(s.block_index, s.step_index))
        });
        let Some(step) = target.cloned() else { break };
        attempted.insert((step.block_index, step.step_index));

        for cand in policy.candidates() {
            let is_hammer = cand == policy.hammer_token;
            let trial = splice(&current, step.span, cand);
            let o = verifier.verify(&trial)?;
            tried += 1;
            if o.failed_at(step.block_index, step.step_index) {
                continue;
            }
            if is_hammer {
                let Some(tactic) = o.hammer_at(step.block_index, step.step_index) else { continue };
                let inlined = splice(&current, step.span, tactic);
                outcome = verifier.verify(&inlined)?;
                current = inlined;
            } else {
                outcome = o;
                current = trial;
            }
            changed = true;
            break;
        }
    }

    let placeholders_left = tactic_steps(&parse_theory(&current)).iter().any(|s| s.kind == StepKind::Hammer);
    outcome.success = outcome.success && outcome.failures.is_empty() && !placeholders_left;
    if outcome.success && changed {
        outcome.repaired_source = Some(current.clone());
    } else {
        outcome.repaired_source = None;
    }
    Ok(RepairOutcome { outcome, source: current, candidates_tried: tried })
}

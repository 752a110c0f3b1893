//! One proof attempt: decompose the informal proof, retrieve skills,
//! formalize, repair and check, then harvest new lemmas and requests.
//!
//! An attempt is split in two. [`Prover::plan`] talks to the model and the
//! checker and only reads the library; [`Prover::commit`] applies the
//! inserts and the problem update. The scheduler runs plans in parallel and
//! commits serially, so library contents do not depend on thread timing.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::library::{
    NewRequest, NewSkill, Origin, ProblemId, ProblemRecord, ProblemStatus, RequestId, SkillId, SkillRecord,
};
use crate::llm::LlmError;
use crate::similarity::similarity_ratio;
use crate::theory::lexer::{lex, TokenKind};
use crate::theory::{
    assemble_theory, contains_cheat_keywords, extract_statement, extract_theory, normalize_whitespace,
    parse_decomposer_output, parse_theory, tactic_steps, BlockKind, Decomposition, ProofBlock, StepKind,
};
use crate::verify::{repair_and_verify, target_block, validity_check, VerifierOutcome, VerifyError};
use crate::worker::Worker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InformalSource {
    /// The first entry of `informal_proofs`, which ingest treats as the
    /// human-written proof.
    Human,
    /// Any entry after the first, falling back to the first when it is alone.
    Model,
    #[default]
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UsageThresholds {
    pub direct: f64,
    pub imitation: f64,
}

impl Default for UsageThresholds {
    fn default() -> Self {
        Self { direct: 0.85, imitation: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProverConfig {
    pub n_f: usize,
    pub decomposer_shots: usize,
    pub formalizer_shots: usize,
    pub informal_source: InformalSource,
    pub temperature: f64,
    pub usage: UsageThresholds,
}

impl Default for ProverConfig {
    fn default() -> Self {
        Self {
            n_f: 6,
            decomposer_shots: 3,
            formalizer_shots: 2,
            informal_source: InformalSource::Either,
            temperature: crate::llm::DEFAULT_TEMPERATURE,
            usage: UsageThresholds::default(),
        }
    }
}

impl ProverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_f == 0 || self.decomposer_shots == 0 || self.formalizer_shots == 0 {
            return Err("n_f, decomposer_shots and formalizer_shots must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} is outside [0, 2]", self.temperature));
        }
        let u = self.usage;
        if !(0.0 <= u.imitation && u.imitation <= u.direct && u.direct <= 1.0) {
            return Err("usage thresholds must satisfy 0 <= imitation <= direct <= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillUsage {
    DirectUse,
    Imitation,
    Unused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub skill_id: SkillId,
    pub usage: SkillUsage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Valid,
    Failed,
    /// A transport error interrupted the attempt. It does not use budget.
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptResult {
    pub problem_id: ProblemId,
    pub round: u64,
    pub worker: String,
    /// The problem's attempt count after this attempt.
    pub attempt: u32,
    pub status: AttemptStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informal_proof_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<Decomposition>,
    pub retrieved_skill_ids: Vec<SkillId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<VerifierOutcome>,
    pub repair_candidates: usize,
    pub valid: bool,
    pub harvested_skill_ids: Vec<SkillId>,
    /// Harvested lemmas the library rejected as near-duplicates.
    pub duplicate_skills: usize,
    pub emitted_request_ids: Vec<RequestId>,
    pub usage_classification: Vec<UsageEntry>,
}

impl AttemptResult {
    fn new(problem: &ProblemRecord, round: u64, worker: &Worker) -> Self {
        Self {
            problem_id: problem.id.clone(),
            round,
            worker: worker.label.clone(),
            attempt: problem.attempts_used,
            status: AttemptStatus::Failed,
            error: None,
            informal_proof_index: None,
            decomposition: None,
            retrieved_skill_ids: Vec::new(),
            theory_source: None,
            outcome: None,
            repair_candidates: 0,
            valid: false,
            harvested_skill_ids: Vec::new(),
            duplicate_skills: 0,
            emitted_request_ids: Vec::new(),
            usage_classification: Vec::new(),
        }
    }
}

/// An attempt that has run but not yet touched the library.
#[derive(Debug, Clone)]
pub struct AttemptPlan {
    pub result: AttemptResult,
    pub requests: Vec<NewRequest>,
    pub skills: Vec<NewSkill>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProverError {
    #[error("problem has no informal proofs")]
    NoInformalProofs,
}

/// Picks the informal proof to decompose; returns its index.
pub fn select_informal_proof<R: Rng + ?Sized>(
    problem: &ProblemRecord,
    source: InformalSource,
    rng: &mut R,
) -> Result<usize, ProverError> {
    let n = problem.informal_proofs.len();
    match (source, n) {
        (_, 0) => Err(ProverError::NoInformalProofs),
        (InformalSource::Human, _) | (_, 1) => Ok(0),
        (InformalSource::Model, _) => Ok(rng.random_range(1..n)),
        (InformalSource::Either, _) => Ok(rng.random_range(0..n)),
    }
}

/// Merges per-query rankings: rank 1 of every query, then rank 2, and so on,
/// skipping ids already taken, until `n_f` ids are collected.
pub fn merge_round_robin<Id: Clone + Eq + std::hash::Hash>(rankings: &[Vec<Id>], n_f: usize) -> Vec<Id> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let depth = rankings.iter().map(Vec::len).max().unwrap_or(0);
    for rank in 0..depth {
        for ranking in rankings {
            if out.len() >= n_f {
                return out;
            }
            if let Some(id) = ranking.get(rank) {
                if seen.insert(id.clone()) {
                    out.push(id.clone());
                }
            }
        }
    }
    out
}

/// The blocks of a stored skill without its theory header.
pub fn skill_body(code: &str) -> String {
    let doc = parse_theory(code);
    if doc.blocks.is_empty() {
        return code.trim().to_string();
    }
    doc.blocks.iter().map(|b| b.text().trim().to_string()).collect::<Vec<_>>().join("\n\n")
}

/// The `Useful skills k:` section of the formalizer and solver prompts.
pub fn render_skills(skills: &[SkillRecord]) -> String {
    if skills.is_empty() {
        return "(no skills available)".to_string();
    }
    skills
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Useful skills {}:\n```isabelle\n{}\n```", i + 1, skill_body(&s.code)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

const IGNORED_OPERATORS: [&str; 9] = ["(", ")", ",", "::", ".", "'", "[", "]", "="];

/// Operator tokens of a lemma's conclusion: Isabelle symbols, infix
/// punctuation and the word operators `dvd`, `mod` and `div`.
pub fn head_symbols(statement: &str) -> BTreeSet<String> {
    let toks = lex(statement);
    let code: Vec<_> = toks.iter().filter(|t| t.is_code()).collect();
    // Conclusion: the strings after the last `shows`, else every string.
    let from = code.iter().rposition(|t| t.is_ident(statement, "shows")).map_or(0, |i| i + 1);
    let mut out = BTreeSet::new();
    for t in &code[from..] {
        if t.kind != TokenKind::String {
            continue;
        }
        let inner = t.text(statement);
        let inner = &inner[1..inner.len().saturating_sub(1).max(1)];
        for it in lex(inner) {
            let text = it.text(inner);
            let keep = match it.kind {
                TokenKind::Symbol => true,
                TokenKind::Punct => !IGNORED_OPERATORS.contains(&text),
                TokenKind::Ident => matches!(text, "dvd" | "mod" | "div"),
                _ => false,
            };
            if keep {
                out.insert(text.to_string());
            }
        }
    }
    out
}

/// How each retrieved skill shows up in the generated theory.
pub fn classify_skill_usage(
    theory_source: &str,
    retrieved: &[SkillRecord],
    thresholds: UsageThresholds,
) -> Vec<UsageEntry> {
    let doc = parse_theory(theory_source);
    retrieved
        .iter()
        .map(|skill| {
            let skill_doc = parse_theory(&skill.code);
            let mut skill_blocks: Vec<&ProofBlock> = skill_doc.blocks.iter().filter(|b| b.kind.is_lemma_like()).collect();
            if skill_blocks.is_empty() {
                skill_blocks = skill_doc.blocks.iter().collect();
            }
            let mut usage = SkillUsage::Unused;
            'outer: for nb in &doc.blocks {
                let nt = nb.text();
                for sb in &skill_blocks {
                    let r = similarity_ratio(nt.trim(), sb.text().trim());
                    if r >= thresholds.direct {
                        usage = SkillUsage::DirectUse;
                        break 'outer;
                    }
                    if r >= thresholds.imitation
                        && nb.kind.is_lemma_like()
                        && !head_symbols(&nb.statement).is_disjoint(&head_symbols(&sb.statement))
                    {
                        usage = SkillUsage::Imitation;
                    }
                }
            }
            UsageEntry { skill_id: skill.id, usage }
        })
        .collect()
}

enum Abort {
    Errored(String),
    Failed(String),
}

impl From<LlmError> for Abort {
    fn from(e: LlmError) -> Self {
        if e.is_transport() {
            Abort::Errored(e.to_string())
        } else {
            Abort::Failed(e.to_string())
        }
    }
}

impl From<VerifyError> for Abort {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Transport(_) => Abort::Errored(e.to_string()),
            VerifyError::Config(_) => Abort::Failed(e.to_string()),
        }
    }
}

impl From<crate::library::LibraryError> for Abort {
    fn from(e: crate::library::LibraryError) -> Self {
        Abort::Failed(e.to_string())
    }
}

pub struct Prover<'a> {
    pub ctx: &'a Context,
    pub config: &'a ProverConfig,
}

impl<'a> Prover<'a> {
    pub fn new(ctx: &'a Context, config: &'a ProverConfig) -> Self {
        Self { ctx, config }
    }

    /// Renders and sends the decomposer prompt and parses the reply.
    pub fn decompose(
        &self,
        worker: &mut Worker,
        problem: &ProblemRecord,
        informal_proof: &str,
    ) -> Result<Decomposition, LlmError> {
        let bindings = BTreeMap::from([
            ("informal_statement".to_string(), problem.informal_statement.clone()),
            ("informal_proof".to_string(), informal_proof.to_string()),
            ("formal_statement".to_string(), problem.formal_statement.clone()),
        ]);
        let ex = self.ctx.gateway.complete_template(worker, "decomposer", &bindings, self.config.temperature)?;
        parse_decomposer_output(&ex.response).map_err(|e| LlmError::Protocol(format!("decomposer output: {e}")))
    }

    /// Skills for the formalizer: one k-NN query per request statement plus
    /// one for the formal statement, merged round-robin to `n_f` ids.
    pub fn retrieve_skills(
        &self,
        request_embeddings: &[crate::embedding::Embedding],
        statement_embedding: &crate::embedding::Embedding,
    ) -> Result<Vec<SkillRecord>, crate::library::LibraryError> {
        let lib = &self.ctx.library;
        let mut rankings = Vec::new();
        for q in request_embeddings.iter().chain(std::iter::once(statement_embedding)) {
            rankings.push(lib.query_skills(q, self.config.n_f)?.into_iter().map(|h| h.id).collect::<Vec<_>>());
        }
        Ok(merge_round_robin(&rankings, self.config.n_f).into_iter().filter_map(|id| lib.skill(id)).collect())
    }

    /// Asks for a complete theory; `None` if the reply contains none.
    pub fn formalize(
        &self,
        worker: &mut Worker,
        problem: &ProblemRecord,
        decomposition: &Decomposition,
        skills: &[SkillRecord],
    ) -> Result<Option<String>, LlmError> {
        let bindings = BTreeMap::from([
            ("skills".to_string(), render_skills(skills)),
            ("informal_statement".to_string(), problem.informal_statement.clone()),
            ("informal_proof".to_string(), decomposition.structured_proof()),
            ("formal_statement".to_string(), problem.formal_statement.clone()),
        ]);
        let ex = self.ctx.gateway.complete_template(worker, "formalizer", &bindings, self.config.temperature)?;
        Ok(extract_theory(&ex.response).map(str::to_string))
    }

    /// Runs everything that does not write to the library.
    pub fn plan(&self, worker: &mut Worker, problem: &ProblemRecord, round: u64) -> AttemptPlan {
        let mut plan = AttemptPlan { result: AttemptResult::new(problem, round, worker), requests: Vec::new(), skills: Vec::new() };
        match self.plan_inner(worker, problem, round, &mut plan) {
            Ok(()) => {}
            Err(Abort::Failed(m)) => {
                plan.result.status = AttemptStatus::Failed;
                plan.result.error = Some(m);
            }
            Err(Abort::Errored(m)) => {
                plan.result.status = AttemptStatus::Errored;
                plan.result.error = Some(m);
            }
        }
        plan
    }

    fn plan_inner(&self, worker: &mut Worker, problem: &ProblemRecord, round: u64, plan: &mut AttemptPlan) -> Result<(), Abort> {
        let gw = &self.ctx.gateway;
        let idx = select_informal_proof(problem, self.config.informal_source, &mut worker.rng)
            .map_err(|e| Abort::Failed(e.to_string()))?;
        plan.result.informal_proof_index = Some(idx);

        let decomposition = self.decompose(worker, problem, &problem.informal_proofs[idx])?;
        let mut request_embeddings = Vec::new();
        for r in &decomposition.requests {
            let embedding = gw.embed(&r.statement)?;
            request_embeddings.push(embedding.clone());
            plan.requests.push(NewRequest {
                thought: r.thought.clone(),
                statement: r.statement.clone(),
                embedding,
                source_problem: Some(problem.id.clone()),
            });
        }
        plan.result.decomposition = Some(decomposition.clone());

        let skills = self.retrieve_skills(&request_embeddings, &problem.embedding)?;
        plan.result.retrieved_skill_ids = skills.iter().map(|s| s.id).collect();

        let Some(theory) = self.formalize(worker, problem, &decomposition, &skills)? else {
            return Err(Abort::Failed("formalizer reply contains no theory".into()));
        };
        plan.result.theory_source = Some(theory.clone());

        let repaired = repair_and_verify(self.ctx.verifier.as_ref(), &theory, &self.ctx.repair)?;
        plan.result.repair_candidates = repaired.candidates_tried;
        let source = repaired.source;
        let outcome = repaired.outcome;
        plan.result.valid = validity_check(&source, &outcome, &problem.formal_statement);
        plan.result.status = if plan.result.valid { AttemptStatus::Valid } else { AttemptStatus::Failed };
        plan.result.usage_classification = classify_skill_usage(&source, &skills, self.config.usage);
        plan.result.theory_source = Some(source.clone());
        plan.result.outcome = Some(outcome.clone());

        self.harvest(&source, &outcome, &problem.formal_statement, round, plan)
    }

    /// Collects verified auxiliary blocks as skills and the statements of
    /// failed lemmas as requests.
    fn harvest(
        &self,
        source: &str,
        outcome: &VerifierOutcome,
        formal_statement: &str,
        round: u64,
        plan: &mut AttemptPlan,
    ) -> Result<(), Abort> {
        let doc = parse_theory(source);
        let target = target_block(source, formal_statement);
        let failed: HashSet<usize> = outcome.failed_blocks().into_iter().collect();
        let hammered: HashSet<usize> =
            tactic_steps(&doc).iter().filter(|s| s.kind == StepKind::Hammer).map(|s| s.block_index).collect();
        let mut context_blocks: Vec<String> = Vec::new();

        for (i, block) in doc.blocks.iter().enumerate() {
            let text = block.text();
            let text = text.trim();
            let is_def = matches!(block.kind, BlockKind::Definition | BlockKind::Fun);
            if block.kind == BlockKind::Other || is_def {
                context_blocks.push(text.to_string());
            }
            if Some(i) == target {
                continue;
            }
            let sound = !failed.contains(&i) && !hammered.contains(&i) && !contains_cheat_keywords(text);
            if block.kind.is_lemma_like() && !sound {
                let statement = extract_statement(block).map_err(|e| Abort::Failed(e.to_string()))?;
                let embedding = self.ctx.gateway.embed(&statement)?;
                plan.requests.push(NewRequest {
                    thought: "Failed lemma from a proof attempt".into(),
                    statement,
                    embedding,
                    source_problem: Some(plan.result.problem_id.clone()),
                });
                continue;
            }
            // Definitions are kept only when the whole theory checked.
            let wanted = (block.kind.is_lemma_like() && sound) || (is_def && outcome.success && sound);
            if !wanted {
                continue;
            }
            let mut blocks: Vec<String> =
                if is_def { context_blocks[..context_blocks.len() - 1].to_vec() } else { context_blocks.clone() };
            blocks.push(text.to_string());
            let name = if doc.theory_name.is_empty() { "Scratch" } else { doc.theory_name.as_str() };
            let standalone = assemble_theory(&doc.imports, &blocks, name);
            let check = self.ctx.verifier.verify(&standalone)?;
            if !check.success || contains_cheat_keywords(&standalone) {
                continue;
            }
            let statement = match extract_statement(block) {
                Ok(s) => s,
                Err(_) => normalize_whitespace(&block.statement),
            };
            let embedding = self.ctx.gateway.embed(&standalone)?;
            plan.skills.push(NewSkill {
                statement,
                code: standalone,
                embedding,
                origin: Origin::Prover,
                parent_id: None,
                created_round: round,
            });
        }
        Ok(())
    }

    /// Applies a plan: inserts requests and skills, then updates the
    /// problem. Errored attempts leave the attempt count unchanged.
    pub fn commit(&self, plan: AttemptPlan, attempt_budget: u32) -> Result<AttemptResult, crate::library::LibraryError> {
        let lib = &self.ctx.library;
        let mut result = plan.result;
        for r in plan.requests {
            result.emitted_request_ids.push(lib.insert_request(r)?);
        }
        for s in plan.skills {
            match lib.insert_skill(s)?.accepted() {
                Some(id) => result.harvested_skill_ids.push(id),
                None => result.duplicate_skills += 1,
            }
        }
        let problem = lib
            .problem(&result.problem_id)
            .ok_or_else(|| crate::library::LibraryError::UnknownProblem(result.problem_id.clone()))?;
        if result.status == AttemptStatus::Errored {
            result.attempt = problem.attempts_used;
            return Ok(result);
        }
        let used = problem.attempts_used + 1;
        let status = if result.valid {
            ProblemStatus::Solved
        } else if used >= attempt_budget {
            ProblemStatus::Exhausted
        } else {
            ProblemStatus::Pending
        };
        lib.update_problem(&result.problem_id, status, used)?;
        result.attempt = used;
        Ok(result)
    }

    pub fn run_attempt(
        &self,
        worker: &mut Worker,
        problem: &ProblemRecord,
        round: u64,
        attempt_budget: u32,
    ) -> Result<AttemptResult, crate::library::LibraryError> {
        let plan = self.plan(worker, problem, round);
        self.commit(plan, attempt_budget)
    }
}

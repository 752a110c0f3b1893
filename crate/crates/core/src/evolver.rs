//! Skill growth. A transform step rewrites the least-evolved skill along one
//! of four directions, guided by nearby pending problems and open requests.
//! A solve step proves the least-attempted open request. Both insert only
//! verified, non-duplicate skills.
//!
//! Like the prover, a step is claim, plan, commit: the claim mutates the
//! selection counters, the plan only reads, and the commit inserts.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::library::{
    Direction, LibraryError, NewSkill, Origin, ProblemId, ProblemStatus, RequestId, RequestRecord, RequestStatus,
    SkillId, SkillRecord,
};
use crate::llm::LlmError;
use crate::prover::render_skills;
use crate::theory::{contains_cheat_keywords, extract_statement, extract_theory, parse_theory};
use crate::verify::{repair_and_verify, target_block, validity_check, VerifierOutcome, VerifyError};
use crate::worker::Worker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolverConfig {
    /// Pending problems shown in a transform prompt.
    pub n_d: usize,
    /// Open requests shown in a transform prompt.
    pub n_requests: usize,
    /// Reference skills shown to the request solver.
    pub solver_refs: usize,
    /// Sampling weights in [`Direction::ALL`] order.
    pub direction_weights: [f64; 4],
    /// Chance that a step is a transform rather than a solve.
    pub transform_probability: f64,
    pub temperature: f64,
}

impl Default for EvolverConfig {
    fn default() -> Self {
        Self {
            n_d: 4,
            n_requests: 2,
            solver_refs: 3,
            direction_weights: [0.25; 4],
            transform_probability: 0.5,
            temperature: crate::llm::DEFAULT_TEMPERATURE,
        }
    }
}

impl EvolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_d == 0 || self.solver_refs == 0 {
            return Err("n_d and solver_refs must be positive".into());
        }
        if self.direction_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("direction weights must be finite and non-negative".into());
        }
        let sum: f64 = self.direction_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(format!("direction weights sum to {sum}, expected 1"));
        }
        if !(0.0..=1.0).contains(&self.transform_probability) {
            return Err("transform_probability must be in [0, 1]".into());
        }
        Ok(())
    }

    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction {
        let dist = WeightedIndex::new(self.direction_weights).expect("validated weights");
        Direction::ALL[dist.sample(rng)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Transform,
    SolveRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    Unverified { detail: String },
    Duplicate { similarity: f64, nearest_id: SkillId },
    Transport { detail: String },
    /// Nothing to work on.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum StepOutcome {
    Inserted { skill_id: SkillId },
    Rejected(RejectReason),
}

impl StepOutcome {
    pub fn inserted(&self) -> Option<SkillId> {
        match self {
            StepOutcome::Inserted { skill_id } => Some(*skill_id),
            StepOutcome::Rejected(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub round: u64,
    pub worker: String,
    pub kind: StepKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_skill_id: Option<SkillId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<RequestId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_problem_ids: Vec<ProblemId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_request_ids: Vec<RequestId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_skill_ids: Vec<SkillId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<VerifierOutcome>,
    pub repair_candidates: usize,
    #[serde(flatten)]
    pub result: StepOutcome,
}

/// What a step works on, fixed during the serial claim phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Claim {
    Transform { skill: SkillRecord, direction: Direction },
    Solve { request: RequestRecord },
    Empty(StepKind),
}

/// A planned step waiting to be committed.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub result: StepResult,
    pub skill: Option<NewSkill>,
}

enum Reject {
    Unverified(String),
    Transport(String),
}

impl From<LlmError> for Reject {
    fn from(e: LlmError) -> Self {
        Reject::Transport(e.to_string())
    }
}

impl From<VerifyError> for Reject {
    fn from(e: VerifyError) -> Self {
        Reject::Transport(e.to_string())
    }
}

impl From<LibraryError> for Reject {
    fn from(e: LibraryError) -> Self {
        Reject::Transport(e.to_string())
    }
}

/// "Problem k:" sections for a direction prompt.
pub fn render_problems<S: AsRef<str>>(statements: &[S]) -> String {
    if statements.is_empty() {
        return "(no reference problems)".to_string();
    }
    statements
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Problem {}:\n```isabelle\n{}\n```", i + 1, s.as_ref().trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub struct Evolver<'a> {
    pub ctx: &'a Context,
    pub config: &'a EvolverConfig,
}

impl<'a> Evolver<'a> {
    pub fn new(ctx: &'a Context, config: &'a EvolverConfig) -> Self {
        Self { ctx, config }
    }

    pub fn claim_transform(&self, worker: &mut Worker) -> Claim {
        match self.ctx.library.claim_least_evolved(&mut worker.rng) {
            Ok(skill) => Claim::Transform { skill, direction: self.config.sample_direction(&mut worker.rng) },
            Err(_) => Claim::Empty(StepKind::Transform),
        }
    }

    pub fn claim_solve(&self, worker: &mut Worker) -> Claim {
        match self.ctx.library.claim_least_solved_request(&mut worker.rng) {
            Ok(request) => Claim::Solve { request },
            Err(_) => Claim::Empty(StepKind::SolveRequest),
        }
    }

    /// Picks the step kind at random, falling back to the other kind when
    /// its store is empty.
    pub fn claim(&self, worker: &mut Worker) -> Claim {
        let transform_first = worker.rng.random_bool(self.config.transform_probability);
        let first = if transform_first { self.claim_transform(worker) } else { self.claim_solve(worker) };
        match first {
            Claim::Empty(_) if transform_first => self.claim_solve(worker),
            Claim::Empty(_) => match self.claim_transform(worker) {
                Claim::Empty(_) => Claim::Empty(StepKind::SolveRequest),
                c => c,
            },
            c => c,
        }
    }

    pub fn plan(&self, worker: &mut Worker, claim: Claim, round: u64) -> StepPlan {
        let (kind, source_skill_id, request_id, direction) = match &claim {
            Claim::Transform { skill, direction } => (StepKind::Transform, Some(skill.id), None, Some(*direction)),
            Claim::Solve { request } => (StepKind::SolveRequest, None, Some(request.id), None),
            Claim::Empty(k) => (*k, None, None, None),
        };
        let mut plan = StepPlan {
            result: StepResult {
                round,
                worker: worker.label.clone(),
                kind,
                source_skill_id,
                request_id,
                direction,
                reference_problem_ids: Vec::new(),
                reference_request_ids: Vec::new(),
                reference_skill_ids: Vec::new(),
                theory_source: None,
                outcome: None,
                repair_candidates: 0,
                result: StepOutcome::Rejected(RejectReason::Empty),
            },
            skill: None,
        };
        let done = match claim {
            Claim::Transform { skill, direction } => self.plan_transform(worker, &skill, direction, round, &mut plan),
            Claim::Solve { request } => self.plan_solve(worker, &request, round, &mut plan),
            Claim::Empty(_) => return plan,
        };
        if let Err(r) = done {
            plan.result.result = StepOutcome::Rejected(match r {
                Reject::Unverified(detail) => RejectReason::Unverified { detail },
                Reject::Transport(detail) => RejectReason::Transport { detail },
            });
            plan.skill = None;
        }
        plan
    }

    fn plan_transform(
        &self,
        worker: &mut Worker,
        skill: &SkillRecord,
        direction: Direction,
        round: u64,
        plan: &mut StepPlan,
    ) -> Result<(), Reject> {
        let lib = &self.ctx.library;
        let problems = lib.query_problems(&skill.embedding, self.config.n_d, |p| p.status == ProblemStatus::Pending)?;
        let mut statements: Vec<String> = Vec::new();
        for hit in &problems {
            if let Some(p) = lib.problem(&hit.id) {
                statements.push(p.formal_statement);
            }
        }
        plan.result.reference_problem_ids = problems.into_iter().map(|h| h.id).collect();
        if self.config.n_requests > 0 {
            let requests = lib.query_requests(&skill.embedding, self.config.n_requests, |r| r.status == RequestStatus::Open)?;
            for hit in &requests {
                if let Some(r) = lib.request(hit.id) {
                    statements.push(r.statement);
                }
            }
            plan.result.reference_request_ids = requests.into_iter().map(|h| h.id).collect();
        }
        let bindings = BTreeMap::from([
            ("problems".to_string(), render_problems(&statements)),
            ("skill".to_string(), skill.code.trim().to_string()),
        ]);
        let ex = self.ctx.gateway.complete_template(worker, &direction.template_id(), &bindings, self.config.temperature)?;
        let theory = extract_theory(&ex.response).ok_or_else(|| Reject::Unverified("reply contains no theory".into()))?;
        plan.result.theory_source = Some(theory.to_string());
        let doc = parse_theory(theory);
        let last = doc
            .blocks
            .iter()
            .rev()
            .find(|b| b.kind.is_lemma_like())
            .ok_or_else(|| Reject::Unverified("evolved theory has no lemma".into()))?;
        let statement = extract_statement(last).map_err(|e| Reject::Unverified(e.to_string()))?;
        self.check_and_stage(theory, &statement, Origin::from(direction), Some(skill.id), round, plan)
    }

    fn plan_solve(&self, worker: &mut Worker, request: &RequestRecord, round: u64, plan: &mut StepPlan) -> Result<(), Reject> {
        let lib = &self.ctx.library;
        let refs: Vec<SkillRecord> = lib
            .query_skills(&request.embedding, self.config.solver_refs)?
            .into_iter()
            .filter_map(|h| lib.skill(h.id))
            .collect();
        plan.result.reference_skill_ids = refs.iter().map(|s| s.id).collect();
        let bindings = BTreeMap::from([
            ("skills".to_string(), render_skills(&refs)),
            ("formal_statement".to_string(), request.statement.trim().to_string()),
        ]);
        let ex = self.ctx.gateway.complete_template(worker, "request_solver", &bindings, self.config.temperature)?;
        let theory = extract_theory(&ex.response).ok_or_else(|| Reject::Unverified("reply contains no theory".into()))?;
        plan.result.theory_source = Some(theory.to_string());
        self.check_and_stage(theory, &request.statement, Origin::RequestSolver, None, round, plan)
    }

    /// Repairs and checks `theory`; a theory that proves `statement` without
    /// cheating is staged for insertion.
    fn check_and_stage(
        &self,
        theory: &str,
        statement: &str,
        origin: Origin,
        parent_id: Option<SkillId>,
        round: u64,
        plan: &mut StepPlan,
    ) -> Result<(), Reject> {
        let repaired = repair_and_verify(self.ctx.verifier.as_ref(), theory, &self.ctx.repair)?;
        plan.result.repair_candidates = repaired.candidates_tried;
        plan.result.theory_source = Some(repaired.source.clone());
        plan.result.outcome = Some(repaired.outcome.clone());
        if contains_cheat_keywords(&repaired.source) {
            return Err(Reject::Unverified("proof uses a cheat keyword".into()));
        }
        if !validity_check(&repaired.source, &repaired.outcome, statement) {
            let why = if repaired.outcome.success { "no block proves the statement" } else { "verification failed" };
            return Err(Reject::Unverified(why.into()));
        }
        let doc = parse_theory(&repaired.source);
        let target = target_block(&repaired.source, statement).expect("validity_check found it");
        let statement = extract_statement(&doc.blocks[target]).map_err(|e| Reject::Unverified(e.to_string()))?;
        let code = format!("{}\n", repaired.source.trim_end());
        let embedding = self.ctx.gateway.embed(&code)?;
        plan.skill = Some(NewSkill { statement, code, embedding, origin, parent_id, created_round: round });
        Ok(())
    }

    pub fn commit(&self, mut plan: StepPlan) -> Result<StepResult, LibraryError> {
        let Some(skill) = plan.skill.take() else { return Ok(plan.result) };
        let lib = &self.ctx.library;
        plan.result.result = match lib.insert_skill(skill)? {
            crate::library::InsertOutcome::Accepted(id) => {
                if let Some(rid) = plan.result.request_id {
                    lib.mark_request_solved(rid)?;
                }
                StepOutcome::Inserted { skill_id: id }
            }
            crate::library::InsertOutcome::Rejected { max_similarity, nearest_id } => {
                StepOutcome::Rejected(RejectReason::Duplicate { similarity: max_similarity, nearest_id })
            }
        };
        Ok(plan.result)
    }

    pub fn run_transform_step(&self, worker: &mut Worker, round: u64) -> Result<StepResult, LibraryError> {
        let claim = self.claim_transform(worker);
        let plan = self.plan(worker, claim, round);
        self.commit(plan)
    }

    pub fn run_solve_request_step(&self, worker: &mut Worker, round: u64) -> Result<StepResult, LibraryError> {
        let claim = self.claim_solve(worker);
        let plan = self.plan(worker, claim, round);
        self.commit(plan)
    }

    pub fn run_step(&self, worker: &mut Worker, round: u64) -> Result<StepResult, LibraryError> {
        let claim = self.claim(worker);
        let plan = self.plan(worker, claim, round);
        self.commit(plan)
    }
}

#[cfg(test)]
mod tests;

use std::sync::Arc;

use super::*;
use crate::demo::*;
use crate::embedding::Embedding;
use crate::library::{LibraryConfig, NewRequest, ProblemRecord, SkillLibrary};
use crate::llm::{Gateway, HashEmbedder, ModelPool, ScriptedChat};
use crate::verify::{MockVerifier, Verifier};

const DIM: usize = 64;

fn context(chat: ScriptedChat, verifier: impl Verifier + 'static) -> Context {
    let library = Arc::new(SkillLibrary::new(LibraryConfig { dim: DIM, ..LibraryConfig::default() }));
    let gateway = Gateway::new(Arc::new(chat), Arc::new(HashEmbedder::new(DIM)), ModelPool::new(["m"]).unwrap());
    Context::new(library, Arc::new(gateway), Arc::new(verifier))
}

fn seed_skill(ctx: &Context, code: &str) -> SkillId {
    ctx.library
        .insert_skill(NewSkill {
            statement: crate::theory::statement_of(code),
            code: code.into(),
            embedding: ctx.gateway.embed(code).unwrap(),
            origin: Origin::Prover,
            parent_id: None,
            created_round: 0,
        })
        .unwrap()
        .accepted()
        .unwrap()
}

fn seed_request(ctx: &Context, statement: &str) -> RequestId {
    ctx.library
        .insert_request(NewRequest {
            thought: "needed".into(),
            statement: statement.into(),
            embedding: ctx.gateway.embed(statement).unwrap(),
            source_problem: None,
        })
        .unwrap()
}

fn seed_problem(ctx: &Context, id: &str, formal: &str, status: ProblemStatus) {
    ctx.library
        .upsert_problem(ProblemRecord {
            id: ProblemId(id.into()),
            informal_statement: "s".into(),
            informal_proofs: vec!["p".into()],
            formal_statement: formal.into(),
            embedding: ctx.gateway.embed(formal).unwrap(),
            status,
            attempts_used: 0,
            split: None,
        })
        .unwrap();
}

fn only(direction: Direction) -> EvolverConfig {
    let mut w = [0.0; 4];
    w[direction.index()] = 1.0;
    EvolverConfig { direction_weights: w, ..EvolverConfig::default() }
}

fn transform_chat(reply: &str) -> ScriptedChat {
    let mut chat = ScriptedChat::new();
    for d in Direction::ALL {
        chat = chat.on(&d.template_id(), &[], formalizer_reply(reply));
    }
    chat
}

#[test]
fn generalization_is_inserted_as_child() {
    let ctx = context(transform_chat(CROSS_MUL_GEN_THEORY), MockVerifier::default());
    let parent = seed_skill(&ctx, CROSS_MUL_THEORY);
    let cfg = only(Direction::Parameterize);
    let mut w = Worker::new("e0", 5, 3);
    let r = Evolver::new(&ctx, &cfg).run_transform_step(&mut w, 2).unwrap();
    let child = r.result.inserted().expect("inserted");
    assert_eq!(r.direction, Some(Direction::Parameterize));
    assert_eq!(r.source_skill_id, Some(parent));
    let rec = ctx.library.skill(child).unwrap();
    assert_eq!(rec.parent_id, Some(parent));
    assert_eq!(rec.origin, Origin::DirParameterize);
    assert_eq!(rec.created_round, 2);
    assert!(rec.statement.starts_with("lemma divide_cross_mul_generalized:"));
    assert_eq!(ctx.library.skill(parent).unwrap().evolve_count, 1);
    assert_eq!(ctx.library.skill(parent).unwrap().code, CROSS_MUL_THEORY);
}

#[test]
fn copy_of_parent_is_a_duplicate() {
    let ctx = context(transform_chat(CROSS_MUL_THEORY), MockVerifier::default());
    let parent = seed_skill(&ctx, CROSS_MUL_THEORY);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_transform_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert_eq!(r.result, StepOutcome::Rejected(RejectReason::Duplicate { similarity: 1.0, nearest_id: parent }));
    assert_eq!(ctx.library.skill_count(), 1);
    assert_eq!(ctx.library.skill(parent).unwrap().evolve_count, 1);
}

#[test]
fn transform_on_empty_store_is_empty() {
    let ctx = context(ScriptedChat::new(), MockVerifier::default());
    let cfg = EvolverConfig::default();
    let ev = Evolver::new(&ctx, &cfg);
    let mut w = Worker::new("e0", 1, 0);
    assert_eq!(ev.run_transform_step(&mut w, 0).unwrap().result, StepOutcome::Rejected(RejectReason::Empty));
    assert_eq!(ev.run_solve_request_step(&mut w, 0).unwrap().result, StepOutcome::Rejected(RejectReason::Empty));
    assert_eq!(ev.run_step(&mut w, 0).unwrap().result, StepOutcome::Rejected(RejectReason::Empty));
    assert_eq!(w.llm_calls, 0);
}

#[test]
fn transform_references_pending_problems_and_open_requests() {
    let ctx = context(transform_chat(CROSS_MUL_GEN_THEORY), MockVerifier::default());
    seed_skill(&ctx, CROSS_MUL_THEORY);
    for i in 0..6 {
        seed_problem(&ctx, &format!("p{i}"), &format!("theorem p{i}: \"a{i} / b = c / d\""), ProblemStatus::Pending);
    }
    seed_problem(&ctx, "done", "theorem done: \"a / b = c / d\"", ProblemStatus::Solved);
    let r0 = seed_request(&ctx, "lemma r0: \"a / b = c\"");
    let r1 = seed_request(&ctx, "lemma r1: \"b * c = a\"");
    let r2 = seed_request(&ctx, "lemma r2: \"x = x\"");
    ctx.library.mark_request_solved(r2).unwrap();
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_transform_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert_eq!(r.reference_problem_ids.len(), 4);
    assert!(!r.reference_problem_ids.contains(&ProblemId("done".into())));
    let mut reqs = r.reference_request_ids.clone();
    reqs.sort();
    assert_eq!(reqs, vec![r0, r1]);
}

#[test]
fn unverified_evolution_is_rejected() {
    let script = "[[rule]]\nblock = \"divide_cross_mul_generalized\"\nverdict = \"reject\"\n";
    let verifier = MockVerifier::new(crate::verify::MockScript::from_toml(script).unwrap());
    let ctx = context(transform_chat(CROSS_MUL_GEN_THEORY), verifier);
    let parent = seed_skill(&ctx, CROSS_MUL_THEORY);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_transform_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert!(matches!(r.result, StepOutcome::Rejected(RejectReason::Unverified { .. })), "{:?}", r.result);
    assert_eq!(r.repair_candidates, crate::verify::DEFAULT_HEURISTICS.len() + 1);
    assert_eq!(ctx.library.skill_count(), 1);
    assert_eq!(ctx.library.skill(parent).unwrap().evolve_count, 1);
}

struct Down;

impl Verifier for Down {
    fn verify(&self, _: &str) -> Result<VerifierOutcome, VerifyError> {
        Err(VerifyError::Transport("checker offline".into()))
    }
}

#[test]
fn transport_failure_keeps_the_selection_count() {
    let ctx = context(transform_chat(CROSS_MUL_GEN_THEORY), Down);
    let parent = seed_skill(&ctx, CROSS_MUL_THEORY);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_transform_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert!(matches!(r.result, StepOutcome::Rejected(RejectReason::Transport { .. })));
    assert_eq!(ctx.library.skill(parent).unwrap().evolve_count, 1);
}

#[test]
fn request_is_solved_and_marked() {
    let chat = ScriptedChat::new().on("request_solver", &["exponent_properties"], formalizer_reply(EXPONENT_THEORY));
    let ctx = context(chat, MockVerifier::default());
    let req = seed_request(&ctx, EXPONENT_REQUEST);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_solve_request_step(&mut Worker::new("e0", 1, 0), 1).unwrap();
    let id = r.result.inserted().expect("inserted");
    let rec = ctx.library.skill(id).unwrap();
    assert_eq!(rec.origin, Origin::RequestSolver);
    assert_eq!(rec.parent_id, None);
    let request = ctx.library.request(req).unwrap();
    assert_eq!(request.status, RequestStatus::Solved);
    assert_eq!(request.solve_count, 1);
    assert_eq!(r.request_id, Some(req));
}

#[test]
fn solver_references_come_from_the_lemma_store() {
    let chat = ScriptedChat::new().on("request_solver", &[], formalizer_reply(EXPONENT_THEORY));
    let ctx = context(chat, MockVerifier::default());
    for code in [CROSS_MUL_THEORY, CROSS_MUL_GEN_THEORY, AMC_THEORY, "theory T imports Main begin lemma t: \"True\" by simp end"] {
        seed_skill(&ctx, code);
    }
    seed_request(&ctx, EXPONENT_REQUEST);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_solve_request_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert_eq!(r.reference_skill_ids.len(), 3);
}

#[test]
fn sorry_proof_leaves_request_open() {
    let cheat = EXPONENT_THEORY.replace("by (simp add: assms(1) power_mult)", "sorry");
    let chat = ScriptedChat::new().on("request_solver", &[], formalizer_reply(&cheat));
    let ctx = context(chat, MockVerifier::default());
    let req = seed_request(&ctx, EXPONENT_REQUEST);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_solve_request_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert!(matches!(r.result, StepOutcome::Rejected(RejectReason::Unverified { .. })));
    let request = ctx.library.request(req).unwrap();
    assert_eq!((request.status, request.solve_count), (RequestStatus::Open, 1));
    assert_eq!(ctx.library.skill_count(), 0);
}

#[test]
fn proof_of_another_statement_is_rejected() {
    let chat = ScriptedChat::new().on("request_solver", &[], formalizer_reply(CROSS_MUL_THEORY));
    let ctx = context(chat, MockVerifier::default());
    let req = seed_request(&ctx, EXPONENT_REQUEST);
    let cfg = EvolverConfig::default();
    let r = Evolver::new(&ctx, &cfg).run_solve_request_step(&mut Worker::new("e0", 1, 0), 0).unwrap();
    assert_eq!(
        r.result,
        StepOutcome::Rejected(RejectReason::Unverified { detail: "no block proves the statement".into() })
    );
    assert_eq!(ctx.library.request(req).unwrap().status, RequestStatus::Open);
}

#[test]
fn direction_frequencies_follow_uniform_weights() {
    // Binomial(4000, 1/4): sd = sqrt(4000 * 0.25 * 0.75) ~ 27.4, so +-100 is
    // about 3.6 sd.
    let cfg = EvolverConfig::default();
    let mut w = Worker::new("e0", 2024, 0);
    let mut counts = [0u32; 4];
    for _ in 0..4000 {
        counts[cfg.sample_direction(&mut w.rng).index()] += 1;
    }
    assert!(counts.iter().all(|&c| (900..=1100).contains(&c)), "{counts:?}");
}

#[test]
fn zero_weight_directions_are_never_drawn() {
    let cfg = only(Direction::ExtendDimensions);
    let mut w = Worker::new("e0", 1, 0);
    assert!((0..500).all(|_| cfg.sample_direction(&mut w.rng) == Direction::ExtendDimensions));
}

#[test]
fn step_kind_falls_back_when_one_store_is_empty() {
    let ctx = context(ScriptedChat::new(), MockVerifier::default());
    seed_request(&ctx, EXPONENT_REQUEST);
    let cfg = EvolverConfig { transform_probability: 1.0, ..EvolverConfig::default() };
    let claim = Evolver::new(&ctx, &cfg).claim(&mut Worker::new("e0", 1, 0));
    assert!(matches!(claim, Claim::Solve { .. }));
}

#[test]
fn config_validation() {
    assert!(EvolverConfig::default().validate().is_ok());
    assert!(EvolverConfig { n_d: 0, ..EvolverConfig::default() }.validate().is_err());
    assert!(EvolverConfig { direction_weights: [0.5, 0.5, 0.5, 0.0], ..EvolverConfig::default() }.validate().is_err());
    assert!(EvolverConfig { direction_weights: [1.5, -0.5, 0.0, 0.0], ..EvolverConfig::default() }.validate().is_err());
}

#[test]
fn step_results_serialize_flat() {
    let r = StepResult {
        round: 0,
        worker: "e0".into(),
        kind: StepKind::Transform,
        source_skill_id: Some(SkillId(1)),
        request_id: None,
        direction: Some(Direction::Parameterize),
        reference_problem_ids: vec![],
        reference_request_ids: vec![],
        reference_skill_ids: vec![],
        theory_source: None,
        outcome: None,
        repair_candidates: 0,
        result: StepOutcome::Rejected(RejectReason::Duplicate { similarity: 1.0, nearest_id: SkillId(1) }),
    };
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["result"], "rejected");
    assert_eq!(v["reason"], "duplicate");
    assert_eq!(v["direction"], "parameterize");
    let back: StepResult = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
    let _ = Embedding::new(vec![1.0]).unwrap();
}

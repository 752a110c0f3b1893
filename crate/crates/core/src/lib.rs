//! Skill-library theorem proving: a vector-indexed library of verified
//! lemmas, a prover that decomposes and formalizes informal proofs with
//! retrieved skills, an evolver that grows the library, and a tick-based run
//! controller tying them to a model gateway and a proof checker.

pub mod context;
pub mod demo;
pub mod embedding;
pub mod evolver;
pub mod library;
pub mod llm;
pub mod orchestrator;
pub mod prover;
pub mod similarity;
pub mod theory;
pub mod verify;
pub mod worker;

pub use context::Context;
pub use embedding::Embedding;
pub use evolver::{Evolver, EvolverConfig, StepResult};
pub use library::{
    Direction, LibraryConfig, LibraryError, Origin, ProblemId, ProblemRecord, ProblemStatus, RequestId, RequestRecord,
    SkillId, SkillLibrary, SkillRecord, StoreKind,
};
pub use llm::Gateway;
pub use orchestrator::{compute_stats, ingest_problems, Orchestrator, OrchestratorConfig, RunStats};
pub use prover::{AttemptResult, Prover, ProverConfig};
pub use similarity::similarity_ratio;
pub use theory::{parse_theory, ProofBlock, TheoryDocument};
pub use verify::{repair_and_verify, MockVerifier, PisaVerifier, Verifier, VerifierOutcome};
pub use worker::Worker;

use std::sync::Arc;

use crate::library::SkillLibrary;
use crate::llm::Gateway;
use crate::verify::{RepairPolicy, Verifier};

/// Everything the prover and evolver share: the library, the model
/// gateway, and the checker with its repair policy.
#[derive(Clone)]
pub struct Context {
    pub library: Arc<SkillLibrary>,
    pub gateway: Arc<Gateway>,
    pub verifier: Arc<dyn Verifier>,
    pub repair: RepairPolicy,
}

impl Context {
    pub fn new(library: Arc<SkillLibrary>, gateway: Arc<Gateway>, verifier: Arc<dyn Verifier>) -> Self {
        Self { library, gateway, verifier, repair: RepairPolicy::default() }
    }

    pub fn with_repair(mut self, repair: RepairPolicy) -> Self {
        self.repair = repair;
        self
    }
}

//! The skill library: three embedding-backed stores (lemmas, requests,
//! problems) shared by every prover and evolver worker.
//!
//! All mutations go through one write lock and are journaled before they are
//! applied, so the library is linearizable and crash-recoverable. Skill
//! insertion is additionally serialized by an insert gate: the near-duplicate
//! scan runs under a read lock (queries proceed concurrently) and no other
//! insertion can slip in between the scan and the append.
//!
//! Selection helpers come in two flavours. `select_*` only reads. `claim_*`
//! selects and bumps the usage counter in one critical section, which is what
//! concurrent workers use so that two of them cannot draw the same least-used
//! record at the same time.

mod genealogy;
mod persist;
mod records;

use std::collections::HashMap;
use std::sync::{Mutex, MutexGuard, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, EmbeddingError};
use crate::similarity::{matcher_ratio_if_at_least, SequenceMatcher};

pub use genealogy::{Forest, GenealogyNode, OriginDistribution};
pub use persist::{LIBRARY_FORMAT, LIBRARY_FORMAT_VERSION};
pub use records::*;

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.85;
pub const DEFAULT_EMBEDDING_DIM: usize = 1536;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("k must be positive")]
    InvalidK,
    #[error("the {0} store is empty")]
    EmptyStore(&'static str),
    #[error("no open requests")]
    NoOpenRequests,
    #[error("unknown skill {0}")]
    UnknownSkill(SkillId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("unknown problem {0}")]
    UnknownProblem(ProblemId),
    #[error("origin {origin} is inconsistent with parent {parent:?}")]
    OriginParentMismatch { origin: Origin, parent: Option<SkillId> },
    #[error("request statement is empty")]
    EmptyStatement,
    #[error("problem {0} has an empty formal statement")]
    EmptyFormalStatement(ProblemId),
    #[error("skill {child} references missing parent {parent}")]
    DanglingParent { child: SkillId, parent: SkillId },
    #[error("genealogy contains a cycle through skill {0}")]
    Cycle(SkillId),
    #[error("library i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt library file: {0}")]
    Corrupt(String),
    #[error("unsupported library file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

pub type Result<T, E = LibraryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LibraryConfig {
    pub dim: usize,
    pub dedup_threshold: f64,
    /// Compare code with difflib's default popularity heuristic rather than
    /// the pure ratio. See [`dedup_similarity`].
    #[serde(default = "default_autojunk")]
    pub dedup_autojunk: bool,
}

fn default_autojunk() -> bool {
    true
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBEDDING_DIM, dedup_threshold: DEFAULT_DEDUP_THRESHOLD, dedup_autojunk: true }
    }
}

fn dedup_matcher(candidate: &str, existing: &str, autojunk: bool) -> SequenceMatcher {
    if autojunk {
        SequenceMatcher::with_autojunk(candidate, existing)
    } else {
        SequenceMatcher::new(candidate, existing)
    }
}

/// The similarity `insert_skill` compares against the threshold: the
/// candidate's code against an existing skill's code. With `autojunk` the
/// measure is not symmetric.
pub fn dedup_similarity(candidate: &str, existing: &str, autojunk: bool) -> f64 {
    dedup_matcher(candidate, existing, autojunk).ratio()
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome {
    Accepted(SkillId),
    Rejected { max_similarity: f64, nearest_id: SkillId },
}

impl InsertOutcome {
    pub fn accepted(&self) -> Option<SkillId> {
        match self {
            InsertOutcome::Accepted(id) => Some(*id),
            InsertOutcome::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Inserted,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsageTarget {
    Evolved(SkillId),
    Solved(RequestId),
}

/// A mutation, as applied to the in-memory state and written to the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub(crate) enum Event {
    SkillInserted { record: SkillRecord },
    RequestInserted { record: RequestRecord },
    ProblemUpserted { record: ProblemRecord },
    SkillEvolved { id: SkillId },
    RequestAttempted { id: RequestId },
    RequestSolved { id: RequestId },
    ProblemUpdated { id: ProblemId, status: ProblemStatus, attempts_used: u32 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct State {
    pub(crate) skills: Vec<SkillRecord>,
    pub(crate) requests: Vec<RequestRecord>,
    pub(crate) problems: Vec<ProblemRecord>,
    skill_pos: HashMap<SkillId, usize>,
    request_pos: HashMap<RequestId, usize>,
    problem_pos: HashMap<ProblemId, usize>,
    pub(crate) next_skill: u64,
    pub(crate) next_request: u64,
}

impl State {
    pub(crate) fn from_records(
        skills: Vec<SkillRecord>,
        requests: Vec<RequestRecord>,
        problems: Vec<ProblemRecord>,
        next_skill: u64,
        next_request: u64,
    ) -> Result<Self> {
        let mut st = State { next_skill, next_request, ..State::default() };
        for record in skills {
            st.check_new_skill(&record)?;
            st.insert_skill(record);
        }
        for record in requests {
            st.check_new_request(&record)?;
            st.insert_request(record);
        }
        for record in problems {
            if st.problem_pos.contains_key(&record.id) {
                return Err(LibraryError::Corrupt(format!("duplicate problem {}", record.id)));
            }
            st.upsert_problem(record);
        }
        Ok(st)
    }

    fn check_new_skill(&self, r: &SkillRecord) -> Result<()> {
        if self.skill_pos.contains_key(&r.id) {
            return Err(LibraryError::Corrupt(format!("duplicate skill {}", r.id)));
        }
        Ok(())
    }

    fn check_new_request(&self, r: &RequestRecord) -> Result<()> {
        if self.request_pos.contains_key(&r.id) {
            return Err(LibraryError::Corrupt(format!("duplicate request {}", r.id)));
        }
        Ok(())
    }

    fn insert_skill(&mut self, r: SkillRecord) {
        self.next_skill = self.next_skill.max(r.id.0 + 1);
        self.skill_pos.insert(r.id, self.skills.len());
        self.skills.push(r);
    }

    fn insert_request(&mut self, r: RequestRecord) {
        self.next_request = self.next_request.max(r.id.0 + 1);
        self.request_pos.insert(r.id, self.requests.len());
        self.requests.push(r);
    }

    fn upsert_problem(&mut self, r: ProblemRecord) {
        match self.problem_pos.get(&r.id) {
            Some(&i) => self.problems[i] = r,
            None => {
                self.problem_pos.insert(r.id.clone(), self.problems.len());
                self.problems.push(r);
            }
        }
    }

    fn skill_mut(&mut self, id: SkillId) -> Result<&mut SkillRecord> {
        let i = *self.skill_pos.get(&id).ok_or(LibraryError::UnknownSkill(id))?;
        Ok(&mut self.skills[i])
    }

    fn request_mut(&mut self, id: RequestId) -> Result<&mut RequestRecord> {
        let i = *self.request_pos.get(&id).ok_or(LibraryError::UnknownRequest(id))?;
        Ok(&mut self.requests[i])
    }

    pub(crate) fn skill(&self, id: SkillId) -> Option<&SkillRecord> {
        self.skill_pos.get(&id).map(|&i| &self.skills[i])
    }

    fn request(&self, id: RequestId) -> Option<&RequestRecord> {
        self.request_pos.get(&id).map(|&i| &self.requests[i])
    }

    fn problem(&self, id: &ProblemId) -> Option<&ProblemRecord> {
        self.problem_pos.get(id).map(|&i| &self.problems[i])
    }

    /// Checks that `event` can be applied. `apply` never fails after this.
    fn validate(&self, event: &Event) -> Result<()> {
        match event {
            Event::SkillInserted { record } => self.check_new_skill(record),
            Event::RequestInserted { record } => self.check_new_request(record),
            Event::ProblemUpserted { .. } => Ok(()),
            Event::SkillEvolved { id } => self.skill(*id).map(|_| ()).ok_or(LibraryError::UnknownSkill(*id)),
            Event::RequestAttempted { id } | Event::RequestSolved { id } => {
                self.request(*id).map(|_| ()).ok_or(LibraryError::UnknownRequest(*id))
            }
            Event::ProblemUpdated { id, .. } => {
                self.problem(id).map(|_| ()).ok_or_else(|| LibraryError::UnknownProblem(id.clone()))
            }
        }
    }

    pub(crate) fn apply(&mut self, event: Event) -> Result<()> {
        self.validate(&event)?;
        match event {
            Event::SkillInserted { record } => self.insert_skill(record),
            Event::RequestInserted { record } => self.insert_request(record),
            Event::ProblemUpserted { record } => self.upsert_problem(record),
            Event::SkillEvolved { id } => self.skill_mut(id)?.evolve_count += 1,
            Event::RequestAttempted { id } => self.request_mut(id)?.solve_count += 1,
            Event::RequestSolved { id } => self.request_mut(id)?.status = RequestStatus::Solved,
            Event::ProblemUpdated { id, status, attempts_used } => {
                let i = self.problem_pos[&id];
                self.problems[i].status = status;
                self.problems[i].attempts_used = attempts_used;
            }
        }
        Ok(())
    }
}

/// Shared, thread-safe skill library.
pub struct SkillLibrary {
    config: LibraryConfig,
    state: RwLock<State>,
    insert_gate: Mutex<()>,
    journal: Mutex<Option<persist::Journal>>,
}

impl std::fmt::Debug for SkillLibrary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let st = self.read();
        f.debug_struct("SkillLibrary")
            .field("config", &self.config)
            .field("skills", &st.skills.len())
            .field("requests", &st.requests.len())
            .field("problems", &st.problems.len())
            .finish()
    }
}

impl SkillLibrary {
    pub fn new(config: LibraryConfig) -> Self {
        Self::from_state(config, State::default())
    }

    pub(crate) fn from_state(config: LibraryConfig, state: State) -> Self {
        Self {
            config,
            state: RwLock::new(state),
            insert_gate: Mutex::new(()),
            journal: Mutex::new(None),
        }
    }

    pub fn config(&self) -> LibraryConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub(crate) fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(PoisonError::into_inner)
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(PoisonError::into_inner)
    }

    fn journal(&self) -> MutexGuard<'_, Option<persist::Journal>> {
        self.journal.lock().unwrap_or_else(PoisonError::into_inner)
    }

    /// Journals then applies. Must be called with the write lock held so the
    /// journal order equals the apply order.
    fn commit(&self, state: &mut State, event: Event) -> Result<()> {
        state.validate(&event)?;
        if let Some(journal) = self.journal().as_mut() {
            journal.append(&event)?;
        }
        state.apply(event)
    }

    fn check_dim(&self, e: &Embedding) -> Result<()> {
        if e.dim() != self.config.dim {
            return Err(EmbeddingError::DimensionMismatch { expected: self.config.dim, actual: e.dim() }.into());
        }
        Ok(())
    }

    // ---- lemma store ----

    /// Inserts a verified skill unless its code is a near duplicate of an
    /// existing skill ([`dedup_similarity`] at or above the threshold).
    pub fn insert_skill(&self, candidate: NewSkill) -> Result<InsertOutcome> {
        self.check_dim(&candidate.embedding)?;
        if candidate.origin.is_root() != candidate.parent_id.is_none() {
            return Err(LibraryError::OriginParentMismatch {
                origin: candidate.origin,
                parent: candidate.parent_id,
            });
        }
        let _gate = self.insert_gate.lock().unwrap_or_else(PoisonError::into_inner);
        let threshold = self.config.dedup_threshold;
        let nearest = {
            let st = self.read();
            if let Some(parent) = candidate.parent_id {
                if st.skill(parent).is_none() {
                    return Err(LibraryError::UnknownSkill(parent));
                }
            }
            let mut best: Option<(f64, SkillId)> = None;
            for s in &st.skills {
                let m = dedup_matcher(&candidate.code, &s.code, self.config.dedup_autojunk);
                if let Some(r) = matcher_ratio_if_at_least(&m, threshold) {
                    if best.is_none_or(|(b, _)| r > b) {
                        best = Some((r, s.id));
                    }
                }
            }
            best
        };
        if let Some((max_similarity, nearest_id)) = nearest {
            return Ok(InsertOutcome::Rejected { max_similarity, nearest_id });
        }
        let mut st = self.write();
        let id = SkillId(st.next_skill);
        let record = SkillRecord {
            id,
            statement: candidate.statement,
            code: candidate.code,
            embedding: candidate.embedding,
            origin: candidate.origin,
            parent_id: candidate.parent_id,
            evolve_count: 0,
            created_round: candidate.created_round,
        };
        self.commit(&mut st, Event::SkillInserted { record })?;
        Ok(InsertOutcome::Accepted(id))
    }

    pub fn skill(&self, id: SkillId) -> Option<SkillRecord> {
        self.read().skill(id).cloned()
    }

    /// All skills in insertion order.
    pub fn skills(&self) -> Vec<SkillRecord> {
        self.read().skills.clone()
    }

    pub fn skill_count(&self) -> usize {
        self.read().skills.len()
    }

    /// A skill whose evolve count is minimal, uniformly among ties. Read-only.
    pub fn select_least_evolved<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SkillRecord> {
        let st = self.read();
        pick_min(&st.skills, |s| s.evolve_count, rng).cloned().ok_or(LibraryError::EmptyStore("lemma"))
    }

    /// Selects the least evolved skill and bumps its evolve count atomically.
    /// The returned record shows the count after the bump.
    pub fn claim_least_evolved<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SkillRecord> {
        let mut st = self.write();
        let id = pick_min(&st.skills, |s| s.evolve_count, rng)
            .map(|s| s.id)
            .ok_or(LibraryError::EmptyStore("lemma"))?;
        self.commit(&mut st, Event::SkillEvolved { id })?;
        Ok(st.skill(id).cloned().expect("just selected"))
    }

    // ---- request store ----

    pub fn insert_request(&self, request: NewRequest) -> Result<RequestId> {
        self.check_dim(&request.embedding)?;
        if request.statement.trim().is_empty() {
            return Err(LibraryError::EmptyStatement);
        }
        let mut st = self.write();
        let id = RequestId(st.next_request);
        let record = RequestRecord {
            id,
            thought: request.thought,
            statement: request.statement,
            embedding: request.embedding,
            solve_count: 0,
            source_problem: request.source_problem,
            status: RequestStatus::Open,
        };
        self.commit(&mut st, Event::RequestInserted { record })?;
        Ok(id)
    }

    pub fn request(&self, id: RequestId) -> Option<RequestRecord> {
        self.read().request(id).cloned()
    }

    pub fn requests(&self) -> Vec<RequestRecord> {
        self.read().requests.clone()
    }

    pub fn open_request_count(&self) -> usize {
        self.read().requests.iter().filter(|r| r.status == RequestStatus::Open).count()
    }

    /// An open request with minimal solve count, uniformly among ties. Read-only.
    pub fn select_least_solved_request<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RequestRecord> {
        let st = self.read();
        let open: Vec<&RequestRecord> = st.requests.iter().filter(|r| r.status == RequestStatus::Open).collect();
        pick_min(&open, |r| r.solve_count, rng).map(|r| (*r).clone()).ok_or(LibraryError::NoOpenRequests)
    }

    /// Selects the least solved open request and bumps its solve count atomically.
    pub fn claim_least_solved_request<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RequestRecord> {
        let mut st = self.write();
        let id = {
            let open: Vec<&RequestRecord> =
                st.requests.iter().filter(|r| r.status == RequestStatus::Open).collect();
            pick_min(&open, |r| r.solve_count, rng).map(|r| r.id).ok_or(LibraryError::NoOpenRequests)?
        };
        self.commit(&mut st, Event::RequestAttempted { id })?;
        Ok(st.request(id).cloned().expect("just selected"))
    }

    /// Marks a request solved. Returns `false` if it already was.
    pub fn mark_request_solved(&self, id: RequestId) -> Result<bool> {
        let mut st = self.write();
        let status = st.request(id).ok_or(LibraryError::UnknownRequest(id))?.status;
        if status == RequestStatus::Solved {
            return Ok(false);
        }
        self.commit(&mut st, Event::RequestSolved { id })?;
        Ok(true)
    }

    /// Increments the counter behind `target` by one and returns its new value.
    pub fn record_usage(&self, target: UsageTarget) -> Result<u64> {
        let mut st = self.write();
        match target {
            UsageTarget::Evolved(id) => {
                self.commit(&mut st, Event::SkillEvolved { id })?;
                Ok(st.skill(id).expect("validated").evolve_count)
            }
            UsageTarget::Solved(id) => {
                self.commit(&mut st, Event::RequestAttempted { id })?;
                Ok(st.request(id).expect("validated").solve_count)
            }
        }
    }

    // ---- problem store ----

    /// Id-keyed upsert. Re-ingesting a known problem refreshes its text and
    /// embedding but keeps its status and attempt count.
    pub fn upsert_problem(&self, mut problem: ProblemRecord) -> Result<UpsertOutcome> {
        self.check_dim(&problem.embedding)?;
        if problem.formal_statement.trim().is_empty() {
            return Err(LibraryError::EmptyFormalStatement(problem.id));
        }
        let mut st = self.write();
        let outcome = match st.problem(&problem.id) {
            None => UpsertOutcome::Inserted,
            Some(existing) => {
                problem.status = existing.status;
                problem.attempts_used = existing.attempts_used;
                if *existing == problem {
                    return Ok(UpsertOutcome::Unchanged);
                }
                UpsertOutcome::Updated
            }
        };
        self.commit(&mut st, Event::ProblemUpserted { record: problem })?;
        Ok(outcome)
    }

    pub fn problem(&self, id: &ProblemId) -> Option<ProblemRecord> {
        self.read().problem(id).cloned()
    }

    /// All problems in first-ingest order.
    pub fn problems(&self) -> Vec<ProblemRecord> {
        self.read().problems.clone()
    }

    pub fn update_problem(&self, id: &ProblemId, status: ProblemStatus, attempts_used: u32) -> Result<()> {
        let mut st = self.write();
        self.commit(&mut st, Event::ProblemUpdated { id: id.clone(), status, attempts_used })
    }

    // ---- retrieval ----

    pub fn query_skills(&self, query: &Embedding, k: usize) -> Result<Vec<QueryHit<SkillId>>> {
        self.check_dim(query)?;
        let st = self.read();
        top_k(st.skills.iter().map(|s| (s.id, &s.embedding)), query, k)
    }

    pub fn query_requests(
        &self,
        query: &Embedding,
        k: usize,
        filter: impl Fn(&RequestRecord) -> bool,
    ) -> Result<Vec<QueryHit<RequestId>>> {
        self.check_dim(query)?;
        let st = self.read();
        top_k(st.requests.iter().filter(|r| filter(r)).map(|r| (r.id, &r.embedding)), query, k)
    }

    pub fn query_problems(
        &self,
        query: &Embedding,
        k: usize,
        filter: impl Fn(&ProblemRecord) -> bool,
    ) -> Result<Vec<QueryHit<ProblemId>>> {
        self.check_dim(query)?;
        let st = self.read();
        top_k(st.problems.iter().filter(|p| filter(p)).map(|p| (p.id.clone(), &p.embedding)), query, k)
    }

    /// k-NN over any store, ids rendered as text.
    pub fn query_top_k(&self, store: StoreKind, query: &Embedding, k: usize) -> Result<Vec<QueryHit<String>>> {
        fn stringify<I: ToString>(hits: Vec<QueryHit<I>>) -> Vec<QueryHit<String>> {
            hits.into_iter()
                .map(|h| QueryHit { id: h.id.to_string(), similarity: h.similarity, rank: h.rank })
                .collect()
        }
        Ok(match store {
            StoreKind::Lemma => stringify(self.query_skills(query, k)?),
            StoreKind::Request => stringify(self.query_requests(query, k, |_| true)?),
            StoreKind::Problem => stringify(self.query_problems(query, k, |_| true)?),
        })
    }

    // ---- genealogy ----

    pub fn export_genealogy(&self) -> Result<Forest> {
        Forest::build(&self.read().skills)
    }

    pub fn origin_distribution(&self) -> OriginDistribution {
        OriginDistribution::from_skills(&self.read().skills)
    }

    /// Structural equality of the stored records (configuration excluded).
    pub fn same_contents(&self, other: &SkillLibrary) -> bool {
        let (a, b) = (self.read(), other.read());
        a.skills == b.skills && a.requests == b.requests && a.problems == b.problems
    }
}

fn pick_min<'a, T, R: Rng + ?Sized>(items: &'a [T], key: impl Fn(&T) -> u64, rng: &mut R) -> Option<&'a T> {
    let min = items.iter().map(&key).min()?;
    let ties: Vec<&T> = items.iter().filter(|t| key(t) == min).collect();
    Some(ties[rng.random_range(0..ties.len())])
}

/// Exact cosine k-NN. Ties keep insertion order.
fn top_k<'a, Id>(
    items: impl Iterator<Item = (Id, &'a Embedding)>,
    query: &Embedding,
    k: usize,
) -> Result<Vec<QueryHit<Id>>> {
    if k == 0 {
        return Err(LibraryError::InvalidK);
    }
    let mut scored: Vec<(usize, Id, f64)> = Vec::new();
    for (pos, (id, emb)) in items.enumerate() {
        scored.push((pos, id, query.cosine(emb)?));
    }
    let order = |x: &(usize, Id, f64), y: &(usize, Id, f64)| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (_, id, similarity))| QueryHit { id, similarity, rank: i + 1 })
        .collect())
}

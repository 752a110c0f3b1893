use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::evolver::{RejectReason, StepKind, StepOutcome, StepResult};
use crate::library::{Origin, OriginDistribution, ProblemId, ProblemStatus, SkillLibrary};
use crate::prover::{AttemptResult, AttemptStatus, SkillUsage};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OriginStats {
    pub total: usize,
    pub counts: BTreeMap<Origin, usize>,
    pub fractions: BTreeMap<Origin, f64>,
    pub prover: f64,
    pub request_solver: f64,
    pub directional: f64,
}

/// How solved problems used their retrieved skills. Each solved problem
/// counts once, under its strongest usage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageStats {
    pub solved: usize,
    pub direct_use: usize,
    pub imitation: usize,
    pub unused: usize,
    pub direct_use_fraction: f64,
    pub imitation_fraction: f64,
    pub unused_fraction: f64,
    /// Origins of the skills used (directly or by imitation) in valid
    /// attempts, one count per skill per problem.
    pub used_skill_origins: BTreeMap<Origin, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolverStats {
    pub steps: usize,
    pub transforms: usize,
    pub solves: usize,
    pub inserted: usize,
    pub duplicate: usize,
    pub unverified: usize,
    pub transport: usize,
    pub empty: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub problems: usize,
    pub solved: usize,
    pub exhausted: usize,
    pub pending: usize,
    /// Attempts that used budget.
    pub attempts: usize,
    pub errored_attempts: usize,
    /// Entry `r - 1` is the number of problems first solved in round `r`.
    pub per_round_solved: Vec<usize>,
    /// Entry `k - 1` is the number of distinct problems with a valid attempt
    /// at attempt index `k` or earlier.
    pub solve_curve: Vec<usize>,
    /// Entry `r` is the number of skills created in round `r` or earlier.
    pub skill_curve: Vec<usize>,
    pub origins: OriginStats,
    pub usage: UsageStats,
    pub evolver: EvolverStats,
}

fn frac(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 / total as f64
    }
}

impl RunStats {
    /// Tab-separated `attempt`/`solved` rows for plotting the solve curve.
    pub fn solve_curve_table(&self) -> String {
        let mut out = String::from("attempt\tsolved\n");
        for (i, n) in self.solve_curve.iter().enumerate() {
            out.push_str(&format!("{}\t{}\n", i + 1, n));
        }
        out
    }
}

pub fn compute_stats(attempts: &[AttemptResult], steps: &[StepResult], library: &SkillLibrary) -> RunStats {
    let mut stats = RunStats::default();

    for p in library.problems() {
        stats.problems += 1;
        match p.status {
            ProblemStatus::Solved => stats.solved += 1,
            ProblemStatus::Exhausted => stats.exhausted += 1,
            ProblemStatus::Pending => stats.pending += 1,
        }
    }

    // First valid attempt per problem, in log order.
    let mut first_valid: HashMap<&ProblemId, &AttemptResult> = HashMap::new();
    let mut order: Vec<&ProblemId> = Vec::new();
    let mut max_attempt = 0u32;
    let mut max_round = 0u64;
    for a in attempts {
        max_round = max_round.max(a.round);
        if a.status == AttemptStatus::Errored {
            stats.errored_attempts += 1;
            continue;
        }
        stats.attempts += 1;
        max_attempt = max_attempt.max(a.attempt);
        if a.valid && !first_valid.contains_key(&a.problem_id) {
            first_valid.insert(&a.problem_id, a);
            order.push(&a.problem_id);
        }
    }

    stats.solve_curve = vec![0; max_attempt as usize];
    stats.per_round_solved = vec![0; max_round as usize];
    for a in first_valid.values() {
        for n in stats.solve_curve.iter_mut().skip(a.attempt.saturating_sub(1) as usize) {
            *n += 1;
        }
        if a.round >= 1 {
            stats.per_round_solved[a.round as usize - 1] += 1;
        }
    }

    let skills = library.skills();
    let last_round = skills.iter().map(|s| s.created_round).max().unwrap_or(0).max(max_round);
    stats.skill_curve = vec![0; last_round as usize + 1];
    for s in &skills {
        for n in stats.skill_curve.iter_mut().skip(s.created_round as usize) {
            *n += 1;
        }
    }

    let dist = OriginDistribution::from_skills(&skills);
    stats.origins = OriginStats {
        total: dist.total,
        counts: Origin::ALL.iter().map(|o| (*o, dist.count(*o))).collect(),
        fractions: Origin::ALL.iter().map(|o| (*o, dist.fraction(*o))).collect(),
        prover: dist.prover_fraction(),
        request_solver: dist.request_solver_fraction(),
        directional: dist.directional_fraction(),
    };

    let origin_of: HashMap<_, _> = skills.iter().map(|s| (s.id, s.origin)).collect();
    let mut usage = UsageStats::default();
    for id in &order {
        let a = first_valid[id];
        usage.solved += 1;
        let has = |u: SkillUsage| a.usage_classification.iter().any(|e| e.usage == u);
        if has(SkillUsage::DirectUse) {
            usage.direct_use += 1;
        } else if has(SkillUsage::Imitation) {
            usage.imitation += 1;
        } else {
            usage.unused += 1;
        }
        for e in a.usage_classification.iter().filter(|e| e.usage != SkillUsage::Unused) {
            if let Some(origin) = origin_of.get(&e.skill_id) {
                *usage.used_skill_origins.entry(*origin).or_insert(0) += 1;
            }
        }
    }
    usage.direct_use_fraction = frac(usage.direct_use, usage.solved);
    usage.imitation_fraction = frac(usage.imitation, usage.solved);
    usage.unused_fraction = frac(usage.unused, usage.solved);
    stats.usage = usage;

    let mut ev = EvolverStats::default();
    for s in steps {
        ev.steps += 1;
        match s.kind {
            StepKind::Transform => ev.transforms += 1,
            StepKind::SolveRequest => ev.solves += 1,
        }
        match &s.result {
            StepOutcome::Inserted { .. } => ev.inserted += 1,
            StepOutcome::Rejected(RejectReason::Duplicate { .. }) => ev.duplicate += 1,
            StepOutcome::Rejected(RejectReason::Unverified { .. }) => ev.unverified += 1,
            StepOutcome::Rejected(RejectReason::Transport { .. }) => ev.transport += 1,
            StepOutcome::Rejected(RejectReason::Empty) => ev.empty += 1,
        }
    }
    stats.evolver = ev;
    stats
}

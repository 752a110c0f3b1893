use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use serde::Serialize;
use serde_json::json;
use skillforge::library::{SkillId, SkillLibrary, StoreKind};
use skillforge::orchestrator::{
    build_gateway, build_verifier, compute_stats, ingest_into_run_dir, read_logs, start_run, ConfigError, Mode,
    OrchestratorConfig, RunError, RunStats, SNAPSHOT_FILE,
};
use skillforge::prover::AttemptStatus;
use skillforge::theory::contains_cheat_keywords;
use skillforge::verify::{MockVerifier, Verifier, VerifyError};

use crate::{ConfigArgs, RunArgs, TreeFormat};

pub const FAILURE: u8 = 1;
pub const USAGE: u8 = 2;
pub const TRANSPORT: u8 = 3;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(USAGE, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Config(_) | RunError::NoRunDir => USAGE,
            RunError::Backend(_) => TRANSPORT,
            RunError::Library(_) | RunError::Io(_) | RunError::Checkpoint(_) => FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<ExitCode, Failure>;

pub struct Output {
    pub json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
        } else {
            print!("{}", text());
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<OrchestratorConfig, Failure> {
    let mut config = OrchestratorConfig::load(&args.config)?;
    if let Some(dir) = &args.run_dir {
        config.paths.run_dir = Some(dir.clone());
    }
    Ok(config)
}

fn run_dir(config: &OrchestratorConfig) -> Result<PathBuf, Failure> {
    config.paths.run_dir.clone().ok_or_else(|| RunError::NoRunDir.into())
}

fn load_snapshot(config: &OrchestratorConfig) -> Result<SkillLibrary, Failure> {
    let path = run_dir(config)?.join(SNAPSHOT_FILE);
    if !path.exists() {
        return Err(Failure::new(FAILURE, format!("no library snapshot at {}", path.display())));
    }
    SkillLibrary::load(&path).map_err(|e| Failure::new(FAILURE, format!("{}: {e}", path.display())))
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

pub fn run(out: &Output, args: RunArgs, mode: Option<Mode>) -> CmdResult {
    let mut config = load_config(&args.cfg)?;
    if let Some(m) = mode {
        config.llm.mode = m;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(t) = args.max_ticks {
        config.max_ticks = t;
    }
    config.validate()?;
    let budget = config.attempt_budget;
    let (mut orch, report) = start_run(config, args.fresh)?;
    match report {
        Some(r) => {
            eprintln!("ingested {} problems ({} new, {} updated)", r.count(), r.inserted, r.updated);
            for issue in &r.errors {
                eprintln!("  line {}: {}", issue.line, issue.message);
            }
        }
        None => eprintln!("resuming at tick {} (round {})", orch.state().tick, orch.state().round),
    }

    let stop = orch.stop_handle();
    if let Err(e) = ctrlc::set_handler(move || {
        eprintln!("stopping after the current tick");
        stop.store(true, Ordering::SeqCst);
    }) {
        log::warn!("ctrl-c handler not installed: {e}");
    }
    orch.on_attempt(move |a| {
        let verdict = match a.status {
            AttemptStatus::Valid => "valid".to_string(),
            AttemptStatus::Failed => "failed".to_string(),
            AttemptStatus::Errored => format!("errored: {}", a.error.as_deref().unwrap_or("?")),
        };
        eprintln!("round {} {} {} attempt {}/{} {}", a.round, a.worker, a.problem_id, a.attempt, budget, verdict);
    });

    let summary = orch.run()?;
    let skills = orch.context().library.skill_count();
    out.emit(&summary, || {
        let s = &summary.stats;
        format!(
            "{:?} after {} ticks, {} rounds: {}/{} solved, {} exhausted, {} skills\n",
            summary.end, summary.ticks, summary.rounds, s.solved, s.problems, s.exhausted, skills
        )
        .to_lowercase()
    });
    Ok(ExitCode::SUCCESS)
}

fn stats_text(s: &RunStats) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "problems {}: solved {}, exhausted {}, pending {}", s.problems, s.solved, s.exhausted, s.pending);
    let _ = writeln!(t, "attempts {} ({} errored, not counted)", s.attempts, s.errored_attempts);
    let o = &s.origins;
    let _ = writeln!(
        t,
        "skills {}: prover {}, request_solver {}, directional {}",
        o.total,
        pct(o.prover),
        pct(o.request_solver),
        pct(o.directional)
    );
    for (origin, n) in &o.counts {
        let _ = writeln!(t, "  {origin:<26} {n:>6} {:>7}", pct(o.fractions[origin]));
    }
    let u = &s.usage;
    let _ = writeln!(
        t,
        "usage over {} solved: direct {}, imitation {}, unused {}",
        u.solved,
        pct(u.direct_use_fraction),
        pct(u.imitation_fraction),
        pct(u.unused_fraction)
    );
    let e = &s.evolver;
    let _ = writeln!(
        t,
        "evolver {} steps ({} transform, {} solve): {} inserted, {} duplicate, {} unverified, {} transport, {} empty",
        e.steps, e.transforms, e.solves, e.inserted, e.duplicate, e.unverified, e.transport, e.empty
    );
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let _ = writeln!(t, "solved per round: {}", join(&s.per_round_solved));
    let _ = writeln!(t, "solve curve: {}", join(&s.solve_curve));
    let _ = writeln!(t, "skill curve: {}", join(&s.skill_curve));
    t
}

pub fn stats(out: &Output, args: ConfigArgs, table: bool) -> CmdResult {
    let config = load_config(&args)?;
    let lib = load_snapshot(&config)?;
    let (attempts, steps) = read_logs(&run_dir(&config)?)?;
    let s = compute_stats(&attempts, &steps, &lib);
    if table && !out.json {
        print!("{}", s.solve_curve_table());
    } else {
        out.emit(&s, || stats_text(&s));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn export_tree(out: &Output, args: ConfigArgs, format: TreeFormat) -> CmdResult {
    let config = load_config(&args)?;
    let lib = load_snapshot(&config)?;
    let forest = lib.export_genealogy().map_err(|e| Failure::new(FAILURE, e.to_string()))?;
    let value = json!({
        "nodes": forest.node_count(),
        "edges": forest.edges().iter().map(|(p, c)| [p.to_string(), c.to_string()]).collect::<Vec<_>>(),
        "trees": forest.trees,
    });
    out.emit(&value, || match format {
        TreeFormat::Tree => forest.to_text(),
        TreeFormat::Graph => forest.to_dot(),
    });
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Hit {
    rank: usize,
    id: String,
    similarity: f64,
    text: String,
}

fn describe(lib: &SkillLibrary, store: StoreKind, id: &str) -> String {
    let found = match store {
        StoreKind::Lemma => id.parse::<SkillId>().ok().and_then(|i| lib.skill(i)).map(|s| s.statement),
        StoreKind::Request => id.parse().ok().and_then(|i| lib.request(i)).map(|r| r.statement),
        StoreKind::Problem => lib.problem(&id.into()).map(|p| p.formal_statement),
    };
    found.unwrap_or_default()
}

pub fn query(out: &Output, args: ConfigArgs, store: StoreKind, text: &str, k: usize) -> CmdResult {
    if k == 0 {
        return Err(Failure::new(USAGE, "-k must be positive"));
    }
    let config = load_config(&args)?;
    let lib = load_snapshot(&config)?;
    let gateway = build_gateway(&config)?;
    let embedding = gateway.embed(text).map_err(|e| {
        let code = if e.is_transport() { TRANSPORT } else { FAILURE };
        Failure::new(code, format!("embedding the query: {e}"))
    })?;
    let hits = lib.query_top_k(store, &embedding, k).map_err(|e| Failure::new(FAILURE, e.to_string()))?;
    let hits: Vec<Hit> = hits
        .into_iter()
        .map(|h| Hit { text: describe(&lib, store, &h.id), rank: h.rank, id: h.id, similarity: h.similarity })
        .collect();
    out.emit(&hits, || {
        let mut t = String::new();
        for h in &hits {
            let first = h.text.lines().next().unwrap_or("");
            let _ = writeln!(t, "{:>3}  {:.6}  {:<12} {}", h.rank, h.similarity, h.id, first);
        }
        t
    });
    Ok(ExitCode::SUCCESS)
}

pub fn verify_file(out: &Output, path: &Path, config: Option<&Path>) -> CmdResult {
    let source = std::fs::read_to_string(path).map_err(|e| Failure::new(USAGE, format!("{}: {e}", path.display())))?;
    let verifier: std::sync::Arc<dyn Verifier> = match config {
        Some(c) => build_verifier(&OrchestratorConfig::load(c)?)?,
        None => std::sync::Arc::new(MockVerifier::default()),
    };
    let outcome = verifier.verify(&source).map_err(|e| match e {
        VerifyError::Transport(_) => Failure::new(TRANSPORT, e.to_string()),
        VerifyError::Config(_) => Failure::new(USAGE, e.to_string()),
    })?;
    let cheats = contains_cheat_keywords(&source);
    let value = json!({ "outcome": outcome, "cheat_keywords": cheats });
    out.emit(&value, || {
        let mut t = String::new();
        let _ = writeln!(t, "{}", if outcome.success { "verified" } else { "failed" });
        for f in &outcome.failures {
            match f.step_index {
                Some(s) => {
                    let _ = writeln!(t, "  block {} step {}: {}", f.block_index, s, f.message);
                }
                None => {
                    let _ = writeln!(t, "  block {}: {}", f.block_index, f.message);
                }
            }
        }
        for h in &outcome.hammer_proofs {
            let _ = writeln!(t, "  hammer at block {} step {}: {}", h.block_index, h.step_index, h.tactic);
        }
        t
    });
    if cheats {
        eprintln!("warning: the file uses sorry/oops, so it does not count as a valid proof");
    }
    Ok(if outcome.success { ExitCode::SUCCESS } else { ExitCode::from(FAILURE) })
}

pub fn ingest(out: &Output, args: ConfigArgs, file: &Path) -> CmdResult {
    if !file.is_file() {
        return Err(Failure::new(USAGE, format!("{}: no such file", file.display())));
    }
    let config = load_config(&args)?;
    let report = ingest_into_run_dir(&config, file)?;
    out.emit(&report, || {
        format!("{} new, {} updated, {} unchanged, {} rejected\n", report.inserted, report.updated, report.unchanged, report.errors.len())
    });
    for issue in &report.errors {
        eprintln!("line {}: {}", issue.line, issue.message);
    }
    Ok(if report.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(FAILURE) })
}

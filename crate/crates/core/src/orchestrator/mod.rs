//! The run controller.
//!
//! A run advances in ticks. Each tick has three phases:
//!
//! 1. claim (serial): every prover worker pops the next problem of the
//!    current round, every evolver worker claims a skill or request;
//! 2. plan (parallel): one thread per busy worker talks to the model and the
//!    checker, reading the library but never writing it;
//! 3. commit (serial, prover workers first, then evolver workers, each in
//!    worker order): inserts, problem updates and log lines.
//!
//! A round's queue holds every pending problem once, in ingest order. A new
//! round starts at the first tick that finds the queue empty. Tick
//! boundaries are the quiesce points at which checkpoints are taken, so a
//! resumed run continues exactly where the checkpoint left it.

mod backend;
mod config;
mod ingest;
mod stats;

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{build_context, build_gateway, build_verifier};
pub use config::{
    ChatSource, ConfigError, EmbedderKind, EvolverOptions, LlmConfig, Mode, OrchestratorConfig, PathsConfig,
    ProverOptions, VerifierConfig, VerifierKind,
};
pub use ingest::{ingest_problems, ingest_reader, IngestIssue, IngestReport};
pub use stats::{compute_stats, EvolverStats, OriginStats, RunStats, UsageStats};

use crate::context::Context;
use crate::evolver::{Claim, Evolver, EvolverConfig, StepResult};
use crate::library::{LibraryError, ProblemId, ProblemStatus};
use crate::prover::{AttemptResult, AttemptStatus, Prover, ProverConfig};
use crate::worker::Worker;

type ProgressFn = Box<dyn FnMut(&AttemptResult) + Send>;

pub const ATTEMPTS_LOG: &str = "attempts.ndjson";
pub const STEPS_LOG: &str = "evolver.ndjson";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const STATE_FILE: &str = "state.json";
pub const SNAPSHOT_FILE: &str = "library.snapshot";

const CHECKPOINT_FORMAT: &str = "skillforge-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Evolver streams start here so that changing the number of prover workers
/// does not shift them.
const EVOLVER_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint refused: {0}")]
    Checkpoint(String),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("no run directory configured")]
    NoRunDir,
}

/// Everything besides the library that a checkpoint must capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub tick: u64,
    pub round: u64,
    pub queue: VecDeque<ProblemId>,
    pub provers: Vec<Worker>,
    pub evolvers: Vec<Worker>,
    pub attempt_lines: u64,
    pub step_lines: u64,
    pub error_ticks: u32,
}

impl RunState {
    pub fn new(config: &OrchestratorConfig) -> Self {
        Self {
            tick: 0,
            round: 0,
            queue: VecDeque::new(),
            provers: (0..config.prover_workers).map(|i| Worker::new(format!("p{i}"), config.seed, i as u64)).collect(),
            evolvers: (0..config.evolver_workers)
                .map(|i| Worker::new(format!("e{i}"), config.seed, EVOLVER_STREAM_BASE + i as u64))
                .collect(),
            attempt_lines: 0,
            step_lines: 0,
            error_ticks: 0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    library_sha256: String,
    state: RunState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// No pending problems remain.
    Completed,
    Stopped,
    TickLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub end: EndReason,
    pub ticks: u64,
    pub rounds: u64,
    pub stats: RunStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickReport {
    pub tick: u64,
    pub round: u64,
    pub attempts: usize,
    pub errored_attempts: usize,
    pub steps: usize,
    pub idle_evolvers: usize,
}

enum Logs {
    Memory { attempts: Vec<AttemptResult>, steps: Vec<StepResult> },
    Files { dir: PathBuf, attempts: BufWriter<File>, steps: BufWriter<File> },
}

fn line_of<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("log records serialize");
    line.push(b'\n');
    line
}

impl Logs {
    fn open(dir: &Path, truncate: bool) -> std::io::Result<Logs> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> std::io::Result<BufWriter<File>> {
            let path = dir.join(name);
            if truncate {
                File::create(&path)?;
            }
            Ok(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?))
        };
        Ok(Logs::Files { dir: dir.to_path_buf(), attempts: open(ATTEMPTS_LOG)?, steps: open(STEPS_LOG)? })
    }

    fn attempt(&mut self, a: &AttemptResult) -> std::io::Result<()> {
        match self {
            Logs::Memory { attempts, .. } => attempts.push(a.clone()),
            Logs::Files { attempts, .. } => attempts.write_all(&line_of(a))?,
        }
        Ok(())
    }

    fn step(&mut self, s: &StepResult) -> std::io::Result<()> {
        match self {
            Logs::Memory { steps, .. } => steps.push(s.clone()),
            Logs::Files { steps, .. } => steps.write_all(&line_of(s))?,
        }
        Ok(())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if let Logs::Files { attempts, steps, .. } = self {
            attempts.flush()?;
            steps.flush()?;
        }
        Ok(())
    }

    fn read(&mut self) -> Result<(Vec<AttemptResult>, Vec<StepResult>), RunError> {
        match self {
            Logs::Memory { attempts, steps } => Ok((attempts.clone(), steps.clone())),
            Logs::Files { dir, .. } => {
                let dir = dir.clone();
                self.flush()?;
                read_logs(&dir)
            }
        }
    }
}

fn read_ndjson<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| {
            RunError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), i + 1),
            ))
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Reads the attempt and evolver logs of a run directory.
pub fn read_logs(run_dir: &Path) -> Result<(Vec<AttemptResult>, Vec<StepResult>), RunError> {
    Ok((read_ndjson(&run_dir.join(ATTEMPTS_LOG))?, read_ndjson(&run_dir.join(STEPS_LOG))?))
}

/// Byte length of the first `lines` lines of a log, or an error when the
/// log is shorter than that.
fn prefix_len(path: &Path, lines: u64) -> Result<u64, RunError> {
    if lines == 0 {
        return Ok(0);
    }
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| RunError::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut seen = 0u64;
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'\n' {
            seen += 1;
            if seen == lines {
                return Ok(i as u64 + 1);
            }
        }
    }
    Err(RunError::Checkpoint(format!("{} has {seen} complete lines, the checkpoint expects {lines}", path.display())))
}

fn truncate_to(path: &Path, len: u64) -> std::io::Result<()> {
    if len == 0 && !path.exists() {
        return Ok(());
    }
    OpenOptions::new().write(true).open(path)?.set_len(len)
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    dir.with_file_name(name)
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    prover_config: ProverConfig,
    evolver_config: EvolverConfig,
    ctx: Context,
    state: RunState,
    logs: Logs,
    run_dir: Option<PathBuf>,
    stop: Arc<AtomicBool>,
    progress: Option<ProgressFn>,
    last_checkpoint: Instant,
}

impl Orchestrator {
    /// A run that keeps its logs in memory and cannot checkpoint.
    pub fn new(config: OrchestratorConfig, ctx: Context) -> Result<Self, RunError> {
        config.validate()?;
        Ok(Self {
            prover_config: config.prover_config(),
            evolver_config: config.evolver_config(),
            state: RunState::new(&config),
            config,
            ctx,
            logs: Logs::Memory { attempts: Vec::new(), steps: Vec::new() },
            run_dir: None,
            stop: Arc::new(AtomicBool::new(false)),
            progress: None,
            last_checkpoint: Instant::now(),
        })
    }

    /// A fresh run writing logs and checkpoints under `run_dir`. Existing
    /// logs there are truncated.
    pub fn create(config: OrchestratorConfig, ctx: Context, run_dir: impl AsRef<Path>) -> Result<Self, RunError> {
        let run_dir = run_dir.as_ref().to_path_buf();
        let mut o = Self::new(config, ctx)?;
        o.logs = Logs::open(&run_dir, true)?;
        o.run_dir = Some(run_dir);
        Ok(o)
    }

    /// Continues the run checkpointed in `run_dir`: restores the library into
    /// `ctx`, the scheduler state and worker streams, and cuts the logs back
    /// to the checkpoint. On error nothing has been modified.
    pub fn resume(config: OrchestratorConfig, ctx: Context, run_dir: impl AsRef<Path>) -> Result<Self, RunError> {
        let run_dir = run_dir.as_ref().to_path_buf();
        let mut o = Self::new(config, ctx)?;
        o.restore_inner(&checkpoint_dir(&run_dir), Some(run_dir.clone()))?;
        o.run_dir = Some(run_dir);
        Ok(o)
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn run_dir(&self) -> Option<&Path> {
        self.run_dir.as_deref()
    }

    /// Setting the flag ends the run at the next tick boundary.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Called after every committed attempt.
    pub fn on_attempt(&mut self, f: impl FnMut(&AttemptResult) + Send + 'static) {
        self.progress = Some(Box::new(f));
    }

    /// Runs ticks until no pending problems remain, the stop flag is set, or
    /// `max_ticks` is reached. A checkpoint is written at the end when the
    /// run has a directory.
    pub fn run(&mut self) -> Result<RunSummary, RunError> {
        self.last_checkpoint = Instant::now();
        let end = loop {
            if self.stop.load(Ordering::SeqCst) {
                break EndReason::Stopped;
            }
            if self.config.max_ticks > 0 && self.state.tick >= self.config.max_ticks {
                break EndReason::TickLimit;
            }
            let Some(report) = self.tick()? else { break EndReason::Completed };
            if self.state.error_ticks >= self.config.max_consecutive_error_ticks {
                if self.run_dir.is_some() {
                    self.checkpoint()?;
                }
                return Err(RunError::Backend(format!(
                    "every prover attempt errored for {} consecutive ticks (last at tick {})",
                    self.state.error_ticks, report.tick
                )));
            }
            if self.run_dir.is_some() && self.checkpoint_due() {
                self.checkpoint()?;
            }
        };
        if self.run_dir.is_some() {
            self.checkpoint()?;
        }
        Ok(RunSummary { end, ticks: self.state.tick, rounds: self.state.round, stats: self.stats()? })
    }

    fn checkpoint_due(&self) -> bool {
        let every = self.config.checkpoint_every_ticks;
        let secs = self.config.checkpoint_interval_secs;
        (every > 0 && self.state.tick % every == 0)
            || (secs > 0.0 && self.last_checkpoint.elapsed().as_secs_f64() >= secs)
    }

    /// One claim/plan/commit cycle. `None` when no pending problem is left.
    pub fn tick(&mut self) -> Result<Option<TickReport>, RunError> {
        let lib = self.ctx.library.clone();
        if self.state.queue.is_empty() {
            let pending: VecDeque<ProblemId> =
                lib.problems().into_iter().filter(|p| p.status == ProblemStatus::Pending).map(|p| p.id).collect();
            if pending.is_empty() {
                return Ok(None);
            }
            self.state.round += 1;
            self.state.queue = pending;
            log::info!("round {} starts with {} problems", self.state.round, self.state.queue.len());
        }
        self.state.tick += 1;
        let round = self.state.round;
        let mut report = TickReport { tick: self.state.tick, round, ..TickReport::default() };

        // Claim.
        let mut jobs = Vec::with_capacity(self.state.provers.len());
        for _ in 0..self.state.provers.len() {
            let job = loop {
                match self.state.queue.pop_front() {
                    None => break None,
                    Some(id) => match lib.problem(&id) {
                        Some(p) if p.status == ProblemStatus::Pending => break Some(p),
                        _ => continue,
                    },
                }
            };
            jobs.push(job);
        }
        let prover = Prover::new(&self.ctx, &self.prover_config);
        let evolver = Evolver::new(&self.ctx, &self.evolver_config);
        let claims: Vec<Claim> = self.state.evolvers.iter_mut().map(|w| evolver.claim(w)).collect();

        // Plan.
        let (attempt_plans, step_plans) = std::thread::scope(|s| {
            let prover = &prover;
            let evolver = &evolver;
            let ph: Vec<_> = self
                .state
                .provers
                .iter_mut()
                .zip(&jobs)
                .filter_map(|(w, job)| job.as_ref().map(|p| s.spawn(move || prover.plan(w, p, round))))
                .collect();
            let eh: Vec<_> = self
                .state
                .evolvers
                .iter_mut()
                .zip(claims)
                .filter_map(|(w, c)| match c {
                    Claim::Empty(_) => None,
                    c => Some(s.spawn(move || evolver.plan(w, c, round))),
                })
                .collect();
            let a: Vec<_> = ph.into_iter().map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e))).collect();
            let e: Vec<_> = eh.into_iter().map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e))).collect();
            (a, e)
        });
        report.idle_evolvers = self.state.evolvers.len() - step_plans.len();

        // Commit.
        for plan in attempt_plans {
            let result = prover.commit(plan, self.config.attempt_budget)?;
            report.attempts += 1;
            if result.status == AttemptStatus::Errored {
                report.errored_attempts += 1;
                log::warn!("{} on {}: {}", result.worker, result.problem_id, result.error.as_deref().unwrap_or("error"));
            }
            self.logs.attempt(&result)?;
            self.state.attempt_lines += 1;
            if let Some(cb) = self.progress.as_mut() {
                cb(&result);
            }
        }
        for plan in step_plans {
            let result = evolver.commit(plan)?;
            report.steps += 1;
            self.logs.step(&result)?;
            self.state.step_lines += 1;
        }
        self.logs.flush()?;

        if report.attempts > 0 {
            if report.errored_attempts == report.attempts {
                self.state.error_ticks += 1;
            } else {
                self.state.error_ticks = 0;
            }
        }
        Ok(Some(report))
    }

    /// Statistics over this run's logs and the current library.
    pub fn stats(&mut self) -> Result<RunStats, RunError> {
        let (attempts, steps) = self.logs.read()?;
        Ok(compute_stats(&attempts, &steps, &self.ctx.library))
    }

    /// The run's log records so far.
    pub fn logs(&mut self) -> Result<(Vec<AttemptResult>, Vec<StepResult>), RunError> {
        self.logs.read()
    }

    /// Writes `<run_dir>/checkpoint` and refreshes `<run_dir>/library.snapshot`.
    pub fn checkpoint(&mut self) -> Result<PathBuf, RunError> {
        let run_dir = self.run_dir.clone().ok_or(RunError::NoRunDir)?;
        let dir = checkpoint_dir(&run_dir);
        self.checkpoint_to(&dir)?;
        self.ctx.library.snapshot(run_dir.join(SNAPSHOT_FILE))?;
        self.last_checkpoint = Instant::now();
        Ok(dir)
    }

    /// Writes a checkpoint directory atomically: the new contents are built
    /// beside it and swapped in by rename.
    pub fn checkpoint_to(&mut self, dir: &Path) -> Result<(), RunError> {
        self.logs.flush()?;
        let tmp = sibling(dir, ".tmp");
        let old = sibling(dir, ".old");
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        let snap = tmp.join(SNAPSHOT_FILE);
        self.ctx.library.snapshot(&snap)?;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            library_sha256: sha256_file(&snap)?,
            state: self.state.clone(),
        };
        {
            let mut w = BufWriter::new(File::create(tmp.join(STATE_FILE))?);
            serde_json::to_writer_pretty(&mut w, &file).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        if dir.exists() {
            fs::rename(dir, &old)?;
        }
        fs::rename(&tmp, dir)?;
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        Ok(())
    }

    /// Verifies a checkpoint directory and returns its state and snapshot.
    fn read_checkpoint(&self, dir: &Path) -> Result<(RunState, PathBuf), RunError> {
        // A crash between the two renames leaves only the previous checkpoint.
        let dir = if !dir.exists() && sibling(dir, ".old").exists() { sibling(dir, ".old") } else { dir.to_path_buf() };
        let refuse = |m: String| RunError::Checkpoint(format!("{}: {m}", dir.display()));
        let text = fs::read_to_string(dir.join(STATE_FILE)).map_err(|e| refuse(format!("{STATE_FILE}: {e}")))?;
        let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| refuse(format!("{STATE_FILE}: {e}")))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(refuse(format!("unsupported format {} v{}", file.format, file.version)));
        }
        let (p, e) = (file.state.provers.len(), file.state.evolvers.len());
        if p != self.config.prover_workers || e != self.config.evolver_workers {
            return Err(refuse(format!(
                "checkpoint has {p} prover and {e} evolver workers, config asks for {} and {}",
                self.config.prover_workers, self.config.evolver_workers
            )));
        }
        let snap = dir.join(SNAPSHOT_FILE);
        let digest = sha256_file(&snap).map_err(|e| refuse(format!("{SNAPSHOT_FILE}: {e}")))?;
        if digest != file.library_sha256 {
            return Err(refuse(format!("{SNAPSHOT_FILE} does not match its recorded digest")));
        }
        Ok((file.state, snap))
    }

    /// Restores a checkpoint directory written by [`checkpoint_to`](Self::checkpoint_to):
    /// library contents, scheduler state and worker streams. Logs are cut
    /// back to the checkpoint. Nothing is modified when any part fails to
    /// verify.
    pub fn restore_from(&mut self, dir: &Path) -> Result<(), RunError> {
        let log_dir = match &self.logs {
            Logs::Files { dir, .. } => Some(dir.clone()),
            Logs::Memory { .. } => None,
        };
        self.restore_inner(dir, log_dir)
    }

    fn restore_inner(&mut self, dir: &Path, log_dir: Option<PathBuf>) -> Result<(), RunError> {
        let (state, snap) = self.read_checkpoint(dir)?;
        let cuts = match &log_dir {
            Some(run_dir) => {
                self.logs.flush()?;
                let a = prefix_len(&run_dir.join(ATTEMPTS_LOG), state.attempt_lines)?;
                let s = prefix_len(&run_dir.join(STEPS_LOG), state.step_lines)?;
                Some((a, s))
            }
            None => None,
        };
        self.ctx.library.restore(&snap).map_err(|e| RunError::Checkpoint(format!("{}: {e}", snap.display())))?;
        match (log_dir, cuts) {
            (Some(run_dir), Some((a, s))) => {
                truncate_to(&run_dir.join(ATTEMPTS_LOG), a)?;
                truncate_to(&run_dir.join(STEPS_LOG), s)?;
                self.logs = Logs::open(&run_dir, false)?;
            }
            _ => {
                if let Logs::Memory { attempts, steps } = &mut self.logs {
                    attempts.truncate(state.attempt_lines as usize);
                    steps.truncate(state.step_lines as usize);
                }
            }
        }
        self.state = state;
        Ok(())
    }
}

fn require_run_dir(config: &OrchestratorConfig) -> Result<PathBuf, RunError> {
    config.paths.run_dir.clone().ok_or(RunError::NoRunDir)
}

/// Loads `<run_dir>/library.snapshot` when present, else an empty library,
/// into a context built from `config`.
fn context_with_snapshot(config: &OrchestratorConfig, run_dir: &Path, use_snapshot: bool) -> Result<Context, RunError> {
    let ctx = build_context(config)?;
    let snap = run_dir.join(SNAPSHOT_FILE);
    if use_snapshot && snap.exists() {
        ctx.library.restore(&snap)?;
    }
    Ok(ctx)
}

/// Opens the run configured by `config`. An existing checkpoint in the run
/// directory is resumed unless `fresh` is set. A new run starts from the
/// problems already in `<run_dir>/library.snapshot` (unless `fresh`) plus
/// those in `paths.problems`.
pub fn start_run(config: OrchestratorConfig, fresh: bool) -> Result<(Orchestrator, Option<IngestReport>), RunError> {
    let run_dir = require_run_dir(&config)?;
    if !fresh && has_checkpoint(&run_dir) {
        let ctx = build_context(&config)?;
        return Ok((Orchestrator::resume(config, ctx, run_dir)?, None));
    }
    let ctx = context_with_snapshot(&config, &run_dir, !fresh)?;
    let report = match &config.paths.problems {
        Some(path) => Some(ingest_problems(&ctx.library, &ctx.gateway, path)?),
        None => None,
    };
    if ctx.library.problems().is_empty() {
        return Err(ConfigError::Invalid("no problems to run (set paths.problems or ingest first)".into()).into());
    }
    if fresh {
        for dir in [checkpoint_dir(&run_dir), sibling(&checkpoint_dir(&run_dir), ".old")] {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
        }
    }
    Ok((Orchestrator::create(config, ctx, run_dir)?, report))
}

/// Ingests a problem file into `<run_dir>/library.snapshot`.
pub fn ingest_into_run_dir(config: &OrchestratorConfig, path: &Path) -> Result<IngestReport, RunError> {
    let run_dir = require_run_dir(config)?;
    fs::create_dir_all(&run_dir)?;
    let ctx = context_with_snapshot(config, &run_dir, true)?;
    let report = ingest_problems(&ctx.library, &ctx.gateway, path)?;
    ctx.library.snapshot(run_dir.join(SNAPSHOT_FILE))?;
    Ok(report)
}

pub fn checkpoint_dir(run_dir: &Path) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR)
}

/// True when `run_dir` holds a checkpoint to resume from.
pub fn has_checkpoint(run_dir: &Path) -> bool {
    let dir = checkpoint_dir(run_dir);
    dir.join(STATE_FILE).exists() || sibling(&dir, ".old").join(STATE_FILE).exists()
}

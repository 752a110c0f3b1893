//! Client for a PISA-style checking server speaking newline-delimited JSON
//! over TCP.
//!
//! Request:  `{"action": "init" | "check", "theory_text": "...", "timeout": 360.0}`
//! Response: `{"ok": bool, "failures": [{"block": 0, "step": 1, "message": "..."}],
//!             "message": "...", "hammer_proofs": [{"block": 0, "step": 1, "tactic": "..."}]}`
//!
//! Each connection is one session with at most one request in flight. A
//! broken session is dropped and reconnected on next use.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{HammerProof, StepFailure, Verifier, VerifierOutcome, VerifyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PisaConfig {
    pub address: String,
    pub sessions: usize,
    pub connect_timeout_secs: f64,
    pub check_timeout_secs: f64,
}

impl Default for PisaConfig {
    fn default() -> Self {
        Self { address: "127.0.0.1:8000".into(), sessions: 4, connect_timeout_secs: 10.0, check_timeout_secs: 360.0 }
    }
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    action: &'a str,
    #[serde(skip_serializing_if = "str::is_empty")]
    theory_text: &'a str,
    timeout: f64,
}

#[derive(Debug, Deserialize)]
struct WireFailure {
    block: usize,
    #[serde(default)]
    step: Option<usize>,
    #[serde(default)]
    message: String,
}

#[derive(Debug, Deserialize)]
struct WireHammer {
    block: usize,
    step: usize,
    tactic: String,
}

#[derive(Debug, Deserialize)]
struct Response {
    ok: bool,
    #[serde(default)]
    failures: Vec<WireFailure>,
    #[serde(default)]
    message: String,
    #[serde(default)]
    hammer_proofs: Vec<WireHammer>,
}

struct Session {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Session {
    fn roundtrip(&mut self, req: &Request) -> Result<Response, VerifyError> {
        let mut line = serde_json::to_vec(req).map_err(|e| VerifyError::Transport(e.to_string()))?;
        line.push(b'\n');
        self.writer.write_all(&line).map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;
        let mut buf = String::new();
        let n = self.reader.read_line(&mut buf).map_err(io_err)?;
        if n == 0 {
            return Err(VerifyError::Transport("connection closed by checker".into()));
        }
        serde_json::from_str(&buf).map_err(|e| VerifyError::Transport(format!("malformed checker reply: {e}")))
    }
}

fn io_err(e: std::io::Error) -> VerifyError {
    VerifyError::Transport(e.to_string())
}

pub struct PisaVerifier {
    config: PisaConfig,
    idle: Mutex<(Vec<Session>, usize)>,
    freed: Condvar,
}

impl PisaVerifier {
    pub fn new(config: PisaConfig) -> Result<Self, VerifyError> {
        if config.sessions == 0 {
            return Err(VerifyError::Config("session pool must have at least one session".into()));
        }
        Ok(Self { config, idle: Mutex::new((Vec::new(), 0)), freed: Condvar::new() })
    }

    pub fn config(&self) -> &PisaConfig {
        &self.config
    }

    fn connect(&self) -> Result<Session, VerifyError> {
        let addrs: Vec<_> = self
            .config
            .address
            .to_socket_addrs()
            .map_err(|e| VerifyError::Transport(format!("{}: {e}", self.config.address)))?
            .collect();
        let timeout = Duration::from_secs_f64(self.config.connect_timeout_secs.max(0.001));
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    stream
                        .set_read_timeout(Some(Duration::from_secs_f64(self.config.check_timeout_secs.max(0.001) + 5.0)))
                        .map_err(io_err)?;
                    let writer = stream.try_clone().map_err(io_err)?;
                    let mut s = Session { reader: BufReader::new(stream), writer };
                    let r = s.roundtrip(&Request { action: "init", theory_text: "", timeout: self.config.check_timeout_secs })?;
                    if !r.ok {
                        return Err(VerifyError::Transport(format!("checker refused init: {}", r.message)));
                    }
                    return Ok(s);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(VerifyError::Transport(match last {
            Some(e) => format!("{}: {e}", self.config.address),
            None => format!("{}: no address", self.config.address),
        }))
    }

    /// Takes an idle session or opens a new one if the pool has room.
    fn acquire(&self) -> Result<Session, VerifyError> {
        let mut guard = self.idle.lock().expect("pool lock");
        loop {
            if let Some(s) = guard.0.pop() {
                return Ok(s);
            }
            if guard.1 < self.config.sessions {
                guard.1 += 1;
                drop(guard);
                return self.connect().inspect_err(|_| self.discard());
            }
            guard = self.freed.wait(guard).expect("pool lock");
        }
    }

    fn release(&self, s: Session) {
        self.idle.lock().expect("pool lock").0.push(s);
        self.freed.notify_one();
    }

    fn discard(&self) {
        self.idle.lock().expect("pool lock").1 -= 1;
        self.freed.notify_one();
    }
}

impl Verifier for PisaVerifier {
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError> {
        let started = Instant::now();
        let mut session = self.acquire()?;
        let req = Request { action: "check", theory_text: source, timeout: self.config.check_timeout_secs };
        let resp = match session.roundtrip(&req) {
            Ok(r) => {
                self.release(session);
                r
            }
            Err(e) => {
                self.discard();
                return Err(e);
            }
        };
        let mut failures: Vec<StepFailure> = resp
            .failures
            .into_iter()
            .map(|f| StepFailure { block_index: f.block, step_index: f.step, message: f.message })
            .collect();
        if !resp.ok && failures.is_empty() {
            failures.push(StepFailure { block_index: 0, step_index: None, message: resp.message });
        }
        Ok(VerifierOutcome {
            success: resp.ok && failures.is_empty(),
            failures,
            elapsed: started.elapsed(),
            repaired_source: None,
            hammer_proofs: resp
                .hammer_proofs
                .into_iter()
                .map(|h| HammerProof { block_index: h.block, step_index: h.step, tactic: h.tactic })
                .collect(),
        })
    }
}

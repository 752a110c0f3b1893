//! Library files.
//!
//! A snapshot is newline-delimited JSON: one header line, one line per record,
//! and a trailer carrying the record count. A file without its trailer is
//! treated as truncated. The journal has the same header followed by one
//! [`Event`] per line; a torn final line (no newline) is ignored on replay.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Event, LibraryConfig, LibraryError, ProblemRecord, RequestRecord, Result, SkillLibrary, SkillRecord, State,
};

pub const LIBRARY_FORMAT: &str = "skillforge-library";
pub const LIBRARY_FORMAT_VERSION: u32 = 1;
const JOURNAL_FORMAT: &str = "skillforge-journal";

pub const SNAPSHOT_FILE: &str = "library.snapshot";
pub const JOURNAL_FILE: &str = "library.journal";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    dedup_threshold: f64,
    #[serde(default = "yes")]
    dedup_autojunk: bool,
    next_skill_id: u64,
    next_request_id: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Skill(SkillRecord),
    Request(RequestRecord),
    Problem(ProblemRecord),
    End { records: usize },
}

fn corrupt(path: &Path, line: usize, what: impl std::fmt::Display) -> LibraryError {
    LibraryError::Corrupt(format!("{}:{}: {}", path.display(), line, what))
}

fn check_header(path: &Path, h: &Header, format: &str) -> Result<()> {
    if h.format != format {
        return Err(corrupt(path, 1, format!("expected format `{format}`, found `{}`", h.format)));
    }
    if h.version != LIBRARY_FORMAT_VERSION {
        return Err(LibraryError::Version { found: h.version, expected: LIBRARY_FORMAT_VERSION });
    }
    Ok(())
}

impl SkillLibrary {
    /// Writes a full snapshot atomically (temp file + rename).
    pub fn snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let st = self.read();
        let tmp = tmp_path(path);
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            write_snapshot(&mut w, self.config(), &st)?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads a snapshot into a new library. Nothing is modified on error.
    pub fn load(path: impl AsRef<Path>) -> Result<SkillLibrary> {
        let path = path.as_ref();
        let (config, state) = read_snapshot(path)?;
        Ok(SkillLibrary::from_state(config, state))
    }

    /// Replaces this library's contents with a snapshot, leaving them intact
    /// if the file cannot be read.
    pub fn restore(&self, path: impl AsRef<Path>) -> Result<()> {
        let (config, state) = read_snapshot(path.as_ref())?;
        if config.dim != self.config().dim {
            return Err(LibraryError::Corrupt(format!(
                "snapshot dimension {} does not match library dimension {}",
                config.dim,
                self.config().dim
            )));
        }
        *self.write() = state;
        Ok(())
    }

    /// Opens (or creates) a journaled library in `dir`: loads the snapshot if
    /// present, replays the journal, and keeps appending every mutation.
    pub fn open(dir: impl AsRef<Path>, config: LibraryConfig) -> Result<SkillLibrary> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let snap = dir.join(SNAPSHOT_FILE);
        let lib = if snap.exists() { SkillLibrary::load(&snap)? } else { SkillLibrary::new(config) };
        let journal_path = dir.join(JOURNAL_FILE);
        if journal_path.exists() {
            let events = read_journal(&journal_path)?;
            let mut st = lib.write();
            for (i, e) in events.into_iter().enumerate() {
                st.apply(e).map_err(|err| corrupt(&journal_path, i + 2, err))?;
            }
        }
        let journal = Journal::open(&journal_path, lib.config())?;
        *lib.journal() = Some(journal);
        Ok(lib)
    }

    /// Writes a fresh snapshot into the journaled library's directory and
    /// truncates the journal.
    pub fn compact(&self) -> Result<()> {
        let st = self.read();
        let mut guard = self.journal();
        let journal = guard
            .as_mut()
            .ok_or_else(|| LibraryError::Corrupt("library has no journal attached".into()))?;
        let dir = journal.path.parent().map(Path::to_path_buf).unwrap_or_default();
        let snap = dir.join(SNAPSHOT_FILE);
        let tmp = tmp_path(&snap);
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            write_snapshot(&mut w, self.config(), &st)?;
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        fs::rename(&tmp, &snap)?;
        journal.reset(self.config())?;
        Ok(())
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

fn yes() -> bool {
    true
}

fn header(config: LibraryConfig, format: &str, st: &State) -> Header {
    Header {
        format: format.to_string(),
        version: LIBRARY_FORMAT_VERSION,
        dim: config.dim,
        dedup_threshold: config.dedup_threshold,
        dedup_autojunk: config.dedup_autojunk,
        next_skill_id: st.next_skill,
        next_request_id: st.next_request,
    }
}

fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_snapshot<W: Write>(w: &mut W, config: LibraryConfig, st: &State) -> Result<()> {
    write_json_line(w, &header(config, LIBRARY_FORMAT, st))?;
    let mut n = 0;
    for s in &st.skills {
        write_json_line(w, &Line::Skill(s.clone()))?;
        n += 1;
    }
    for r in &st.requests {
        write_json_line(w, &Line::Request(r.clone()))?;
        n += 1;
    }
    for p in &st.problems {
        write_json_line(w, &Line::Problem(p.clone()))?;
        n += 1;
    }
    write_json_line(w, &Line::End { records: n })
}

fn read_snapshot(path: &Path) -> Result<(LibraryConfig, State)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| corrupt(path, 1, "empty file"))??;
    let h: Header = serde_json::from_str(&first).map_err(|e| corrupt(path, 1, e))?;
    check_header(path, &h, LIBRARY_FORMAT)?;
    let (mut skills, mut requests, mut problems) = (Vec::new(), Vec::new(), Vec::new());
    let mut trailer = None;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if trailer.is_some() {
            if line.trim().is_empty() {
                continue;
            }
            return Err(corrupt(path, lineno, "data after trailer"));
        }
        match serde_json::from_str::<Line>(&line).map_err(|e| corrupt(path, lineno, e))? {
            Line::Skill(s) => skills.push(s),
            Line::Request(r) => requests.push(r),
            Line::Problem(p) => problems.push(p),
            Line::End { records } => trailer = Some(records),
        }
    }
    let n = skills.len() + requests.len() + problems.len();
    match trailer {
        None => return Err(corrupt(path, n + 2, "missing trailer (truncated file?)")),
        Some(expected) if expected != n => {
            return Err(corrupt(path, n + 2, format!("trailer says {expected} records, found {n}")))
        }
        Some(_) => {}
    }
    let dim = h.dim;
    for e in skills.iter().map(|s| &s.embedding).chain(requests.iter().map(|r| &r.embedding)).chain(problems.iter().map(|p| &p.embedding)) {
        if e.dim() != dim {
            return Err(LibraryError::Corrupt(format!("{}: embedding of dimension {} in a {dim}-dim library", path.display(), e.dim())));
        }
    }
    let state = State::from_records(skills, requests, problems, h.next_skill_id, h.next_request_id)?;
    Ok((LibraryConfig { dim, dedup_threshold: h.dedup_threshold, dedup_autojunk: h.dedup_autojunk }, state))
}

pub(crate) struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    fn open(path: &Path, config: LibraryConfig) -> Result<Journal> {
        let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            write_json_line(&mut file, &header(config, JOURNAL_FORMAT, &State::default()))?;
        }
        Ok(Journal { path: path.to_path_buf(), file })
    }

    pub(crate) fn append(&mut self, event: &Event) -> Result<()> {
        let mut buf = serde_json::to_vec(event).map_err(std::io::Error::from)?;
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        Ok(())
    }

    fn reset(&mut self, config: LibraryConfig) -> Result<()> {
        let mut file = File::create(&self.path)?;
        write_json_line(&mut file, &header(config, JOURNAL_FORMAT, &State::default()))?;
        file.sync_all()?;
        self.file = OpenOptions::new().append(true).open(&self.path)?;
        Ok(())
    }
}

fn read_journal(path: &Path) -> Result<Vec<Event>> {
    let text = fs::read_to_string(path)?;
    let mut events = Vec::new();
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let is_last = i + 1 == lines.len();
        if i == 0 {
            let h: Header = serde_json::from_str(line).map_err(|e| corrupt(path, 1, e))?;
            check_header(path, &h, JOURNAL_FORMAT)?;
            continue;
        }
        match serde_json::from_str::<Event>(line) {
            Ok(e) => events.push(e),
            Err(_) if is_last && !complete => break,
            Err(e) => return Err(corrupt(path, i + 1, e)),
        }
    }
    Ok(events)
}

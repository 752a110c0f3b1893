use std::io::BufRead;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::library::{ProblemId, ProblemRecord, ProblemStatus, SkillLibrary, UpsertOutcome};
use crate::llm::Gateway;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestIssue {
    /// 1-based line number.
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub inserted: usize,
    pub updated: usize,
    pub unchanged: usize,
    pub errors: Vec<IngestIssue>,
}

impl IngestReport {
    /// Records accepted, new or not.
    pub fn count(&self) -> usize {
        self.inserted + self.updated + self.unchanged
    }
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Err(format!("missing field `{key}`")),
        Some(Value::String(s)) if s.trim().is_empty() => Err(format!("field `{key}` is empty")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("field `{key}` must be a string")),
    }
}

struct Fields {
    id: String,
    informal_statement: String,
    informal_proofs: Vec<String>,
    formal_statement: String,
    split: String,
}

fn parse_record(line: &str) -> Result<Fields, (Option<String>, String)> {
    let value: Value = serde_json::from_str(line).map_err(|e| (None, format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else { return Err((None, "record is not a JSON object".into())) };
    let id = string_field(&obj, "id").map_err(|m| (None, m))?;
    let with_id = |m: String| (Some(id.clone()), m);
    let informal_statement = string_field(&obj, "informal_statement").map_err(with_id)?;
    let formal_statement = string_field(&obj, "formal_statement").map_err(with_id)?;
    let split = string_field(&obj, "split").map_err(with_id)?;
    let informal_proofs = match obj.get("informal_proofs") {
        None | Some(Value::Null) => return Err(with_id("missing field `informal_proofs`".into())),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| with_id("`informal_proofs` must be an array of strings".into()))?,
        Some(_) => return Err(with_id("`informal_proofs` must be an array of strings".into())),
    };
    Ok(Fields { id, informal_statement, informal_proofs, formal_statement, split })
}

/// Upserts problems from newline-delimited JSON. Bad records are reported
/// and skipped; the rest are embedded (from the formal statement) and stored.
/// Re-ingesting keeps each problem's status and attempt count.
pub fn ingest_reader(library: &SkillLibrary, gateway: &Gateway, reader: impl BufRead) -> std::io::Result<IngestReport> {
    let mut report = IngestReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let issue = |id: Option<String>, message: String| IngestIssue { line: lineno, id, message };
        let Fields { id, informal_statement, informal_proofs, formal_statement, split } = match parse_record(&line) {
            Ok(r) => r,
            Err((id, m)) => {
                report.errors.push(issue(id, m));
                continue;
            }
        };
        let embedding = match gateway.embed(&formal_statement) {
            Ok(e) => e,
            Err(e) => {
                report.errors.push(issue(Some(id), format!("embedding failed: {e}")));
                continue;
            }
        };
        let record = ProblemRecord {
            id: ProblemId(id.clone()),
            informal_statement,
            informal_proofs,
            formal_statement,
            embedding,
            status: ProblemStatus::Pending,
            attempts_used: 0,
            split: Some(split),
        };
        match library.upsert_problem(record) {
            Ok(UpsertOutcome::Inserted) => report.inserted += 1,
            Ok(UpsertOutcome::Updated) => report.updated += 1,
            Ok(UpsertOutcome::Unchanged) => report.unchanged += 1,
            Err(e) => report.errors.push(issue(Some(id), e.to_string())),
        }
    }
    Ok(report)
}

pub fn ingest_problems(library: &SkillLibrary, gateway: &Gateway, path: impl AsRef<Path>) -> std::io::Result<IngestReport> {
    let file = std::fs::File::open(path)?;
    ingest_reader(library, gateway, std::io::BufReader::new(file))
}

//! Parsing of the decomposer's structured answer: a numbered step-by-step
//! proof sketch followed by the lemma statements it would like to have.

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{extract_statement, normalize_whitespace, parse_theory, TheoryError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRequest {
    pub thought: String,
    /// The code as written, usually a bare lemma statement.
    pub code: String,
    /// Normalized statement of the first lemma/theorem in `code`.
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub steps: Vec<String>,
    pub requests: Vec<SkillRequest>,
}

impl Decomposition {
    /// The step list as an informal proof, one `Step N:` line each.
    pub fn structured_proof(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "Step {}: {}", i + 1, s);
        }
        out
    }

    /// Canonical text form; parsing it yields `self` back.
    pub fn render(&self) -> String {
        let mut out = String::from("Structure proof:\n");
        out.push_str(&self.structured_proof());
        out.push_str("\nRequired skills:\n");
        for (i, r) in self.requests.iter().enumerate() {
            let _ = writeln!(out, "Thoughts {}: {}\n", i + 1, r.thought);
            let _ = writeln!(out, "Code {}:\n```isabelle\n{}\n```\n", i + 1, r.code.trim());
        }
        out
    }
}

// Section headers, tolerating markdown decoration (`**`, `#`, `\textbf{}`).
static STRUCTURE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s#*_>\\{}a-z]*?structure\s+proof\s*[*_}]*\s*:?[*_}]*").unwrap());
static SKILLS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s#*_>\\{}a-z]*?required\s+skills\s*[*_}]*\s*:?[*_}]*").unwrap());
static STEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?im)^[\s*_#-]*step\s*(\d+)\s*[*_]*\s*[:.][*_]*").unwrap());
static THOUGHT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s*_#-]*(thoughts?|code)\s*(\d+)\s*[*_]*\s*:[*_]*").unwrap());
static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*\s*\n?(.*?)```").unwrap());

/// Parses decomposer output. Fails only if there is no step-by-step proof;
/// a missing skills section yields no requests, and requests whose code is
/// not a lemma or theorem are dropped.
pub fn parse_decomposer_output(text: &str) -> Result<Decomposition, TheoryError> {
    let structure = STRUCTURE.find(text).ok_or(TheoryError::MissingStructureProof)?;
    let skills_at = SKILLS.find_at(text, structure.end());
    let steps_text = &text[structure.end()..skills_at.map(|m| m.start()).unwrap_or(text.len())];
    let steps = parse_steps(steps_text);
    if steps.is_empty() {
        return Err(TheoryError::NoSteps);
    }
    let requests = match skills_at {
        Some(m) => parse_requests(&text[m.end()..]),
        None => Vec::new(),
    };
    Ok(Decomposition { steps, requests })
}

fn parse_steps(s: &str) -> Vec<String> {
    let heads: Vec<_> = STEP.find_iter(s).collect();
    heads
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let end = heads.get(i + 1).map(|n| n.start()).unwrap_or(s.len());
            clean_prose(&s[m.end()..end])
        })
        .filter(|s| !s.is_empty())
        .collect()
}

fn clean_prose(s: &str) -> String {
    normalize_whitespace(s.trim_end_matches(|c: char| c.is_whitespace() || c == '\\'))
}

fn parse_requests(s: &str) -> Vec<SkillRequest> {
    let heads: Vec<_> = THOUGHT.captures_iter(s).collect();
    let mut thoughts: Vec<(u32, String)> = Vec::new();
    let mut codes: Vec<(u32, String)> = Vec::new();
    for (i, cap) in heads.iter().enumerate() {
        let whole = cap.get(0).expect("match");
        let end = heads.get(i + 1).map(|n| n.get(0).expect("match").start()).unwrap_or(s.len());
        let body = &s[whole.end()..end];
        let n: u32 = cap[2].parse().unwrap_or(0);
        if cap[1].to_ascii_lowercase().starts_with("thought") {
            thoughts.push((n, clean_prose(body)));
        } else {
            codes.push((n, code_body(body)));
        }
    }
    codes
        .into_iter()
        .filter_map(|(n, code)| {
            let doc = parse_theory(&code);
            let first = doc.blocks.first()?;
            let statement = extract_statement(first).ok()?;
            let thought = thoughts.iter().find(|(k, _)| *k == n).map(|(_, t)| t.clone()).unwrap_or_default();
            Some(SkillRequest { thought, code, statement })
        })
        .collect()
}

fn code_body(body: &str) -> String {
    match FENCE.captures(body) {
        Some(c) => c[1].trim().to_string(),
        None => body.trim().trim_end_matches('\\').trim().to_string(),
    }
}

//! Isabelle-style theory text: block splitting, statement extraction,
//! cheat-keyword detection, tactic steps, and the structured LLM outputs.
//!
//! Parsing is lexical. Top-level blocks start at `lemma`, `theorem`,
//! `definition` or `fun` (plus a few other top-level commands, kept as
//! [`BlockKind::Other`]) and run until the next block or the closing `end`.

mod decompose;
pub mod lexer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decompose::{parse_decomposer_output, Decomposition, SkillRequest};
pub use lexer::normalize_whitespace;
use lexer::{lex, Token, TokenKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("block of kind {0:?} has no lemma statement")]
    NotALemma(BlockKind),
    #[error("decomposer output has no \"Structure proof\" section")]
    MissingStructureProof,
    #[error("decomposer output has a \"Structure proof\" section without steps")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Lemma,
    Theorem,
    Definition,
    Fun,
    Other,
}

impl BlockKind {
    fn from_keyword(word: &str) -> Option<BlockKind> {
        Some(match word {
            "lemma" => BlockKind::Lemma,
            "theorem" => BlockKind::Theorem,
            "definition" => BlockKind::Definition,
            "fun" => BlockKind::Fun,
            "corollary" | "proposition" | "lemmas" | "abbreviation" | "primrec" | "function" | "datatype"
            | "type_synonym" | "declare" | "locale" | "context" | "text" | "section" | "subsection" => {
                BlockKind::Other
            }
            _ => return None,
        })
    }

    pub fn is_lemma_like(self) -> bool {
        matches!(self, BlockKind::Lemma | BlockKind::Theorem)
    }
}

/// One top-level block. `statement` and `proof_body` are raw slices that
/// together cover `span` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofBlock {
    pub kind: BlockKind,
    pub name: Option<String>,
    pub statement: String,
    pub proof_body: String,
    pub span: (usize, usize),
}

impl ProofBlock {
    pub fn text(&self) -> String {
        format!("{}{}", self.statement, self.proof_body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryDocument {
    pub theory_name: String,
    pub imports: Vec<String>,
    pub blocks: Vec<ProofBlock>,
    pub raw: String,
}

impl TheoryDocument {
    pub fn block_named(&self, name: &str) -> Option<(usize, &ProofBlock)> {
        self.blocks.iter().enumerate().find(|(_, b)| b.name.as_deref() == Some(name))
    }

    pub fn block_names(&self) -> Vec<Option<&str>> {
        self.blocks.iter().map(|b| b.name.as_deref()).collect()
    }
}

/// Words that start a proof (and therefore end a statement).
const PROOF_OPENERS: &[&str] =
    &["proof", "by", "apply", "using", "unfolding", "including", "sledgehammer", "sorry", "oops", "done"];

pub const HAMMER: &str = "sledgehammer";
pub const CHEAT_KEYWORDS: &[&str] = &["sorry", "oops"];

/// Isar words that never belong to a tactic's method text.
const ISAR_WORDS: &[&str] = &[
    "have", "show", "hence", "thus", "then", "from", "with", "note", "obtain", "fix", "assume", "presume",
    "case", "next", "qed", "moreover", "ultimately", "finally", "also", "let", "define", "consider",
    "proof", "by", "apply", "using", "unfolding", "done", "sorry", "oops", "sledgehammer", "lemma",
    "theorem", "end", "interpret", "txt", "text", "supply", "subgoal", "defer", "prefer", "back",
];

/// Parses theory source into header and top-level blocks. Never fails: text
/// with no recognizable block becomes a single [`BlockKind::Other`] block.
pub fn parse_theory(source: &str) -> TheoryDocument {
    let toks = lex(source);
    let code: Vec<&Token> = toks.iter().filter(|t| t.is_code()).collect();
    let mut theory_name = String::new();
    let mut imports = Vec::new();
    let mut pos = 0;
    let mut region_start = 0;

    if code.first().is_some_and(|t| t.is_ident(source, "theory")) {
        if let Some(name) = code.get(1) {
            theory_name = unquote(name.text(source)).to_string();
        }
        pos = 2;
        let mut in_imports = false;
        while pos < code.len() {
            let t = code[pos];
            let text = t.text(source);
            pos += 1;
            match text {
                "begin" if t.kind == TokenKind::Ident => {
                    region_start = t.end;
                    break;
                }
                "imports" if t.kind == TokenKind::Ident => in_imports = true,
                "keywords" | "abbrevs" if t.kind == TokenKind::Ident => in_imports = false,
                _ if in_imports => imports.push(unquote(text).to_string()),
                _ => {}
            }
        }
    }

    // Block starts and the region end.
    let mut starts: Vec<(usize, BlockKind)> = Vec::new();
    let mut region_end = source.len();
    let mut nesting = 0u32;
    for (i, t) in code.iter().enumerate().skip(pos) {
        if t.kind != TokenKind::Ident || t.depth != 0 {
            continue;
        }
        match t.text(source) {
            "begin" => nesting += 1,
            "end" => {
                if nesting == 0 {
                    region_end = t.start;
                    break;
                }
                nesting -= 1;
            }
            word => {
                if nesting == 0 {
                    if let Some(kind) = BlockKind::from_keyword(word) {
                        starts.push((i, kind));
                    }
                }
            }
        }
    }

    let mut blocks = Vec::new();
    let first_block_at = starts.first().map(|&(i, _)| code[i].start).unwrap_or(region_end);
    let preamble_has_code = code.iter().any(|t| t.start >= region_start && t.end <= first_block_at);
    if preamble_has_code {
        let (s, e) = trim_span(source, region_start, first_block_at);
        blocks.push(ProofBlock {
            kind: BlockKind::Other,
            name: None,
            statement: source[s..e].to_string(),
            proof_body: String::new(),
            span: (s, e),
        });
    }
    for (n, &(i, kind)) in starts.iter().enumerate() {
        let start = code[i].start;
        let limit = starts.get(n + 1).map(|&(j, _)| code[j].start).unwrap_or(region_end);
        let (_, end) = trim_span(source, start, limit);
        let body_toks: Vec<&Token> =
            code[i + 1..].iter().copied().take_while(|t| t.start < end).collect();
        let name = block_name(source, kind, &body_toks);
        let split = if kind.is_lemma_like() {
            body_toks
                .iter()
                .find(|t| t.depth == 0 && t.kind == TokenKind::Ident && PROOF_OPENERS.contains(&t.text(source)))
                .map(|t| t.start)
                .unwrap_or(end)
        } else {
            end
        };
        let split = trim_span(source, start, split).1.max(start);
        blocks.push(ProofBlock {
            kind,
            name,
            statement: source[start..split].to_string(),
            proof_body: source[split..end].to_string(),
            span: (start, end),
        });
    }

    TheoryDocument { theory_name, imports, blocks, raw: source.to_string() }
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(s)
}

/// Shrinks `[start, end)` to exclude trailing whitespace.
fn trim_span(src: &str, start: usize, end: usize) -> (usize, usize) {
    let trimmed = src[start..end].trim_end();
    (start, start + trimmed.len())
}

fn block_name(src: &str, kind: BlockKind, toks: &[&Token]) -> Option<String> {
    let first = toks.first().filter(|t| t.kind == TokenKind::Ident)?;
    let word = first.text(src);
    if matches!(word, "fixes" | "assumes" | "shows" | "obtains" | "where" | "begin") {
        return None;
    }
    if matches!(kind, BlockKind::Definition | BlockKind::Fun) {
        return Some(word.to_string());
    }
    // `name:` or `name [attrs]:`
    let mut j = 1;
    if toks.get(j).is_some_and(|t| t.text(src) == "[") {
        while j < toks.len() && !(toks[j].text(src) == "]" && toks[j].depth == 0) {
            j += 1;
        }
        j += 1;
    }
    toks.get(j).is_some_and(|t| t.text(src) == ":").then(|| word.to_string())
}

/// Whitespace-normalized statement of a lemma or theorem: everything up to
/// the first proof-opening token.
pub fn extract_statement(block: &ProofBlock) -> Result<String, TheoryError> {
    if !block.kind.is_lemma_like() {
        return Err(TheoryError::NotALemma(block.kind));
    }
    Ok(normalize_whitespace(&block.statement))
}

/// The proposition part of a normalized statement: keyword and name removed.
/// `theorem foo: fixes x shows P` and `lemma fixes x shows P` share it.
pub fn proposition_of(statement: &str) -> String {
    let s = normalize_whitespace(statement);
    let toks = lex(&s);
    let code: Vec<&Token> = toks.iter().filter(|t| t.is_code()).collect();
    let Some(first) = code.first() else { return s };
    if !(first.is_ident(&s, "lemma") || first.is_ident(&s, "theorem")) {
        return s;
    }
    let rest = &code[1..];
    let body_start = match (rest.first(), rest.get(1)) {
        (Some(name), Some(colon))
            if name.kind == TokenKind::Ident
                && colon.text(&s) == ":"
                && !matches!(name.text(&s), "fixes" | "assumes" | "shows") =>
        {
            colon.end
        }
        _ => first.end,
    };
    s[body_start..].trim().to_string()
}

/// Normalized statement of the first lemma/theorem in `text`, which may be a
/// bare statement, a statement followed by a proof, or a whole theory.
pub fn statement_of(text: &str) -> String {
    parse_theory(text)
        .blocks
        .iter()
        .find(|b| b.kind.is_lemma_like())
        .and_then(|b| extract_statement(b).ok())
        .unwrap_or_else(|| normalize_whitespace(text))
}

/// True iff `sorry` or `oops` occurs as a standalone token outside comments,
/// strings and cartouches.
pub fn contains_cheat_keywords(source: &str) -> bool {
    lex(source)
        .iter()
        .any(|t| t.kind == TokenKind::Ident && CHEAT_KEYWORDS.contains(&t.text(source)))
}

/// Renders a theory file around `blocks`. An empty import list becomes
/// `imports Main` so the result is always a loadable theory.
pub fn assemble_theory<S: AsRef<str>>(imports: &[S], blocks: &[S], name: &str) -> String {
    let imports = if imports.is_empty() {
        "Main".to_string()
    } else {
        imports.iter().map(|i| quote_import(i.as_ref())).collect::<Vec<_>>().join(" ")
    };
    let mut out = format!("theory {name}\n  imports {imports}\nbegin\n");
    for b in blocks {
        let b = b.as_ref().trim();
        if !b.is_empty() {
            out.push('\n');
            out.push_str(b);
            out.push('\n');
        }
    }
    out.push_str("\nend\n");
    out
}

fn quote_import(i: &str) -> String {
    if i.chars().all(lexer::is_ident_char) {
        i.to_string()
    } else {
        format!("\"{i}\"")
    }
}

/// The first complete `theory ... begin ... end` in an LLM response, with
/// any surrounding prose or markdown fences dropped.
pub fn extract_theory(response: &str) -> Option<&str> {
    let mut search_from = 0;
    while let Some(off) = find_theory_keyword(&response[search_from..]) {
        let start = search_from + off;
        let src = &response[start..];
        let toks = lex(src);
        let mut nesting = 0u32;
        let mut begun = false;
        for t in toks.iter().filter(|t| t.kind == TokenKind::Ident && t.depth == 0) {
            match t.text(src) {
                "begin" => {
                    begun = true;
                    nesting += 1;
                }
                "end" if begun => {
                    nesting -= 1;
                    if nesting == 0 {
                        return Some(&response[start..start + t.end]);
                    }
                }
                _ => {}
            }
        }
        search_from = start + "theory".len();
    }
    None
}

/// Offset of a line-initial `theory <name>`.
fn find_theory_keyword(s: &str) -> Option<usize> {
    let mut offset = 0;
    for line in s.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("theory") {
            if rest.starts_with(|c: char| c.is_whitespace()) && !rest.trim().is_empty() {
                return Some(offset + (line.len() - trimmed.len()));
            }
        }
        offset += line.len();
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    By,
    Apply,
    Hammer,
    Cheat,
}

/// One tactic invocation inside a block's proof: `by m`, `apply m`,
/// `sledgehammer`, `sorry` or `oops`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticStep {
    pub block_index: usize,
    pub step_index: usize,
    pub kind: StepKind,
    /// Byte range in the theory source.
    pub span: (usize, usize),
    /// Whitespace-normalized tactic text, e.g. `by (auto simp: field_simps)`.
    pub text: String,
}

/// All tactic steps of all blocks, in source order.
pub fn tactic_steps(doc: &TheoryDocument) -> Vec<TacticStep> {
    let src = doc.raw.as_str();
    let toks: Vec<Token> = lex(src).into_iter().filter(|t| t.is_code()).collect();
    let mut steps = Vec::new();
    for (bi, block) in doc.blocks.iter().enumerate() {
        let body_start = block.span.0 + block.statement.len();
        let in_block: Vec<&Token> =
            toks.iter().filter(|t| t.start >= body_start && t.end <= block.span.1).collect();
        let mut i = 0;
        let mut step_index = 0;
        while i < in_block.len() {
            let t = in_block[i];
            let word = if t.kind == TokenKind::Ident { t.text(src) } else { "" };
            let (kind, end_idx) = match word {
                "by" | "apply" => {
                    let kind = if word == "by" { StepKind::By } else { StepKind::Apply };
                    let mut j = method_end(src, &in_block, i + 1);
                    if word == "by" && j > i + 1 {
                        // `by m1 m2`: an optional terminal method.
                        j = method_end(src, &in_block, j);
                    }
                    (kind, j)
                }
                HAMMER => (StepKind::Hammer, i + 1),
                "sorry" | "oops" => (StepKind::Cheat, i + 1),
                _ => {
                    i += 1;
                    continue;
                }
            };
            let last = in_block[end_idx.max(i + 1) - 1];
            let span = (t.start, last.end);
            steps.push(TacticStep {
                block_index: bi,
                step_index,
                kind,
                span,
                text: normalize_whitespace(&src[span.0..span.1]),
            });
            step_index += 1;
            i = end_idx.max(i + 1);
        }
    }
    steps
}

/// Index one past a single method starting at `i`: a bracketed group or a
/// single word, plus trailing `+`/`?` combinators and `[n]` restrictions.
fn method_end(src: &str, toks: &[&Token], i: usize) -> usize {
    let Some(t) = toks.get(i) else { return i };
    let text = t.text(src);
    let mut j = if text == "(" {
        let depth = t.depth;
        let mut k = i + 1;
        while k < toks.len() && !(toks[k].text(src) == ")" && toks[k].depth == depth) {
            k += 1;
        }
        (k + 1).min(toks.len())
    } else if t.kind == TokenKind::Ident && !ISAR_WORDS.contains(&text) || text == "-" {
        i + 1
    } else {
        return i;
    };
    while let Some(n) = toks.get(j) {
        let nt = n.text(src);
        // Combinators must be glued to the method.
        if (nt == "+" || nt == "?") && n.start == toks[j - 1].end {
            j += 1;
        } else if nt == "[" && n.start == toks[j - 1].end {
            let depth = n.depth;
            let mut k = j + 1;
            while k < toks.len() && !(toks[k].text(src) == "]" && toks[k].depth == depth) {
                k += 1;
            }
            j = (k + 1).min(toks.len());
        } else {
            break;
        }
    }
    j
}

/// Replaces byte range `span` of `source` with `replacement`.
pub fn splice(source: &str, span: (usize, usize), replacement: &str) -> String {
    let mut out = String::with_capacity(source.len() + replacement.len());
    out.push_str(&source[..span.0]);
    out.push_str(replacement);
    out.push_str(&source[span.1..]);
    out
}

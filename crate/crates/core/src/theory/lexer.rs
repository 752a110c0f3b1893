//! A small lexer for Isabelle outer syntax.
//!
//! It only needs to know what is *not* code: strings, cartouches and nested
//! comments are single tokens so that keywords inside them are ignored.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// `[A-Za-z_][A-Za-z0-9_']*`
    Ident,
    Number,
    /// `"..."` or `` `...` ``
    String,
    /// `‹...›` or `\<open>...\<close>`, possibly nested.
    Cartouche,
    /// `(* ... *)`, possibly nested.
    Comment,
    /// An Isabelle symbol such as `\<le>`.
    Symbol,
    /// Any other single character, or `::`.
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// Bracket nesting (`(`, `[`, `{`) before this token.
    pub depth: u32,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_ident(&self, src: &str, word: &str) -> bool {
        self.kind == TokenKind::Ident && self.text(src) == word
    }

    pub fn is_code(&self) -> bool {
        self.kind != TokenKind::Comment
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

const OPEN: &str = "\\<open>";
const CLOSE: &str = "\\<close>";

/// Tokenizes `src`. Unterminated strings and comments run to end of input.
pub fn lex(src: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut depth: u32 = 0;
    let mut i = 0;
    let bytes = src.as_bytes();
    while i < src.len() {
        let rest = &src[i..];
        let c = rest.chars().next().expect("non-empty");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        let kind;
        if rest.starts_with("(*") {
            i += skip_nested(rest, "(*", "*)");
            kind = TokenKind::Comment;
        } else if c == '"' || c == '`' {
            i += skip_quoted(rest, c);
            kind = TokenKind::String;
        } else if c == '‹' {
            i += skip_nested(rest, "‹", "›");
            kind = TokenKind::Cartouche;
        } else if rest.starts_with(OPEN) {
            i += skip_nested(rest, OPEN, CLOSE);
            kind = TokenKind::Cartouche;
        } else if rest.starts_with("\\<") {
            i += rest.find('>').map(|p| p + 1).unwrap_or(rest.len());
            kind = TokenKind::Symbol;
        } else if is_ident_start(c) {
            i += rest.find(|ch: char| !is_ident_char(ch)).unwrap_or(rest.len());
            kind = TokenKind::Ident;
        } else if c.is_ascii_digit() {
            i += rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
            kind = TokenKind::Number;
        } else if rest.starts_with("::") {
            i += 2;
            kind = TokenKind::Punct;
        } else {
            i += c.len_utf8();
            kind = TokenKind::Punct;
        }
        // Both brackets of a group carry the depth outside the group.
        let mut tok_depth = depth;
        if kind == TokenKind::Punct && i - start == 1 {
            match bytes[start] {
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => {
                    depth = depth.saturating_sub(1);
                    tok_depth = depth;
                }
                _ => {}
            }
        }
        tokens.push(Token { kind, start, end: i, depth: tok_depth });
    }
    tokens
}

/// Length of a nested `open ... close` region at the start of `s`.
fn skip_nested(s: &str, open: &str, close: &str) -> usize {
    let mut level = 0usize;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with(open) {
            level += 1;
            i += open.len();
        } else if rest.starts_with(close) {
            level -= 1;
            i += close.len();
            if level == 0 {
                return i;
            }
        } else {
            i += rest.chars().next().map(char::len_utf8).unwrap_or(1);
        }
    }
    s.len()
}

/// Length of a quoted region (with backslash escapes) at the start of `s`.
fn skip_quoted(s: &str, quote: char) -> usize {
    let mut chars = s.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        if c == '\\' {
            // Isabelle symbols like \<le> are fine inside strings; only an
            // escaped quote or backslash needs skipping.
            if let Some((_, n)) = chars.clone().next() {
                if n == quote || n == '\\' {
                    chars.next();
                }
            }
        } else if c == quote {
            return i + c.len_utf8();
        }
    }
    s.len()
}

/// Collapses every whitespace run to a single space and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

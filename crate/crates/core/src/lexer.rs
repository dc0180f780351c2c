//! A small lexer for subject-language source text.
//!
//! It knows just enough of the grammar to separate code from comments and
//! string/char literals, to balance delimiters, and to report on which line
//! each identifier sits. Comments are dropped from the token stream.

/// Coarse token classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Lifetime,
    /// String, byte-string, raw-string, char and numeric literals.
    Literal,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based line of the token's first character.
    pub line: usize,
    /// Char offsets `[start, end)` into the source.
    pub span: (usize, usize),
}

impl Token {
    pub fn is_ident(&self, text: &str) -> bool {
        self.kind == TokenKind::Ident && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == text
    }

    /// Contents of a plain or raw string literal, without quotes.
    pub fn string_value(&self) -> Option<String> {
        if self.kind != TokenKind::Literal {
            return None;
        }
        let t = self.text.as_str();
        let t = t.strip_prefix('b').or_else(|| t.strip_prefix('c')).unwrap_or(t);
        if let Some(raw) = t.strip_prefix('r') {
            let hashes = raw.chars().take_while(|&c| c == '#').count();
            let inner = &raw[hashes..];
            let inner = inner.strip_prefix('"')?;
            let inner = inner.get(..inner.len().checked_sub(1 + hashes)?)?;
            return Some(inner.to_string());
        }
        let inner = t.strip_prefix('"')?.strip_suffix('"')?;
        let mut out = String::with_capacity(inner.len());
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            if c != '\\' {
                out.push(c);
                continue;
            }
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('0') => out.push('\0'),
                Some('\n') => {
                    // line continuation: skip leading whitespace of the next line
                    let rest: String = chars.clone().collect();
                    let trimmed = rest.trim_start();
                    let skip = rest.chars().count() - trimmed.chars().count();
                    for _ in 0..skip {
                        chars.next();
                    }
                }
                Some(other) => out.push(other),
                None => {}
            }
        }
        Some(out)
    }
}

const COMPOUND_PUNCT: [&str; 3] = ["::", "->", "=>"];

/// Tokenizes `src`. Never fails: unterminated literals or comments simply
/// run to the end of input.
pub fn tokenize(src: &str) -> Vec<Token> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let n = chars.len();

    let at = |i: usize| chars.get(i).copied();

    while i < n {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        // comments
        if c == '/' && at(i + 1) == Some('/') {
            while i < n && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && at(i + 1) == Some('*') {
            let mut depth = 0usize;
            while i < n {
                if chars[i] == '/' && at(i + 1) == Some('*') {
                    depth += 1;
                    i += 2;
                } else if chars[i] == '*' && at(i + 1) == Some('/') {
                    depth -= 1;
                    i += 2;
                    if depth == 0 {
                        break;
                    }
                } else {
                    if chars[i] == '\n' {
                        line += 1;
                    }
                    i += 1;
                }
            }
            continue;
        }

        let start = i;
        let start_line = line;

        // raw strings and prefixed strings: r"..", r#".."#, b"..", br"..", c".."
        if let Some(len) = raw_string_len(&chars, i) {
            for &ch in &chars[i..i + len] {
                if ch == '\n' {
                    line += 1;
                }
            }
            i += len;
            tokens.push(Token {
                kind: TokenKind::Literal,
                text: chars[start..i].iter().collect(),
                line: start_line,
                span: (start, i),
            });
            continue;
        }
        if c == '"' || ((c == 'b' || c == 'c') && at(i + 1) == Some('"')) {
            if c != '"' {
                i += 1;
            }
            i += 1;
            while i < n && chars[i] != '"' {
                if chars[i] == '\\' {
                    i += 1;
                }
                if i < n && chars[i] == '\n' {
                    line += 1;
                }
                i += 1;
            }
            i = (i + 1).min(n);
            tokens.push(Token {
                kind: TokenKind::Literal,
                text: chars[start..i].iter().collect(),
                line: start_line,
                span: (start, i),
            });
            continue;
        }
        if c == '\'' || (c == 'b' && at(i + 1) == Some('\'')) {
            let q = if c == 'b' { i + 1 } else { i };
            // char literal: '\..' or 'x'
            let is_char = match at(q + 1) {
                Some('\\') => true,
                Some(_) => at(q + 2) == Some('\''),
                None => false,
            };
            if is_char {
                i = q + 1;
                if chars[i] == '\\' {
                    i += 1;
                }
                while i < n && chars[i] != '\'' && chars[i] != '\n' {
                    i += 1;
                }
                i = (i + 1).min(n);
                tokens.push(Token {
                    kind: TokenKind::Literal,
                    text: chars[start..i].iter().collect(),
                    line: start_line,
                    span: (start, i),
                });
                continue;
            }
            if c == '\'' {
                i += 1;
                while i < n && is_ident_continue(chars[i]) {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Lifetime,
                    text: chars[start..i].iter().collect(),
                    line: start_line,
                    span: (start, i),
                });
                continue;
            }
        }
        if c == 'r' && at(i + 1) == Some('#') && at(i + 2).is_some_and(is_ident_start) {
            i += 2;
            let body = i;
            while i < n && is_ident_continue(chars[i]) {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident,
                text: chars[body..i].iter().collect(),
                line: start_line,
                span: (start, i),
            });
            continue;
        }
        if is_ident_start(c) {
            while i < n && is_ident_continue(chars[i]) {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident,
                text: chars[start..i].iter().collect(),
                line: start_line,
                span: (start, i),
            });
            continue;
        }
        if c.is_ascii_digit() {
            while i < n {
                let d = chars[i];
                let fraction = d == '.' && at(i + 1).is_some_and(|x| x.is_ascii_digit());
                if d.is_ascii_alphanumeric() || d == '_' || fraction {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push(Token {
                kind: TokenKind::Literal,
                text: chars[start..i].iter().collect(),
                line: start_line,
                span: (start, i),
            });
            continue;
        }
        let pair: String = chars[i..(i + 2).min(n)].iter().collect();
        let text = if COMPOUND_PUNCT.contains(&pair.as_str()) {
            i += 2;
            pair
        } else {
            i += 1;
            c.to_string()
        };
        tokens.push(Token { kind: TokenKind::Punct, text, line: start_line, span: (start, i) });
    }
    tokens
}

fn raw_string_len(chars: &[char], i: usize) -> Option<usize> {
    let mut j = i;
    if matches!(chars.get(j), Some('b') | Some('c')) {
        j += 1;
    }
    if chars.get(j) != Some(&'r') {
        return None;
    }
    j += 1;
    let mut hashes = 0;
    while chars.get(j) == Some(&'#') {
        hashes += 1;
        j += 1;
    }
    if chars.get(j) != Some(&'"') {
        return None;
    }
    j += 1;
    while j < chars.len() {
        if chars[j] == '"' && (0..hashes).all(|h| chars.get(j + 1 + h) == Some(&'#')) {
            return Some(j + 1 + hashes - i);
        }
        j += 1;
    }
    Some(chars.len() - i)
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

const DEFINING_KEYWORDS: [&str; 9] = ["fn", "struct", "enum", "trait", "type", "mod", "const", "static", "union"];

/// Lines on which `name` is used as a call or path expression.
///
/// An identifier token counts when it is preceded by `.` or `::`, or
/// followed by `(`, `::`, `!` or `<`. Definitions (`fn name`, ...) do not
/// count. Lines are 1-based, sorted and deduplicated.
pub fn usage_lines(tokens: &[Token], name: &str) -> Vec<usize> {
    let mut lines = Vec::new();
    for (idx, tok) in tokens.iter().enumerate() {
        if tok.kind != TokenKind::Ident || tok.text != name {
            continue;
        }
        let prev = idx.checked_sub(1).map(|p| &tokens[p]);
        let next = tokens.get(idx + 1);
        if prev.is_some_and(|p| p.kind == TokenKind::Ident && DEFINING_KEYWORDS.contains(&p.text.as_str())) {
            continue;
        }
        if prev.is_some_and(|p| p.is_punct("!")) && idx >= 2 && tokens[idx - 2].is_ident("macro_rules") {
            continue;
        }
        let after_access = prev.is_some_and(|p| p.is_punct(".") || p.is_punct("::"));
        let before_call =
            next.is_some_and(|n| n.is_punct("(") || n.is_punct("::") || n.is_punct("!") || n.is_punct("<"));
        if after_access || before_call {
            lines.push(tok.line);
        }
    }
    lines.dedup();
    lines
}

/// True when the final segment of `path` is used in code (see [`usage_lines`]).
pub fn mentions_path(tokens: &[Token], path: &str) -> bool {
    let last = path.rsplit("::").next().unwrap_or(path).trim();
    !last.is_empty() && !usage_lines(tokens, last).is_empty()
}

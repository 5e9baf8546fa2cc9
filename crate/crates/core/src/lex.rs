//! A small token scanner for Verus-flavored Rust source.
//!
//! The pipeline never parses full Rust grammar; every downstream pass
//! (region extraction, item discovery, mode classification, metadata
//! mining) only needs identifiers, punctuation, and bracket structure
//! with comments and literals correctly skipped. Verus-specific
//! operators (`&&&`, `==>`, `@`, ...) come through as plain punctuation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifier or keyword (word characters).
    Ident,
    /// One significant punctuation character, brackets included.
    Punct(char),
    /// String, char, or numeric literal, treated as opaque.
    Literal,
}

#[derive(Debug, Clone, Copy)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
    /// 0-based line of `start`.
    pub line: usize,
    /// True when the token sits inside an outer `#[...]` attribute.
    pub in_attribute: bool,
}

/// Byte span, end-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        offset >= self.start && offset < self.end
    }
}

#[derive(Debug, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    /// Spans of `//` and `/* */` comments, in source order.
    pub comment_spans: Vec<Span>,
}

impl Lexed {
    pub fn ident_at<'s>(&self, idx: usize, source: &'s str) -> Option<&'s str> {
        let tok = self.tokens.get(idx)?;
        if tok.kind == TokenKind::Ident {
            Some(&source[tok.start..tok.end])
        } else {
            None
        }
    }
}

/// Byte offsets where each line starts. Line 0 starts at offset 0.
pub fn line_starts(source: &str) -> Vec<usize> {
    let mut starts = vec![0usize];
    for (i, b) in source.bytes().enumerate() {
        if b == b'\n' {
            starts.push(i + 1);
        }
    }
    starts
}

/// Maps a byte offset to its 0-based line via the `line_starts` table.
pub fn line_of(starts: &[usize], offset: usize) -> usize {
    match starts.binary_search(&offset) {
        Ok(line) => line,
        Err(insert) => insert - 1,
    }
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_word_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Tokenizes source, skipping comments, whitespace, and literal interiors.
pub fn lex(source: &str) -> Lexed {
    let bytes = source.as_bytes();
    let starts = line_starts(source);
    let mut out = Lexed::default();
    let mut chars = source.char_indices().peekable();

    while let Some(&(i, c)) = chars.peek() {
        // Line comment.
        if c == '/' && source[i..].starts_with("//") {
            let end = source[i..]
                .find('\n')
                .map(|off| i + off)
                .unwrap_or(bytes.len());
            out.comment_spans.push(Span::new(i, end));
            while let Some(&(j, _)) = chars.peek() {
                if j >= end {
                    break;
                }
                chars.next();
            }
            continue;
        }
        // Block comment, may nest.
        if c == '/' && source[i..].starts_with("/*") {
            let mut depth = 0usize;
            let mut end = bytes.len();
            let mut j = i;
            while j < bytes.len() {
                if source[j..].starts_with("/*") {
                    depth += 1;
                    j += 2;
                } else if source[j..].starts_with("*/") {
                    depth -= 1;
                    j += 2;
                    if depth == 0 {
                        end = j;
                        break;
                    }
                } else {
                    j += source[j..].chars().next().map(char::len_utf8).unwrap_or(1);
                }
            }
            out.comment_spans.push(Span::new(i, end));
            while let Some(&(k, _)) = chars.peek() {
                if k >= end {
                    break;
                }
                chars.next();
            }
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        // Raw / byte strings: r"", r#""#, br"", b"".
        if c == 'r' || c == 'b' {
            if let Some(end) = scan_string_prefix(source, i) {
                push_literal(&mut out, &starts, i, end);
                advance_to(&mut chars, end);
                continue;
            }
        }
        if c == '"' {
            let end = scan_quoted(source, i, '"');
            push_literal(&mut out, &starts, i, end);
            advance_to(&mut chars, end);
            continue;
        }
        if c == '\'' {
            if let Some(end) = scan_char_literal(source, i) {
                push_literal(&mut out, &starts, i, end);
                advance_to(&mut chars, end);
                continue;
            }
            // Lifetime: consume the quote plus the identifier.
            chars.next();
            let mut end = i + 1;
            while let Some(&(j, cc)) = chars.peek() {
                if is_word_continue(cc) {
                    end = j + cc.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            push_literal(&mut out, &starts, i, end);
            continue;
        }
        if c.is_ascii_digit() {
            let mut end = i;
            while let Some(&(j, cc)) = chars.peek() {
                if is_word_continue(cc) || cc == '.' && source[j + 1..].starts_with(|d: char| d.is_ascii_digit()) {
                    end = j + cc.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            push_literal(&mut out, &starts, i, end.max(i + c.len_utf8()));
            continue;
        }
        if is_word_start(c) {
            let mut end = i + c.len_utf8();
            chars.next();
            while let Some(&(j, cc)) = chars.peek() {
                if is_word_continue(cc) {
                    end = j + cc.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.tokens.push(Token {
                kind: TokenKind::Ident,
                start: i,
                end,
                line: line_of(&starts, i),
                in_attribute: false,
            });
            continue;
        }
        // Any other character is one punctuation token.
        chars.next();
        out.tokens.push(Token {
            kind: TokenKind::Punct(c),
            start: i,
            end: i + c.len_utf8(),
            line: line_of(&starts, i),
            in_attribute: false,
        });
    }

    mark_attributes(&mut out.tokens);
    out
}

fn push_literal(out: &mut Lexed, starts: &[usize], start: usize, end: usize) {
    out.tokens.push(Token {
        kind: TokenKind::Literal,
        start,
        end,
        line: line_of(starts, start),
        in_attribute: false,
    });
}

fn advance_to(chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>, end: usize) {
    while let Some(&(j, _)) = chars.peek() {
        if j >= end {
            break;
        }
        chars.next();
    }
}

/// Scans `r"..."`, `r#"..."#`, `b"..."`, `br#"..."#` starting at `i`.
/// Returns the end offset, or None when `i` is a plain identifier start.
fn scan_string_prefix(source: &str, i: usize) -> Option<usize> {
    let rest = &source[i..];
    let mut j = 1;
    if rest.starts_with("br") || rest.starts_with("rb") {
        j = 2;
    }
    let after = &rest[j..];
    if after.starts_with('"') {
        return Some(scan_quoted(source, i + j, '"'));
    }
    if after.starts_with('#') {
        let hashes = after.chars().take_while(|&c| c == '#').count();
        if after[hashes..].starts_with('"') {
            let close: String = format!("\"{}", "#".repeat(hashes));
            let body_start = i + j + hashes + 1;
            if let Some(off) = source[body_start..].find(&close) {
                return Some(body_start + off + close.len());
            }
            return Some(source.len());
        }
    }
    if j == 1 && rest.starts_with("b'") {
        return scan_char_literal(source, i + 1).map(|e| e);
    }
    None
}

/// Scans a quoted literal with backslash escapes, starting at the quote.
fn scan_quoted(source: &str, start: usize, quote: char) -> usize {
    let mut iter = source[start..].char_indices().skip(1);
    let mut escaped = false;
    for (off, c) in &mut iter {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            c if c == quote => return start + off + c.len_utf8(),
            _ => {}
        }
    }
    source.len()
}

/// Returns Some(end) when a char literal starts at `i`, None for a lifetime.
fn scan_char_literal(source: &str, i: usize) -> Option<usize> {
    let rest = &source[i + 1..];
    let mut it = rest.char_indices();
    let (_, first) = it.next()?;
    if first == '\\' {
        // Escaped char: find the closing quote.
        for (off, c) in it {
            if c == '\'' {
                return Some(i + 1 + off + 1);
            }
        }
        return None;
    }
    // 'x' form: exactly one char then a quote; otherwise it is a lifetime.
    if let Some((off, c)) = it.next() {
        if c == '\'' {
            return Some(i + 1 + off + 1);
        }
    }
    None
}

/// Flags tokens inside outer `#[...]` attribute groups.
fn mark_attributes(tokens: &mut [Token]) {
    let mut i = 0;
    while i < tokens.len() {
        let is_hash = matches!(tokens[i].kind, TokenKind::Punct('#'));
        let next_is_open = matches!(
            tokens.get(i + 1).map(|t| t.kind),
            Some(TokenKind::Punct('[')) | Some(TokenKind::Punct('!'))
        );
        if is_hash && next_is_open {
            let mut j = i + 1;
            if matches!(tokens[j].kind, TokenKind::Punct('!')) {
                j += 1;
            }
            if matches!(tokens.get(j).map(|t| t.kind), Some(TokenKind::Punct('['))) {
                let mut depth = 0i32;
                let open = j;
                while j < tokens.len() {
                    match tokens[j].kind {
                        TokenKind::Punct('[') => depth += 1,
                        TokenKind::Punct(']') => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                let clamp = j.min(tokens.len() - 1);
                for tok in tokens[i..=clamp].iter_mut() {
                    tok.in_attribute = true;
                }
                let _ = open;
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
}

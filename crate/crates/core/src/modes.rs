//! Line-level classification of function units into spec / proof / exec
//! modes, with clause tagging (requires, ensures, invariant, asserts,
//! proof blocks, ghost declarations).
//!
//! The classifier is a token-driven region scanner, not a grammar parser:
//! it tracks bracket depth and a small state machine over the function's
//! tokens, then projects region membership onto lines. A line takes the
//! region of its first significant token; comment-only and blank lines
//! take the mode of the enclosing region.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::lex::{self, Span, TokenKind};
use crate::source::FunctionUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeMode {
    Spec,
    Proof,
    Exec,
    Unclassified,
}

impl fmt::Display for CodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CodeMode::Spec => "spec",
            CodeMode::Proof => "proof",
            CodeMode::Exec => "exec",
            CodeMode::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clause {
    Signature,
    Requires,
    Ensures,
    Invariant,
    Decreases,
    AssertLike,
    ProofBlock,
    GhostDecl,
    Body,
    Comment,
    Blank,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::Signature => "signature",
            Clause::Requires => "requires",
            Clause::Ensures => "ensures",
            Clause::Invariant => "invariant",
            Clause::Decreases => "decreases",
            Clause::AssertLike => "assert-like",
            Clause::ProofBlock => "proof-block",
            Clause::GhostDecl => "ghost-decl",
            Clause::Body => "body",
            Clause::Comment => "comment",
            Clause::Blank => "blank",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeLine {
    /// 0-based line number within the function.
    pub index: usize,
    /// Line text without the trailing newline.
    pub text: String,
    pub mode: CodeMode,
    pub clause: Clause,
}

impl CodeLine {
    /// Lines removed when a proof-completion task is generated: proof
    /// obligations by clause kind, plus the body (and interior comments
    /// and blanks) of proof-mode regions.
    pub fn is_maskable(&self) -> bool {
        matches!(
            self.clause,
            Clause::Invariant
                | Clause::Decreases
                | Clause::AssertLike
                | Clause::ProofBlock
                | Clause::GhostDecl
        ) || (self.mode == CodeMode::Proof
            && matches!(self.clause, Clause::Body | Clause::Comment | Clause::Blank))
    }

    /// Comment-only or blank, excluded from proof-line counts.
    pub fn is_trivia(&self) -> bool {
        matches!(self.clause, Clause::Comment | Clause::Blank)
    }
}

pub fn is_clause_keyword(word: &str) -> bool {
    clause_kind(word).is_some()
}

/// Keywords that open a specification clause on a function item or a loop
/// header. `recommends`, `opens_invariants`, `no_unwind`, `when` and `via`
/// are folded into the nearest of the four canonical kinds.
fn clause_kind(word: &str) -> Option<Clause> {
    match word {
        "requires" | "recommends" | "opens_invariants" | "no_unwind" | "when" => {
            Some(Clause::Requires)
        }
        "ensures" | "default_ensures" => Some(Clause::Ensures),
        "invariant" | "invariant_except_break" | "invariant_ensures" => Some(Clause::Invariant),
        "decreases" | "via" => Some(Clause::Decreases),
        _ => None,
    }
}

/// Statement heads that begin proof-mode content inside a body.
fn is_assert_like(word: &str) -> bool {
    matches!(
        word,
        "assert"
            | "assume"
            | "assert_by"
            | "assert_by_contradiction"
            | "assert_forall_by"
            | "assert_seqs_equal"
            | "assert_maps_equal"
            | "assert_sets_equal"
            | "assert_bitvector_by"
            | "calc"
            | "reveal"
            | "reveal_with_fuel"
            | "hide"
    )
}

/// Operators after which a `{` at depth zero still belongs to the clause
/// expression rather than opening the function or loop body.
fn continues_expression(prev: Option<&PrevTok>) -> bool {
    match prev {
        None => false,
        Some(PrevTok::ClauseKeyword) => true,
        Some(PrevTok::Operator) => true,
        Some(PrevTok::Other) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PrevTok {
    ClauseKeyword,
    Operator,
    Other,
}

#[derive(Debug, Clone, Copy)]
struct Region {
    span: Span,
    kind: RegionKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RegionKind {
    Signature,
    Clause(Clause),
    Body,
    ProofBlock,
    AssertStmt,
    GhostDecl,
}

/// Classifies every line of the unit in place. Idempotent.
pub fn classify_function(unit: &mut FunctionUnit) -> Result<()> {
    let text = unit.text();
    let regions = scan_regions(&text, &unit.id.0)?;
    let lexed = lex::lex(&text);
    let starts = lex::line_starts(&text);

    // First significant token per line.
    let mut first_token_offset: Vec<Option<usize>> = vec![None; unit.lines.len()];
    for tok in &lexed.tokens {
        let line = tok.line;
        if line < first_token_offset.len() && first_token_offset[line].is_none() {
            first_token_offset[line] = Some(tok.start);
        }
    }

    for (i, line) in unit.lines.iter_mut().enumerate() {
        let line_start = starts.get(i).copied().unwrap_or(0);
        let (region_mode, region_clause) = match first_token_offset[i] {
            Some(offset) => region_at(&regions, offset, unit.fn_mode),
            None => {
                // Blank or comment-only: inherit from the region active at
                // the line start (the nearest region containing or
                // preceding this offset).
                region_at(&regions, line_start, unit.fn_mode)
            }
        };
        let trimmed = line.text.trim();
        if first_token_offset[i].is_none() {
            line.clause = if trimmed.is_empty() {
                Clause::Blank
            } else {
                Clause::Comment
            };
        } else {
            line.clause = region_clause;
        }
        line.mode = region_mode;
    }
    Ok(())
}

/// Members of the (mode, clause) pair for the region covering `offset`.
fn region_at(regions: &[Region], offset: usize, fn_mode: CodeMode) -> (CodeMode, Clause) {
    let mut current: Option<&Region> = None;
    for r in regions {
        if r.span.contains(offset) {
            current = Some(r);
            break;
        }
        if r.span.start > offset {
            break;
        }
        current = Some(r);
    }
    let kind = current.map(|r| r.kind).unwrap_or(RegionKind::Signature);
    match kind {
        RegionKind::Signature => (fn_mode, Clause::Signature),
        RegionKind::Clause(c) => (CodeMode::Spec, c),
        RegionKind::Body => (fn_mode, Clause::Body),
        RegionKind::ProofBlock => (CodeMode::Proof, Clause::ProofBlock),
        RegionKind::AssertStmt => (CodeMode::Proof, Clause::AssertLike),
        RegionKind::GhostDecl => (CodeMode::Proof, Clause::GhostDecl),
    }
}

/// Scans the function text into an ordered, non-overlapping region list.
fn scan_regions(text: &str, context: &str) -> Result<Vec<Region>> {
    let lexed = lex::lex(text);
    let toks = &lexed.tokens;
    let mut regions: Vec<Region> = Vec::new();
    let mut i = 0usize;

    // Skip to the `fn` keyword; everything before is signature territory.
    let mut fn_idx = None;
    while i < toks.len() {
        if !toks[i].in_attribute && lexed.ident_at(i, text) == Some("fn") {
            fn_idx = Some(i);
            break;
        }
        i += 1;
    }
    let fn_idx = fn_idx.ok_or_else(|| Error::MalformedCandidate(context.to_string()))?;

    // Skip past the parameter list.
    let mut j = fn_idx + 1;
    while j < toks.len() && toks[j].kind != TokenKind::Punct('(') {
        j += 1;
    }
    let mut depth = 0i32;
    while j < toks.len() {
        match toks[j].kind {
            TokenKind::Punct('(') => depth += 1,
            TokenKind::Punct(')') => {
                depth -= 1;
                if depth == 0 {
                    break;
                }
            }
            _ => {}
        }
        j += 1;
    }
    let sig_start = 0usize;
    let mut cursor = j + 1;

    // Return type / where clause, then clause regions, then the body.
    let mut sig_end = text.len();
    let mut clause_open: Option<(Clause, usize)> = None;
    let mut prev = PrevTok::Other;
    let mut depth = 0i32;
    let mut body_open: Option<usize> = None;

    while cursor < toks.len() {
        let tok = &toks[cursor];
        if tok.in_attribute {
            cursor += 1;
            continue;
        }
        match tok.kind {
            TokenKind::Ident => {
                let word = &text[tok.start..tok.end];
                if depth == 0 {
                    if let Some(kind) = clause_kind(word) {
                        if let Some((open_kind, open_at)) = clause_open.take() {
                            regions.push(Region {
                                span: Span::new(open_at, tok.start),
                                kind: RegionKind::Clause(open_kind),
                            });
                        } else {
                            sig_end = tok.start;
                        }
                        clause_open = Some((kind, tok.start));
                        prev = PrevTok::ClauseKeyword;
                        cursor += 1;
                        continue;
                    }
                }
                prev = PrevTok::Other;
            }
            TokenKind::Literal => prev = PrevTok::Other,
            TokenKind::Punct(c) => match c {
                '(' | '[' => {
                    depth += 1;
                    prev = PrevTok::Operator;
                }
                ')' | ']' => {
                    depth -= 1;
                    prev = PrevTok::Other;
                }
                '{' => {
                    if depth == 0 && !continues_expression(Some(&prev)) {
                        // Function body begins here.
                        if let Some((open_kind, open_at)) = clause_open.take() {
                            regions.push(Region {
                                span: Span::new(open_at, tok.start),
                                kind: RegionKind::Clause(open_kind),
                            });
                        } else {
                            sig_end = sig_end.min(tok.start);
                        }
                        body_open = Some(cursor);
                        break;
                    }
                    depth += 1;
                    prev = PrevTok::Operator;
                }
                '}' => {
                    depth -= 1;
                    prev = PrevTok::Other;
                }
                ';' => {
                    if depth == 0 {
                        // Declaration-only item: no body.
                        if let Some((open_kind, open_at)) = clause_open.take() {
                            regions.push(Region {
                                span: Span::new(open_at, tok.start),
                                kind: RegionKind::Clause(open_kind),
                            });
                        } else {
                            sig_end = sig_end.min(tok.start);
                        }
                        body_open = None;
                        break;
                    }
                    prev = PrevTok::Other;
                }
                ',' => prev = PrevTok::Other,
                // `>` closes generics far more often than it compares
                // (`-> Vec<u64> {`), so it never blocks a body brace.
                '>' => prev = PrevTok::Other,
                _ => prev = PrevTok::Operator,
            },
        }
        cursor += 1;
    }

    if let Some((open_kind, open_at)) = clause_open {
        let line = lex::line_of(&lex::line_starts(text), open_at) + 1;
        let _ = open_kind;
        return Err(Error::UnterminatedClause {
            context: context.to_string(),
            what: "clause".to_string(),
            line,
        });
    }

    let mut ordered = vec![Region {
        span: Span::new(sig_start, sig_end),
        kind: RegionKind::Signature,
    }];
    ordered.extend(regions);

    if let Some(body_idx) = body_open {
        let body_regions = scan_body(text, toks, body_idx, context)?;
        ordered.extend(body_regions);
    }
    ordered.sort_by_key(|r| r.span.start);
    Ok(ordered)
}

/// Scans the body (from its opening brace token) into Body, ProofBlock,
/// AssertStmt, GhostDecl, and loop-clause regions.
fn scan_body(
    text: &str,
    toks: &[lex::Token],
    body_open_idx: usize,
    context: &str,
) -> Result<Vec<Region>> {
    let mut regions = Vec::new();
    let body_start = toks[body_open_idx].start;
    let mut depth = 0i32;
    let mut i = body_open_idx;
    let mut segment_start = body_start;
    let mut in_loop_header = false;
    let mut prev = PrevTok::Other;
    let line_table = lex::line_starts(text);

    macro_rules! close_body_segment {
        ($end:expr) => {
            if $end > segment_start {
                regions.push(Region {
                    span: Span::new(segment_start, $end),
                    kind: RegionKind::Body,
                });
            }
        };
    }

    while i < toks.len() {
        let tok = &toks[i];
        if tok.in_attribute {
            i += 1;
            continue;
        }
        match tok.kind {
            TokenKind::Punct('{') => {
                depth += 1;
                prev = PrevTok::Other;
                in_loop_header = false;
            }
            TokenKind::Punct('}') => {
                depth -= 1;
                prev = PrevTok::Other;
                if depth == 0 {
                    close_body_segment!(tok.end);
                    return Ok(regions);
                }
            }
            // Only `.name(` and `::name(` forms disqualify a statement
            // head; block and statement boundaries reset it.
            TokenKind::Punct('.') | TokenKind::Punct(':') => prev = PrevTok::Operator,
            TokenKind::Punct(_) => prev = PrevTok::Other,
            TokenKind::Literal => prev = PrevTok::Other,
            TokenKind::Ident => {
                let word = &text[tok.start..tok.end];
                match word {
                    "while" | "loop" | "for" => {
                        in_loop_header = true;
                        prev = PrevTok::Other;
                    }
                    "proof" if next_significant_is(toks, i + 1, '{') => {
                        close_body_segment!(tok.start);
                        let end_idx = match_brace(toks, i + 1)?;
                        regions.push(Region {
                            span: Span::new(tok.start, toks[end_idx].end),
                            kind: RegionKind::ProofBlock,
                        });
                        i = end_idx + 1;
                        segment_start = toks.get(i).map(|t| t.start).unwrap_or(text.len());
                        prev = PrevTok::Other;
                        continue;
                    }
                    w if in_loop_header && clause_kind(w).is_some() => {
                        let kind = clause_kind(w).unwrap();
                        close_body_segment!(tok.start);
                        let (end_offset, next_i) =
                            scan_loop_clause(text, toks, i, kind, &mut regions)?;
                        i = next_i;
                        segment_start = end_offset;
                        prev = PrevTok::Other;
                        // Still in the header until the loop body brace,
                        // which scan_loop_clause stops in front of.
                        continue;
                    }
                    w if is_assert_like(w) && statement_position(&prev) => {
                        close_body_segment!(tok.start);
                        let (end_offset, next_i) = scan_statement(text, toks, i, context)?;
                        regions.push(Region {
                            span: Span::new(tok.start, end_offset),
                            kind: RegionKind::AssertStmt,
                        });
                        i = next_i;
                        segment_start = end_offset;
                        prev = PrevTok::Other;
                        continue;
                    }
                    "let" if is_ghost_let(toks, text, i) => {
                        close_body_segment!(tok.start);
                        let (end_offset, next_i) = scan_statement(text, toks, i, context)?;
                        regions.push(Region {
                            span: Span::new(tok.start, end_offset),
                            kind: RegionKind::GhostDecl,
                        });
                        i = next_i;
                        segment_start = end_offset;
                        prev = PrevTok::Other;
                        continue;
                    }
                    _ => prev = PrevTok::Other,
                }
            }
        }
        i += 1;
    }

    let last_line = line_table.len();
    Err(Error::UnterminatedClause {
        context: context.to_string(),
        what: "block".to_string(),
        line: last_line,
    })
}

/// Scans a loop-header clause run starting at the clause keyword. Emits one
/// region per clause kind and stops in front of the loop-body brace.
/// Returns (end offset of the clause run, token index of the brace).
fn scan_loop_clause(
    text: &str,
    toks: &[lex::Token],
    start_idx: usize,
    first_kind: Clause,
    regions: &mut Vec<Region>,
) -> Result<(usize, usize)> {
    let mut kind = first_kind;
    let mut open_at = toks[start_idx].start;
    let mut depth = 0i32;
    let mut prev = PrevTok::ClauseKeyword;
    let mut i = start_idx + 1;
    while i < toks.len() {
        let tok = &toks[i];
        if tok.in_attribute {
            i += 1;
            continue;
        }
        match tok.kind {
            TokenKind::Ident => {
                let word = &text[tok.start..tok.end];
                if depth == 0 {
                    if let Some(next_kind) = clause_kind(word) {
                        regions.push(Region {
                            span: Span::new(open_at, tok.start),
                            kind: RegionKind::Clause(kind),
                        });
                        kind = next_kind;
                        open_at = tok.start;
                        prev = PrevTok::ClauseKeyword;
                        i += 1;
                        continue;
                    }
                }
                prev = PrevTok::Other;
            }
            TokenKind::Literal => prev = PrevTok::Other,
            TokenKind::Punct(c) => match c {
                '(' | '[' => {
                    depth += 1;
                    prev = PrevTok::Operator;
                }
                ')' | ']' => {
                    depth -= 1;
                    prev = PrevTok::Other;
                }
                '{' => {
                    if depth == 0 && !continues_expression(Some(&prev)) {
                        regions.push(Region {
                            span: Span::new(open_at, tok.start),
                            kind: RegionKind::Clause(kind),
                        });
                        return Ok((tok.start, i));
                    }
                    depth += 1;
                    prev = PrevTok::Operator;
                }
                '}' => {
                    depth -= 1;
                    prev = PrevTok::Other;
                }
                ',' => prev = PrevTok::Other,
                ';' => prev = PrevTok::Other,
                '>' => prev = PrevTok::Other,
                _ => prev = PrevTok::Operator,
            },
        }
        i += 1;
    }
    let line = lex::line_of(&lex::line_starts(text), open_at) + 1;
    Err(Error::UnterminatedClause {
        context: "loop clause".to_string(),
        what: "clause".to_string(),
        line,
    })
}

/// Scans a statement from its head token to the terminating `;` at the
/// statement's own depth (macro bodies and `by { .. }` blocks included),
/// or to just before the `}` that would close the enclosing block.
fn scan_statement(
    text: &str,
    toks: &[lex::Token],
    start_idx: usize,
    context: &str,
) -> Result<(usize, usize)> {
    let mut depth = 0i32;
    let mut i = start_idx;
    while i < toks.len() {
        match toks[i].kind {
            TokenKind::Punct('(') | TokenKind::Punct('[') | TokenKind::Punct('{') => depth += 1,
            TokenKind::Punct(')') | TokenKind::Punct(']') => depth -= 1,
            TokenKind::Punct('}') => {
                depth -= 1;
                if depth < 0 {
                    // Tail expression: stop before the closing brace.
                    return Ok((toks[i].start, i));
                }
            }
            TokenKind::Punct(';') => {
                if depth == 0 {
                    return Ok((toks[i].end, i + 1));
                }
            }
            _ => {}
        }
        i += 1;
    }
    let line = lex::line_of(&lex::line_starts(text), toks[start_idx].start) + 1;
    Err(Error::UnterminatedClause {
        context: context.to_string(),
        what: "statement".to_string(),
        line,
    })
}

fn next_significant_is(toks: &[lex::Token], mut i: usize, c: char) -> bool {
    while i < toks.len() {
        if toks[i].in_attribute {
            i += 1;
            continue;
        }
        return toks[i].kind == TokenKind::Punct(c);
    }
    false
}

fn match_brace(toks: &[lex::Token], mut i: usize) -> Result<usize> {
    while i < toks.len() && toks[i].kind != TokenKind::Punct('{') {
        i += 1;
    }
    let mut depth = 0i32;
    while i < toks.len() {
        match toks[i].kind {
            TokenKind::Punct('{') => depth += 1,
            TokenKind::Punct('}') => {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    Err(Error::UnterminatedClause {
        context: "proof block".to_string(),
        what: "block".to_string(),
        line: toks.last().map(|t| t.line + 1).unwrap_or(0),
    })
}

/// A statement head must not be a method or path segment (`.assert`,
/// `foo::assert`) — those are calls on other items, not proof statements.
fn statement_position(prev: &PrevTok) -> bool {
    !matches!(prev, PrevTok::Operator)
}

fn is_ghost_let(toks: &[lex::Token], text: &str, let_idx: usize) -> bool {
    let mut i = let_idx + 1;
    while i < toks.len() && toks[i].in_attribute {
        i += 1;
    }
    match toks.get(i) {
        Some(t) if t.kind == TokenKind::Ident => {
            matches!(&text[t.start..t.end], "ghost" | "tracked")
        }
        _ => false,
    }
}

/// Number of proof-mode lines, comment-only and blank lines excluded.
pub fn count_proof_lines(unit: &FunctionUnit) -> Result<usize> {
    if unit.lines.iter().any(|l| l.mode == CodeMode::Unclassified) {
        return Err(Error::Unclassified(unit.id.0.clone()));
    }
    Ok(unit
        .lines
        .iter()
        .filter(|l| l.mode == CodeMode::Proof && !l.is_trivia())
        .count())
}

/// Per-line classification dump: `line_index<TAB>mode<TAB>clause<TAB>text`.
pub fn classification_tsv(unit: &FunctionUnit) -> String {
    let mut out = String::new();
    for line in &unit.lines {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            line.index, line.mode, line.clause, line.text
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_root;
    use crate::source::{load_snapshot, FunctionId, RepoSnapshot};

    fn classified_mini() -> RepoSnapshot {
        let mut snap = load_snapshot(&fixture_root("mini_repo"), &[]).unwrap();
        for file in &mut snap.files {
            for unit in &mut file.functions {
                classify_function(unit).unwrap();
            }
        }
        snap
    }

    fn unit<'a>(snap: &'a RepoSnapshot, file: &str, ctor: Option<&str>, name: &str) -> &'a crate::source::FunctionUnit {
        snap.function(&FunctionId::new(file, ctor, name)).unwrap()
    }

    /// The annotated `get` listing: 1-based listing lines 3-10 are spec
    /// (requires/ensures), 14-22 proof (the proof block), and 1-2, 11-13,
    /// 23-25 exec.
    #[test]
    fn delegation_get_coloring() {
        let snap = classified_mini();
        let get = unit(&snap, "src/delegation.rs", Some("DelegationMap"), "get");
        assert_eq!(get.lines.len(), 25);
        let mode_at = |listing_line: usize| get.lines[listing_line - 1].mode;
        for l in 3..=10 {
            assert_eq!(mode_at(l), CodeMode::Spec, "listing line {l}");
        }
        for l in 14..=22 {
            assert_eq!(mode_at(l), CodeMode::Proof, "listing line {l}");
        }
        for l in [1, 2, 11, 12, 13, 23, 24, 25] {
            assert_eq!(mode_at(l), CodeMode::Exec, "listing line {l}");
        }
        assert_eq!(count_proof_lines(get).unwrap(), 9);
    }

    #[test]
    fn sum_to_matches_hand_labelled_golden() {
        let snap = classified_mini();
        let sum_to = unit(&snap, "src/arith.rs", None, "sum_to");
        let got = classification_tsv(sum_to);
        let want = std::fs::read_to_string(fixture_root("mini_repo").parent().unwrap().join("golden/sum_to.tsv")).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn unannotated_exec_fn_has_zero_proof_lines() {
        let snap = classified_mini();
        let read_flag = unit(&snap, "src/locked.rs", Some("Registry"), "read_flag");
        assert_eq!(count_proof_lines(read_flag).unwrap(), 0);
        assert!(read_flag.lines.iter().all(|l| l.mode != CodeMode::Proof));
    }

    #[test]
    fn empty_body_function_classifies() {
        let mut unit = crate::source::parse_function_text("fn f() {}").unwrap();
        classify_function(&mut unit).unwrap();
        assert_eq!(unit.lines.len(), 1);
        assert_eq!(count_proof_lines(&unit).unwrap(), 0);
    }

    #[test]
    fn exhaustiveness_and_coherence_over_corpus() {
        let snap = classified_mini();
        for u in snap.functions() {
            let mut spec = 0;
            let mut proof = 0;
            let mut exec = 0;
            let mut trivia = 0;
            for line in &u.lines {
                assert_ne!(line.mode, CodeMode::Unclassified, "{}", u.id);
                if line.is_trivia() {
                    trivia += 1;
                } else {
                    match line.mode {
                        CodeMode::Spec => spec += 1,
                        CodeMode::Proof => proof += 1,
                        CodeMode::Exec => exec += 1,
                        CodeMode::Unclassified => unreachable!(),
                    }
                }
                // Clause-mode coherence.
                match line.clause {
                    Clause::Requires | Clause::Ensures | Clause::Invariant | Clause::Decreases => {
                        assert_eq!(line.mode, CodeMode::Spec, "{} line {}", u.id, line.index)
                    }
                    Clause::AssertLike | Clause::ProofBlock | Clause::GhostDecl => {
                        assert_eq!(line.mode, CodeMode::Proof, "{} line {}", u.id, line.index)
                    }
                    Clause::Body if u.fn_mode == CodeMode::Exec => {
                        assert_eq!(line.mode, CodeMode::Exec, "{} line {}", u.id, line.index)
                    }
                    _ => {}
                }
            }
            assert_eq!(spec + proof + exec + trivia, u.lines.len(), "{}", u.id);
        }
    }

    #[test]
    fn classification_is_idempotent() {
        let snap = classified_mini();
        for u in snap.functions() {
            let mut again = u.clone();
            classify_function(&mut again).unwrap();
            assert_eq!(&again.lines, &u.lines, "{}", u.id);
        }
    }

    #[test]
    fn mode_nesting_inside_ghost_functions() {
        let snap = classified_mini();
        for u in snap.functions() {
            if u.fn_mode == CodeMode::Spec || u.fn_mode == CodeMode::Proof {
                for line in &u.lines {
                    assert_ne!(line.mode, CodeMode::Exec, "{} line {}", u.id, line.index);
                }
            }
        }
    }

    #[test]
    fn ghost_let_is_proof_mode() {
        let mut unit = crate::source::parse_function_text(
            "fn f(x: u64) -> (r: u64)\n    ensures r == x,\n{\n    let ghost snapshot = x;\n    x\n}",
        )
        .unwrap();
        classify_function(&mut unit).unwrap();
        let ghost_line = &unit.lines[3];
        assert_eq!(ghost_line.clause, Clause::GhostDecl);
        assert_eq!(ghost_line.mode, CodeMode::Proof);
        // `Ghost(...)` wrapper expressions in exec position remain exec.
        let snap = classified_mini();
        let get = snap
            .function(&FunctionId::new("src/delegation.rs", Some("DelegationMap"), "get"))
            .unwrap();
        let wrapper = get.lines.iter().find(|l| l.text.contains("(id, Ghost(glb))")).unwrap();
        assert_eq!(wrapper.mode, CodeMode::Exec);
    }

    #[test]
    fn unterminated_clause_is_an_error() {
        // A clause with no terminating body or semicolon fails at the
        // item scan with a line-numbered error.
        let err = crate::source::parse_function_text("fn f()\n    requires\n        a < b");
        assert!(err.is_err());
        // A proof block that never closes is caught during classification
        // of an otherwise well-formed unit.
        let mut unit = crate::source::FunctionUnit {
            id: crate::source::FunctionId::new("x.rs", None, "f"),
            name: "f".into(),
            construct_path: None,
            signature_text: "fn f()".into(),
            fn_mode: CodeMode::Exec,
            lines: crate::source::split_lines_for_tests("fn f() {\n    proof {\n}"),
            span: crate::lex::Span::new(0, 20),
        };
        assert!(classify_function(&mut unit).is_err());
    }

    #[test]
    fn count_requires_classification() {
        let snap = load_snapshot(&fixture_root("mini_repo"), &[]).unwrap();
        let raw = snap
            .function(&FunctionId::new("src/arith.rs", None, "sum_to"))
            .unwrap();
        assert!(count_proof_lines(raw).is_err());
    }

    #[test]
    fn tsv_shape() {
        let snap = classified_mini();
        let u = unit(&snap, "src/arith.rs", None, "clamp_add");
        let tsv = classification_tsv(u);
        let first = tsv.lines().next().unwrap();
        let cols: Vec<&str> = first.split('\t').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0], "0");
        assert_eq!(cols[1], "exec");
        assert_eq!(cols[2], "signature");
    }
}

//! Repository snapshots: file discovery, `verus!` region extraction, and
//! item scanning for type constructs and function units.
//!
//! Only `fn` items inside `verus!` regions become function units; free
//! Rust functions outside the regions are plain text to every later
//! stage. Constructs (struct / enum / trait / macro / type alias) are
//! scanned in the whole file since verified code regularly references
//! plain Rust types. Macros other than `verus!` stay opaque.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::lex::{self, Span, Token, TokenKind};
use crate::modes::{Clause, CodeLine, CodeMode};

pub const DEFAULT_INCLUDE_GLOBS: &[&str] = &["**/*.rs"];
/// Test and build-script files never produce tasks.
pub const DEFAULT_EXCLUDE_GLOBS: &[&str] = &["**/tests/**", "**/benches/**", "**/build.rs"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionId(pub String);

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FunctionId {
    pub fn new(file: &str, construct_path: Option<&str>, name: &str) -> Self {
        match construct_path {
            Some(c) => FunctionId(format!("{file}::{c}::{name}")),
            None => FunctionId(format!("{file}::{name}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructKind {
    StructLike,
    EnumLike,
    TraitLike,
    Macro,
    TypeAlias,
}

impl fmt::Display for ConstructKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstructKind::StructLike => "struct-like",
            ConstructKind::EnumLike => "enum-like",
            ConstructKind::TraitLike => "trait-like",
            ConstructKind::Macro => "macro",
            ConstructKind::TypeAlias => "type-alias",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructDef {
    pub kind: ConstructKind,
    pub name: String,
    pub file: String,
    pub span: Span,
    pub field_names: Vec<String>,
}

impl ConstructDef {
    pub fn id(&self) -> String {
        format!("{}::{}", self.file, self.name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub id: FunctionId,
    pub name: String,
    /// Enclosing impl or trait name, when any.
    pub construct_path: Option<String>,
    pub signature_text: String,
    pub fn_mode: CodeMode,
    pub lines: Vec<CodeLine>,
    pub span: Span,
}

impl FunctionUnit {
    /// Reassembles the unit text; byte-identical to the source span.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, line) in self.lines.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&line.text);
        }
        out
    }

    pub fn is_classified(&self) -> bool {
        self.lines.iter().all(|l| l.mode != CodeMode::Unclassified)
    }
}

/// One parsed `use` statement path; braced lists are expanded into
/// one entry per leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsePath {
    pub segments: Vec<String>,
    pub glob: bool,
    pub reexport: bool,
}

/// `impl TraitName for TypeName` link, used for hierarchy-aware lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitImpl {
    pub type_name: String,
    pub trait_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceFile {
    pub relative_path: String,
    pub content: String,
    pub verus_regions: Vec<Span>,
    pub constructs: Vec<ConstructDef>,
    pub functions: Vec<FunctionUnit>,
    #[serde(default)]
    pub use_paths: Vec<UsePath>,
    #[serde(default)]
    pub trait_impls: Vec<TraitImpl>,
}

impl SourceFile {
    pub fn function_ids(&self) -> impl Iterator<Item = &FunctionId> {
        self.functions.iter().map(|f| &f.id)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub root_path: PathBuf,
    pub files: Vec<SourceFile>,
    pub fingerprint: String,
    /// Non-fatal problems encountered during loading (skipped files).
    pub warnings: Vec<String>,
}

impl RepoSnapshot {
    pub fn function(&self, id: &FunctionId) -> Option<&FunctionUnit> {
        self.files
            .iter()
            .flat_map(|f| f.functions.iter())
            .find(|u| &u.id == id)
    }

    pub fn function_mut(&mut self, id: &FunctionId) -> Option<&mut FunctionUnit> {
        self.files
            .iter_mut()
            .flat_map(|f| f.functions.iter_mut())
            .find(|u| &u.id == id)
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionUnit> {
        self.files.iter().flat_map(|f| f.functions.iter())
    }

    pub fn constructs(&self) -> impl Iterator<Item = &ConstructDef> {
        self.files.iter().flat_map(|f| f.constructs.iter())
    }

    pub fn file(&self, relative_path: &str) -> Option<&SourceFile> {
        self.files.iter().find(|f| f.relative_path == relative_path)
    }

    pub fn file_of_function(&self, id: &FunctionId) -> Option<&SourceFile> {
        self.files
            .iter()
            .find(|f| f.functions.iter().any(|u| &u.id == id))
    }
}

/// Content fingerprint over (path, bytes) pairs in lexicographic path order.
pub fn fingerprint_files<'a>(files: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    let mut hasher = Sha256::new();
    for (path, content) in files {
        hasher.update(path.as_bytes());
        hasher.update([0u8]);
        hasher.update(content.as_bytes());
        hasher.update([0u8]);
    }
    hex(&hasher.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn build_globset(patterns: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| Error::InvalidGlob {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| Error::InvalidGlob {
        pattern: patterns.join(","),
        message: e.to_string(),
    })
}

/// Loads a snapshot with the default exclude globs.
pub fn load_snapshot(root: &Path, include_globs: &[String]) -> Result<RepoSnapshot> {
    let excludes: Vec<String> = DEFAULT_EXCLUDE_GLOBS.iter().map(|s| s.to_string()).collect();
    load_snapshot_with(root, include_globs, &excludes)
}

pub fn load_snapshot_with(
    root: &Path,
    include_globs: &[String],
    exclude_globs: &[String],
) -> Result<RepoSnapshot> {
    let includes: Vec<String> = if include_globs.is_empty() {
        DEFAULT_INCLUDE_GLOBS.iter().map(|s| s.to_string()).collect()
    } else {
        include_globs.to_vec()
    };
    let include_set = build_globset(&includes)?;
    let exclude_set = build_globset(exclude_globs)?;

    if !root.exists() {
        return Err(Error::UnreadablePath {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
        });
    }

    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::UnreadablePath {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .to_path_buf();
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        if include_set.is_match(&rel_str) && !exclude_set.is_match(&rel_str) {
            paths.push(rel);
        }
    }
    paths.sort_by(|a, b| a.to_string_lossy().cmp(&b.to_string_lossy()));

    let mut warnings = Vec::new();
    let mut contents: Vec<(String, String)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for rel in &paths {
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        if !seen.insert(rel_str.clone()) {
            return Err(Error::DuplicateRelativePath(rel_str));
        }
        let abs = root.join(rel);
        let bytes = std::fs::read(&abs).map_err(|e| Error::UnreadablePath {
            path: abs.clone(),
            source: e,
        })?;
        match String::from_utf8(bytes) {
            Ok(text) => contents.push((rel_str, text)),
            Err(_) => {
                let msg = format!("skipped non-UTF-8 file: {rel_str}");
                eprintln!("warning: {msg}");
                warnings.push(msg);
            }
        }
    }

    // A snapshot of an empty directory is valid; a glob set that matches
    // nothing in a non-empty candidate list is an error.
    if contents.is_empty() && !paths.is_empty() {
        return Err(Error::NoMatchingFiles {
            root: root.to_path_buf(),
        });
    }

    let fingerprint = fingerprint_files(contents.iter().map(|(p, c)| (p.as_str(), c.as_str())));

    let files: Result<Vec<SourceFile>> = contents
        .par_iter()
        .map(|(rel, content)| parse_file(rel, content))
        .collect();
    let files = files?;

    let snapshot = RepoSnapshot {
        root_path: root.to_path_buf(),
        files,
        fingerprint,
        warnings,
    };
    assert_snapshot_invariants(&snapshot)?;
    Ok(snapshot)
}

/// Construct (file, name, kind) uniqueness and function-id uniqueness.
fn assert_snapshot_invariants(snapshot: &RepoSnapshot) -> Result<()> {
    let mut constructs = std::collections::BTreeSet::new();
    for c in snapshot.constructs() {
        let key = (c.file.clone(), c.name.clone(), c.kind);
        if !constructs.insert(key) {
            return Err(Error::DuplicateRelativePath(format!(
                "duplicate construct {} {} in {}",
                c.kind, c.name, c.file
            )));
        }
    }
    let mut fns = std::collections::BTreeSet::new();
    for u in snapshot.functions() {
        if !fns.insert(u.id.clone()) {
            return Err(Error::DuplicateRelativePath(format!(
                "duplicate function id {}",
                u.id
            )));
        }
    }
    Ok(())
}

/// Extracts the body spans of `verus! { ... }` macro invocations.
/// Spans cover the region between the braces, excluding the braces.
pub fn extract_verus_regions(relative_path: &str, content: &str) -> Result<Vec<Span>> {
    let lexed = lex::lex(content);
    let toks = &lexed.tokens;
    let mut regions = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i].kind == TokenKind::Ident
            && !toks[i].in_attribute
            && &content[toks[i].start..toks[i].end] == "verus"
            && matches!(toks.get(i + 1).map(|t| t.kind), Some(TokenKind::Punct('!')))
            && matches!(toks.get(i + 2).map(|t| t.kind), Some(TokenKind::Punct('{')))
        {
            let open = i + 2;
            let mut depth = 0i32;
            let mut j = open;
            let mut close = None;
            while j < toks.len() {
                match toks[j].kind {
                    TokenKind::Punct('{') => depth += 1,
                    TokenKind::Punct('}') => {
                        depth -= 1;
                        if depth == 0 {
                            close = Some(j);
                            break;
                        }
                    }
                    _ => {}
                }
                j += 1;
            }
            match close {
                Some(j) => {
                    regions.push(Span::new(toks[open].end, toks[j].start));
                    i = j + 1;
                    continue;
                }
                None => {
                    return Err(Error::UnbalancedBraces {
                        file: relative_path.to_string(),
                        line: toks[open].line + 1,
                    });
                }
            }
        }
        i += 1;
    }
    Ok(regions)
}

/// Parses one file into regions, constructs, and (unclassified) functions.
pub fn parse_file(relative_path: &str, content: &str) -> Result<SourceFile> {
    let verus_regions = extract_verus_regions(relative_path, content)?;
    let lexed = lex::lex(content);
    let mut scanner = ItemScanner {
        src: content,
        file: relative_path,
        toks: &lexed.tokens,
        line_starts: lex::line_starts(content),
        comment_spans: &lexed.comment_spans,
        regions: &verus_regions,
        constructs: Vec::new(),
        functions: Vec::new(),
        use_paths: Vec::new(),
        trait_impls: Vec::new(),
    };
    scanner.run()?;
    let ItemScanner {
        constructs,
        functions,
        use_paths,
        trait_impls,
        ..
    } = scanner;
    Ok(SourceFile {
        relative_path: relative_path.to_string(),
        content: content.to_string(),
        verus_regions,
        constructs,
        functions,
        use_paths,
        trait_impls,
    })
}

/// Scans free text for fn items, treating the whole text as one region.
pub fn scan_functions_text(text: &str) -> Result<Vec<FunctionUnit>> {
    let lexed = lex::lex(text);
    let mut scanner = ItemScanner {
        src: text,
        file: "<candidate>",
        toks: &lexed.tokens,
        line_starts: lex::line_starts(text),
        comment_spans: &lexed.comment_spans,
        regions: &[Span::new(0, text.len())],
        constructs: Vec::new(),
        functions: Vec::new(),
        use_paths: Vec::new(),
        trait_impls: Vec::new(),
    };
    scanner.run()?;
    Ok(scanner.functions)
}

/// Parses a candidate answer as exactly one function item.
pub fn parse_function_text(text: &str) -> Result<FunctionUnit> {
    let lexed = lex::lex(text);
    let mut scanner = ItemScanner {
        src: text,
        file: "<candidate>",
        toks: &lexed.tokens,
        line_starts: lex::line_starts(text),
        comment_spans: &lexed.comment_spans,
        regions: &[Span::new(0, text.len())],
        constructs: Vec::new(),
        functions: Vec::new(),
        use_paths: Vec::new(),
        trait_impls: Vec::new(),
    };
    scanner.run()?;
    if scanner.functions.len() != 1 {
        return Err(Error::MalformedCandidate(format!(
            "expected 1 function item, found {}",
            scanner.functions.len()
        )));
    }
    let mut unit = scanner.functions.pop().unwrap();
    // A candidate is its own universe: normalize the span to the text.
    unit.span = Span::new(0, text.len());
    unit.lines = split_lines(text);
    Ok(unit)
}

#[cfg(test)]
pub fn split_lines_for_tests(text: &str) -> Vec<CodeLine> {
    split_lines(text)
}

pub(crate) fn split_lines(text: &str) -> Vec<CodeLine> {
    text.split('\n')
        .enumerate()
        .map(|(i, t)| CodeLine {
            index: i,
            text: t.to_string(),
            mode: CodeMode::Unclassified,
            clause: if t.trim().is_empty() {
                Clause::Blank
            } else if t.trim_start().starts_with("//") {
                Clause::Comment
            } else {
                Clause::Body
            },
        })
        .collect()
}

const MODIFIERS: &[&str] = &[
    "pub", "open", "closed", "uninterp", "const", "unsafe", "async", "default", "broadcast",
    "tracked", "external", "spec", "proof", "exec",
];

struct ItemScanner<'a> {
    src: &'a str,
    file: &'a str,
    toks: &'a [Token],
    line_starts: Vec<usize>,
    comment_spans: &'a [Span],
    regions: &'a [Span],
    constructs: Vec<ConstructDef>,
    functions: Vec<FunctionUnit>,
    use_paths: Vec<UsePath>,
    trait_impls: Vec<TraitImpl>,
}

impl<'a> ItemScanner<'a> {
    fn in_region(&self, offset: usize) -> bool {
        self.regions.iter().any(|r| r.contains(offset))
    }

    fn word(&self, i: usize) -> Option<&'a str> {
        let t = self.toks.get(i)?;
        if t.kind == TokenKind::Ident {
            Some(&self.src[t.start..t.end])
        } else {
            None
        }
    }

    fn punct(&self, i: usize) -> Option<char> {
        match self.toks.get(i)?.kind {
            TokenKind::Punct(c) => Some(c),
            _ => None,
        }
    }

    fn run(&mut self) -> Result<()> {
        // Context stack of enclosing impl/trait names; None for mods and
        // other blocks that do not contribute a construct path.
        let mut ctx: Vec<(Option<String>, i32)> = Vec::new();
        let mut depth = 0i32;
        let mut i = 0usize;

        while i < self.toks.len() {
            let tok = &self.toks[i];
            if tok.in_attribute {
                i += 1;
                continue;
            }
            match tok.kind {
                TokenKind::Punct('{') => {
                    depth += 1;
                    i += 1;
                }
                TokenKind::Punct('}') => {
                    depth -= 1;
                    if let Some((_, d)) = ctx.last() {
                        if *d == depth + 1 {
                            ctx.pop();
                        }
                    }
                    i += 1;
                }
                TokenKind::Ident => {
                    let head_start = tok.start;
                    // Step over a modifier run (pub, open, spec, ...) to
                    // find the item keyword it qualifies.
                    let mut j = i;
                    while let Some(w) = self.word(j) {
                        if w != "fn" && MODIFIERS.contains(&w) {
                            j += 1;
                            if self.punct(j) == Some('(') {
                                while j < self.toks.len() && self.punct(j) != Some(')') {
                                    j += 1;
                                }
                                j += 1;
                            }
                        } else {
                            break;
                        }
                    }
                    match self.word(j) {
                        Some("fn") => {
                            let construct = ctx.iter().rev().find_map(|(n, _)| n.clone());
                            match self.scan_fn_item(i, construct)? {
                                Some(next) => i = next,
                                None => i += 1,
                            }
                        }
                        Some("impl") => {
                            let (name, trait_name, open_idx) = self.scan_impl_header(j);
                            if let (Some(ty), Some(tr)) = (&name, &trait_name) {
                                self.trait_impls.push(TraitImpl {
                                    type_name: ty.clone(),
                                    trait_name: tr.clone(),
                                });
                            }
                            match open_idx {
                                Some(k) => {
                                    depth += 1;
                                    ctx.push((name, depth));
                                    i = k + 1;
                                }
                                None => i = j + 1,
                            }
                        }
                        Some("trait") => {
                            let name = self.word(j + 1).map(|s| s.to_string());
                            match self.find_open_brace(j + 1) {
                                Some(k) => {
                                    if let Some(n) = name.clone() {
                                        self.push_construct(
                                            ConstructKind::TraitLike,
                                            n,
                                            head_start,
                                            self.match_brace_end(k)?,
                                            Vec::new(),
                                        );
                                    }
                                    depth += 1;
                                    ctx.push((name, depth));
                                    i = k + 1;
                                }
                                None => i = j + 1,
                            }
                        }
                        Some("mod") => match self.find_open_brace_or_semi(j + 1) {
                            Some((k, true)) => {
                                depth += 1;
                                ctx.push((None, depth));
                                i = k + 1;
                            }
                            Some((k, false)) => i = k + 1,
                            None => i = j + 1,
                        },
                        Some("struct") | Some("union") => {
                            i = self.scan_struct(j, head_start)?;
                        }
                        Some("enum") => {
                            i = self.scan_enum(j, head_start)?;
                        }
                        Some("macro_rules") => {
                            i = self.scan_macro_rules(j, head_start)?;
                        }
                        Some("type") => {
                            // Type aliases only at item level, not inside
                            // impl/trait bodies (associated types collide).
                            if ctx.iter().all(|(n, _)| n.is_none()) {
                                i = self.scan_type_alias(j, head_start)?;
                            } else {
                                i = self.skip_to_semi(j);
                            }
                        }
                        Some("use") => {
                            let reexport = j > i; // `pub use` and friends
                            i = self.scan_use(j, reexport);
                        }
                        Some("static") | Some("extern") => {
                            i = self.skip_to_semi(j);
                        }
                        _ => {
                            if j > i {
                                // A modifier run that qualifies a non-fn
                                // item (`pub const X: ...`): skip it whole.
                                i = self.skip_to_semi(j);
                            } else {
                                i += 1;
                            }
                        }
                    }
                }
                _ => i += 1,
            }
        }
        Ok(())
    }

    fn find_open_brace(&self, mut i: usize) -> Option<usize> {
        while i < self.toks.len() {
            match self.toks[i].kind {
                TokenKind::Punct('{') => return Some(i),
                TokenKind::Punct(';') => return None,
                _ => i += 1,
            }
        }
        None
    }

    fn find_open_brace_or_semi(&self, mut i: usize) -> Option<(usize, bool)> {
        while i < self.toks.len() {
            match self.toks[i].kind {
                TokenKind::Punct('{') => return Some((i, true)),
                TokenKind::Punct(';') => return Some((i, false)),
                _ => i += 1,
            }
        }
        None
    }

    fn match_brace_end(&self, open_idx: usize) -> Result<usize> {
        let mut depth = 0i32;
        let mut i = open_idx;
        while i < self.toks.len() {
            match self.toks[i].kind {
                TokenKind::Punct('{') => depth += 1,
                TokenKind::Punct('}') => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(self.toks[i].end);
                    }
                }
                _ => {}
            }
            i += 1;
        }
        Err(Error::UnbalancedBraces {
            file: self.file.to_string(),
            line: self.toks[open_idx].line + 1,
        })
    }

    fn match_brace_end_idx(&self, open_idx: usize) -> Result<usize> {
        let mut depth = 0i32;
        let mut i = open_idx;
        while i < self.toks.len() {
            match self.toks[i].kind {
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
        Err(Error::UnbalancedBraces {
            file: self.file.to_string(),
            line: self.toks[open_idx].line + 1,
        })
    }

    fn skip_to_semi(&self, mut i: usize) -> usize {
        let mut depth = 0i32;
        while i < self.toks.len() {
            match self.toks[i].kind {
                TokenKind::Punct('{') | TokenKind::Punct('(') | TokenKind::Punct('[') => depth += 1,
                TokenKind::Punct('}') | TokenKind::Punct(')') | TokenKind::Punct(']') => depth -= 1,
                TokenKind::Punct(';') if depth == 0 => return i + 1,
                _ => {}
            }
            i += 1;
        }
        i
    }

    /// `impl<G> Type`, `impl Trait for Type` — returns the self-type name,
    /// the trait name when present, and the body-brace token index.
    fn scan_impl_header(&self, impl_idx: usize) -> (Option<String>, Option<String>, Option<usize>) {
        let mut i = impl_idx + 1;
        let mut angle = 0i32;
        let mut last_ident: Option<String> = None;
        let mut after_for: Option<String> = None;
        let mut saw_for = false;
        while i < self.toks.len() {
            match self.toks[i].kind {
                TokenKind::Punct('<') => angle += 1,
                TokenKind::Punct('>') => angle -= 1,
                TokenKind::Punct('{') => {
                    return if saw_for {
                        (after_for.clone(), last_ident.clone(), Some(i))
                    } else {
                        (last_ident.clone(), None, Some(i))
                    };
                }
                TokenKind::Punct(';') => return (None, None, None),
                TokenKind::Ident if angle <= 0 => {
                    let w = &self.src[self.toks[i].start..self.toks[i].end];
                    match w {
                        "for" => saw_for = true,
                        "where" => {}
                        _ => {
                            if saw_for {
                                after_for = Some(w.to_string());
                            } else {
                                last_ident = Some(w.to_string());
                            }
                        }
                    }
                }
                _ => {}
            }
            i += 1;
        }
        (None, None, None)
    }

    /// Parses a `use` statement into normalized segment paths; one-level
    /// braced lists expand into one path per leaf.
    fn scan_use(&mut self, use_idx: usize, reexport: bool) -> usize {
        let end = self.skip_to_semi(use_idx);
        let mut prefix: Vec<String> = Vec::new();
        let mut groups: Vec<(Vec<String>, bool)> = Vec::new();
        let mut in_braces = false;
        let mut braced_current: Vec<String> = Vec::new();
        let mut braced_glob = false;
        let mut i = use_idx + 1;
        while i < end {
            match self.toks[i].kind {
                TokenKind::Ident => {
                    let w = self.src[self.toks[i].start..self.toks[i].end].to_string();
                    if w != "as" {
                        if in_braces {
                            braced_current.push(w);
                        } else {
                            prefix.push(w);
                        }
                    } else {
                        // Alias names do not participate in resolution.
                        i += 1;
                    }
                }
                TokenKind::Punct('*') => {
                    if in_braces {
                        braced_glob = true;
                    } else {
                        groups.push((prefix.clone(), true));
                        prefix.clear();
                    }
                }
                TokenKind::Punct('{') => in_braces = true,
                TokenKind::Punct(',') if in_braces => {
                    if !braced_current.is_empty() || braced_glob {
                        let mut segs = prefix.clone();
                        segs.extend(braced_current.drain(..));
                        groups.push((segs, braced_glob));
                        braced_glob = false;
                    }
                }
                TokenKind::Punct('}') if in_braces => {
                    if !braced_current.is_empty() || braced_glob {
                        let mut segs = prefix.clone();
                        segs.extend(braced_current.drain(..));
                        groups.push((segs, braced_glob));
                        braced_glob = false;
                    }
                    in_braces = false;
                }
                _ => {}
            }
            i += 1;
        }
        if !prefix.is_empty() {
            groups.push((prefix, false));
        }
        for (segments, glob) in groups {
            if !segments.is_empty() {
                self.use_paths.push(UsePath {
                    segments,
                    glob,
                    reexport,
                });
            }
        }
        end
    }

    fn push_construct(
        &mut self,
        kind: ConstructKind,
        name: String,
        start: usize,
        end: usize,
        field_names: Vec<String>,
    ) {
        self.constructs.push(ConstructDef {
            kind,
            name,
            file: self.file.to_string(),
            span: Span::new(start, end),
            field_names,
        });
    }

    fn scan_struct(&mut self, kw_idx: usize, start: usize) -> Result<usize> {
        let name = match self.word(kw_idx + 1) {
            Some(n) => n.to_string(),
            None => return Ok(kw_idx + 1),
        };
        // Find `{`, `(`, or `;` at angle depth 0.
        let mut i = kw_idx + 2;
        let mut angle = 0i32;
        while i < self.toks.len() {
            match self.toks[i].kind {
                TokenKind::Punct('<') => angle += 1,
                TokenKind::Punct('>') => angle -= 1,
                TokenKind::Punct('{') if angle <= 0 => {
                    let end_idx = self.match_brace_end_idx(i)?;
                    let fields = self.field_names(i, end_idx);
                    self.push_construct(
                        ConstructKind::StructLike,
                        name,
                        start,
                        self.toks[end_idx].end,
                        fields,
                    );
                    return Ok(end_idx + 1);
                }
                TokenKind::Punct('(') if angle <= 0 => {
                    let next = self.skip_to_semi(i);
                    self.push_construct(
                        ConstructKind::StructLike,
                        name,
                        start,
                        self.toks.get(next.saturating_sub(1)).map(|t| t.end).unwrap_or(start),
                        Vec::new(),
                    );
                    return Ok(next);
                }
                TokenKind::Punct(';') if angle <= 0 => {
                    self.push_construct(
                        ConstructKind::StructLike,
                        name,
                        start,
                        self.toks[i].end,
                        Vec::new(),
                    );
                    return Ok(i + 1);
                }
                _ => {}
            }
            i += 1;
        }
        Ok(i)
    }

    /// Field names: identifiers at depth 1 directly followed by `:`.
    fn field_names(&self, open_idx: usize, end_idx: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut depth = 0i32;
        let mut i = open_idx;
        while i <= end_idx {
            match self.toks[i].kind {
                TokenKind::Punct('{') | TokenKind::Punct('(') | TokenKind::Punct('[') => depth += 1,
                TokenKind::Punct('}') | TokenKind::Punct(')') | TokenKind::Punct(']') => depth -= 1,
                TokenKind::Ident if depth == 1 && !self.toks[i].in_attribute => {
                    let w = &self.src[self.toks[i].start..self.toks[i].end];
                    if w != "pub"
                        && w != "ghost"
                        && w != "tracked"
                        && matches!(self.punct(i + 1), Some(':'))
                        && !matches!(self.punct(i + 2), Some(':'))
                    {
                        out.push(w.to_string());
                    }
                }
                _ => {}
            }
            i += 1;
        }
        out
    }

    fn scan_enum(&mut self, kw_idx: usize, start: usize) -> Result<usize> {
        let name = match self.word(kw_idx + 1) {
            Some(n) => n.to_string(),
            None => return Ok(kw_idx + 1),
        };
        match self.find_open_brace(kw_idx + 1) {
            Some(open_idx) => {
                let end_idx = self.match_brace_end_idx(open_idx)?;
                let variants = self.variant_names(open_idx, end_idx);
                self.push_construct(
                    ConstructKind::EnumLike,
                    name,
                    start,
                    self.toks[end_idx].end,
                    variants,
                );
                Ok(end_idx + 1)
            }
            None => {
                self.push_construct(ConstructKind::EnumLike, name, start, start, Vec::new());
                Ok(kw_idx + 2)
            }
        }
    }

    /// Variant names: identifiers at depth 1 followed by `,` `(` `{` `=`
    /// or the closing brace.
    fn variant_names(&self, open_idx: usize, end_idx: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut depth = 0i32;
        let mut i = open_idx;
        while i <= end_idx {
            match self.toks[i].kind {
                TokenKind::Punct('{') | TokenKind::Punct('(') | TokenKind::Punct('[') => depth += 1,
                TokenKind::Punct('}') | TokenKind::Punct(')') | TokenKind::Punct(']') => depth -= 1,
                TokenKind::Ident if depth == 1 && !self.toks[i].in_attribute => {
                    match self.punct(i + 1) {
                        Some(',') | Some('(') | Some('{') | Some('=') | Some('}') | None => {
                            out.push(self.src[self.toks[i].start..self.toks[i].end].to_string());
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
            i += 1;
        }
        out
    }

    fn scan_macro_rules(&mut self, kw_idx: usize, start: usize) -> Result<usize> {
        // macro_rules ! name { ... }
        let name = match self.word(kw_idx + 2) {
            Some(n) => n.to_string(),
            None => return Ok(kw_idx + 1),
        };
        match self.find_open_brace(kw_idx + 2) {
            Some(open_idx) => {
                let end = self.match_brace_end(open_idx)?;
                self.push_construct(ConstructKind::Macro, name, start, end, Vec::new());
                Ok(self.match_brace_end_idx(open_idx)? + 1)
            }
            None => Ok(kw_idx + 3),
        }
    }

    fn scan_type_alias(&mut self, kw_idx: usize, start: usize) -> Result<usize> {
        let name = match self.word(kw_idx + 1) {
            Some(n) => n.to_string(),
            None => return Ok(kw_idx + 1),
        };
        let next = self.skip_to_semi(kw_idx + 1);
        let end = self
            .toks
            .get(next.saturating_sub(1))
            .map(|t| t.end)
            .unwrap_or(start);
        self.push_construct(ConstructKind::TypeAlias, name, start, end, Vec::new());
        Ok(next)
    }

    /// Scans a possible fn item starting from a modifier or `fn` token.
    /// Returns the token index after the item, or None when the token run
    /// turns out not to be a function (e.g. a `const` item).
    fn scan_fn_item(&mut self, start_idx: usize, construct: Option<String>) -> Result<Option<usize>> {
        let mut i = start_idx;
        let head_start = self.toks[start_idx].start;
        let mut fn_mode = CodeMode::Exec;
        loop {
            match self.word(i) {
                Some("fn") => break,
                Some("spec") => {
                    fn_mode = CodeMode::Spec;
                    i += 1;
                    // spec(checked)
                    if self.punct(i) == Some('(') {
                        let mut d = 0i32;
                        while i < self.toks.len() {
                            match self.toks[i].kind {
                                TokenKind::Punct('(') => d += 1,
                                TokenKind::Punct(')') => {
                                    d -= 1;
                                    if d == 0 {
                                        i += 1;
                                        break;
                                    }
                                }
                                _ => {}
                            }
                            i += 1;
                        }
                    }
                }
                Some("proof") => {
                    fn_mode = CodeMode::Proof;
                    i += 1;
                }
                Some(w) if MODIFIERS.contains(&w) => {
                    i += 1;
                    // pub(crate)
                    if self.punct(i) == Some('(') {
                        while i < self.toks.len() && self.punct(i) != Some(')') {
                            i += 1;
                        }
                        i += 1;
                    }
                }
                _ => return Ok(None),
            }
        }
        let fn_idx = i;
        let name = match self.word(fn_idx + 1) {
            Some(n) => n.to_string(),
            None => return Ok(None),
        };

        // Parameter list.
        let mut j = fn_idx + 2;
        while j < self.toks.len() && self.toks[j].kind != TokenKind::Punct('(') {
            j += 1;
        }
        let mut depth = 0i32;
        let mut params_end = None;
        while j < self.toks.len() {
            match self.toks[j].kind {
                TokenKind::Punct('(') => depth += 1,
                TokenKind::Punct(')') => {
                    depth -= 1;
                    if depth == 0 {
                        params_end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
            j += 1;
        }
        let params_end = match params_end {
            Some(p) => p,
            None => {
                return Err(Error::UnbalancedBraces {
                    file: self.file.to_string(),
                    line: self.toks[fn_idx].line + 1,
                })
            }
        };

        // After the params: signature continues until a clause keyword,
        // the body brace, or a terminating semicolon.
        let mut sig_end_offset = self.toks[params_end].end;
        let mut k = params_end + 1;
        let mut body_open = None;
        let mut item_end_offset = self.toks[params_end].end;
        let mut prev_operator = false;
        let mut in_clauses = false;
        let mut d = 0i32;
        while k < self.toks.len() {
            let tok = &self.toks[k];
            if tok.in_attribute {
                k += 1;
                continue;
            }
            match tok.kind {
                TokenKind::Ident => {
                    let w = &self.src[tok.start..tok.end];
                    if d == 0 && crate::modes::is_clause_keyword(w) {
                        if !in_clauses {
                            sig_end_offset = tok.start;
                            in_clauses = true;
                        }
                        prev_operator = true; // keyword wants an expression
                    } else {
                        prev_operator = false;
                    }
                }
                TokenKind::Literal => prev_operator = false,
                TokenKind::Punct(c) => match c {
                    '(' | '[' => {
                        d += 1;
                        prev_operator = true;
                    }
                    ')' | ']' => {
                        d -= 1;
                        prev_operator = false;
                    }
                    '{' => {
                        if d == 0 && !prev_operator {
                            if !in_clauses {
                                sig_end_offset = sig_end_offset.min(tok.start);
                            }
                            body_open = Some(k);
                            break;
                        }
                        d += 1;
                        prev_operator = true;
                    }
                    '}' => {
                        d -= 1;
                        prev_operator = false;
                    }
                    ';' => {
                        if d == 0 {
                            item_end_offset = tok.end;
                            if !in_clauses {
                                sig_end_offset = sig_end_offset.min(tok.start);
                            }
                            break;
                        }
                        prev_operator = false;
                    }
                    ',' => prev_operator = false,
                    '>' => prev_operator = false,
                    _ => prev_operator = true,
                },
            }
            k += 1;
        }

        let next_idx = match body_open {
            Some(open_idx) => {
                let end_idx = self.match_brace_end_idx(open_idx)?;
                item_end_offset = self.toks[end_idx].end;
                end_idx + 1
            }
            None => {
                if item_end_offset <= self.toks[params_end].end {
                    // Ran off the token stream without `;` or body.
                    return Err(Error::UnbalancedBraces {
                        file: self.file.to_string(),
                        line: self.toks[fn_idx].line + 1,
                    });
                }
                k + 1
            }
        };

        // Only fn items inside verus regions become units.
        if !self.in_region(self.toks[fn_idx].start) {
            return Ok(Some(next_idx));
        }

        let span_start = self.attach_leading_trivia(head_start);
        let span = Span::new(span_start, item_end_offset);
        let sig_text = self.src[head_start..sig_end_offset].trim_end().to_string();
        let id = FunctionId::new(self.file, construct.as_deref(), &name);
        let lines = split_lines(&self.src[span.start..span.end]);
        self.functions.push(FunctionUnit {
            id,
            name,
            construct_path: construct,
            signature_text: sig_text,
            fn_mode,
            lines,
            span,
        });
        Ok(Some(next_idx))
    }

    /// Extends an item start over immediately preceding whole-line comments
    /// and attributes, then aligns it to the start of its line when only
    /// whitespace precedes it there.
    fn attach_leading_trivia(&self, head_start: usize) -> usize {
        let mut line = lex::line_of(&self.line_starts, head_start);
        let line_start = self.line_starts[line];
        let before = &self.src[line_start..head_start];
        let mut start = if before.chars().all(|c| c.is_whitespace()) {
            line_start
        } else {
            return head_start;
        };
        while line > 0 {
            let prev_start = self.line_starts[line - 1];
            let prev_end = line_start_end(&self.line_starts, self.src, line - 1);
            let text = &self.src[prev_start..prev_end];
            let trimmed = text.trim();
            let is_comment = trimmed.starts_with("//")
                && self
                    .comment_spans
                    .iter()
                    .any(|s| s.contains(prev_start + text.find("//").unwrap_or(0)));
            let is_attr = trimmed.starts_with("#[") && trimmed.ends_with(']');
            if trimmed.is_empty() || !(is_comment || is_attr) {
                break;
            }
            start = prev_start;
            line -= 1;
        }
        start
    }
}

fn line_start_end(starts: &[usize], src: &str, line: usize) -> usize {
    starts
        .get(line + 1)
        .map(|s| s.saturating_sub(1))
        .unwrap_or(src.len())
}

/// Snapshot cache: `manifest.json` plus one JSON record per file.
pub mod cache {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Manifest {
        fingerprint: String,
        root_path: PathBuf,
        files: Vec<String>,
        warnings: Vec<String>,
    }

    fn record_name(relative_path: &str) -> String {
        format!("{}.json", relative_path.replace('/', "__"))
    }

    pub fn save(snapshot: &RepoSnapshot, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            fingerprint: snapshot.fingerprint.clone(),
            root_path: snapshot.root_path.clone(),
            files: snapshot.files.iter().map(|f| f.relative_path.clone()).collect(),
            warnings: snapshot.warnings.clone(),
        };
        let manifest_path = dir.join("manifest.json");
        std::fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)
            .map_err(|e| Error::io(&manifest_path, e))?;
        for file in &snapshot.files {
            let path = dir.join(record_name(&file.relative_path));
            std::fs::write(&path, serde_json::to_vec(&file)?).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<RepoSnapshot> {
        let manifest_path = dir.join("manifest.json");
        let bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)?;
        let mut files = Vec::new();
        for rel in &manifest.files {
            let path = dir.join(record_name(rel));
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            files.push(serde_json::from_slice::<SourceFile>(&bytes)?);
        }
        Ok(RepoSnapshot {
            root_path: manifest.root_path,
            files,
            fingerprint: manifest.fingerprint,
            warnings: manifest.warnings,
        })
    }
}

/// Recomputes a fingerprint after file contents changed.
pub fn refresh_fingerprint(snapshot: &mut RepoSnapshot) {
    snapshot.fingerprint = fingerprint_files(
        snapshot
            .files
            .iter()
            .map(|f| (f.relative_path.as_str(), f.content.as_str())),
    );
}

/// Convenience map from function id to (file index, function index).
pub fn function_index(snapshot: &RepoSnapshot) -> BTreeMap<FunctionId, (usize, usize)> {
    let mut map = BTreeMap::new();
    for (fi, file) in snapshot.files.iter().enumerate() {
        for (ui, unit) in file.functions.iter().enumerate() {
            map.insert(unit.id.clone(), (fi, ui));
        }
    }
    map
}

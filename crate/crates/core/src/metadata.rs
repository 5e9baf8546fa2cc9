//! Per-function metadata extraction and the repository linkage graph.
//!
//! Everything here is static syntax analysis: call extraction is
//! name-based (`name(` and `.name(` positions), type capture covers
//! signature and `let` declaration positions plus `Path::` qualifiers,
//! and callee resolution over-approximates (ambiguity keeps all
//! candidates). That is deliberately unsound but safe for retrieval.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lex::{self, TokenKind};
use crate::modes::CodeMode;
use crate::source::{ConstructDef, FunctionId, FunctionUnit, RepoSnapshot, SourceFile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub construct_path: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionMetadata {
    pub location: Location,
    pub signature_text: String,
    /// Callee identifiers in first-occurrence order, deduplicated,
    /// language keywords removed.
    pub invocations: Vec<String>,
    /// Capitalized type identifiers from the signature, `let` bindings,
    /// and path qualifiers, in first-occurrence order.
    pub type_refs: Vec<String>,
    pub fn_mode: CodeMode,
    /// Informal summary; absent until the informalizer fills it.
    pub summary: Option<String>,
}

/// Rust keywords plus Verus binders and proof directives that appear in
/// call position without naming a repository function.
const CALL_KEYWORDS: &[&str] = &[
    "if", "while", "for", "match", "return", "loop", "fn", "let", "mut", "ref", "move", "box",
    "in", "as", "use", "pub", "impl", "trait", "struct", "enum", "type", "mod", "where", "unsafe",
    "async", "await", "dyn", "else", "break", "continue", "true", "false", "self", "Self",
    "super", "crate", "old", "forall", "exists", "choose", "assert", "assume", "ensures",
    "requires", "invariant", "decreases", "recommends", "proof", "spec", "exec", "ghost",
    "tracked", "closed", "open", "reveal", "hide", "calc", "by",
];

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Extracts the five statically-derived metadata fields from a unit.
pub fn extract_metadata(unit: &FunctionUnit, _snapshot: &RepoSnapshot) -> FunctionMetadata {
    let text = unit.text();
    // Attached comment and attribute lines precede the signature, so the
    // signature range must be located, not assumed to start at zero.
    let sig_range = text
        .find(&unit.signature_text)
        .map(|start| (start, start + unit.signature_text.len()))
        .unwrap_or((0, 0));
    let (invocations, type_refs) = mine_tokens(&text, sig_range);
    FunctionMetadata {
        location: Location {
            file: unit.id.0.split("::").next().unwrap_or_default().to_string(),
            construct_path: unit.construct_path.clone(),
            name: unit.name.clone(),
        },
        signature_text: unit.signature_text.clone(),
        invocations,
        type_refs,
        fn_mode: unit.fn_mode,
        summary: None,
    }
}

/// Callee names found on proof-mode lines only; used for premise edges.
pub fn proof_line_invocations(unit: &FunctionUnit) -> Vec<String> {
    let proof_text: String = unit
        .lines
        .iter()
        .map(|l| {
            if l.mode == CodeMode::Proof {
                l.text.as_str()
            } else {
                ""
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let (invocations, _) = mine_tokens(&proof_text, (0, 0));
    invocations
}

/// One pass over the token stream collecting call-position identifiers
/// and type references.
fn mine_tokens(text: &str, sig_range: (usize, usize)) -> (Vec<String>, Vec<String>) {
    let lexed = lex::lex(text);
    let toks = &lexed.tokens;
    let mut invocations: Vec<String> = Vec::new();
    let mut type_refs: Vec<String> = Vec::new();
    let mut seen_inv: BTreeSet<String> = BTreeSet::new();
    let mut seen_ty: BTreeSet<String> = BTreeSet::new();

    let mut i = 0usize;
    let mut let_type_until: Option<usize> = None;
    while i < toks.len() {
        let tok = &toks[i];
        if tok.in_attribute {
            i += 1;
            continue;
        }
        if tok.kind == TokenKind::Ident {
            let w = &text[tok.start..tok.end];
            let prev_is_fn = i > 0
                && toks[i - 1].kind == TokenKind::Ident
                && &text[toks[i - 1].start..toks[i - 1].end] == "fn";

            // Call position: `name(`, possibly with a turbofish in
            // between (`name::<T>(`).
            let mut j = i + 1;
            if matches!(toks.get(j).map(|t| t.kind), Some(TokenKind::Punct(':')))
                && matches!(toks.get(j + 1).map(|t| t.kind), Some(TokenKind::Punct(':')))
                && matches!(toks.get(j + 2).map(|t| t.kind), Some(TokenKind::Punct('<')))
            {
                let mut angle = 0i32;
                let mut k = j + 2;
                while k < toks.len() {
                    match toks[k].kind {
                        TokenKind::Punct('<') => angle += 1,
                        TokenKind::Punct('>') => {
                            angle -= 1;
                            if angle == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    k += 1;
                }
                j = k + 1;
            }
            let is_call = matches!(toks.get(j).map(|t| t.kind), Some(TokenKind::Punct('(')));
            if is_call && !prev_is_fn && !CALL_KEYWORDS.contains(&w) && seen_inv.insert(w.to_string())
            {
                invocations.push(w.to_string());
            }

            if is_capitalized(w) && w != "Self" {
                // Type positions: inside the signature, inside an active
                // `let name: T` annotation, or as a `Path::` qualifier.
                let in_signature = tok.start >= sig_range.0 && tok.start < sig_range.1;
                let in_let = let_type_until.is_some_and(|until| tok.start < until);
                let qualifier = matches!(
                    toks.get(i + 1).map(|t| t.kind),
                    Some(TokenKind::Punct(':'))
                ) && matches!(
                    toks.get(i + 2).map(|t| t.kind),
                    Some(TokenKind::Punct(':'))
                );
                if (in_signature || in_let || qualifier) && seen_ty.insert(w.to_string()) {
                    type_refs.push(w.to_string());
                }
            }

            if w == "let" {
                // `let [ghost|tracked] [mut] name : TYPE = ...` — mark the
                // annotation range (from `:` to `=` or `;`).
                let mut k = i + 1;
                while let Some(t) = toks.get(k) {
                    if t.kind == TokenKind::Ident {
                        let kw = &text[t.start..t.end];
                        if kw == "ghost" || kw == "tracked" || kw == "mut" {
                            k += 1;
                            continue;
                        }
                        k += 1;
                        break;
                    }
                    break;
                }
                if matches!(toks.get(k).map(|t| t.kind), Some(TokenKind::Punct(':'))) {
                    let mut end = k + 1;
                    let mut depth = 0i32;
                    while let Some(t) = toks.get(end) {
                        match t.kind {
                            TokenKind::Punct('<') | TokenKind::Punct('(') | TokenKind::Punct('[') => depth += 1,
                            TokenKind::Punct('>') | TokenKind::Punct(')') | TokenKind::Punct(']') => depth -= 1,
                            TokenKind::Punct('=') | TokenKind::Punct(';') if depth <= 0 => break,
                            _ => {}
                        }
                        end += 1;
                    }
                    let_type_until = toks.get(end).map(|t| t.start);
                }
            }
        }
        i += 1;
    }
    (invocations, type_refs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Function,
    Construct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Invokes,
    UsesType,
    DefinedIn,
}

impl std::fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EdgeKind::Invokes => "invokes",
            EdgeKind::UsesType => "uses-type",
            EdgeKind::DefinedIn => "defined-in",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<CodeMode>,
    /// A self-call is recorded here rather than as a self-loop edge.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recursive: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    /// True when at least one originating call site is on a proof line.
    #[serde(default)]
    pub from_proof: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinkageGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl LinkageGraph {
    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edges_from<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GraphEdge> {
        self.edges.iter().filter(move |e| e.src == id)
    }

    /// Export shape: `{nodes:[{id,kind,mode}], edges:[{src,dst,kind}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.nodes.iter().map(|n| {
                serde_json::json!({"id": n.id, "kind": n.kind, "mode": n.mode})
            }).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| {
                serde_json::json!({"src": e.src, "dst": e.dst, "kind": e.kind})
            }).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph linkage {\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Function => "ellipse",
                NodeKind::Construct => "box",
            };
            let _ = writeln!(out, "    \"{}\" [shape={}];", n.id, shape);
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "    \"{}\" -> \"{}\" [label=\"{}\"];",
                e.src, e.dst, e.kind
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Resolves each type_ref to its defining construct, searching the same
/// file, the trait/impl hierarchy of the enclosing construct, imported
/// modules, and finally the whole snapshot. Misses are dropped.
pub fn resolve_type_sources<'s>(
    meta: &FunctionMetadata,
    snapshot: &'s RepoSnapshot,
) -> Vec<&'s ConstructDef> {
    let mut out: Vec<&ConstructDef> = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for ty in &meta.type_refs {
        if let Some(c) = resolve_one_type(ty, meta, snapshot) {
            if seen.insert((c.file.clone(), c.name.clone())) {
                out.push(c);
            }
        }
    }
    out
}

fn resolve_one_type<'s>(
    ty: &str,
    meta: &FunctionMetadata,
    snapshot: &'s RepoSnapshot,
) -> Option<&'s ConstructDef> {
    let home = snapshot.file(&meta.location.file);

    // 1. Same file.
    if let Some(file) = home {
        if let Some(c) = file.constructs.iter().find(|c| c.name == ty) {
            return Some(c);
        }
    }

    // 2. Trait/impl hierarchy of the enclosing construct.
    if let (Some(file), Some(enclosing)) = (home, &meta.location.construct_path) {
        let related: Vec<&str> = file
            .trait_impls
            .iter()
            .filter_map(|ti| {
                if &ti.type_name == enclosing {
                    Some(ti.trait_name.as_str())
                } else if &ti.trait_name == enclosing {
                    Some(ti.type_name.as_str())
                } else {

       None
                }
            })
            .collect();
        if related.contains(&ty) {
            if let Some(c) = find_construct_sorted(snapshot, ty) {
                return Some(c);
            }
        }
    }

    // 3. Imports, simple paths and globs; `pub use` re-exports followed
    //    one level deep.
    if let Some(file) = home {
        if let Some(c) = resolve_via_imports(ty, file, snapshot, true) {
            return Some(c);
        }
    }

    // 4. Whole snapshot, lexicographic file order.
    find_construct_sorted(snapshot, ty)
}

fn find_construct_sorted<'s>(snapshot: &'s RepoSnapshot, ty: &str) -> Option<&'s ConstructDef> {
    let mut files: Vec<&SourceFile> = snapshot.files.iter().collect();
    files.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
    for f in files {
        if let Some(c) = f.constructs.iter().find(|c| c.name == ty) {
            return Some(c);
        }
    }
    None
}

fn resolve_via_imports<'s>(
    ty: &str,
    file: &SourceFile,
    snapshot: &'s RepoSnapshot,
    follow_reexports: bool,
) -> Option<&'s ConstructDef> {
    for up in &file.use_paths {
        let names_it = up.glob || up.segments.last().map(String::as_str) == Some(ty);
        if !names_it {
            continue;
        }
        let module_segments: &[String] = if up.glob {
            &up.segments
        } else {
            &up.segments[..up.segments.len().saturating_sub(1)]
        };
        if let Some(target) = module_file(module_segments, snapshot) {
            if let Some(c) = target.constructs.iter().find(|c| c.name == ty) {
                return Some(c);
            }
            if follow_reexports {
                for reexport in target.use_paths.iter().filter(|u| u.reexport) {
                    if reexport.glob || reexport.segments.last().map(String::as_str) == Some(ty) {
                        if let Some(c) = resolve_via_imports(ty, target, snapshot, false) {
                            return Some(c);
                        }
                    }
                }
            }
        }
    }
    None
}

/// Textual module-to-file mapping: `crate::a::b` maps to `src/a/b.rs` or
/// `src/a/b/mod.rs`, whichever exists in the snapshot.
fn module_file<'s>(segments: &[String], snapshot: &'s RepoSnapshot) -> Option<&'s SourceFile> {
    let rel: Vec<&str> = segments
        .iter()
        .map(String::as_str)
        .filter(|s| *s != "crate" && *s != "self" && *s != "super")
        .collect();
    if rel.is_empty() {
        return None;
    }
    let joined = rel.join("/");
    for cand in [
        format!("src/{joined}.rs"),
        format!("src/{joined}/mod.rs"),
        format!("{joined}.rs"),
        format!("{joined}/mod.rs"),
    ] {
        if let Some(f) = snapshot.file(&cand) {
            return Some(f);
        }
    }
    None
}

/// Builds the invocation / type-usage / definition graph over a snapshot
/// whose functions are already mode-classified.
pub fn build_linkage_graph(snapshot: &RepoSnapshot) -> Result<LinkageGraph> {
    let mut graph = LinkageGraph::default();

    // Function name -> units, in sorted id order for determinism.
    let mut by_name: BTreeMap<&str, Vec<&FunctionUnit>> = BTreeMap::new();
    for unit in snapshot.functions() {
        by_name.entry(unit.name.as_str()).or_default().push(unit);
    }
    for units in by_name.values_mut() {
        units.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let metas: BTreeMap<FunctionId, FunctionMetadata> = snapshot
        .functions()
        .map(|u| (u.id.clone(), extract_metadata(u, snapshot)))
        .collect();

    let mut edges: BTreeMap<(String, String, EdgeKind), bool> = BTreeMap::new();
    let mut fn_nodes: Vec<GraphNode> = Vec::new();

    for unit in snapshot.functions() {
        let meta = &metas[&unit.id];
        let proof_calls: BTreeSet<String> = proof_line_invocations(unit).into_iter().collect();
        let mut recursive = false;

        let resolved_types = resolve_type_sources(meta, snapshot);
        let reachable: BTreeSet<&str> = resolved_types
            .iter()
            .map(|c| c.name.as_str())
            .chain(meta.location.construct_path.as_deref())
            .collect();

        for callee in &meta.invocations {
            let Some(candidates) = by_name.get(callee.as_str()) else {
                continue;
            };
            let narrowed: Vec<&FunctionUnit> = candidates
                .iter()
                .copied()
                .filter(|u| {
                    u.construct_path
                        .as_deref()
                        .is_some_and(|c| reachable.contains(c))
                })
                .collect();
            let chosen: Vec<&FunctionUnit> = if narrowed.is_empty() {
                candidates.to_vec()
            } else {
                narrowed
            };
            for target in chosen {
                if target.id == unit.id {
                    recursive = true;
                    continue;
                }
                // Spec code cannot call exec code.
                if unit.fn_mode == CodeMode::Spec && target.fn_mode == CodeMode::Exec {
                    continue;
                }
                let key = (unit.id.0.clone(), target.id.0.clone(), EdgeKind::Invokes);
                let from_proof = proof_calls.contains(callee.as_str());
                *edges.entry(key).or_insert(false) |= from_proof;
            }
        }

        for c in &resolved_types {
            edges
                .entry((unit.id.0.clone(), c.id(), EdgeKind::UsesType))
                .or_insert(false);
        }

        if let Some(enclosing) = &unit.construct_path {
            let file = snapshot.file_of_function(&unit.id);
            let construct = file
                .and_then(|f| f.constructs.iter().find(|c| &c.name == enclosing))
                .or_else(|| snapshot.constructs().find(|c| &c.name == enclosing));
            if let Some(c) = construct {
                edges
                    .entry((unit.id.0.clone(), c.id(), EdgeKind::DefinedIn))
                    .or_insert(false);
            }
        }

        fn_nodes.push(GraphNode {
            id: unit.id.0.clone(),
            kind: NodeKind::Function,
            mode: Some(unit.fn_mode),
            recursive,
        });
    }

    graph.nodes = fn_nodes;
    for c in snapshot.constructs() {
        graph.nodes.push(GraphNode {
            id: c.id(),
            kind: NodeKind::Construct,
            mode: None,
            recursive: false,
        });
    }

    let node_ids: BTreeSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    for ((src, dst, kind), from_proof) in edges {
        debug_assert!(node_ids.contains(src.as_str()) && node_ids.contains(dst.as_str()));
        graph.edges.push(GraphEdge {
            src,
            dst,
            kind,
            from_proof,
        });
    }

    // Node-count identity: functions plus constructs, nothing else.
    let fn_count = snapshot.functions().count();
    let ctor_count = snapshot.constructs().count();
    assert_eq!(graph.nodes.len(), fn_count + ctor_count);
    Ok(graph)
}

/// Spec- and proof-mode functions called from the task function's proof
/// lines in the unmasked snapshot; the Complex/Simple task split is
/// defined by this list being non-empty/empty.
pub fn ground_truth_premises(
    task_fn: &FunctionId,
    graph: &LinkageGraph,
) -> Result<Vec<FunctionId>> {
    if graph.node(&task_fn.0).is_none() {
        return Err(Error::UnknownFunction(task_fn.0.clone()));
    }
    let mut out = Vec::new();
    for e in graph.edges_from(&task_fn.0) {
        if e.kind != EdgeKind::Invokes || !e.from_proof {
            continue;
        }
        if let Some(node) = graph.node(&e.dst) {
            if matches!(node.mode, Some(CodeMode::Spec) | Some(CodeMode::Proof)) {
                out.push(FunctionId(e.dst.clone()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_root;
    use crate::modes::classify_function;
    use crate::source::{load_snapshot, parse_file, parse_function_text};

    fn classified_mini() -> RepoSnapshot {
        let mut snap = load_snapshot(&fixture_root("mini_repo"), &[]).unwrap();
        for file in &mut snap.files {
            for unit in &mut file.functions {
                classify_function(unit).unwrap();
            }
        }
        snap
    }

    fn meta_of(snap: &RepoSnapshot, id: &str) -> FunctionMetadata {
        let unit = snap.function(&FunctionId(id.to_string())).unwrap();
        extract_metadata(unit, snap)
    }

    #[test]
    fn empty_function_has_empty_metadata() {
        let snap = classified_mini();
        let mut unit = parse_function_text("fn f() {}").unwrap();
        classify_function(&mut unit).unwrap();
        let meta = extract_metadata(&unit, &snap);
        assert!(meta.invocations.is_empty());
        assert!(meta.type_refs.is_empty());
    }

    #[test]
    fn delegation_get_metadata_covers_listing() {
        let snap = classified_mini();
        let meta = meta_of(&snap, "src/delegation.rs::DelegationMap::get");
        for callee in [
            "new",
            "greatest_lower_bound",
            "get",
            "contains_key",
            "gap",
            "between",
            "clone_up_to_view",
        ] {
            assert!(
                meta.invocations.iter().any(|i| i == callee),
                "missing invocation {callee}: {:?}",
                meta.invocations
            );
        }
        for ty in ["KeyIterator", "Ghost", "ID"] {
            assert!(
                meta.type_refs.iter().any(|t| t == ty),
                "missing type ref {ty}: {:?}",
                meta.type_refs
            );
        }
        assert_eq!(meta.fn_mode, CodeMode::Exec);
    }

    #[test]
    fn insert_metadata_matches_golden() {
        let snap = classified_mini();
        let meta = meta_of(&snap, "src/sorted.rs::SortedVec::insert");
        let got = serde_json::to_value(&meta).unwrap();
        let want: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(
                fixture_root("mini_repo")
                    .parent()
                    .unwrap()
                    .join("golden/insert_metadata.json"),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn dedup_is_order_stable() {
        let snap = classified_mini();
        let meta = meta_of(&snap, "src/sorted.rs::SortedVec::insert");
        let mut sorted = meta.invocations.clone();
        sorted.dedup();
        assert_eq!(sorted, meta.invocations, "no adjacent duplicates");
        let set: BTreeSet<&String> = meta.invocations.iter().collect();
        assert_eq!(set.len(), meta.invocations.len(), "no duplicates at all");
    }

    #[test]
    fn resolve_primitive_only_is_empty() {
        let snap = classified_mini();
        let meta = meta_of(&snap, "src/arith.rs::sum_to");
        assert!(resolve_type_sources(&meta, &snap).is_empty());
    }

    #[test]
    fn resolve_finds_custom_type_through_import() {
        let snap = classified_mini();
        // secure_from lives in closures.rs and imports SecureInt from the
        // project header module secure.rs.
        let meta = meta_of(&snap, "src/closures.rs::secure_from");
        let hits = resolve_type_sources(&meta, &snap);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].name, "SecureInt");
        assert_eq!(hits[0].file, "src/secure.rs");
    }

    #[test]
    fn resolve_prefers_same_file_on_collision() {
        let snap = classified_mini();
        let meta_a = meta_of(&snap, "src/collide_a.rs::token_round");
        let hits = resolve_type_sources(&meta_a, &snap);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].file, "src/collide_a.rs");
        let meta_b = meta_of(&snap, "src/collide_b.rs::token_emit");
        let hits = resolve_type_sources(&meta_b, &snap);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].file, "src/collide_b.rs");
    }

    #[test]
    fn resolve_is_stable_under_file_permutation() {
        let snap = classified_mini();
        let mut reversed = snap.clone();
        reversed.files.reverse();
        for unit in snap.functions() {
            let meta = extract_metadata(unit, &snap);
            let a: Vec<String> = resolve_type_sources(&meta, &snap)
                .iter()
                .map(|c| c.id())
                .collect();
            let b: Vec<String> = resolve_type_sources(&meta, &reversed)
                .iter()
                .map(|c| c.id())
                .collect();
            assert_eq!(a, b, "resolution changed for {}", unit.id);
        }
    }

    #[test]
    fn isolated_function_graph() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("one.rs"),
            "verus! {\n\npub fn lonely() -> u32 {\n    7\n}\n\n}\n",
        )
        .unwrap();
        let mut snap = load_snapshot(dir.path(), &[]).unwrap();
        for file in &mut snap.files {
            for unit in &mut file.functions {
                classify_function(unit).unwrap();
            }
        }
        let graph = build_linkage_graph(&snap).unwrap();
        assert_eq!(graph.nodes.len(), 1);
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn insert_invokes_lemma_sorted() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        let has = graph.edges.iter().any(|e| {
            e.kind == EdgeKind::Invokes
                && e.src == "src/sorted.rs::SortedVec::insert"
                && e.dst == "src/sorted.rs::lemma_sorted"
        });
        assert!(has, "missing invokes edge insert -> lemma_sorted");
    }

    #[test]
    fn graph_node_count_is_functions_plus_constructs() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        assert_eq!(
            graph.nodes.len(),
            snap.functions().count() + snap.constructs().count()
        );
        let ids: BTreeSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
        for e in &graph.edges {
            assert!(ids.contains(e.src.as_str()) && ids.contains(e.dst.as_str()));
        }
    }

    #[test]
    fn no_self_loops_recursion_flagged() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        for e in &graph.edges {
            assert_ne!(e.src, e.dst, "self loop on {}", e.src);
        }
        for recursive_fn in [
            "src/recursive.rs::fact",
            "src/recursive.rs::fib_spec",
            "src/recursive.rs::lemma_fact_pos",
        ] {
            assert!(
                graph.node(recursive_fn).unwrap().recursive,
                "{recursive_fn} not flagged recursive"
            );
        }
        assert!(!graph.node("src/arith.rs::sum_to").unwrap().recursive);
    }

    #[test]
    fn spec_functions_never_invoke_exec_functions() {
        // Over-approximating name resolution would otherwise produce such
        // an edge from this synthetic pair.
        let mut file = parse_file(
            "x.rs",
            "verus! {\n\npub fn helper(x: u32) -> u32 {\n    x\n}\n\npub open spec fn uses_helper(x: u32) -> bool {\n    helper(x) == x\n}\n\n}\n",
        )
        .unwrap();
        for unit in &mut file.functions {
            classify_function(unit).unwrap();
        }
        let snap = RepoSnapshot {
            root_path: "synthetic".into(),
            fingerprint: crate::source::fingerprint_files(
                [("x.rs", file.content.as_str())].into_iter(),
            ),
            files: vec![file],
            warnings: vec![],
        };
        let graph = build_linkage_graph(&snap).unwrap();
        assert!(
            graph
                .edges
                .iter()
                .all(|e| !(e.kind == EdgeKind::Invokes && e.src.contains("uses_helper"))),
            "spec fn must not gain an invokes edge to an exec fn"
        );
        let snap_graph = build_linkage_graph(&classified_mini()).unwrap();
        for e in snap_graph.edges.iter().filter(|e| e.kind == EdgeKind::Invokes) {
            let src_mode = snap_graph.node(&e.src).unwrap().mode.unwrap();
            let dst_mode = snap_graph.node(&e.dst).unwrap().mode.unwrap();
            assert!(
                !(src_mode == CodeMode::Spec && dst_mode == CodeMode::Exec),
                "{} -> {}",
                e.src,
                e.dst
            );
        }
    }

    /// Independent regex-based edge oracle. For every ordered function
    /// pair (f, g), an invokes edge is expected iff g's bare name occurs
    /// in call position inside f's text, f != g, and the spec->exec
    /// restriction holds. Fixture function names are unique, so name
    /// resolution is unambiguous and the regex reconstruction is exact.
    #[test]
    fn invokes_edges_match_grep_oracle() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        let got: BTreeSet<(String, String)> = graph
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Invokes)
            .map(|e| (e.src.clone(), e.dst.clone()))
            .collect();

        let mut want: BTreeSet<(String, String)> = BTreeSet::new();
        let units: Vec<&FunctionUnit> = snap.functions().collect();
        for f in &units {
            let text = strip_comments(&f.text());
            for g in &units {
                if f.id == g.id {
                    continue;
                }
                if f.fn_mode == CodeMode::Spec && g.fn_mode == CodeMode::Exec {
                    continue;
                }
                let re = regex::Regex::new(&format!(r"\b{}\s*\(", regex::escape(&g.name)))
                    .unwrap();
                if re.find_iter(&text).next().is_some() {
                    want.insert((f.id.0.clone(), g.id.0.clone()));
                }
            }
        }
        assert_eq!(got, want);
    }

    fn strip_comments(text: &str) -> String {
        let lexed = crate::lex::lex(text);
        let mut out = text.to_string();
        for span in lexed.comment_spans.iter().rev() {
            out.replace_range(span.start..span.end, "");
        }
        out
    }

    #[test]
    fn premises_for_complex_task_are_exactly_the_called_lemmas() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        let premises =
            ground_truth_premises(&FunctionId("src/sorted.rs::SortedVec::insert".into()), &graph)
                .unwrap();
        let mut names: Vec<&str> = premises.iter().map(|p| p.0.as_str()).collect();
        names.sort();
        assert_eq!(
            names,
            vec!["src/sorted.rs::lemma_sorted", "src/sorted.rs::lemma_sorted_empty"]
        );
    }

    #[test]
    fn premises_for_simple_task_are_empty() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        for simple in ["src/arith.rs::sum_to", "src/arith.rs::clamp_add"] {
            let premises = ground_truth_premises(&FunctionId(simple.into()), &graph).unwrap();
            assert!(premises.is_empty(), "{simple}: {premises:?}");
        }
    }

    #[test]
    fn premises_are_ghost_functions_only() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        for unit in snap.functions() {
            let premises = ground_truth_premises(&unit.id, &graph).unwrap();
            for p in premises {
                let mode = graph.node(&p.0).unwrap().mode.unwrap();
                assert!(matches!(mode, CodeMode::Spec | CodeMode::Proof));
            }
        }
        let err = ground_truth_premises(&FunctionId("nope".into()), &graph);
        assert!(err.is_err());
    }

    #[test]
    fn graph_exports_are_well_formed() {
        let snap = classified_mini();
        let graph = build_linkage_graph(&snap).unwrap();
        let json = graph.to_json();
        assert!(json["nodes"].as_array().unwrap().len() == graph.nodes.len());
        assert!(json["edges"][0]["src"].is_string());
        assert!(json["edges"][0].get("from_proof").is_none());
        let dot = graph.to_dot();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("invokes"));
    }
}

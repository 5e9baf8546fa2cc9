//! Few-shot example retrieval and dependency retrieval over the vector
//! indices, with anti-leakage filtering and the ablation policy matrix.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::index::{scan_top_k, DocKind, IndexedDoc, VectorIndex};
use crate::metadata::{self, LinkageGraph};
use crate::modes::CodeMode;
use crate::source::{FunctionId, RepoSnapshot};
use crate::tasks::ProofTask;

pub const DEFAULT_FEW_SHOT_K: usize = 3;
pub const DEFAULT_DEPENDENCY_BUDGET: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPair {
    pub doc_id: String,
    pub source_corpus: String,
    pub masked_example: String,
    pub verified_example: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalBundle {
    pub query_fn: FunctionId,
    pub few_shot_pairs: Vec<FewShotPair>,
    pub dependency_listing: String,
    pub dependency_token_count: usize,
}

impl RetrievalBundle {
    /// Constructor enforcing the bundle invariants: at most three pairs
    /// with distinct ids, no self-retrieval, budget respected.
    pub fn new(
        query_fn: FunctionId,
        few_shot_pairs: Vec<FewShotPair>,
        dependency_listing: String,
        dependency_token_count: usize,
        budget: usize,
    ) -> Self {
        assert!(few_shot_pairs.len() <= DEFAULT_FEW_SHOT_K);
        let ids: BTreeSet<&str> = few_shot_pairs.iter().map(|p| p.doc_id.as_str()).collect();
        assert_eq!(ids.len(), few_shot_pairs.len(), "duplicate few-shot ids");
        assert!(
            !ids.contains(query_fn.0.as_str()),
            "anti-leakage: task retrieved itself"
        );
        assert!(
            dependency_token_count <= budget,
            "dependency budget exceeded: {dependency_token_count} > {budget}"
        );
        RetrievalBundle {
            query_fn,
            few_shot_pairs,
            dependency_listing,
            dependency_token_count,
        }
    }

    pub fn empty(query_fn: FunctionId) -> Self {
        RetrievalBundle {
            query_fn,
            few_shot_pairs: Vec::new(),
            dependency_listing: String::new(),
            dependency_token_count: 0,
        }
    }
}

/// Token counting is a configurable contract; the default heuristic is
/// whitespace word count times 1.3, rounded up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TokenCounter {
    #[default]
    WhitespaceHeuristic,
}

impl TokenCounter {
    pub fn count(&self, text: &str) -> usize {
        match self {
            TokenCounter::WhitespaceHeuristic => {
                (text.split_whitespace().count() as f64 * 1.3).ceil() as usize
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub budget: usize,
    pub counter: TokenCounter,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            budget: DEFAULT_DEPENDENCY_BUDGET,
            counter: TokenCounter::WhitespaceHeuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    CodeQuery,
    SummaryQuery,
}

/// The persistent indices a retrieval run works against.
#[derive(Debug, Default)]
pub struct IndexSet {
    pub unverified: Vec<VectorIndex>,
    pub verified: Vec<VectorIndex>,
}

impl IndexSet {
    fn unverified_docs(&self, kind: DocKind) -> impl Iterator<Item = &IndexedDoc> {
        self.unverified
            .iter()
            .flat_map(move |i| i.docs_of_kind(kind))
    }

    fn lookup_unverified(&self, doc_id: &str, kind: DocKind) -> Option<&IndexedDoc> {
        self.unverified.iter().find_map(|i| i.doc(doc_id, kind))
    }

    fn lookup_verified(&self, doc_id: &str, kind: DocKind) -> Option<&IndexedDoc> {
        self.verified.iter().find_map(|i| i.doc(doc_id, kind))
    }
}

/// The source-corpus label a task belongs to (`label/fn_id`).
pub fn task_corpus(task: &ProofTask) -> &str {
    task.task_id.split('/').next().unwrap_or_default()
}

/// Ranked candidates to ordered pairs under the diversity rule: repeated
/// passes over the ranking take at most one hit per source corpus each,
/// until the cap is reached or candidates run out.
fn diversify(ranked: Vec<FewShotPair>, k: usize) -> Vec<FewShotPair> {
    let mut out: Vec<FewShotPair> = Vec::new();
    let mut taken: Vec<bool> = vec![false; ranked.len()];
    while out.len() < k && taken.iter().any(|t| !t) {
        let mut corpora_this_round: BTreeSet<String> = BTreeSet::new();
        let mut picked_any = false;
        for (i, cand) in ranked.iter().enumerate() {
            if out.len() >= k {
                break;
            }
            if taken[i] || corpora_this_round.contains(&cand.source_corpus) {
                continue;
            }
            taken[i] = true;
            corpora_this_round.insert(cand.source_corpus.clone());
            out.push(cand.clone());
            picked_any = true;
        }
        if !picked_any {
            break;
        }
    }
    out
}

/// Few-shot retrieval: query the unverified indices with the task's
/// masked code or its informal summary, map hits to (masked, verified)
/// pairs by doc id, apply the per-corpus diversity rule, cap at `k`,
/// and never return the task's own id.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_few_shot(
    task: &ProofTask,
    indices: &IndexSet,
    mode: QueryMode,
    embedder: &EmbeddingBackend,
    k: usize,
    task_summary: Option<&str>,
    corpus_filter: Option<&str>,
) -> Result<Vec<FewShotPair>> {
    let query_text = match mode {
        QueryMode::CodeQuery => task.masked_text.clone(),
        QueryMode::SummaryQuery => task_summary.unwrap_or(&task.masked_text).to_string(),
    };
    let query = embedder
        .embed(&[query_text])?
        .pop()
        .ok_or_else(|| Error::Backend("embedder returned nothing".into()))?;
    let doc_kind = match mode {
        QueryMode::CodeQuery => DocKind::Code,
        QueryMode::SummaryQuery => DocKind::Summary,
    };

    let exclude: BTreeSet<String> = [task.source_fn.0.clone()].into_iter().collect();
    let eligible: Vec<&IndexedDoc> = indices
        .unverified_docs(doc_kind)
        .filter(|d| corpus_filter.map_or(true, |c| d.record.source_corpus == c))
        .collect();
    let ranked_ids = scan_top_k(
        eligible
            .iter()
            .map(|d| (d.record.doc_id.as_str(), d.record.vector.as_slice())),
        &query,
        eligible.len(),
        &exclude,
    );

    let mut ranked_pairs: Vec<FewShotPair> = Vec::new();
    for (doc_id, _) in ranked_ids {
        if let Some(pair) = resolve_pair(indices, &doc_id) {
            ranked_pairs.push(pair);
        }
    }
    Ok(diversify(ranked_pairs, k))
}

/// A pair needs the unverified (masked) code and its verified
/// counterpart, both resolved by doc id; hits without both are skipped.
fn resolve_pair(indices: &IndexSet, doc_id: &str) -> Option<FewShotPair> {
    let masked = indices.lookup_unverified(doc_id, DocKind::Code)?;
    let verified = indices.lookup_verified(doc_id, DocKind::Code)?;
    Some(FewShotPair {
        doc_id: doc_id.to_string(),
        source_corpus: masked.record.source_corpus.clone(),
        masked_example: masked.text.clone(),
        verified_example: verified.text.clone(),
    })
}

/// One rendered dependency item.
fn render_function_entry(doc: &IndexedDoc, snapshot: &RepoSnapshot) -> String {
    let id = FunctionId(doc.record.doc_id.clone());
    let (signature, mode) = snapshot
        .function(&id)
        .map(|u| (u.signature_text.clone(), u.fn_mode))
        .unwrap_or((doc.record.doc_id.clone(), CodeMode::Unclassified));
    let summary_line = doc
        .text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .unwrap_or("")
        .trim()
        .to_string();
    format!("- {signature} // {mode} fn: {summary_line}")
}

fn render_construct_entry(c: &crate::source::ConstructDef) -> String {
    let fields = if c.field_names.is_empty() {
        String::new()
    } else {
        format!(" {{ {} }}", c.field_names.join(", "))
    };
    format!("- {} {}{} // defined in {}", c.kind, c.name, fields, c.file)
}

/// Dependency retrieval: type-source constructs for context awareness,
/// then summary-similar ghost functions for premise retrieval, rendered
/// greedily in rank order until the token budget is reached. Scoped to
/// the task's own repository.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_dependencies(
    task: &ProofTask,
    local_index: &VectorIndex,
    snapshot: &RepoSnapshot,
    graph: &LinkageGraph,
    embedder: &EmbeddingBackend,
    budget: &TokenBudget,
    task_summary: Option<&str>,
    query_kind: DocKind,
) -> Result<(String, usize)> {
    let corpus = task_corpus(task);
    let mut entries: Vec<String> = Vec::new();

    // Context awareness: source definitions of the task's context types.
    if let Some(unit) = snapshot.function(&task.source_fn) {
        let meta = metadata::extract_metadata(unit, snapshot);
        for c in metadata::resolve_type_sources(&meta, snapshot) {
            entries.push(render_construct_entry(c));
        }
    }

    // Premise retrieval: ghost functions ranked by similarity to the
    // task's summary (or code, per the active index kind).
    let query_text = match query_kind {
        DocKind::Summary => task_summary.unwrap_or(&task.masked_text).to_string(),
        DocKind::Code => task.masked_text.clone(),
    };
    let query = embedder
        .embed(&[query_text])?
        .pop()
        .ok_or_else(|| Error::Backend("embedder returned nothing".into()))?;
    let exclude: BTreeSet<String> = [task.source_fn.0.clone()].into_iter().collect();
    let candidates: Vec<&IndexedDoc> = local_index
        .docs_of_kind(query_kind)
        .filter(|d| d.record.source_corpus == corpus)
        .filter(|d| {
            graph
                .node(&d.record.doc_id)
                .and_then(|n| n.mode)
                .map(|m| matches!(m, CodeMode::Spec | CodeMode::Proof))
                .unwrap_or(false)
        })
        .collect();
    let ranked = scan_top_k(
        candidates
            .iter()
            .map(|d| (d.record.doc_id.as_str(), d.record.vector.as_slice())),
        &query,
        candidates.len(),
        &exclude,
    );
    for (doc_id, _) in ranked {
        if let Some(doc) = candidates.iter().find(|d| d.record.doc_id == doc_id) {
            entries.push(render_function_entry(doc, snapshot));
        }
    }

    Ok(render_greedy(&entries, budget))
}

/// Adds entries in rank order until the next one would exceed the
/// budget, then stops.
fn render_greedy(entries: &[String], budget: &TokenBudget) -> (String, usize) {
    let mut total = 0usize;
    let mut kept: Vec<&str> = Vec::new();
    for e in entries {
        let cost = budget.counter.count(e);
        if total + cost > budget.budget {
            break;
        }
        total += cost;
        kept.push(e);
    }
    (kept.join("\n"), total)
}

/// Retrieval policy matrix: the hybrid default plus the ablation
/// configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalPolicy {
    /// Code similarity for few-shot, summary similarity for deps.
    Hybrid,
    /// Uniform sampling with a seeded RNG for both strategies.
    Random,
    /// Code index for both strategies.
    CodeOnly,
    /// Summary index for both strategies.
    MetadataOnly,
    /// Hybrid with the few-shot pool restricted to the task repository.
    LocalOnly,
    /// Hybrid few-shot; dependency listing replaced by the ground-truth
    /// premise signatures.
    GtPremise,
    /// No retrieval at all (the non-RAG baselines).
    Disabled,
}

/// Maps the ablation matrix name to a policy.
pub fn retrieval_ablation_config(kind: &str) -> Result<RetrievalPolicy> {
    match kind {
        "random" => Ok(RetrievalPolicy::Random),
        "code-only" => Ok(RetrievalPolicy::CodeOnly),
        "metadata-only" => Ok(RetrievalPolicy::MetadataOnly),
        "local-only" => Ok(RetrievalPolicy::LocalOnly),
        "gt-premise" => Ok(RetrievalPolicy::GtPremise),
        "hybrid" => Ok(RetrievalPolicy::Hybrid),
        "none" => Ok(RetrievalPolicy::Disabled),
        other => Err(Error::InvalidConfig(format!(
            "unknown ablation config `{other}`"
        ))),
    }
}

/// Everything a retrieval call needs to see.
pub struct RetrievalSetup<'a> {
    pub indices: &'a IndexSet,
    pub snapshot: &'a RepoSnapshot,
    pub graph: &'a LinkageGraph,
    pub embedder: &'a EmbeddingBackend,
    pub summaries: &'a BTreeMap<FunctionId, String>,
    pub budget: TokenBudget,
    pub seed: u64,
}

fn task_rng(seed: u64, task_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(task_id.as_bytes());
    let digest = hasher.finalize();
    let mut s = [0u8; 32];
    s.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(s)
}

/// Assembles the full bundle for a task under the given policy.
pub fn retrieve_bundle(
    task: &ProofTask,
    setup: &RetrievalSetup<'_>,
    policy: RetrievalPolicy,
) -> Result<RetrievalBundle> {
    let summary = setup.summaries.get(&task.source_fn).map(String::as_str);
    let corpus = task_corpus(task);
    let local_verified = setup
        .indices
        .verified
        .first()
        .ok_or_else(|| Error::InvalidConfig("no verified index loaded".into()))?;

    let (pairs, listing, tokens) = match policy {
        RetrievalPolicy::Disabled => (Vec::new(), String::new(), 0),
        RetrievalPolicy::Random => {
            let mut rng = task_rng(setup.seed, &task.task_id);
            let mut ids: Vec<String> = setup
                .indices
                .unverified_docs(DocKind::Code)
                .map(|d| d.record.doc_id.clone())
                .filter(|id| id != &task.source_fn.0)
                .collect();
            ids.sort();
            ids.shuffle(&mut rng);
            let mut pairs = Vec::new();
            for id in ids {
                if pairs.len() >= DEFAULT_FEW_SHOT_K {
                    break;
                }
                if let Some(pair) = resolve_pair(setup.indices, &id) {
                    pairs.push(pair);
                }
            }
            let mut fn_ids: Vec<String> = setup
                .snapshot
                .functions()
                .filter(|u| matches!(u.fn_mode, CodeMode::Spec | CodeMode::Proof))
                .map(|u| u.id.0.clone())
                .filter(|id| id != &task.source_fn.0)
                .collect();
            fn_ids.sort();
            fn_ids.shuffle(&mut rng);
            let entries: Vec<String> = fn_ids
                .iter()
                .filter_map(|id| {
                    local_verified
                        .doc(id, DocKind::Summary)
                        .or_else(|| local_verified.doc(id, DocKind::Code))
                        .map(|d| render_function_entry(d, setup.snapshot))
                })
                .collect();
            let (listing, tokens) = render_greedy(&entries, &setup.budget);
            (pairs, listing, tokens)
        }
        RetrievalPolicy::CodeOnly => {
            let pairs = retrieve_few_shot(
                task,
                setup.indices,
                QueryMode::CodeQuery,
                setup.embedder,
                DEFAULT_FEW_SHOT_K,
                summary,
                None,
            )?;
            let (listing, tokens) = retrieve_dependencies(
                task,
                local_verified,
                setup.snapshot,
                setup.graph,
                setup.embedder,
                &setup.budget,
                summary,
                DocKind::Code,
            )?;
            (pairs, listing, tokens)
        }
        RetrievalPolicy::MetadataOnly => {
            let pairs = retrieve_few_shot(
                task,
                setup.indices,
                QueryMode::SummaryQuery,
                setup.embedder,
                DEFAULT_FEW_SHOT_K,
                summary,
                None,
            )?;
            let (listing, tokens) = retrieve_dependencies(
                task,
                local_verified,
                setup.snapshot,
                setup.graph,
                setup.embedder,
                &setup.budget,
                summary,
                DocKind::Summary,
            )?;
            (pairs, listing, tokens)
        }
        RetrievalPolicy::LocalOnly => {
            let pairs = retrieve_few_shot(
                task,
                setup.indices,
                QueryMode::CodeQuery,
                setup.embedder,
                DEFAULT_FEW_SHOT_K,
                summary,
                Some(corpus),
            )?;
            let (listing, tokens) = retrieve_dependencies(
                task,
                local_verified,
                setup.snapshot,
                setup.graph,
                setup.embedder,
                &setup.budget,
                summary,
                DocKind::Summary,
            )?;
            (pairs, listing, tokens)
        }
        RetrievalPolicy::GtPremise => {
            let pairs = retrieve_few_shot(
                task,
                setup.indices,
                QueryMode::CodeQuery,
                setup.embedder,
                DEFAULT_FEW_SHOT_K,
                summary,
                None,
            )?;
            let premises = metadata::ground_truth_premises(&task.source_fn, setup.graph)?;
            let entries: Vec<String> = premises
                .iter()
                .filter_map(|p| setup.snapshot.function(p))
                .map(|u| format!("- {} // {} fn", u.signature_text, u.fn_mode))
                .collect();
            let (listing, tokens) = render_greedy(&entries, &setup.budget);
            (pairs, listing, tokens)
        }
        RetrievalPolicy::Hybrid => {
            let pairs = retrieve_few_shot(
                task,
                setup.indices,
                QueryMode::CodeQuery,
                setup.embedder,
                DEFAULT_FEW_SHOT_K,
                summary,
                None,
            )?;
            let (listing, tokens) = retrieve_dependencies(
                task,
                local_verified,
                setup.snapshot,
                setup.graph,
                setup.embedder,
                &setup.budget,
                summary,
                DocKind::Summary,
            )?;
            (pairs, listing, tokens)
        }
    };

    Ok(RetrievalBundle::new(
        task.source_fn.clone(),
        pairs,
        listing,
        tokens,
        setup.budget.budget,
    ))
}

//! Natural-language function summaries used as semantic index documents
//! and dependency context.
//!
//! Summaries have two sections, "Functionality Summary" and "Invoked
//! Functions"; the second is present exactly when the function has
//! invocations, enforced here rather than trusted to the model. Results
//! are cached by (fn_id, prompt_hash) so reruns are free.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{ChatMessage, LlmBackend};
use crate::error::{Error, Result};
use crate::metadata::FunctionMetadata;
use crate::source::FunctionId;

/// Participates in the prompt hash; bump on any template change.
pub const PROMPT_TEMPLATE_VERSION: &str = "summary-v1";

pub const FUNCTIONALITY_HEADING: &str = "### Functionality Summary:";
pub const INVOKED_HEADING: &str = "### Invoked Functions:";

const MAX_SUMMARY_WORDS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformalSummary {
    pub fn_id: FunctionId,
    pub text: String,
    pub model_tag: String,
    pub prompt_hash: String,
}

fn system_prompt() -> String {
    format!(
        "You describe verified functions for retrieval. Reply with a section \
         headed `{FUNCTIONALITY_HEADING}` summarizing purpose, behavior, and key \
         properties in plain language, followed by a section headed \
         `{INVOKED_HEADING}` listing each called function with one line on its \
         role. Omit the second section when nothing is called. No code blocks."
    )
}

fn user_prompt(meta: &FunctionMetadata, code: &str) -> String {
    format!(
        "File: {}\nConstruct: {}\nFunction: {}\nMode: {}\nSignature: {}\nInvocations: {}\nTypes: {}\n\nCode:\n{}",
        meta.location.file,
        meta.location.construct_path.as_deref().unwrap_or("-"),
        meta.location.name,
        meta.fn_mode,
        meta.signature_text,
        meta.invocations.join(", "),
        meta.type_refs.join(", "),
        code
    )
}

pub fn prompt_hash(meta: &FunctionMetadata, code: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(PROMPT_TEMPLATE_VERSION.as_bytes());
    hasher.update(system_prompt().as_bytes());
    hasher.update(user_prompt(meta, code).as_bytes());
    crate::source::hex(&hasher.finalize())[..16].to_string()
}

/// Disk- and memory-backed summary cache; one JSON file per function,
/// keyed by fn_id and prompt hash. Writes are serialized.
#[derive(Debug, Default)]
pub struct SummaryCache {
    dir: Option<PathBuf>,
    mem: Mutex<BTreeMap<(String, String), InformalSummary>>,
}

impl SummaryCache {
    pub fn in_memory() -> Self {
        SummaryCache::default()
    }

    /// Usual location: `.repoverify/summaries/` under the cache root.
    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SummaryCache {
            dir: Some(dir),
            mem: Mutex::new(BTreeMap::new()),
        })
    }

    fn file_for(&self, fn_id: &str, hash: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| {
            let safe: String = fn_id
                .chars()
                .map(|c| if c.is_alphanumeric() { c } else { '_' })
                .collect();
            d.join(format!("{safe}.{hash}.json"))
        })
    }

    pub fn get(&self, fn_id: &str, hash: &str) -> Option<InformalSummary> {
        if let Some(hit) = self
            .mem
            .lock()
            .unwrap()
            .get(&(fn_id.to_string(), hash.to_string()))
        {
            return Some(hit.clone());
        }
        let path = self.file_for(fn_id, hash)?;
        let bytes = std::fs::read(path).ok()?;
        let summary: InformalSummary = serde_json::from_slice(&bytes).ok()?;
        self.mem
            .lock()
            .unwrap()
            .insert((fn_id.to_string(), hash.to_string()), summary.clone());
        Some(summary)
    }

    pub fn put(&self, summary: &InformalSummary) -> Result<()> {
        let mut mem = self.mem.lock().unwrap();
        if let Some(path) = self.file_for(&summary.fn_id.0, &summary.prompt_hash) {
            std::fs::write(&path, serde_json::to_vec_pretty(summary)?)
                .map_err(|e| Error::io(&path, e))?;
        }
        mem.insert(
            (summary.fn_id.0.clone(), summary.prompt_hash.clone()),
            summary.clone(),
        );
        Ok(())
    }
}

/// Truncates to the word cap at a sentence boundary where possible.
fn truncate_at_sentence(text: &str, max_words: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        return text.to_string();
    }
    let head = words[..max_words].join(" ");
    match head.rfind(['.', '!', '?']) {
        Some(pos) if pos > 0 => head[..=pos].to_string(),
        _ => head,
    }
}

/// Post-processing that makes the section invariant hold regardless of
/// what the model produced.
fn enforce_sections(reply: &str, meta: &FunctionMetadata) -> String {
    let mut text = truncate_at_sentence(reply.trim(), MAX_SUMMARY_WORDS);
    let has_invoked = text.contains(INVOKED_HEADING);
    if meta.invocations.is_empty() {
        if let Some(pos) = text.find(INVOKED_HEADING) {
            text.truncate(pos);
            text = text.trim_end().to_string();
        }
    } else if !has_invoked {
        let listing: String = meta
            .invocations
            .iter()
            .map(|i| format!("- `{i}`: invoked by this function."))
            .collect::<Vec<_>>()
            .join("\n");
        text = format!("{text}\n\n{INVOKED_HEADING}\n{listing}");
    }
    if !text.contains(FUNCTIONALITY_HEADING) {
        text = format!("{FUNCTIONALITY_HEADING}\n{text}");
    }
    text
}

/// Produces (or recalls) the informal summary for one function. One
/// retry on backend failure, then None: the caller falls back to
/// code-only indexing for this function.
pub fn summarize_function(
    meta: &FunctionMetadata,
    code: &str,
    llm: &LlmBackend,
    cache: &SummaryCache,
) -> Result<Option<InformalSummary>> {
    let fn_id = FunctionId::new(
        &meta.location.file,
        meta.location.construct_path.as_deref(),
        &meta.location.name,
    );
    let hash = prompt_hash(meta, code);
    if let Some(hit) = cache.get(&fn_id.0, &hash) {
        return Ok(Some(hit));
    }
    let messages = [
        ChatMessage::system(system_prompt()),
        ChatMessage::user(user_prompt(meta, code)),
    ];
    let reply = match llm.chat(&messages, 0.0, None) {
        Ok(r) => r,
        Err(_) => match llm.chat(&messages, 0.0, None) {
            Ok(r) => r,
            Err(_) => return Ok(None),
        },
    };
    let text = enforce_sections(&reply, meta);
    assert!(!text.is_empty());
    let summary = InformalSummary {
        fn_id,
        text,
        model_tag: llm.model_tag().to_string(),
        prompt_hash: hash,
    };
    cache.put(&summary)?;
    Ok(Some(summary))
}

/// Summaries for a whole snapshot, issued through a bounded in-flight
/// cap. Functions whose backend calls fail are simply absent.
pub fn summarize_snapshot(
    snapshot: &crate::source::RepoSnapshot,
    llm: &LlmBackend,
    cache: &SummaryCache,
    in_flight_cap: usize,
) -> Result<BTreeMap<FunctionId, InformalSummary>> {
    let units: Vec<&crate::source::FunctionUnit> = snapshot.functions().collect();
    let results = crate::backends::pool_map(in_flight_cap.max(1), &units, |unit| {
        let meta = crate::metadata::extract_metadata(unit, snapshot);
        summarize_function(&meta, &unit.text(), llm, cache)
    });
    let mut out = BTreeMap::new();
    for (unit, res) in units.iter().zip(results) {
        if let Some(summary) = res? {
            out.insert(unit.id.clone(), summary);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockLlmScript;
    use crate::metadata::Location;
    use crate::modes::CodeMode;

    fn meta_with(invocations: Vec<&str>) -> FunctionMetadata {
        FunctionMetadata {
            location: Location {
                file: "src/hash.rs".into(),
                construct_path: None,
                name: "digest_bytes".into(),
            },
            signature_text: "pub fn digest_bytes(data: &[u8]) -> (out: [u8; 32])".into(),
            invocations: invocations.into_iter().map(String::from).collect(),
            type_refs: vec![],
            fn_mode: CodeMode::Exec,
            summary: None,
        }
    }

    #[test]
    fn canned_summary_comes_back_with_sections() {
        let llm = LlmBackend::mock(MockLlmScript::Fixed(format!(
            "{FUNCTIONALITY_HEADING}\nComputes a SHA-256 hash of input bytes, enforcing non-null \
             pointers and initializing a secure context.\n\n{INVOKED_HEADING}\n- `update`: feeds bytes."
        )));
        let cache = SummaryCache::in_memory();
        let meta = meta_with(vec!["update"]);
        let summary = summarize_function(&meta, "fn digest_bytes() {}", &llm, &cache)
            .unwrap()
            .unwrap();
        assert!(summary
            .text
            .contains("Computes a SHA-256 hash of input bytes"));
        assert!(summary.text.contains(INVOKED_HEADING));
        assert_eq!(summary.model_tag, "mock");
    }

    #[test]
    fn no_invocations_means_no_invoked_section() {
        let llm = LlmBackend::mock(MockLlmScript::Fixed(format!(
            "{FUNCTIONALITY_HEADING}\nDoes arithmetic.\n\n{INVOKED_HEADING}\n- `spurious`: not real."
        )));
        let cache = SummaryCache::in_memory();
        let meta = meta_with(vec![]);
        let summary = summarize_function(&meta, "fn f() {}", &llm, &cache)
            .unwrap()
            .unwrap();
        assert!(!summary.text.contains(INVOKED_HEADING));
        assert!(summary.text.contains("Does arithmetic"));
    }

    #[test]
    fn missing_invoked_section_is_added_from_metadata() {
        let llm = LlmBackend::mock(MockLlmScript::Fixed("Just a bare description.".into()));
        let cache = SummaryCache::in_memory();
        let meta = meta_with(vec!["update", "finalize"]);
        let summary = summarize_function(&meta, "fn f() {}", &llm, &cache)
            .unwrap()
            .unwrap();
        assert!(summary.text.contains(INVOKED_HEADING));
        assert!(summary.text.contains("`update`"));
        assert!(summary.text.contains("`finalize`"));
        assert!(summary.text.starts_with(FUNCTIONALITY_HEADING));
    }

    #[test]
    fn cache_hit_issues_zero_backend_calls() {
        let llm = LlmBackend::mock(MockLlmScript::Fixed("Summary text.".into()));
        let cache = SummaryCache::in_memory();
        let meta = meta_with(vec![]);
        let first = summarize_function(&meta, "fn f() {}", &llm, &cache)
            .unwrap()
            .unwrap();
        assert_eq!(llm.call_count(), 1);
        let second = summarize_function(&meta, "fn f() {}", &llm, &cache)
            .unwrap()
            .unwrap();
        assert_eq!(llm.call_count(), 1, "second call must be a cache hit");
        assert_eq!(first, second);
        // Changed code changes the prompt hash and misses the cache.
        summarize_function(&meta, "fn f() { 1 }", &llm, &cache).unwrap();
        assert_eq!(llm.call_count(), 2);
    }

    #[test]
    fn disk_cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let llm = LlmBackend::mock(MockLlmScript::Fixed("On disk.".into()));
        let meta = meta_with(vec![]);
        {
            let cache = SummaryCache::on_disk(dir.path()).unwrap();
            summarize_function(&meta, "fn f() {}", &llm, &cache).unwrap();
        }
        let cache = SummaryCache::on_disk(dir.path()).unwrap();
        let hit = summarize_function(&meta, "fn f() {}", &llm, &cache)
            .unwrap()
            .unwrap();
        assert!(hit.text.contains("On disk"));
        assert_eq!(llm.call_count(), 1);
    }

    #[test]
    fn backend_failure_after_retry_skips_the_function() {
        let llm = LlmBackend::mock(MockLlmScript::Fail);
        let cache = SummaryCache::in_memory();
        let meta = meta_with(vec![]);
        let out = summarize_function(&meta, "fn f() {}", &llm, &cache).unwrap();
        assert!(out.is_none());
        assert_eq!(llm.call_count(), 2, "exactly one retry");
    }

    #[test]
    fn long_replies_truncate_at_a_sentence() {
        let long = format!(
            "{} {}",
            "First sentence.",
            (0..600).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
        );
        let out = truncate_at_sentence(&long, 400);
        assert!(out.split_whitespace().count() <= 400);
        assert!(out.ends_with('.'));
    }
}

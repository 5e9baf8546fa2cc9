//! Pluggable verifier, LLM, and embedding backends with deterministic
//! mocks. CI runs entirely on the mocks; the subprocess verifier and the
//! HTTP clients exist for live runs against a real toolchain and hosted
//! models.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tasks::PatchedSnapshot;

pub const LLM_TOKEN_ENV: &str = "REPOVERIFY_LLM_TOKEN";
pub const EMBED_TOKEN_ENV: &str = "REPOVERIFY_EMBED_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub pass: bool,
    pub diagnostics: String,
    pub timed_out: bool,
}

impl VerifyOutcome {
    pub fn pass() -> Self {
        VerifyOutcome {
            pass: true,
            diagnostics: String::new(),
            timed_out: false,
        }
    }

    pub fn fail(diagnostics: impl Into<String>) -> Self {
        VerifyOutcome {
            pass: false,
            diagnostics: diagnostics.into(),
            timed_out: false,
        }
    }

    pub fn timeout() -> Self {
        VerifyOutcome {
            pass: false,
            diagnostics: "timeout".to_string(),
            timed_out: true,
        }
    }
}

/// Deterministic verifier stand-ins. Every outcome is a pure function of
/// the patched function id and candidate text, so runs replay exactly.
#[derive(Debug, Clone)]
pub enum MockVerifier {
    AlwaysPass,
    AlwaysFail { diagnostics: String },
    /// Fails exactly the listed function ids, passes everything else.
    FailFns { fail: Vec<String>, diagnostics: String },
    /// Passes iff the candidate equals the recorded ground truth for the
    /// patched function, compared modulo trailing whitespace per line.
    AcceptGroundTruth { truths: BTreeMap<String, String> },
    /// Keyed on exact candidate text; unknown candidates get `fallback`.
    Scripted {
        by_candidate: BTreeMap<String, VerifyOutcome>,
        fallback: Box<VerifyOutcome>,
    },
    Timeout,
}

pub fn eq_modulo_trailing_ws(a: &str, b: &str) -> bool {
    let ta: Vec<&str> = a.lines().map(str::trim_end).collect();
    let tb: Vec<&str> = b.lines().map(str::trim_end).collect();
    ta == tb
}

#[derive(Debug, Clone)]
pub enum VerifierBackend {
    Subprocess {
        binary_path: PathBuf,
        args: Vec<String>,
        timeout_s: u64,
    },
    Mock(MockVerifier),
}

impl VerifierBackend {
    pub fn verify(&self, patched: &PatchedSnapshot) -> VerifyOutcome {
        match self {
            VerifierBackend::Mock(mock) => mock_verify(mock, patched),
            VerifierBackend::Subprocess {
                binary_path,
                args,
                timeout_s,
            } => subprocess_verify(binary_path, args, *timeout_s, patched),
        }
    }
}

fn mock_verify(mock: &MockVerifier, patched: &PatchedSnapshot) -> VerifyOutcome {
    match mock {
        MockVerifier::AlwaysPass => VerifyOutcome::pass(),
        MockVerifier::AlwaysFail { diagnostics } => VerifyOutcome::fail(diagnostics.clone()),
        MockVerifier::FailFns { fail, diagnostics } => {
            if fail.iter().any(|f| f == &patched.patched_fn.0) {
                VerifyOutcome::fail(diagnostics.clone())
            } else {
                VerifyOutcome::pass()
            }
        }
        MockVerifier::AcceptGroundTruth { truths } => match truths.get(&patched.patched_fn.0) {
            Some(truth) if eq_modulo_trailing_ws(truth, &patched.candidate_text) => {
                VerifyOutcome::pass()
            }
            Some(_) => VerifyOutcome::fail(format!(
                "error: proof obligations not discharged for {} at line 1",
                patched.patched_fn
            )),
            None => VerifyOutcome::fail(format!(
                "error: unknown function {} at line 1",
                patched.patched_fn
            )),
        },
        MockVerifier::Scripted {
            by_candidate,
            fallback,
        } => by_candidate
            .get(&patched.candidate_text)
            .cloned()
            .unwrap_or_else(|| (**fallback).clone()),
        MockVerifier::Timeout => VerifyOutcome::timeout(),
    }
}

/// Materializes the snapshot to a temp tree and runs the verifier binary
/// on it. Verification scope is the materialized tree (one crate);
/// recorded in the diagnostics header.
fn subprocess_verify(
    binary_path: &PathBuf,
    args: &[String],
    timeout_s: u64,
    patched: &PatchedSnapshot,
) -> VerifyOutcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return VerifyOutcome::fail(format!("materialization failed: {e}")),
    };
    for file in &patched.snapshot.files {
        let path = dir.path().join(&file.relative_path);
        if let Some(parent) = path.parent() {
            if std::fs::create_dir_all(parent).is_err() {
                return VerifyOutcome::fail("materialization failed: mkdir".to_string());
            }
        }
        if std::fs::write(&path, &file.content).is_err() {
            return VerifyOutcome::fail("materialization failed: write".to_string());
        }
    }

    let mut cmd = std::process::Command::new(binary_path);
    cmd.args(args)
        .arg(dir.path())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped());
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            return VerifyOutcome::fail(format!(
                "missing verifier binary {}: {e}",
                binary_path.display()
            ))
        }
    };

    let deadline = Instant::now() + Duration::from_secs(timeout_s);
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                let out = child.wait_with_output().ok();
                let mut diagnostics = format!("scope: materialized tree\n");
                if let Some(out) = out {
                    diagnostics.push_str(&String::from_utf8_lossy(&out.stdout));
                    diagnostics.push_str(&String::from_utf8_lossy(&out.stderr));
                }
                return VerifyOutcome {
                    pass: status.success(),
                    diagnostics,
                    timed_out: false,
                };
            }
            Ok(None) => {
                if Instant::now() > deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return VerifyOutcome::timeout();
                }
                std::thread::sleep(Duration::from_millis(25));
            }
            Err(e) => return VerifyOutcome::fail(format!("wait failed: {e}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Scripted replies for the mock LLM.
#[derive(Debug, Clone)]
pub enum MockLlmScript {
    /// Global reply sequence; repeats the last entry when exhausted.
    Canned(Vec<String>),
    /// Replies with the recorded text whose needle occurs in the prompt,
    /// wrapped in a code fence, but only from the `succeed_after`-th call
    /// for that needle (1-based); earlier calls echo the needle itself.
    GroundTruthEcho {
        pairs: Vec<(String, String)>,
        succeed_after: u64,
    },
    Fixed(String),
    Fail,
}

#[derive(Debug)]
enum LlmKind {
    Http {
        endpoint: String,
        model_tag: String,
    },
    Mock {
        script: MockLlmScript,
        per_needle: Mutex<BTreeMap<usize, u64>>,
    },
}

/// LLM backend with a built-in request counter for budget audits.
#[derive(Debug)]
pub struct LlmBackend {
    kind: LlmKind,
    calls: AtomicU64,
}

impl LlmBackend {
    pub fn http(endpoint: impl Into<String>, model_tag: impl Into<String>) -> Self {
        LlmBackend {
            kind: LlmKind::Http {
                endpoint: endpoint.into(),
                model_tag: model_tag.into(),
            },
            calls: AtomicU64::new(0),
        }
    }

    pub fn mock(script: MockLlmScript) -> Self {
        LlmBackend {
            kind: LlmKind::Mock {
                script,
                per_needle: Mutex::new(BTreeMap::new()),
            },
            calls: AtomicU64::new(0),
        }
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn model_tag(&self) -> &str {
        match &self.kind {
            LlmKind::Http { model_tag, .. } => model_tag,
            LlmKind::Mock { .. } => "mock",
        }
    }

    pub fn chat(
        &self,
        messages: &[ChatMessage],
        temperature: f64,
        seed: Option<u64>,
    ) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.kind {
            LlmKind::Http {
                endpoint,
                model_tag,
            } => http_chat(endpoint, model_tag, messages, temperature, seed),
            LlmKind::Mock { script, per_needle } => {
                let call_index = self.calls.load(Ordering::SeqCst);
                mock_chat(script, per_needle, messages, call_index)
            }
        }
    }
}

fn mock_chat(
    script: &MockLlmScript,
    per_needle: &Mutex<BTreeMap<usize, u64>>,
    messages: &[ChatMessage],
    call_index: u64,
) -> Result<String> {
    let prompt: String = messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    match script {
        MockLlmScript::Fixed(text) => Ok(text.clone()),
        MockLlmScript::Fail => Err(Error::Backend("mock llm scripted failure".into())),
        MockLlmScript::Canned(replies) => {
            let idx = ((call_index - 1) as usize).min(replies.len().saturating_sub(1));
            replies
                .get(idx)
                .cloned()
                .ok_or_else(|| Error::Backend("mock llm has no canned replies".into()))
        }
        MockLlmScript::GroundTruthEcho {
            pairs,
            succeed_after,
        } => {
            for (i, (needle, reply)) in pairs.iter().enumerate() {
                if prompt.contains(needle.as_str()) {
                    let mut counts = per_needle.lock().unwrap();
                    let n = counts.entry(i).or_insert(0);
                    *n += 1;
                    let body = if *n >= *succeed_after { reply } else { needle };
                    return Ok(format!(
                        "Completed function with restored proof annotations:\n\n```verus\n{body}\n```\n"
                    ));
                }
            }
            Err(Error::Backend(
                "mock llm found no known task text in the prompt".into(),
            ))
        }
    }
}

/// Wire contract: POST `{model, messages, temperature, seed?}` to the
/// endpoint, bearer token from `REPOVERIFY_LLM_TOKEN`; reply `{text}`.
fn http_chat(
    endpoint: &str,
    model_tag: &str,
    messages: &[ChatMessage],
    temperature: f64,
    seed: Option<u64>,
) -> Result<String> {
    let payload = serde_json::json!({
        "model": model_tag,
        "messages": messages.iter().map(|m| {
            serde_json::json!({"role": m.role, "content": m.content})
        }).collect::<Vec<_>>(),
        "temperature": temperature,
        "seed": seed,
    });
    let client = reqwest::blocking::Client::new();
    let mut req = client.post(endpoint).json(&payload);
    if let Ok(token) = std::env::var(LLM_TOKEN_ENV) {
        req = req.bearer_auth(token);
    }
    let resp = req
        .send()
        .map_err(|e| Error::Backend(format!("llm request failed: {e}")))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(Error::Backend(format!("llm endpoint returned {status}")));
    }
    let body: serde_json::Value = resp
        .json()
        .map_err(|e| Error::Backend(format!("llm reply not json: {e}")))?;
    body["text"]
        .as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| Error::Backend("llm reply missing `text`".into()))
}

/// Maps text to a deterministic unit vector: the sha256 of the text
/// seeds a stream of uniform components which are then L2-normalized.
pub fn hash_to_unit_vector(text: &str, dimension: usize) -> Vec<f32> {
    let digest = Sha256::digest(text.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f32> = (0..dimension).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

#[derive(Debug, Clone)]
pub enum EmbedScript {
    /// Deterministic hash-to-vector embedding.
    Hash,
    /// Fixed vectors for exact texts, hash fallback for the rest.
    Table(BTreeMap<String, Vec<f32>>),
}

#[derive(Debug)]
enum EmbedKind {
    Http { endpoint: String },
    Mock { script: EmbedScript },
}

pub const MOCK_EMBED_DIMENSION: usize = 64;

/// Embedding backend with a request counter for rebuild-skip audits.
#[derive(Debug)]
pub struct EmbeddingBackend {
    kind: EmbedKind,
    dimension: usize,
    calls: AtomicU64,
}

impl EmbeddingBackend {
    pub fn http(endpoint: impl Into<String>, dimension: usize) -> Self {
        EmbeddingBackend {
            kind: EmbedKind::Http {
                endpoint: endpoint.into(),
            },
            dimension,
            calls: AtomicU64::new(0),
        }
    }

    pub fn mock() -> Self {
        Self::mock_with(EmbedScript::Hash, MOCK_EMBED_DIMENSION)
    }

    pub fn mock_with(script: EmbedScript, dimension: usize) -> Self {
        EmbeddingBackend {
            kind: EmbedKind::Mock { script },
            dimension,
            calls: AtomicU64::new(0),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.kind {
            EmbedKind::Mock { script } => Ok(texts
                .iter()
                .map(|t| match script {
                    EmbedScript::Hash => hash_to_unit_vector(t, self.dimension),
                    EmbedScript::Table(table) => table
                        .get(t)
                        .cloned()
                        .unwrap_or_else(|| hash_to_unit_vector(t, self.dimension)),
                })
                .collect()),
            EmbedKind::Http { endpoint } => {
                let payload = serde_json::json!({ "texts": texts });
                let client = reqwest::blocking::Client::new();
                let mut req = client.post(endpoint).json(&payload);
                if let Ok(token) = std::env::var(EMBED_TOKEN_ENV) {
                    req = req.bearer_auth(token);
                }
                let resp = req
                    .send()
                    .map_err(|e| Error::Backend(format!("embed request failed: {e}")))?;
                if !resp.status().is_success() {
                    return Err(Error::Backend(format!(
                        "embed endpoint returned {}",
                        resp.status()
                    )));
                }
                let body: serde_json::Value = resp
                    .json()
                    .map_err(|e| Error::Backend(format!("embed reply not json: {e}")))?;
                let vectors: Vec<Vec<f32>> = serde_json::from_value(body["vectors"].clone())
                    .map_err(|e| Error::Backend(format!("embed reply missing vectors: {e}")))?;
                for v in &vectors {
                    if v.len() != self.dimension {
                        return Err(Error::DimensionMismatch {
                            expected: self.dimension,
                            actual: v.len(),
                        });
                    }
                }
                Ok(vectors)
            }
        }
    }
}

/// Bounded parallel map preserving input order. One global pool bounds
/// verifier subprocesses; mocks run through the same path.
pub fn pool_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    let next = AtomicU64::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let slots_ptr = Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..workers {
            let next = &next;
            let f = &f;
            let slots_ptr = &slots_ptr;
            handles.push(scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst) as usize;
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                let mut guard = slots_ptr.lock().unwrap();
                guard[i] = Some(r);
            }));
        }
        for h in handles {
            let _ = h.join();
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_vectors_are_unit_and_deterministic() {
        let a = hash_to_unit_vector("fn f() {}", 64);
        let b = hash_to_unit_vector("fn f() {}", 64);
        let c = hash_to_unit_vector("fn g() {}", 64);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let norm: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn mock_embedder_counts_calls() {
        let e = EmbeddingBackend::mock();
        assert_eq!(e.call_count(), 0);
        e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(e.call_count(), 1);
        e.embed(&[]).unwrap();
        assert_eq!(e.call_count(), 1, "empty batches are free");
    }

    #[test]
    fn canned_llm_replies_in_order_then_repeats() {
        let llm = LlmBackend::mock(MockLlmScript::Canned(vec!["one".into(), "two".into()]));
        let msg = [ChatMessage::user("hi")];
        assert_eq!(llm.chat(&msg, 0.0, None).unwrap(), "one");
        assert_eq!(llm.chat(&msg, 0.0, None).unwrap(), "two");
        assert_eq!(llm.chat(&msg, 0.0, None).unwrap(), "two");
        assert_eq!(llm.call_count(), 3);
    }

    #[test]
    fn ground_truth_echo_waits_for_nth_call() {
        let llm = LlmBackend::mock(MockLlmScript::GroundTruthEcho {
            pairs: vec![("MASKED".into(), "TRUTH".into())],
            succeed_after: 2,
        });
        let msg = [ChatMessage::user("task: MASKED please")];
        let first = llm.chat(&msg, 1.0, Some(1)).unwrap();
        assert!(first.contains("MASKED") && !first.contains("TRUTH"));
        let second = llm.chat(&msg, 1.0, Some(1)).unwrap();
        assert!(second.contains("TRUTH"));
    }

    #[test]
    fn pool_map_preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let out = pool_map(4, &items, |x| x * 2);
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn eq_modulo_trailing_whitespace() {
        assert!(eq_modulo_trailing_ws("a\nb", "a  \nb\t"));
        assert!(!eq_modulo_trailing_ws("a\nb", "a\n  b"));
    }
}

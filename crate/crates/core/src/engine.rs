//! Prompt assembly, direct generation, and the three-part ensemble
//! refinement (candidate merging, rule-based refine templates, adaptive
//! repair), all under a hard LLM call budget.

use std::collections::BTreeMap;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{ChatMessage, LlmBackend, VerifierBackend};
use crate::error::{Error, Result};
use crate::eval::{evaluate_candidate, EvalResult};
use crate::modes::{classify_function, CodeMode};
use crate::retrieval::{RetrievalBundle, RetrievalPolicy};
use crate::source::RepoSnapshot;
use crate::tasks::ProofTask;

/// Static instruction preamble, byte-identical across RAG and non-RAG
/// configurations for the same task.
pub const INSTRUCTION_PREAMBLE: &str = "\
You are completing proofs for a verification-aware dialect of Rust in which \
functions carry spec mode clauses (requires, ensures), proof mode content \
(proof blocks, assert and assume statements, loop invariants, decreases \
measures, ghost declarations), and exec mode code compiled normally.

The task function below has had all proof annotations removed. Restore proof \
annotations so that the function verifies:
- Keep every executable statement and every requires/ensures clause exactly \
as given; do not add, remove, or reword them.
- Add only proof-mode content: proof { } blocks, assert/assume statements, \
loop invariants, decreases clauses, and ghost bindings.
- Integer reasoning inside proofs uses the mathematical integer type int; \
avoid fixed-width types in ghost code.
- Reply with the complete function in a single fenced code block.";

/// Tutorial-style padding examples used by non-RAG prompts so the
/// instruction framing stays comparable.
pub fn static_examples() -> Vec<(String, String)> {
    vec![
        (
            "fn double_bounded(x: u16) -> (r: u32)\n    requires\n        x < 1000,\n    ensures\n        r == 2 * x,\n{\n    let r: u32 = 2 * (x as u32);\n    r\n}".to_string(),
            "fn double_bounded(x: u16) -> (r: u32)\n    requires\n        x < 1000,\n    ensures\n        r == 2 * x,\n{\n    let r: u32 = 2 * (x as u32);\n    assert(r == 2 * x);\n    r\n}".to_string(),
        ),
        (
            "fn count_up(n: u8) -> (c: u8)\n    ensures\n        c == n,\n{\n    let mut c: u8 = 0;\n    let mut i: u8 = 0;\n    while i < n\n    {\n        i = i + 1;\n        c = c + 1;\n    }\n    c\n}".to_string(),
            "fn count_up(n: u8) -> (c: u8)\n    ensures\n        c == n,\n{\n    let mut c: u8 = 0;\n    let mut i: u8 = 0;\n    while i < n\n        invariant\n            i <= n,\n            c == i,\n        decreases n - i,\n    {\n        i = i + 1;\n        c = c + 1;\n    }\n    c\n}".to_string(),
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    DirectGreedy,
    DirectSample,
    Refinement,
    RagDirect,
    RagRefinement,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "direct-greedy" => Ok(Strategy::DirectGreedy),
            "direct-sample" => Ok(Strategy::DirectSample),
            "refinement" => Ok(Strategy::Refinement),
            "rag-direct" => Ok(Strategy::RagDirect),
            "rag-refinement" => Ok(Strategy::RagRefinement),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }

    pub fn uses_retrieval(&self) -> bool {
        matches!(self, Strategy::RagDirect | Strategy::RagRefinement)
    }

    pub fn is_refinement(&self) -> bool {
        matches!(self, Strategy::Refinement | Strategy::RagRefinement)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::DirectGreedy => "direct-greedy",
            Strategy::DirectSample => "direct-sample",
            Strategy::Refinement => "refinement",
            Strategy::RagDirect => "rag-direct",
            Strategy::RagRefinement => "rag-refinement",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub strategy: Strategy,
    pub n_initial_samples: u32,
    pub max_repair_rounds: u32,
    pub temperature: f64,
    pub max_llm_calls: u32,
    pub retrieval_policy: RetrievalPolicy,
    pub seed: u64,
}

impl GenerationConfig {
    /// Default budgets: sampling draws three candidates, greedy decodes
    /// once at temperature zero, refinement takes two initial samples
    /// plus up to two repairs for at most four calls total.
    pub fn for_strategy(strategy: Strategy) -> Self {
        let (n, repairs, temp, max_calls) = match strategy {
            Strategy::DirectGreedy => (1, 0, 0.0, 1),
            Strategy::DirectSample | Strategy::RagDirect => (3, 0, 1.0, 3),
            Strategy::Refinement | Strategy::RagRefinement => (2, 2, 1.0, 4),
        };
        let retrieval_policy = if strategy.uses_retrieval() {
            RetrievalPolicy::Hybrid
        } else {
            RetrievalPolicy::Disabled
        };
        GenerationConfig {
            strategy,
            n_initial_samples: n,
            max_repair_rounds: repairs,
            temperature: temp,
            max_llm_calls: max_calls,
            retrieval_policy,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy == Strategy::DirectGreedy
            && (self.temperature != 0.0 || self.n_initial_samples != 1)
        {
            return Err(Error::InvalidConfig(
                "greedy decoding requires temperature 0 and a single sample".into(),
            ));
        }
        if self.strategy.is_refinement()
            && self.n_initial_samples + self.max_repair_rounds > self.max_llm_calls
        {
            return Err(Error::InvalidConfig(format!(
                "samples {} + repairs {} exceed the call budget {}",
                self.n_initial_samples, self.max_repair_rounds, self.max_llm_calls
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Initial,
    Merged,
    TemplateFixed,
    Repaired,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Initial => "initial",
            Stage::Merged => "merged",
            Stage::TemplateFixed => "template-fixed",
            Stage::Repaired => "repaired",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofCandidate {
    pub task_id: String,
    pub text: String,
    pub stage: Stage,
    pub attempt: u32,
    pub llm_calls_consumed: u32,
    pub verifier_feedback: Option<String>,
    /// Extraction failed; the raw reply is retained for accounting.
    pub malformed: bool,
}

/// Builds the prompt: fixed preamble, then example pairs (retrieved for
/// RAG configurations, the static tutorial pairs otherwise), then the
/// dependency listing when present, then the masked task.
pub fn assemble_prompt(
    task: &ProofTask,
    bundle: &RetrievalBundle,
    config: &GenerationConfig,
) -> String {
    let mut out = String::from(INSTRUCTION_PREAMBLE);
    out.push_str("\n\n### Reference examples\n");
    let pairs: Vec<(String, String)> = if config.retrieval_policy == RetrievalPolicy::Disabled
        || bundle.few_shot_pairs.is_empty()
    {
        static_examples()
    } else {
        bundle
            .few_shot_pairs
            .iter()
            .map(|p| (p.masked_example.clone(), p.verified_example.clone()))
            .collect()
    };
    for (masked, verified) in pairs {
        out.push_str(&format!(
            "#### Example problem:\n```verus\n{masked}\n```\n#### Example solution:\n```verus\n{verified}\n```\n"
        ));
    }
    if !bundle.dependency_listing.is_empty() {
        out.push_str(&format!(
            "\n### Verified repository context\n{}\n",
            bundle.dependency_listing
        ));
    }
    out.push_str(&format!(
        "\n### Task\nThe proof annotations have been removed from this function. \
         Reply with the completed function.\n```verus\n{}\n```\n",
        task.masked_text
    ));
    out
}

/// Pulls one function out of an LLM reply: prefer the last fenced code
/// block, then take the first fn item found.
pub fn extract_candidate(reply: &str) -> Result<String> {
    let block = last_fenced_block(reply).unwrap_or_else(|| reply.to_string());
    let functions = crate::source::scan_functions_text(&block)
        .map_err(|e| Error::MalformedCandidate(e.to_string()))?;
    match functions.first() {
        Some(unit) => Ok(block[unit.span.start..unit.span.end].to_string()),
        None => Err(Error::MalformedCandidate(
            "no function item in reply".into(),
        )),
    }
}

fn last_fenced_block(reply: &str) -> Option<String> {
    let mut blocks = Vec::new();
    let mut in_block = false;
    let mut current = String::new();
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            if in_block {
                blocks.push(std::mem::take(&mut current));
                in_block = false;
            } else {
                in_block = true;
            }
            continue;
        }
        if in_block {
            current.push_str(line);
            current.push('\n');
        }
    }
    blocks.pop().map(|b| b.trim_end().to_string())
}

/// Samples `n_initial_samples` candidates from one prompt. Extraction
/// failures become malformed candidates, kept for accounting.
pub fn generate_direct(
    task: &ProofTask,
    bundle: &RetrievalBundle,
    config: &GenerationConfig,
    llm: &LlmBackend,
) -> Result<Vec<ProofCandidate>> {
    let prompt = assemble_prompt(task, bundle, config);
    let messages = [
        ChatMessage::system("You complete verification annotations.".to_string()),
        ChatMessage::user(prompt),
    ];
    let mut out = Vec::new();
    for attempt in 0..config.n_initial_samples {
        let seed = config.seed.wrapping_add(attempt as u64);
        let reply = match llm.chat(&messages, config.temperature, Some(seed)) {
            Ok(r) => r,
            Err(_) => break, // backend exhaustion: fewer candidates
        };
        let (text, malformed) = match extract_candidate(&reply) {
            Ok(t) => (t, false),
            Err(_) => (reply, true),
        };
        out.push(ProofCandidate {
            task_id: task.task_id.clone(),
            text,
            stage: Stage::Initial,
            attempt,
            llm_calls_consumed: attempt + 1,
            verifier_feedback: None,
            malformed,
        });
    }
    Ok(out)
}

/// One diagnostic parsed out of verifier feedback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub text: String,
    /// Function-relative 0-based line, when the feedback named one.
    pub line: Option<usize>,
}

/// Splits feedback into diagnostics and maps `line N` references through
/// the reinsertion offset (the 1-based file line where the patched
/// function starts).
pub fn parse_feedback(feedback: &str, line_offset: usize) -> Vec<Diagnostic> {
    let re = Regex::new(r"(?i)line\s+(\d+)").unwrap();
    feedback
        .lines()
        .filter(|l| l.to_lowercase().contains("error"))
        .map(|l| {
            let line = re.captures(l).and_then(|c| c[1].parse::<usize>().ok()).map(
                |file_line| file_line.saturating_sub(line_offset).saturating_sub(1),
            );
            Diagnostic {
                text: l.to_string(),
                line,
            }
        })
        .collect()
}

/// Cuts a candidate into the unmasked skeleton plus proof regions keyed
/// by slot (the number of skeleton lines before the region).
fn slot_map(candidate_text: &str) -> Option<(Vec<String>, BTreeMap<usize, Vec<String>>, Vec<(usize, usize, usize)>)> {
    let mut unit = crate::source::parse_function_text(candidate_text).ok()?;
    classify_function(&mut unit).ok()?;
    let mut skeleton: Vec<String> = Vec::new();
    let mut slots: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    // (start_line, end_line, slot) for error attribution.
    let mut regions: Vec<(usize, usize, usize)> = Vec::new();
    for line in &unit.lines {
        if line.is_maskable() {
            let slot = skeleton.len();
            slots.entry(slot).or_default().push(line.text.clone());
            match regions.last_mut() {
                Some((_, end, s)) if *s == slot && *end + 1 == line.index => *end = line.index,
                _ => regions.push((line.index, line.index, slot)),
            }
        } else {
            skeleton.push(line.text.clone());
        }
    }
    Some((skeleton, slots, regions))
}

/// Region-level candidate merging: for every proof slot take the lines
/// from the candidate whose verification reported the fewest errors
/// attributable to that slot. Consumes no LLM calls.
pub fn merge_candidates(
    candidates: &[ProofCandidate],
    feedback_line_offset: usize,
) -> Option<ProofCandidate> {
    let usable: Vec<(&ProofCandidate, _)> = candidates
        .iter()
        .filter(|c| !c.malformed && c.verifier_feedback.is_some())
        .filter_map(|c| slot_map(&c.text).map(|m| (c, m)))
        .collect();
    if usable.len() < 2 {
        return None;
    }

    // Candidates must share the skeleton; merging across different
    // skeletons would splice unrelated code.
    let skeleton = &usable[0].1 .0;
    if !usable.iter().all(|(_, (s, _, _))| s == skeleton) {
        return None;
    }

    // Errors attributed per (candidate, slot).
    let mut slot_errors: Vec<BTreeMap<usize, u32>> = Vec::new();
    for (cand, (_, slots, regions)) in &usable {
        let mut errors: BTreeMap<usize, u32> = slots.keys().map(|s| (*s, 0)).collect();
        let feedback = cand.verifier_feedback.as_deref().unwrap_or_default();
        for diag in parse_feedback(feedback, feedback_line_offset) {
            let slot = diag
                .line
                .and_then(|l| regions.iter().find(|(a, b, _)| l >= *a && l <= *b))
                .map(|(_, _, s)| *s);
            match slot {
                Some(s) => *errors.entry(s).or_insert(0) += 1,
                // Unmappable errors count against all regions.
                None => errors.values_mut().for_each(|v| *v += 1),
            }
        }
        slot_errors.push(errors);
    }

    let all_slots: std::collections::BTreeSet<usize> = usable
        .iter()
        .flat_map(|(_, (_, slots, _))| slots.keys().copied())
        .collect();

    let mut merged_slots: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for slot in all_slots {
        let mut best: Option<(u32, u32, &Vec<String>)> = None;
        for ((cand, (_, slots, _)), errors) in usable.iter().zip(&slot_errors) {
            let Some(lines) = slots.get(&slot) else {
                continue;
            };
            let err_count = errors.get(&slot).copied().unwrap_or(0);
            let key = (err_count, cand.attempt);
            if best.is_none() || key < (best.unwrap().0, best.unwrap().1) {
                best = Some((err_count, cand.attempt, lines));
            }
        }
        if let Some((_, _, lines)) = best {
            merged_slots.insert(slot, lines.clone());
        }
    }

    let mut out_lines: Vec<String> = Vec::new();
    for (i, line) in skeleton.iter().enumerate() {
        if let Some(extra) = merged_slots.get(&i) {
            out_lines.extend(extra.iter().cloned());
        }
        out_lines.push(line.clone());
    }
    if let Some(extra) = merged_slots.get(&skeleton.len()) {
        out_lines.extend(extra.iter().cloned());
    }

    Some(ProofCandidate {
        task_id: usable[0].0.task_id.clone(),
        text: out_lines.join("\n"),
        stage: Stage::Merged,
        attempt: usable.iter().map(|(c, _)| c.attempt).max().unwrap_or(0),
        llm_calls_consumed: usable
            .iter()
            .map(|(c, _)| c.llm_calls_consumed)
            .max()
            .unwrap_or(0),
        verifier_feedback: None,
        malformed: false,
    })
}

/// An extensible rewrite rule: when `pattern` matches a diagnostic, the
/// named line has `find` replaced by `replace`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateRule {
    pub pattern: String,
    pub find: String,
    pub replace: String,
}

/// Rule-based corrections driven by verifier feedback; no LLM calls.
/// Built-ins: ghost-type widening on type mismatches, semicolon
/// insertion on parse errors, and an assert-by shell on trigger errors.
pub fn apply_refine_templates(
    candidate: &ProofCandidate,
    feedback: &str,
    extra_rules: &[TemplateRule],
    feedback_line_offset: usize,
) -> ProofCandidate {
    let mut lines: Vec<String> = candidate.text.split('\n').map(String::from).collect();
    let mut classified = crate::source::parse_function_text(&candidate.text).ok();
    if let Some(u) = classified.as_mut() {
        let _ = classify_function(u);
    }
    let proof_mode_lines: std::collections::BTreeSet<usize> = classified
        .map(|u| {
            u.lines
                .iter()
                .filter(|l| l.mode == CodeMode::Spec || l.mode == CodeMode::Proof)
                .map(|l| l.index)
                .collect()
        })
        .unwrap_or_default();

    let mut changed = false;
    for diag in parse_feedback(feedback, feedback_line_offset) {
        let lower = diag.text.to_lowercase();
        let target = diag.line.filter(|l| *l < lines.len());

        if lower.contains("type mismatch") || lower.contains("expected ghost int") {
            if let Some(l) = target {
                // Ghost-type widening applies to ghost-mode lines only.
                if proof_mode_lines.contains(&l) {
                    let re = Regex::new(r"\b(u64|u32|usize)\b").unwrap();
                    let new = re.replace_all(&lines[l], "int").to_string();
                    if new != lines[l] {
                        lines[l] = new;
                        changed = true;
                    }
                }
            }
        } else if lower.contains("expected `;`") || lower.contains("missing semicolon") {
            if let Some(l) = target {
                if !lines[l].trim_end().ends_with(';') && !lines[l].trim().is_empty() {
                    let trimmed_len = lines[l].trim_end().len();
                    lines[l].truncate(trimmed_len);
                    lines[l].push(';');
                    changed = true;
                }
            }
        } else if lower.contains("trigger") {
            if let Some(l) = target {
                if lines[l].trim_start().starts_with("assert")
                    && !lines[l].contains(" by ")
                    && !lines[l].contains(" by{")
                    && lines[l].trim_end().ends_with(");")
                {
                    let t = lines[l].trim_end();
                    lines[l] = format!("{} by {{ }};", &t[..t.len() - 1]);
                    changed = true;
                }
            }
        }

        for rule in extra_rules {
            if let Ok(re) = Regex::new(&rule.pattern) {
                if re.is_match(&diag.text) {
                    if let Some(l) = target {
                        let new = lines[l].replace(&rule.find, &rule.replace);
                        if new != lines[l] {
                            lines[l] = new;
                            changed = true;
                        }
                    }
                }
            }
        }
    }

    if !changed {
        return candidate.clone();
    }
    ProofCandidate {
        text: lines.join("\n"),
        stage: Stage::TemplateFixed,
        verifier_feedback: None,
        ..candidate.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    MissingInvariant,
    SyntaxMismatch,
    FailedPostcondition,
    Other,
}

/// Keyword classification of verifier feedback, in priority order.
pub fn classify_failure(feedback: &str) -> FailureKind {
    let lower = feedback.to_lowercase();
    if lower.contains("invariant") {
        FailureKind::MissingInvariant
    } else if lower.contains("postcondition") || lower.contains("ensures") {
        FailureKind::FailedPostcondition
    } else if lower.contains("expected")
        || lower.contains("parse")
        || lower.contains("syntax")
        || lower.contains("unexpected token")
    {
        FailureKind::SyntaxMismatch
    } else {
        FailureKind::Other
    }
}

fn guiding_example(kind: FailureKind) -> &'static str {
    match kind {
        FailureKind::MissingInvariant => {
            "A loop usually needs invariants tying the counters to the postcondition, \
             plus a decreases measure:\n```verus\nwhile i < n\n    invariant\n        i <= n,\n        acc == i * step,\n    decreases n - i,\n{\n    ...\n}\n```"
        }
        FailureKind::SyntaxMismatch => {
            "Ghost code uses int for arithmetic and statements end with semicolons:\n```verus\nproof {\n    let ghost total: int = a + b;\n    assert(total >= 0);\n}\n```"
        }
        FailureKind::FailedPostcondition => {
            "Bridge the gap to the postcondition with asserts over the returned value \
             just before returning:\n```verus\nassert(result == expected_spec(input));\n```"
        }
        FailureKind::Other => {
            "Re-check the proof obligations one by one and add an assert for each \
             intermediate fact the solver must see."
        }
    }
}

/// One LLM-guided repair round: the failing candidate, its feedback, a
/// guiding example for the classified failure kind, and the retrieval
/// bundle. Refuses when the budget has no room for another call.
pub fn adaptive_repair(
    candidate: &ProofCandidate,
    feedback: &str,
    llm: &LlmBackend,
    bundle: &RetrievalBundle,
    config: &GenerationConfig,
    calls_used: u32,
) -> Result<ProofCandidate> {
    if calls_used >= config.max_llm_calls {
        return Err(Error::BudgetExhausted {
            used: calls_used,
            max: config.max_llm_calls,
        });
    }
    let kind = classify_failure(feedback);
    let mut prompt = format!(
        "{INSTRUCTION_PREAMBLE}\n\n### Failing candidate\n```verus\n{}\n```\n\n### Verifier feedback\n{}\n\n### Guidance ({:?})\n{}\n",
        candidate.text, feedback, kind, guiding_example(kind)
    );
    if !bundle.dependency_listing.is_empty() {
        prompt.push_str(&format!(
            "\n### Verified repository context\n{}\n",
            bundle.dependency_listing
        ));
    }
    prompt.push_str("\nReply with the corrected function in one fenced code block.\n");
    let reply = llm.chat(
        &[
            ChatMessage::system("You repair verification annotations.".to_string()),
            ChatMessage::user(prompt),
        ],
        config.temperature,
        Some(config.seed.wrapping_add(1000 + calls_used as u64)),
    )?;
    let (text, malformed) = match extract_candidate(&reply) {
        Ok(t) => (t, false),
        Err(_) => (reply, true),
    };
    Ok(ProofCandidate {
        task_id: candidate.task_id.clone(),
        text,
        stage: Stage::Repaired,
        attempt: candidate.attempt + 1,
        llm_calls_consumed: calls_used + 1,
        verifier_feedback: None,
        malformed,
    })
}

/// One structured event in the per-task run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEvent {
    pub task_id: String,
    pub stage: String,
    pub llm_calls: u32,
    pub verifier_ms: u64,
    pub outcome: String,
}

pub struct PipelineOutput {
    pub best: ProofCandidate,
    pub result: EvalResult,
    pub events: Vec<RunEvent>,
    pub llm_calls: u32,
}

struct Scorer<'a> {
    task: &'a ProofTask,
    snapshot: &'a RepoSnapshot,
    verifier: &'a VerifierBackend,
    events: Vec<RunEvent>,
}

impl<'a> Scorer<'a> {
    fn evaluate(
        &mut self,
        candidate: &mut ProofCandidate,
        stage: &str,
        llm_calls: u32,
    ) -> Result<EvalResult> {
        let started = Instant::now();
        let result = if candidate.malformed {
            EvalResult::new(
                self.task.task_id.clone(),
                false,
                false,
                crate::bleu::bleu_score(&candidate.text, &self.task.ground_truth_text),
                "malformed candidate".to_string(),
                vec![(0, "unparsable".to_string())],
            )
        } else {
            evaluate_candidate(self.task, &candidate.text, self.snapshot, self.verifier)?
        };
        candidate.verifier_feedback = Some(result.verifier_diagnostics.clone());
        self.events.push(RunEvent {
            task_id: self.task.task_id.clone(),
            stage: stage.to_string(),
            llm_calls,
            verifier_ms: started.elapsed().as_millis() as u64,
            outcome: if result.success {
                "success".to_string()
            } else if result.correct {
                "correct-not-intact".to_string()
            } else {
                "failed".to_string()
            },
        });
        Ok(result)
    }
}

fn is_better(new: &EvalResult, current: &EvalResult) -> bool {
    if new.success != current.success {
        return new.success;
    }
    new.bleu > current.bleu
}

/// Runs the configured strategy for one task: initial samples, then for
/// refinement strategies candidate merging, refine templates, and
/// adaptive repair rounds, stopping on the first success or when the
/// budget is spent. Returns the first success, else the candidate with
/// the highest BLEU against the ground truth.
pub fn run_pipeline(
    task: &ProofTask,
    config: &GenerationConfig,
    bundle: &RetrievalBundle,
    snapshot: &RepoSnapshot,
    llm: &LlmBackend,
    verifier: &VerifierBackend,
    template_rules: &[TemplateRule],
) -> Result<PipelineOutput> {
    config.validate()?;
    let mut scorer = Scorer {
        task,
        snapshot,
        verifier,
        events: Vec::new(),
    };
    let calls_before = llm.call_count();

    // The reinsertion offset: 1-based line where the function starts in
    // its patched file, for mapping verifier line numbers back onto the
    // candidate.
    let line_offset = snapshot
        .file_of_function(&task.source_fn)
        .and_then(|f| {
            snapshot
                .function(&task.source_fn)
                .map(|u| f.content[..u.span.start].matches('\n').count() + 1)
        })
        .unwrap_or(0);

    let initials = generate_direct(task, bundle, config, llm)?;
    let mut calls_used = initials.len() as u32;

    let mut best: Option<(ProofCandidate, EvalResult)> = None;
    let mut evaluated: Vec<ProofCandidate> = Vec::new();

    for mut cand in initials {
        let res = scorer.evaluate(&mut cand, "initial", calls_used)?;
        let take = best
            .as_ref()
            .map(|(_, cur)| is_better(&res, cur))
            .unwrap_or(true);
        let success = res.success;
        evaluated.push(cand.clone());
        if take {
            best = Some((cand, res));
        }
        if success {
            break;
        }
    }

    let succeeded = |b: &Option<(ProofCandidate, EvalResult)>| {
        b.as_ref().map(|(_, r)| r.success).unwrap_or(false)
    };

    if config.strategy.is_refinement() && !succeeded(&best) {
        // Stage 1: candidate merging, LLM-free.
        if let Some(mut merged) = merge_candidates(&evaluated, line_offset) {
            let res = scorer.evaluate(&mut merged, "merged", calls_used)?;
            if best
                .as_ref()
                .map(|(_, cur)| is_better(&res, cur))
                .unwrap_or(true)
            {
                best = Some((merged, res));
            }
        }

        // Stage 2: rule-based refine templates, LLM-free.
        if !succeeded(&best) {
            if let Some((cand, res)) = best.clone() {
                let fixed = apply_refine_templates(
                    &cand,
                    &res.verifier_diagnostics,
                    template_rules,
                    line_offset,
                );
                if fixed.text != cand.text {
                    let mut fixed = fixed;
                    let res = scorer.evaluate(&mut fixed, "template-fixed", calls_used)?;
                    if is_better(&res, &best.as_ref().unwrap().1) {
                        best = Some((fixed, res));
                    }
                }
            }
        }

        // Stage 3: adaptive repair rounds, one LLM call each.
        let mut round = 0;
        while !succeeded(&best)
            && round < config.max_repair_rounds
            && calls_used < config.max_llm_calls
        {
            let (cand, res) = best.clone().ok_or_else(|| {
                Error::Backend(format!("no candidates produced for {}", task.task_id))
            })?;
            let mut repaired = adaptive_repair(
                &cand,
                &res.verifier_diagnostics,
                llm,
                bundle,
                config,
                calls_used,
            )?;
            calls_used += 1;
            let res = scorer.evaluate(&mut repaired, "repaired", calls_used)?;
            if is_better(&res, &best.as_ref().unwrap().1) {
                best = Some((repaired, res));
            }
            round += 1;
        }
    }

    let (best_candidate, result) = best.ok_or_else(|| {
        Error::Backend(format!("no candidates produced for {}", task.task_id))
    })?;
    let total = llm.call_count() - calls_before;
    assert!(
        total <= config.max_llm_calls as u64,
        "LLM budget exceeded: {total} > {}",
        config.max_llm_calls
    );
    Ok(PipelineOutput {
        best: best_candidate,
        result,
        events: scorer.events,
        llm_calls: total as u32,
    })
}

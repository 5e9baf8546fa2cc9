//! Candidate scoring: Correct (verifier passes), Intact (exec and spec
//! content unaltered), Success (both), BLEU, and corpus-level reports.
//!
//! Intactness reimplements the external syntax checker's contract: the
//! multisets of normalized exec lines and of signature / requires /
//! ensures lines must match the original exactly; proof-mode additions
//! are always permitted. Normalization strips comments, collapses
//! whitespace, and drops trailing commas. The rules are versioned in the
//! report header.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backends::VerifierBackend;
use crate::bleu::bleu_score;
use crate::error::Result;
use crate::modes::{classify_function, Clause, CodeMode};
use crate::source::{parse_function_text, FunctionUnit};
use crate::tasks::{PatchedSnapshot, ProofTask, TaskCategory};

pub const INTACT_RULES_VERSION: &str = "normalize-v1 (strip comments, collapse ws, trailing commas)";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub task_id: String,
    pub correct: bool,
    pub intact: bool,
    pub success: bool,
    pub bleu: f64,
    pub verifier_diagnostics: String,
    pub intact_violations: Vec<(usize, String)>,
}

impl EvalResult {
    pub fn new(
        task_id: String,
        correct: bool,
        intact: bool,
        bleu: f64,
        verifier_diagnostics: String,
        intact_violations: Vec<(usize, String)>,
    ) -> Self {
        assert!((0.0..=100.0).contains(&bleu), "bleu out of range: {bleu}");
        EvalResult {
            task_id,
            correct,
            intact,
            // Definitional: success is the conjunction, nothing else.
            success: correct && intact,
            bleu,
            verifier_diagnostics,
            intact_violations,
        }
    }
}

/// True iff the verifier reports zero errors for the patched project.
pub fn check_correct(patched: &PatchedSnapshot, verifier: &VerifierBackend) -> (bool, String) {
    let outcome = verifier.verify(patched);
    if outcome.timed_out {
        return (false, "timeout".to_string());
    }
    (outcome.pass, outcome.diagnostics)
}

fn normalize_line(text: &str) -> Option<String> {
    let lexed = crate::lex::lex(text);
    let mut cleaned = text.to_string();
    for span in lexed.comment_spans.iter().rev() {
        if span.end <= cleaned.len() {
            cleaned.replace_range(span.start..span.end, " ");
        }
    }
    let collapsed = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_end_matches(',').trim().to_string();
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IntactCategory {
    Signature,
    Requires,
    Ensures,
    Exec,
}

fn intact_category(line: &crate::modes::CodeLine, fn_mode: CodeMode) -> Option<IntactCategory> {
    match line.clause {
        Clause::Signature => Some(IntactCategory::Signature),
        Clause::Requires => Some(IntactCategory::Requires),
        Clause::Ensures => Some(IntactCategory::Ensures),
        Clause::Body if line.mode == CodeMode::Exec && fn_mode == CodeMode::Exec => {
            Some(IntactCategory::Exec)
        }
        _ => None,
    }
}

/// Normalized line multiset per category, with a representative line
/// index for each normalized string.
fn category_multisets(
    unit: &FunctionUnit,
) -> BTreeMap<(IntactCategoryKey, String), (i64, usize)> {
    let mut map: BTreeMap<(IntactCategoryKey, String), (i64, usize)> = BTreeMap::new();
    for line in &unit.lines {
        if let Some(cat) = intact_category(line, unit.fn_mode) {
            if let Some(norm) = normalize_line(&line.text) {
                let entry = map.entry((cat.into(), norm)).or_insert((0, line.index));
                entry.0 += 1;
            }
        }
    }
    map
}

type IntactCategoryKey = u8;

impl From<IntactCategory> for IntactCategoryKey {
    fn from(c: IntactCategory) -> u8 {
        match c {
            IntactCategory::Signature => 0,
            IntactCategory::Requires => 1,
            IntactCategory::Ensures => 2,
            IntactCategory::Exec => 3,
        }
    }
}

fn violation_reason(cat: IntactCategoryKey, added: bool) -> &'static str {
    match (cat, added) {
        (0, _) => "modified variable types",
        (1, true) => "injected requires",
        (1, false) => "removed requires",
        (2, true) => "injected ensures",
        (2, false) => "removed ensures",
        (3, true) => "injected exec line",
        (3, false) => "removed exec line",
        _ => "modified spec",
    }
}

/// Intact iff the candidate parses and its exec lines and spec clauses
/// (signature, requires, ensures) match the original as multisets after
/// normalization. Proof-mode content may differ freely.
pub fn check_intact(original: &FunctionUnit, candidate_text: &str) -> (bool, Vec<(usize, String)>) {
    let mut candidate = match parse_function_text(candidate_text) {
        Ok(u) => u,
        Err(_) => return (false, vec![(0, "unparsable".to_string())]),
    };
    if classify_function(&mut candidate).is_err() {
        return (false, vec![(0, "unparsable".to_string())]);
    }

    let orig = category_multisets(original);
    let cand = category_multisets(&candidate);

    let mut violations: Vec<(usize, String)> = Vec::new();
    for (key, (count, line)) in &cand {
        let orig_count = orig.get(key).map(|(c, _)| *c).unwrap_or(0);
        if *count > orig_count {
            violations.push((*line, violation_reason(key.0, true).to_string()));
        }
    }
    for (key, (count, line)) in &orig {
        let cand_count = cand.get(key).map(|(c, _)| *c).unwrap_or(0);
        if *count > cand_count {
            violations.push((*line, violation_reason(key.0, false).to_string()));
        }
    }
    violations.sort();
    violations.dedup();
    (violations.is_empty(), violations)
}

/// Full scoring of one candidate: verify the patched snapshot, check
/// intactness against the original unit, and compute BLEU against the
/// ground truth.
pub fn evaluate_candidate(
    task: &ProofTask,
    candidate_text: &str,
    snapshot: &crate::source::RepoSnapshot,
    verifier: &VerifierBackend,
) -> Result<EvalResult> {
    let original = snapshot
        .function(&task.source_fn)
        .ok_or_else(|| crate::error::Error::UnknownFunction(task.source_fn.0.clone()))?;
    let (intact, violations) = check_intact(original, candidate_text);
    let (correct, diagnostics) = match crate::tasks::reinsert_answer(task, candidate_text, snapshot)
    {
        Ok(patched) => check_correct(&patched, verifier),
        Err(e) => (false, format!("malformed candidate: {e}")),
    };
    let bleu = bleu_score(candidate_text, &task.ground_truth_text);
    Ok(EvalResult::new(
        task.task_id.clone(),
        correct,
        intact,
        bleu,
        diagnostics,
        violations,
    ))
}

/// Count and percentage tally for one split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: u64,
    pub correct: u64,
    pub intact: u64,
    pub success: u64,
    pub correct_pct: f64,
    pub intact_pct: f64,
    pub success_pct: f64,
}

/// Percentage of `n` over `d`, rounded half-up to one decimal.
pub fn percent(n: u64, d: u64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    let raw = n as f64 * 100.0 / d as f64;
    (raw * 10.0 + 0.5).floor() / 10.0
}

impl Tally {
    fn finish(mut self) -> Self {
        self.correct_pct = percent(self.correct, self.total);
        self.intact_pct = percent(self.intact, self.total);
        self.success_pct = percent(self.success, self.total);
        self
    }

    pub fn from_counts(total: u64, correct: u64, intact: u64, success: u64) -> Self {
        Tally {
            total,
            correct,
            intact,
            success,
            ..Default::default()
        }
        .finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusReport {
    pub intact_rules: String,
    pub overall: Tally,
    pub simple: Tally,
    pub mean_bleu: f64,
    /// BLEU of the masked input against the ground truth, averaged over
    /// tasks; a floor for generated-answer similarity.
    pub masked_baseline_bleu: f64,
}

/// Overall and Simple-split tallies plus mean BLEU over all results.
pub fn aggregate_report(results: &[EvalResult], tasks: &[ProofTask]) -> CorpusReport {
    let category: BTreeMap<&str, TaskCategory> = tasks
        .iter()
        .map(|t| (t.task_id.as_str(), t.category))
        .collect();
    let mut overall = Tally::default();
    let mut simple = Tally::default();
    for r in results {
        overall.total += 1;
        overall.correct += r.correct as u64;
        overall.intact += r.intact as u64;
        overall.success += r.success as u64;
        if category.get(r.task_id.as_str()) == Some(&TaskCategory::Simple) {
            simple.total += 1;
            simple.correct += r.correct as u64;
            simple.intact += r.intact as u64;
            simple.success += r.success as u64;
        }
    }
    let mean_bleu = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.bleu).sum::<f64>() / results.len() as f64
    };
    let masked_baseline_bleu = if tasks.is_empty() {
        0.0
    } else {
        tasks
            .iter()
            .map(|t| bleu_score(&t.masked_text, &t.ground_truth_text))
            .sum::<f64>()
            / tasks.len() as f64
    };
    CorpusReport {
        intact_rules: INTACT_RULES_VERSION.to_string(),
        overall: overall.finish(),
        simple: simple.finish(),
        mean_bleu,
        masked_baseline_bleu,
    }
}

impl CorpusReport {
    /// Aligned text table; re-derives every percentage from its counts
    /// and asserts agreement before printing.
    pub fn to_table(&self) -> String {
        for t in [&self.overall, &self.simple] {
            assert_eq!(t.correct_pct, percent(t.correct, t.total));
            assert_eq!(t.intact_pct, percent(t.intact, t.total));
            assert_eq!(t.success_pct, percent(t.success, t.total));
        }
        let row = |name: &str, t: &Tally| {
            format!(
                "{:<8} {:>5}  {:>5} ({:>5.1}%)  {:>5} ({:>5.1}%)  {:>5} ({:>5.1}%)\n",
                name, t.total, t.correct, t.correct_pct, t.intact, t.intact_pct, t.success,
                t.success_pct
            )
        };
        let mut out = format!("# intact rules: {}\n", self.intact_rules);
        out.push_str(&format!(
            "{:<8} {:>5}  {:>14}  {:>14}  {:>14}\n",
            "Split", "Tasks", "Correct (n, %)", "Intact (n, %)", "Success (n, %)"
        ));
        out.push_str(&row("overall", &self.overall));
        out.push_str(&row("simple", &self.simple));
        out.push_str(&format!(
            "mean BLEU: {:.2}   masked-input baseline BLEU: {:.2}\n",
            self.mean_bleu, self.masked_baseline_bleu
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockVerifier, VerifierBackend};
    use crate::fixtures::fixture_root;
    use crate::metadata::build_linkage_graph;
    use crate::source::{load_snapshot, FunctionId, RepoSnapshot};
    use crate::tasks::{generate_tasks, reinsert_answer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn classified_mini() -> RepoSnapshot {
        let mut snap = load_snapshot(&fixture_root("mini_repo"), &[]).unwrap();
        for file in &mut snap.files {
            for unit in &mut file.functions {
                classify_function(unit).unwrap();
            }
        }
        snap
    }

    fn mini_tasks(snap: &RepoSnapshot) -> Vec<ProofTask> {
        let graph = build_linkage_graph(snap).unwrap();
        generate_tasks(snap, &graph, "mini_repo").unwrap()
    }

    #[test]
    fn check_correct_reflects_the_verifier() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let patched = reinsert_answer(&tasks[0], &tasks[0].ground_truth_text, &snap).unwrap();
        let (ok, _) = check_correct(&patched, &VerifierBackend::Mock(MockVerifier::AlwaysPass));
        assert!(ok);
        let (ok, diag) = check_correct(
            &patched,
            &VerifierBackend::Mock(MockVerifier::AlwaysFail {
                diagnostics: "error: postcondition not satisfied at line 7".into(),
            }),
        );
        assert!(!ok);
        assert!(diag.contains("postcondition"));
        let (ok, diag) = check_correct(&patched, &VerifierBackend::Mock(MockVerifier::Timeout));
        assert!(!ok);
        assert_eq!(diag, "timeout");
    }

    #[test]
    fn intact_is_reflexive_over_the_corpus() {
        let snap = classified_mini();
        for unit in snap.functions() {
            let (ok, violations) = check_intact(unit, &unit.text());
            assert!(ok, "{}: {violations:?}", unit.id);
        }
    }

    #[test]
    fn adding_proof_content_preserves_intactness() {
        let snap = classified_mini();
        let clamp = snap
            .function(&FunctionId("src/arith.rs::clamp_add".into()))
            .unwrap();
        let with_more_proof = clamp.text().replace(
            "    assert(a + b < 2000);",
            "    assert(a < 1000);\n    assert(a + b < 2000);\n    proof {\n        assert(b < 1000);\n    }",
        );
        let (ok, violations) = check_intact(clamp, &with_more_proof);
        assert!(ok, "{violations:?}");
    }

    #[test]
    fn injected_ensures_is_a_violation() {
        let snap = classified_mini();
        let clamp = snap
            .function(&FunctionId("src/arith.rs::clamp_add".into()))
            .unwrap();
        let tampered = clamp.text().replace(
            "    ensures\n        r == a + b,",
            "    ensures\n        r == a + b,\n        r >= 17,",
        );
        assert_ne!(tampered, clamp.text());
        let (ok, violations) = check_intact(clamp, &tampered);
        assert!(!ok);
        assert!(
            violations.iter().any(|(_, r)| r == "injected ensures"),
            "{violations:?}"
        );
    }

    #[test]
    fn narrowed_parameter_type_is_a_violation() {
        let snap = classified_mini();
        let clamp = snap
            .function(&FunctionId("src/arith.rs::clamp_add".into()))
            .unwrap();
        let tampered = clamp
            .text()
            .replace("pub fn clamp_add(a: u32, b: u32)", "pub fn clamp_add(a: u32, b: u16)");
        let (ok, violations) = check_intact(clamp, &tampered);
        assert!(!ok);
        assert!(
            violations.iter().any(|(_, r)| r == "modified variable types"),
            "{violations:?}"
        );
    }

    #[test]
    fn rewritten_exec_code_is_a_violation() {
        let snap = classified_mini();
        let clamp = snap
            .function(&FunctionId("src/arith.rs::clamp_add".into()))
            .unwrap();
        let tampered = clamp.text().replace("    a + b\n", "    b + a\n");
        let (ok, violations) = check_intact(clamp, &tampered);
        assert!(!ok, "{violations:?}");
    }

    #[test]
    fn comment_and_whitespace_edits_are_invisible() {
        let snap = classified_mini();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for unit in snap.functions().take(12) {
            let mut lines: Vec<String> = unit.text().lines().map(|l| l.to_string()).collect();
            // Random trailing comment on one line, a comment line at a
            // random position, and re-indentation of another.
            let n = lines.len();
            lines[rng.gen_range(0..n)].push_str(" // reviewed");
            lines.insert(rng.gen_range(0..n), "// audit note".to_string());
            let k = rng.gen_range(0..n);
            lines[k] = format!("  {}", lines[k].trim_start());
            let edited = lines.join("\n");
            let (ok, violations) = check_intact(unit, &edited);
            assert!(ok, "{}: {violations:?}\n{edited}", unit.id);
        }
    }

    #[test]
    fn unparsable_candidate_is_not_intact() {
        let snap = classified_mini();
        let clamp = snap
            .function(&FunctionId("src/arith.rs::clamp_add".into()))
            .unwrap();
        let (ok, violations) = check_intact(clamp, "broken {{{");
        assert!(!ok);
        assert_eq!(violations[0].1, "unparsable");
    }

    #[test]
    fn success_is_the_conjunction() {
        let r = EvalResult::new("t".into(), true, false, 50.0, String::new(), vec![]);
        assert!(!r.success);
        let r = EvalResult::new("t".into(), true, true, 100.0, String::new(), vec![]);
        assert!(r.success);
    }

    #[test]
    fn evaluate_candidate_end_to_end_with_ground_truth() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let truths: BTreeMap<String, String> = tasks
            .iter()
            .map(|t| (t.source_fn.0.clone(), t.ground_truth_text.clone()))
            .collect();
        let verifier = VerifierBackend::Mock(MockVerifier::AcceptGroundTruth { truths });
        for task in tasks.iter().take(5) {
            let r =
                evaluate_candidate(task, &task.ground_truth_text, &snap, &verifier).unwrap();
            assert!(r.correct && r.intact && r.success, "{}", task.task_id);
            assert_eq!(r.bleu, 100.0);
        }
    }

    #[test]
    fn report_on_empty_results_is_zero() {
        let report = aggregate_report(&[], &[]);
        assert_eq!(report.overall.total, 0);
        assert_eq!(report.overall.correct_pct, 0.0);
        assert_eq!(report.mean_bleu, 0.0);
    }

    #[test]
    fn report_tallies_a_synthetic_result_set() {
        // Ten results: 6 correct, 8 intact, 5 success; 4 simple tasks of
        // which 2 correct, 4 intact, 2 success.
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let simple_ids: Vec<String> = tasks
            .iter()
            .filter(|t| t.category == TaskCategory::Simple)
            .take(4)
            .map(|t| t.task_id.clone())
            .collect();
        let complex_ids: Vec<String> = tasks
            .iter()
            .filter(|t| t.category == TaskCategory::Complex)
            .take(6)
            .map(|t| t.task_id.clone())
            .collect();
        let mut results = Vec::new();
        for (i, id) in simple_ids.iter().enumerate() {
            // simple: correct for i<2, intact always.
            results.push(EvalResult::new(
                id.clone(),
                i < 2,
                true,
                40.0,
                String::new(),
                vec![],
            ));
        }
        for (i, id) in complex_ids.iter().enumerate() {
            // complex: correct for i<4, intact for i<4, success i<3.
            results.push(EvalResult::new(
                id.clone(),
                i < 4,
                i < 4 || i >= 5,
                60.0,
                String::new(),
                vec![],
            ));
        }
        let report = aggregate_report(&results, &tasks);
        assert_eq!(report.overall.total, 10);
        assert_eq!(report.overall.correct, 6);
        assert_eq!(report.overall.intact, 9);
        assert_eq!(report.overall.success, 6);
        assert_eq!(report.simple.total, 4);
        assert_eq!(report.simple.correct, 2);
        assert_eq!(report.simple.success, 2);
        assert_eq!(report.mean_bleu, (4.0 * 40.0 + 6.0 * 60.0) / 10.0);
        let table = report.to_table();
        assert!(table.contains("overall"));
    }

    #[test]
    fn published_percentages_reproduce() {
        // 84 correct, 266 intact, 75 success out of 383 must print as
        // 21.9 / 69.5 / 19.6 with half-up rounding to one decimal.
        let t = Tally::from_counts(383, 84, 266, 75);
        assert_eq!(t.correct_pct, 21.9);
        assert_eq!(t.intact_pct, 69.5);
        assert_eq!(t.success_pct, 19.6);
    }

    #[test]
    fn masked_baseline_bleu_is_positive_on_fixture() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let report = aggregate_report(&[], &tasks);
        assert!(report.masked_baseline_bleu > 0.0);
        assert!(report.masked_baseline_bleu < 100.0);
    }
}

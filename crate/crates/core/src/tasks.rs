//! Proof-completion task generation: masking, trivial-task filtering,
//! Simple/Complex categorization, answer reinsertion, and benchmark
//! statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::backends::{VerifierBackend, VerifyOutcome};
use crate::error::{Error, Result};
use crate::metadata::{ground_truth_premises, LinkageGraph};
use crate::modes::{classify_function, count_proof_lines, CodeMode};
use crate::source::{self, FunctionId, FunctionUnit, RepoSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskCategory {
    Simple,
    Complex,
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskCategory::Simple => f.write_str("simple"),
            TaskCategory::Complex => f.write_str("complex"),
        }
    }
}

/// A removed line with its index in the original function text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedLine {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProofTask {
    pub task_id: String,
    pub source_fn: FunctionId,
    pub masked_text: String,
    pub ground_truth_text: String,
    pub ground_truth_proof_lines: Vec<RemovedLine>,
    pub category: TaskCategory,
    pub snapshot_fingerprint: String,
}

/// A snapshot copy with one function's span replaced by candidate text.
#[derive(Debug, Clone)]
pub struct PatchedSnapshot {
    pub snapshot: RepoSnapshot,
    pub patched_fn: FunctionId,
    pub candidate_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masked {
    pub masked_text: String,
    pub removed: Vec<RemovedLine>,
}

/// Removes every maskable line. Returns None when the unit has nothing
/// to mask (the not-taskable signal).
pub fn mask_proof(unit: &FunctionUnit) -> Result<Option<Masked>> {
    if !unit.is_classified() {
        return Err(Error::Unclassified(unit.id.0.clone()));
    }
    let mut kept: Vec<&str> = Vec::new();
    let mut removed: Vec<RemovedLine> = Vec::new();
    for line in &unit.lines {
        if line.is_maskable() {
            removed.push(RemovedLine {
                index: line.index,
                text: line.text.clone(),
            });
        } else {
            kept.push(&line.text);
        }
    }
    if removed.is_empty() {
        return Ok(None);
    }
    Ok(Some(Masked {
        masked_text: kept.join("\n"),
        removed,
    }))
}

/// Splices removed lines back at their original indices; exact inverse
/// of `mask_proof`.
pub fn reinsert_proof_lines(masked_text: &str, removed: &[RemovedLine]) -> String {
    let kept: Vec<&str> = if masked_text.is_empty() {
        Vec::new()
    } else {
        masked_text.split('\n').collect()
    };
    let by_index: BTreeMap<usize, &str> =
        removed.iter().map(|r| (r.index, r.text.as_str())).collect();
    let total = kept.len() + removed.len();
    let mut out: Vec<&str> = Vec::with_capacity(total);
    let mut kept_iter = kept.into_iter();
    for i in 0..total {
        match by_index.get(&i) {
            Some(text) => out.push(text),
            None => out.push(kept_iter.next().unwrap_or("")),
        }
    }
    out.join("\n")
}

/// Builds the proof-completion task for one function, when taskable.
pub fn make_task(
    unit: &FunctionUnit,
    graph: &LinkageGraph,
    source_label: &str,
    fingerprint: &str,
) -> Result<Option<ProofTask>> {
    if !matches!(unit.fn_mode, CodeMode::Proof | CodeMode::Exec) {
        return Ok(None);
    }
    let Some(masked) = mask_proof(unit)? else {
        return Ok(None);
    };
    let category = categorize(&unit.id, graph)?;
    Ok(Some(ProofTask {
        task_id: format!("{source_label}/{}", unit.id),
        source_fn: unit.id.clone(),
        masked_text: masked.masked_text,
        ground_truth_text: unit.text(),
        ground_truth_proof_lines: masked.removed,
        category,
        snapshot_fingerprint: fingerprint.to_string(),
    }))
}

/// All tasks for a classified snapshot, in function order.
pub fn generate_tasks(
    snapshot: &RepoSnapshot,
    graph: &LinkageGraph,
    source_label: &str,
) -> Result<Vec<ProofTask>> {
    let mut out = Vec::new();
    for unit in snapshot.functions() {
        if let Some(task) = make_task(unit, graph, source_label, &snapshot.fingerprint)? {
            out.push(task);
        }
    }
    Ok(out)
}

/// Complex iff the ground-truth proof calls at least one ghost function.
pub fn categorize(source_fn: &FunctionId, graph: &LinkageGraph) -> Result<TaskCategory> {
    let premises = ground_truth_premises(source_fn, graph)?;
    Ok(if premises.is_empty() {
        TaskCategory::Simple
    } else {
        TaskCategory::Complex
    })
}

/// Replaces the task function's span with raw text, skipping candidate
/// validation. Used to substitute masked text for trivial-task checks.
pub fn patch_snapshot(
    snapshot: &RepoSnapshot,
    fn_id: &FunctionId,
    text: &str,
) -> Result<PatchedSnapshot> {
    let mut copy = snapshot.clone();
    let file = copy
        .files
        .iter_mut()
        .find(|f| f.functions.iter().any(|u| &u.id == fn_id))
        .ok_or_else(|| Error::UnknownFunction(fn_id.0.clone()))?;
    let span = file
        .functions
        .iter()
        .find(|u| &u.id == fn_id)
        .map(|u| u.span)
        .unwrap();
    let mut content = file.content.clone();
    content.replace_range(span.start..span.end, text);
    file.content = content;
    source::refresh_fingerprint(&mut copy);
    Ok(PatchedSnapshot {
        snapshot: copy,
        patched_fn: fn_id.clone(),
        candidate_text: text.to_string(),
    })
}

/// Validates that the candidate parses as a single function item, then
/// patches it over the task function's span.
pub fn reinsert_answer(
    task: &ProofTask,
    candidate_text: &str,
    snapshot: &RepoSnapshot,
) -> Result<PatchedSnapshot> {
    source::parse_function_text(candidate_text)?;
    patch_snapshot(snapshot, &task.source_fn, candidate_text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop,
}

/// Drops a task iff the verifier succeeds on the snapshot with the
/// masked text substituted; timeouts keep the task with a warning.
pub fn filter_trivial(
    task: &ProofTask,
    verifier: &VerifierBackend,
    snapshot: &RepoSnapshot,
) -> Result<(FilterDecision, Option<String>)> {
    let patched = patch_snapshot(snapshot, &task.source_fn, &task.masked_text)?;
    let outcome: VerifyOutcome = verifier.verify(&patched);
    if outcome.timed_out {
        return Ok((
            FilterDecision::Keep,
            Some(format!("verifier timeout on {}", task.task_id)),
        ));
    }
    Ok(if outcome.pass {
        (FilterDecision::Drop, None)
    } else {
        (FilterDecision::Keep, None)
    })
}

/// Applies `filter_trivial` over a corpus with a bounded worker pool.
pub fn filter_tasks(
    tasks: Vec<ProofTask>,
    verifier: &VerifierBackend,
    snapshot: &RepoSnapshot,
    workers: usize,
) -> Result<(Vec<ProofTask>, Vec<String>)> {
    let decisions = crate::backends::pool_map(workers, &tasks, |task| {
        filter_trivial(task, verifier, snapshot)
    });
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for (task, decision) in tasks.into_iter().zip(decisions) {
        let (decision, warning) = decision?;
        if let Some(w) = warning {
            warnings.push(w);
        }
        if decision == FilterDecision::Keep {
            kept.push(task);
        }
    }
    Ok((kept, warnings))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCount {
    pub constructs: u64,
    pub functions: u64,
    pub proof_tasks: u64,
    pub proof_lines: u64,
    pub complex_tasks: u64,
}

impl SourceCount {
    fn add(&mut self, other: &SourceCount) {
        self.constructs += other.constructs;
        self.functions += other.functions;
        self.proof_tasks += other.proof_tasks;
        self.proof_lines += other.proof_lines;
        self.complex_tasks += other.complex_tasks;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub per_source: BTreeMap<String, SourceCount>,
    pub totals: SourceCount,
}

impl BenchmarkStats {
    /// Builds stats from per-source rows; the totals-equal-sum identity
    /// holds by construction and is re-asserted.
    pub fn from_rows(rows: Vec<(String, SourceCount)>) -> Self {
        let mut totals = SourceCount::default();
        let mut per_source = BTreeMap::new();
        for (name, row) in rows {
            totals.add(&row);
            per_source.insert(name, row);
        }
        let stats = BenchmarkStats { per_source, totals };
        stats.assert_totals();
        stats
    }

    pub fn assert_totals(&self) {
        let mut sum = SourceCount::default();
        for row in self.per_source.values() {
            sum.add(row);
        }
        assert_eq!(sum, self.totals, "totals must equal per-source sums");
    }

    /// Aligned-column text table. Proof lines are counted over kept
    /// tasks only.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("# proof lines counted over kept tasks\n");
        out.push_str(&format!(
            "{:<24} {:>10} {:>10} {:>11} {:>11} {:>13}\n",
            "Source", "Constructs", "Functions", "Proof Tasks", "Proof Lines", "Complex Tasks"
        ));
        for (name, c) in &self.per_source {
            out.push_str(&format!(
                "{:<24} {:>10} {:>10} {:>11} {:>11} {:>13}\n",
                name, c.constructs, c.functions, c.proof_tasks, c.proof_lines, c.complex_tasks
            ));
        }
        let t = &self.totals;
        out.push_str(&format!(
            "{:<24} {:>10} {:>10} {:>11} {:>11} {:>13}\n",
            "Total", t.constructs, t.functions, t.proof_tasks, t.proof_lines, t.complex_tasks
        ));
        out
    }
}

/// Counts constructs and functions from each snapshot and proof tasks,
/// proof lines, and complex tasks from the kept task lists.
pub fn compute_stats(entries: &[(String, &RepoSnapshot, &[ProofTask])]) -> Result<BenchmarkStats> {
    let mut rows = Vec::new();
    for (label, snapshot, tasks) in entries {
        let mut row = SourceCount {
            constructs: snapshot.constructs().count() as u64,
            functions: snapshot.functions().count() as u64,
            proof_tasks: tasks.len() as u64,
            proof_lines: 0,
            complex_tasks: tasks
                .iter()
                .filter(|t| t.category == TaskCategory::Complex)
                .count() as u64,
        };
        for task in tasks.iter() {
            let unit = snapshot
                .function(&task.source_fn)
                .ok_or_else(|| Error::UnknownFunction(task.source_fn.0.clone()))?;
            row.proof_lines += count_proof_lines(unit)? as u64;
        }
        rows.push((label.clone(), row));
    }
    Ok(BenchmarkStats::from_rows(rows))
}

/// Corpus wire format: one JSON object per line with exactly the six
/// public fields.
pub fn write_tasks_jsonl<W: Write>(tasks: &[ProofTask], mut w: W) -> Result<()> {
    for t in tasks {
        let obj = serde_json::json!({
            "task_id": t.task_id,
            "source_fn": t.source_fn,
            "masked_text": t.masked_text,
            "ground_truth_text": t.ground_truth_text,
            "category": t.category,
            "snapshot_fingerprint": t.snapshot_fingerprint,
        });
        let line = serde_json::to_string(&obj)?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io("<tasks.jsonl>", e))?;
    }
    Ok(())
}

/// Reads the corpus format back; removed proof lines are recomputed from
/// the ground truth by re-running the classifier and masker.
pub fn read_tasks_jsonl<R: BufRead>(r: R) -> Result<Vec<ProofTask>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<tasks.jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        let ground_truth_text = v["ground_truth_text"]
            .as_str()
            .ok_or_else(|| Error::InvalidConfig("task line missing ground_truth_text".into()))?
            .to_string();
        let mut unit = source::parse_function_text(&ground_truth_text)?;
        classify_function(&mut unit)?;
        let masked = mask_proof(&unit)?
            .ok_or_else(|| Error::MalformedCandidate("stored task has no maskable lines".into()))?;
        out.push(ProofTask {
            task_id: v["task_id"].as_str().unwrap_or_default().to_string(),
            source_fn: FunctionId(v["source_fn"].as_str().unwrap_or_default().to_string()),
            masked_text: v["masked_text"].as_str().unwrap_or_default().to_string(),
            ground_truth_text,
            ground_truth_proof_lines: masked.removed,
            category: serde_json::from_value(v["category"].clone())?,
            snapshot_fingerprint: v["snapshot_fingerprint"]
                .as_str()
                .unwrap_or_default()
                .to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockVerifier;
    use crate::fixtures::fixture_root;
    use crate::metadata::build_linkage_graph;
    use crate::source::load_snapshot;

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
    fn masking_removes_the_proof_block_and_keeps_spec() {
        let snap = classified_mini();
        let get = snap
            .function(&FunctionId("src/delegation.rs::DelegationMap::get".into()))
            .unwrap();
        let masked = mask_proof(get).unwrap().unwrap();
        assert_eq!(masked.removed.len(), 9);
        assert!(!masked.masked_text.contains("proof {"));
        assert!(!masked.masked_text.contains("assert("));
        assert!(masked.masked_text.contains("requires"));
        assert!(masked.masked_text.contains("ensures ({"));
        assert!(masked.masked_text.contains("let ki = KeyIterator::new(k.clone());"));
    }

    #[test]
    fn single_assert_removal_keeps_everything_else() {
        let mut unit = crate::source::parse_function_text(
            "fn f()\n    ensures true,\n{\n    assert(true);\n    ()\n}",
        )
        .unwrap();
        classify_function(&mut unit).unwrap();
        let masked = mask_proof(&unit).unwrap().unwrap();
        assert_eq!(masked.removed.len(), 1);
        assert_eq!(masked.removed[0].text.trim(), "assert(true);");
        assert_eq!(
            masked.masked_text,
            "fn f()\n    ensures true,\n{\n    ()\n}"
        );
    }

    #[test]
    fn nothing_to_mask_signals_not_taskable() {
        let snap = classified_mini();
        let read_flag = snap
            .function(&FunctionId("src/locked.rs::Registry::read_flag".into()))
            .unwrap();
        assert!(mask_proof(read_flag).unwrap().is_none());
    }

    #[test]
    fn spec_functions_are_not_taskable() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        assert!(tasks.iter().all(|t| !t.source_fn.0.ends_with("::fact")));
        assert!(tasks
            .iter()
            .all(|t| !t.source_fn.0.ends_with("::is_sorted")));
    }

    #[test]
    fn corpus_round_trip_is_exact() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        assert_eq!(tasks.len(), 22);
        for task in &tasks {
            let restored =
                reinsert_proof_lines(&task.masked_text, &task.ground_truth_proof_lines);
            assert_eq!(restored, task.ground_truth_text, "round trip {}", task.task_id);
        }
    }

    #[test]
    fn masked_text_has_no_maskable_lines_when_reparsed() {
        let snap = classified_mini();
        for task in mini_tasks(&snap) {
            let Ok(mut unit) = crate::source::parse_function_text(&task.masked_text) else {
                // Proof-fn tasks lose their whole body and no longer
                // parse standalone; nothing left to check for them.
                continue;
            };
            classify_function(&mut unit).unwrap();
            assert!(
                unit.lines.iter().all(|l| !l.is_maskable()),
                "maskable residue in {}",
                task.task_id
            );
            // Masking what is already masked changes nothing.
            assert!(mask_proof(&unit).unwrap().is_none());
        }
    }

    #[test]
    fn categories_split_by_premises() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let by_id: BTreeMap<&str, TaskCategory> = tasks
            .iter()
            .map(|t| (t.source_fn.0.as_str(), t.category))
            .collect();
        for complex in [
            "src/sorted.rs::SortedVec::insert",
            "src/secure.rs::combine_secure",
            "src/locked.rs::Registry::add_element",
            "src/two_blocks.rs::pick_min",
            "src/recursive.rs::lemma_fact_pos",
            "src/recursive.rs::lemma_fib_mono",
        ] {
            assert_eq!(by_id[complex], TaskCategory::Complex, "{complex}");
        }
        for simple in [
            "src/delegation.rs::DelegationMap::get",
            "src/arith.rs::clamp_add",
            "src/arith.rs::sum_to",
            "src/closures.rs::scan_limit",
        ] {
            assert_eq!(by_id[simple], TaskCategory::Simple, "{simple}");
        }
        let complex_count = tasks
            .iter()
            .filter(|t| t.category == TaskCategory::Complex)
            .count();
        assert_eq!(complex_count, 6);
    }

    #[test]
    fn always_pass_verifier_drops_everything() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let verifier = VerifierBackend::Mock(MockVerifier::AlwaysPass);
        let (kept, warnings) = filter_tasks(tasks, &verifier, &snap, 4).unwrap();
        assert!(kept.is_empty());
        assert!(warnings.is_empty());
    }

    #[test]
    fn fail_set_verifier_keeps_exactly_the_failures() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let a = "src/arith.rs::clamp_add".to_string();
        let b = "src/sorted.rs::SortedVec::insert".to_string();
        let verifier = VerifierBackend::Mock(MockVerifier::FailFns {
            fail: vec![a.clone(), b.clone()],
            diagnostics: "error: cannot discharge at line 3".into(),
        });
        let (kept, _) = filter_tasks(tasks, &verifier, &snap, 4).unwrap();
        let kept_ids: Vec<&str> = kept.iter().map(|t| t.source_fn.0.as_str()).collect();
        assert_eq!(kept_ids, vec![a.as_str(), b.as_str()]);
    }

    #[test]
    fn timeout_keeps_the_task_with_a_warning() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let n = tasks.len();
        let verifier = VerifierBackend::Mock(MockVerifier::Timeout);
        let (kept, warnings) = filter_tasks(tasks, &verifier, &snap, 2).unwrap();
        assert_eq!(kept.len(), n);
        assert_eq!(warnings.len(), n);
        assert!(warnings[0].contains("timeout"));
    }

    #[test]
    fn reinsert_ground_truth_restores_the_original_snapshot() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let truths: BTreeMap<String, String> = tasks
            .iter()
            .map(|t| (t.source_fn.0.clone(), t.ground_truth_text.clone()))
            .collect();
        let verifier = VerifierBackend::Mock(MockVerifier::AcceptGroundTruth { truths });
        for task in &tasks {
            let patched = reinsert_answer(task, &task.ground_truth_text, &snap).unwrap();
            assert_eq!(
                patched.snapshot.fingerprint, snap.fingerprint,
                "byte-identical reinsertion for {}",
                task.task_id
            );
            let outcome = verifier.verify(&patched);
            assert!(outcome.pass, "{}: {}", task.task_id, outcome.diagnostics);
        }
    }

    #[test]
    fn malformed_candidates_are_rejected_not_crashed() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let err = reinsert_answer(&tasks[0], "not a function at all", &snap);
        assert!(matches!(err, Err(Error::MalformedCandidate(_))));
        let err = reinsert_answer(&tasks[0], "fn a() {}\nfn b() {}", &snap);
        assert!(matches!(err, Err(Error::MalformedCandidate(_))));
    }

    #[test]
    fn stats_on_empty_task_list_are_zero() {
        let snap = classified_mini();
        let stats = compute_stats(&[("empty".to_string(), &snap, &[][..])]).unwrap();
        assert_eq!(stats.totals.proof_tasks, 0);
        assert_eq!(stats.totals.proof_lines, 0);
        assert_eq!(stats.totals.functions, 36);
    }

    #[test]
    fn mini_repo_stats_match_hand_count() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let stats = compute_stats(&[("mini_repo".to_string(), &snap, &tasks[..])]).unwrap();
        let row = &stats.per_source["mini_repo"];
        assert_eq!(row.constructs, 7);
        assert_eq!(row.functions, 36);
        assert_eq!(row.proof_tasks, 22);
        // Hand count: every line with proof mode, trivia excluded. The
        // signature line of a proof fn carries the function's mode, so
        // each of the five 4-line lemmas contributes its signature, the
        // deep recursion lemmas contribute 7 and 5, the three proof
        // blocks 9 + 4 + 3 + 3, and eleven single-assert bodies 1 each.
        assert_eq!(row.proof_lines, 62);
        assert_eq!(row.complex_tasks, 6);
        assert_eq!(&stats.totals, row);
    }

    #[test]
    fn seeded_per_source_rows_reproduce_published_totals() {
        let rows = vec![
            (
                "corpus-a".to_string(),
                SourceCount {
                    constructs: 224,
                    functions: 1656,
                    proof_tasks: 383,
                    proof_lines: 7962,
                    complex_tasks: 331,
                },
            ),
            (
                "corpus-b".to_string(),
                SourceCount {
                    constructs: 45,
                    functions: 1013,
                    proof_tasks: 214,
                    proof_lines: 1227,
                    complex_tasks: 198,
                },
            ),
            (
                "corpus-c".to_string(),
                SourceCount {
                    constructs: 34,
                    functions: 528,
                    proof_tasks: 129,
                    proof_lines: 2377,
                    complex_tasks: 117,
                },
            ),
            (
                "corpus-d".to_string(),
                SourceCount {
                    constructs: 34,
                    functions: 267,
                    proof_tasks: 29,
                    proof_lines: 479,
                    complex_tasks: 27,
                },
            ),
        ];
        let stats = BenchmarkStats::from_rows(rows);
        assert_eq!(stats.totals.constructs, 337);
        assert_eq!(stats.totals.functions, 3464);
        assert_eq!(stats.totals.proof_tasks, 755);
        assert_eq!(stats.totals.proof_lines, 12045);
        assert_eq!(stats.totals.complex_tasks, 673);
        let table = stats.to_table();
        assert!(table.contains("755"));
        assert!(table.contains("12045"));
        assert!(table.contains("673"));
    }

    #[test]
    fn jsonl_round_trip_preserves_tasks() {
        let snap = classified_mini();
        let tasks = mini_tasks(&snap);
        let mut buf = Vec::new();
        write_tasks_jsonl(&tasks, &mut buf).unwrap();
        let line_count = buf.iter().filter(|b| **b == b'\n').count();
        assert_eq!(line_count, tasks.len());
        let first: serde_json::Value =
            serde_json::from_str(String::from_utf8_lossy(&buf).lines().next().unwrap()).unwrap();
        assert_eq!(
            first.as_object().unwrap().keys().count(),
            6,
            "exactly the six public fields"
        );
        let back = read_tasks_jsonl(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.len(), tasks.len());
        for (a, b) in tasks.iter().zip(back.iter()) {
            assert_eq!(a.task_id, b.task_id);
            assert_eq!(a.masked_text, b.masked_text);
            assert_eq!(a.ground_truth_proof_lines, b.ground_truth_proof_lines);
            assert_eq!(a.category, b.category);
        }
    }
}

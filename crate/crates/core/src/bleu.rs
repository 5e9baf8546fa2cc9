//! BLEU similarity between candidate and reference code text.
//!
//! Contract: modified n-gram precision for orders 1..=4 (restricted to
//! the orders both texts can form), uniform weights, standard brevity
//! penalty, no smoothing — a zero precision at any used order gives 0.
//! Tokenization splits on whitespace and punctuation boundaries with
//! every punctuation glyph its own token. Scores are reported on the
//! 0..=100 scale.

use std::collections::HashMap;

/// Word characters group; every other non-whitespace glyph stands alone.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// BLEU of `candidate` against `reference`, in [0, 100].
pub fn bleu_score(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let max_n = 4usize.min(cand.len()).min(refr.len());
    let mut log_sum = 0.0f64;
    for n in 1..=max_n {
        let p = modified_precision(&cand, &refr, n);
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln() / max_n as f64;
    }
    let bp = if cand.len() >= refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    };
    bp * log_sum.exp() * 100.0
}

fn modified_precision(cand: &[String], refr: &[String], n: usize) -> f64 {
    let total = cand.len() + 1 - n;
    let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in refr.windows(n) {
        *ref_counts.entry(gram).or_insert(0) += 1;
    }
    let mut cand_counts: HashMap<&[String], usize> = HashMap::new();
    for gram in cand.windows(n) {
        *cand_counts.entry(gram).or_insert(0) += 1;
    }
    let mut clipped = 0usize;
    for (gram, count) in cand_counts {
        let limit = ref_counts.get(gram).copied().unwrap_or(0);
        clipped += count.min(limit);
    }
    clipped as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn punctuation_glyphs_are_single_tokens() {
        let toks = tokenize("fn f(x: u64) -> bool { x == 0 }");
        assert_eq!(
            toks,
            vec![
                "fn", "f", "(", "x", ":", "u64", ")", "-", ">", "bool", "{", "x", "=", "=", "0",
                "}"
            ]
        );
    }

    #[test]
    fn identity_scores_exactly_100() {
        let text = "assert(s == i * (i + 1) / 2);";
        assert_eq!(bleu_score(text, text), 100.0);
    }

    #[test]
    fn disjoint_texts_score_zero() {
        assert_eq!(bleu_score("alpha beta gamma delta", "one two three four"), 0.0);
        assert_eq!(bleu_score("", "one"), 0.0);
        assert_eq!(bleu_score("one", ""), 0.0);
    }

    #[test]
    fn shorter_candidates_are_penalized() {
        let reference = "a b c d e f g h";
        let full = bleu_score(reference, reference);
        let partial = bleu_score("a b c d e", reference);
        assert!(partial < full);
        assert!(partial > 0.0);
    }

    /// Direct transcription of the metric: for each order, count each
    /// candidate window's matches by scanning the reference windows with
    /// per-position consumption (clipping), then combine with the
    /// brevity penalty. No hash maps, no shared code with the
    /// implementation above.
    fn oracle_bleu(candidate: &str, reference: &str) -> f64 {
        let cand = tokenize(candidate);
        let refr = tokenize(reference);
        if cand.is_empty() || refr.is_empty() {
            return 0.0;
        }
        let max_n = 4usize.min(cand.len()).min(refr.len());
        let mut product = 1.0f64;
        for n in 1..=max_n {
            let cand_windows: Vec<&[String]> = cand.windows(n).collect();
            let ref_windows: Vec<&[String]> = refr.windows(n).collect();
            let mut consumed = vec![false; ref_windows.len()];
            let mut clipped = 0usize;
            for cw in &cand_windows {
                for (i, rw) in ref_windows.iter().enumerate() {
                    if !consumed[i] && cw == rw {
                        consumed[i] = true;
                        clipped += 1;
                        break;
                    }
                }
            }
            let p = clipped as f64 / cand_windows.len() as f64;
            if p == 0.0 {
                return 0.0;
            }
            product *= p.powf(1.0 / max_n as f64);
        }
        let bp = if cand.len() >= refr.len() {
            1.0
        } else {
            (1.0 - refr.len() as f64 / cand.len() as f64).exp()
        };
        bp * product * 100.0
    }

    fn random_code_text(rng: &mut ChaCha8Rng) -> String {
        const VOCAB: &[&str] = &[
            "fn", "let", "mut", "assert", "ensures", "requires", "x", "y", "total", "idx", "(",
            ")", "{", "}", ";", ",", "==", "+", "u64", "bool", "self", "proof", "invariant", "0",
            "1", "data", "len",
        ];
        let len = rng.gen_range(5..60);
        (0..len)
            .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn matches_independent_oracle_on_random_code_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
        for case in 0..20 {
            let a = random_code_text(&mut rng);
            let b = if case % 5 == 0 {
                a.clone()
            } else {
                random_code_text(&mut rng)
            };
            let got = bleu_score(&a, &b);
            let want = oracle_bleu(&a, &b);
            assert!(
                (got - want).abs() < 1e-6,
                "case {case}: {got} vs {want}\n a={a}\n b={b}"
            );
            assert!((0.0..=100.0).contains(&got));
        }
    }
}

//! Persistent vector indices over code and summary documents.
//!
//! Retrieval is an exact linear cosine scan; on unit vectors cosine and
//! Euclidean orderings coincide, so "smallest distance" and "highest
//! similarity" agree. An approximate backend may replace the scan only
//! if it passes the same exactness tests at recall 1.0.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::EmbeddingBackend;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Code,
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Unverified,
    Verified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub doc_id: String,
    pub vector: Vec<f32>,
    pub kind: DocKind,
    pub verified: bool,
    pub source_corpus: String,
}

/// A record plus the document text it was embedded from; the text rides
/// along so retrieved ids resolve to prompt content without a separate
/// store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedDoc {
    pub record: EmbeddingRecord,
    pub text: String,
    pub text_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorIndex {
    pub dimension: usize,
    pub index_kind: IndexKind,
    pub docs: Vec<IndexedDoc>,
}

/// Input document for index construction.
#[derive(Debug, Clone)]
pub struct DocSpec {
    pub doc_id: String,
    pub text: String,
    pub kind: DocKind,
    pub verified: bool,
    pub source_corpus: String,
}

pub fn text_hash(text: &str) -> String {
    crate::source::hex(&Sha256::digest(text.as_bytes()))[..16].to_string()
}

fn l2_normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt() as f32;
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Embeds every document, reusing vectors from `previous` for unchanged
/// (doc_id, kind, text_hash) triples so rebuilds are incremental.
pub fn build_index(
    docs: Vec<DocSpec>,
    embedder: &EmbeddingBackend,
    index_kind: IndexKind,
    previous: Option<&VectorIndex>,
) -> Result<VectorIndex> {
    let dimension = embedder.dimension();
    let mut seen: BTreeSet<(DocKind, &str)> = BTreeSet::new();
    for d in &docs {
        if !seen.insert((d.kind, d.doc_id.as_str())) {
            return Err(Error::InvalidConfig(format!(
                "duplicate doc_id {} for kind {:?}",
                d.doc_id, d.kind
            )));
        }
    }

    let mut out: Vec<Option<IndexedDoc>> = vec![None; docs.len()];
    let mut to_embed: Vec<usize> = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let hash = text_hash(&d.text);
        let reused = previous.and_then(|p| {
            p.docs.iter().find(|e| {
                e.record.doc_id == d.doc_id && e.record.kind == d.kind && e.text_hash == hash
            })
        });
        match reused {
            Some(e) if e.record.vector.len() == dimension => {
                out[i] = Some(IndexedDoc {
                    record: EmbeddingRecord {
                        doc_id: d.doc_id.clone(),
                        vector: e.record.vector.clone(),
                        kind: d.kind,
                        verified: d.verified,
                        source_corpus: d.source_corpus.clone(),
                    },
                    text: d.text.clone(),
                    text_hash: hash,
                });
            }
            _ => to_embed.push(i),
        }
    }

    if !to_embed.is_empty() {
        let texts: Vec<String> = to_embed.iter().map(|&i| docs[i].text.clone()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::Backend(format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        for (&i, vector) in to_embed.iter().zip(vectors) {
            if vector.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: vector.len(),
                });
            }
            let vector = l2_normalize(vector);
            let norm: f32 = vector.iter().map(|x| x * x).sum::<f32>().sqrt();
            if !vector.is_empty() {
                assert!((norm - 1.0).abs() < 1e-6, "vector not unit after normalize");
            }
            let d = &docs[i];
            out[i] = Some(IndexedDoc {
                record: EmbeddingRecord {
                    doc_id: d.doc_id.clone(),
                    vector,
                    kind: d.kind,
                    verified: d.verified,
                    source_corpus: d.source_corpus.clone(),
                },
                text: d.text.clone(),
                text_hash: text_hash(&d.text),
            });
        }
    }

    Ok(VectorIndex {
        dimension,
        index_kind,
        docs: out.into_iter().map(|o| o.unwrap()).collect(),
    })
}

pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exact top-k scan over arbitrary (doc_id, vector) pairs: cosine
/// descending, ties broken by ascending doc_id, excluded ids skipped.
pub fn scan_top_k<'a>(
    entries: impl Iterator<Item = (&'a str, &'a [f32])>,
    query: &[f32],
    k: usize,
    exclude: &BTreeSet<String>,
) -> Vec<(String, f32)> {
    let mut scored: Vec<(String, f32)> = entries
        .filter(|(id, _)| !exclude.contains(*id))
        .map(|(id, v)| (id.to_string(), cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Top-k over every record in the index.
pub fn query_top_k(
    index: &VectorIndex,
    query: &[f32],
    k: usize,
    exclude: &BTreeSet<String>,
) -> Result<Vec<(String, f32)>> {
    if query.len() != index.dimension {
        return Err(Error::DimensionMismatch {
            expected: index.dimension,
            actual: query.len(),
        });
    }
    Ok(scan_top_k(
        index
            .docs
            .iter()
            .map(|d| (d.record.doc_id.as_str(), d.record.vector.as_slice())),
        query,
        k,
        exclude,
    ))
}

impl VectorIndex {
    pub fn doc(&self, doc_id: &str, kind: DocKind) -> Option<&IndexedDoc> {
        self.docs
            .iter()
            .find(|d| d.record.doc_id == doc_id && d.record.kind == kind)
    }

    pub fn docs_of_kind(&self, kind: DocKind) -> impl Iterator<Item = &IndexedDoc> {
        self.docs.iter().filter(move |d| d.record.kind == kind)
    }
}

/// Disk layout: `index.meta.json` holds everything except vectors;
/// `vectors.f32` is row-major little-endian f32, row i belonging to doc
/// table row i.
pub mod persist {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct DocRow {
        doc_id: String,
        kind: DocKind,
        verified: bool,
        source_corpus: String,
        text_hash: String,
        text: String,
    }

    #[derive(Serialize, Deserialize)]
    struct Meta {
        dimension: usize,
        index_kind: IndexKind,
        docs: Vec<DocRow>,
    }

    pub fn save(index: &VectorIndex, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            dimension: index.dimension,
            index_kind: index.index_kind,
            docs: index
                .docs
                .iter()
                .map(|d| DocRow {
                    doc_id: d.record.doc_id.clone(),
                    kind: d.record.kind,
                    verified: d.record.verified,
                    source_corpus: d.record.source_corpus.clone(),
                    text_hash: d.text_hash.clone(),
                    text: d.text.clone(),
                })
                .collect(),
        };
        let meta_path = dir.join("index.meta.json");
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)
            .map_err(|e| Error::io(&meta_path, e))?;
        let mut bytes = Vec::with_capacity(index.docs.len() * index.dimension * 4);
        for d in &index.docs {
            for x in &d.record.vector {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        let vec_path = dir.join("vectors.f32");
        std::fs::write(&vec_path, bytes).map_err(|e| Error::io(&vec_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<VectorIndex> {
        let meta_path = dir.join("index.meta.json");
        let meta: Meta = serde_json::from_slice(
            &std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?,
        )?;
        let vec_path = dir.join("vectors.f32");
        let bytes = std::fs::read(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
        let expected = meta.docs.len() * meta.dimension * 4;
        if bytes.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "vectors.f32 has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut docs = Vec::with_capacity(meta.docs.len());
        for (i, row) in meta.docs.into_iter().enumerate() {
            let start = i * meta.dimension * 4;
            let vector: Vec<f32> = (0..meta.dimension)
                .map(|j| {
                    let off = start + j * 4;
                    f32::from_le_bytes([
                        bytes[off],
                        bytes[off + 1],
                        bytes[off + 2],
                        bytes[off + 3],
                    ])
                })
                .collect();
            docs.push(IndexedDoc {
                record: EmbeddingRecord {
                    doc_id: row.doc_id,
                    vector,
                    kind: row.kind,
                    verified: row.verified,
                    source_corpus: row.source_corpus,
                },
                text: row.text,
                text_hash: row.text_hash,
            });
        }
        Ok(VectorIndex {
            dimension: meta.dimension,
            index_kind: meta.index_kind,
            docs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(id: &str, text: &str) -> DocSpec {
        DocSpec {
            doc_id: id.to_string(),
            text: text.to_string(),
            kind: DocKind::Code,
            verified: false,
            source_corpus: "fixture".to_string(),
        }
    }

    #[test]
    fn empty_doc_list_builds_an_empty_index() {
        let embedder = EmbeddingBackend::mock();
        let index = build_index(vec![], &embedder, IndexKind::Unverified, None).unwrap();
        assert_eq!(index.dimension, 64);
        assert!(index.docs.is_empty());
        assert_eq!(embedder.call_count(), 0);
    }

    #[test]
    fn five_docs_all_unit_norm() {
        let embedder = EmbeddingBackend::mock();
        let docs = (0..5).map(|i| spec(&format!("d{i}"), &format!("fn f{i}() {{}}"))).collect();
        let index = build_index(docs, &embedder, IndexKind::Unverified, None).unwrap();
        assert_eq!(index.docs.len(), 5);
        for d in &index.docs {
            let norm: f32 = d.record.vector.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "{}", d.record.doc_id);
        }
    }

    #[test]
    fn rebuild_with_unchanged_docs_is_free() {
        let embedder = EmbeddingBackend::mock();
        let docs: Vec<DocSpec> =
            (0..5).map(|i| spec(&format!("d{i}"), &format!("text {i}"))).collect();
        let first = build_index(docs.clone(), &embedder, IndexKind::Unverified, None).unwrap();
        assert_eq!(embedder.call_count(), 1);
        let second =
            build_index(docs.clone(), &embedder, IndexKind::Unverified, Some(&first)).unwrap();
        assert_eq!(embedder.call_count(), 1, "no new embedding calls");
        assert_eq!(first.docs, second.docs);

        let mut changed = docs;
        changed[2].text = "different".to_string();
        let third = build_index(changed, &embedder, IndexKind::Unverified, Some(&first)).unwrap();
        assert_eq!(embedder.call_count(), 2, "one batch for the one change");
        assert_ne!(first.docs[2].record.vector, third.docs[2].record.vector);
        assert_eq!(first.docs[0].record.vector, third.docs[0].record.vector);
    }

    #[test]
    fn duplicate_doc_ids_per_kind_are_rejected() {
        let embedder = EmbeddingBackend::mock();
        let docs = vec![spec("same", "a"), spec("same", "b")];
        assert!(build_index(docs, &embedder, IndexKind::Unverified, None).is_err());
        // Same id under different kinds is fine.
        let mut ok = vec![spec("same", "a")];
        ok.push(DocSpec {
            kind: DocKind::Summary,
            ..spec("same", "summary of a")
        });
        assert!(build_index(ok, &embedder, IndexKind::Unverified, None).is_ok());
    }

    #[test]
    fn identical_vector_scores_one_orthogonal_scores_zero() {
        let embedder = EmbeddingBackend::mock_with(
            crate::backends::EmbedScript::Table(
                [
                    ("ex".to_string(), vec![1.0, 0.0, 0.0, 0.0]),
                    ("ey".to_string(), vec![0.0, 1.0, 0.0, 0.0]),
                ]
                .into_iter()
                .collect(),
            ),
            4,
        );
        let docs = vec![spec("ex", "ex"), spec("ey", "ey")];
        let index = build_index(docs, &embedder, IndexKind::Unverified, None).unwrap();
        let hits = query_top_k(&index, &[1.0, 0.0, 0.0, 0.0], 2, &BTreeSet::new()).unwrap();
        assert_eq!(hits[0].0, "ex");
        assert!((hits[0].1 - 1.0).abs() < 1e-6);
        assert!(hits[1].1.abs() < 1e-6);
    }

    #[test]
    fn top_k_matches_brute_force_on_random_vectors() {
        let embedder = EmbeddingBackend::mock();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let docs: Vec<DocSpec> = (0..100)
            .map(|i| spec(&format!("doc{i:03}"), &format!("content {i}")))
            .collect();
        let index = build_index(docs, &embedder, IndexKind::Unverified, None).unwrap();
        for _ in 0..5 {
            let query: Vec<f32> = (0..64).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            for k in [1usize, 3, 5, 10] {
                let got = query_top_k(&index, &query, k, &BTreeSet::new()).unwrap();
                // Oracle: full scored list, sorted the slow way.
                let mut all: Vec<(String, f32)> = index
                    .docs
                    .iter()
                    .map(|d| (d.record.doc_id.clone(), cosine(&query, &d.record.vector)))
                    .collect();
                all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                all.truncate(k);
                assert_eq!(got, all);
            }
        }
    }

    #[test]
    fn excluded_ids_never_return() {
        let embedder = EmbeddingBackend::mock();
        let docs: Vec<DocSpec> = (0..4).map(|i| spec(&format!("d{i}"), &format!("t{i}"))).collect();
        let index = build_index(docs, &embedder, IndexKind::Unverified, None).unwrap();
        let query = index.docs[1].record.vector.clone();
        let exclude: BTreeSet<String> = ["d1".to_string()].into_iter().collect();
        let hits = query_top_k(&index, &query, 4, &exclude).unwrap();
        assert_eq!(hits.len(), 3);
        assert!(hits.iter().all(|(id, _)| id != "d1"));
    }

    #[test]
    fn k_larger_than_index_returns_available() {
        let embedder = EmbeddingBackend::mock();
        let index =
            build_index(vec![spec("only", "x")], &embedder, IndexKind::Unverified, None).unwrap();
        let hits =
            query_top_k(&index, &index.docs[0].record.vector.clone(), 10, &BTreeSet::new())
                .unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let embedder = EmbeddingBackend::mock();
        let index = build_index(vec![spec("a", "x")], &embedder, IndexKind::Unverified, None)
            .unwrap();
        let err = query_top_k(&index, &[1.0, 2.0], 1, &BTreeSet::new());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn persistence_round_trips_bitwise() {
        let embedder = EmbeddingBackend::mock();
        let docs: Vec<DocSpec> = (0..7).map(|i| spec(&format!("d{i}"), &format!("t{i}"))).collect();
        let index = build_index(docs, &embedder, IndexKind::Verified, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        persist::save(&index, dir.path()).unwrap();
        let loaded = persist::load(dir.path()).unwrap();
        assert_eq!(loaded.dimension, index.dimension);
        assert_eq!(loaded.index_kind, index.index_kind);
        for (a, b) in index.docs.iter().zip(loaded.docs.iter()) {
            assert_eq!(a, b);
            for (x, y) in a.record.vector.iter().zip(b.record.vector.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "bitwise-equal vectors");
            }
        }
        let query = index.docs[3].record.vector.clone();
        let before = query_top_k(&index, &query, 5, &BTreeSet::new()).unwrap();
        let after = query_top_k(&loaded, &query, 5, &BTreeSet::new()).unwrap();
        assert_eq!(before, after);
    }
}

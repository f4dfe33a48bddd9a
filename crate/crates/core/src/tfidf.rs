//! Sparse TF-IDF index over coupled pairs.
//!
//! `tf` is the raw term count of a document's full token list (former side
//! followed by latter side) and `idf(t) = ln(N / df(t))`, no smoothing.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::CorpusStore;
use crate::embedding::Vocabulary;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Sparse vector sorted by term index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
    pub norm: f64,
}

impl SparseVector {
    fn new(entries: Vec<(usize, f64)>) -> Self {
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        SparseVector { entries, norm }
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine similarity; zero when either vector is zero.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        self.dot(other) / (self.norm * other.norm)
    }
}

#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    vocab: Vocabulary,
    idf: Vec<f64>,
    docs: BTreeMap<String, SparseVector>,
}

impl TfIdfIndex {
    pub fn fit(store: &CorpusStore) -> Self {
        let terms: BTreeSet<&str> = store
            .pairs
            .values()
            .flat_map(|p| p.full_tokens().map(String::as_str))
            .collect();
        let vocab = Vocabulary::from_tokens(terms);
        let n = store.pairs.len() as f64;

        let counts: Vec<(String, BTreeMap<usize, f64>)> = store
            .pairs
            .values()
            .map(|p| {
                let mut tf = BTreeMap::new();
                for t in p.full_tokens() {
                    let i = vocab.get(t).expect("term indexed above");
                    *tf.entry(i).or_insert(0.0) += 1.0;
                }
                (p.doc_id.clone(), tf)
            })
            .collect();

        let mut df = vec![0usize; vocab.len()];
        for (_, tf) in &counts {
            for &i in tf.keys() {
                df[i] += 1;
            }
        }
        let idf: Vec<f64> = df.iter().map(|&d| (n / d as f64).ln()).collect();

        let docs = counts
            .into_iter()
            .map(|(id, tf)| {
                let entries = tf.into_iter().map(|(i, c)| (i, c * idf[i])).collect();
                (id, SparseVector::new(entries))
            })
            .collect();
        TfIdfIndex { vocab, idf, docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|i| self.idf[i])
    }

    pub fn vector(&self, doc_id: &str) -> Result<&SparseVector> {
        self.docs
            .get(doc_id)
            .ok_or_else(|| Error::UnknownId(doc_id.to_string()))
    }

    /// Weight of `term` in document `doc_id` (zero if absent).
    pub fn weight(&self, doc_id: &str, term: &str) -> Result<f64> {
        let v = self.vector(doc_id)?;
        Ok(self
            .vocab
            .get(term)
            .and_then(|i| v.entries.iter().find(|(j, _)| *j == i))
            .map_or(0.0, |(_, w)| *w))
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.vector(a)?.cosine(self.vector(b)?))
    }

    /// The `k` documents most similar to `doc_id`, excluding itself; ties by
    /// ascending id.
    pub fn topk(&self, doc_id: &str, k: usize) -> Result<Vec<String>> {
        let query = self.vector(doc_id)?;
        let mut scored: Vec<(&str, f64)> = self
            .docs
            .iter()
            .filter(|(id, _)| id.as_str() != doc_id)
            .map(|(id, v)| (id.as_str(), query.cosine(v)))
            .collect();
        sort_scored(&mut scored);
        Ok(scored.into_iter().take(k).map(|(id, _)| id.to_string()).collect())
    }

    /// [`TfIdfIndex::topk`] for every indexed document.
    pub fn topk_all(&self, k: usize, exec: Execution) -> BTreeMap<String, Vec<String>> {
        let ids: Vec<&String> = self.docs.keys().collect();
        let lists = exec.map(&ids, |id| self.topk(id, k).expect("indexed id"));
        ids.into_iter().cloned().zip(lists).collect()
    }
}

/// Descending score, ascending id.
pub(crate) fn sort_scored<S: AsRef<str>>(scored: &mut [(S, f64)]) {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.as_ref().cmp(b.0.as_ref()))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusStore, SegmentationSpec, Split, TokenizedDocument};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(docs: &[(&str, &[&str])]) -> CorpusStore {
        let docs = docs
            .iter()
            .map(|(id, tokens)| TokenizedDocument {
                id: id.to_string(),
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
                boundaries: vec![0],
                split: Split::Candidate,
                groundtruth: None,
            })
            .collect();
        // Percent mode over single-part documents: cut after the first token.
        CorpusStore::from_documents(
            vec!["text".into()],
            docs,
            SegmentationSpec::Percent { percent: 0.5 },
            usize::MAX,
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_weights() {
        let s = store(&[("d1", &["a", "b"]), ("d2", &["a", "a"])]);
        let idx = TfIdfIndex::fit(&s);
        assert_eq!(idx.idf("a"), Some(0.0));
        assert_eq!(idx.idf("b"), Some(2f64.ln()));
        assert_eq!(idx.weight("d1", "b").unwrap(), 2f64.ln());
        assert_eq!(idx.weight("d1", "a").unwrap(), 0.0);
    }

    #[test]
    fn topk_prefers_shared_terms() {
        let s = store(&[
            ("doc1", &["x", "y", "q"]),
            ("doc2", &["x", "y", "r"]),
            ("doc3", &["u", "v"]),
        ]);
        let idx = TfIdfIndex::fit(&s);
        assert_eq!(idx.topk("doc1", 1).unwrap(), vec!["doc2"]);
        assert_eq!(idx.similarity("doc1", "doc3").unwrap(), 0.0);
        assert_eq!(idx.topk("doc1", 10).unwrap().len(), 2);
        assert!(!idx.topk("doc1", 10).unwrap().contains(&"doc1".to_string()));
        assert!(matches!(idx.topk("nope", 1), Err(Error::UnknownId(_))));
    }

    #[test]
    fn empty_index_rejects_queries() {
        let idx = TfIdfIndex::fit(&store(&[]));
        assert!(idx.is_empty());
        assert!(idx.topk("a", 3).is_err());
    }

    /// Dense brute-force tf-idf, written from the definition.
    fn brute_force_similarity(docs: &[Vec<String>], i: usize, j: usize) -> f64 {
        let vocab: BTreeSet<&String> = docs.iter().flatten().collect();
        let n = docs.len() as f64;
        let dense = |d: &Vec<String>| -> Vec<f64> {
            vocab
                .iter()
                .map(|t| {
                    let tf = d.iter().filter(|x| x == t).count() as f64;
                    let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
                    tf * (n / df).ln()
                })
                .collect()
        };
        let (a, b) = (dense(&docs[i]), dense(&docs[j]));
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    #[test]
    fn topk_matches_brute_force_on_random_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let words = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"];
        let docs: Vec<Vec<String>> = (0..20)
            .map(|_| {
                let n = rng.gen_range(2..12);
                (0..n)
                    .map(|_| words[rng.gen_range(0..words.len())].to_string())
                    .collect()
            })
            .collect();
        let ids: Vec<String> = (0..20).map(|i| format!("d{i:02}")).collect();
        let named: Vec<(&str, Vec<&str>)> = ids
            .iter()
            .zip(&docs)
            .map(|(id, d)| (id.as_str(), d.iter().map(String::as_str).collect()))
            .collect();
        let borrowed: Vec<(&str, &[&str])> =
            named.iter().map(|(id, d)| (*id, d.as_slice())).collect();
        let idx = TfIdfIndex::fit(&store(&borrowed));

        for q in 0..20 {
            let mut expected: Vec<(String, f64)> = (0..20)
                .filter(|&j| j != q)
                .map(|j| (ids[j].clone(), brute_force_similarity(&docs, q, j)))
                .collect();
            for (id, s) in &expected {
                let got = idx.similarity(&ids[q], id).unwrap();
                assert!((got - s).abs() < 1e-12);
                assert!((-1e-12..=1.0 + 1e-12).contains(&got));
                assert_eq!(got, idx.similarity(id, &ids[q]).unwrap());
            }
            expected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let got = idx.topk(&ids[q], 19).unwrap();
            // rankings agree up to float-level ties
            for (rank, id) in got.iter().enumerate() {
                let s_got = idx.similarity(&ids[q], id).unwrap();
                assert!((s_got - expected[rank].1).abs() < 1e-12);
            }
        }
    }
}

//! Candidate ranking with the cross pair similarity
//! `sim(d_i, d_j) = cos(v_f_i, v_b_j) + cos(v_f_j, v_b_i)`, plus the
//! single-vector cosine baselines (averaged word vectors, TF-IDF).
//!
//! Scoring is exhaustive. Ranked lists are ordered by descending score,
//! ties broken by ascending candidate id, and never contain the query.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::embedding::EmbeddingTable;
use crate::encoder::cosine;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::representation::{DocEmbedding, EmbeddingStore};
use crate::tfidf::{sort_scored, TfIdfIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    /// Sorts `scored` and keeps the best `n` (`None` keeps all).
    pub fn from_scores(query_id: &str, mut scored: Vec<(String, f64)>, n: Option<usize>) -> Self {
        scored.retain(|(id, _)| id != query_id);
        sort_scored(&mut scored);
        if let Some(n) = n {
            scored.truncate(n);
        }
        RankedList {
            query_id: query_id.to_string(),
            entries: scored,
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|(id, _)| id.clone()).collect()
    }
}

pub fn pair_similarity(a: &DocEmbedding, b: &DocEmbedding) -> Result<f64> {
    Ok(cosine(&a.v_f, &b.v_b)? + cosine(&a.v_b, &b.v_f)?)
}

/// Ranks `candidates` against `query` by pair similarity.
pub fn top_n<'a>(
    query: &DocEmbedding,
    candidates: impl IntoIterator<Item = &'a DocEmbedding>,
    n: Option<usize>,
) -> Result<RankedList> {
    let mut scored = Vec::new();
    for c in candidates {
        if c.doc_id != query.doc_id {
            scored.push((c.doc_id.clone(), pair_similarity(query, c)?));
        }
    }
    Ok(RankedList::from_scores(&query.doc_id, scored, n))
}

/// Ranks every `queries` document of `query_store` against the `candidates`
/// of `candidate_store`.
pub fn rank_pairs(
    query_store: &EmbeddingStore,
    queries: &[&str],
    candidate_store: &EmbeddingStore,
    candidates: &[&str],
    n: Option<usize>,
    exec: Execution,
) -> Result<Vec<RankedList>> {
    query_store.check_compatible(candidate_store)?;
    let pool: Vec<&DocEmbedding> = candidates
        .iter()
        .map(|id| {
            candidate_store
                .docs
                .get(*id)
                .ok_or_else(|| Error::UnknownId(id.to_string()))
        })
        .collect::<Result<_>>()?;
    exec.map(queries, |q| {
        let query = query_store
            .docs
            .get(*q)
            .ok_or_else(|| Error::UnknownId(q.to_string()))?;
        top_n(query, pool.iter().copied(), n)
    })
    .into_iter()
    .collect()
}

/// Mean of the in-vocabulary token vectors.
pub fn avg_embed<'a>(
    tokens: impl IntoIterator<Item = &'a String>,
    table: &EmbeddingTable,
) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut count = 0usize;
    for v in tokens.into_iter().filter_map(|t| table.vector(t)) {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::AllTokensOov);
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    Ok(sum)
}

/// Single-vector cosine ranking.
pub fn baseline_top_n<'a>(
    query_id: &str,
    query: &[f64],
    candidates: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    n: Option<usize>,
) -> Result<RankedList> {
    let mut scored = Vec::new();
    for (id, v) in candidates {
        if id != query_id {
            scored.push((id.to_string(), cosine(query, v)?));
        }
    }
    Ok(RankedList::from_scores(query_id, scored, n))
}

/// Dense single-vector representations keyed by document id.
pub type VectorStore = BTreeMap<String, Vec<f64>>;

pub fn rank_vectors(
    store: &VectorStore,
    queries: &[&str],
    candidates: &[&str],
    n: Option<usize>,
    exec: Execution,
) -> Result<Vec<RankedList>> {
    let pool: Vec<(&str, &[f64])> = candidates
        .iter()
        .map(|id| {
            store
                .get(*id)
                .map(|v| (*id, v.as_slice()))
                .ok_or_else(|| Error::UnknownId(id.to_string()))
        })
        .collect::<Result<_>>()?;
    exec.map(queries, |q| {
        let v = store.get(*q).ok_or_else(|| Error::UnknownId(q.to_string()))?;
        baseline_top_n(q, v, pool.iter().copied(), n)
    })
    .into_iter()
    .collect()
}

/// TF-IDF cosine ranking (zero vectors score 0).
pub fn rank_tfidf(
    index: &TfIdfIndex,
    queries: &[&str],
    candidates: &[&str],
    n: Option<usize>,
    exec: Execution,
) -> Result<Vec<RankedList>> {
    let pool = candidates
        .iter()
        .map(|id| Ok((*id, index.vector(id)?)))
        .collect::<Result<Vec<_>>>()?;
    exec.map(queries, |q| {
        let v = index.vector(q)?;
        let scored = pool
            .iter()
            .filter(|(id, _)| id != q)
            .map(|(id, c)| (id.to_string(), v.cosine(c)))
            .collect();
        Ok(RankedList::from_scores(q, scored, n))
    })
    .into_iter()
    .collect()
}

/// Writes `query_id candidate_id rank score` lines, queries in the given
/// order, ranks from 1.
pub fn write_run(lists: &[RankedList], out: &mut impl Write) -> std::io::Result<()> {
    for list in lists {
        for (rank, (id, score)) in list.entries.iter().enumerate() {
            writeln!(out, "{} {} {} {}", list.query_id, id, rank + 1, score)?;
        }
    }
    Ok(())
}

/// Parsed run file: per query, candidates in rank order.
pub type Run = BTreeMap<String, Vec<(String, f64)>>;

pub fn read_run(input: impl BufRead) -> Result<Run> {
    let mut run: Run = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let malformed = |message: String| Error::MalformedRun {
            line: lineno,
            message,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [query, cand, rank, score] = fields[..] else {
            return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| malformed(format!("bad rank `{rank}`")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| malformed(format!("bad score `{score}`")))?;
        let list = run.entry(query.to_string()).or_default();
        if rank != list.len() + 1 {
            return Err(malformed(format!(
                "rank {rank} for query `{query}` follows rank {}",
                list.len()
            )));
        }
        if cand == query {
            return Err(malformed(format!("query `{query}` retrieved itself")));
        }
        list.push((cand.to_string(), score));
    }
    Ok(run)
}

//! Ranking metrics over binary judgments: P/R/F1 at a cutoff, average
//! precision, NDCG and bpref.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::retrieval::Run;

/// Relevant sets per query plus the candidate universe. Every candidate
/// that is not relevant for a query counts as judged nonrelevant for it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Judgments {
    pub relevant: BTreeMap<String, BTreeSet<String>>,
    pub candidates: BTreeSet<String>,
}

impl Judgments {
    pub fn universe_size(&self) -> usize {
        self.candidates.len()
    }

    /// Candidates judged nonrelevant for `query`.
    pub fn nonrelevant(&self, query: &str) -> BTreeSet<String> {
        match self.relevant.get(query) {
            Some(rel) => self.candidates.difference(rel).cloned().collect(),
            None => self.candidates.clone(),
        }
    }

    /// Reads `query_id candidate_id relevance` lines. Positive relevance
    /// marks the candidate relevant; every listed candidate joins the
    /// universe.
    pub fn read_qrels(input: impl BufRead) -> Result<Self> {
        let mut out = Judgments::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            let [query, cand, rel] = fields[..] else {
                return Err(Error::parse(
                    i + 1,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            };
            let rel: i64 = rel
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad relevance `{rel}`")))?;
            out.candidates.insert(cand.to_string());
            if rel > 0 {
                out.relevant
                    .entry(query.to_string())
                    .or_default()
                    .insert(cand.to_string());
            }
        }
        Ok(out)
    }

    pub fn write_qrels(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (query, rel) in &self.relevant {
            for cand in rel {
                writeln!(out, "{query} {cand} 1")?;
            }
        }
        Ok(())
    }
}

fn require(rel: &BTreeSet<String>) -> Result<()> {
    if rel.is_empty() {
        return Err(Error::EmptyJudgments(String::new()));
    }
    Ok(())
}

/// `(P, R, F1)` over the first `n` ranked ids.
pub fn prf_at_n(ranked: &[String], rel: &BTreeSet<String>, n: usize) -> Result<(f64, f64, f64)> {
    require(rel)?;
    if n == 0 {
        return Err(Error::Config("topN must be at least 1".into()));
    }
    let hits = ranked.iter().take(n).filter(|id| rel.contains(*id)).count() as f64;
    let p = hits / n as f64;
    let r = hits / rel.len() as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((p, r, f1))
}

pub fn average_precision(ranked: &[String], rel: &BTreeSet<String>) -> Result<f64> {
    require(rel)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in ranked.iter().enumerate() {
        if rel.contains(id) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / rel.len() as f64)
}

/// Binary-gain NDCG over the first `cutoff` ranks, or the whole ranking.
pub fn ndcg(ranked: &[String], rel: &BTreeSet<String>, cutoff: Option<usize>) -> Result<f64> {
    require(rel)?;
    let depth = cutoff.unwrap_or(usize::MAX);
    let dcg: f64 = ranked
        .iter()
        .take(depth)
        .enumerate()
        .filter(|(_, id)| rel.contains(*id))
        .map(|(k, _)| 1.0 / ((k + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..rel.len().min(depth))
        .map(|k| 1.0 / ((k + 2) as f64).log2())
        .sum();
    Ok(dcg / ideal)
}

pub fn bpref(
    ranked: &[String],
    rel: &BTreeSet<String>,
    judged_nonrel: &BTreeSet<String>,
) -> Result<f64> {
    require(rel)?;
    let r = rel.len();
    let denom = r.min(judged_nonrel.len());
    let mut nonrel_above = 0usize;
    let mut sum = 0.0;
    for id in ranked {
        if rel.contains(id) {
            sum += if denom == 0 {
                1.0
            } else {
                1.0 - nonrel_above.min(r) as f64 / denom as f64
            };
        } else if judged_nonrel.contains(id) {
            nonrel_above += 1;
        }
    }
    Ok(sum / r as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub ndcg: f64,
    pub bpref: f64,
}

impl QueryMetrics {
    fn values(&self) -> [f64; 6] {
        [self.precision, self.recall, self.f1, self.ap, self.ndcg, self.bpref]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub topn: usize,
    /// Depth for NDCG and bpref; `None` is the full ranking.
    pub cutoff: Option<usize>,
    pub queries: BTreeMap<String, QueryMetrics>,
    pub mean: QueryMetrics,
}

pub fn query_metrics(
    ranked: &[String],
    rel: &BTreeSet<String>,
    judged_nonrel: &BTreeSet<String>,
    topn: usize,
    cutoff: Option<usize>,
) -> Result<QueryMetrics> {
    let (precision, recall, f1) = prf_at_n(ranked, rel, topn)?;
    let scored = &ranked[..ranked.len().min(cutoff.unwrap_or(usize::MAX))];
    Ok(QueryMetrics {
        precision,
        recall,
        f1,
        ap: average_precision(ranked, rel)?,
        ndcg: ndcg(ranked, rel, cutoff)?,
        bpref: bpref(scored, rel, judged_nonrel)?,
    })
}

/// Scores every judged query; judged queries absent from the run get an
/// empty ranking.
pub fn evaluate_run(
    run: &Run,
    judgments: &Judgments,
    topn: usize,
    cutoff: Option<usize>,
    exec: Execution,
) -> Result<MetricsReport> {
    if topn == 0 || cutoff == Some(0) {
        return Err(Error::Config("topN and cutoff must be at least 1".into()));
    }
    if let Some(q) = run.keys().find(|q| !judgments.relevant.contains_key(*q)) {
        return Err(Error::UnknownQuery(q.clone()));
    }
    let queries: Vec<(&String, &BTreeSet<String>)> = judgments.relevant.iter().collect();
    let rows = exec.map(&queries, |(q, rel)| {
        let ranked: Vec<String> = run
            .get(*q)
            .map(|list| list.iter().map(|(id, _)| id.clone()).collect())
            .unwrap_or_default();
        query_metrics(&ranked, rel, &judgments.nonrelevant(q), topn, cutoff)
            .map_err(|e| match e {
                Error::EmptyJudgments(_) => Error::EmptyJudgments((*q).clone()),
                e => e,
            })
    });
    let mut per_query = BTreeMap::new();
    for ((q, _), row) in queries.iter().zip(rows) {
        per_query.insert((*q).clone(), row?);
    }
    let count = per_query.len().max(1) as f64;
    let mut mean = QueryMetrics::default();
    for m in per_query.values() {
        mean.precision += m.precision;
        mean.recall += m.recall;
        mean.f1 += m.f1;
        mean.ap += m.ap;
        mean.ndcg += m.ndcg;
        mean.bpref += m.bpref;
    }
    mean.precision /= count;
    mean.recall /= count;
    mean.f1 /= count;
    mean.ap /= count;
    mean.ndcg /= count;
    mean.bpref /= count;
    Ok(MetricsReport {
        topn,
        cutoff,
        queries: per_query,
        mean,
    })
}

impl MetricsReport {
    pub fn map(&self) -> f64 {
        self.mean.ap
    }

    pub fn depth_label(&self) -> String {
        match self.cutoff {
            Some(n) => format!("@{n}"),
            None => "full ranking".into(),
        }
    }

    pub fn header_names(&self) -> [String; 6] {
        let n = self.topn;
        [
            format!("P@{n}"),
            format!("R@{n}"),
            format!("F1@{n}"),
            "MAP".into(),
            "NDCG".into(),
            "bpref".into(),
        ]
    }

    /// Aligned-column text: a header line naming the depths, one row per
    /// query, then the mean row.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# topN = {}; NDCG and bpref over {}; {} queries",
            self.topn,
            self.depth_label(),
            self.queries.len()
        );
        let width = self
            .queries
            .keys()
            .map(String::len)
            .chain([5])
            .max()
            .unwrap_or(5);
        let _ = write!(out, "{:<width$}", "query");
        for h in self.header_names() {
            let _ = write!(out, " {h:>8}");
        }
        out.push('\n');
        let mut row = |name: &str, m: &QueryMetrics| {
            let _ = write!(out, "{name:<width$}");
            for v in m.values() {
                let _ = write!(out, " {v:>8.4}");
            }
            out.push('\n');
        };
        for (q, m) in &self.queries {
            row(q, m);
        }
        row("mean", &self.mean);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}

//! In-memory pipeline pieces shared by the commands: rankings for the
//! trained model and the single-vector baselines.

use ctpe::corpus::{CorpusStore, Split};
use ctpe::embedding::{random_table, EmbeddingTable, Vocabulary};
use ctpe::encoder::{init_encoder, TwinEncoder};
use ctpe::evaluation::{evaluate_run, Judgments, MetricsReport};
use ctpe::exec::Execution;
use ctpe::representation::embed_corpus;
use ctpe::retrieval::{avg_embed, rank_pairs, rank_tfidf, rank_vectors, RankedList, Run, VectorStore};
use ctpe::tfidf::TfIdfIndex;
use ctpe::trainer::{train, TrainConfig, TrainReport};
use ctpe::Result;
use log::warn;

/// Offset separating the random word-vector stream from the encoder seed.
pub const TABLE_STREAM: u64 = 0x7ab1_e000;

/// Random word vectors over the corpus vocabulary.
pub fn random_vectors(store: &CorpusStore, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    random_table(Vocabulary::from_corpus(store), dim, seed ^ TABLE_STREAM)
}

pub fn lists_to_run(lists: Vec<RankedList>) -> Run {
    lists.into_iter().map(|l| (l.query_id, l.entries)).collect()
}

/// Ranks test documents against candidates with pair similarity.
pub fn rank_model(
    store: &CorpusStore,
    twin: &TwinEncoder,
    table: &EmbeddingTable,
    depth: Option<usize>,
    exec: Execution,
) -> Result<Vec<RankedList>> {
    let (emb, _) = embed_corpus(twin, table, store, exec);
    let queries = emb.ids(Split::Test);
    let candidates = emb.ids(Split::Candidate);
    rank_pairs(&emb, &queries, &emb, &candidates, depth, exec)
}

/// Averaged word vectors of each document's segmented text.
pub fn average_vectors(store: &CorpusStore, table: &EmbeddingTable) -> VectorStore {
    let mut out = VectorStore::new();
    for (id, pair) in &store.pairs {
        match avg_embed(pair.full_tokens(), table) {
            Ok(v) if v.iter().any(|&x| x != 0.0) => {
                out.insert(id.clone(), v);
            }
            _ => warn!("no averaged vector for `{id}`"),
        }
    }
    out
}

pub fn rank_average(
    store: &CorpusStore,
    table: &EmbeddingTable,
    depth: Option<usize>,
    exec: Execution,
) -> Result<Vec<RankedList>> {
    let vectors = average_vectors(store, table);
    let ids = |split: Split| -> Vec<&str> {
        store
            .pair_ids(split)
            .into_iter()
            .filter(|id| vectors.contains_key(*id))
            .collect()
    };
    rank_vectors(&vectors, &ids(Split::Test), &ids(Split::Candidate), depth, exec)
}

pub fn rank_tfidf_baseline(
    store: &CorpusStore,
    depth: Option<usize>,
    exec: Execution,
) -> Result<Vec<RankedList>> {
    let index = TfIdfIndex::fit(store);
    rank_tfidf(
        &index,
        &store.pair_ids(Split::Test),
        &store.pair_ids(Split::Candidate),
        depth,
        exec,
    )
}

/// Reports of the trained model, the untrained model and both baselines on
/// one corpus.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub trained: MetricsReport,
    pub untrained: MetricsReport,
    pub average: MetricsReport,
    pub tfidf: MetricsReport,
    pub train_report: TrainReport,
}

pub fn compare_methods(
    store: &CorpusStore,
    table: &EmbeddingTable,
    config: &TrainConfig,
    judgments: &Judgments,
    topn: usize,
    exec: Execution,
) -> Result<Comparison> {
    let evaluate = |lists: Vec<RankedList>| {
        evaluate_run(&lists_to_run(lists), judgments, topn, None, exec)
    };
    let (twin, train_report) = train(store, table, config, exec)?;
    let untrained = init_encoder(&config.encoder_config(table.dim()), config.seed)?;
    Ok(Comparison {
        trained: evaluate(rank_model(store, &twin, table, None, exec)?)?,
        untrained: evaluate(rank_model(store, &untrained, table, None, exec)?)?,
        average: evaluate(rank_average(store, table, None, exec)?)?,
        tfidf: evaluate(rank_tfidf_baseline(store, None, exec)?)?,
        train_report,
    })
}

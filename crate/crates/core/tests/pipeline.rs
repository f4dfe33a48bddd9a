use ctpe::corpus::{corpus_from_raw, CorpusStore, SegmentationSpec, Split};
use ctpe::embedding::{random_table, EmbeddingTable, Vocabulary};
use ctpe::encoder::init_encoder;
use ctpe::evaluation::{evaluate_run, Judgments};
use ctpe::exec::Execution;
use ctpe::representation::{embed_corpus, EmbeddingStore};
use ctpe::retrieval::{rank_pairs, rank_tfidf, read_run, write_run, Run};
use ctpe::tfidf::TfIdfIndex;
use ctpe::synthetic::{generate, SyntheticCorpus, SyntheticSpec, PART_ORDER};
use ctpe::trainer::{train, TrainConfig};

fn easy_corpus(seed: u64) -> (SyntheticCorpus, CorpusStore, EmbeddingTable) {
    let spec = SyntheticSpec {
        topics: 3,
        vocab_per_topic: 20,
        shared_vocab: 1,
        candidates_per_topic: 20,
        tests_per_topic: 4,
        noise: 0.0,
        shared_rate: 0.0,
        seed,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let order = PART_ORDER.iter().map(|s| s.to_string()).collect();
    let store = corpus_from_raw(order, &corpus.documents, SegmentationSpec::default(), 200).unwrap();
    let table = random_table(Vocabulary::from_corpus(&store), 8, seed).unwrap();
    (corpus, store, table)
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        l: 20,
        n_filters: 6,
        batch_size: 16,
        epochs,
        patience: 50,
        learning_rate: 0.005,
        ..TrainConfig::default()
    }
}

fn map_of(emb: &EmbeddingStore, judgments: &Judgments) -> f64 {
    let lists = rank_pairs(
        emb,
        &emb.ids(Split::Test),
        emb,
        &emb.ids(Split::Candidate),
        None,
        Execution::Parallel,
    )
    .unwrap();
    let run: Run = lists.into_iter().map(|l| (l.query_id, l.entries)).collect();
    evaluate_run(&run, judgments, 20, None, Execution::Parallel).unwrap().map()
}

#[test]
fn training_improves_retrieval_on_a_clean_corpus() {
    let (corpus, store, table) = easy_corpus(2);
    let cfg = config(40);
    let (twin, report) = train(&store, &table, &cfg, Execution::Parallel).unwrap();
    let losses = report.losses();
    assert!(losses.last().unwrap() < &losses[0]);

    let untrained = init_encoder(&cfg.encoder_config(table.dim()), cfg.seed).unwrap();
    let (before, _) = embed_corpus(&untrained, &table, &store, Execution::Parallel);
    let (after, skipped) = embed_corpus(&twin, &table, &store, Execution::Parallel);
    assert!(skipped.is_empty());
    let (m0, m1) = (map_of(&before, &corpus.judgments), map_of(&after, &corpus.judgments));
    assert!(m1 > m0 + 0.1, "trained {m1} vs untrained {m0}");
}

#[test]
fn sequential_and_parallel_training_agree_bitwise() {
    let (_, store, table) = easy_corpus(5);
    let cfg = config(3);
    let (a, ra) = train(&store, &table, &cfg, Execution::Sequential).unwrap();
    let (b, rb) = train(&store, &table, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a.tensors(), b.tensors());
    assert_eq!(ra.losses(), rb.losses());
}

#[test]
fn run_files_round_trip_through_evaluation() {
    let (corpus, store, table) = easy_corpus(7);
    let twin = init_encoder(&config(0).encoder_config(table.dim()), 1).unwrap();
    let (emb, _) = embed_corpus(&twin, &table, &store, Execution::Sequential);
    let lists = rank_pairs(
        &emb,
        &emb.ids(Split::Test),
        &emb,
        &emb.ids(Split::Candidate),
        Some(10),
        Execution::Sequential,
    )
    .unwrap();
    let mut bytes = Vec::new();
    write_run(&lists, &mut bytes).unwrap();
    let run = read_run(bytes.as_slice()).unwrap();
    assert_eq!(run.len(), 12);
    assert!(run.values().all(|entries| entries.len() == 10));
    for list in &lists {
        assert_eq!(run[&list.query_id], list.entries);
    }
    let report = evaluate_run(&run, &corpus.judgments, 10, None, Execution::Sequential).unwrap();
    assert_eq!(report.queries.len(), 12);
}

#[test]
fn qrels_round_trip() {
    let (corpus, _, _) = easy_corpus(3);
    let mut bytes = Vec::new();
    corpus.judgments.write_qrels(&mut bytes).unwrap();
    let back = Judgments::read_qrels(bytes.as_slice()).unwrap();
    assert_eq!(back.relevant, corpus.judgments.relevant);
}

#[test]
fn tfidf_is_perfect_on_a_noiseless_corpus() {
    let (corpus, store, _) = easy_corpus(4);
    let index = TfIdfIndex::fit(&store);
    let lists = rank_tfidf(
        &index,
        &store.pair_ids(Split::Test),
        &store.pair_ids(Split::Candidate),
        None,
        Execution::Parallel,
    )
    .unwrap();
    let run: Run = lists.into_iter().map(|l| (l.query_id, l.entries)).collect();
    let report = evaluate_run(&run, &corpus.judgments, 20, None, Execution::Parallel).unwrap();
    assert_eq!(report.map(), 1.0);
}

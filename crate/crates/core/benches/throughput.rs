use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ctpe::corpus::{corpus_from_raw, CorpusStore, SegmentationSpec, Split};
use ctpe::embedding::{random_table, EmbeddingTable, Vocabulary};
use ctpe::encoder::{init_encoder, TwinEncoder};
use ctpe::exec::Execution;
use ctpe::representation::embed_corpus;
use ctpe::retrieval::{rank_pairs, rank_tfidf};
use ctpe::synthetic::{generate, SyntheticSpec, PART_ORDER};
use ctpe::tfidf::TfIdfIndex;
use ctpe::trainer::{batch_gradients, sample_negatives, Sampling, TrainConfig, TrainingSet};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

struct Fixture {
    store: CorpusStore,
    table: EmbeddingTable,
    twin: TwinEncoder,
    config: TrainConfig,
}

fn fixture() -> Fixture {
    let corpus = generate(&SyntheticSpec::default()).unwrap();
    let order = PART_ORDER.iter().map(|s| s.to_string()).collect();
    let store = corpus_from_raw(order, &corpus.documents, SegmentationSpec::default(), 200).unwrap();
    let table = random_table(Vocabulary::from_corpus(&store), 50, 3).unwrap();
    let config = TrainConfig { l: 40, n_filters: 32, ..TrainConfig::default() };
    let twin = init_encoder(&config.encoder_config(table.dim()), 1).unwrap();
    Fixture { store, table, twin, config }
}

fn gradients(c: &mut Criterion) {
    let fx = fixture();
    let set = TrainingSet::build(&fx.store, &fx.table, &fx.twin.config);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let negatives = sample_negatives(set.len(), Sampling::Uniform, None, &mut rng).unwrap();
    let samples: Vec<_> = negatives.iter().take(200).map(|n| set.sample(n)).collect();
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_gradients(&fx.twin, black_box(&samples), fx.config.margin, exec).unwrap())
        });
    }
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("embed_corpus");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| embed_corpus(&fx.twin, &fx.table, black_box(&fx.store), exec))
        });
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let fx = fixture();
    let (store, _) = embed_corpus(&fx.twin, &fx.table, &fx.store, Execution::Parallel);
    let queries = store.ids(Split::Test);
    let candidates = store.ids(Split::Candidate);
    let index = TfIdfIndex::fit(&fx.store);
    let mut group = c.benchmark_group("rank");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("pairs", name), |b| {
            b.iter(|| rank_pairs(&store, &queries, &store, &candidates, Some(100), exec).unwrap())
        });
        group.bench_function(BenchmarkId::new("tfidf", name), |b| {
            b.iter(|| rank_tfidf(&index, &queries, &candidates, Some(100), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, embedding, ranking);
criterion_main!(benches);

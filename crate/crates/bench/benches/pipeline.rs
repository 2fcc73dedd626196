use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ss3_bench::SyntheticCorpus;
use ss3_core::{classify_document, EarlyPolicy, LevelConfig, SubjectState};

fn bench_term_valuation(c: &mut Criterion) {
    let mut corpus = SyntheticCorpus::new(&["negative", "positive"], 200, 1);
    let model = corpus.train(50, 80);
    c.bench_function("term_vector", |b| {
        b.iter(|| black_box(model.term_vector(black_box("positiveword7"))))
    });

    let mut cached = corpus.train(50, 80);
    cached.update_global_values();
    c.bench_function("term_vector_cached", |b| {
        b.iter(|| black_box(cached.term_vector(black_box("positiveword7"))))
    });
}

fn bench_classify_document(c: &mut Criterion) {
    let mut corpus = SyntheticCorpus::new(&["negative", "positive"], 200, 2);
    let model = corpus.train(50, 80);
    let cfg = LevelConfig::default_hierarchy();
    let doc = corpus.document(1, 200);
    c.bench_function("classify_document_200w", |b| {
        b.iter(|| black_box(classify_document(&model, black_box(&doc), &cfg)))
    });
}

fn bench_stream_feed(c: &mut Criterion) {
    let mut corpus = SyntheticCorpus::new(&["negative", "positive"], 200, 3);
    let model = corpus.train(50, 80);
    let cfg = LevelConfig::default_hierarchy();
    let policy = EarlyPolicy::delta(1, 0, 4.0, 0.0).unwrap();
    let post = corpus.document(1, 40);
    c.bench_function("stream_feed_40w", |b| {
        b.iter(|| {
            let mut state = SubjectState::new("s", 2);
            black_box(state.feed(&model, black_box(&post), &policy, &cfg))
        })
    });
}

criterion_group!(benches, bench_term_valuation, bench_classify_document, bench_stream_feed);
criterion_main!(benches);

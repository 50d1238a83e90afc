use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use amr_transit::{
    beam_decode, build_sep_vocab, bundled_corpus, coverage_report, replay, run_oracle, smatch,
    train_baseline, DecodeOptions, SmatchOptions,
};

fn oracle(c: &mut Criterion) {
    let corpus = bundled_corpus();
    c.bench_function("oracle/bundled", |b| {
        b.iter(|| coverage_report(black_box(&corpus.entries)))
    });

    let outcomes: Vec<_> = corpus
        .entries
        .iter()
        .map(|e| run_oracle(e).unwrap())
        .collect();
    c.bench_function("replay/bundled", |b| {
        b.iter(|| {
            for (entry, o) in corpus.entries.iter().zip(&outcomes) {
                black_box(replay(&entry.tokens, &o.actions).unwrap());
            }
        })
    });
}

fn metrics(c: &mut Criterion) {
    let corpus = bundled_corpus();
    let mets = corpus.entries.iter().find(|e| e.id == "mets").unwrap();
    let options = SmatchOptions::default();
    c.bench_function("smatch/self", |b| {
        b.iter(|| smatch(black_box(&mets.graph), black_box(&mets.graph), &options))
    });
    let other = &corpus.entries[0].graph;
    c.bench_function("smatch/different", |b| {
        b.iter(|| smatch(black_box(&mets.graph), black_box(other), &options))
    });
}

fn decode(c: &mut Criterion) {
    let corpus = bundled_corpus();
    let actions: Vec<_> = corpus
        .entries
        .iter()
        .map(|e| run_oracle(e).unwrap().actions)
        .collect();
    let vocab = build_sep_vocab(&actions);
    let pairs = corpus
        .entries
        .iter()
        .zip(&actions)
        .map(|(e, a)| (e.tokens.as_slice(), a.as_slice()));
    let model = train_baseline(pairs, &vocab).unwrap();
    let tokens = &corpus
        .entries
        .iter()
        .find(|e| e.id == "mets")
        .unwrap()
        .tokens;
    let mut group = c.benchmark_group("beam_decode");
    for beam in [1, 10] {
        let options = DecodeOptions {
            beam,
            max_len: None,
        };
        group.bench_function(format!("beam{beam}"), |b| {
            b.iter(|| beam_decode(black_box(tokens), &vocab, &model, &options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, oracle, metrics, decode);
criterion_main!(benches);

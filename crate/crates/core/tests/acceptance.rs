//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p amr-transit --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use amr_transit::corpus::{read_corpus_str, write_entry, ReadOptions};
use amr_transit::decoder::{beam_decode, train_baseline, DecodeOptions, RandomScorer};
use amr_transit::features::export_features;
use amr_transit::graph::AmrGraph;
use amr_transit::metrics::{smatch, smatch_exact, MatchCounts, SmatchOptions};
use amr_transit::oracle::{derive_actions, run_oracle};
use amr_transit::penman::{parse_penman, print_penman};
use amr_transit::segment::{BpeSegmenter, Segmenter};
use amr_transit::transition::{format_actions, parse_actions, replay, Action};
use amr_transit::vocab::{build_joint_vocab, build_sep_vocab, SymbolKind, Vocabulary};
use amr_transit::{bundled_corpus, CorpusEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn oracle_pairs(entries: &[CorpusEntry]) -> Vec<(Vec<String>, Vec<Action>)> {
    entries
        .iter()
        .map(|e| {
            (
                e.tokens.clone(),
                run_oracle(e).expect("bundled entries derive").actions,
            )
        })
        .collect()
}

/// Every connected component of `g` survives print → parse at Smatch 1.0.
fn components_round_trip(g: &AmrGraph) -> bool {
    g.connected_components().iter().all(|component| {
        let mut sub = g.subgraph(component);
        if sub.root().is_none() {
            let all: Vec<_> = sub.node_ids().collect();
            let top = sub.default_top(&all).expect("non-empty");
            sub.set_root(top).expect("node exists");
        }
        let Ok(text) = print_penman(&sub) else {
            return false;
        };
        let Ok(back) = parse_penman(&text) else {
            return false;
        };
        back.validate().is_ok() && smatch(&back, &sub, &SmatchOptions::default()).f1 == 1.0
    })
}

fn oracle_full_recovery() -> Outcome {
    let start = Instant::now();
    let gold = bundled_corpus();
    // oracle
    let pairs = oracle_pairs(&gold.entries);
    // play
    let mut played = Vec::new();
    for (entry, (tokens, actions)) in gold.entries.iter().zip(&pairs) {
        let state = replay(tokens, actions).expect("oracle actions replay");
        let (graph, alignment) = state.extract_graph().expect("finished");
        write_entry(&mut played, &entry.id, tokens, &graph, &alignment).expect("in memory");
    }
    let played = read_corpus_str(
        &String::from_utf8(played).expect("utf-8"),
        ReadOptions::default(),
    );
    // eval
    let mut total = MatchCounts::default();
    for (test, gold) in played.entries.iter().zip(&gold.entries) {
        total += smatch(&test.graph, &gold.graph, &SmatchOptions::default()).counts;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let actions: usize = pairs.iter().map(|p| p.1.len() - 1).sum();
    let tokens: usize = pairs.iter().map(|p| p.0.len()).sum();
    let pass = gold.entries.len() >= 20
        && played.entries.len() == gold.entries.len()
        && played.warnings.is_empty()
        && total.f1() == 1.0
        && elapsed < 5.0;
    outcome(
        pass,
        format!(
            "{} sentences, corpus Smatch {:.3}, {elapsed:.2}s, {:.2} actions/token",
            gold.entries.len(),
            total.f1(),
            actions as f64 / tokens as f64
        ),
    )
}

fn boston_trip_golden() -> Outcome {
    let corpus = bundled_corpus();
    let entry = corpus
        .entries
        .iter()
        .find(|e| e.id == "boston-trip")
        .expect("boston_trip entry");
    let expected = parse_actions(
        "person employ-01 RA(1,:ARG1-of) SHIFT like-01 LA(1,:ARG0) ROOT SHIFT SHIFT city name \
         RA(10,:name) COPY RA(11,:op1) SHIFT trip-03 LA(10,:ARG1) RA(5,:ARG1) LA(1,:ARG0) SHIFT CLOSE",
    )
    .expect("well-formed");
    let actions = derive_actions(&entry.tokens, &entry.graph, &entry.alignment).expect("derives");
    let pointers: Vec<(usize, usize)> = actions
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.pointer().map(|p| (i + 1, p)))
        .collect();
    let state = replay(&entry.tokens, &actions).expect("replays");
    let (graph, alignment) = state.extract_graph().expect("finished");
    let mut aligned: Vec<(String, usize)> = graph
        .node_ids()
        .map(|n| {
            (
                graph.node(n).label.clone(),
                alignment.get(n).expect("aligned"),
            )
        })
        .collect();
    aligned.sort();
    let mut want: Vec<(String, usize)> = [
        ("person", 0),
        ("employ-01", 0),
        ("like-01", 1),
        ("city", 3),
        ("name", 3),
        ("boston", 3),
        ("trip-03", 4),
    ]
    .iter()
    .map(|(l, t)| (l.to_string(), *t))
    .collect();
    want.sort();
    let pass = actions == expected
        && pointers
            == vec![
                (3, 1),
                (6, 1),
                (12, 10),
                (14, 11),
                (17, 10),
                (18, 5),
                (19, 1),
            ]
        && aligned == want
        && smatch(&graph, &entry.graph, &SmatchOptions::default()).f1 == 1.0;
    outcome(pass, format_actions(&actions).to_string())
}

fn well_formedness_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut crashes, mut invalid, mut round_trip) = (0, 0, 0);
    let runs = 10_000;
    for _ in 0..runs {
        let len = rng.gen_range(1..=30);
        let seed: u64 = rng.gen();
        let result = catch_unwind(AssertUnwindSafe(|| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let tokens = common::words(&mut r, len);
            let state = common::rollout(&mut r, tokens);
            let graph = state.graph().clone();
            (
                graph.validate().is_ok() && state.is_done(),
                components_round_trip(&graph),
            )
        }));
        match result {
            Err(_) => crashes += 1,
            Ok((valid, rt)) => {
                invalid += usize::from(!valid);
                round_trip += usize::from(!rt);
            }
        }
    }
    outcome(
        crashes == 0 && invalid == 0 && round_trip == 0,
        format!("{runs} rollouts: {crashes} crashes, {invalid} invalid graphs, {round_trip} round-trip failures"),
    )
}

fn adversarial_decoding() -> Outcome {
    let corpus = bundled_corpus();
    let pairs = oracle_pairs(&corpus.entries);
    let vocab = build_sep_vocab(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sentences = 1000;
    let (mut failures, mut adversarial_failures) = (0, 0);
    let check = |tokens: &[String], scorer: &RandomScorer| -> bool {
        let Ok(d) = beam_decode(tokens, &vocab, scorer, &DecodeOptions::default()) else {
            return false;
        };
        let replayed = replay(tokens, &d.actions)
            .map(|s| s.is_done())
            .unwrap_or(false);
        let printable = print_penman(&d.graph)
            .ok()
            .and_then(|t| parse_penman(&t).ok())
            .is_some_and(|g| g.validate().is_ok());
        d.graph.validate().is_ok()
            && d.graph.root().is_some()
            && replayed
            && printable
            && components_round_trip(&d.graph)
    };
    for i in 0..sentences {
        let len = rng.gen_range(1..=30);
        let tokens = common::words(&mut rng, len);
        if !check(&tokens, &RandomScorer::new(i, false)) {
            failures += 1;
        }
        if i % 5 == 0 && !check(&tokens, &RandomScorer::new(i, true)) {
            adversarial_failures += 1;
        }
    }
    outcome(
        failures == 0 && adversarial_failures == 0,
        format!(
            "{sentences} random-scorer decodes: {failures} invalid; {} NaN/inf-scorer decodes: {adversarial_failures} invalid",
            sentences / 5
        ),
    )
}

fn smatch_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let pairs = 100;
    let (mut above, mut equal) = (0, 0);
    for _ in 0..pairs {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let a = common::connected_graph(&mut rng, n, false);
        let b = common::connected_graph(&mut rng, m, false);
        let hill = smatch(
            &a,
            &b,
            &SmatchOptions {
                restarts: 4,
                seed: 0,
            },
        )
        .f1;
        let exact = smatch_exact(&a, &b).expect("small graphs").f1;
        above += usize::from(hill > exact + 1e-12);
        equal += usize::from((hill - exact).abs() < 1e-12);
    }
    let mut not_one = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=20);
        let g = common::connected_graph(&mut rng, n, false);
        not_one += usize::from(smatch(&g, &g, &SmatchOptions::default()).f1 != 1.0);
    }
    outcome(
        above == 0 && equal * 100 >= 95 * pairs && not_one == 0,
        format!("hill-climb above exact {above}/{pairs}, equal {equal}/{pairs}; smatch(g,g) != 1 for {not_one}/200"),
    )
}

fn random_oracle_outputs(count: usize) -> Vec<Vec<Action>> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut out = oracle_pairs(&bundled_corpus().entries)
        .into_iter()
        .map(|p| p.1)
        .collect::<Vec<_>>();
    while out.len() < count {
        let n = rng.gen_range(1..=15);
        let distinct = rng.gen_bool(0.5);
        let g = common::connected_graph(&mut rng, n, distinct);
        let (tokens, alignment) = common::aligned_sentence(&mut rng, &g);
        out.push(derive_actions(&tokens, &g, &alignment).expect("connected and aligned"));
    }
    out
}

fn pointers_hit_first_pieces(vocab: &Vocabulary, actions: &[Action]) -> bool {
    let Ok(e) = vocab.encode(actions) else {
        return false;
    };
    e.pointers.iter().flatten().all(|&p| {
        let s = vocab.symbol(e.symbols[p - 1]);
        matches!(s.kind, SymbolKind::Node | SymbolKind::PieceStart)
            || (s.kind == SymbolKind::Structural && s.text == "COPY")
    })
}

fn vocabulary_properties() -> Outcome {
    let corpus = random_oracle_outputs(1000);
    let names: Vec<&str> = corpus
        .iter()
        .flatten()
        .filter_map(|a| match a {
            Action::Node(n) => Some(n.as_str()),
            _ => None,
        })
        .collect();
    let seg: Arc<dyn Segmenter> = Arc::new(BpeSegmenter::train(names.iter().copied(), 200));
    let sep = build_sep_vocab(&corpus);
    let joint = build_joint_vocab(&corpus, seg.clone(), 5).expect("segmentable");
    let infinite = build_joint_vocab(&corpus, seg, u64::MAX).expect("segmentable");
    let round_trips = |v: &Vocabulary| {
        corpus
            .iter()
            .filter(|a| v.encode(a).and_then(|e| v.decode(&e)).as_ref() == Ok(*a))
            .count()
    };
    let (s, j, i) = (
        round_trips(&sep),
        round_trips(&joint),
        round_trips(&infinite),
    );
    let first_piece = corpus
        .iter()
        .filter(|a| pointers_hit_first_pieces(&joint, a) && pointers_hit_first_pieces(&infinite, a))
        .count();
    let n = corpus.len();
    outcome(
        s == n && j == n && i == n && first_piece == n && infinite.whole_nodes() == 0,
        format!(
            "{n} sequences round-trip: sep {s}, joint(5) {j}, joint(inf) {i}; first-piece pointers {first_piece}; whole nodes joint(5) {} joint(inf) {}",
            joint.whole_nodes(),
            infinite.whole_nodes()
        ),
    )
}

fn feature_export_consistency() -> Outcome {
    let pairs = oracle_pairs(&bundled_corpus().entries);
    let actions: Vec<Vec<Action>> = pairs.iter().map(|p| p.1.clone()).collect();
    let sep = build_sep_vocab(&actions);
    let names: Vec<&str> = actions
        .iter()
        .flatten()
        .filter_map(|a| match a {
            Action::Node(n) => Some(n.as_str()),
            _ => None,
        })
        .collect();
    let seg: Arc<dyn Segmenter> = Arc::new(BpeSegmenter::train(names.iter().copied(), 50));
    let joint = build_joint_vocab(&actions, seg, 2).expect("segmentable");
    let (mut steps, mut bad) = (0, 0);
    for vocab in [&sep, &joint] {
        for (tokens, actions) in &pairs {
            let Ok(features) = export_features(tokens, actions, vocab) else {
                bad += 1;
                continue;
            };
            for f in features {
                steps += 1;
                let pointer_ok = f
                    .target_pointer
                    .is_none_or(|p| f.valid_pointer_positions.contains(&p));
                if !f.allowed_symbols.contains(&f.target_symbol) || !pointer_ok {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0,
        format!("{steps} steps (sep and joint), {bad} outside their masks"),
    )
}

fn memorization_floor() -> Outcome {
    let corpus = bundled_corpus();
    let pairs = oracle_pairs(&corpus.entries);
    let vocab = build_sep_vocab(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    let model = train_baseline(
        pairs.iter().map(|(t, a)| (t.as_slice(), a.as_slice())),
        &vocab,
    )
    .expect("non-empty");
    let mut total = MatchCounts::default();
    let mut exact = 0;
    for (entry, (tokens, gold)) in corpus.entries.iter().zip(&pairs) {
        let d = beam_decode(
            tokens,
            &vocab,
            &model,
            &DecodeOptions {
                beam: 1,
                max_len: None,
            },
        )
        .expect("decodes");
        exact += usize::from(&d.actions == gold);
        total += smatch(&d.graph, &entry.graph, &SmatchOptions::default()).counts;
    }
    outcome(
        total.f1() >= 0.95,
        format!(
            "greedy Smatch {:.3}, {exact}/{} exact sequences",
            total.f1(),
            pairs.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle full recovery", oracle_full_recovery),
        ("worked-example golden sequence", boston_trip_golden),
        ("well-formedness fuzz", well_formedness_fuzz),
        ("adversarial-scorer decoding", adversarial_decoding),
        ("Smatch hill-climb vs exact", smatch_equivalence),
        ("vocabulary properties", vocabulary_properties),
        ("feature-export consistency", feature_export_consistency),
        ("baseline memorization floor", memorization_floor),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let result = catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked"));
        failed += usize::from(!result.pass);
        println!(
            "{} {name}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

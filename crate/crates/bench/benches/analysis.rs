use std::collections::BTreeMap;
use std::hint::black_box;
use std::path::Path;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drivetext_core::agreement::{cohen_kappa, fleiss_kappa, stratified_gold_sample, LabeledPair};
use drivetext_core::corpus::load_conllu;
use drivetext_core::gateway::{MockBackend, MockRule};
use drivetext_core::keyness::{compute_prior, count_lemmas, keyness_report};
use drivetext_core::race::{classify_corpus, Ensemble, EnsembleMember, ModelSettings};
use drivetext_core::syntax::{analyze_corpus, group_templates, CausalCueConfig, VerbLexicons};
use drivetext_core::{Explanation, Gateway, LemmaStream, PromptTemplate, Taxonomy};

fn synthetic_streams(docs: usize, contexts: usize, vocab: usize) -> (Vec<LemmaStream>, BTreeMap<String, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut labels = BTreeMap::new();
    let streams = (0..docs)
        .map(|d| {
            let c = rng.random_range(0..contexts);
            let lemmas: Vec<String> = (0..rng.random_range(4..30))
                .map(|_| format!("w{}", rng.random_range(0..vocab)))
                .collect();
            labels.insert(format!("d{d}"), format!("c{c}"));
            LemmaStream {
                explanation_id: format!("d{d}"),
                surfaces: lemmas.clone(),
                lemmas,
            }
        })
        .collect();
    (streams, labels)
}

fn keyness(c: &mut Criterion) {
    let mut g = c.benchmark_group("keyness");
    for docs in [1_000, 10_000] {
        let (streams, labels) = synthetic_streams(docs, 32, 2_000);
        g.bench_with_input(BenchmarkId::new("count_and_rank", docs), &docs, |b, _| {
            b.iter(|| {
                let t = count_lemmas(&streams, &labels).unwrap();
                let prior = compute_prior(&t.background, 1000.0).unwrap();
                black_box(keyness_report(&t, &prior, 20).unwrap())
            })
        });
    }
    g.finish();
}

fn agreement(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let labels: Vec<String> = (0..32).map(|i| format!("L{i}")).collect();
    let pairs: Vec<LabeledPair> = (0..n)
        .map(|i| {
            let g = rng.random_range(0..32);
            let p = if rng.random_bool(0.8) {
                g
            } else {
                rng.random_range(0..32)
            };
            LabeledPair::new(i.to_string(), labels[g].clone(), labels[p].clone())
        })
        .collect();
    let ratings: Vec<Vec<&str>> = pairs
        .iter()
        .map(|p| {
            vec![
                p.rater_a_label.as_str(),
                p.rater_b_label.as_str(),
                p.rater_a_label.as_str(),
            ]
        })
        .collect();
    let by_id: BTreeMap<String, String> = pairs
        .iter()
        .map(|p| (p.explanation_id.clone(), p.rater_a_label.clone()))
        .collect();
    c.bench_function("cohen_kappa_10k", |b| {
        b.iter(|| black_box(cohen_kappa(&pairs).unwrap()))
    });
    c.bench_function("fleiss_kappa_10k_x3", |b| {
        b.iter(|| black_box(fleiss_kappa(&ratings).unwrap()))
    });
    c.bench_function("stratified_sample_10k", |b| {
        b.iter(|| black_box(stratified_gold_sample(&by_id, 0.1, 2, 7).unwrap()))
    });
}

fn syntax(c: &mut Criterion) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/sample/parses.conllu");
    let parses = load_conllu(&path).unwrap();
    let lex = VerbLexicons::default();
    let cues = CausalCueConfig::default();
    let labels: BTreeMap<String, String> = parses
        .iter()
        .map(|p| (p.explanation_id.clone(), "c".to_string()))
        .collect();
    c.bench_function("syntax_sample_corpus", |b| {
        b.iter(|| {
            let records = analyze_corpus(&parses, &lex, &cues);
            black_box(group_templates(&records, &labels).unwrap())
        })
    });
}

fn classification(c: &mut Criterion) {
    let taxonomy = Taxonomy::from_labels(&["Alpha", "Beta"]).unwrap();
    let items: Vec<Explanation> = (0..200)
        .map(|i| {
            Explanation::new(
                format!("e{i}"),
                format!("note {}", if i % 2 == 0 { "north" } else { "south" }),
            )
        })
        .collect();
    let member = |role: &str, north: &str| {
        let mut mock = MockBackend::new(vec![MockRule {
            keywords: vec!["north".into()],
            reply: format!("LABEL: {north}"),
        }]);
        mock.default_reply = "LABEL: Beta".into();
        mock.scope_marker = Some("Explanation:".into());
        EnsembleMember::new(role, ModelSettings::new(role), Arc::new(Gateway::new(Arc::new(mock))))
    };
    let ens = Ensemble {
        m1: member("m1", "Alpha"),
        m2: member("m2", "Beta"),
        m3: member("m3", "Alpha"),
    };
    let template = PromptTemplate::default_template();
    c.bench_function("classify_200_mock", |b| {
        b.iter(|| black_box(classify_corpus(&items, &template, &taxonomy, &ens, 4).unwrap()))
    });
}

criterion_group!(benches, keyness, agreement, syntax, classification);
criterion_main!(benches);

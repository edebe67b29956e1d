//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to see them.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drivetext_core::agreement::{
    cohen_kappa, fleiss_kappa, landis_koch, macro_f1, pairs_from, stratified_gold_sample, AgreementLevel, MacroAverage,
};
use drivetext_core::corpus::load_conllu;
use drivetext_core::gateway::{MockBackend, MockRule};
use drivetext_core::keyness::{compute_prior, count_lemmas, keyness_z, log_odds_delta, top_keyness};
use drivetext_core::race::{classify_corpus, classify_sc, Ensemble, EnsembleMember, ModelSettings};
use drivetext_core::syntax::{analyze_corpus, detect_causal, slot_string, CausalCueConfig, VerbLexicons};
use drivetext_core::{ClassificationOutcome, Explanation, Gateway, LemmaStream, PromptTemplate, Taxonomy};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

const LABELS: [&str; 3] = [
    "Traffic Signal Compliance",
    "Pedestrian Interaction",
    "Merging Integration",
];

fn scripted(role: &str, answers: &[(String, &str)]) -> EnsembleMember {
    let mut mock = MockBackend::new(
        answers
            .iter()
            .map(|(case, label)| MockRule {
                keywords: vec![case.clone()],
                reply: format!("Step by step: {case} looks familiar.\nLABEL: {label}"),
            })
            .collect(),
    );
    mock.scope_marker = Some("Explanation:".into());
    EnsembleMember::new(
        role,
        ModelSettings::new(format!("mock-{role}")),
        Arc::new(Gateway::new(Arc::new(mock))),
    )
}

fn vote_rule_exhaustive() -> Check {
    let start = Instant::now();
    let taxonomy = Taxonomy::from_labels(&LABELS).unwrap();
    let template = PromptTemplate::default_template();
    let mut cases = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                cases.push((format!("case{a}{b}{c}x"), [a, b, c]));
            }
        }
    }
    let answers =
        |k: usize| -> Vec<(String, &str)> { cases.iter().map(|(id, t)| (id.clone(), LABELS[t[k]])).collect() };
    let ens = Ensemble {
        m1: scripted("m1", &answers(0)),
        m2: scripted("m2", &answers(1)),
        m3: scripted("m3", &answers(2)),
    };
    let (mut consensus, mut majority, mut fallback) = (0, 0, 0);
    for (id, [a, b, c]) in &cases {
        let want = if a == b {
            consensus += 1;
            *a
        } else if c == a || c == b {
            majority += 1;
            *c
        } else {
            fallback += 1;
            *c
        };
        let e = Explanation::new(id.clone(), format!("Synthetic item {id}"));
        let ClassificationOutcome::Labeled(r) =
            classify_sc(&e, &template, &taxonomy, &ens).map_err(|e| e.to_string())?
        else {
            return Err(format!("{id} was not labeled"));
        };
        ensure(r.label == LABELS[want], || {
            format!("{id}: got {} want {}", r.label, LABELS[want])
        })?;
        ensure(r.tiebreak_used == (a != b), || format!("{id}: tiebreak flag"))?;
        let expected_conf = if a == b {
            1.0
        } else if c == a || c == b {
            2.0 / 3.0
        } else {
            1.0 / 3.0
        };
        ensure(r.confidence == expected_conf, || {
            format!("{id}: confidence {}", r.confidence)
        })?;
    }
    ensure((consensus, majority, fallback) == (9, 12, 6), || "case split".into())?;
    ensure(ens.m3.gateway.backend_calls() == 18, || "tiebreak call count".into())?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))
}

fn consensus_short_circuit() -> Check {
    let taxonomy = Taxonomy::from_labels(&LABELS).unwrap();
    let items: Vec<Explanation> = (0..200)
        .map(|i| Explanation::new(format!("item{i:03}"), format!("Driver note item{i:03}z")))
        .collect();
    let answers: Vec<(String, &str)> = (0..200).map(|i| (format!("item{i:03}z"), LABELS[i % 3])).collect();
    let ens = Ensemble {
        m1: scripted("m1", &answers),
        m2: scripted("m2", &answers),
        m3: scripted("m3", &[]),
    };
    let out =
        classify_corpus(&items, &PromptTemplate::default_template(), &taxonomy, &ens, 8).map_err(|e| e.to_string())?;
    let calls: usize = ens.members().iter().map(|m| m.gateway.backend_calls()).sum();
    ensure(calls == 400, || format!("{calls} backend calls"))?;
    ensure(ens.m3.gateway.backend_calls() == 0, || "m3 was called".into())?;
    for (i, o) in out.iter().enumerate() {
        let ClassificationOutcome::Labeled(r) = o else {
            return Err(format!("{} failed", o.explanation_id()));
        };
        ensure(!r.tiebreak_used && r.label == LABELS[i % 3], || {
            r.explanation_id.clone()
        })?;
    }
    Ok(())
}

fn agreement_oracle() -> Check {
    // [[20, 5], [10, 15]]: rows are rater A, columns rater B.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, n) in [
        ("yes", "yes", 20),
        ("yes", "no", 5),
        ("no", "yes", 10),
        ("no", "no", 15),
    ] {
        a.extend(std::iter::repeat_n(x, n));
        b.extend(std::iter::repeat_n(y, n));
    }
    let k = cohen_kappa(&pairs_from(&a, &b)).map_err(|e| e.to_string())?;
    ensure(k.value == 0.40, || format!("cohen {}", k.value))?;
    let table = [
        ["A", "A", "A"],
        ["A", "A", "B"],
        ["B", "B", "B"],
        ["B", "C", "B"],
        ["C", "C", "C"],
        ["A", "C", "C"],
    ];
    let rows: Vec<Vec<&str>> = table.iter().map(|r| r.to_vec()).collect();
    let f = fleiss_kappa(&rows).map_err(|e| e.to_string())?;
    // P_bar = 2/3, P_e = 1/3 by hand.
    ensure(close(f.value, 0.5, 1e-9), || format!("fleiss {}", f.value))?;
    ensure(landis_koch(0.91) == AgreementLevel::AlmostPerfect, || {
        "0.91 band".into()
    })?;
    ensure(landis_koch(0.57) == AgreementLevel::Moderate, || "0.57 band".into())
}

fn macro_f1_oracle() -> Check {
    let tax = Taxonomy::from_labels(&["A", "B"]).unwrap();
    let f = macro_f1(
        &pairs_from(&["A", "A", "B", "B"], &["A", "B", "B", "B"]),
        &tax,
        MacroAverage::Supported,
    )
    .map_err(|e| e.to_string())?;
    ensure(close(f, 0.7333, 1e-4), || format!("macro-F1 {f}"))?;
    let p = macro_f1(
        &pairs_from(&["A", "B", "B"], &["A", "B", "B"]),
        &tax,
        MacroAverage::Supported,
    )
    .map_err(|e| e.to_string())?;
    ensure(p == 1.0, || format!("perfect {p}"))
}

fn stream(id: &str, lemmas: &[&str]) -> LemmaStream {
    LemmaStream {
        explanation_id: id.into(),
        lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
        surfaces: lemmas.iter().map(|s| s.to_string()).collect(),
    }
}

fn keyness_closed_form() -> Check {
    let labels: BTreeMap<String, String> = [("1", "c1"), ("2", "c2")].map(|(a, b)| (a.into(), b.into())).into();
    let t = count_lemmas(
        &[stream("1", &["x", "x", "x", "y"]), stream("2", &["y", "y", "y", "x"])],
        &labels,
    )
    .map_err(|e| e.to_string())?;
    let prior = compute_prior(&t.background, 8.0).map_err(|e| e.to_string())?;
    let comp = t.complement("c1").map_err(|e| e.to_string())?;
    let d = log_odds_delta(&t.contexts["c1"], &comp, &prior, "x").map_err(|e| e.to_string())?;
    let z = keyness_z(d, 3, 1, prior.alphas["x"]);
    // Hand evaluation: alpha_x = 4, delta = ln(7/5) - ln(5/7), z = delta / sqrt(1/7 + 1/5).
    ensure(close(d, 0.6729444732424258, 1e-9), || format!("delta {d}"))?;
    ensure(close(z, 1.1492714809232922, 1e-9), || format!("z {z}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (streams, labels) = random_corpus(&mut rng, 2, 60, 300);
    let t = count_lemmas(&streams, &labels).map_err(|e| e.to_string())?;
    let alpha0 = 137.5;
    let prior = compute_prior(&t.background, alpha0).map_err(|e| e.to_string())?;
    let mass: f64 = prior.alphas.values().sum();
    ensure(close(mass, alpha0, 1e-9 * alpha0), || format!("prior mass {mass}"))?;
    let n = prior.alphas.len();
    let z1: BTreeMap<String, f64> = top_keyness(&t, &prior, "c0", n)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| (s.lemma, s.z))
        .collect();
    let z2: BTreeMap<String, f64> = top_keyness(&t, &prior, "c1", n)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| (s.lemma, s.z))
        .collect();
    ensure(z1.len() == n && z2.len() == n, || "vocabulary coverage".into())?;
    for (w, z) in &z1 {
        ensure(close(*z, -z2[w], 1e-12), || {
            format!("antisymmetry fails for {w}: {z} vs {}", z2[w])
        })?;
    }
    Ok(())
}

/// Context-skewed random lemma streams: `docs` documents over `vocab` lemmas.
fn random_corpus(
    rng: &mut ChaCha8Rng,
    contexts: usize,
    vocab: usize,
    docs: usize,
) -> (Vec<LemmaStream>, BTreeMap<String, String>) {
    let mut streams = Vec::new();
    let mut labels = BTreeMap::new();
    for d in 0..docs {
        let c = rng.random_range(0..contexts);
        let len = rng.random_range(3..25);
        let lemmas: Vec<String> = (0..len)
            .map(|_| {
                let w = if rng.random_bool(0.3) {
                    (c * vocab / contexts + rng.random_range(0..vocab / contexts)) % vocab
                } else {
                    let u: f64 = rng.random();
                    ((u * u * vocab as f64) as usize).min(vocab - 1)
                };
                format!("w{w:03}")
            })
            .collect();
        let id = format!("d{d}");
        labels.insert(id.clone(), format!("c{c}"));
        streams.push(LemmaStream {
            explanation_id: id,
            surfaces: lemmas.clone(),
            lemmas,
        });
    }
    (streams, labels)
}

/// Direct transcription of the estimator with plain maps.
fn naive_ranking(docs: &[(String, Vec<String>)], context: &str, alpha0: f64) -> Vec<(String, f64)> {
    let mut bg: HashMap<&str, f64> = HashMap::new();
    let mut inside: HashMap<&str, f64> = HashMap::new();
    let mut outside: HashMap<&str, f64> = HashMap::new();
    for (c, lemmas) in docs {
        for l in lemmas {
            *bg.entry(l).or_default() += 1.0;
            *if c == context { &mut inside } else { &mut outside }
                .entry(l)
                .or_default() += 1.0;
        }
    }
    let n_bg: f64 = bg.values().sum();
    let n_c: f64 = inside.values().sum();
    let n_o: f64 = outside.values().sum();
    let mut out: Vec<(String, f64)> = bg
        .iter()
        .map(|(w, count)| {
            let a = alpha0 * count / n_bg;
            let yc = inside.get(w).copied().unwrap_or(0.0);
            let yo = outside.get(w).copied().unwrap_or(0.0);
            let delta = ((yc + a) / (n_c + alpha0 - yc - a)).ln() - ((yo + a) / (n_o + alpha0 - yo - a)).ln();
            let z = delta / (1.0 / (yc + a) + 1.0 / (yo + a)).sqrt();
            (w.to_string(), z)
        })
        .collect();
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    out
}

fn keyness_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (streams, labels) = random_corpus(&mut rng, 5, 500, 1500);
    let t = count_lemmas(&streams, &labels).map_err(|e| e.to_string())?;
    let alpha0 = 1000.0;
    let prior = compute_prior(&t.background, alpha0).map_err(|e| e.to_string())?;
    ensure(prior.alphas.len() == 500, || {
        format!("vocabulary {}", prior.alphas.len())
    })?;
    let docs: Vec<(String, Vec<String>)> = streams
        .iter()
        .map(|s| (labels[&s.explanation_id].clone(), s.lemmas.clone()))
        .collect();
    for c in t.contexts.keys() {
        let reference = naive_ranking(&docs, c, alpha0);
        for k in [20, 500] {
            let got = top_keyness(&t, &prior, c, k).map_err(|e| e.to_string())?;
            ensure(got.len() == k, || format!("{c}: {} scores for k={k}", got.len()))?;
            for (i, (s, (w, z))) in got.iter().zip(&reference).enumerate() {
                ensure(close(s.z, *z, 1e-9 * z.abs().max(1.0)), || {
                    format!("{c} rank {i}: z {} vs {z}", s.z)
                })?;
                ensure(s.lemma == *w || close(s.z, *z, 1e-12), || {
                    format!("{c} rank {i}: {} vs {w}", s.lemma)
                })?;
            }
        }
    }
    Ok(())
}

fn syntax_golden() -> Check {
    let parses = load_conllu(&root().join("fixtures/golden/three_sentences.conllu")).map_err(|e| e.to_string())?;
    let lex = VerbLexicons::default();
    let cues = CausalCueConfig::default();
    let records = analyze_corpus(&parses, &lex, &cues);
    let got: Vec<String> = records.iter().map(|r| slot_string(&r.template)).collect();
    let want = [
        "AGENT MOTION_VERB DIRECTION PP_1 CAUSE",
        "AGENT STOP_VERB PP_1",
        "AGENT VERB CAUSE",
    ];
    ensure(got == want, || format!("templates {got:?}"))?;
    let fired: Vec<bool> = parses.iter().map(|p| detect_causal(p, &cues).0).collect();
    ensure(fired == [true, false, true], || format!("causal {fired:?}"))?;
    let covered = |i: usize| -> String {
        let (_, spans) = detect_causal(&parses[i], &cues);
        spans
            .iter()
            .map(|s| {
                parses[i].tokens[s.start - 1..s.end]
                    .iter()
                    .map(|t| t.surface.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    ensure(covered(0) == "because the light is green", || {
        format!("span {}", covered(0))
    })?;
    ensure(covered(2) == "to let the pedestrian cross", || {
        format!("span {}", covered(2))
    })
}

fn files(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files(&p, base, out);
        } else {
            out.insert(
                p.strip_prefix(base).unwrap().display().to_string(),
                std::fs::read(&p).unwrap(),
            );
        }
    }
}

fn pipeline_run(out: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    for cmd in ["classify", "keyness", "syntax", "evaluate", "report"] {
        let o = Command::new(env!("CARGO_BIN_EXE_drivetext"))
            .arg("--config")
            .arg(root().join("fixtures/sample/run.toml"))
            .arg("--output-dir")
            .arg(out)
            .args(["--permissive", cmd])
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let mut all = BTreeMap::new();
    files(out, out, &mut all);
    Ok(all)
}

fn pipeline_determinism() -> Check {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    ensure(first.len() > 200, || format!("only {} artifacts", first.len()))?;
    ensure(first.keys().eq(second.keys()), || "different artifact sets".into())?;
    for (k, v) in &first {
        ensure(second[k] == *v, || format!("{k} differs"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))
}

fn sampling_contract() -> Check {
    let mut labels = BTreeMap::new();
    for (label, n) in [("big", 100), ("mid", 9), ("one", 1)] {
        for i in 0..n {
            labels.insert(format!("{label}{i:03}"), label.to_string());
        }
    }
    let s = stratified_gold_sample(&labels, 0.10, 2, 42).map_err(|e| e.to_string())?;
    let per = |p: &str| s.iter().filter(|id| id.starts_with(p)).count();
    ensure((per("big"), per("mid"), per("one")) == (10, 1, 1), || {
        format!("strata {:?}", (per("big"), per("mid"), per("one")))
    })?;
    let again = stratified_gold_sample(&labels, 0.10, 2, 42).map_err(|e| e.to_string())?;
    ensure(s == again, || "not seed-stable".into())
}

#[test]
fn acceptance_criteria() {
    let checks: [Criterion; 9] = [
        ("vote rule over all 27 ordered triples", vote_rule_exhaustive),
        ("consensus short-circuit: 200 items, 400 calls", consensus_short_circuit),
        ("agreement metric oracle", agreement_oracle),
        ("macro-F1 oracle", macro_f1_oracle),
        ("keyness closed form, antisymmetry, prior mass", keyness_closed_form),
        ("keyness equals naive reference ranking", keyness_brute_force),
        ("syntax golden templates and causal detection", syntax_golden),
        ("pipeline determinism under 30s", pipeline_determinism),
        ("stratified sampling contract", sampling_contract),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(()) => println!("PASS {} {name}", i + 1),
            Err(e) => {
                println!("FAIL {} {name}: {e}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

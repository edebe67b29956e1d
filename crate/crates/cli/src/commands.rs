//! Pipeline commands. Each returns an [`Outcome`]; artifacts go through
//! [`ArtifactWriter`] so the manifest always reflects the files on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use drivetext_core::agreement::{self, by_annotator, evaluate_model, stratified_gold_sample, LabeledPair};
use drivetext_core::corpus::{
    corpus_stats, default_taxonomy, label_map, load_annotations, load_conllu, load_explanations, load_taxonomy,
    CorpusFormat, Explanation, Taxonomy,
};
use drivetext_core::gateway::{Gateway, ResponseCache};
use drivetext_core::keyness::{self, compute_prior, count_lemmas, default_stopwords, keyness_report, load_stopwords};
use drivetext_core::race::{
    classify_corpus, refine_loop, ClassificationOutcome, DevEvalReport, DevMode, Ensemble, EnsembleMember,
    PromptTemplate, RefineAction, RefineOutcome,
};
use drivetext_core::syntax::{
    analyze_corpus, group_families, group_templates, hierarchy, reuse_analysis, slot_string, CausalCueConfig,
    VerbLexicons,
};

use crate::artifacts::{verify, ArtifactWriter, Manifest};
use crate::config::{DevModeConfig, LabelSource, RunConfig};

pub const CLASSIFICATIONS: &str = "classifications.jsonl";

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// Items that could not be processed (failed classifications, unlabeled parses, ...).
    pub flagged: usize,
    pub summary: String,
}

fn taxonomy(cfg: &RunConfig) -> Result<Taxonomy> {
    match &cfg.taxonomy_path {
        Some(p) => load_taxonomy(p).with_context(|| format!("loading taxonomy {}", p.display())),
        None => Ok(default_taxonomy()),
    }
}

fn corpus(cfg: &RunConfig) -> Result<Vec<Explanation>> {
    let p = cfg.input(&cfg.corpus_path, "corpus_path", "--corpus")?;
    load_explanations(p, CorpusFormat::from_path(p)).with_context(|| format!("loading corpus {}", p.display()))
}

fn template(cfg: &RunConfig) -> Result<PromptTemplate> {
    match &cfg.template_path {
        Some(p) => PromptTemplate::load(p).with_context(|| format!("loading template {}", p.display())),
        None => Ok(PromptTemplate::default_template()),
    }
}

fn ensemble(cfg: &RunConfig) -> Result<Ensemble> {
    let e = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| anyhow!("no [ensemble] section in the config; m1, m2 and m3 must be configured"))?;
    let cache = match &cfg.cache_dir {
        Some(dir) => Some(Arc::new(ResponseCache::open(dir)?)),
        None => None,
    };
    let member = |role: &str, m: &crate::config::MemberConfig| -> Result<EnsembleMember> {
        let spec = m.backend_spec()?;
        let mut gw = Gateway::from_spec(&spec).with_context(|| format!("backend for {role}"))?;
        if let Some(c) = &cache {
            gw = gw.with_cache(c.clone());
        }
        Ok(EnsembleMember::new(role, m.settings(), Arc::new(gw)))
    };
    Ok(Ensemble {
        m1: member("m1", &e.m1)?,
        m2: member("m2", &e.m2)?,
        m3: member("m3", &e.m3)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationLine {
    pub id: String,
    pub label: String,
    pub confidence: f64,
    pub tiebreak_used: bool,
    pub votes: BTreeMap<String, usize>,
    pub trace_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureLine {
    pub id: String,
    pub reason: String,
    pub trace_file: String,
}

pub fn read_classifications(path: &Path) -> Result<Vec<ClassificationLine>> {
    let text = std::fs::read_to_string(path).with_context(|| {
        format!(
            "reading {} (run `classify` first or set label_source = \"corpus\")",
            path.display()
        )
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

/// id -> context label from the configured source.
pub fn context_labels(cfg: &RunConfig) -> Result<BTreeMap<String, String>> {
    match cfg.label_source {
        LabelSource::Corpus => Ok(label_map(&corpus(cfg)?)),
        LabelSource::Classified => Ok(read_classifications(&cfg.output_dir.join(CLASSIFICATIONS))?
            .into_iter()
            .map(|c| (c.id, c.label))
            .collect()),
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow!("csv: {e}"))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn histogram_string(h: &BTreeMap<String, usize>) -> String {
    h.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn ingest(cfg: &RunConfig) -> Result<Outcome> {
    let explanations = corpus(cfg)?;
    let stats = corpus_stats(&explanations);
    let tax = taxonomy(cfg)?;
    let labels = label_map(&explanations);
    let unknown: BTreeSet<&str> = labels
        .values()
        .filter(|l| !tax.contains(l))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        bail!("corpus labels not in the taxonomy: {unknown:?}");
    }
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels.values() {
        *dist.entry(l).or_default() += 1;
    }
    let mut w = ArtifactWriter::new(&cfg.output_dir, "ingest")?;
    w.write_json(
        "ingest_summary",
        "ingest_summary.json",
        &serde_json::json!({
            "stats": stats,
            "labelled": labels.len(),
            "taxonomy_version": tax.version,
            "taxonomy_size": tax.len(),
            "label_counts": dist,
        }),
    )?;
    w.finish()?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| x.to_string());
    Ok(Outcome {
        flagged: 0,
        summary: format!(
            "count={} mean_words={} median_words={} labelled={}",
            stats.count,
            fmt(stats.mean_words),
            fmt(stats.median_words),
            labels.len()
        ),
    })
}

pub fn classify(cfg: &RunConfig) -> Result<Outcome> {
    let explanations = corpus(cfg)?;
    let tax = taxonomy(cfg)?;
    let tpl = template(cfg)?;
    if !tpl.accepted {
        eprintln!(
            "warning: template version {} has not been accepted by `refine`; results use an unvalidated prompt",
            tpl.version
        );
    }
    let ens = ensemble(cfg)?;
    let outcomes = classify_corpus(&explanations, &tpl, &tax, &ens, cfg.parallelism)?;

    let traces_dir = cfg.output_dir.join("traces");
    if traces_dir.exists() {
        std::fs::remove_dir_all(&traces_dir).with_context(|| format!("clearing {}", traces_dir.display()))?;
    }
    let mut w = ArtifactWriter::new(&cfg.output_dir, "classify")?;
    let mut labeled = Vec::new();
    let mut failed = Vec::new();
    let mut dist: BTreeMap<String, usize> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        let trace_file = format!("traces/{:05}_{}.json", i + 1, safe_name(o.explanation_id()));
        w.write_json(&format!("trace:{}", o.explanation_id()), &trace_file, o)?;
        match o {
            ClassificationOutcome::Labeled(r) => {
                *dist.entry(r.label.clone()).or_default() += 1;
                labeled.push(ClassificationLine {
                    id: r.explanation_id.clone(),
                    label: r.label.clone(),
                    confidence: r.confidence,
                    tiebreak_used: r.tiebreak_used,
                    votes: r.votes.clone(),
                    trace_file,
                });
            }
            ClassificationOutcome::Failed(f) => failed.push(FailureLine {
                id: f.explanation_id.clone(),
                reason: f.reason.clone(),
                trace_file,
            }),
        }
    }
    let tiebreaks = labeled.iter().filter(|l| l.tiebreak_used).count();
    w.write("classifications", CLASSIFICATIONS, &jsonl(&labeled))?;
    w.write(
        "classification_failures",
        "classification_failures.jsonl",
        &jsonl(&failed),
    )?;

    let mut order: Vec<(usize, &str)> = tax.labels().enumerate().collect();
    order.sort_by_key(|(i, l)| (std::cmp::Reverse(dist.get(*l).copied().unwrap_or(0)), *i));
    let rows = order
        .iter()
        .map(|(_, l)| vec![l.to_string(), dist.get(*l).copied().unwrap_or(0).to_string()]);
    w.write(
        "distribution",
        "label_distribution.csv",
        &csv_bytes(&["label", "count"], rows)?,
    )?;
    w.figure("distribution", "distribution");
    let calls: BTreeMap<&str, usize> = ens
        .members()
        .iter()
        .map(|m| (m.role.as_str(), m.gateway.backend_calls()))
        .collect();
    w.write_json(
        "classify_summary",
        "classify_summary.json",
        &serde_json::json!({
            "template_version": tpl.version,
            "template_accepted": tpl.accepted,
            "total": outcomes.len(),
            "labeled": labeled.len(),
            "failed": failed.len(),
            "tiebreak_used": tiebreaks,
        }),
    )?;
    w.finish()?;
    Ok(Outcome {
        flagged: failed.len(),
        summary: format!(
            "classified={} failed={} tiebreak_used={} backend_calls={:?}",
            labeled.len(),
            failed.len(),
            tiebreaks,
            calls
        ),
    })
}

fn print_dev_report(r: &DevEvalReport, template_path: &Path, tau: f64) {
    eprintln!(
        "template v{}: accuracy {:.3} ({}/{}), below tau_accept {tau}",
        r.template_version, r.accuracy, r.correct, r.total
    );
    for g in &r.error_groups {
        eprintln!(
            "  gold `{}` -> predicted `{}`: {}",
            g.gold,
            g.predicted.as_deref().unwrap_or("<no label>"),
            g.explanation_ids.join(", ")
        );
    }
    eprintln!(
        "edit {} and press Enter to re-evaluate, or type `abort`",
        template_path.display()
    );
}

pub fn refine(cfg: &RunConfig, interactive: bool, input: &mut dyn BufRead) -> Result<Outcome> {
    let tax = taxonomy(cfg)?;
    let dev_path = cfg.input(&cfg.dev_path, "dev_path", "--dev")?;
    let dev: Vec<(Explanation, String)> = load_explanations(dev_path, CorpusFormat::from_path(dev_path))?
        .into_iter()
        .map(|e| {
            let gold = e
                .context_label
                .clone()
                .ok_or_else(|| anyhow!("dev item `{}` has no gold label", e.id))?;
            if !tax.contains(&gold) {
                bail!("dev item `{}`: gold label `{gold}` is not in the taxonomy", e.id);
            }
            Ok((e, gold))
        })
        .collect::<Result<_>>()?;
    let report_dir = cfg.output_dir.join("refine");
    let template_path: PathBuf = match &cfg.template_path {
        Some(p) => p.clone(),
        None => {
            let p = report_dir.join("template.toml");
            if !p.exists() {
                crate::artifacts::write_atomic(&p, PromptTemplate::default_template().to_toml().as_bytes())?;
                eprintln!(
                    "no template_path configured; editing a copy of the bundled template at {}",
                    p.display()
                );
            }
            p
        }
    };
    let ens = ensemble(cfg)?;
    let mode = match cfg.refine.dev_mode {
        DevModeConfig::Single => DevMode::Single(ens.m3.clone()),
        DevModeConfig::Ensemble => DevMode::Ensemble(ens),
    };
    let tau = cfg.refine.tau_accept;
    let outcome = refine_loop(&template_path, &dev, &tax, &mode, tau, &report_dir, |r| {
        print_dev_report(r, &template_path, tau);
        if !interactive {
            return RefineAction::Abort;
        }
        let _ = std::io::stderr().flush();
        let mut line = String::new();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => RefineAction::Abort,
            Ok(_) if line.trim().eq_ignore_ascii_case("abort") => RefineAction::Abort,
            Ok(_) => RefineAction::Reload,
        }
    })?;
    let iterations = match &outcome {
        RefineOutcome::Accepted { iterations, .. } | RefineOutcome::Aborted { iterations } => *iterations,
    };
    let mut w = ArtifactWriter::new(&cfg.output_dir, "refine")?;
    for j in 0..iterations {
        let rel = format!("refine/iteration_{j}.json");
        let bytes = std::fs::read(cfg.output_dir.join(&rel))?;
        w.write(&format!("refine_iteration:{j}"), &rel, &bytes)?;
    }
    let result = match outcome {
        RefineOutcome::Accepted { template, iterations } => {
            w.write(
                "accepted_template",
                "refine/accepted_template.toml",
                template.to_toml().as_bytes(),
            )?;
            w.finish()?;
            Ok(Outcome {
                flagged: 0,
                summary: format!(
                    "accepted template version {} after {iterations} iteration(s); written to refine/accepted_template.toml",
                    template.version
                ),
            })
        }
        RefineOutcome::Aborted { iterations } => {
            w.finish()?;
            Err(anyhow!(
                "refinement aborted after {iterations} iteration(s) without an accepted template"
            ))
        }
    };
    result
}

#[derive(Serialize)]
struct GoldSample<'a> {
    fraction: f64,
    min_n: usize,
    seed: u64,
    size: usize,
    ids: &'a BTreeSet<String>,
}

pub fn evaluate(cfg: &RunConfig) -> Result<Outcome> {
    let tax = taxonomy(cfg)?;
    let ann_path = cfg.input(&cfg.annotations_path, "annotations_path", "--annotations")?;
    let records = load_annotations(ann_path, &tax).with_context(|| format!("loading {}", ann_path.display()))?;
    let raters = by_annotator(&records);
    let get = |name: &str| {
        raters
            .get(name)
            .ok_or_else(|| anyhow!("annotations have no records for annotator `{name}`"))
    };
    let (h1, h2, consensus) = (get("H1")?, get("H2")?, get("CONSENSUS")?);
    let model_labels: BTreeMap<String, String> = match raters.get("MODEL") {
        Some(m) => m.clone(),
        None => read_classifications(&cfg.output_dir.join(CLASSIFICATIONS))?
            .into_iter()
            .map(|c| (c.id, c.label))
            .collect(),
    };
    let unlabeled: Vec<String> = consensus
        .keys()
        .filter(|id| !model_labels.contains_key(*id))
        .cloned()
        .collect();
    if !unlabeled.is_empty() {
        eprintln!(
            "warning: {} gold item(s) have no model label and are excluded: {}",
            unlabeled.len(),
            unlabeled.join(", ")
        );
    }
    let keep = |m: &BTreeMap<String, String>| -> BTreeMap<String, String> {
        m.iter()
            .filter(|(id, _)| model_labels.contains_key(*id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    };
    let (h1, h2, consensus) = (&keep(h1), &keep(h2), &keep(consensus));
    let mode = cfg.evaluation.macro_average;
    let reports = evaluate_model(&model_labels, h1, h2, consensus, &tax, mode)?;
    let rounded: Vec<_> = reports.iter().map(|r| r.rounded()).collect();

    let mut w = ArtifactWriter::new(&cfg.output_dir, "evaluate")?;
    let rows = rounded.iter().map(|r| {
        vec![
            r.compared_with.clone(),
            r.n.to_string(),
            format!("{:.2}", r.accuracy),
            format!("{:.2}", r.macro_f1),
            format!("{:.2}", r.cohen_kappa),
            r.fleiss_kappa.map_or(String::new(), |f| format!("{f:.2}")),
            r.level.as_str().to_string(),
        ]
    });
    w.write(
        "agreement_csv",
        "agreement_report.csv",
        &csv_bytes(
            &[
                "compared_with",
                "n",
                "accuracy_pct",
                "macro_f1",
                "cohen_kappa",
                "fleiss_kappa",
                "level",
            ],
            rows,
        )?,
    )?;
    w.write_json(
        "agreement_json",
        "agreement_report.json",
        &serde_json::json!({
            "macro_average": mode,
            "gold_items": consensus.len(),
            "excluded_unlabeled": unlabeled,
            "rows": rounded,
            "unrounded": reports,
        }),
    )?;
    let pairs: Vec<LabeledPair> = consensus
        .iter()
        .map(|(id, g)| LabeledPair::new(id.clone(), g.clone(), model_labels[id].clone()))
        .collect();
    let cm = agreement::confusion(&pairs, &tax)?;
    w.write("confusion_counts", "confusion_counts.csv", cm.to_csv(false).as_bytes())?;
    w.write("confusion", "confusion_percent.csv", cm.to_csv(true).as_bytes())?;
    w.figure("confusion", "confusion");

    let s = &cfg.sampling;
    let sample = stratified_gold_sample(&model_labels, s.fraction, s.min_n, s.seed)?;
    w.write_json(
        "gold_sample",
        "gold_sample.json",
        &GoldSample {
            fraction: s.fraction,
            min_n: s.min_n,
            seed: s.seed,
            size: sample.len(),
            ids: &sample,
        },
    )?;
    w.finish()?;
    let summary = rounded
        .iter()
        .map(|r| {
            format!(
                "{}: acc={:.2} f1={:.2} kappa={:.2} fleiss={:.2} {}",
                r.compared_with,
                r.accuracy,
                r.macro_f1,
                r.cohen_kappa,
                r.fleiss_kappa.unwrap_or(f64::NAN),
                r.level.as_str()
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        flagged: unlabeled.len(),
        summary,
    })
}

/// Parses with a context label, the label map, and the ids that were skipped.
type LabeledParses = (
    Vec<drivetext_core::ParsedExplanation>,
    BTreeMap<String, String>,
    Vec<String>,
);

fn labeled_parses(cfg: &RunConfig) -> Result<LabeledParses> {
    let p = cfg.input(&cfg.conllu_path, "conllu_path", "--conllu")?;
    let parses = load_conllu(p).with_context(|| format!("loading {}", p.display()))?;
    let labels = context_labels(cfg)?;
    let skipped: BTreeSet<String> = parses
        .iter()
        .filter(|p| !labels.contains_key(&p.explanation_id))
        .map(|p| p.explanation_id.clone())
        .collect();
    if !skipped.is_empty() {
        eprintln!(
            "warning: {} parsed explanation(s) have no context label and are skipped",
            skipped.len()
        );
    }
    let kept = parses
        .into_iter()
        .filter(|p| labels.contains_key(&p.explanation_id))
        .collect();
    Ok((kept, labels, skipped.into_iter().collect()))
}

pub fn keyness(cfg: &RunConfig) -> Result<Outcome> {
    let (parses, labels, skipped) = labeled_parses(cfg)?;
    let stopwords = match &cfg.keyness.stopword_path {
        Some(p) => load_stopwords(p)?,
        None => default_stopwords(),
    };
    let streams: Vec<_> = parses.iter().map(|p| keyness::normalize(p, &stopwords)).collect();
    let table = count_lemmas(&streams, &labels)?;
    let prior = compute_prior(&table.background, cfg.keyness.alpha0)?;
    let report = keyness_report(&table, &prior, cfg.keyness.top_k)?;
    let rows = report.iter().flat_map(|(_, scores)| {
        scores.iter().enumerate().map(|(i, s)| {
            vec![
                s.context.clone(),
                (i + 1).to_string(),
                s.surface.clone(),
                s.lemma.clone(),
                s.count_in_context.to_string(),
                format!("{:.6}", s.delta),
                format!("{:.6}", s.z),
            ]
        })
    });
    let mut w = ArtifactWriter::new(&cfg.output_dir, "keyness")?;
    w.write(
        "keyness",
        "keyness.csv",
        &csv_bytes(&["context", "rank", "surface", "lemma", "count", "delta", "z"], rows)?,
    )?;
    w.figure("keyness", "keyness");
    let totals: BTreeMap<&str, u64> = table.contexts.iter().map(|(c, cc)| (c.as_str(), cc.total)).collect();
    w.write_json(
        "keyness_meta",
        "keyness_meta.json",
        &serde_json::json!({
            "alpha0": cfg.keyness.alpha0,
            "top_k": cfg.keyness.top_k,
            "stopwords": stopwords.len(),
            "vocabulary": prior.alphas.len(),
            "background_tokens": table.background.total,
            "context_tokens": totals,
            "skipped_ids": skipped,
        }),
    )?;
    w.finish()?;
    Ok(Outcome {
        flagged: skipped.len(),
        summary: format!(
            "contexts={} vocabulary={} alpha0={} skipped={}",
            table.contexts.len(),
            prior.alphas.len(),
            cfg.keyness.alpha0,
            skipped.len()
        ),
    })
}

pub fn syntax(cfg: &RunConfig) -> Result<Outcome> {
    let (parses, labels, skipped) = labeled_parses(cfg)?;
    let lex = match &cfg.syntax.lexicon_path {
        Some(p) => VerbLexicons::load(p)?,
        None => VerbLexicons::default(),
    };
    let cues = match &cfg.syntax.cue_path {
        Some(p) => CausalCueConfig::load(p)?,
        None => CausalCueConfig::default(),
    };
    let records = analyze_corpus(&parses, &lex, &cues);
    let families = group_families(&records, &labels)?;
    let templates = group_templates(&records, &labels)?;
    let tree = hierarchy(&records, &labels)?;
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        *totals.entry(labels[&r.explanation_id].clone()).or_default() += 1;
    }
    let fam_hist: Vec<(String, BTreeMap<String, usize>)> = families
        .iter()
        .map(|f| (f.signature.to_string(), f.contexts.clone()))
        .collect();
    let tpl_hist: Vec<(String, BTreeMap<String, usize>)> =
        templates.iter().map(|t| (t.key(), t.contexts.clone())).collect();
    let min_share = cfg.syntax.min_share;
    let fam_reuse = reuse_analysis(&fam_hist, &totals, min_share)?;
    let tpl_reuse = reuse_analysis(&tpl_hist, &totals, min_share)?;

    let mut w = ArtifactWriter::new(&cfg.output_dir, "syntax")?;
    let feature_lines = records.iter().map(|r| {
        serde_json::json!({
            "id": r.explanation_id,
            "context": labels[&r.explanation_id],
            "sentences": r.sentences,
            "multi_sentence": r.sentences > 1,
            "features": r.features,
            "signature": r.signature.to_string(),
            "template": slot_string(&r.template),
        })
    });
    w.write("syntax_features", "syntax_features.jsonl", &jsonl(feature_lines))?;

    let fam_rows = families.iter().enumerate().map(|(i, f)| {
        let s = serde_json::to_value(f.signature).expect("signature serializes");
        let field = |k: &str| match &s[k] {
            serde_json::Value::String(v) => v.clone(),
            v => v.to_string(),
        };
        vec![
            (i + 1).to_string(),
            f.signature.to_string(),
            field("root_verb_type"),
            field("voice"),
            field("has_causal"),
            field("pp_bucket"),
            field("clause_config"),
            field("negation"),
            field("modal"),
            field("has_subject"),
            field("has_object"),
            field("has_directional"),
            f.frequency.to_string(),
            histogram_string(&f.contexts),
        ]
    });
    w.write(
        "families",
        "families.csv",
        &csv_bytes(
            &[
                "rank",
                "signature",
                "root_verb_type",
                "voice",
                "has_causal",
                "pp_bucket",
                "clause_config",
                "negation",
                "modal",
                "has_subject",
                "has_object",
                "has_directional",
                "frequency",
                "contexts",
            ],
            fam_rows,
        )?,
    )?;
    let tpl_rows = templates.iter().enumerate().map(|(i, t)| {
        vec![
            (i + 1).to_string(),
            t.key(),
            t.frequency.to_string(),
            histogram_string(&t.contexts),
        ]
    });
    w.write(
        "templates",
        "templates.csv",
        &csv_bytes(&["rank", "template", "frequency", "contexts"], tpl_rows)?,
    )?;
    let reuse_rows = fam_reuse
        .iter()
        .map(|r| ("family", r))
        .chain(tpl_reuse.iter().map(|r| ("template", r)))
        .map(|(level, r)| {
            vec![
                level.to_string(),
                r.structure.clone(),
                r.frequency.to_string(),
                r.breadth.to_string(),
                format!("{:.6}", r.normalized_entropy),
                serde_json::to_value(r.class)
                    .expect("class")
                    .as_str()
                    .unwrap_or("")
                    .to_string(),
                r.qualifying_contexts.join(";"),
            ]
        });
    w.write(
        "reuse",
        "reuse.csv",
        &csv_bytes(
            &[
                "level",
                "structure",
                "frequency",
                "breadth",
                "normalized_entropy",
                "class",
                "qualifying_contexts",
            ],
            reuse_rows,
        )?,
    )?;
    w.write_json("hierarchy", "syntax_hierarchy.json", &tree)?;
    w.figure("hierarchy", "hierarchy");
    let multi = records.iter().filter(|r| r.sentences > 1).count();
    w.write_json(
        "syntax_summary",
        "syntax_summary.json",
        &serde_json::json!({
            "explanations": records.len(),
            "multi_sentence": multi,
            "families": families.len(),
            "templates": templates.len(),
            "min_share": min_share,
            "skipped_ids": skipped,
        }),
    )?;
    w.finish()?;
    Ok(Outcome {
        flagged: skipped.len(),
        summary: format!(
            "explanations={} families={} templates={} multi_sentence={} skipped={}",
            records.len(),
            families.len(),
            templates.len(),
            multi,
            skipped.len()
        ),
    })
}

pub const FIGURES: [&str; 4] = ["distribution", "confusion", "keyness", "hierarchy"];

pub fn report(cfg: &RunConfig) -> Result<Outcome> {
    let out = &cfg.output_dir;
    let manifest = Manifest::load(out)?;
    if manifest.artifacts.is_empty() {
        bail!("no artifacts in {}; run the pipeline commands first", out.display());
    }
    let bad = verify(out, &manifest);
    if !bad.is_empty() {
        bail!("artifacts missing or modified since they were written: {bad:?}");
    }
    let embed = |key: &str| -> Result<serde_json::Value> {
        match manifest.artifacts.get(key) {
            Some(e) => Ok(serde_json::from_str(&std::fs::read_to_string(out.join(&e.path))?)?),
            None => Ok(serde_json::Value::Null),
        }
    };
    let missing: Vec<&str> = FIGURES
        .iter()
        .copied()
        .filter(|f| {
            !manifest
                .figures
                .get(*f)
                .is_some_and(|k| manifest.artifacts.contains_key(k))
        })
        .collect();
    let mut w = ArtifactWriter::new(out, "report")?;
    w.write_json(
        "report",
        "report.json",
        &serde_json::json!({
            "ingest": embed("ingest_summary")?,
            "classification": embed("classify_summary")?,
            "agreement": embed("agreement_json")?,
            "keyness": embed("keyness_meta")?,
            "syntax": embed("syntax_summary")?,
            "figures": manifest.figures,
            "missing_figures": missing,
        }),
    )?;
    let mut m = w.finish()?;
    m.complete = missing.is_empty();
    m.save(out)?;
    if !missing.is_empty() {
        eprintln!("warning: figure inputs missing: {missing:?}");
    }
    Ok(Outcome {
        flagged: missing.len(),
        summary: format!("artifacts={} figures_missing={}", m.artifacts.len(), missing.len()),
    })
}

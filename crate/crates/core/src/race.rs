//! Taxonomy-conditioned chain-of-thought classification with a self-consistent
//! model ensemble.
//!
//! Two base models answer first. When their projected labels agree the answer is
//! final; otherwise a third (tiebreak) model is queried, a 2-of-3 majority wins,
//! and a three-way split falls back to the tiebreak model's label.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Explanation, Taxonomy};
use crate::gateway::{ChatRequest, Gateway, GatewayError};

/// Default template shipped with the crate.
pub const DEFAULT_TEMPLATE: &str = include_str!("../data/prompt_template.toml");

/// Marker that introduces the explanation under classification in the user prompt.
pub const EXPLANATION_MARKER: &str = "Explanation:";
pub const LABEL_MARKER: &str = "LABEL:";

/// Default dev-set acceptance threshold for the refinement loop.
pub const DEFAULT_TAU_ACCEPT: f64 = 0.85;

/// Number of trailing words considered by the overlap fallback.
const TAIL_WORDS: usize = 60;

#[derive(Debug, Error)]
pub enum RaceError {
    #[error("template: {0}")]
    Template(String),
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("development set is empty")]
    EmptyDevSet,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RaceError {
    RaceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub label: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: u32,
    #[serde(default)]
    pub accepted: bool,
    pub system_text: String,
    pub taxonomy_rendering: String,
    pub output_instruction: String,
    #[serde(default)]
    pub fewshot: Vec<FewShotExample>,
}

enum Piece {
    Lit(String),
    Index,
    Label,
    Definition,
}

fn compile_rendering(template: &str) -> Result<Vec<Piece>, RaceError> {
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                lit.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) => name.push(ch),
                        None => return Err(RaceError::Template(format!("unterminated placeholder `{{{name}`"))),
                    }
                }
                if !lit.is_empty() {
                    pieces.push(Piece::Lit(std::mem::take(&mut lit)));
                }
                pieces.push(match name.trim() {
                    "index" => Piece::Index,
                    "label" => Piece::Label,
                    "definition" => Piece::Definition,
                    other => return Err(RaceError::Template(format!("unknown placeholder `{{{other}}}`"))),
                });
            }
            '}' => return Err(RaceError::Template("unmatched `}`".into())),
            _ => lit.push(c),
        }
    }
    if !lit.is_empty() {
        pieces.push(Piece::Lit(lit));
    }
    Ok(pieces)
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, RaceError> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| RaceError::Template(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, RaceError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    pub fn default_template() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("template serializes")
    }

    pub fn validate(&self) -> Result<(), RaceError> {
        if !self.output_instruction.contains(LABEL_MARKER) {
            return Err(RaceError::Template(format!(
                "output_instruction must ask for a final `{LABEL_MARKER} <label>` line"
            )));
        }
        let pieces = compile_rendering(&self.taxonomy_rendering)?;
        if !pieces.iter().any(|p| matches!(p, Piece::Label)) {
            return Err(RaceError::Template("taxonomy_rendering must include {label}".into()));
        }
        Ok(())
    }

    /// Render the taxonomy block: one line per entry, in taxonomy order.
    pub fn render_taxonomy(&self, taxonomy: &Taxonomy) -> Result<String, RaceError> {
        let pieces = compile_rendering(&self.taxonomy_rendering)?;
        let mut out = String::new();
        for (i, entry) in taxonomy.entries().iter().enumerate() {
            for p in &pieces {
                match p {
                    Piece::Lit(s) => out.push_str(s),
                    Piece::Index => out.push_str(&(i + 1).to_string()),
                    Piece::Label => out.push_str(&entry.label),
                    Piece::Definition => out.push_str(&entry.definition),
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Per-model request settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    512
}

impl ModelSettings {
    pub fn new(model_id: impl Into<String>) -> Self {
        ModelSettings {
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
        }
    }
}

/// Instantiate the classification prompt for one explanation.
///
/// User text layout: taxonomy block, worked examples, the explanation, then the
/// output instruction.
pub fn build_prompt(
    template: &PromptTemplate,
    taxonomy: &Taxonomy,
    explanation: &Explanation,
    model: &ModelSettings,
) -> Result<ChatRequest, RaceError> {
    let mut user = String::from("Taxonomy of driving contexts:\n");
    user.push_str(&template.render_taxonomy(taxonomy)?);
    if !template.fewshot.is_empty() {
        user.push_str("\nWorked examples:\n");
        for ex in &template.fewshot {
            user.push_str(&format!(
                "\nExample: {}\nReasoning: {}\n{LABEL_MARKER} {}\n",
                ex.text.trim(),
                ex.rationale.trim(),
                ex.label
            ));
        }
    }
    user.push_str(&format!("\n{EXPLANATION_MARKER} {}\n\n", explanation.text.trim()));
    user.push_str(template.output_instruction.trim());
    Ok(ChatRequest {
        model_id: model.model_id.clone(),
        system_text: template.system_text.trim().to_string(),
        user_text: user,
        temperature: model.temperature,
        max_tokens: model.max_tokens,
    })
}

const REQUERY_NOTE: &str = "Your previous answer could not be matched to the taxonomy. \
Reply again and end with one line `LABEL: <category>` using a category name exactly as listed.";

fn requery_request(request: &ChatRequest) -> ChatRequest {
    let mut r = request.clone();
    r.user_text.push_str("\n\n");
    r.user_text.push_str(REQUERY_NOTE);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Exact,
    Normalized,
    Overlap,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    /// Ensemble role, e.g. `M1`.
    pub role: String,
    pub model_id: String,
    pub raw_text: String,
    pub extracted_label: Option<String>,
    pub projection_method: ProjectionMethod,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub label: Option<String>,
    pub method: ProjectionMethod,
}

const OVERLAP_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "because", "by", "for", "from", "has", "have", "in", "is", "it", "its",
    "of", "on", "or", "so", "that", "the", "this", "to", "was", "with",
];

fn normalize_phrase(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercased content words used by the overlap score.
pub fn overlap_words(s: &str) -> Vec<String> {
    normalize_phrase(s)
        .split(' ')
        .filter(|w| !w.is_empty() && !OVERLAP_STOPWORDS.contains(w))
        .map(str::to_string)
        .collect()
}

fn after_last_marker(text: &str, case_insensitive: bool) -> Option<&str> {
    let pos = if case_insensitive {
        // ASCII lowercasing keeps byte offsets aligned.
        text.to_ascii_lowercase().rfind(&LABEL_MARKER.to_ascii_lowercase())
    } else {
        text.rfind(LABEL_MARKER)
    }?;
    let rest = &text[pos + LABEL_MARKER.len()..];
    Some(rest.split('\n').next().unwrap_or(rest))
}

/// Map a free-text reasoning trace onto a taxonomy label.
///
/// Tiers: exact text after the last `LABEL:`; the same after lowercasing and
/// stripping punctuation; otherwise the entry whose label + definition shares the
/// most distinct content words with the trace tail (first entry wins ties).
pub fn project_label(raw_text: &str, taxonomy: &Taxonomy) -> Projection {
    let failed = Projection {
        label: None,
        method: ProjectionMethod::Failed,
    };
    if raw_text.trim().is_empty() {
        return failed;
    }
    if let Some(candidate) = after_last_marker(raw_text, false) {
        let candidate = candidate.trim();
        if taxonomy.contains(candidate) {
            return Projection {
                label: Some(candidate.to_string()),
                method: ProjectionMethod::Exact,
            };
        }
    }
    if let Some(candidate) = after_last_marker(raw_text, true) {
        let norm = normalize_phrase(candidate);
        if let Some(label) = taxonomy.labels().find(|l| normalize_phrase(l) == norm) {
            return Projection {
                label: Some(label.to_string()),
                method: ProjectionMethod::Normalized,
            };
        }
    }
    let words = overlap_words(raw_text);
    let tail: HashSet<&str> = words[words.len().saturating_sub(TAIL_WORDS)..]
        .iter()
        .map(String::as_str)
        .collect();
    let mut best: Option<(&str, usize)> = None;
    for entry in taxonomy.entries() {
        let entry_words: HashSet<String> = overlap_words(&format!("{} {}", entry.label, entry.definition))
            .into_iter()
            .collect();
        let score = entry_words.iter().filter(|w| tail.contains(w.as_str())).count();
        if score > 0 && best.is_none_or(|(_, s)| score > s) {
            best = Some((&entry.label, score));
        }
    }
    match best {
        Some((label, _)) => Projection {
            label: Some(label.to_string()),
            method: ProjectionMethod::Overlap,
        },
        None => failed,
    }
}

/// One role of the ensemble: a named model behind a gateway.
#[derive(Clone)]
pub struct EnsembleMember {
    pub role: String,
    pub settings: ModelSettings,
    pub gateway: Arc<Gateway>,
}

impl EnsembleMember {
    pub fn new(role: impl Into<String>, settings: ModelSettings, gateway: Arc<Gateway>) -> Self {
        EnsembleMember {
            role: role.into(),
            settings,
            gateway,
        }
    }
}

/// Base pair plus tiebreak model.
#[derive(Clone)]
pub struct Ensemble {
    pub m1: EnsembleMember,
    pub m2: EnsembleMember,
    pub m3: EnsembleMember,
}

impl Ensemble {
    pub fn members(&self) -> [&EnsembleMember; 3] {
        [&self.m1, &self.m2, &self.m3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub explanation_id: String,
    pub label: String,
    pub traces: Vec<ReasoningTrace>,
    pub votes: BTreeMap<String, usize>,
    pub confidence: f64,
    pub tiebreak_used: bool,
    /// Unprojectable first attempts that were replaced by a re-query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discarded_traces: Vec<ReasoningTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedClassification {
    pub explanation_id: String,
    pub reason: String,
    pub traces: Vec<ReasoningTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ClassificationOutcome {
    Labeled(ClassificationResult),
    Failed(FailedClassification),
}

impl ClassificationOutcome {
    pub fn explanation_id(&self) -> &str {
        match self {
            ClassificationOutcome::Labeled(r) => &r.explanation_id,
            ClassificationOutcome::Failed(f) => &f.explanation_id,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            ClassificationOutcome::Labeled(r) => Some(&r.label),
            ClassificationOutcome::Failed(_) => None,
        }
    }

    pub fn traces(&self) -> &[ReasoningTrace] {
        match self {
            ClassificationOutcome::Labeled(r) => &r.traces,
            ClassificationOutcome::Failed(f) => &f.traces,
        }
    }
}

/// Decision rule over projected labels: consensus of the base pair, else a 2-of-3
/// majority, else the tiebreak label. `l3` is `None` exactly when the base pair agrees.
pub fn resolve_votes<'a>(l1: &'a str, l2: &'a str, l3: Option<&'a str>) -> &'a str {
    match l3 {
        _ if l1 == l2 => l1,
        None => l1,
        Some(l3) if l3 == l1 || l3 == l2 => l3,
        Some(l3) => l3,
    }
}

/// Confidence as the winning label's vote share.
pub fn aggregate_confidence(label: &str, votes: &BTreeMap<String, usize>, trace_count: usize) -> f64 {
    debug_assert_eq!(votes.values().sum::<usize>(), trace_count);
    votes.get(label).copied().unwrap_or(0) as f64 / trace_count as f64
}

struct Queried {
    trace: ReasoningTrace,
    requeries: Vec<ReasoningTrace>,
}

fn query_member(
    member: &EnsembleMember,
    request: &ChatRequest,
    taxonomy: &Taxonomy,
) -> Result<Queried, (String, Vec<ReasoningTrace>)> {
    let mut traces = Vec::new();
    for req in &[request.clone(), requery_request(request)] {
        let resp = member.gateway.complete(req).map_err(|e| {
            (
                format!("{} ({}): {e}", member.role, member.settings.model_id),
                traces.clone(),
            )
        })?;
        let projection = project_label(&resp.text, taxonomy);
        let trace = ReasoningTrace {
            role: member.role.clone(),
            model_id: member.settings.model_id.clone(),
            raw_text: resp.text,
            extracted_label: projection.label,
            projection_method: projection.method,
        };
        if trace.extracted_label.is_some() {
            return Ok(Queried {
                trace,
                requeries: traces,
            });
        }
        traces.push(trace);
    }
    Err((
        format!(
            "{} ({}): trace could not be projected onto the taxonomy after one re-query",
            member.role, member.settings.model_id
        ),
        traces,
    ))
}

/// Classify one explanation with the conditional-tiebreak ensemble.
pub fn classify_sc(
    explanation: &Explanation,
    template: &PromptTemplate,
    taxonomy: &Taxonomy,
    ensemble: &Ensemble,
) -> Result<ClassificationOutcome, RaceError> {
    let request_for = |m: &EnsembleMember| build_prompt(template, taxonomy, explanation, &m.settings);
    let r1 = request_for(&ensemble.m1)?;
    let r2 = request_for(&ensemble.m2)?;
    let fail = |reason: String, traces: Vec<ReasoningTrace>| {
        ClassificationOutcome::Failed(FailedClassification {
            explanation_id: explanation.id.clone(),
            reason,
            traces,
        })
    };

    let (q1, q2) = rayon::join(
        || query_member(&ensemble.m1, &r1, taxonomy),
        || query_member(&ensemble.m2, &r2, taxonomy),
    );
    let mut audit = Vec::new();
    let (q1, q2) = match (q1, q2) {
        (Ok(a), Ok(b)) => (a, b),
        (Err((reason, mut t)), other) | (other @ Ok(_), Err((reason, mut t))) => {
            if let Ok(q) = other {
                t.extend(q.requeries);
                t.push(q.trace);
            }
            return Ok(fail(reason, t));
        }
    };
    audit.extend(q1.requeries);
    audit.extend(q2.requeries);
    let l1 = q1.trace.extracted_label.clone().expect("projected");
    let l2 = q2.trace.extracted_label.clone().expect("projected");
    let mut traces = vec![q1.trace, q2.trace];

    let l3 = if l1 == l2 {
        None
    } else {
        let r3 = request_for(&ensemble.m3)?;
        match query_member(&ensemble.m3, &r3, taxonomy) {
            Ok(q3) => {
                audit.extend(q3.requeries);
                let l = q3.trace.extracted_label.clone().expect("projected");
                traces.push(q3.trace);
                Some(l)
            }
            Err((reason, t)) => {
                traces.extend(t);
                return Ok(fail(reason, traces));
            }
        }
    };
    let label = resolve_votes(&l1, &l2, l3.as_deref()).to_string();
    let mut votes = BTreeMap::new();
    for t in &traces {
        *votes.entry(t.extracted_label.clone().expect("projected")).or_insert(0) += 1;
    }
    let confidence = aggregate_confidence(&label, &votes, traces.len());
    let tiebreak_used = traces.len() == 3;
    Ok(ClassificationOutcome::Labeled(ClassificationResult {
        explanation_id: explanation.id.clone(),
        label,
        traces,
        votes,
        confidence,
        tiebreak_used,
        discarded_traces: audit,
    }))
}

/// Classify a corpus with at most `parallelism` explanations in flight; output
/// follows input order.
pub fn classify_corpus(
    explanations: &[Explanation],
    template: &PromptTemplate,
    taxonomy: &Taxonomy,
    ensemble: &Ensemble,
    parallelism: usize,
) -> Result<Vec<ClassificationOutcome>, RaceError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| RaceError::Template(format!("thread pool: {e}")))?;
    pool.install(|| {
        explanations
            .par_iter()
            .map(|e| classify_sc(e, template, taxonomy, ensemble))
            .collect()
    })
}

/// How predictions are produced during prompt development.
#[derive(Clone)]
pub enum DevMode {
    /// One model answers each item (re-queried once on projection failure).
    Single(EnsembleMember),
    Ensemble(Ensemble),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevPrediction {
    pub explanation_id: String,
    pub predicted: Option<String>,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorGroup {
    pub gold: String,
    /// `None` when no label could be projected.
    pub predicted: Option<String>,
    pub explanation_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevEvalReport {
    pub template_version: u32,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<DevPrediction>,
    pub error_groups: Vec<ErrorGroup>,
}

/// Score a template on a small labelled development set.
pub fn run_dev_eval(
    template: &PromptTemplate,
    dev: &[(Explanation, String)],
    taxonomy: &Taxonomy,
    mode: &DevMode,
) -> Result<DevEvalReport, RaceError> {
    if dev.is_empty() {
        return Err(RaceError::EmptyDevSet);
    }
    let mut predictions = Vec::with_capacity(dev.len());
    for (explanation, gold) in dev {
        let predicted = match mode {
            DevMode::Single(member) => {
                let req = build_prompt(template, taxonomy, explanation, &member.settings)?;
                match query_member(member, &req, taxonomy) {
                    Ok(q) => q.trace.extracted_label,
                    Err(_) => None,
                }
            }
            DevMode::Ensemble(ensemble) => classify_sc(explanation, template, taxonomy, ensemble)?
                .label()
                .map(str::to_string),
        };
        predictions.push(DevPrediction {
            explanation_id: explanation.id.clone(),
            predicted,
            gold: gold.clone(),
        });
    }
    let correct = predictions
        .iter()
        .filter(|p| p.predicted.as_deref() == Some(p.gold.as_str()))
        .count();
    let mut groups: BTreeMap<(String, Option<String>), Vec<String>> = BTreeMap::new();
    for p in predictions
        .iter()
        .filter(|p| p.predicted.as_deref() != Some(p.gold.as_str()))
    {
        groups
            .entry((p.gold.clone(), p.predicted.clone()))
            .or_default()
            .push(p.explanation_id.clone());
    }
    Ok(DevEvalReport {
        template_version: template.version,
        accuracy: correct as f64 / predictions.len() as f64,
        correct,
        total: predictions.len(),
        predictions,
        error_groups: groups
            .into_iter()
            .map(|((gold, predicted), explanation_ids)| ErrorGroup {
                gold,
                predicted,
                explanation_ids,
            })
            .collect(),
    })
}

/// What the operator wants after a below-threshold iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineAction {
    /// The template file was edited; reload it and evaluate again.
    Reload,
    Abort,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineOutcome {
    Accepted { template: PromptTemplate, iterations: u32 },
    Aborted { iterations: u32 },
}

/// Iterate evaluate → (human edit) → re-evaluate until the dev accuracy reaches
/// `tau_accept` or the operator aborts.
///
/// Every iteration's report is written to `report_dir/iteration_<j>.json`; an
/// accepted template is written to `report_dir/accepted_template.toml`.
pub fn refine_loop(
    template_path: &Path,
    dev: &[(Explanation, String)],
    taxonomy: &Taxonomy,
    mode: &DevMode,
    tau_accept: f64,
    report_dir: &Path,
    mut on_reject: impl FnMut(&DevEvalReport) -> RefineAction,
) -> Result<RefineOutcome, RaceError> {
    fs::create_dir_all(report_dir).map_err(|e| io_err(report_dir, e))?;
    let base_version = PromptTemplate::load(template_path)?.version;
    let mut j = 0u32;
    loop {
        let mut template = PromptTemplate::load(template_path)?;
        template.version = base_version + j;
        let report = run_dev_eval(&template, dev, taxonomy, mode)?;
        let report_path = report_dir.join(format!("iteration_{j}.json"));
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&report_path, json).map_err(|e| io_err(&report_path, e))?;
        if report.accuracy >= tau_accept {
            template.accepted = true;
            let accepted_path = report_dir.join("accepted_template.toml");
            fs::write(&accepted_path, template.to_toml()).map_err(|e| io_err(&accepted_path, e))?;
            return Ok(RefineOutcome::Accepted {
                template,
                iterations: j + 1,
            });
        }
        match on_reject(&report) {
            RefineAction::Reload => j += 1,
            RefineAction::Abort => return Ok(RefineOutcome::Aborted { iterations: j + 1 }),
        }
    }
}

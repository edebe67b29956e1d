//! Syntactic building blocks: dependency features, causal and purpose cues,
//! signatures, grammar families, slot templates and cross-context reuse.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParsedExplanation;

pub const DEFAULT_LEXICONS: &str = include_str!("../data/lexicons.cfg");
pub const DEFAULT_CAUSAL_CUES: &str = include_str!("../data/causal_cues.cfg");

#[derive(Debug, Error, PartialEq)]
pub enum SyntaxError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("explanations without a context label: {0:?}")]
    Unlabeled(Vec<String>),
    #[error("min_share must be in (0, 1], got {0}")]
    BadMinShare(f64),
}

/// Parse the section-headed list format: `[name]` headers, one entry per line.
pub fn parse_sections(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, Vec<String>>, SyntaxError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !allowed.contains(&name) {
                return Err(SyntaxError::Config {
                    line: i + 1,
                    message: format!("unknown section [{name}]"),
                });
            }
            out.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let Some(sec) = &current else {
            return Err(SyntaxError::Config {
                line: i + 1,
                message: "entry before any [section] header".into(),
            });
        };
        let entry = line.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        out.get_mut(sec).expect("section exists").push(entry);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, SyntaxError> {
    std::fs::read_to_string(path).map_err(|e| SyntaxError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn set(sections: &BTreeMap<String, Vec<String>>, name: &str) -> BTreeSet<String> {
    sections
        .get(name)
        .map(|v| v.iter().cloned().collect())
        .unwrap_or_default()
}

fn phrases(sections: &BTreeMap<String, Vec<String>>, name: &str) -> Vec<Vec<String>> {
    sections
        .get(name)
        .map(|v| v.iter().map(|p| p.split(' ').map(str::to_string).collect()).collect())
        .unwrap_or_default()
}

/// Universal Dependencies relation sets used by the feature extractor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSets {
    pub subject: BTreeSet<String>,
    pub object: BTreeSet<String>,
    pub passive: BTreeSet<String>,
    pub subordinate: BTreeSet<String>,
    pub case: BTreeSet<String>,
    pub oblique: BTreeSet<String>,
    pub direction: BTreeSet<String>,
    pub aux: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbLexicons {
    pub motion: BTreeSet<String>,
    pub stop_yield: BTreeSet<String>,
    pub state: BTreeSet<String>,
    pub directional: BTreeSet<String>,
    pub modal: BTreeSet<String>,
    pub negation: BTreeSet<String>,
    pub relations: RelationSets,
}

const LEXICON_SECTIONS: &[&str] = &[
    "motion",
    "stop_yield",
    "state",
    "directional",
    "modal",
    "negation",
    "rel.subject",
    "rel.object",
    "rel.passive",
    "rel.subordinate",
    "rel.case",
    "rel.oblique",
    "rel.direction",
    "rel.aux",
];

impl VerbLexicons {
    pub fn parse(text: &str) -> Result<Self, SyntaxError> {
        let s = parse_sections(text, LEXICON_SECTIONS)?;
        Ok(VerbLexicons {
            motion: set(&s, "motion"),
            stop_yield: set(&s, "stop_yield"),
            state: set(&s, "state"),
            directional: set(&s, "directional"),
            modal: set(&s, "modal"),
            negation: set(&s, "negation"),
            relations: RelationSets {
                subject: set(&s, "rel.subject"),
                object: set(&s, "rel.object"),
                passive: set(&s, "rel.passive"),
                subordinate: set(&s, "rel.subordinate"),
                case: set(&s, "rel.case"),
                oblique: set(&s, "rel.oblique"),
                direction: set(&s, "rel.direction"),
                aux: set(&s, "rel.aux"),
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, SyntaxError> {
        Self::parse(&read(path)?)
    }

    pub fn verb_type(&self, lemma: &str) -> RootVerbType {
        let l = lemma.to_lowercase();
        if self.motion.contains(&l) {
            RootVerbType::Motion
        } else if self.stop_yield.contains(&l) {
            RootVerbType::StopYield
        } else if self.state.contains(&l) {
            RootVerbType::State
        } else {
            RootVerbType::Other
        }
    }
}

impl Default for VerbLexicons {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICONS).expect("bundled lexicons parse")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalCueConfig {
    pub markers: BTreeSet<String>,
    pub multiword: Vec<Vec<String>>,
    pub purpose: Vec<Vec<String>>,
    pub purpose_rel: BTreeSet<String>,
    pub verbs: BTreeSet<String>,
    pub nominal: Vec<Vec<String>>,
}

const CUE_SECTIONS: &[&str] = &["marker", "multiword", "purpose", "purpose_rel", "verb", "nominal"];

impl CausalCueConfig {
    pub fn parse(text: &str) -> Result<Self, SyntaxError> {
        let s = parse_sections(text, CUE_SECTIONS)?;
        Ok(CausalCueConfig {
            markers: set(&s, "marker"),
            multiword: phrases(&s, "multiword"),
            purpose: phrases(&s, "purpose"),
            purpose_rel: set(&s, "purpose_rel"),
            verbs: set(&s, "verb"),
            nominal: phrases(&s, "nominal"),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SyntaxError> {
        Self::parse(&read(path)?)
    }
}

impl Default for CausalCueConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_CAUSAL_CUES).expect("bundled cues parse")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootVerbType {
    Motion,
    StopYield,
    State,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voice {
    Active,
    Passive,
}

/// Inclusive 1-based token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntacticFeatures {
    pub voice: Voice,
    pub subordinate_present: bool,
    pub clause_count: usize,
    pub pp_count: usize,
    pub negation: bool,
    pub modal: bool,
    pub has_subject: bool,
    pub has_object: bool,
    pub has_directional: bool,
    pub root_verb_type: RootVerbType,
    pub has_causal: bool,
    pub causal_spans: Vec<Span>,
    /// Number of cue hits before span merging.
    pub causal_cue_count: usize,
}

/// Span anchored at a token: its subtree, unless it is the root clause.
fn anchor_span(p: &ParsedExplanation, anchor: usize) -> Span {
    if p.token(anchor).head == 0 {
        Span {
            start: anchor,
            end: anchor,
        }
    } else {
        let (start, end) = p.subtree_extent(anchor);
        Span { start, end }
    }
}

/// Span for a function-word cue: the clause or phrase it marks.
fn cue_span(p: &ParsedExplanation, first: usize, last: usize) -> Span {
    let head = p.token(first).head;
    if head == 0 || head == p.root() || (first..=last).contains(&head) {
        return Span {
            start: first,
            end: last,
        };
    }
    let s = anchor_span(p, head);
    Span {
        start: s.start.min(first),
        end: s.end.max(last),
    }
}

fn phrase_matches(surfaces: &[String], phrase: &[String]) -> Vec<(usize, usize)> {
    if phrase.is_empty() || phrase.len() > surfaces.len() {
        return Vec::new();
    }
    (0..=surfaces.len() - phrase.len())
        .filter(|&i| surfaces[i..i + phrase.len()] == *phrase)
        .map(|i| (i + 1, i + phrase.len()))
        .collect()
}

fn merge_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort();
    let mut out: Vec<Span> = Vec::new();
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Rule-based causal and purpose cue detection. Returns merged spans and the
/// raw hit count.
pub fn detect_causal_spans(p: &ParsedExplanation, cues: &CausalCueConfig) -> (Vec<Span>, usize) {
    let surfaces: Vec<String> = p.tokens.iter().map(|t| t.surface.to_lowercase()).collect();
    let mut spans = Vec::new();
    for t in &p.tokens {
        let l = t.lemma.to_lowercase();
        if cues.markers.contains(&l) {
            spans.push(cue_span(p, t.index, t.index));
        }
        if cues.verbs.contains(&l) && matches!(t.upos.as_str(), "VERB" | "AUX") {
            spans.push(anchor_span(p, t.index));
        }
        if l == "to" && t.deprel == "mark" && t.head != 0 && cues.purpose_rel.contains(&p.token(t.head).deprel) {
            spans.push(anchor_span(p, t.head));
        }
    }
    for phrase in cues.multiword.iter().chain(&cues.purpose).chain(&cues.nominal) {
        for (a, b) in phrase_matches(&surfaces, phrase) {
            spans.push(cue_span(p, a, b));
        }
    }
    let hits = spans.len();
    (merge_spans(spans), hits)
}

pub fn detect_causal(p: &ParsedExplanation, cues: &CausalCueConfig) -> (bool, Vec<Span>) {
    let (spans, _) = detect_causal_spans(p, cues);
    (!spans.is_empty(), spans)
}

pub fn extract_features(p: &ParsedExplanation, lex: &VerbLexicons, cues: &CausalCueConfig) -> SyntacticFeatures {
    let rel = &lex.relations;
    let root = p.root();
    let root_deps: Vec<_> = p.children(root).collect();
    let subordinate = p.tokens.iter().filter(|t| rel.subordinate.contains(&t.deprel)).count();
    let rt = p.token(root);
    let (spans, hits) = detect_causal_spans(p, cues);
    SyntacticFeatures {
        voice: if root_deps.iter().any(|t| rel.passive.contains(&t.deprel)) {
            Voice::Passive
        } else {
            Voice::Active
        },
        subordinate_present: subordinate > 0,
        clause_count: 1 + subordinate,
        pp_count: p
            .tokens
            .iter()
            .filter(|t| rel.case.contains(&t.deprel) && t.upos == "ADP")
            .count(),
        negation: p.tokens.iter().any(|t| lex.negation.contains(&t.lemma.to_lowercase())),
        modal: p
            .tokens
            .iter()
            .any(|t| rel.aux.contains(&t.deprel) && lex.modal.contains(&t.lemma.to_lowercase())),
        has_subject: root_deps.iter().any(|t| rel.subject.contains(&t.deprel)),
        has_object: root_deps.iter().any(|t| rel.object.contains(&t.deprel)),
        has_directional: p.tokens.iter().any(|t| {
            (rel.direction.contains(&t.deprel) || rel.oblique.contains(&t.deprel))
                && lex.directional.contains(&t.lemma.to_lowercase())
        }),
        root_verb_type: if matches!(rt.upos.as_str(), "VERB" | "AUX") {
            lex.verb_type(&rt.lemma)
        } else {
            RootVerbType::Other
        },
        has_causal: !spans.is_empty(),
        causal_spans: spans,
        causal_cue_count: hits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PpBucket {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2plus")]
    TwoPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseConfig {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SyntacticSignature {
    pub root_verb_type: RootVerbType,
    pub voice: Voice,
    pub has_causal: bool,
    pub pp_bucket: PpBucket,
    pub clause_config: ClauseConfig,
    pub negation: bool,
    pub modal: bool,
    pub has_subject: bool,
    pub has_object: bool,
    pub has_directional: bool,
}

impl fmt::Display for SyntacticSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("signature serializes");
        let parts: Vec<String> = [
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
        ]
        .iter()
        .map(|k| match &v[k] {
            serde_json::Value::String(s) => s.clone(),
            other => format!("{}={}", k.trim_start_matches("has_"), other),
        })
        .collect();
        write!(f, "{}", parts.join("|"))
    }
}

pub fn make_signature(f: &SyntacticFeatures) -> SyntacticSignature {
    SyntacticSignature {
        root_verb_type: f.root_verb_type,
        voice: f.voice,
        has_causal: f.has_causal,
        pp_bucket: match f.pp_count {
            0 => PpBucket::Zero,
            1 => PpBucket::One,
            _ => PpBucket::TwoPlus,
        },
        clause_config: if f.clause_count > 1 {
            ClauseConfig::Multi
        } else {
            ClauseConfig::Single
        },
        negation: f.negation,
        modal: f.modal,
        has_subject: f.has_subject,
        has_object: f.has_object,
        has_directional: f.has_directional,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Agent,
    MotionVerb,
    StopVerb,
    StateVerb,
    Verb,
    Object,
    Direction,
    Pp(usize),
    Neg,
    Cause,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Agent => f.write_str("AGENT"),
            Slot::MotionVerb => f.write_str("MOTION_VERB"),
            Slot::StopVerb => f.write_str("STOP_VERB"),
            Slot::StateVerb => f.write_str("STATE_VERB"),
            Slot::Verb => f.write_str("VERB"),
            Slot::Object => f.write_str("OBJECT"),
            Slot::Direction => f.write_str("DIRECTION"),
            Slot::Pp(k) => write!(f, "PP_{k}"),
            Slot::Neg => f.write_str("NEG"),
            Slot::Cause => f.write_str("CAUSE"),
        }
    }
}

impl Serialize for Slot {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotTemplate {
    pub slots: Vec<Slot>,
    pub frequency: usize,
    pub contexts: BTreeMap<String, usize>,
}

impl SlotTemplate {
    pub fn key(&self) -> String {
        slot_string(&self.slots)
    }
}

pub fn slot_string(slots: &[Slot]) -> String {
    slots.iter().map(Slot::to_string).collect::<Vec<_>>().join(" ")
}

/// Replace lexical content with functional slots, in surface order.
pub fn derive_template(p: &ParsedExplanation, f: &SyntacticFeatures, lex: &VerbLexicons) -> SlotTemplate {
    let rel = &lex.relations;
    let root = p.root();
    let cause = f.causal_spans.first().copied();
    let in_cause = |i: usize| cause.is_some_and(|s| (s.start..=s.end).contains(&i));

    #[derive(PartialEq)]
    enum Raw {
        S(Slot),
        Pp,
    }
    let mut placed: Vec<(usize, Raw)> = Vec::new();
    if !in_cause(root) {
        placed.push((
            root,
            Raw::S(match f.root_verb_type {
                RootVerbType::Motion => Slot::MotionVerb,
                RootVerbType::StopYield => Slot::StopVerb,
                RootVerbType::State => Slot::StateVerb,
                RootVerbType::Other => Slot::Verb,
            }),
        ));
    }
    for t in p.children(root) {
        if in_cause(t.index) {
            continue;
        }
        let l = t.lemma.to_lowercase();
        let slot = if rel.subject.contains(&t.deprel) {
            Some(Raw::S(Slot::Agent))
        } else if rel.object.contains(&t.deprel) {
            Some(Raw::S(Slot::Object))
        } else if lex.negation.contains(&l) {
            Some(Raw::S(Slot::Neg))
        } else if rel.direction.contains(&t.deprel) && lex.directional.contains(&l) {
            Some(Raw::S(Slot::Direction))
        } else if rel.oblique.contains(&t.deprel) && p.children(t.index).any(|c| rel.case.contains(&c.deprel)) {
            Some(if lex.directional.contains(&l) {
                Raw::S(Slot::Direction)
            } else {
                Raw::Pp
            })
        } else {
            None
        };
        if let Some(s) = slot {
            placed.push((t.index, s));
        }
    }
    if let Some(s) = cause {
        placed.push((s.start, Raw::S(Slot::Cause)));
    }
    placed.sort_by_key(|(i, _)| *i);
    let mut k = 0;
    let slots = placed
        .into_iter()
        .map(|(_, r)| match r {
            Raw::S(s) => s,
            Raw::Pp => {
                k += 1;
                Slot::Pp(k)
            }
        })
        .collect();
    SlotTemplate {
        slots,
        frequency: 1,
        contexts: BTreeMap::new(),
    }
}

/// Per-explanation analysis. Explanations parsed as several sentences are
/// merged: flags are OR-ed, counts summed, spans kept from the first sentence
/// that has any, and the template comes from the first sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExplanationSyntax {
    pub explanation_id: String,
    pub sentences: usize,
    pub features: SyntacticFeatures,
    pub signature: SyntacticSignature,
    pub template: Vec<Slot>,
}

fn merge_features(a: &mut SyntacticFeatures, b: SyntacticFeatures) {
    if b.voice == Voice::Passive {
        a.voice = Voice::Passive;
    }
    a.subordinate_present |= b.subordinate_present;
    a.clause_count += b.clause_count;
    a.pp_count += b.pp_count;
    a.negation |= b.negation;
    a.modal |= b.modal;
    a.has_subject |= b.has_subject;
    a.has_object |= b.has_object;
    a.has_directional |= b.has_directional;
    a.has_causal |= b.has_causal;
    if a.causal_spans.is_empty() {
        a.causal_spans = b.causal_spans;
    }
    a.causal_cue_count += b.causal_cue_count;
}

/// Analyze parses, grouping consecutive blocks that share an explanation id.
pub fn analyze_corpus(
    parses: &[ParsedExplanation],
    lex: &VerbLexicons,
    cues: &CausalCueConfig,
) -> Vec<ExplanationSyntax> {
    let mut groups: Vec<&[ParsedExplanation]> = Vec::new();
    let mut start = 0;
    for i in 1..=parses.len() {
        if i == parses.len() || parses[i].explanation_id != parses[start].explanation_id {
            groups.push(&parses[start..i]);
            start = i;
        }
    }
    groups
        .par_iter()
        .map(|g| {
            let first = &g[0];
            let f0 = extract_features(first, lex, cues);
            let template = derive_template(first, &f0, lex).slots;
            let mut features = f0;
            for p in &g[1..] {
                merge_features(&mut features, extract_features(p, lex, cues));
            }
            // Clause count is per sentence; keep the sentence-level invariant.
            features.clause_count -= g.len() - 1;
            features.subordinate_present = features.clause_count > 1;
            ExplanationSyntax {
                explanation_id: first.explanation_id.clone(),
                sentences: g.len(),
                signature: make_signature(&features),
                features,
                template,
            }
        })
        .collect()
}

fn context_of<'a>(
    records: &'a [ExplanationSyntax],
    labels: &'a BTreeMap<String, String>,
) -> Result<Vec<(&'a ExplanationSyntax, &'a str)>, SyntaxError> {
    let missing: BTreeSet<String> = records
        .iter()
        .filter(|r| !labels.contains_key(&r.explanation_id))
        .map(|r| r.explanation_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(SyntaxError::Unlabeled(missing.into_iter().collect()));
    }
    Ok(records
        .iter()
        .map(|r| (r, labels[&r.explanation_id].as_str()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrammarFamily {
    pub signature: SyntacticSignature,
    pub member_ids: Vec<String>,
    pub frequency: usize,
    pub contexts: BTreeMap<String, usize>,
}

/// One family per signature; frequency descending, then signature order.
pub fn group_families(
    records: &[ExplanationSyntax],
    labels: &BTreeMap<String, String>,
) -> Result<Vec<GrammarFamily>, SyntaxError> {
    let mut map: BTreeMap<SyntacticSignature, GrammarFamily> = BTreeMap::new();
    for (r, ctx) in context_of(records, labels)? {
        let fam = map.entry(r.signature).or_insert_with(|| GrammarFamily {
            signature: r.signature,
            member_ids: Vec::new(),
            frequency: 0,
            contexts: BTreeMap::new(),
        });
        fam.member_ids.push(r.explanation_id.clone());
        fam.frequency += 1;
        *fam.contexts.entry(ctx.to_string()).or_insert(0) += 1;
    }
    let mut out: Vec<GrammarFamily> = map.into_values().collect();
    out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.signature.cmp(&b.signature)));
    Ok(out)
}

/// Aggregate templates; frequency descending, then slot sequence.
pub fn group_templates(
    records: &[ExplanationSyntax],
    labels: &BTreeMap<String, String>,
) -> Result<Vec<SlotTemplate>, SyntaxError> {
    let mut map: BTreeMap<Vec<Slot>, SlotTemplate> = BTreeMap::new();
    for (r, ctx) in context_of(records, labels)? {
        let t = map.entry(r.template.clone()).or_insert_with(|| SlotTemplate {
            slots: r.template.clone(),
            frequency: 0,
            contexts: BTreeMap::new(),
        });
        t.frequency += 1;
        *t.contexts.entry(ctx.to_string()).or_insert(0) += 1;
    }
    let mut out: Vec<SlotTemplate> = map.into_values().collect();
    out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.slots.cmp(&b.slots)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReuseClass {
    General,
    Specialised,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseEntry {
    pub structure: String,
    pub frequency: usize,
    pub breadth: usize,
    pub qualifying_contexts: Vec<String>,
    /// Context entropy divided by ln(number of contexts present); 0 for one context.
    pub normalized_entropy: f64,
    pub class: ReuseClass,
}

/// Cross-context reuse. A context qualifies when the structure covers at least
/// `min_share` of that context's explanations.
pub fn reuse_analysis(
    structures: &[(String, BTreeMap<String, usize>)],
    context_totals: &BTreeMap<String, usize>,
    min_share: f64,
) -> Result<Vec<ReuseEntry>, SyntaxError> {
    if !(min_share > 0.0 && min_share <= 1.0) {
        return Err(SyntaxError::BadMinShare(min_share));
    }
    Ok(structures
        .iter()
        .map(|(name, hist)| {
            let freq: usize = hist.values().sum();
            let qualifying: Vec<String> = hist
                .iter()
                .filter(|(c, n)| {
                    let total = context_totals.get(*c).copied().unwrap_or(0);
                    total > 0 && **n as f64 / total as f64 >= min_share
                })
                .map(|(c, _)| c.clone())
                .collect();
            let present: Vec<f64> = hist.values().filter(|n| **n > 0).map(|n| *n as f64).collect();
            let normalized_entropy = if present.len() < 2 {
                0.0
            } else {
                let total: f64 = present.iter().sum();
                let h: f64 = present.iter().map(|n| -(n / total) * (n / total).ln()).sum();
                h / (present.len() as f64).ln()
            };
            ReuseEntry {
                structure: name.clone(),
                frequency: freq,
                breadth: qualifying.len(),
                class: match qualifying.len() {
                    0 => ReuseClass::None,
                    1 => ReuseClass::Specialised,
                    _ => ReuseClass::General,
                },
                qualifying_contexts: qualifying,
                normalized_entropy,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemplateNode {
    pub template: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FamilyNode {
    pub signature: String,
    pub count: usize,
    pub templates: Vec<TemplateNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextNode {
    pub context: String,
    pub count: usize,
    pub families: Vec<FamilyNode>,
}

/// Context -> family -> template tree; children ordered by count descending.
pub fn hierarchy(
    records: &[ExplanationSyntax],
    labels: &BTreeMap<String, String>,
) -> Result<Vec<ContextNode>, SyntaxError> {
    let mut tree: BTreeMap<&str, BTreeMap<SyntacticSignature, BTreeMap<String, usize>>> = BTreeMap::new();
    for (r, ctx) in context_of(records, labels)? {
        *tree
            .entry(ctx)
            .or_default()
            .entry(r.signature)
            .or_default()
            .entry(slot_string(&r.template))
            .or_insert(0) += 1;
    }
    let mut out: Vec<ContextNode> = tree
        .into_iter()
        .map(|(ctx, fams)| {
            let mut families: Vec<FamilyNode> = fams
                .into_iter()
                .map(|(sig, temps)| {
                    let mut templates: Vec<TemplateNode> = temps
                        .into_iter()
                        .map(|(template, count)| TemplateNode { template, count })
                        .collect();
                    templates.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.template.cmp(&b.template)));
                    FamilyNode {
                        signature: sig.to_string(),
                        count: templates.iter().map(|t| t.count).sum(),
                        templates,
                    }
                })
                .collect();
            families.sort_by_key(|f| std::cmp::Reverse(f.count));
            ContextNode {
                context: ctx.to_string(),
                count: families.iter().map(|f| f.count).sum(),
                families,
            }
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.context.cmp(&b.context)));
    Ok(out)
}

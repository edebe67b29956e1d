//! Lexical keyness: lemma normalization, one-vs-rest count model and log-odds
//! scoring with an informative (background-proportional) Dirichlet prior.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParsedExplanation;

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const DEFAULT_ALPHA0: f64 = 1000.0;

/// Lemmas of this many characters or fewer are dropped.
const MAX_SHORT_LEN: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum KeynessError {
    #[error("explanations without a context label: {0:?}")]
    Unlabeled(Vec<String>),
    #[error("background has no lemma tokens")]
    EmptyBackground,
    #[error("alpha0 must be positive and finite, got {0}")]
    BadAlpha0(f64),
    #[error("lemma `{0}` is not in the prior vocabulary")]
    UnknownLemma(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("non-positive log argument for lemma `{0}`")]
    NonPositiveLog(String),
    #[error("k must be positive")]
    BadK,
    #[error("cannot read stopwords from {path}: {message}")]
    Io { path: String, message: String },
}

/// Parse a stopword file: one token per line, `#` comments, case-folded.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>, KeynessError> {
    std::fs::read_to_string(path)
        .map(|t| parse_stopwords(&t))
        .map_err(|e| KeynessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaStream {
    pub explanation_id: String,
    pub lemmas: Vec<String>,
    /// Lowercased surface form of each retained lemma, aligned with `lemmas`.
    pub surfaces: Vec<String>,
}

fn is_alpha(s: &str) -> bool {
    !s.is_empty() && s.chars().all(char::is_alphabetic)
}

pub fn normalize(parse: &ParsedExplanation, stopwords: &BTreeSet<String>) -> LemmaStream {
    let mut lemmas = Vec::new();
    let mut surfaces = Vec::new();
    for t in &parse.tokens {
        if !is_alpha(&t.surface) || !is_alpha(&t.lemma) {
            continue;
        }
        let lemma = t.lemma.to_lowercase();
        if lemma.chars().count() <= MAX_SHORT_LEN || stopwords.contains(&lemma) {
            continue;
        }
        lemmas.push(lemma);
        surfaces.push(t.surface.to_lowercase());
    }
    LemmaStream {
        explanation_id: parse.explanation_id.clone(),
        lemmas,
        surfaces,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextCounts {
    pub context: String,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl ContextCounts {
    pub fn new(context: impl Into<String>) -> Self {
        ContextCounts {
            context: context.into(),
            ..Default::default()
        }
    }

    pub fn count(&self, lemma: &str) -> u64 {
        self.counts.get(lemma).copied().unwrap_or(0)
    }

    pub fn add(&mut self, lemma: &str, n: u64) {
        match self.counts.get_mut(lemma) {
            Some(c) => *c += n,
            None => {
                self.counts.insert(lemma.to_string(), n);
            }
        }
        self.total += n;
    }

    fn merge(&mut self, other: &ContextCounts) {
        for (w, n) in &other.counts {
            self.add(w, *n);
        }
    }
}

type SurfaceCounts = BTreeMap<String, BTreeMap<String, u64>>;

/// Per-context and background lemma counts plus surface-form frequencies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTable {
    pub contexts: BTreeMap<String, ContextCounts>,
    pub background: ContextCounts,
    /// context -> lemma -> surface -> count
    surfaces: BTreeMap<String, SurfaceCounts>,
}

impl CountTable {
    fn merge(mut self, other: CountTable) -> CountTable {
        for (c, counts) in &other.contexts {
            self.contexts
                .entry(c.clone())
                .or_insert_with(|| ContextCounts::new(c.clone()))
                .merge(counts);
        }
        self.background.merge(&other.background);
        for (c, lemmas) in other.surfaces {
            let dst = self.surfaces.entry(c).or_default();
            for (l, forms) in lemmas {
                let d = dst.entry(l).or_default();
                for (s, n) in forms {
                    *d.entry(s).or_insert(0) += n;
                }
            }
        }
        self
    }

    pub fn context(&self, context: &str) -> Result<&ContextCounts, KeynessError> {
        self.contexts
            .get(context)
            .ok_or_else(|| KeynessError::UnknownContext(context.to_string()))
    }

    /// One-vs-rest complement: background minus the context.
    pub fn complement(&self, context: &str) -> Result<ContextCounts, KeynessError> {
        let c = self.context(context)?;
        let mut out = ContextCounts::new(format!("not {context}"));
        for (w, n) in &self.background.counts {
            let rest = n - c.count(w);
            if rest > 0 {
                out.counts.insert(w.clone(), rest);
            }
        }
        out.total = self.background.total - c.total;
        Ok(out)
    }

    /// Most frequent surface form of `lemma` in `context`, ties alphabetical;
    /// falls back to the corpus-wide most frequent form.
    pub fn surface(&self, context: &str, lemma: &str) -> String {
        let pick = |forms: &BTreeMap<String, u64>| {
            forms
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(s, _)| s.clone())
        };
        if let Some(s) = self.surfaces.get(context).and_then(|m| m.get(lemma)).and_then(pick) {
            return s;
        }
        let mut all: BTreeMap<String, u64> = BTreeMap::new();
        for m in self.surfaces.values() {
            if let Some(forms) = m.get(lemma) {
                for (s, n) in forms {
                    *all.entry(s.clone()).or_insert(0) += n;
                }
            }
        }
        pick(&all).unwrap_or_else(|| lemma.to_string())
    }
}

/// Count lemmas per context. Every stream id must have a label.
pub fn count_lemmas(streams: &[LemmaStream], labels: &BTreeMap<String, String>) -> Result<CountTable, KeynessError> {
    let mut missing: Vec<String> = streams
        .iter()
        .filter(|s| !labels.contains_key(&s.explanation_id))
        .map(|s| s.explanation_id.clone())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(KeynessError::Unlabeled(missing));
    }
    let mut table = streams
        .par_iter()
        .with_min_len(1024)
        .fold(CountTable::default, |mut acc, s| {
            let ctx = &labels[&s.explanation_id];
            let cc = acc
                .contexts
                .entry(ctx.clone())
                .or_insert_with(|| ContextCounts::new(ctx.clone()));
            let forms = acc.surfaces.entry(ctx.clone()).or_default();
            for (l, surf) in s.lemmas.iter().zip(&s.surfaces) {
                cc.add(l, 1);
                acc.background.add(l, 1);
                let by_form = match forms.get_mut(l.as_str()) {
                    Some(f) => f,
                    None => forms.entry(l.clone()).or_default(),
                };
                match by_form.get_mut(surf.as_str()) {
                    Some(n) => *n += 1,
                    None => {
                        by_form.insert(surf.clone(), 1);
                    }
                }
            }
            acc
        })
        .reduce(CountTable::default, CountTable::merge);
    table.background.context = "background".into();
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha0: f64,
    pub alphas: BTreeMap<String, f64>,
}

impl PriorSpec {
    pub fn alpha(&self, lemma: &str) -> Result<f64, KeynessError> {
        self.alphas
            .get(lemma)
            .copied()
            .ok_or_else(|| KeynessError::UnknownLemma(lemma.to_string()))
    }
}

/// `alpha_w = alpha0 * n_bg,w / N_bg` for every background lemma.
pub fn compute_prior(background: &ContextCounts, alpha0: f64) -> Result<PriorSpec, KeynessError> {
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(KeynessError::BadAlpha0(alpha0));
    }
    if background.total == 0 {
        return Err(KeynessError::EmptyBackground);
    }
    let total = background.total as f64;
    let alphas = background
        .counts
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(w, n)| (w.clone(), alpha0 * (*n as f64) / total))
        .collect();
    Ok(PriorSpec { alpha0, alphas })
}

fn log_odds(lemma: &str, n: f64, total: f64, alpha: f64, alpha0: f64) -> Result<f64, KeynessError> {
    let num = n + alpha;
    let den = total + alpha0 - num;
    if num <= 0.0 || den <= 0.0 {
        return Err(KeynessError::NonPositiveLog(lemma.to_string()));
    }
    Ok((num / den).ln())
}

/// Log-odds difference of `lemma` between a context and its complement.
pub fn log_odds_delta(
    c: &ContextCounts,
    comp: &ContextCounts,
    prior: &PriorSpec,
    lemma: &str,
) -> Result<f64, KeynessError> {
    let a = prior.alpha(lemma)?;
    let lc = log_odds(lemma, c.count(lemma) as f64, c.total as f64, a, prior.alpha0)?;
    let lr = log_odds(lemma, comp.count(lemma) as f64, comp.total as f64, a, prior.alpha0)?;
    Ok(lc - lr)
}

/// Standardize a log-odds difference by its approximate standard error.
pub fn keyness_z(delta: f64, n_c: u64, n_comp: u64, alpha_w: f64) -> f64 {
    let var = 1.0 / (n_c as f64 + alpha_w) + 1.0 / (n_comp as f64 + alpha_w);
    delta / var.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeynessScore {
    pub context: String,
    pub lemma: String,
    pub delta: f64,
    pub z: f64,
    pub surface: String,
    pub count_in_context: u64,
}

/// Score every vocabulary lemma for one context, sorted by z descending
/// (ties alphabetical by lemma).
pub fn score_context(table: &CountTable, prior: &PriorSpec, context: &str) -> Result<Vec<KeynessScore>, KeynessError> {
    let c = table.context(context)?;
    let comp = table.complement(context)?;
    let mut scores = prior
        .alphas
        .par_iter()
        .map(|(w, a)| {
            let (n_c, n_comp) = (c.count(w), comp.count(w));
            let delta = log_odds(w, n_c as f64, c.total as f64, *a, prior.alpha0)?
                - log_odds(w, n_comp as f64, comp.total as f64, *a, prior.alpha0)?;
            Ok(KeynessScore {
                context: context.to_string(),
                lemma: w.clone(),
                delta,
                z: keyness_z(delta, n_c, n_comp, *a),
                surface: String::new(),
                count_in_context: n_c,
            })
        })
        .collect::<Result<Vec<_>, KeynessError>>()?;
    scores.sort_by(|a, b| b.z.total_cmp(&a.z).then_with(|| a.lemma.cmp(&b.lemma)));
    Ok(scores)
}

/// The `k` most over-represented lemmas of a context, with surface forms.
pub fn top_keyness(
    table: &CountTable,
    prior: &PriorSpec,
    context: &str,
    k: usize,
) -> Result<Vec<KeynessScore>, KeynessError> {
    if k == 0 {
        return Err(KeynessError::BadK);
    }
    let mut scores = score_context(table, prior, context)?;
    scores.truncate(k);
    for s in &mut scores {
        s.surface = table.surface(context, &s.lemma);
    }
    Ok(scores)
}

/// `top_keyness` for every context, contexts in sorted order.
pub fn keyness_report(
    table: &CountTable,
    prior: &PriorSpec,
    k: usize,
) -> Result<Vec<(String, Vec<KeynessScore>)>, KeynessError> {
    table
        .contexts
        .keys()
        .map(|c| Ok((c.clone(), top_keyness(table, prior, c, k)?)))
        .collect()
}

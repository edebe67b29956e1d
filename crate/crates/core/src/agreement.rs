//! Agreement and evaluation statistics for label assignments.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationRecord, Taxonomy};

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("no labeled pairs")]
    Empty,
    #[error("at least two raters are required, got {0}")]
    TooFewRaters(usize),
    #[error("item {item} has {found} ratings, expected {expected}")]
    Ragged { item: usize, found: usize, expected: usize },
    #[error("rater coverage mismatch, ids: {0:?}")]
    Coverage(Vec<String>),
    #[error("label `{0}` is not in the taxonomy")]
    UnknownLabel(String),
    #[error("fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub explanation_id: String,
    pub rater_a_label: String,
    pub rater_b_label: String,
}

impl LabeledPair {
    pub fn new(id: impl Into<String>, a: impl Into<String>, b: impl Into<String>) -> Self {
        LabeledPair {
            explanation_id: id.into(),
            rater_a_label: a.into(),
            rater_b_label: b.into(),
        }
    }
}

/// Pairs from two label vectors; ids are positional.
pub fn pairs_from(a: &[&str], b: &[&str]) -> Vec<LabeledPair> {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| LabeledPair::new(i.to_string(), *x, *y))
        .collect()
}

/// Percentage of pairs whose labels match.
pub fn accuracy(pairs: &[LabeledPair]) -> Result<f64, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::Empty);
    }
    let hits = pairs.iter().filter(|p| p.rater_a_label == p.rater_b_label).count();
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroAverage {
    /// Classes that occur in gold or predictions.
    #[default]
    Supported,
    /// Every taxonomy class.
    FullTaxonomy,
}

/// Macro-averaged F1 with `rater_a` as gold and `rater_b` as prediction.
pub fn macro_f1(pairs: &[LabeledPair], taxonomy: &Taxonomy, mode: MacroAverage) -> Result<f64, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::Empty);
    }
    let mut tp: BTreeMap<&str, f64> = BTreeMap::new();
    let mut gold: BTreeMap<&str, f64> = BTreeMap::new();
    let mut pred: BTreeMap<&str, f64> = BTreeMap::new();
    for p in pairs {
        *gold.entry(&p.rater_a_label).or_default() += 1.0;
        *pred.entry(&p.rater_b_label).or_default() += 1.0;
        if p.rater_a_label == p.rater_b_label {
            *tp.entry(&p.rater_a_label).or_default() += 1.0;
        }
    }
    let classes: BTreeSet<&str> = match mode {
        MacroAverage::Supported => gold.keys().chain(pred.keys()).copied().collect(),
        MacroAverage::FullTaxonomy => {
            for l in gold.keys().chain(pred.keys()) {
                if !taxonomy.contains(l) {
                    return Err(AgreementError::UnknownLabel(l.to_string()));
                }
            }
            taxonomy.labels().collect()
        }
    };
    let f1s = classes.iter().map(|c| {
        let t = tp.get(c).copied().unwrap_or(0.0);
        let p = pred.get(c).map_or(0.0, |n| t / n);
        let r = gold.get(c).map_or(0.0, |n| t / n);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    });
    Ok(f1s.sum::<f64>() / classes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Expected agreement was 1, so the ratio is undefined and `value` is
    /// 1 for full agreement, 0 otherwise.
    pub degenerate: bool,
}

fn kappa_from(po: f64, pe: f64) -> Kappa {
    if (1.0 - pe).abs() < 1e-15 {
        Kappa {
            value: if (po - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 },
            degenerate: true,
        }
    } else {
        Kappa {
            value: (po - pe) / (1.0 - pe),
            degenerate: false,
        }
    }
}

pub fn cohen_kappa(pairs: &[LabeledPair]) -> Result<Kappa, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n = pairs.len() as u64;
    let mut a: BTreeMap<&str, u64> = BTreeMap::new();
    let mut b: BTreeMap<&str, u64> = BTreeMap::new();
    let mut agree = 0u64;
    for p in pairs {
        *a.entry(&p.rater_a_label).or_default() += 1;
        *b.entry(&p.rater_b_label).or_default() += 1;
        if p.rater_a_label == p.rater_b_label {
            agree += 1;
        }
    }
    // Scaled by n^2 so the ratio is taken over exact integers.
    let chance: u64 = a.iter().map(|(l, na)| na * b.get(l).copied().unwrap_or(0)).sum();
    let den = (n * n) as f64 - chance as f64;
    if den == 0.0 {
        return Ok(kappa_from(agree as f64 / n as f64, 1.0));
    }
    Ok(Kappa {
        value: ((n * agree) as f64 - chance as f64) / den,
        degenerate: false,
    })
}

/// Fleiss' kappa over an item x rater label matrix.
pub fn fleiss_kappa<S: AsRef<str>>(ratings: &[Vec<S>]) -> Result<Kappa, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::Empty);
    }
    let m = ratings[0].len();
    if m < 2 {
        return Err(AgreementError::TooFewRaters(m));
    }
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    let mut p_sum = 0.0;
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != m {
            return Err(AgreementError::Ragged {
                item: i,
                found: row.len(),
                expected: m,
            });
        }
        let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
        for l in row {
            *counts.entry(l.as_ref()).or_default() += 1.0;
            *totals.entry(l.as_ref()).or_default() += 1.0;
        }
        let sq: f64 = counts.values().map(|c| c * c).sum();
        p_sum += (sq - m as f64) / (m * (m - 1)) as f64;
    }
    let n = ratings.len() as f64;
    let nm = n * m as f64;
    let pe: f64 = totals.values().map(|c| (c / nm) * (c / nm)).sum();
    Ok(kappa_from(p_sum / n, pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLevel {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            AgreementLevel::Poor => "poor",
            AgreementLevel::Slight => "slight",
            AgreementLevel::Fair => "fair",
            AgreementLevel::Moderate => "moderate",
            AgreementLevel::Substantial => "substantial",
            AgreementLevel::AlmostPerfect => "almost_perfect",
        }
    }
}

/// Landis and Koch bands, upper edges inclusive, applied to the raw value.
pub fn landis_koch(kappa: f64) -> AgreementLevel {
    if kappa < 0.0 {
        AgreementLevel::Poor
    } else if kappa <= 0.20 {
        AgreementLevel::Slight
    } else if kappa <= 0.40 {
        AgreementLevel::Fair
    } else if kappa <= 0.60 {
        AgreementLevel::Moderate
    } else if kappa <= 0.80 {
        AgreementLevel::Substantial
    } else {
        AgreementLevel::AlmostPerfect
    }
}

/// Per-label stratified sample. Labels with at least `min_n` items contribute
/// `round(fraction * n)` ids (at least one); rarer labels are taken whole.
pub fn stratified_gold_sample(
    labels: &BTreeMap<String, String>,
    fraction: f64,
    min_n: usize,
    seed: u64,
) -> Result<BTreeSet<String>, AgreementError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AgreementError::BadFraction(fraction));
    }
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, l) in labels {
        by_label.entry(l).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeSet::new();
    for ids in by_label.values() {
        let n = ids.len();
        if n < min_n {
            out.extend(ids.iter().map(|s| s.to_string()));
            continue;
        }
        let k = ((fraction * n as f64).round() as usize).clamp(1, n);
        for i in rand::seq::index::sample(&mut rng, n, k) {
            out.insert(ids[i].to_string());
        }
    }
    Ok(out)
}

fn coverage(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> Vec<String> {
    let ka: BTreeSet<&String> = a.keys().collect();
    let kb: BTreeSet<&String> = b.keys().collect();
    ka.symmetric_difference(&kb).map(|s| s.to_string()).collect()
}

/// Ids on which two raters assigned the same label.
pub fn agreement_subset(
    h1: &BTreeMap<String, String>,
    h2: &BTreeMap<String, String>,
) -> Result<BTreeSet<String>, AgreementError> {
    let diff = coverage(h1, h2);
    if !diff.is_empty() {
        return Err(AgreementError::Coverage(diff));
    }
    Ok(h1
        .iter()
        .filter(|(id, l)| h2[*id] == **l)
        .map(|(id, _)| id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// Rows are gold (`rater_a`), columns predicted (`rater_b`).
    pub counts: Vec<Vec<u64>>,
    pub row_normalized: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    /// CSV with a header row and a leading label column.
    pub fn to_csv(&self, normalized: bool) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = String::from("gold\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(&quote(l));
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&quote(l));
            for j in 0..self.labels.len() {
                out.push(',');
                if normalized {
                    out.push_str(&format!("{:.2}", self.row_normalized[i][j]));
                } else {
                    out.push_str(&self.counts[i][j].to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(pairs: &[LabeledPair], taxonomy: &Taxonomy) -> Result<ConfusionMatrix, AgreementError> {
    let k = taxonomy.len();
    let mut counts = vec![vec![0u64; k]; k];
    for p in pairs {
        let idx = |l: &str| {
            taxonomy
                .index_of(l)
                .ok_or_else(|| AgreementError::UnknownLabel(l.to_string()))
        };
        counts[idx(&p.rater_a_label)?][idx(&p.rater_b_label)?] += 1;
    }
    let row_normalized = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|c| {
                    if total == 0 {
                        0.0
                    } else {
                        100.0 * *c as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        labels: taxonomy.labels().map(str::to_string).collect(),
        counts,
        row_normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub compared_with: String,
    pub n: usize,
    /// Percent.
    pub accuracy: f64,
    pub macro_f1: f64,
    pub cohen_kappa: f64,
    pub fleiss_kappa: Option<f64>,
    /// Banded from the unrounded kappa.
    pub level: AgreementLevel,
    pub kappa_degenerate: bool,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl AgreementReport {
    /// Copy with every statistic rounded to two decimals.
    pub fn rounded(&self) -> Self {
        AgreementReport {
            accuracy: round2(self.accuracy),
            macro_f1: round2(self.macro_f1),
            cohen_kappa: round2(self.cohen_kappa),
            fleiss_kappa: self.fleiss_kappa.map(round2),
            ..self.clone()
        }
    }
}

pub fn agreement_report(
    compared_with: &str,
    pairs: &[LabeledPair],
    taxonomy: &Taxonomy,
    mode: MacroAverage,
    fleiss: Option<f64>,
) -> Result<AgreementReport, AgreementError> {
    let k = cohen_kappa(pairs)?;
    Ok(AgreementReport {
        compared_with: compared_with.to_string(),
        n: pairs.len(),
        accuracy: accuracy(pairs)?,
        macro_f1: macro_f1(pairs, taxonomy, mode)?,
        cohen_kappa: k.value,
        fleiss_kappa: fleiss,
        level: landis_koch(k.value),
        kappa_degenerate: k.degenerate,
    })
}

/// Group annotation records by annotator: annotator -> id -> label.
pub fn by_annotator(records: &[AnnotationRecord]) -> BTreeMap<String, BTreeMap<String, String>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for r in records {
        out.entry(r.annotator_id.clone())
            .or_default()
            .insert(r.explanation_id.clone(), r.label.clone());
    }
    out
}

fn restrict(
    name: &str,
    map: &BTreeMap<String, String>,
    ids: &BTreeSet<String>,
) -> Result<BTreeMap<String, String>, AgreementError> {
    let missing: Vec<String> = ids
        .iter()
        .filter(|i| !map.contains_key(*i))
        .map(|i| format!("{name}:{i}"))
        .collect();
    if !missing.is_empty() {
        return Err(AgreementError::Coverage(missing));
    }
    Ok(ids.iter().map(|i| (i.clone(), map[i].clone())).collect())
}

fn pairs_between(gold: &BTreeMap<String, String>, pred: &BTreeMap<String, String>) -> Vec<LabeledPair> {
    gold.iter()
        .map(|(id, g)| LabeledPair::new(id.clone(), g.clone(), pred[id].clone()))
        .collect()
}

/// Model vs H1, H2, consensus and the H1&H2 agreement subset, over the ids of
/// `consensus`. Fleiss' kappa over {H1, H2, model} is attached to every row.
pub fn evaluate_model(
    model: &BTreeMap<String, String>,
    h1: &BTreeMap<String, String>,
    h2: &BTreeMap<String, String>,
    consensus: &BTreeMap<String, String>,
    taxonomy: &Taxonomy,
    mode: MacroAverage,
) -> Result<Vec<AgreementReport>, AgreementError> {
    let ids: BTreeSet<String> = consensus.keys().cloned().collect();
    if ids.is_empty() {
        return Err(AgreementError::Empty);
    }
    let model = restrict("model", model, &ids)?;
    let h1 = restrict("H1", h1, &ids)?;
    let h2 = restrict("H2", h2, &ids)?;
    let ratings: Vec<Vec<&str>> = ids
        .iter()
        .map(|i| vec![h1[i].as_str(), h2[i].as_str(), model[i].as_str()])
        .collect();
    let fleiss = Some(fleiss_kappa(&ratings)?.value);
    let both = agreement_subset(&h1, &h2)?;
    let h12: BTreeMap<String, String> = both.iter().map(|i| (i.clone(), h1[i].clone())).collect();
    let mut reports = Vec::with_capacity(4);
    for (name, gold) in [("H1", &h1), ("H2", &h2), ("CONSENSUS", consensus), ("H1&H2", &h12)] {
        let pairs = pairs_between(gold, &model);
        reports.push(agreement_report(name, &pairs, taxonomy, mode, fleiss)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tax() -> Taxonomy {
        Taxonomy::from_labels(&["A", "B", "C"]).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&pairs_from(&["A", "B"], &["A", "B"])).unwrap(), 100.0);
        assert_eq!(
            accuracy(&pairs_from(&["A", "B", "A", "C"], &["A", "B", "A", "A"])).unwrap(),
            75.0
        );
        assert_eq!(accuracy(&[]), Err(AgreementError::Empty));
    }

    #[test]
    fn macro_f1_examples() {
        let p = pairs_from(&["A", "A", "B", "B"], &["A", "B", "B", "B"]);
        let f = macro_f1(&p, &tax(), MacroAverage::Supported).unwrap();
        assert!((f - 0.7333333333333334).abs() < 1e-12);
        let full = macro_f1(&p, &tax(), MacroAverage::FullTaxonomy).unwrap();
        assert!((full - (2.0 / 3.0 + 0.8) / 3.0).abs() < 1e-12);
        assert_eq!(
            macro_f1(&pairs_from(&["A", "B"], &["A", "B"]), &tax(), MacroAverage::Supported).unwrap(),
            1.0
        );
    }

    fn table(cells: [[usize; 2]; 2]) -> Vec<LabeledPair> {
        let mut out = Vec::new();
        for (i, row) in cells.iter().enumerate() {
            for (j, n) in row.iter().enumerate() {
                for _ in 0..*n {
                    out.push(LabeledPair::new(out.len().to_string(), ["A", "B"][i], ["A", "B"][j]));
                }
            }
        }
        out
    }

    #[test]
    fn cohen_two_by_two() {
        let k = cohen_kappa(&table([[20, 5], [10, 15]])).unwrap();
        assert_eq!(k.value, 0.40);
        assert!(!k.degenerate);
        assert_eq!(cohen_kappa(&table([[25, 0], [0, 25]])).unwrap().value, 1.0);
        assert!(cohen_kappa(&table([[10, 10], [10, 10]])).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn degenerate_kappa() {
        let k = cohen_kappa(&pairs_from(&["A", "A"], &["A", "A"])).unwrap();
        assert_eq!(
            k,
            Kappa {
                value: 1.0,
                degenerate: true
            }
        );
    }

    // Per-item agreement evaluated by hand in exact fractions: P_bar = 2/3, P_e = 1/3.
    const FLEISS_SIX: [[&str; 3]; 6] = [
        ["A", "A", "A"],
        ["A", "A", "B"],
        ["B", "B", "B"],
        ["B", "C", "B"],
        ["C", "C", "C"],
        ["A", "C", "C"],
    ];

    #[test]
    fn fleiss_examples() {
        let rows: Vec<Vec<&str>> = FLEISS_SIX.iter().map(|r| r.to_vec()).collect();
        assert!((fleiss_kappa(&rows).unwrap().value - 0.5).abs() < 1e-12);
        let same: Vec<Vec<&str>> = vec![vec!["A", "A"], vec!["B", "B"]];
        assert_eq!(fleiss_kappa(&same).unwrap().value, 1.0);
        assert_eq!(fleiss_kappa(&[vec!["A"]]), Err(AgreementError::TooFewRaters(1)));
        assert!(matches!(
            fleiss_kappa(&[vec!["A", "B"], vec!["A"]]),
            Err(AgreementError::Ragged { item: 1, .. })
        ));
    }

    #[test]
    fn bands() {
        assert_eq!(landis_koch(0.91), AgreementLevel::AlmostPerfect);
        assert_eq!(landis_koch(0.57), AgreementLevel::Moderate);
        assert_eq!(landis_koch(0.405), AgreementLevel::Moderate);
        assert_eq!(landis_koch(0.40), AgreementLevel::Fair);
        assert_eq!(landis_koch(0.0), AgreementLevel::Slight);
        assert_eq!(landis_koch(-0.1), AgreementLevel::Poor);
        assert_eq!(landis_koch(0.8), AgreementLevel::Substantial);
    }

    fn hist(sizes: &[(&str, usize)]) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        for (l, n) in sizes {
            for i in 0..*n {
                m.insert(format!("{l}-{i:03}"), l.to_string());
            }
        }
        m
    }

    #[test]
    fn sampling_contract() {
        let labels = hist(&[("big", 100), ("mid", 9), ("rare", 1)]);
        let s = stratified_gold_sample(&labels, 0.10, 2, 7).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.iter().filter(|i| i.starts_with("big")).count(), 10);
        assert!(s.contains("rare-000"));
        assert_eq!(s, stratified_gold_sample(&labels, 0.10, 2, 7).unwrap());
        assert!(stratified_gold_sample(&labels, 0.0, 2, 7).is_err());
    }

    #[test]
    fn subsets() {
        let m = |v: &[(&str, &str)]| {
            v.iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect::<BTreeMap<_, _>>()
        };
        let h1 = m(&[("1", "A"), ("2", "B"), ("3", "C")]);
        let h2 = m(&[("1", "A"), ("2", "B"), ("3", "A")]);
        assert_eq!(agreement_subset(&h1, &h2).unwrap().len(), 2);
        assert_eq!(agreement_subset(&h1, &h1).unwrap().len(), 3);
        assert!(agreement_subset(&h1, &m(&[("1", "A")])).is_err());
    }

    #[test]
    fn confusion_rows() {
        let c = confusion(&pairs_from(&["A", "A", "B"], &["A", "B", "B"]), &tax()).unwrap();
        assert_eq!(c.row_normalized[0], [50.0, 50.0, 0.0]);
        assert_eq!(c.row_normalized[1], [0.0, 100.0, 0.0]);
        assert_eq!(c.row_normalized[2], [0.0, 0.0, 0.0]);
        assert!(c
            .to_csv(true)
            .starts_with("gold\\predicted,A,B,C\nA,50.00,50.00,0.00\n"));
    }

    #[test]
    fn identical_raters_report() {
        let m: BTreeMap<String, String> = [("1", "A"), ("2", "B")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let r = evaluate_model(&m, &m, &m, &m, &tax(), MacroAverage::Supported).unwrap();
        assert_eq!(r.len(), 4);
        for row in r {
            assert_eq!(row.cohen_kappa, 1.0);
            assert_eq!(row.level, AgreementLevel::AlmostPerfect);
        }
    }

    fn labels_strategy() -> impl Strategy<Value = Vec<(u8, u8)>> {
        prop::collection::vec((0u8..4, 0u8..4), 2..40)
    }

    proptest! {
        #[test]
        fn kappa_relabel_invariant(v in labels_strategy(), perm in Just([2u8, 0, 3, 1]).prop_shuffle()) {
            let name = |x: u8| format!("L{x}");
            let a: Vec<LabeledPair> = v.iter().enumerate().map(|(i, (x, y))| LabeledPair::new(i.to_string(), name(*x), name(*y))).collect();
            let b: Vec<LabeledPair> = v.iter().enumerate().map(|(i, (x, y))| LabeledPair::new(i.to_string(), name(perm[*x as usize]), name(perm[*y as usize]))).collect();
            prop_assert!((cohen_kappa(&a).unwrap().value - cohen_kappa(&b).unwrap().value).abs() < 1e-12);
            let ra: Vec<Vec<String>> = v.iter().map(|(x, y)| vec![name(*x), name(*y)]).collect();
            let rb: Vec<Vec<String>> = v.iter().map(|(x, y)| vec![name(perm[*x as usize]), name(perm[*y as usize])]).collect();
            prop_assert!((fleiss_kappa(&ra).unwrap().value - fleiss_kappa(&rb).unwrap().value).abs() < 1e-12);
        }

        #[test]
        fn perfect_accuracy_iff_kappa_one(v in labels_strategy()) {
            let gold: Vec<String> = v.iter().map(|(x, _)| format!("L{x}")).collect();
            prop_assume!(gold.iter().collect::<BTreeSet<_>>().len() >= 2);
            let pred: Vec<String> = v.iter().map(|(x, y)| format!("L{}", if y % 2 == 0 { *x } else { *y })).collect();
            let pairs: Vec<LabeledPair> = gold.iter().zip(&pred).enumerate().map(|(i, (g, p))| LabeledPair::new(i.to_string(), g, p)).collect();
            let acc = accuracy(&pairs).unwrap();
            let k = cohen_kappa(&pairs).unwrap().value;
            prop_assert_eq!(acc == 100.0, (k - 1.0).abs() < 1e-12);
        }

        #[test]
        fn confusion_rows_sum(v in labels_strategy()) {
            let t = Taxonomy::from_labels(&["L0", "L1", "L2", "L3"]).unwrap();
            let pairs: Vec<LabeledPair> = v.iter().enumerate().map(|(i, (x, y))| LabeledPair::new(i.to_string(), format!("L{x}"), format!("L{y}"))).collect();
            let c = confusion(&pairs, &t).unwrap();
            for (i, row) in c.counts.iter().enumerate() {
                let support = v.iter().filter(|(x, _)| *x as usize == i).count() as u64;
                prop_assert_eq!(row.iter().sum::<u64>(), support);
                let s: f64 = c.row_normalized[i].iter().sum();
                let ok = if support == 0 { s == 0.0 } else { (s - 100.0).abs() < 1e-6 };
                prop_assert!(ok);
            }
        }

        #[test]
        fn sample_size_is_seed_free(sizes in prop::collection::vec(1usize..60, 1..6), s1 in any::<u64>(), s2 in any::<u64>()) {
            let named: Vec<(String, usize)> = sizes.iter().enumerate().map(|(i, n)| (format!("c{i}"), *n)).collect();
            let refs: Vec<(&str, usize)> = named.iter().map(|(l, n)| (l.as_str(), *n)).collect();
            let labels = hist(&refs);
            let a = stratified_gold_sample(&labels, 0.3, 2, s1).unwrap();
            let b = stratified_gold_sample(&labels, 0.3, 2, s2).unwrap();
            prop_assert_eq!(a.len(), b.len());
            prop_assert_eq!(a, stratified_gold_sample(&labels, 0.3, 2, s1).unwrap());
        }
    }
}

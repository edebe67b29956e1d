//! Corpus data model: explanations, taxonomies, annotations and dependency parses.

mod conllu;
mod taxonomy;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conllu::{load_conllu, parse_conllu, serialize_conllu, ParsedExplanation, Token};
pub use taxonomy::{default_taxonomy, load_taxonomy, parse_taxonomy, Taxonomy, TaxonomyEntry, DEFAULT_TAXONOMY};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate explanation id `{0}`")]
    DuplicateId(String),
    #[error("cannot merge explanation text: action and justification are both empty")]
    EmptyMerge,
    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),
    #[error("CoNLL-U sentence {sentence} (line {line}): {message}")]
    Conllu {
        sentence: usize,
        line: usize,
        message: String,
    },
    #[error("annotation record {index}: {message}")]
    Annotation { index: usize, message: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, CorpusError> {
    let mut buf = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(|e| CorpusError::io(path, e))?;
    Ok(buf)
}

/// One merged action + justification explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub id: String,
    pub text: String,
    #[serde(rename = "label", default, skip_serializing_if = "Option::is_none")]
    pub context_label: Option<String>,
}

impl Explanation {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Explanation {
            id: id.into(),
            text: text.into(),
            context_label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.context_label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// Join an action and its justification into one explanation string.
///
/// Both sides are trimmed and joined by a single space; an empty side is dropped.
pub fn merge_text(action: &str, justification: &str) -> Result<String, CorpusError> {
    let action = action.trim();
    let justification = justification.trim();
    match (action.is_empty(), justification.is_empty()) {
        (true, true) => Err(CorpusError::EmptyMerge),
        (false, true) => Ok(action.to_string()),
        (true, false) => Ok(justification.to_string()),
        (false, false) => Ok(format!("{action} {justification}")),
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<serde_json::Value>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    action: Option<String>,
    #[serde(default)]
    justification: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

fn record_to_explanation(raw: RawRecord, line: usize) -> Result<Explanation, CorpusError> {
    let malformed = |message: &str| CorpusError::Malformed {
        line,
        message: message.to_string(),
    };
    let id = match raw.id {
        Some(serde_json::Value::String(s)) => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(_) => return Err(malformed("`id` must be a string or number")),
        None => return Err(malformed("missing `id`")),
    };
    let id = id.trim().to_string();
    if id.is_empty() {
        return Err(malformed("empty `id`"));
    }
    let text = match raw.text.as_deref().map(str::trim) {
        Some(t) if !t.is_empty() => t.to_string(),
        _ => {
            let action = raw.action.unwrap_or_default();
            let justification = raw.justification.unwrap_or_default();
            merge_text(&action, &justification)
                .map_err(|_| malformed("record has neither `text` nor `action`/`justification`"))?
        }
    };
    let context_label = raw.label.map(|l| l.trim().to_string()).filter(|l| !l.is_empty());
    Ok(Explanation {
        id,
        text,
        context_label,
    })
}

fn check_unique(explanations: &[Explanation]) -> Result<(), CorpusError> {
    let mut seen = HashSet::with_capacity(explanations.len());
    for e in explanations {
        if !seen.insert(e.id.as_str()) {
            return Err(CorpusError::DuplicateId(e.id.clone()));
        }
    }
    Ok(())
}

/// Parse JSONL explanation records. Blank lines are ignored.
pub fn parse_explanations_jsonl<R: BufRead>(reader: R) -> Result<Vec<Explanation>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(record_to_explanation(raw, line_no)?);
    }
    check_unique(&out)?;
    Ok(out)
}

/// Parse CSV explanation records with a header row using the JSONL field names.
pub fn parse_explanations_csv<R: Read>(reader: R) -> Result<Vec<Explanation>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CorpusError::Malformed {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .and_then(|i| record.get(i))
                .map(str::to_string)
        };
        let raw = RawRecord {
            id: field("id").map(serde_json::Value::String),
            text: field("text"),
            action: field("action"),
            justification: field("justification"),
            label: field("label"),
        };
        out.push(record_to_explanation(raw, line)?);
    }
    check_unique(&out)?;
    Ok(out)
}

pub fn load_explanations(path: &Path, format: CorpusFormat) -> Result<Vec<Explanation>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_explanations_jsonl(BufReader::new(file)),
        CorpusFormat::Csv => parse_explanations_csv(file),
    }
}

/// Descriptive statistics over whitespace-delimited word counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    /// Rounded to one decimal; absent for an empty corpus.
    pub mean_words: Option<f64>,
    pub median_words: Option<f64>,
}

pub fn corpus_stats(corpus: &[Explanation]) -> CorpusStats {
    let mut counts: Vec<usize> = corpus.iter().map(|e| e.text.split_whitespace().count()).collect();
    if counts.is_empty() {
        return CorpusStats {
            count: 0,
            mean_words: None,
            median_words: None,
        };
    }
    counts.sort_unstable();
    let n = counts.len();
    let mean = counts.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    CorpusStats {
        count: n,
        mean_words: Some((mean * 10.0).round() / 10.0),
        median_words: Some(median),
    }
}

/// Map explanation id to its context label, for labelled explanations only.
pub fn label_map(corpus: &[Explanation]) -> BTreeMap<String, String> {
    corpus
        .iter()
        .filter_map(|e| e.context_label.as_ref().map(|l| (e.id.clone(), l.clone())))
        .collect()
}

/// A single rater's label for one explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub explanation_id: String,
    pub annotator_id: String,
    pub label: String,
}

/// Check label membership and `(explanation_id, annotator_id)` uniqueness.
pub fn validate_annotations(records: &[AnnotationRecord], taxonomy: &Taxonomy) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for (index, r) in records.iter().enumerate() {
        if !taxonomy.contains(&r.label) {
            return Err(CorpusError::Annotation {
                index: index + 1,
                message: format!("label `{}` is not in the taxonomy", r.label),
            });
        }
        if !seen.insert((r.explanation_id.as_str(), r.annotator_id.as_str())) {
            return Err(CorpusError::Annotation {
                index: index + 1,
                message: format!(
                    "duplicate annotation for `{}` by `{}`",
                    r.explanation_id, r.annotator_id
                ),
            });
        }
    }
    Ok(())
}

/// Load an annotation export (CSV with a header, or a JSON array / JSONL of records)
/// and validate it against the taxonomy.
pub fn load_annotations(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let records = if is_csv {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut out = Vec::new();
        for (i, rec) in rdr.deserialize::<AnnotationRecord>().enumerate() {
            out.push(rec.map_err(|e| CorpusError::Annotation {
                index: i + 1,
                message: e.to_string(),
            })?);
        }
        out
    } else {
        let text = read_to_string(path)?;
        let trimmed = text.trim_start();
        if trimmed.starts_with('[') {
            serde_json::from_str(trimmed).map_err(|e| CorpusError::Annotation {
                index: 0,
                message: e.to_string(),
            })?
        } else {
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                out.push(serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?);
            }
            out
        }
    };
    validate_annotations(&records, taxonomy)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn merge_text_cases() {
        assert_eq!(
            merge_text("The car stops", "because the light is red").unwrap(),
            "The car stops because the light is red"
        );
        assert_eq!(merge_text("The car merges left", "").unwrap(), "The car merges left");
        assert_eq!(merge_text("", " slows ").unwrap(), "slows");
        assert_eq!(merge_text("  A  ", " B ").unwrap(), "A B");
        assert!(matches!(merge_text(" ", ""), Err(CorpusError::EmptyMerge)));
    }

    #[test]
    fn jsonl_keeps_order_and_merges() {
        let data = r#"{"id":"a","text":"The car stops"}
{"id":"b","action":"The car slows down","justification":"because traffic ahead stops"}

{"id":3,"text":"  Turns left ","label":"Intersection Traversal"}
"#;
        let ex = parse_explanations_jsonl(Cursor::new(data)).unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[0].id, "a");
        assert_eq!(ex[1].text, "The car slows down because traffic ahead stops");
        assert_eq!(ex[2].id, "3");
        assert_eq!(ex[2].text, "Turns left");
        assert_eq!(ex[2].context_label.as_deref(), Some("Intersection Traversal"));
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let data = "{\"id\":\"a\",\"text\":\"x\"}\n{not json}\n";
        match parse_explanations_jsonl(Cursor::new(data)) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let data = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n";
        match parse_explanations_jsonl(Cursor::new(data)) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let data = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        match parse_explanations_jsonl(Cursor::new(data)) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_records() {
        let data = "id,action,justification,label\nx1,The car stops,because the light is red,Traffic Signal Compliance\nx2,Turns,,\n";
        let ex = parse_explanations_csv(Cursor::new(data)).unwrap();
        assert_eq!(ex[0].text, "The car stops because the light is red");
        assert_eq!(ex[1].text, "Turns");
        assert_eq!(ex[1].context_label, None);
        let bad = "id,text\nx1,\n";
        assert!(matches!(
            parse_explanations_csv(Cursor::new(bad)),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn stats() {
        let corpus = vec![Explanation::new("1", "a b"), Explanation::new("2", "a b c d")];
        let s = corpus_stats(&corpus);
        assert_eq!(s.count, 2);
        assert_eq!(s.mean_words, Some(3.0));
        assert_eq!(s.median_words, Some(3.0));
        let s = corpus_stats(&[Explanation::new("1", "stop")]);
        assert_eq!((s.count, s.mean_words, s.median_words), (1, Some(1.0), Some(1.0)));
        let s = corpus_stats(&[]);
        assert_eq!((s.count, s.mean_words, s.median_words), (0, None, None));
    }
}

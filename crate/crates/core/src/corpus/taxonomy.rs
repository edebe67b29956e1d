use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, CorpusError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub label: String,
    pub definition: String,
}

/// The closed, ordered label space used for classification and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Taxonomy {
    pub version: String,
    #[serde(rename = "entry")]
    entries: Vec<TaxonomyEntry>,
}

#[derive(Deserialize)]
struct TaxonomyFile {
    #[serde(default)]
    version: Option<String>,
    #[serde(default)]
    entry: Vec<TaxonomyEntry>,
}

impl Taxonomy {
    pub fn new(version: impl Into<String>, entries: Vec<TaxonomyEntry>) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::Taxonomy("taxonomy has no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.label.trim().is_empty() {
                return Err(CorpusError::Taxonomy("empty label".into()));
            }
            if e.definition.trim().is_empty() {
                return Err(CorpusError::Taxonomy(format!(
                    "label `{}` has an empty definition",
                    e.label
                )));
            }
            if !seen.insert(e.label.as_str()) {
                return Err(CorpusError::Taxonomy(format!("duplicate label `{}`", e.label)));
            }
        }
        Ok(Taxonomy {
            version: version.into(),
            entries,
        })
    }

    /// Convenience constructor for tests and tools: one generic definition per label.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self, CorpusError> {
        let entries = labels
            .iter()
            .map(|l| TaxonomyEntry {
                label: l.as_ref().to_string(),
                definition: format!("Explanations about {}.", l.as_ref().to_lowercase()),
            })
            .collect();
        Taxonomy::new("adhoc", entries)
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.label == label)
    }
}

/// Parse the TOML taxonomy format:
///
/// ```toml
/// version = "1"
/// [[entry]]
/// label = "Pedestrian Interaction"
/// definition = "..."
/// ```
pub fn parse_taxonomy(text: &str) -> Result<Taxonomy, CorpusError> {
    let file: TaxonomyFile = toml::from_str(text).map_err(|e| CorpusError::Taxonomy(e.to_string()))?;
    Taxonomy::new(file.version.unwrap_or_else(|| "unversioned".into()), file.entry)
}

/// The bundled 32-entry driving-context taxonomy.
pub const DEFAULT_TAXONOMY: &str = include_str!("../../data/taxonomy.toml");

pub fn default_taxonomy() -> Taxonomy {
    parse_taxonomy(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, CorpusError> {
    parse_taxonomy(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_is_legal() {
        let t = parse_taxonomy("[[entry]]\nlabel = \"A\"\ndefinition = \"first\"\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.version, "unversioned");
    }

    #[test]
    fn duplicate_label_rejected() {
        let text = r#"
version = "x"
[[entry]]
label = "Pedestrian Interaction"
definition = "a"
[[entry]]
label = "Pedestrian Interaction"
definition = "b"
"#;
        let err = parse_taxonomy(text).unwrap_err();
        assert!(err.to_string().contains("duplicate label"), "{err}");
    }

    #[test]
    fn empty_definition_rejected() {
        let text = "[[entry]]\nlabel = \"A\"\ndefinition = \"  \"\n";
        assert!(parse_taxonomy(text).is_err());
        assert!(parse_taxonomy("version = \"1\"\n").is_err());
    }

    #[test]
    fn labels_are_case_sensitive() {
        let t = Taxonomy::from_labels(&["Merge", "merge"]).unwrap();
        assert_eq!(t.index_of("merge"), Some(1));
        assert!(!t.contains("MERGE"));
    }
}

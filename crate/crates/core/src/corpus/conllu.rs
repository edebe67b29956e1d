//! CoNLL-U reading and writing.
//!
//! Each sentence block must carry a `# sent_id = <explanation id>` comment.
//! Multiword token ranges (`3-4`) and empty nodes (`5.1`) are skipped.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, CorpusError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub surface: String,
    pub lemma: String,
    pub upos: String,
    /// Index of the governor, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedExplanation {
    pub explanation_id: String,
    pub tokens: Vec<Token>,
}

impl ParsedExplanation {
    /// Build and validate a parse. Tokens must be indexed `1..=n` in order.
    pub fn new(explanation_id: impl Into<String>, tokens: Vec<Token>) -> Result<Self, String> {
        let p = ParsedExplanation {
            explanation_id: explanation_id.into(),
            tokens,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn root(&self) -> usize {
        self.tokens
            .iter()
            .find(|t| t.head == 0)
            .map(|t| t.index)
            .expect("validated parse has a root")
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    /// Indices of the subtree rooted at `index` (inclusive), ascending.
    pub fn subtree(&self, index: usize) -> Vec<usize> {
        let mut out = vec![index];
        let mut i = 0;
        while i < out.len() {
            let h = out[i];
            out.extend(self.tokens.iter().filter(|t| t.head == h).map(|t| t.index));
            i += 1;
        }
        out.sort_unstable();
        out
    }

    /// `(first, last)` token index covered by a subtree.
    pub fn subtree_extent(&self, index: usize) -> (usize, usize) {
        let s = self.subtree(index);
        (s[0], s[s.len() - 1])
    }

    /// True if `ancestor` dominates `index` (or equals it).
    pub fn dominates(&self, ancestor: usize, mut index: usize) -> bool {
        while index != 0 {
            if index == ancestor {
                return true;
            }
            index = self.token(index).head;
        }
        false
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tokens.is_empty() {
            return Err("sentence has no tokens".into());
        }
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(format!(
                    "token indices must be contiguous from 1 (found {} at position {})",
                    t.index,
                    i + 1
                ));
            }
            if t.head > n {
                return Err(format!("token {} has head {} outside the sentence", t.index, t.head));
            }
            if t.deprel.is_empty() {
                return Err(format!("token {} has an empty deprel", t.index));
            }
        }
        let roots: Vec<usize> = self.tokens.iter().filter(|t| t.head == 0).map(|t| t.index).collect();
        match roots.len() {
            0 => return Err("no root token (head = 0)".into()),
            1 => {}
            _ => return Err(format!("multiple roots: tokens {roots:?}")),
        }
        for t in &self.tokens {
            // Walk up at most n steps; a longer walk means a cycle.
            let mut cur = t.index;
            let mut steps = 0;
            while cur != 0 {
                cur = self.tokens[cur - 1].head;
                steps += 1;
                if steps > n {
                    return Err(format!("cyclic head chain through token {}", t.index));
                }
            }
        }
        Ok(())
    }
}

fn conllu_err(sentence: usize, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Conllu {
        sentence,
        line,
        message: message.into(),
    }
}

/// Parse CoNLL-U text into one `ParsedExplanation` per sentence block.
pub fn parse_conllu(text: &str) -> Result<Vec<ParsedExplanation>, CorpusError> {
    let mut out = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut tokens: Vec<Token> = Vec::new();
    let mut sentence = 1;
    let mut block_start = 1;

    let mut finish = |sent_id: &mut Option<String>,
                      tokens: &mut Vec<Token>,
                      sentence: &mut usize,
                      block_start: usize|
     -> Result<(), CorpusError> {
        if tokens.is_empty() && sent_id.is_none() {
            return Ok(());
        }
        let id = sent_id
            .take()
            .ok_or_else(|| conllu_err(*sentence, block_start, "missing `# sent_id` comment"))?;
        let parse =
            ParsedExplanation::new(id, std::mem::take(tokens)).map_err(|m| conllu_err(*sentence, block_start, m))?;
        out.push(parse);
        *sentence += 1;
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut sent_id, &mut tokens, &mut sentence, block_start)?;
            block_start = line_no + 1;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(conllu_err(
                sentence,
                line_no,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| conllu_err(sentence, line_no, format!("bad token id `{}`", cols[0])))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| conllu_err(sentence, line_no, format!("bad head `{}`", cols[6])))?;
        tokens.push(Token {
            index,
            surface: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }
    finish(&mut sent_id, &mut tokens, &mut sentence, block_start)?;
    Ok(out)
}

pub fn load_conllu(path: &Path) -> Result<Vec<ParsedExplanation>, CorpusError> {
    parse_conllu(&read_to_string(path)?)
}

/// Write parses as CoNLL-U; columns not modelled here are emitted as `_`.
pub fn serialize_conllu(parses: &[ParsedExplanation]) -> String {
    let mut out = String::new();
    for p in parses {
        let _ = writeln!(out, "# sent_id = {}", p.explanation_id);
        let text: Vec<&str> = p.tokens.iter().map(|t| t.surface.as_str()).collect();
        let _ = writeln!(out, "# text = {}", text.join(" "));
        for t in &p.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.surface, t.lemma, t.upos, t.head, t.deprel
            );
        }
        out.push('\n');
    }
    out
}

//! Documents, mentions and candidate lists, plus the file formats they live in.
//!
//! A corpus file is JSON lines, one document per line:
//!
//! ```text
//! {"doc_id": "d1", "tokens": ["..."], "mentions": [{"start": 0, "end": 1,
//!   "surface": "...", "gold": "E1" | null, "candidates": [{"entity": "E1", "prior": 0.7}]}]}
//! ```
//!
//! Loading validates spans, priors and candidate counts, sorts mentions by
//! start offset and candidates by descending prior (ties by entity id).
//! Mentions whose gold entity is missing from their candidates are kept but
//! flagged unlinkable; they are excluded from loss and F1.

mod embeddings;
mod priors;
mod select;
mod synth;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::Embeddings;
pub use priors::PriorTable;
pub use select::{CandidateSelector, CONTEXT_WINDOW, KEEP_BY_CONTEXT, KEEP_BY_PRIOR, PRE_CANDIDATES};
pub use synth::{gen_synthetic, SynthOutput, SynthSpec};

/// Upper bound on candidates per mention after selection.
pub const MAX_CANDIDATES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity: String,
    pub prior: f64,
}

impl Candidate {
    pub fn new(entity: impl Into<String>, prior: f64) -> Self {
        Self { entity: entity.into(), prior }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub gold: Option<String>,
    pub candidates: Vec<Candidate>,
}

impl Mention {
    /// Position of the gold entity in the candidate list.
    pub fn gold_index(&self) -> Option<usize> {
        let gold = self.gold.as_deref()?;
        self.candidates.iter().position(|c| c.entity == gold)
    }

    /// Gold is a KB entity that candidate selection failed to retrieve.
    pub fn is_unlinkable(&self) -> bool {
        self.gold.is_some() && self.gold_index().is_none()
    }

    /// Counted by the loss and by micro F1.
    pub fn is_scored(&self) -> bool {
        self.gold_index().is_some()
    }

    pub fn priors(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.prior).collect()
    }
}

/// Candidate order used everywhere: prior descending, then entity id ascending.
pub(crate) fn sort_candidates(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| b.prior.total_cmp(&a.prior).then_with(|| a.entity.cmp(&b.entity)));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

impl Document {
    pub fn scored_mentions(&self) -> usize {
        self.mentions.iter().filter(|m| m.is_scored()).count()
    }

    fn normalize_and_validate(&mut self) -> std::result::Result<(), String> {
        for (i, m) in self.mentions.iter_mut().enumerate() {
            if m.start >= m.end || m.end > self.tokens.len() {
                return Err(format!(
                    "mention {i} span [{}, {}) out of bounds for {} tokens",
                    m.start,
                    m.end,
                    self.tokens.len()
                ));
            }
            if m.candidates.len() > MAX_CANDIDATES {
                return Err(format!("mention {i} has {} candidates (max {MAX_CANDIDATES})", m.candidates.len()));
            }
            let mut seen = HashSet::new();
            for c in &m.candidates {
                if !(0.0..=1.0).contains(&c.prior) {
                    return Err(format!("mention {i}: prior {} for {} outside [0, 1]", c.prior, c.entity));
                }
                if !seen.insert(c.entity.as_str()) {
                    return Err(format!("mention {i}: duplicate candidate {}", c.entity));
                }
            }
            sort_candidates(&mut m.candidates);
        }
        self.mentions.sort_by_key(|m| m.start);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Self { documents }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.documents.iter().map(|d| d.mentions.len()).sum()
    }

    pub fn scored_mentions(&self) -> usize {
        self.documents.iter().map(Document::scored_mentions).sum()
    }

    pub fn unlinkable_mentions(&self) -> usize {
        self.documents.iter().flat_map(|d| &d.mentions).filter(|m| m.is_unlinkable()).count()
    }

    /// Consecutive split by fractions of the document count; the last part
    /// takes the remainder.
    pub fn split(&self, fractions: &[f64]) -> Vec<Corpus> {
        let n = self.documents.len();
        let mut out = Vec::with_capacity(fractions.len());
        let mut start = 0;
        for (i, f) in fractions.iter().enumerate() {
            let end = if i + 1 == fractions.len() { n } else { (start + (f * n as f64).round() as usize).min(n) };
            out.push(Corpus::new(self.documents[start..end].to_vec()));
            start = end;
        }
        out
    }

    /// Parses JSON lines. `origin` only labels error messages.
    pub fn from_reader(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut documents = Vec::new();
        let mut ids = HashSet::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { path: origin.to_path_buf(), line: lineno + 1, msg };
            let mut doc: Document = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            doc.normalize_and_validate().map_err(parse_err)?;
            if !ids.insert(doc.doc_id.clone()) {
                return Err(parse_err(format!("duplicate doc_id {:?}", doc.doc_id)));
            }
            documents.push(doc);
        }
        Ok(Self { documents })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for doc in &self.documents {
            serde_json::to_writer(&mut w, doc)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_reader(BufReader::new(file), path)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    corpus.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Corpus> {
        Corpus::from_reader(s.as_bytes(), Path::new("test.jsonl"))
    }

    const TWO_MENTIONS: &str = r#"{"doc_id":"d1","tokens":["England","beat","Germany","today"],"mentions":[{"start":2,"end":3,"surface":"Germany","gold":"Germany_national_team","candidates":[{"entity":"Germany","prior":0.8},{"entity":"Germany_national_team","prior":0.2}]},{"start":0,"end":1,"surface":"England","gold":"England_team","candidates":[{"entity":"England","prior":0.9}]}]}"#;

    #[test]
    fn loads_one_document_with_two_mentions() {
        let c = parse(TWO_MENTIONS).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.mention_count(), 2);
        let doc = &c.documents[0];
        assert_eq!(doc.mentions[0].surface, "England", "mentions sorted by start");
    }

    #[test]
    fn gold_missing_from_candidates_is_flagged_not_dropped() {
        let c = parse(TWO_MENTIONS).unwrap();
        let england = &c.documents[0].mentions[0];
        assert!(england.is_unlinkable());
        assert!(!england.is_scored());
        assert_eq!(c.scored_mentions(), 1);
        assert_eq!(c.unlinkable_mentions(), 1);
    }

    #[test]
    fn nil_gold_is_neither_scored_nor_unlinkable() {
        let line = r#"{"doc_id":"d","tokens":["a"],"mentions":[{"start":0,"end":1,"surface":"a","gold":null,"candidates":[{"entity":"A","prior":1.0}]}]}"#;
        let m = &parse(line).unwrap().documents[0].mentions[0];
        assert!(!m.is_scored());
        assert!(!m.is_unlinkable());
    }

    #[test]
    fn empty_input_is_an_empty_corpus() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n").unwrap().is_empty());
    }

    #[test]
    fn candidates_are_sorted_by_prior_then_id() {
        let line = r#"{"doc_id":"d","tokens":["a"],"mentions":[{"start":0,"end":1,"surface":"a","gold":"B","candidates":[{"entity":"C","prior":0.2},{"entity":"B","prior":0.4},{"entity":"A","prior":0.4}]}]}"#;
        let m = &parse(line).unwrap().documents[0].mentions[0];
        let ids: Vec<_> = m.candidates.iter().map(|c| c.entity.as_str()).collect();
        assert_eq!(ids, ["A", "B", "C"]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let input = format!("{TWO_MENTIONS}\n{{not json");
        match parse(&input) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_spans() {
        let dup = format!("{TWO_MENTIONS}\n{TWO_MENTIONS}");
        assert!(matches!(parse(&dup), Err(Error::Parse { line: 2, .. })));

        let oob = r#"{"doc_id":"d","tokens":["a"],"mentions":[{"start":0,"end":2,"surface":"a","gold":null,"candidates":[]}]}"#;
        let err = parse(oob).unwrap_err().to_string();
        assert!(err.contains("out of bounds"), "{err}");

        let bad_prior = r#"{"doc_id":"d","tokens":["a"],"mentions":[{"start":0,"end":1,"surface":"a","gold":null,"candidates":[{"entity":"A","prior":1.5}]}]}"#;
        assert!(parse(bad_prior).is_err());
    }

    #[test]
    fn overlapping_mentions_are_allowed() {
        let line = r#"{"doc_id":"d","tokens":["New","York","City"],"mentions":[{"start":0,"end":3,"surface":"New York City","gold":"NYC","candidates":[{"entity":"NYC","prior":1.0}]},{"start":0,"end":2,"surface":"New York","gold":"NYC","candidates":[{"entity":"NYC","prior":0.6},{"entity":"NY_state","prior":0.4}]}]}"#;
        assert_eq!(parse(line).unwrap().mention_count(), 2);
    }

    #[test]
    fn jsonl_round_trip() {
        let c = parse(TWO_MENTIONS).unwrap();
        let again = parse(&c.to_jsonl()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn split_covers_all_documents() {
        let docs = (0..10)
            .map(|i| Document { doc_id: format!("d{i}"), tokens: vec![], mentions: vec![] })
            .collect();
        let parts = Corpus::new(docs).split(&[0.6, 0.2, 0.2]);
        assert_eq!(parts.iter().map(Corpus::len).collect::<Vec<_>>(), [6, 2, 2]);
    }
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{sort_candidates, Candidate};
use crate::error::{Error, Result};

/// Mention-surface to entity prior `p(e|m)`, read from a TSV file with lines
/// `surface \t entity \t prior`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorTable {
    entries: BTreeMap<String, Vec<Candidate>>,
}

impl PriorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, entity: &str, prior: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::Invalid(format!("prior {prior} for ({surface}, {entity}) outside [0, 1]")));
        }
        let list = self.entries.entry(surface.to_string()).or_default();
        if list.iter().any(|c| c.entity == entity) {
            return Err(Error::Invalid(format!("duplicate prior entry ({surface}, {entity})")));
        }
        list.push(Candidate::new(entity, prior));
        sort_candidates(list);
        Ok(())
    }

    /// Candidates for `surface`, sorted by descending prior then entity id.
    pub fn get(&self, surface: &str) -> Option<&[Candidate]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno + 1, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            let [surface, entity, prior] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let prior: f64 = prior.parse().map_err(|e| err(format!("bad prior {prior:?}: {e}")))?;
            table.insert(surface, entity, prior).map_err(|e| err(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for (surface, list) in &self.entries {
            for c in list {
                writeln!(w, "{surface}\t{}\t{}", c.entity, c.prior).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

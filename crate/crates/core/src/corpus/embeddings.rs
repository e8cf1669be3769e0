use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense lookup table from string keys (words or entity ids) to vectors.
///
/// Values are kept on the `f32` grid so the text and checkpoint formats
/// reproduce them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    keys: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Self { keys: Vec::new(), index: HashMap::new(), dim, data: Vec::new() }
    }

    /// Builds a table from parallel keys and row-major data.
    pub fn from_parts(keys: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != keys.len() * dim {
            return Err(Error::Invalid(format!(
                "embedding data has {} values, expected {} x {dim}",
                data.len(),
                keys.len()
            )));
        }
        let mut table = Self::new(dim);
        for (k, row) in keys.into_iter().zip(data.chunks_exact(dim.max(1))) {
            table.insert(k, row)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, key: String, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Invalid(format!("vector for {key:?} has dim {}, expected {}", vector.len(), self.dim)));
        }
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!("embedding key {key:?} is empty or contains whitespace")));
        }
        if self.index.contains_key(&key) {
            return Err(Error::Invalid(format!("duplicate embedding key {key:?}")));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend(vector.iter().map(|&v| v as f32 as f64));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn id(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.id(key).map(|i| self.row(i))
    }

    /// Reads the whitespace-separated text format: `key v1 v2 ... vd` per line.
    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<Embeddings> = None;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno + 1, msg };
            let mut fields = line.split_whitespace();
            let Some(key) = fields.next() else { continue };
            let values = fields
                .map(|f| f.parse::<f32>().map(f64::from).map_err(|e| err(format!("bad value {f:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            let t = table.get_or_insert_with(|| Embeddings::new(values.len()));
            t.insert(key.to_string(), &values).map_err(|e| err(e.to_string()))?;
        }
        Ok(table.unwrap_or_else(|| Embeddings::new(0)))
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for (i, key) in self.keys.iter().enumerate() {
            write!(w, "{key}").map_err(io)?;
            for v in self.row(i) {
                write!(w, " {}", *v as f32).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_format_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let mut t = Embeddings::new(3);
        t.insert("paris".into(), &[0.1, -2.5, 1.0 / 3.0]).unwrap();
        t.insert("berlin".into(), &[1e-8, 0.0, 7.25]).unwrap();
        t.save_text(&path).unwrap();
        let back = Embeddings::load_text(&path).unwrap();
        assert_eq!(t, back);
        assert_eq!(back.get("berlin").unwrap()[2], 7.25);
        assert!(back.get("rome").is_none());
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "a 1 2 3\nb 1 2\n").unwrap();
        assert!(matches!(Embeddings::load_text(&path), Err(Error::Parse { line: 2, .. })));
    }
}

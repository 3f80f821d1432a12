use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::layers::EmbeddingTable;

/// Width of the pretrained word vectors the models are configured for.
pub const DEFAULT_EMBEDDING_DIM: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    /// Vocabulary tokens with no vector in the file; they map to the unknown row.
    pub missing: Vec<String>,
}

impl LoadedEmbeddings {
    /// Fraction of the requested vocabulary found in the file (1 for an
    /// empty vocabulary).
    pub fn coverage(&self) -> f64 {
        let found = self.table.len() - 2;
        let total = found + self.missing.len();
        if total == 0 {
            1.0
        } else {
            found as f64 / total as f64
        }
    }
}

/// Reads `token v₁ … v_dim` lines, keeping vectors for `vocab` tokens in
/// file order. Every line's width is checked, kept or not.
pub fn load_embeddings<R: BufRead>(reader: R, vocab: &BTreeSet<String>, dim: usize, source: &str) -> Result<LoadedEmbeddings> {
    let mut rows = Vec::new();
    let mut found = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let at = || format!("{source}:{}", i + 1);
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(Error::format(at(), format!("vector for {token:?} has {} values, expected {dim}", values.len())));
        }
        if !vocab.contains(token) || found.contains(token) {
            continue;
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f32>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| Error::format(at(), format!("vector for {token:?} has a non-numeric value")))?;
        found.insert(token.to_owned());
        rows.push((token.to_owned(), vector));
    }
    let missing = vocab.iter().filter(|t| !found.contains(*t)).cloned().collect();
    Ok(LoadedEmbeddings { table: EmbeddingTable::from_rows(dim, rows)?, missing })
}

/// Writes rows in the same text format (shortest round-tripping decimals).
pub fn write_embeddings<W: Write>(mut w: W, rows: &[(String, Vec<f32>)]) -> std::io::Result<()> {
    for (token, vector) in rows {
        write!(w, "{token}")?;
        for v in vector {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Writes every known token of a table (pad and unk excluded).
pub fn write_table<W: Write>(w: W, table: &EmbeddingTable) -> std::io::Result<()> {
    let rows: Vec<(String, Vec<f32>)> = table
        .tokens()
        .iter()
        .enumerate()
        .skip(2)
        .map(|(i, t)| (t.clone(), table.vectors().row(i).to_vec()))
        .collect();
    write_embeddings(w, &rows)
}

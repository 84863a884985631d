//! Persistence and validation for embedding matrices, noun lexicons and
//! label vectors.
//!
//! Embedding matrices use the `EMB1` binary layout:
//!
//! | offset | size    | content                                  |
//! |--------|---------|------------------------------------------|
//! | 0      | 4       | ASCII magic `EMB1`                       |
//! | 4      | 4       | `n` (u32, little-endian)                 |
//! | 8      | 4       | `d` (u32, little-endian)                 |
//! | 12     | 1       | normalized flag (0 or 1)                 |
//! | 13     | 3       | zero padding                             |
//! | 16     | 4·n·d   | f32 little-endian values, row-major      |
//!
//! Lexicons are a JSON-lines sidecar (one JSON string per line, in row
//! order) next to the `EMB1` file holding their embeddings. Labels are a
//! plain JSON array of integers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: usize = 16;

/// Row norm tolerance for matrices flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("row {0} has zero norm")]
    DegenerateRow(usize),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Dense row-major matrix of `n` rows of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds a matrix and checks every invariant, including the unit-norm
    /// claim when `normalized` is set.
    pub fn new(n: usize, d: usize, data: Vec<f32>, normalized: bool) -> Result<Self, StoreError> {
        if n == 0 || d == 0 {
            return Err(StoreError::Data(format!(
                "matrix must have n >= 1 and d >= 1 (got n={n}, d={d})"
            )));
        }
        if data.len() != n * d {
            return Err(StoreError::Data(format!(
                "expected {} values for a {n}x{d} matrix, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::Data(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / d,
                pos % d
            )));
        }
        let m = EmbeddingMatrix {
            n,
            d,
            data,
            normalized,
        };
        if normalized {
            for i in 0..n {
                let norm = m.row_norm(i);
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(StoreError::Data(format!(
                        "row {i} has norm {norm} but matrix is flagged normalized"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Builds a matrix from rows, setting the normalized flag when every
    /// row already has unit norm.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self, StoreError> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(StoreError::Data(format!(
                    "row {i} has length {} but row 0 has length {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        let mut m = EmbeddingMatrix::new(n, d, data, false)?;
        m.normalized = (0..n).all(|i| (m.row_norm(i) - 1.0).abs() <= NORM_TOLERANCE);
        Ok(m)
    }

    /// Builds a matrix from f64 rows, rounding to f32.
    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self, StoreError> {
        let rows: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f32).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.d)
    }

    /// Row `i` widened to f64.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    /// Whole matrix widened to f64, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i)
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// New matrix containing the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, StoreError> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(StoreError::Data(format!(
                    "row index {i} out of range for {} rows",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix::new(indices.len(), self.d, data, self.normalized)
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Scales every row to unit L2 norm.
pub fn normalize_rows(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, StoreError> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.rows().enumerate() {
        let norm = m.row_norm(i);
        if norm == 0.0 {
            return Err(StoreError::DegenerateRow(i));
        }
        data.extend(row.iter().map(|&v| ((v as f64) / norm) as f32));
    }
    EmbeddingMatrix::new(m.n, m.d, data, true)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, StoreError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| StoreError::io(path, e))?;
    decode_embeddings(&bytes)
}

/// Parses an in-memory `EMB1` image.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, StoreError> {
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(StoreError::Format(format!(
            "bad magic {:?}, expected \"EMB1\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let normalized = match bytes[12] {
        0 => false,
        1 => true,
        other => return Err(StoreError::Format(format!("bad normalized flag {other}"))),
    };
    if bytes[13..16] != [0, 0, 0] {
        return Err(StoreError::Format("non-zero header padding".into()));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| StoreError::Format(format!("header size {n}x{d} overflows")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(StoreError::Format(format!(
            "payload is {} bytes, header {n}x{d} requires {expected}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(n, d, data, normalized)
}

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.n as u32).to_le_bytes());
    out.extend_from_slice(&(m.d as u32).to_le_bytes());
    out.push(m.normalized as u8);
    out.extend_from_slice(&[0, 0, 0]);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    std::fs::write(path, encode_embeddings(m)).map_err(|e| StoreError::io(path, e))
}

/// Ordered noun strings paired row-for-row with their embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct NounLexicon {
    nouns: Vec<String>,
    embeddings: EmbeddingMatrix,
}

impl NounLexicon {
    pub fn new(nouns: Vec<String>, embeddings: EmbeddingMatrix) -> Result<Self, StoreError> {
        if nouns.len() != embeddings.n() {
            return Err(StoreError::Data(format!(
                "{} nouns but {} embedding rows",
                nouns.len(),
                embeddings.n()
            )));
        }
        let mut seen = HashSet::with_capacity(nouns.len());
        for (i, noun) in nouns.iter().enumerate() {
            if noun.is_empty() {
                return Err(StoreError::Data(format!("noun {i} is empty")));
            }
            if !seen.insert(noun.as_str()) {
                return Err(StoreError::Data(format!("duplicate noun {noun:?}")));
            }
        }
        Ok(NounLexicon { nouns, embeddings })
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }

    /// Sub-lexicon with the given entries, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, StoreError> {
        let embeddings = self.embeddings.select_rows(indices)?;
        let nouns = indices.iter().map(|&i| self.nouns[i].clone()).collect();
        NounLexicon::new(nouns, embeddings)
    }

    pub fn with_embeddings(&self, embeddings: EmbeddingMatrix) -> Result<Self, StoreError> {
        NounLexicon::new(self.nouns.clone(), embeddings)
    }
}

/// `foo.emb` → `foo.jsonl`.
pub fn lexicon_sidecar_path(emb_path: impl AsRef<Path>) -> PathBuf {
    emb_path.as_ref().with_extension("jsonl")
}

pub fn read_nouns(path: impl AsRef<Path>) -> Result<Vec<String>, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut nouns = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let noun: String = serde_json::from_str(&line).map_err(|e| {
            StoreError::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        nouns.push(noun);
    }
    Ok(nouns)
}

pub fn write_nouns(nouns: &[String], path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| StoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for noun in nouns {
        let line = serde_json::to_string(noun).expect("string serialization cannot fail");
        writeln!(w, "{line}").map_err(|e| StoreError::io(path, e))?;
    }
    w.flush().map_err(|e| StoreError::io(path, e))
}

/// Reads `emb_path` and its `.jsonl` sidecar.
pub fn read_lexicon(emb_path: impl AsRef<Path>) -> Result<NounLexicon, StoreError> {
    let emb_path = emb_path.as_ref();
    let embeddings = read_embeddings(emb_path)?;
    let nouns = read_nouns(lexicon_sidecar_path(emb_path))?;
    NounLexicon::new(nouns, embeddings)
}

pub fn write_lexicon(lex: &NounLexicon, emb_path: impl AsRef<Path>) -> Result<(), StoreError> {
    let emb_path = emb_path.as_ref();
    write_embeddings(&lex.embeddings, emb_path)?;
    write_nouns(&lex.nouns, lexicon_sidecar_path(emb_path))
}

/// Class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self, StoreError> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(StoreError::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabelVector {
            labels,
            num_classes,
        })
    }

    /// Infers `num_classes` as `max + 1` (1 for an empty vector).
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let num_classes = labels.iter().max().map_or(1, |m| m + 1);
        LabelVector {
            labels,
            num_classes,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    let labels: Vec<usize> = serde_json::from_str(&text)
        .map_err(|e| StoreError::Format(format!("{}: {e}", path.display())))?;
    Ok(LabelVector::from_labels(labels))
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let text = serde_json::to_string(&labels.labels).expect("integer array serializes");
    std::fs::write(path, text + "\n").map_err(|e| StoreError::io(path, e))
}

//! Fixed-width vectors for label creation and cosine similarity.
//!
//! Three backends share one trait: a seeded bag-of-words embedding, a table of
//! precomputed token vectors, and the live model encoder.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::model::{encode_token_states, Model};
use crate::rng;
use crate::tokenizer::{TokenId, Vocabulary, CLS, SEP};

/// Norms below this make a vector degenerate for similarity.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVector {
    values: Vec<f64>,
}

impl SentenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sentence vector has no entries"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sentence vector has non-finite entries"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect() }
    }

    fn mean_of<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let mut sum = alloc::vec![0.0; dim];
        let mut n = 0usize;
        for row in rows {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(invalid("cannot embed an empty token list"));
        }
        let inv = 1.0 / n as f64;
        Self::new(sum.into_iter().map(|s| s * inv).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackendKind {
    BagMean,
    PrecomputedFile,
    ModelEncoder,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::BagMean => "bag_mean",
            BackendKind::PrecomputedFile => "precomputed_file",
            BackendKind::ModelEncoder => "model_encoder",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bag_mean" => Some(BackendKind::BagMean),
            "precomputed_file" => Some(BackendKind::PrecomputedFile),
            "model_encoder" => Some(BackendKind::ModelEncoder),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBackendSpec {
    pub kind: BackendKind,
    pub dim: usize,
    /// Table path for `precomputed_file`.
    pub source: Option<String>,
    pub seed: u64,
}

impl EmbeddingBackendSpec {
    pub fn bag_mean(dim: usize, seed: u64) -> Self {
        Self { kind: BackendKind::BagMean, dim, source: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        if self.kind == BackendKind::PrecomputedFile && self.source.is_none() {
            return Err(invalid("precomputed_file backend needs a source path"));
        }
        Ok(())
    }
}

pub trait EmbeddingBackend {
    fn dim(&self) -> usize;

    /// Mean vector of `tokens`; errors on an empty list.
    fn embed_tokens(&self, tokens: &[String]) -> Result<SentenceVector>;
}

/// Each token maps to a standard-normal vector seeded by its hash.
#[derive(Clone, Debug)]
pub struct BagMean {
    dim: usize,
    seed: u64,
}

impl BagMean {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        Ok(Self { dim, seed })
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = rng::seeded(rng::splitmix(self.seed ^ rng::fnv1a(token.as_bytes())));
        (0..self.dim).map(|_| rng::standard_normal(&mut rng)).collect()
    }
}

impl EmbeddingBackend for BagMean {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<SentenceVector> {
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        SentenceVector::mean_of(rows.iter().map(Vec::as_slice), self.dim)
    }
}

/// Token vectors loaded from a `dim d` / `token<TAB>f1 .. fd` table.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedTable {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
    unk: Vec<f64>,
}

impl PrecomputedTable {
    /// Misses fall back to the `[UNK]` row when present, zeros otherwise.
    pub fn new(dim: usize, rows: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        if let Some((token, row)) = rows.iter().find(|(_, r)| r.len() != dim) {
            return Err(invalid(format!("row {token:?} has {} values, expected {dim}", row.len())));
        }
        let unk = rows.get("[UNK]").cloned().unwrap_or_else(|| alloc::vec![0.0; dim]);
        Ok(Self { dim, rows, unk })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| invalid("empty embedding table"))?;
        let dim = header
            .strip_prefix("dim ")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| invalid(format!("bad table header {header:?}, expected \"dim d\"")))?;
        let mut rows = BTreeMap::new();
        for (n, line) in lines {
            let (token, values) = line
                .split_once('\t')
                .ok_or_else(|| invalid(format!("line {}: missing tab", n + 1)))?;
            let row = values
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<core::result::Result<Vec<f64>, _>>()
                .map_err(|e| invalid(format!("line {}: {e}", n + 1)))?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("line {}: non-finite value", n + 1)));
            }
            rows.insert(token.to_string(), row);
        }
        Self::new(dim, rows)
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.rows.get(token).unwrap_or(&self.unk)
    }
}

impl EmbeddingBackend for PrecomputedTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<SentenceVector> {
        SentenceVector::mean_of(tokens.iter().map(|t| self.lookup(t)), self.dim)
    }
}

/// Mean of the current encoder's states over `[CLS] tokens [SEP]`, specials excluded.
pub struct ModelEncoderBackend<'a> {
    pub model: &'a Model,
    pub vocab: &'a Vocabulary,
}

impl EmbeddingBackend for ModelEncoderBackend<'_> {
    fn dim(&self) -> usize {
        self.model.config.d_model
    }

    fn embed_tokens(&self, tokens: &[String]) -> Result<SentenceVector> {
        if tokens.is_empty() {
            return Err(invalid("cannot embed an empty token list"));
        }
        let room = self.model.config.max_len.saturating_sub(2).max(1);
        let mut ids: Vec<TokenId> = alloc::vec![CLS];
        ids.extend(tokens.iter().take(room).map(|t| self.vocab.id(t)));
        ids.push(SEP);
        let states = encode_token_states(&ids, self.model)?;
        let body = (1..ids.len() - 1).map(|r| states.row(r));
        SentenceVector::mean_of(body, self.dim())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// Set when either vector is (numerically) zero and `value` was forced to 0.
    pub degenerate: bool,
}

pub fn cosine_similarity(u: &SentenceVector, v: &SentenceVector) -> Result<Similarity> {
    if u.dim() != v.dim() {
        return Err(Error::InvalidArgument(format!("dimension mismatch: {} vs {}", u.dim(), v.dim())));
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    let nu = libm::sqrt(u.values.iter().map(|a| a * a).sum());
    let nv = libm::sqrt(v.values.iter().map(|b| b * b).sum());
    if nu < DEGENERATE_NORM || nv < DEGENERATE_NORM {
        return Ok(Similarity { value: 0.0, degenerate: true });
    }
    Ok(Similarity { value: (dot / (nu * nv)).clamp(-1.0, 1.0), degenerate: false })
}

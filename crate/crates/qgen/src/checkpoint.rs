//! Versioned checkpoint container.
//!
//! Layout: `QGCK`, format version (u32 LE), header length (u64 LE), a JSON
//! header, then every tensor's values as f32 LE in header order.

use std::path::Path;

use qgen_core::model::{Conditioning, Model, ModelConfig, Parameters};
use qgen_core::tensor::Matrix;
use qgen_core::tokenizer::Vocabulary;
use qgen_core::training::{TrainMode, TrainedModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, parse_err, Error, Result};
use crate::formats::vocab_to_string;

pub const MAGIC: &[u8; 4] = b"QGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfigRecord {
    pub vocab_size: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub selector_hidden: usize,
    pub dropout: f64,
    pub conditioning: String,
}

impl From<&ModelConfig> for ModelConfigRecord {
    fn from(c: &ModelConfig) -> Self {
        Self {
            vocab_size: c.vocab_size,
            d_model: c.d_model,
            encoder_layers: c.encoder_layers,
            decoder_layers: c.decoder_layers,
            heads: c.heads,
            ff_dim: c.ff_dim,
            max_len: c.max_len,
            selector_hidden: c.selector_hidden,
            dropout: c.dropout,
            conditioning: c.conditioning.as_str().to_string(),
        }
    }
}

impl ModelConfigRecord {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let conditioning = Conditioning::parse(&self.conditioning)
            .ok_or_else(|| Error::Config(format!("unknown conditioning {:?}", self.conditioning)))?;
        Ok(ModelConfig {
            vocab_size: self.vocab_size,
            d_model: self.d_model,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            heads: self.heads,
            ff_dim: self.ff_dim,
            max_len: self.max_len,
            selector_hidden: self.selector_hidden,
            dropout: self.dropout,
            conditioning,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    model_config: ModelConfigRecord,
    vocab_sha256: String,
    steps: u64,
    seed: u64,
    mode: String,
    tensors: Vec<TensorEntry>,
}

/// Everything needed to decode: generator, optional two-step selector, metadata.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub generator: Model,
    pub selector: Option<Model>,
    pub mode: TrainMode,
    pub steps: u64,
    pub seed: u64,
    pub vocab_sha256: String,
}

pub fn vocab_hash(vocab: &Vocabulary) -> String {
    hex::encode(Sha256::digest(vocab_to_string(vocab).as_bytes()))
}

impl Checkpoint {
    pub fn from_trained(trained: &TrainedModel, vocab: &Vocabulary, seed: u64) -> Self {
        Self {
            generator: trained.generator.clone(),
            selector: trained.selector.clone(),
            mode: trained.mode,
            steps: trained.steps,
            seed,
            vocab_sha256: vocab_hash(vocab),
        }
    }

    fn groups(&self) -> Vec<(&'static str, &Model)> {
        let mut out = vec![("generator", &self.generator)];
        if let Some(s) = &self.selector {
            out.push(("selector", s));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        for (group, model) in self.groups() {
            for (name, m) in model.params.iter() {
                tensors.push(TensorEntry { group: group.into(), name: name.into(), rows: m.rows(), cols: m.cols() });
                for &v in m.data() {
                    data.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            model_config: ModelConfigRecord::from(&self.generator.config),
            vocab_sha256: self.vocab_sha256.clone(),
            steps: self.steps,
            seed: self.seed,
            mode: self.mode.as_str().into(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let bad = |detail: String| parse_err(origin, detail);
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a qgen checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < header_len {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| bad(e.to_string()))?;
        let config = header.model_config.to_config()?;
        let mode = TrainMode::parse(&header.mode).ok_or_else(|| bad(format!("unknown mode {:?}", header.mode)))?;
        let mut data = &body[header_len..];
        let mut generator = Vec::new();
        let mut selector = Vec::new();
        for t in &header.tensors {
            let n = t.rows * t.cols;
            if data.len() < 4 * n {
                return Err(bad(format!("truncated tensor {}", t.name)));
            }
            let values = data[..4 * n]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            data = &data[4 * n..];
            let m = Matrix::from_vec(t.rows, t.cols, values)?;
            match t.group.as_str() {
                "generator" => generator.push((t.name.clone(), m)),
                "selector" => selector.push((t.name.clone(), m)),
                g => return Err(bad(format!("unknown tensor group {g:?}"))),
            }
        }
        if !data.is_empty() {
            return Err(bad(format!("{} trailing bytes", data.len())));
        }
        let generator = Model::from_parameters(config.clone(), Parameters::from_named(generator))?;
        let selector = if selector.is_empty() {
            None
        } else {
            Some(Model::from_parameters(config, Parameters::from_named(selector))?)
        };
        if (mode == TrainMode::TwoStep) != selector.is_some() {
            return Err(bad("selector tensors do not match the training mode".into()));
        }
        Ok(Self { generator, selector, mode, steps: header.steps, seed: header.seed, vocab_sha256: header.vocab_sha256 })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    /// Loads and checks the checkpoint against the vocabulary it was trained with.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let ck = Self::from_bytes(&bytes, &path.display().to_string())?;
        if ck.vocab_sha256 != vocab_hash(vocab) {
            return Err(parse_err(path.display().to_string(), "vocabulary hash does not match"));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { d_model: 8, heads: 2, ff_dim: 16, selector_hidden: 4, encoder_layers: 1, decoder_layers: 1, max_len: 16, ..ModelConfig::desk(12) }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn round_trip_rounds_to_f32() {
        let model = Model::init(tiny(), 3).unwrap();
        let ck = Checkpoint {
            generator: model.clone(),
            selector: Some(Model::init(tiny(), 4).unwrap()),
            mode: TrainMode::TwoStep,
            steps: 9,
            seed: 3,
            vocab_sha256: vocab_hash(&vocab()),
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes(), "mem").unwrap();
        assert_eq!(back.steps, 9);
        assert_eq!(back.generator.config, tiny());
        for ((_, a), (_, b)) in model.params.iter().zip(back.generator.params.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*y, f64::from(*x as f32));
            }
        }
        // A second trip is exact.
        assert_eq!(Checkpoint::from_bytes(&back.to_bytes(), "mem").unwrap().to_bytes(), back.to_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let ck = Checkpoint {
            generator: Model::init(tiny(), 3).unwrap(),
            selector: None,
            mode: TrainMode::Joint,
            steps: 0,
            seed: 3,
            vocab_sha256: vocab_hash(&vocab()),
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], "m").is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong, "m").is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, "m").is_err());
    }
}

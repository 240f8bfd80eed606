//! Experiment configuration (TOML) and its translation into core configs.

use std::path::{Path, PathBuf};

use qgen_core::decoding::DecodeConfig;
use qgen_core::embedding::{BackendKind, EmbeddingBackendSpec};
use qgen_core::model::{Conditioning, ModelConfig};
use qgen_core::training::{TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, parse_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// SQuAD-format JSON.
    pub data: PathBuf,
    /// Parent of run directories.
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Share of contexts held out for testing; 0 keeps everything for training.
    pub test_fraction: f64,
    /// Split that is decoded and scored: "test" or "train".
    pub eval_split: String,
    pub max_len: usize,
    pub vocab_size: usize,
    pub min_freq: usize,
    /// Keep only the first `limit` examples after loading.
    pub limit: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { test_fraction: 0.1, eval_split: "test".into(), max_len: 256, vocab_size: 20_000, min_freq: 1, limit: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub selector_hidden: usize,
    pub dropout: f64,
    pub conditioning: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::desk(1);
        Self {
            d_model: d.d_model,
            encoder_layers: d.encoder_layers,
            decoder_layers: d.decoder_layers,
            heads: d.heads,
            ff_dim: d.ff_dim,
            selector_hidden: d.selector_hidden,
            dropout: d.dropout,
            conditioning: d.conditioning.as_str().into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub mode: String,
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Relevance top-k and the selector fallback.
    pub k: usize,
    pub max_question_len: usize,
    pub refresh_labels: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: t.mode.as_str().into(),
            lambda: t.lambda,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            batch_size: t.batch_size,
            k: t.k,
            max_question_len: t.max_question_len,
            refresh_labels: t.refresh_labels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSection {
    pub beam_size: usize,
    pub length_alpha: f64,
    pub max_len: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self { beam_size: 3, length_alpha: 0.7, max_len: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub backend: String,
    pub dim: usize,
    /// Token vector table for the precomputed_file backend.
    pub source: Option<PathBuf>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self { backend: "bag_mean".into(), dim: 512, source: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub k_list: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { k_list: vec![1, 2, 3, 4, 5] }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub beam: Option<usize>,
    pub backend: Option<String>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Minimal config around a data file, every other field at its default.
    pub fn with_data(data: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            paths: Paths { data: data.into(), out: default_out() },
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            decode: DecodeSection::default(),
            embedding: EmbeddingSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| parse_err(origin, e))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.paths.data = base.join(&config.paths.data);
        config.paths.out = base.join(&config.paths.out);
        if let Some(src) = &config.embedding.source {
            config.embedding.source = Some(base.join(src));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.mode {
            self.train.mode = v.clone();
        }
        if let Some(v) = o.k {
            self.train.k = v;
        }
        if let Some(v) = &o.k_list {
            self.sweep.k_list = v.clone();
        }
        if let Some(v) = o.lambda {
            self.train.lambda = v;
        }
        if let Some(v) = o.beam {
            self.decode.beam_size = v;
        }
        if let Some(v) = &o.backend {
            self.embedding.backend = v.clone();
        }
        if let Some(v) = &o.out {
            self.paths.out = v.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.train_mode()?;
        self.backend_kind()?;
        self.conditioning()?;
        self.train_config()?.validate()?;
        self.model_config(16)?.validate()?;
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            return Err(Error::Config("data.test_fraction must lie in [0, 1)".into()));
        }
        if !matches!(self.data.eval_split.as_str(), "train" | "test") {
            return Err(Error::Config(format!("unknown eval_split {:?}", self.data.eval_split)));
        }
        if self.data.eval_split == "test" && self.data.test_fraction == 0.0 {
            return Err(Error::Config("eval_split = \"test\" needs test_fraction > 0".into()));
        }
        if self.decode.beam_size == 0 || self.decode.max_len == 0 {
            return Err(Error::Config("decode.beam_size and decode.max_len must be positive".into()));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding.dim must be positive".into()));
        }
        if self.sweep.k_list.contains(&0) {
            return Err(Error::Config("k_list entries must be positive".into()));
        }
        Ok(())
    }

    pub fn train_mode(&self) -> Result<TrainMode> {
        TrainMode::parse(&self.train.mode).ok_or_else(|| Error::Config(format!("unknown mode {:?}", self.train.mode)))
    }

    pub fn backend_kind(&self) -> Result<BackendKind> {
        BackendKind::parse(&self.embedding.backend)
            .ok_or_else(|| Error::Config(format!("unknown backend {:?}", self.embedding.backend)))
    }

    fn conditioning(&self) -> Result<Conditioning> {
        Conditioning::parse(&self.model.conditioning)
            .ok_or_else(|| Error::Config(format!("unknown conditioning {:?}", self.model.conditioning)))
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let m = &self.model;
        Ok(ModelConfig {
            vocab_size,
            d_model: m.d_model,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            heads: m.heads,
            ff_dim: m.ff_dim,
            max_len: self.data.max_len.max(self.train.max_question_len),
            selector_hidden: m.selector_hidden,
            dropout: m.dropout,
            conditioning: self.conditioning()?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        Ok(TrainConfig {
            lambda: t.lambda,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seed,
            mode: self.train_mode()?,
            k: t.k,
            max_question_len: t.max_question_len,
            refresh_labels: t.refresh_labels,
        })
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            max_len: self.decode.max_len,
            beam_size: self.decode.beam_size,
            length_alpha: self.decode.length_alpha,
            ..DecodeConfig::default()
        }
    }

    pub fn embedding_spec(&self) -> Result<EmbeddingBackendSpec> {
        let spec = EmbeddingBackendSpec {
            kind: self.backend_kind()?,
            dim: self.embedding.dim,
            source: self.embedding.source.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 over the canonical JSON of everything but the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_core_defaults() {
        let c = ExperimentConfig::from_toml("[paths]\ndata = \"d.json\"\n", "t").unwrap();
        let t = c.train_config().unwrap();
        assert_eq!(t, TrainConfig { seed: 0, ..TrainConfig::default() });
        assert_eq!(c.model_config(50).unwrap(), ModelConfig::desk(50));
        assert_eq!(c.sweep.k_list, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn overrides_and_validation() {
        let mut c = ExperimentConfig::with_data("d.json");
        c.apply(&Overrides { mode: Some("two_step".into()), k: Some(2), ..Overrides::default() }).unwrap();
        assert_eq!(c.train_mode().unwrap(), TrainMode::TwoStep);
        assert!(c.apply(&Overrides { mode: Some("nope".into()), ..Overrides::default() }).is_err());
        let mut c = ExperimentConfig::with_data("d.json");
        assert!(c.apply(&Overrides { lambda: Some(1.5), ..Overrides::default() }).is_err());
        assert!(ExperimentConfig::from_toml("[paths]\ndata = \"d\"\n[train]\nbogus = 1\n", "t").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::with_data("d.json");
        let mut b = a.clone();
        b.paths.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toml_round_trip() {
        let a = ExperimentConfig::with_data("d.json");
        assert_eq!(ExperimentConfig::from_toml(&a.to_toml(), "t").unwrap(), a);
    }
}

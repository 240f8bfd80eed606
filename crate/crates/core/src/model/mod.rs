//! Transformer encoder-decoder with a sentence selector head.
//!
//! The encoder reads `[CLS] context [SEP] answer [SEP]`; per-sentence vectors
//! are the mean of each sentence's final token states; the selector maps each
//! sentence vector through two feed-forward layers to a relevance
//! probability; the decoder generates the question autoregressively while
//! attending to the encoder (all token states, or only the pooled vector).

mod forward;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use forward::{
    decoder_log_probs, decoder_step, encode_token_states, encoder_forward,
    reconstruct_sentence_vectors, selector_forward, selector_logits_eval, Dropout, EncoderOutput,
};
pub(crate) use forward::GraphModel;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::tensor::Matrix;

/// How the decoder sees the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Conditioning {
    /// Cross-attention over the single pooled vector.
    Pooled,
    /// Cross-attention over every non-pad encoder token state.
    TokenAttention,
}

impl Conditioning {
    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::Pooled => "pooled",
            Conditioning::TokenAttention => "token_attention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pooled" => Some(Conditioning::Pooled),
            "token_attention" => Some(Conditioning::TokenAttention),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub selector_hidden: usize,
    pub dropout: f64,
    pub conditioning: Conditioning,
}

impl ModelConfig {
    /// Desk-scale defaults for a given vocabulary size.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ff_dim: 256,
            max_len: 256,
            selector_hidden: 128,
            dropout: 0.1,
            conditioning: Conditioning::TokenAttention,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("max_len", self.max_len),
            ("selector_hidden", self.selector_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(invalid("d_model must be divisible by heads"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Number of question-type classes of the auxiliary head.
pub const QUESTION_TYPES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl Parameters {
    pub fn from_named(named: Vec<(String, Matrix)>) -> Self {
        let (names, tensors) = named.into_iter().unzip();
        Self { names, tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub input: Linear,
    pub output: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderBlock {
    pub attn_norm: Norm,
    pub attn: Attention,
    pub ff_norm: Norm,
    pub ff: FeedForward,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderBlock {
    pub self_norm: Norm,
    pub self_attn: Attention,
    pub cross_norm: Norm,
    pub cross_attn: Attention,
    pub ff_norm: Norm,
    pub ff: FeedForward,
}

/// Two feed-forward layers with a ReLU between them.
#[derive(Clone, Copy, Debug)]
pub struct Head {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Clone, Debug)]
pub struct Layout {
    pub token_embed: ParamId,
    pub position_embed: ParamId,
    pub segment_embed: ParamId,
    pub encoder: Vec<EncoderBlock>,
    pub encoder_norm: Norm,
    pub decoder_position: ParamId,
    pub decoder: Vec<DecoderBlock>,
    pub decoder_norm: Norm,
    /// The generator's output projection.
    pub output: Linear,
    pub selector: Head,
    pub qtc: Head,
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    Embedding,
    Xavier,
}

struct LayoutBuilder {
    specs: Vec<(String, usize, usize, Init)>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> ParamId {
        self.specs.push((name, rows, cols, init));
        ParamId(self.specs.len() - 1)
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            weight: self.add(format!("{prefix}.weight"), fan_in, fan_out, Init::Xavier),
            bias: self.add(format!("{prefix}.bias"), 1, fan_out, Init::Zeros),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gain: self.add(format!("{prefix}.gain"), 1, d, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, d, Init::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Attention {
        Attention {
            query: self.linear(&format!("{prefix}.query"), d, d),
            key: self.linear(&format!("{prefix}.key"), d, d),
            value: self.linear(&format!("{prefix}.value"), d, d),
            output: self.linear(&format!("{prefix}.output"), d, d),
        }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, ff: usize) -> FeedForward {
        FeedForward {
            input: self.linear(&format!("{prefix}.in"), d, ff),
            output: self.linear(&format!("{prefix}.out"), ff, d),
        }
    }

    fn head(&mut self, prefix: &str, d: usize, hidden: usize, out: usize) -> Head {
        Head {
            hidden: self.linear(&format!("{prefix}.hidden"), d, hidden),
            output: self.linear(&format!("{prefix}.out"), hidden, out),
        }
    }
}

fn build_layout(config: &ModelConfig) -> (Layout, Vec<(String, usize, usize, Init)>) {
    let d = config.d_model;
    let mut b = LayoutBuilder { specs: Vec::new() };
    let token_embed = b.add("embed.token".into(), config.vocab_size, d, Init::Embedding);
    let position_embed = b.add("embed.position".into(), config.max_len, d, Init::Embedding);
    let segment_embed = b.add("embed.segment".into(), 2, d, Init::Embedding);
    let encoder = (0..config.encoder_layers)
        .map(|l| EncoderBlock {
            attn_norm: b.norm(&format!("encoder.{l}.attn_norm"), d),
            attn: b.attention(&format!("encoder.{l}.attn"), d),
            ff_norm: b.norm(&format!("encoder.{l}.ff_norm"), d),
            ff: b.feed_forward(&format!("encoder.{l}.ff"), d, config.ff_dim),
        })
        .collect();
    let encoder_norm = b.norm("encoder.final_norm", d);
    let decoder_position = b.add("decoder.position".into(), config.max_len, d, Init::Embedding);
    let decoder = (0..config.decoder_layers)
        .map(|l| DecoderBlock {
            self_norm: b.norm(&format!("decoder.{l}.self_norm"), d),
            self_attn: b.attention(&format!("decoder.{l}.self_attn"), d),
            cross_norm: b.norm(&format!("decoder.{l}.cross_norm"), d),
            cross_attn: b.attention(&format!("decoder.{l}.cross_attn"), d),
            ff_norm: b.norm(&format!("decoder.{l}.ff_norm"), d),
            ff: b.feed_forward(&format!("decoder.{l}.ff"), d, config.ff_dim),
        })
        .collect();
    let decoder_norm = b.norm("decoder.final_norm", d);
    let output = b.linear("output", d, config.vocab_size);
    let selector = b.head("selector", d, config.selector_hidden, 1);
    let qtc = b.head("qtc", d, config.selector_hidden, QUESTION_TYPES);
    let layout = Layout {
        token_embed,
        position_embed,
        segment_embed,
        encoder,
        encoder_norm,
        decoder_position,
        decoder,
        decoder_norm,
        output,
        selector,
        qtc,
    };
    (layout, b.specs)
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Parameters,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(&config);
        let mut rng = rng::seeded(rng::derive(seed, "init"));
        let named = specs
            .into_iter()
            .map(|(name, rows, cols, init)| {
                let scale = match init {
                    Init::Zeros => 0.0,
                    Init::Ones => 1.0,
                    Init::Embedding => 1.0 / libm::sqrt(config.d_model as f64),
                    Init::Xavier => libm::sqrt(2.0 / (rows + cols) as f64),
                };
                let data = match init {
                    Init::Zeros | Init::Ones => alloc::vec![scale; rows * cols],
                    Init::Embedding | Init::Xavier => (0..rows * cols)
                        .map(|_| scale * rng::standard_normal(&mut rng))
                        .collect(),
                };
                (name, Matrix::from_vec(rows, cols, data).expect("sized"))
            })
            .collect();
        Ok(Self { config, layout, params: Parameters::from_named(named) })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parameters(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = build_layout(&config);
        if specs.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, rows, cols, _), (found, m)) in specs.iter().zip(params.iter()) {
            if name != found || (*rows, *cols) != m.shape() {
                return Err(Error::Shape(format!(
                    "tensor {found} {:?} does not match layout entry {name} ({rows}, {cols})",
                    m.shape()
                )));
            }
        }
        if !params.is_finite() {
            return Err(invalid("parameters contain non-finite values"));
        }
        Ok(Self { config, layout, params })
    }

    /// Names of every tensor in layout order.
    pub fn parameter_names(config: &ModelConfig) -> Vec<String> {
        build_layout(config).1.into_iter().map(|s| s.0).collect()
    }
}

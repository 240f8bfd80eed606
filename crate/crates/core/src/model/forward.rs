use alloc::format;
use alloc::vec::Vec;

use super::{Attention, Conditioning, FeedForward, Head, Linear, Model, Norm, ParamId};
use crate::autograd::{log_softmax, softmax, AttentionMask, Graph, Var};
use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Matrix;
use crate::tokenizer::{ModelInput, TokenId, BOS, PAD};

/// Inverted dropout with its own random stream.
pub struct Dropout {
    pub rate: f64,
    pub rng: SeededRng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate, rng: crate::rng::seeded(seed) }
    }

    fn mask(&mut self, len: usize) -> Vec<f64> {
        use rand::Rng;
        let keep = 1.0 / (1.0 - self.rate);
        (0..len)
            .map(|_| if self.rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect()
    }
}

pub(crate) struct Encoded {
    pub states: Var,
    pub pooled: Var,
    pub valid: Vec<bool>,
}

/// Builds forward passes of one [`Model`] onto a fresh [`Graph`].
pub(crate) struct GraphModel<'a> {
    pub graph: Graph,
    pub model: &'a Model,
    dropout: Option<&'a mut Dropout>,
}

impl<'a> GraphModel<'a> {
    pub fn new(model: &'a Model, dropout: Option<&'a mut Dropout>) -> Self {
        let dropout = dropout.filter(|d| d.rate > 0.0);
        Self { graph: Graph::new(), model, dropout }
    }

    fn p(&mut self, id: ParamId) -> Var {
        self.graph.param(id.0, self.model.params.get(id))
    }

    fn linear(&mut self, l: Linear, x: Var) -> Var {
        let w = self.p(l.weight);
        let b = self.p(l.bias);
        let xw = self.graph.matmul(x, w);
        self.graph.add_row(xw, b)
    }

    fn norm(&mut self, n: Norm, x: Var) -> Var {
        let g = self.p(n.gain);
        let b = self.p(n.bias);
        self.graph.layer_norm(x, g, b)
    }

    fn drop(&mut self, x: Var) -> Var {
        match self.dropout.as_deref_mut() {
            Some(d) => {
                let mask = d.mask(self.graph.value(x).len());
                self.graph.dropout(x, mask)
            }
            None => x,
        }
    }

    fn attention(&mut self, a: Attention, q_in: Var, kv_in: Var, mask: &AttentionMask) -> Var {
        let heads = self.model.config.heads;
        let dh = self.model.config.d_model / heads;
        let q = self.linear(a.query, q_in);
        let k = self.linear(a.key, kv_in);
        let v = self.linear(a.value, kv_in);
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.graph.slice_cols(q, h * dh, dh),
                    self.graph.slice_cols(k, h * dh, dh),
                    self.graph.slice_cols(v, h * dh, dh),
                )
            };
            let scores = self.graph.matmul_t(qh, kh);
            let scores = self.graph.scale(scores, scale);
            let weights = self.graph.masked_softmax(scores, mask);
            outs.push(self.graph.matmul(weights, vh));
        }
        let joined = if heads == 1 { outs[0] } else { self.graph.concat_cols(&outs) };
        self.linear(a.output, joined)
    }

    fn feed_forward(&mut self, f: FeedForward, x: Var) -> Var {
        let h = self.linear(f.input, x);
        let h = self.graph.gelu(h);
        self.linear(f.output, h)
    }

    fn check(&self, x: Var, stage: &'static str, layer: usize) -> Result<()> {
        if self.graph.value(x).is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { stage, layer })
        }
    }

    /// Pre-norm encoder over `ids`; PAD positions neither attend nor are attended.
    pub fn encode(&mut self, ids: &[TokenId], segments: &[u8]) -> Result<Encoded> {
        let cfg = &self.model.config;
        if ids.is_empty() {
            return Err(invalid("empty encoder input"));
        }
        if ids.len() > cfg.max_len {
            return Err(invalid(format!("input length {} exceeds max_len {}", ids.len(), cfg.max_len)));
        }
        if let Some(bad) = ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(invalid(format!("token id {bad} outside the vocabulary")));
        }
        let valid: Vec<bool> = ids.iter().map(|&t| t != PAD).collect();
        if !valid.iter().any(|&v| v) {
            return Err(invalid("encoder input is all padding"));
        }
        let layout = &self.model.layout;
        let (tok, pos, seg) = (layout.token_embed, layout.position_embed, layout.segment_embed);
        let blocks = layout.encoder.clone();
        let final_norm = layout.encoder_norm;

        let idx: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let segs: Vec<usize> = segments.iter().map(|&s| usize::from(s.min(1))).collect();
        let tok = self.p(tok);
        let pos = self.p(pos);
        let seg = self.p(seg);
        let e = self.graph.gather_rows(tok, &idx);
        let pe = self.graph.gather_rows(pos, &positions);
        let se = self.graph.gather_rows(seg, &segs);
        let x = self.graph.add(e, pe);
        let x = self.graph.add(x, se);
        let mut x = self.drop(x);

        let mask = AttentionMask::padding(&valid, &valid);
        for (l, block) in blocks.iter().enumerate() {
            let h = self.norm(block.attn_norm, x);
            let a = self.attention(block.attn, h, h, &mask);
            let a = self.drop(a);
            x = self.graph.add(x, a);
            let h = self.norm(block.ff_norm, x);
            let f = self.feed_forward(block.ff, h);
            let f = self.drop(f);
            x = self.graph.add(x, f);
            self.check(x, "encoder", l)?;
        }
        let states = self.norm(final_norm, x);
        let members: Vec<usize> = (0..ids.len()).filter(|&i| valid[i]).collect();
        let pooled = self.graph.group_mean(states, alloc::vec![members]);
        Ok(Encoded { states, pooled, valid })
    }

    pub fn encode_input(&mut self, input: &ModelInput) -> Result<Encoded> {
        self.encode(&input.token_ids, &input.answer_mask)
    }

    /// Mean of token states per sentence group.
    pub fn sentence_vectors(&mut self, states: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        if groups.is_empty() {
            return Err(Error::Invariant("input has no sentences".into()));
        }
        if let Some(i) = groups.iter().position(Vec::is_empty) {
            return Err(Error::Invariant(format!("sentence {i} has no tokens")));
        }
        Ok(self.graph.group_mean(states, groups))
    }

    pub fn head_logits(&mut self, head: Head, x: Var) -> Var {
        let h = self.linear(head.hidden, x);
        let h = self.graph.relu(h);
        self.linear(head.output, h)
    }

    /// Selector probabilities `1 / (1 + exp(o(h)))`, one row per sentence.
    pub fn selector_probs(&mut self, sentence_vectors: Var) -> Var {
        let head = self.model.layout.selector;
        let o = self.head_logits(head, sentence_vectors);
        self.graph.neg_sigmoid(o)
    }

    pub fn qtc_logits(&mut self, pooled: Var) -> Var {
        let head = self.model.layout.qtc;
        self.head_logits(head, pooled)
    }

    /// Decoder memory according to the configured conditioning.
    pub fn memory(&self, enc: &Encoded) -> (Var, Vec<bool>) {
        match self.model.config.conditioning {
            Conditioning::TokenAttention => (enc.states, enc.valid.clone()),
            Conditioning::Pooled => (enc.pooled, alloc::vec![true]),
        }
    }

    /// Next-token logits for every prefix position (`len x vocab`).
    pub fn decode(&mut self, memory: Var, memory_valid: &[bool], prefix: &[TokenId]) -> Result<Var> {
        let cfg = &self.model.config;
        if prefix.is_empty() {
            return Err(invalid("empty decoder prefix"));
        }
        if prefix.len() > cfg.max_len {
            return Err(invalid(format!("prefix length {} exceeds max_len {}", prefix.len(), cfg.max_len)));
        }
        if let Some(bad) = prefix.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(invalid(format!("token id {bad} outside the vocabulary")));
        }
        let layout = &self.model.layout;
        let (tok, pos) = (layout.token_embed, layout.decoder_position);
        let blocks = layout.decoder.clone();
        let (final_norm, output) = (layout.decoder_norm, layout.output);

        let idx: Vec<usize> = prefix.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..prefix.len()).collect();
        let tok = self.p(tok);
        let pos = self.p(pos);
        let e = self.graph.gather_rows(tok, &idx);
        let pe = self.graph.gather_rows(pos, &positions);
        let y = self.graph.add(e, pe);
        let mut y = self.drop(y);

        let causal = AttentionMask::causal(prefix.len());
        let all_queries = alloc::vec![true; prefix.len()];
        let cross = AttentionMask::padding(&all_queries, memory_valid);
        for (l, block) in blocks.iter().enumerate() {
            let h = self.norm(block.self_norm, y);
            let a = self.attention(block.self_attn, h, h, &causal);
            let a = self.drop(a);
            y = self.graph.add(y, a);
            let h = self.norm(block.cross_norm, y);
            let c = self.attention(block.cross_attn, h, memory, &cross);
            let c = self.drop(c);
            y = self.graph.add(y, c);
            let h = self.norm(block.ff_norm, y);
            let f = self.feed_forward(block.ff, h);
            let f = self.drop(f);
            y = self.graph.add(y, f);
            self.check(y, "decoder", l)?;
        }
        let h = self.norm(final_norm, y);
        Ok(self.linear(output, h))
    }
}

/// Eval-mode encoder result.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `length x d_model`, pad rows included.
    pub token_states: Matrix,
    /// `1 x d_model` mean of the non-pad rows.
    pub pooled: Matrix,
    /// `n_sentences x d_model`.
    pub sentence_vectors: Matrix,
    pub valid: Vec<bool>,
}

/// Runs the encoder in eval mode and reconstructs sentence vectors.
pub fn encoder_forward(input: &ModelInput, model: &Model) -> Result<EncoderOutput> {
    let mut gm = GraphModel::new(model, None);
    let enc = gm.encode_input(input)?;
    let sv = gm.sentence_vectors(enc.states, input.sentence_groups())?;
    Ok(EncoderOutput {
        token_states: gm.graph.value(enc.states).clone(),
        pooled: gm.graph.value(enc.pooled).clone(),
        sentence_vectors: gm.graph.value(sv).clone(),
        valid: enc.valid,
    })
}

/// Final token states for a bare id sequence (all segment 0).
pub fn encode_token_states(ids: &[TokenId], model: &Model) -> Result<Matrix> {
    let mut gm = GraphModel::new(model, None);
    let segments = alloc::vec![0u8; ids.len()];
    let enc = gm.encode(ids, &segments)?;
    Ok(gm.graph.value(enc.states).clone())
}

/// Row `i` is the mean of the token-state rows whose sentence ordinal is `i`.
pub fn reconstruct_sentence_vectors(token_states: &Matrix, sentence_index: &[i32]) -> Result<Matrix> {
    if sentence_index.len() != token_states.rows() {
        return Err(Error::Shape(format!(
            "{} sentence indices for {} token states",
            sentence_index.len(),
            token_states.rows()
        )));
    }
    let n = sentence_index.iter().copied().max().unwrap_or(-1) + 1;
    let mut groups = alloc::vec![Vec::new(); n.max(0) as usize];
    for (pos, &s) in sentence_index.iter().enumerate() {
        if s >= 0 {
            groups[s as usize].push(pos);
        }
    }
    let mut graph = Graph::new();
    let states = graph.constant(token_states.clone());
    if groups.is_empty() {
        return Err(Error::Invariant("no sentence tokens".into()));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Invariant(format!("sentence {i} has no tokens")));
    }
    let out = graph.group_mean(states, groups);
    Ok(graph.value(out).clone())
}

/// Raw selector outputs `o(h)`, one per sentence.
pub fn selector_logits_eval(sentence_vectors: &Matrix, model: &Model) -> Result<Vec<f64>> {
    if sentence_vectors.cols() != model.config.d_model || sentence_vectors.rows() == 0 {
        return Err(invalid(format!(
            "sentence vectors are {:?}, expected n x {}",
            sentence_vectors.shape(),
            model.config.d_model
        )));
    }
    let mut gm = GraphModel::new(model, None);
    let sv = gm.graph.constant(sentence_vectors.clone());
    let head = model.layout.selector;
    let o = gm.head_logits(head, sv);
    Ok(gm.graph.value(o).data().to_vec())
}

/// Per-sentence relevance probabilities.
pub fn selector_forward(sentence_vectors: &Matrix, model: &Model) -> Result<Vec<f64>> {
    if sentence_vectors.cols() != model.config.d_model || sentence_vectors.rows() == 0 {
        return Err(invalid(format!(
            "sentence vectors are {:?}, expected n x {}",
            sentence_vectors.shape(),
            model.config.d_model
        )));
    }
    let mut gm = GraphModel::new(model, None);
    let sv = gm.graph.constant(sentence_vectors.clone());
    let p = gm.selector_probs(sv);
    Ok(gm.graph.value(p).data().to_vec())
}

fn last_logits(enc: &EncoderOutput, prefix: &[TokenId], model: &Model) -> Result<Vec<f64>> {
    if prefix.first().is_some_and(|&t| t != BOS) {
        return Err(invalid("decoder prefix must start with BOS"));
    }
    let mut gm = GraphModel::new(model, None);
    let (memory, valid) = match model.config.conditioning {
        Conditioning::TokenAttention => (gm.graph.constant(enc.token_states.clone()), enc.valid.clone()),
        Conditioning::Pooled => (gm.graph.constant(enc.pooled.clone()), alloc::vec![true]),
    };
    let logits = gm.decode(memory, &valid, prefix)?;
    let m = gm.graph.value(logits);
    Ok(m.row(m.rows() - 1).to_vec())
}

/// Distribution over the vocabulary for the token following `prefix`.
pub fn decoder_step(enc: &EncoderOutput, prefix: &[TokenId], model: &Model) -> Result<Vec<f64>> {
    Ok(softmax(&last_logits(enc, prefix, model)?))
}

/// Log of [`decoder_step`], computed stably.
pub fn decoder_log_probs(enc: &EncoderOutput, prefix: &[TokenId], model: &Model) -> Result<Vec<f64>> {
    Ok(log_softmax(&last_logits(enc, prefix, model)?))
}

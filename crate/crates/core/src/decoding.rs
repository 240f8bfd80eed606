//! Greedy and beam-search decoding over any next-token scorer.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Result};
use crate::model::{decoder_log_probs, encoder_forward, EncoderOutput, Model};
use crate::tokenizer::{ModelInput, TokenId, BOS, EOS, PAD};

/// Log-probabilities of the next token given a prefix that starts with BOS.
pub trait StepScorer {
    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

/// Scores with a trained model against one encoded input.
pub struct ModelScorer<'a> {
    model: &'a Model,
    encoded: EncoderOutput,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a Model, input: &ModelInput) -> Result<Self> {
        Ok(Self { model, encoded: encoder_forward(input, model)? })
    }
}

impl StepScorer for ModelScorer<'_> {
    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        decoder_log_probs(&self.encoded, prefix, self.model)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    /// Generated-token budget (EOS included, BOS not).
    pub max_len: usize,
    pub beam_size: usize,
    /// Length-normalization exponent; 0 ranks by raw log-probability.
    pub length_alpha: f64,
    pub bos: TokenId,
    pub eos: TokenId,
    /// Ids that are never generated.
    pub banned: Vec<TokenId>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { max_len: 32, beam_size: 1, length_alpha: 0.7, bos: BOS, eos: EOS, banned: alloc::vec![PAD, BOS] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Starts with BOS.
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Generated ids, BOS dropped.
    pub fn output(&self) -> &[TokenId] {
        &self.tokens[1..]
    }

    pub fn normalized_score(&self, alpha: f64) -> f64 {
        normalized_score(self.log_prob, self.output().len(), alpha)
    }
}

/// `log_prob / len^alpha`
pub fn normalized_score(log_prob: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 || len == 0 {
        return log_prob;
    }
    log_prob / libm::pow(len as f64, alpha)
}

/// Better score first; equal scores order by the smaller id sequence.
fn rank(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    b.normalized_score(alpha)
        .total_cmp(&a.normalized_score(alpha))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn check(config: &DecodeConfig) -> Result<()> {
    if config.max_len == 0 {
        return Err(invalid("decode budget must be positive"));
    }
    if config.beam_size == 0 {
        return Err(invalid("beam size must be at least 1"));
    }
    if !config.length_alpha.is_finite() || config.length_alpha < 0.0 {
        return Err(invalid("length_alpha must be finite and non-negative"));
    }
    Ok(())
}

fn allowed(config: &DecodeConfig, id: usize, lp: f64) -> bool {
    lp > f64::NEG_INFINITY && !config.banned.contains(&(id as TokenId))
}

/// Repeated argmax (ties go to the lowest id) until EOS or the budget.
pub fn greedy_decode(scorer: &dyn StepScorer, config: &DecodeConfig) -> Result<Hypothesis> {
    check(config)?;
    let mut hyp = Hypothesis { tokens: alloc::vec![config.bos], log_prob: 0.0, finished: false };
    while hyp.output().len() < config.max_len {
        let lp = scorer.log_probs(&hyp.tokens)?;
        let mut best: Option<(usize, f64)> = None;
        for (id, &v) in lp.iter().enumerate() {
            if allowed(config, id, v) && best.is_none_or(|(_, b)| v > b) {
                best = Some((id, v));
            }
        }
        let Some((id, v)) = best else { break };
        hyp.tokens.push(id as TokenId);
        hyp.log_prob += v;
        if id as TokenId == config.eos {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

/// Beam search keeping `beam_size` live hypotheses by cumulative log-probability.
///
/// Hypotheses that emit EOS within the top `beam_size` candidates of a step
/// retire to a pool; live hypotheses still running when the budget is spent
/// join it. The greedy hypothesis is scored as well, so pruning can never
/// return something worse than greedy. The result is the pool's best under
/// length normalization.
pub fn beam_search_decode(scorer: &dyn StepScorer, config: &DecodeConfig) -> Result<Hypothesis> {
    check(config)?;
    let alpha = config.length_alpha;
    let mut live = alloc::vec![Hypothesis { tokens: alloc::vec![config.bos], log_prob: 0.0, finished: false }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    let mut exhausted = true;
    for _ in 0..config.max_len {
        let mut candidates = Vec::new();
        for hyp in &live {
            let lp = scorer.log_probs(&hyp.tokens)?;
            for (id, &v) in lp.iter().enumerate() {
                if !allowed(config, id, v) {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(id as TokenId);
                let finished = id as TokenId == config.eos;
                candidates.push(Hypothesis { tokens, log_prob: hyp.log_prob + v, finished });
            }
        }
        candidates.sort_by(|a, b| rank(a, b, 0.0));
        live.clear();
        for (position, cand) in candidates.into_iter().enumerate() {
            if cand.finished {
                if position < config.beam_size {
                    pool.push(cand);
                }
            } else if live.len() < config.beam_size {
                live.push(cand);
            } else if position >= config.beam_size {
                break;
            }
        }
        if live.is_empty() {
            break;
        }
        // Without normalization extensions can only lose probability.
        if alpha == 0.0 {
            let best_pool = pool.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
            if best_pool >= live[0].log_prob {
                exhausted = false;
                break;
            }
        }
    }
    if exhausted {
        pool.append(&mut live);
    }
    pool.push(greedy_decode(scorer, config)?);
    pool.retain(|h| h.tokens.len() > 1);
    pool.into_iter().min_by(|a, b| rank(a, b, alpha)).ok_or_else(|| invalid("no token can be generated"))
}

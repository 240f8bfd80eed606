//! Losses, AdamW, and the training loops for every mode.
//!
//! All randomness (initialization, batch order, dropout) is derived from
//! [`TrainConfig::seed`], so a run is a pure function of its inputs.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::{binary_cross_entropy, Graph, Var};
use crate::corpus::QAExample;
use crate::embedding::ModelEncoderBackend;
use crate::error::{invalid, Error, Result};
use crate::labeler::{make_relevance_labels, question_type_of, top_k_labels, QuestionType};
use crate::model::{encoder_forward, selector_forward, Dropout, GraphModel, Model, ModelConfig};
use crate::rng;
use crate::tensor::Matrix;
use crate::tokenizer::{assemble_model_input, assemble_model_input_subset, ModelInput, TokenId, Vocabulary};
use crate::tokenizer::{BOS, EOS, PAD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainMode {
    Joint,
    TwoStep,
    AuxQtc,
    GenerationOnly,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] =
        [TrainMode::Joint, TrainMode::TwoStep, TrainMode::AuxQtc, TrainMode::GenerationOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Joint => "joint",
            TrainMode::TwoStep => "two_step",
            TrainMode::AuxQtc => "aux_qtc",
            TrainMode::GenerationOnly => "generation_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: TrainMode,
    /// Fallback sentence count when the selector passes nothing.
    pub k: usize,
    /// Gold question budget in tokens, EOS included.
    pub max_question_len: usize,
    /// Recompute relevance labels with the live encoder before every epoch.
    pub refresh_labels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            mode: TrainMode::Joint,
            k: 4,
            max_question_len: 32,
            refresh_labels: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) || !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(invalid("epsilon must be positive and weight decay non-negative"));
        }
        if self.batch_size == 0 || self.k == 0 {
            return Err(invalid("batch size and k must be positive"));
        }
        if self.max_question_len < 2 {
            return Err(invalid("max_question_len must be at least 2"));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn selection_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(invalid(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    Ok(binary_cross_entropy(probs, labels))
}

/// Mean negative log-probability of the gold tokens; PAD positions are skipped.
pub fn generation_loss(distributions: &[Vec<f64>], gold: &[TokenId]) -> Result<f64> {
    if distributions.len() != gold.len() {
        return Err(invalid(format!("{} distributions for {} gold tokens", distributions.len(), gold.len())));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (dist, &g) in distributions.iter().zip(gold) {
        if g == PAD {
            continue;
        }
        let p = *dist
            .get(g as usize)
            .ok_or_else(|| invalid(format!("gold id {g} outside distribution of size {}", dist.len())))?;
        total -= libm::log(p);
        n += 1;
    }
    if n == 0 {
        return Err(invalid("no gold tokens to score"));
    }
    Ok(total / n as f64)
}

pub fn joint_loss(l_sel: f64, l_gen: f64, lambda: f64) -> f64 {
    lambda * l_sel + (1.0 - lambda) * l_gen
}

/// One example ready for training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub example: QAExample,
    pub input: ModelInput,
    /// Relevance per original sentence.
    pub labels: Vec<u8>,
    /// Gold question ids ending in EOS.
    pub target: Vec<TokenId>,
    pub qtype: QuestionType,
}

impl TrainExample {
    pub fn new(
        example: QAExample,
        labels: Vec<u8>,
        vocab: &Vocabulary,
        max_len: usize,
        max_question_len: usize,
    ) -> Result<Self> {
        if labels.len() != example.num_sentences() {
            return Err(invalid(format!(
                "{} labels for {} sentences",
                labels.len(),
                example.num_sentences()
            )));
        }
        let input = assemble_model_input(&example, vocab, max_len)?;
        let target = question_target(&example.document.question, vocab, max_question_len);
        let qtype = question_type_of(&example.document.question)?;
        Ok(Self { example, input, labels, target, qtype })
    }

    /// Labels of the sentences present in `input`, in ordinal order.
    pub fn relevance(&self) -> Vec<f64> {
        self.input.kept_sentences.iter().map(|&i| f64::from(self.labels[i])).collect()
    }

    /// Teacher-forced decoder input: BOS followed by all but the last target token.
    pub fn decoder_prefix(&self) -> Vec<TokenId> {
        let mut prefix = alloc::vec![BOS];
        prefix.extend_from_slice(&self.target[..self.target.len() - 1]);
        prefix
    }
}

/// Question ids cut to `max_question_len - 1`, then EOS.
pub fn question_target(question: &str, vocab: &Vocabulary, max_question_len: usize) -> Vec<TokenId> {
    let mut ids = vocab.encode(question);
    ids.truncate(max_question_len.saturating_sub(1));
    ids.push(EOS);
    ids
}

/// Which losses a step optimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// `λ · L_sel + (1 − λ) · L_gen`
    Joint { lambda: f64 },
    Selection,
    Generation,
    /// `λ · L_qtc + (1 − λ) · L_gen`
    AuxQtc { lambda: f64 },
}

impl Objective {
    fn weights(self) -> (f64, f64, f64) {
        match self {
            Objective::Joint { lambda } => (lambda, 1.0 - lambda, 0.0),
            Objective::Selection => (1.0, 0.0, 0.0),
            Objective::Generation => (0.0, 1.0, 0.0),
            Objective::AuxQtc { lambda } => (0.0, 1.0 - lambda, lambda),
        }
    }

    fn uses_selection(self) -> bool {
        matches!(self, Objective::Joint { .. } | Objective::Selection)
    }

    fn uses_generation(self) -> bool {
        !matches!(self, Objective::Selection)
    }

    fn uses_qtc(self) -> bool {
        matches!(self, Objective::AuxQtc { .. })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub selection: Option<f64>,
    pub generation: Option<f64>,
    pub qtc: Option<f64>,
}

fn build_loss(gm: &mut GraphModel<'_>, batch: &[&TrainExample], objective: Objective) -> Result<(Var, LossParts)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let mut sel_terms = Vec::new();
    let mut gen_terms = Vec::new();
    let mut qtc_terms = Vec::new();
    let mut sentences = 0usize;
    for ex in batch {
        let enc = gm.encode_input(&ex.input)?;
        if objective.uses_selection() {
            let relevance = ex.relevance();
            let sv = gm.sentence_vectors(enc.states, ex.input.sentence_groups())?;
            let p = gm.selector_probs(sv);
            sel_terms.push((gm.graph.bce_mean(p, &relevance), relevance.len()));
            sentences += relevance.len();
        }
        if objective.uses_generation() {
            let (memory, valid) = gm.memory(&enc);
            let logits = gm.decode(memory, &valid, &ex.decoder_prefix())?;
            let targets: Vec<usize> = ex.target.iter().map(|&t| t as usize).collect();
            gen_terms.push(gm.graph.softmax_xent_mean(logits, &targets));
        }
        if objective.uses_qtc() {
            let logits = gm.qtc_logits(enc.pooled);
            qtc_terms.push(gm.graph.softmax_xent_mean(logits, &[ex.qtype.index()]));
        }
    }
    let per_example = 1.0 / batch.len() as f64;
    let sel = (!sel_terms.is_empty()).then(|| {
        let terms: Vec<(Var, f64)> =
            sel_terms.iter().map(|&(v, n)| (v, n as f64 / sentences as f64)).collect();
        gm.graph.combine(&terms)
    });
    let mean = |graph: &mut Graph, terms: &[Var]| {
        (!terms.is_empty()).then(|| {
            let terms: Vec<(Var, f64)> = terms.iter().map(|&v| (v, per_example)).collect();
            graph.combine(&terms)
        })
    };
    let gen = mean(&mut gm.graph, &gen_terms);
    let qtc = mean(&mut gm.graph, &qtc_terms);
    let (w_sel, w_gen, w_qtc) = objective.weights();
    let mut terms = Vec::new();
    for (var, w) in [(sel, w_sel), (gen, w_gen), (qtc, w_qtc)] {
        if let Some(v) = var {
            terms.push((v, w));
        }
    }
    let total = gm.graph.combine(&terms);
    let parts = LossParts {
        total: gm.graph.scalar(total),
        selection: sel.map(|v| gm.graph.scalar(v)),
        generation: gen.map(|v| gm.graph.scalar(v)),
        qtc: qtc.map(|v| gm.graph.scalar(v)),
    };
    Ok((total, parts))
}

/// Loss of `batch` in eval mode (no dropout).
pub fn batch_loss(model: &Model, batch: &[&TrainExample], objective: Objective) -> Result<LossParts> {
    let mut gm = GraphModel::new(model, None);
    Ok(build_loss(&mut gm, batch, objective)?.1)
}

/// Loss and per-tensor gradients (`None` for tensors the loss never touched).
pub fn batch_gradients(
    model: &Model,
    batch: &[&TrainExample],
    objective: Objective,
    dropout: Option<&mut Dropout>,
) -> Result<(LossParts, Vec<Option<Matrix>>)> {
    let mut gm = GraphModel::new(model, dropout);
    let (total, parts) = build_loss(&mut gm, batch, objective)?;
    let grads = gm.graph.backward(total);
    let per_param = (0..model.params.len())
        .map(|i| gm.graph.param_var(i).and_then(|v| grads.get(v)).cloned())
        .collect();
    Ok((parts, per_param))
}

/// Adam with decoupled weight decay and a constant learning rate.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(config: &TrainConfig, params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every tensor; a missing gradient counts as zero, so untouched
    /// tensors still decay.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Option<Matrix>]) {
        assert_eq!(params.len(), grads.len(), "one gradient slot per tensor");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        let (b1, b2, lr, wd, eps) = (self.beta1, self.beta2, self.learning_rate, self.weight_decay, self.epsilon);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let g = g.as_ref().map(Matrix::data);
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g[i]);
                let mi = b1 * m.data()[i] + (1.0 - b1) * gi;
                let vi = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = (mi / c1) / (libm::sqrt(vi / c2) + eps) + wd * p.data()[i];
                p.data_mut()[i] -= lr * update;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    /// The single stage of joint, aux_qtc and generation_only training.
    Main,
    /// Two-step stage 1.
    Selector,
    /// Two-step stage 2.
    Generator,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Main => "main",
            Stage::Selector => "selector",
            Stage::Generator => "generator",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based within its stage.
    pub epoch: usize,
    pub mode: TrainMode,
    pub stage: Stage,
    pub loss_total: f64,
    pub loss_sel: Option<f64>,
    pub loss_gen: Option<f64>,
    pub loss_qtc: Option<f64>,
    pub lr: f64,
    /// Wall time, filled in by an observer; zero otherwise.
    pub seconds: f64,
}

/// Hooks around every epoch; the default does nothing.
pub trait TrainObserver {
    fn epoch_started(&mut self, _stage: Stage, _epoch: usize) {}
    fn epoch_finished(&mut self, _record: &mut EpochRecord) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    /// For two-step training, the stage-2 generator; otherwise the only model.
    pub generator: Model,
    /// Two-step stage-1 model.
    pub selector: Option<Model>,
    pub mode: TrainMode,
    pub steps: u64,
    pub log: Vec<EpochRecord>,
}

struct StageRun<'a> {
    config: &'a TrainConfig,
    objective: Objective,
    stage: Stage,
    refresh: Option<&'a Vocabulary>,
}

impl StageRun<'_> {
    fn run(
        &self,
        model: &mut Model,
        examples: &mut [TrainExample],
        observer: &mut dyn TrainObserver,
        steps: &mut u64,
    ) -> Result<Vec<EpochRecord>> {
        let cfg = self.config;
        let label = self.stage.as_str();
        let mut batch_rng = rng::seeded(rng::derive(cfg.seed, &format!("batches/{label}")));
        let mut dropout = Dropout::new(model.config.dropout, rng::derive(cfg.seed, &format!("dropout/{label}")));
        let mut optimizer = AdamW::new(cfg, model.params.tensors());
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut log = Vec::with_capacity(cfg.epochs);
        for epoch in 1..=cfg.epochs {
            observer.epoch_started(self.stage, epoch);
            if let Some(vocab) = self.refresh {
                refresh_labels(model, vocab, examples, cfg.k)?;
            }
            rng::shuffle(&mut order, &mut batch_rng);
            let mut sums = [0.0f64; 4];
            let mut batches = 0usize;
            let mut seen = LossParts::default();
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
                let (parts, grads) = batch_gradients(model, &batch, self.objective, Some(&mut dropout))?;
                if !parts.total.is_finite() {
                    return Err(Error::NonFiniteLoss { step: *steps });
                }
                optimizer.step(model.params.tensors_mut(), &grads);
                *steps += 1;
                sums[0] += parts.total;
                sums[1] += parts.selection.unwrap_or(0.0);
                sums[2] += parts.generation.unwrap_or(0.0);
                sums[3] += parts.qtc.unwrap_or(0.0);
                seen = parts;
                batches += 1;
            }
            let mean = |s: f64| s / batches as f64;
            let mut record = EpochRecord {
                epoch,
                mode: cfg.mode,
                stage: self.stage,
                loss_total: mean(sums[0]),
                loss_sel: seen.selection.map(|_| mean(sums[1])),
                loss_gen: seen.generation.map(|_| mean(sums[2])),
                loss_qtc: seen.qtc.map(|_| mean(sums[3])),
                lr: cfg.learning_rate,
                seconds: 0.0,
            };
            observer.epoch_finished(&mut record);
            log.push(record);
        }
        Ok(log)
    }
}

/// Relabels every example against the live encoder.
pub fn refresh_labels(model: &Model, vocab: &Vocabulary, examples: &mut [TrainExample], k: usize) -> Result<()> {
    let backend = ModelEncoderBackend { model, vocab };
    for ex in examples.iter_mut() {
        ex.labels = make_relevance_labels(&ex.example, &backend, k)?.labels;
    }
    Ok(())
}

fn check_examples(examples: &[TrainExample], model_config: &ModelConfig) -> Result<()> {
    if examples.is_empty() {
        return Err(invalid("empty training set"));
    }
    for ex in examples {
        if ex.input.token_ids.len() > model_config.max_len || ex.target.len() > model_config.max_len {
            return Err(invalid(format!("example {} exceeds max_len", ex.example.document.id)));
        }
        if ex.labels.len() != ex.example.num_sentences() {
            return Err(invalid(format!("example {} has misaligned labels", ex.example.document.id)));
        }
    }
    Ok(())
}

/// Trains a model (two for two-step) according to `config.mode`.
pub fn train(
    examples: &[TrainExample],
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainedModel> {
    config.validate()?;
    model_config.validate()?;
    check_examples(examples, model_config)?;
    let mut working = examples.to_vec();
    let mut steps = 0u64;
    let refresh = config.refresh_labels.then_some(vocab);
    match config.mode {
        TrainMode::TwoStep => {
            let mut selector = Model::init(model_config.clone(), config.seed)?;
            let run = StageRun { config, objective: Objective::Selection, stage: Stage::Selector, refresh };
            let mut log = run.run(&mut selector, &mut working, observer, &mut steps)?;
            let mut stage2 = working
                .iter()
                .map(|ex| {
                    let input = two_step_input(&selector, &ex.example, &ex.input, vocab, model_config.max_len, config.k)?;
                    Ok(TrainExample { input, ..ex.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut generator = Model::init(model_config.clone(), config.seed)?;
            let run = StageRun { config, objective: Objective::Generation, stage: Stage::Generator, refresh: None };
            log.extend(run.run(&mut generator, &mut stage2, observer, &mut steps)?);
            Ok(TrainedModel { generator, selector: Some(selector), mode: config.mode, steps, log })
        }
        mode => {
            let objective = match mode {
                TrainMode::Joint => Objective::Joint { lambda: config.lambda },
                TrainMode::AuxQtc => Objective::AuxQtc { lambda: config.lambda },
                _ => Objective::Generation,
            };
            let mut model = Model::init(model_config.clone(), config.seed)?;
            let refresh = if mode == TrainMode::Joint { refresh } else { None };
            let run = StageRun { config, objective, stage: Stage::Main, refresh };
            let log = run.run(&mut model, &mut working, observer, &mut steps)?;
            Ok(TrainedModel { generator: model, selector: None, mode, steps, log })
        }
    }
}

/// Trains only on the selection loss (two-step stage 1), updating `model` in place.
pub fn train_selector_stage(
    model: &mut Model,
    examples: &[TrainExample],
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    check_examples(examples, &model.config)?;
    let mut working = examples.to_vec();
    let run = StageRun { config, objective: Objective::Selection, stage: Stage::Selector, refresh: None };
    run.run(model, &mut working, observer, &mut 0)
}

/// Fits the selector head alone on fixed sentence vectors. Each item is an
/// `n x d_model` matrix with one label per row. Returns the mean loss per epoch.
pub fn train_selector_on_vectors(
    model: &mut Model,
    data: &[(Matrix, Vec<f64>)],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if data.is_empty() {
        return Err(invalid("empty training set"));
    }
    for (m, labels) in data {
        if m.cols() != model.config.d_model || m.rows() != labels.len() || labels.is_empty() {
            return Err(invalid("sentence vectors and labels disagree"));
        }
    }
    let mut batch_rng = rng::seeded(rng::derive(config.seed, "batches/vectors"));
    let mut optimizer = AdamW::new(config, model.params.tensors());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for _ in 0..config.epochs {
        rng::shuffle(&mut order, &mut batch_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut gm = GraphModel::new(model, None);
            let n: usize = chunk.iter().map(|&i| data[i].1.len()).sum();
            let mut terms = Vec::new();
            for &i in chunk {
                let sv = gm.graph.constant(data[i].0.clone());
                let p = gm.selector_probs(sv);
                let l = gm.graph.bce_mean(p, &data[i].1);
                terms.push((l, data[i].1.len() as f64 / n as f64));
            }
            let loss = gm.graph.combine(&terms);
            let value = gm.graph.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let grads = gm.graph.backward(loss);
            let per_param: Vec<Option<Matrix>> = (0..model.params.len())
                .map(|i| gm.graph.param_var(i).and_then(|v| grads.get(v)).cloned())
                .collect();
            optimizer.step(model.params.tensors_mut(), &per_param);
            step += 1;
            total += value;
            batches += 1;
        }
        losses.push(total / batches as f64);
    }
    Ok(losses)
}

/// Ordinals with probability above 0.5; when none pass, the `k` most probable.
pub fn select_ordinals(probs: &[f64], k: usize) -> Vec<usize> {
    let passed: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.5).collect();
    if !passed.is_empty() {
        return passed;
    }
    let labels = top_k_labels(probs, k);
    (0..probs.len()).filter(|&i| labels[i] == 1).collect()
}

/// Selector probabilities for every sentence of `input`.
pub fn selector_probabilities(selector: &Model, input: &ModelInput) -> Result<Vec<f64>> {
    let enc = encoder_forward(input, selector)?;
    selector_forward(&enc.sentence_vectors, selector)
}

/// Rebuilds the encoder input from the sentences `selector` keeps.
pub fn two_step_input(
    selector: &Model,
    example: &QAExample,
    full: &ModelInput,
    vocab: &Vocabulary,
    max_len: usize,
    k: usize,
) -> Result<ModelInput> {
    let probs = selector_probabilities(selector, full)?;
    let keep: Vec<usize> = select_ordinals(&probs, k).into_iter().map(|o| full.kept_sentences[o]).collect();
    assemble_model_input_subset(example, vocab, max_len, &keep)
}

/// F1 of the positive class; 1 when both sides have no positives.
pub fn f1_score(predicted: &[u8], gold: &[u8]) -> f64 {
    let tp = predicted.iter().zip(gold).filter(|(&p, &g)| p == 1 && g == 1).count() as f64;
    let fp = predicted.iter().zip(gold).filter(|(&p, &g)| p == 1 && g == 0).count() as f64;
    let fneg = predicted.iter().zip(gold).filter(|(&p, &g)| p == 0 && g == 1).count() as f64;
    if tp + fp + fneg == 0.0 {
        return 1.0;
    }
    2.0 * tp / (2.0 * tp + fp + fneg)
}

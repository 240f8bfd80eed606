//! Experiment stages, the end-to-end run, and the ablation tables.
//!
//! Every stage reads its inputs from and writes its outputs to a run
//! directory, so a run can be resumed or inspected stage by stage:
//!
//! | file | written by |
//! |---|---|
//! | `config.toml` | run creation (resolved config, absolute paths) |
//! | `corpus_train.jsonl`, `corpus_test.jsonl`, `vocab.txt`, `prepare.json` | prepare |
//! | `labels_train.jsonl` | label |
//! | `train_log.jsonl`, `model.qgck` | train |
//! | `predictions.jsonl` | generate |
//! | `report.json` | evaluate |

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use qgen_core::corpus::{split_dataset, QAExample};
use qgen_core::decoding::{beam_search_decode, ModelScorer};
use qgen_core::embedding::{BackendKind, BagMean, EmbeddingBackend, ModelEncoderBackend};
use qgen_core::labeler::{make_relevance_labels, question_type_of};
use qgen_core::metrics::{evaluate as score, BLEU_SMOOTHING};
use qgen_core::model::Model;
use qgen_core::tokenizer::{assemble_model_input, tokenize, Vocabulary, EOS};
use qgen_core::training::{self, two_step_input, EpochRecord, Stage, TrainExample, TrainMode, TrainObserver};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{io_err, Error, Result, StageContext};
use crate::formats::{
    read_embedding_table, read_json, read_jsonl, read_vocab, write_json, write_jsonl, write_vocab, CorpusRecord,
    EpochLogRecord, LabelRecord, PredictionRecord,
};
use crate::squad::load_squad_json;

pub const CONFIG_FILE: &str = "config.toml";
pub const PREPARE_FILE: &str = "prepare.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LABELS_FILE: &str = "labels_train.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "model.qgck";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const LOCK_FILE: &str = "run.lock";

pub fn corpus_file(split: &str) -> String {
    format!("corpus_{split}.jsonl")
}

fn unix_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Exclusive ownership of a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(io_err(p))
}

/// Creates `{out}/{prefix}{unix_secs}-{hash12}` (with a numeric suffix on
/// collision) and writes the resolved config into it.
pub fn create_run_dir(config: &ExperimentConfig, prefix: &str) -> Result<PathBuf> {
    let out = &config.paths.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let base = format!("{prefix}{}-{}", unix_secs(), &config.hash()[..12]);
    let mut n = 0;
    let dir = loop {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => break dir,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(io_err(&dir)(e)),
        }
    };
    save_run_config(config, &dir)?;
    Ok(dir)
}

/// Writes `config` into the run directory with absolute paths.
pub fn save_run_config(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut resolved = config.clone();
    resolved.paths.data = absolute(&config.paths.data)?;
    resolved.paths.out = absolute(&config.paths.out)?;
    if let Some(src) = &config.embedding.source {
        resolved.embedding.source = Some(absolute(src)?);
    }
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, resolved.to_toml()).map_err(io_err(&path))
}

pub fn load_run_config(dir: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&dir.join(CONFIG_FILE))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub data_hash: String,
    pub n_loaded: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub dropped: Vec<DroppedRecord>,
}

fn read_corpus(dir: &Path, split: &str) -> Result<Vec<QAExample>> {
    let records: Vec<CorpusRecord> = read_jsonl(&dir.join(corpus_file(split)))?;
    records.iter().map(|r| r.to_example().map_err(Error::from)).collect()
}

/// Loads SQuAD JSON, splits by context, builds the vocabulary from the training split.
pub fn prepare(config: &ExperimentConfig, dir: &Path) -> Result<PrepareSummary> {
    let report = load_squad_json(&config.paths.data)?;
    let mut examples = report.examples;
    if let Some(limit) = config.data.limit {
        examples.truncate(limit);
    }
    let n_loaded = examples.len();
    let (train, test) = if config.data.test_fraction == 0.0 {
        (examples, Vec::new())
    } else {
        let f = config.data.test_fraction;
        let mut splits = split_dataset(&examples, &[("test", f), ("train", 1.0 - f)], config.seed)?;
        (splits.remove("train").unwrap_or_default(), splits.remove("test").unwrap_or_default())
    };
    if train.is_empty() {
        return Err(Error::EmptyDataset(format!("{} (training split)", config.paths.data.display())));
    }
    let vocab = Vocabulary::build(&train, config.data.vocab_size, config.data.min_freq)?;
    for (split, set) in [("train", &train), ("test", &test)] {
        let records: Vec<CorpusRecord> = set.iter().map(CorpusRecord::from_example).collect();
        write_jsonl(&dir.join(corpus_file(split)), &records)?;
    }
    write_vocab(&dir.join(VOCAB_FILE), &vocab)?;
    let summary = PrepareSummary {
        data_hash: sha256_file(&config.paths.data)?,
        n_loaded,
        n_train: train.len(),
        n_test: test.len(),
        dropped: report.dropped.into_iter().map(|d| DroppedRecord { id: d.id, reason: d.reason }).collect(),
    };
    write_json(&dir.join(PREPARE_FILE), &summary)?;
    Ok(summary)
}

/// Relevance labels and question types for the training split.
pub fn label(config: &ExperimentConfig, dir: &Path) -> Result<Vec<LabelRecord>> {
    let examples = read_corpus(dir, "train")?;
    let vocab = read_vocab(&dir.join(VOCAB_FILE))?;
    let spec = config.embedding_spec()?;
    let k = config.train.k;
    let records = match spec.kind {
        BackendKind::BagMean => label_with(&examples, &BagMean::new(spec.dim, spec.seed)?, k)?,
        BackendKind::PrecomputedFile => {
            let source = config.embedding.source.as_deref().expect("validated");
            label_with(&examples, &read_embedding_table(source)?, k)?
        }
        BackendKind::ModelEncoder => {
            let model = Model::init(config.model_config(vocab.len())?, config.seed)?;
            label_with(&examples, &ModelEncoderBackend { model: &model, vocab: &vocab }, k)?
        }
    };
    write_jsonl(&dir.join(LABELS_FILE), &records)?;
    Ok(records)
}

fn label_with(examples: &[QAExample], backend: &dyn EmbeddingBackend, k: usize) -> Result<Vec<LabelRecord>> {
    examples
        .iter()
        .map(|ex| {
            let labels = make_relevance_labels(ex, backend, k)?;
            Ok(LabelRecord {
                example: CorpusRecord::from_example(ex),
                relevance: labels.labels,
                scores: labels.scores,
                qtype: question_type_of(&ex.document.question)?.as_str().to_string(),
            })
        })
        .collect()
}

/// Fills in wall time per epoch and optionally prints progress to stderr.
pub struct StdObserver {
    started: Option<Instant>,
    pub verbose: bool,
}

impl StdObserver {
    pub fn new(verbose: bool) -> Self {
        Self { started: None, verbose }
    }
}

impl TrainObserver for StdObserver {
    fn epoch_started(&mut self, _stage: Stage, _epoch: usize) {
        self.started = Some(Instant::now());
    }

    fn epoch_finished(&mut self, record: &mut EpochRecord) {
        record.seconds = self.started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        if self.verbose {
            eprintln!(
                "[{} {}] epoch {} loss {:.5} ({:.2}s)",
                record.mode.as_str(),
                record.stage.as_str(),
                record.epoch,
                record.loss_total,
                record.seconds
            );
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub log: Vec<EpochLogRecord>,
}

pub fn train(config: &ExperimentConfig, dir: &Path, observer: &mut dyn TrainObserver) -> Result<TrainSummary> {
    let records: Vec<LabelRecord> = read_jsonl(&dir.join(LABELS_FILE))?;
    let vocab = read_vocab(&dir.join(VOCAB_FILE))?;
    let model_config = config.model_config(vocab.len())?;
    let train_config = config.train_config()?;
    let examples = records
        .into_iter()
        .map(|r| {
            let ex = r.example.to_example()?;
            TrainExample::new(ex, r.relevance, &vocab, config.data.max_len, config.train.max_question_len)
        })
        .collect::<qgen_core::Result<Vec<_>>>()?;
    let trained = training::train(&examples, &vocab, &model_config, &train_config, observer)?;
    let log: Vec<EpochLogRecord> = trained.log.iter().map(EpochLogRecord::from).collect();
    write_jsonl(&dir.join(TRAIN_LOG_FILE), &log)?;
    Checkpoint::from_trained(&trained, &vocab, config.seed).save(&dir.join(CHECKPOINT_FILE))?;
    Ok(TrainSummary { steps: trained.steps, log })
}

/// Decodes the evaluation split with the saved checkpoint. Two-step
/// checkpoints feed the generator only the sentences their selector keeps.
pub fn generate(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PredictionRecord>> {
    let examples = read_corpus(dir, &config.data.eval_split)?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset(format!("{} split", config.data.eval_split)));
    }
    let vocab = read_vocab(&dir.join(VOCAB_FILE))?;
    let ck = Checkpoint::load(&dir.join(CHECKPOINT_FILE), &vocab)?;
    let decode = config.decode_config();
    let max_len = config.data.max_len;
    let mut out = Vec::with_capacity(examples.len());
    for ex in &examples {
        let mut input = assemble_model_input(ex, &vocab, max_len)?;
        if let Some(selector) = &ck.selector {
            input = two_step_input(selector, ex, &input, &vocab, max_len, config.train.k)?;
        }
        let scorer = ModelScorer::new(&ck.generator, &input)?;
        let hyp = beam_search_decode(&scorer, &decode)?;
        let ids: Vec<_> = hyp.output().iter().copied().take_while(|&t| t != EOS).collect();
        out.push(PredictionRecord {
            id: ex.document.id.clone(),
            prediction: vocab.decode(&ids)?,
            gold: ex.document.question.clone(),
            beam_size: decode.beam_size,
            score: hyp.normalized_score(decode.length_alpha),
        });
    }
    write_jsonl(&dir.join(PREDICTIONS_FILE), &out)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScoreRecord {
    pub id: String,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub data_hash: String,
    pub n_examples: usize,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub bleu_smoothing: String,
    pub per_example: Vec<ExampleScoreRecord>,
    pub config: ExperimentConfig,
    /// Unix seconds; the only field that differs between identical runs.
    pub created_at: u64,
}

/// Predictions are space-joined vocabulary tokens; gold questions go
/// through the tokenizer.
pub fn evaluate(config: &ExperimentConfig, dir: &Path) -> Result<Report> {
    let predictions: Vec<PredictionRecord> = read_jsonl(&dir.join(PREDICTIONS_FILE))?;
    let prepared: PrepareSummary = read_json(&dir.join(PREPARE_FILE))?;
    let candidates: Vec<Vec<String>> =
        predictions.iter().map(|p| p.prediction.split_whitespace().map(str::to_string).collect()).collect();
    let references: Vec<Vec<String>> = predictions.iter().map(|p| tokenize(&p.gold)).collect();
    let metrics = score(&candidates, &references)?;
    let report = Report {
        config_hash: config.hash(),
        data_hash: prepared.data_hash,
        n_examples: metrics.n_examples,
        bleu4: metrics.bleu4,
        rouge_l: metrics.rouge_l,
        meteor_lite: metrics.meteor_lite,
        bleu_smoothing: BLEU_SMOOTHING.to_string(),
        per_example: predictions
            .iter()
            .zip(&metrics.per_example)
            .map(|(p, s)| ExampleScoreRecord {
                id: p.id.clone(),
                bleu4: s.bleu4,
                rouge_l: s.rouge_l,
                meteor_lite: s.meteor_lite,
            })
            .collect(),
        config: config.clone(),
        created_at: unix_secs(),
    };
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: Report,
}

/// Runs every stage in a fresh run directory. On failure the error names
/// the stage and the directory keeps whatever was written so far.
pub fn run_pipeline(config: &ExperimentConfig, observer: &mut dyn TrainObserver) -> Result<RunOutcome> {
    config.validate()?;
    check_paths(config)?;
    let dir = create_run_dir(config, "")?;
    let report = run_stages(config, &dir, observer)?;
    Ok(RunOutcome { dir, report })
}

/// All stages inside an existing run directory.
pub fn run_stages(config: &ExperimentConfig, dir: &Path, observer: &mut dyn TrainObserver) -> Result<Report> {
    let _lock = RunLock::acquire(dir)?;
    prepare(config, dir).stage("prepare")?;
    label(config, dir).stage("label")?;
    train(config, dir, observer).stage("train")?;
    generate(config, dir).stage("generate")?;
    evaluate(config, dir).stage("evaluate")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub k: usize,
    pub run_dir: PathBuf,
    pub report: Report,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
    /// Failed rows: `(k, message)`.
    pub errors: Vec<(usize, String)>,
}

pub const SWEEP_CSV: &str = "sweep_k.csv";
pub const SWEEP_ERRORS: &str = "sweep_k_errors.txt";

/// One pipeline run per `k` under the same seed. Rows that fail are listed
/// in the error sidecar and the remaining rows still run.
pub fn sweep_top_k(config: &ExperimentConfig, k_list: &[usize], observer: &mut dyn TrainObserver) -> Result<SweepOutcome> {
    if k_list.is_empty() {
        return Err(Error::Config("k_list must not be empty".into()));
    }
    config.validate()?;
    let dir = create_run_dir(config, "sweep-")?;
    let max_sentences = load_squad_json(&config.paths.data)?
        .examples
        .iter()
        .map(QAExample::num_sentences)
        .max()
        .unwrap_or(0);
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &k in k_list {
        let mut row_config = config.clone();
        row_config.train.k = k;
        row_config.paths.out = dir.clone();
        let result = if k == 0 || k > max_sentences {
            Err(Error::Config(format!("k = {k} outside [1, {max_sentences}]")))
        } else {
            run_pipeline(&row_config, observer)
        };
        match result {
            Ok(run) => rows.push(SweepRow { k, run_dir: run.dir, report: run.report }),
            Err(e) => errors.push((k, e.to_string())),
        }
    }
    let mut csv = String::from("k,bleu4,meteor_lite,rouge_l\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.k, r.report.bleu4, r.report.meteor_lite, r.report.rouge_l));
    }
    write_text(&dir.join(SWEEP_CSV), &csv)?;
    let sidecar: String = errors.iter().map(|(k, e)| format!("k={k}\t{e}\n")).collect();
    write_text(&dir.join(SWEEP_ERRORS), &sidecar)?;
    Ok(SweepOutcome { dir, rows, errors })
}

#[derive(Clone, Debug)]
pub struct ModeRow {
    pub mode: TrainMode,
    pub run_dir: PathBuf,
    pub report: Report,
}

#[derive(Clone, Debug)]
pub struct CompareOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ModeRow>,
    pub errors: Vec<(TrainMode, String)>,
}

pub const COMPARE_CSV: &str = "compare_modes.csv";
pub const COMPARE_ERRORS: &str = "compare_modes_errors.txt";

/// One run per mode on identical seed and data. Deltas are relative to the
/// first successful row.
pub fn compare_modes(config: &ExperimentConfig, modes: &[TrainMode], observer: &mut dyn TrainObserver) -> Result<CompareOutcome> {
    if modes.is_empty() {
        return Err(Error::Config("no modes to compare".into()));
    }
    config.validate()?;
    let dir = create_run_dir(config, "compare-")?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &mode in modes {
        let mut row_config = config.clone();
        row_config.train.mode = mode.as_str().to_string();
        row_config.paths.out = dir.clone();
        match run_pipeline(&row_config, observer) {
            Ok(run) => rows.push(ModeRow { mode, run_dir: run.dir, report: run.report }),
            Err(e) => errors.push((mode, e.to_string())),
        }
    }
    let mut csv = String::from("mode,bleu4,meteor_lite,rouge_l,delta_bleu4,delta_meteor_lite,delta_rouge_l\n");
    if let Some(base) = rows.first().map(|r| r.report.clone()) {
        for r in &rows {
            let m = &r.report;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.mode.as_str(),
                m.bleu4,
                m.meteor_lite,
                m.rouge_l,
                m.bleu4 - base.bleu4,
                m.meteor_lite - base.meteor_lite,
                m.rouge_l - base.rouge_l
            ));
        }
    }
    write_text(&dir.join(COMPARE_CSV), &csv)?;
    let sidecar: String = errors.iter().map(|(m, e)| format!("{}\t{e}\n", m.as_str())).collect();
    write_text(&dir.join(COMPARE_ERRORS), &sidecar)?;
    Ok(CompareOutcome { dir, rows, errors })
}

/// Every input path the config names must open.
pub fn check_paths(config: &ExperimentConfig) -> Result<()> {
    let inputs = std::iter::once(&config.paths.data).chain(config.embedding.source.as_ref());
    for path in inputs {
        File::open(path).map(drop).map_err(io_err(path))?;
    }
    Ok(())
}

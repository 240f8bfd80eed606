mod common;

use std::path::Path;

use qgen::config::ExperimentConfig;
use qgen::error::Error;
use qgen::formats::{read_json, read_jsonl, EpochLogRecord, LabelRecord, PredictionRecord};
use qgen::pipeline::{
    compare_modes, run_pipeline, sweep_top_k, Report, RunLock, StdObserver, COMPARE_CSV, LABELS_FILE,
    PREDICTIONS_FILE, REPORT_FILE, SWEEP_CSV, SWEEP_ERRORS, TRAIN_LOG_FILE,
};
use qgen_core::training::TrainMode;
use serde_json::Value;

fn setup(data: Value) -> (tempfile::TempDir, ExperimentConfig) {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("data.json");
    common::write_json(&path, &data);
    let config = common::tiny_config(&path, &tmp.path().join("runs"));
    (tmp, config)
}

fn quiet() -> StdObserver {
    StdObserver::new(false)
}

fn without_timing(dir: &Path) -> (Value, Vec<EpochLogRecord>, Vec<PredictionRecord>) {
    let mut report: Value = read_json(&dir.join(REPORT_FILE)).unwrap();
    report.as_object_mut().unwrap().remove("created_at");
    let mut log: Vec<EpochLogRecord> = read_jsonl(&dir.join(TRAIN_LOG_FILE)).unwrap();
    log.iter_mut().for_each(|r| r.seconds = 0.0);
    (report, log, read_jsonl(&dir.join(PREDICTIONS_FILE)).unwrap())
}

#[test]
fn memorized_fixture_beats_untrained_baseline() {
    let (_tmp, mut config) = setup(common::memorization_squad(50));
    config.train.mode = "generation_only".into();
    config.train.epochs = 0;
    let floor = run_pipeline(&config, &mut quiet()).unwrap().report;
    config.train.epochs = 120;
    let run = run_pipeline(&config, &mut quiet()).unwrap();
    let trained = run.report;
    assert!(trained.bleu4 >= 0.9, "memorized BLEU-4 {}", trained.bleu4);
    // After a ten-epoch warm-up, at most 5% of epochs may raise the loss.
    let log: Vec<EpochLogRecord> = read_jsonl(&run.dir.join(TRAIN_LOG_FILE)).unwrap();
    let losses: Vec<f64> = log.iter().map(|r| r.loss_gen.unwrap()).collect();
    let rises = losses[10..].windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises as f64 <= 0.05 * (losses.len() - 10) as f64, "{rises} rising epochs: {losses:?}");
    for (f, t) in [(floor.bleu4, trained.bleu4), (floor.rouge_l, trained.rouge_l), (floor.meteor_lite, trained.meteor_lite)] {
        assert!(f.is_finite() && f < t, "untrained {f} vs trained {t}");
    }
    assert_eq!(trained.n_examples, 50);
}

#[test]
fn identical_config_reproduces_every_artifact() {
    let (_tmp, mut config) = setup(common::memorization_squad(20));
    config.model.dropout = 0.1;
    config.train.epochs = 3;
    let a = run_pipeline(&config, &mut quiet()).unwrap();
    let b = run_pipeline(&config, &mut quiet()).unwrap();
    assert_ne!(a.dir, b.dir);
    assert_eq!(without_timing(&a.dir), without_timing(&b.dir));
    assert_eq!(
        std::fs::read(a.dir.join(LABELS_FILE)).unwrap(),
        std::fs::read(b.dir.join(LABELS_FILE)).unwrap()
    );
}

#[test]
fn embedded_config_reproduces_its_report() {
    let (_tmp, config) = setup(common::memorization_squad(12));
    let first = run_pipeline(&config, &mut quiet()).unwrap();
    let saved: Report = read_json(&first.dir.join(REPORT_FILE)).unwrap();
    assert_eq!(saved.config, config);
    assert_eq!(saved.data_hash.len(), 64);
    let again = run_pipeline(&saved.config, &mut quiet()).unwrap().report;
    assert_eq!((again.bleu4, again.rouge_l, again.meteor_lite), (saved.bleu4, saved.rouge_l, saved.meteor_lite));
    assert_eq!(again.config_hash, saved.config_hash);
}

#[test]
fn labels_follow_the_top_k_rule() {
    let (_tmp, config) = setup(common::memorization_squad(10));
    let run = run_pipeline(&config, &mut quiet()).unwrap();
    let labels: Vec<LabelRecord> = read_jsonl(&run.dir.join(LABELS_FILE)).unwrap();
    assert_eq!(labels.len(), 10);
    for r in &labels {
        let n = r.example.sentences.len();
        assert_eq!(r.relevance.len(), n);
        assert_eq!(r.relevance.iter().map(|&l| l as usize).sum::<usize>(), config.train.k.min(n));
        assert!(["where", "what"].contains(&r.qtype.as_str()));
    }
}

#[test]
fn stage_failure_names_the_stage_and_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("data.json");
    std::fs::write(&path, "{\"data\": [{\"paragraphs\": 3}]}").unwrap();
    let config = common::tiny_config(&path, &tmp.path().join("runs"));
    let err = run_pipeline(&config, &mut quiet()).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "prepare"),
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains("$.data[0].paragraphs"), "{err}");
    let runs: Vec<_> = std::fs::read_dir(tmp.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let dir = runs.into_iter().next().unwrap().unwrap().path();
    assert!(dir.join("config.toml").exists());
    assert!(!dir.join("run.lock").exists());

    let missing = common::tiny_config(&tmp.path().join("absent.json"), &tmp.path().join("runs"));
    assert!(matches!(run_pipeline(&missing, &mut quiet()), Err(Error::Io { .. })));
}

#[test]
fn run_directory_lock_is_exclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let lock = RunLock::acquire(tmp.path()).unwrap();
    assert!(matches!(RunLock::acquire(tmp.path()), Err(Error::Locked(_))));
    drop(lock);
    RunLock::acquire(tmp.path()).unwrap();
}

#[test]
fn sweep_emits_one_row_per_k_and_a_sidecar_for_failures() {
    let (_tmp, config) = setup(common::memorization_squad(10));
    let out = sweep_top_k(&config, &[1, 2, 3, 4, 9], &mut quiet()).unwrap();
    assert_eq!(out.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(out.errors.len(), 2);
    let csv = std::fs::read_to_string(out.dir.join(SWEEP_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,bleu4,meteor_lite,rouge_l");
    assert_eq!(lines.len(), 4);
    let sidecar = std::fs::read_to_string(out.dir.join(SWEEP_ERRORS)).unwrap();
    assert!(sidecar.starts_with("k=4\t") && sidecar.contains("k=9\t"), "{sidecar}");

    let single = sweep_top_k(&config, &[1], &mut quiet()).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert!(sweep_top_k(&config, &[], &mut quiet()).is_err());
}

#[test]
fn three_relevant_sentences_beat_one_in_two_step_mode() {
    let (_tmp, mut config) = setup(common::three_sentence_squad(30));
    config.train.mode = "two_step".into();
    config.train.epochs = 80;
    config.data.max_len = 64;
    config.train.max_question_len = 14;
    config.decode.max_len = 14;
    config.embedding.dim = 1024;
    let out = sweep_top_k(&config, &[1, 3], &mut quiet()).unwrap();
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    let (k1, k3) = (&out.rows[0].report, &out.rows[1].report);
    assert!(k3.bleu4 >= k1.bleu4, "k=3 {} vs k=1 {}", k3.bleu4, k1.bleu4);
}

#[test]
fn compare_modes_rows_and_lambda_zero_reduction() {
    let (_tmp, mut config) = setup(common::memorization_squad(12));
    config.model.dropout = 0.1;
    let out = compare_modes(&config, &[TrainMode::Joint, TrainMode::TwoStep], &mut quiet()).unwrap();
    let csv = std::fs::read_to_string(out.dir.join(COMPARE_CSV)).unwrap();
    let modes: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, vec!["joint", "two_step"]);
    assert!(csv.lines().nth(1).unwrap().ends_with(",0,0,0"));

    config.train.lambda = 0.0;
    let out = compare_modes(&config, &[TrainMode::Joint, TrainMode::GenerationOnly], &mut quiet()).unwrap();
    let (joint, gen) = (&out.rows[0], &out.rows[1]);
    let preds = |d: &Path| std::fs::read(d.join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(preds(&joint.run_dir), preds(&gen.run_dir));
    assert_eq!(joint.report.bleu4.to_bits(), gen.report.bleu4.to_bits());
    assert_eq!(joint.report.meteor_lite.to_bits(), gen.report.meteor_lite.to_bits());
}

#[test]
fn aux_qtc_and_alternative_backends_run_end_to_end() {
    let (tmp, mut config) = setup(common::memorization_squad(12));
    let out = compare_modes(&config, &[TrainMode::AuxQtc, TrainMode::Joint], &mut quiet()).unwrap();
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    let log: Vec<EpochLogRecord> = read_jsonl(&out.rows[0].run_dir.join(TRAIN_LOG_FILE)).unwrap();
    assert!(log.iter().all(|r| r.loss_qtc.is_some() && r.loss_sel.is_none()));

    config.embedding.backend = "model_encoder".into();
    config.train.refresh_labels = true;
    run_pipeline(&config, &mut quiet()).unwrap();

    let table = tmp.path().join("vectors.txt");
    std::fs::write(&table, "dim 2\nann\t1 0\nrome\t0 1\n[UNK]\t0.5 0.5\n").unwrap();
    config.embedding.backend = "precomputed_file".into();
    config.embedding.source = Some(table);
    config.embedding.dim = 2;
    config.train.refresh_labels = false;
    run_pipeline(&config, &mut quiet()).unwrap();
}

#[test]
fn held_out_split_is_decoded() {
    let (_tmp, mut config) = setup(common::memorization_squad(40));
    config.data.test_fraction = 0.25;
    config.data.eval_split = "test".into();
    let run = run_pipeline(&config, &mut quiet()).unwrap();
    let preds: Vec<PredictionRecord> = read_jsonl(&run.dir.join(PREDICTIONS_FILE)).unwrap();
    let labels: Vec<LabelRecord> = read_jsonl(&run.dir.join(LABELS_FILE)).unwrap();
    assert_eq!(preds.len() + labels.len(), 40);
    let test: Vec<qgen::formats::CorpusRecord> = read_jsonl(&run.dir.join("corpus_test.jsonl")).unwrap();
    assert_eq!(test.len(), preds.len());
    assert!(test.iter().all(|t| labels.iter().all(|l| l.example.context != t.context)));
}

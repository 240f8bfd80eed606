//! On-disk formats: JSONL records, the vocabulary file and embedding tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use qgen_core::corpus::{QAExample, RawDocument, SentenceSpan};
use qgen_core::embedding::PrecomputedTable;
use qgen_core::tokenizer::{Vocabulary, SPECIAL_TOKENS};
use qgen_core::training::EpochRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, parse_err, Result};

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| parse_err(path.display().to_string(), e))?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| parse_err(format!("{}:{}", path.display(), n + 1), e))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path.display().to_string(), e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path.display().to_string(), e))
}

/// One prepared example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer_text: String,
    pub answer_start: usize,
    pub sentences: Vec<[usize; 2]>,
    pub answer_sentence: usize,
}

impl CorpusRecord {
    pub fn from_example(ex: &QAExample) -> Self {
        let d = &ex.document;
        Self {
            id: d.id.clone(),
            context: d.context.clone(),
            question: d.question.clone(),
            answer_text: d.answer_text.clone(),
            answer_start: d.answer_start,
            sentences: ex.sentences.iter().map(|s| [s.start, s.end]).collect(),
            answer_sentence: ex.answer_sentence_index,
        }
    }

    pub fn to_example(&self) -> qgen_core::Result<QAExample> {
        let document = RawDocument {
            id: self.id.clone(),
            context: self.context.clone(),
            question: self.question.clone(),
            answer_text: self.answer_text.clone(),
            answer_start: self.answer_start,
        };
        let sentences = self
            .sentences
            .iter()
            .enumerate()
            .map(|(index, &[start, end])| SentenceSpan { index, start, end })
            .collect();
        QAExample::from_parts(document, sentences, self.answer_sentence)
    }
}

/// A corpus record with its relevance labels and question type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    #[serde(flatten)]
    pub example: CorpusRecord,
    pub relevance: Vec<u8>,
    pub scores: Vec<f64>,
    pub qtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction: String,
    pub gold: String,
    pub beam_size: usize,
    /// Length-normalized log-probability.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLogRecord {
    pub epoch: usize,
    pub mode: String,
    pub stage: String,
    pub loss_total: f64,
    pub loss_sel: Option<f64>,
    pub loss_gen: Option<f64>,
    pub loss_qtc: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

impl From<&EpochRecord> for EpochLogRecord {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            mode: r.mode.as_str().to_string(),
            stage: r.stage.as_str().to_string(),
            loss_total: r.loss_total,
            loss_sel: r.loss_sel,
            loss_gen: r.loss_gen,
            loss_qtc: r.loss_qtc,
            lr: r.lr,
            seconds: r.seconds,
        }
    }
}

pub const VOCAB_VERSION: u32 = 1;

fn vocab_header() -> String {
    let specials: Vec<String> = SPECIAL_TOKENS.iter().enumerate().map(|(i, t)| format!("{t}={i}")).collect();
    format!("#qgen-vocab v{VOCAB_VERSION} {}", specials.join(" "))
}

/// Header line, then one regular token per line; line `n` (1-based, after
/// the header) holds id `n - 1 + specials`.
pub fn vocab_to_string(vocab: &Vocabulary) -> String {
    let mut out = vocab_header();
    out.push('\n');
    for t in vocab.regular_tokens() {
        out.push_str(t);
        out.push('\n');
    }
    out
}

pub fn vocab_from_str(text: &str, origin: &str) -> Result<Vocabulary> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != vocab_header() {
        return Err(parse_err(format!("{origin}:1"), format!("unexpected vocabulary header {header:?}")));
    }
    let tokens = lines.map(str::to_string).collect();
    Vocabulary::from_tokens(tokens).map_err(|e| parse_err(origin, e))
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    std::fs::write(path, vocab_to_string(vocab)).map_err(io_err(path))
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    vocab_from_str(&text, &path.display().to_string())
}

pub fn read_embedding_table(path: &Path) -> Result<PrecomputedTable> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    PrecomputedTable::parse(&text).map_err(|e| parse_err(path.display().to_string(), e))
}

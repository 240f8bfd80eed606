//! SQuAD v1.1 ingestion: `data -> paragraphs -> {context, qas -> {id, question, answers}}`.

use std::path::Path;

use qgen_core::corpus::{QAExample, RawDocument};
use serde_json::Value;

use crate::error::{io_err, parse_err, Error, Result};

/// An example that could not be aligned and was left out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub examples: Vec<QAExample>,
    pub dropped: Vec<Dropped>,
}

pub fn load_squad_json(path: &Path) -> Result<LoadReport> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_squad(&text, &path.display().to_string())
}

fn field<'a>(obj: &'a Value, key: &str, at: &str, origin: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| parse_err(format!("{origin}: {at}"), format!("missing field {key:?}")))
}

fn array<'a>(v: &'a Value, at: &str, origin: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| parse_err(format!("{origin}: {at}"), "expected an array"))
}

fn string<'a>(v: &'a Value, at: &str, origin: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| parse_err(format!("{origin}: {at}"), "expected a string"))
}

/// Parses SQuAD JSON text; `origin` labels error messages. Unalignable
/// examples go to [`LoadReport::dropped`].
pub fn parse_squad(text: &str, origin: &str) -> Result<LoadReport> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_err(origin, e))?;
    let data = array(field(&root, "data", "$", origin)?, "$.data", origin)?;
    let mut examples = Vec::new();
    let mut dropped = Vec::new();
    for (a, article) in data.iter().enumerate() {
        let at = format!("$.data[{a}]");
        let paragraphs = array(field(article, "paragraphs", &at, origin)?, &format!("{at}.paragraphs"), origin)?;
        for (p, paragraph) in paragraphs.iter().enumerate() {
            let at = format!("$.data[{a}].paragraphs[{p}]");
            let context = string(field(paragraph, "context", &at, origin)?, &format!("{at}.context"), origin)?;
            let qas = array(field(paragraph, "qas", &at, origin)?, &format!("{at}.qas"), origin)?;
            for (q, qa) in qas.iter().enumerate() {
                let at = format!("{at}.qas[{q}]");
                let id = match qa.get("id") {
                    Some(v) => string(v, &format!("{at}.id"), origin)?.to_string(),
                    None => format!("{a}-{p}-{q}"),
                };
                let question = string(field(qa, "question", &at, origin)?, &format!("{at}.question"), origin)?;
                let answers = array(field(qa, "answers", &at, origin)?, &format!("{at}.answers"), origin)?;
                let first = answers
                    .first()
                    .ok_or_else(|| parse_err(format!("{origin}: {at}.answers"), "no answers"))?;
                let answer_text =
                    string(field(first, "text", &at, origin)?, &format!("{at}.answers[0].text"), origin)?;
                let start = field(first, "answer_start", &at, origin)?
                    .as_u64()
                    .ok_or_else(|| parse_err(format!("{origin}: {at}.answers[0].answer_start"), "expected a non-negative integer"))?;
                let built = RawDocument::normalized(id.clone(), context, question, answer_text, start as usize)
                    .and_then(QAExample::from_document);
                match built {
                    Ok(ex) => examples.push(ex),
                    Err(e) => dropped.push(Dropped { id, reason: e.to_string() }),
                }
            }
        }
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset(origin.to_string()));
    }
    Ok(LoadReport { examples, dropped })
}

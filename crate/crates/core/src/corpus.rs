//! Raw question-answer documents, sentence segmentation and answer alignment.
//!
//! All offsets are character (Unicode scalar) offsets, matching the SQuAD
//! convention. Text is NFC-normalized before any offset arithmetic.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use unicode_normalization::UnicodeNormalization;

use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer_text: String,
    /// Character offset of the answer inside `context`.
    pub answer_start: usize,
}

impl RawDocument {
    /// Builds a document from unnormalized fields, NFC-normalizing every text
    /// and re-deriving the answer offset. Fails when the answer does not sit
    /// at the stated offset.
    pub fn normalized(
        id: impl Into<String>,
        context: &str,
        question: &str,
        answer_text: &str,
        answer_start: usize,
    ) -> Result<Self> {
        let context_chars = context.chars().count();
        if answer_start > context_chars {
            return Err(Error::AnswerMismatch { offset: answer_start });
        }
        let prefix_end = byte_offset(context, answer_start);
        let answer_start_nfc = context[..prefix_end].nfc().count();
        let doc = RawDocument {
            id: id.into(),
            context: context.nfc().collect(),
            question: question.nfc().collect(),
            answer_text: answer_text.nfc().collect(),
            answer_start: answer_start_nfc,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn answer_len(&self) -> usize {
        self.answer_text.chars().count()
    }

    pub fn answer_end(&self) -> usize {
        self.answer_start + self.answer_len()
    }

    /// The context slice between two character offsets.
    pub fn context_slice(&self, start: usize, end: usize) -> &str {
        char_slice(&self.context, start, end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.answer_text.is_empty() || self.answer_end() > self.context.chars().count() {
            return Err(Error::AnswerMismatch { offset: self.answer_start });
        }
        if self.context_slice(self.answer_start, self.answer_end()) != self.answer_text {
            return Err(Error::AnswerMismatch { offset: self.answer_start });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentenceSpan {
    pub index: usize,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

impl SentenceSpan {
    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QAExample {
    pub document: RawDocument,
    pub sentences: Vec<SentenceSpan>,
    pub answer_sentence_index: usize,
    /// The answer runs past the end of its starting sentence.
    pub multi_sentence: bool,
}

impl QAExample {
    /// Splits the context and aligns the answer.
    pub fn from_document(document: RawDocument) -> Result<Self> {
        document.validate()?;
        let sentences = split_sentences(&document.context)?;
        let alignment = align_answer(&document, &sentences)?;
        Ok(QAExample {
            document,
            sentences,
            answer_sentence_index: alignment.index,
            multi_sentence: alignment.multi_sentence,
        })
    }

    /// Builds an example from precomputed spans (e.g. a prepared JSONL file),
    /// checking every invariant.
    pub fn from_parts(
        document: RawDocument,
        sentences: Vec<SentenceSpan>,
        answer_sentence_index: usize,
    ) -> Result<Self> {
        document.validate()?;
        if sentences.is_empty() {
            return Err(invalid("example has no sentences"));
        }
        let len = document.context.chars().count();
        for (i, s) in sentences.iter().enumerate() {
            if s.index != i || s.start >= s.end || s.end > len {
                return Err(invalid(alloc::format!("bad sentence span {i}")));
            }
            if i > 0 && sentences[i - 1].end > s.start {
                return Err(invalid("sentence spans overlap"));
            }
        }
        let alignment = align_answer(&document, &sentences)?;
        if alignment.index != answer_sentence_index {
            return Err(invalid(alloc::format!(
                "answer sentence {answer_sentence_index} does not contain the answer start"
            )));
        }
        Ok(QAExample {
            document,
            sentences,
            answer_sentence_index,
            multi_sentence: alignment.multi_sentence,
        })
    }

    pub fn sentence_text(&self, index: usize) -> &str {
        let s = self.sentences[index];
        self.document.context_slice(s.start, s.end)
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }
}

/// Words that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "e.g", "i.e", "inc",
    "ltd", "co", "corp", "gen", "gov", "sen", "rep", "lt", "col", "capt", "sgt", "jan", "feb",
    "mar", "apr", "aug", "sep", "sept", "oct", "nov", "dec", "approx", "dept", "est",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201d}' | '\u{2019}' | '\u{bb}')
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase()
        || c.is_ascii_digit()
        || matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}' | '\u{ab}')
}

/// True when the word ending just before `period` (a char index) is a known
/// abbreviation or a single capital initial such as `J.` or `U.S.`.
fn is_abbreviation(chars: &[char], period: usize) -> bool {
    let mut start = period;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    let word: String = chars[start..period]
        .iter()
        .skip_while(|c| !c.is_alphanumeric())
        .collect();
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Initials: every dot-separated piece is one uppercase letter.
    word.split('.').all(|piece| {
        let mut it = piece.chars();
        matches!((it.next(), it.next()), (Some(c), None) if c.is_uppercase())
    })
}

/// Rule-based sentence segmentation.
///
/// A boundary follows `.`, `!` or `?` (plus any closing quotes or brackets)
/// when the next non-space character is uppercase, a digit, or an opening
/// quote. Periods after stop-listed abbreviations and single capitals do not
/// split. Trailing text without a terminator forms the last sentence.
pub fn split_sentences(text: &str) -> Result<Vec<SentenceSpan>> {
    let chars: Vec<char> = text.chars().collect();
    if chars.iter().all(|c| c.is_whitespace()) {
        return Err(invalid("cannot split empty text into sentences"));
    }
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(i);
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < n && (is_terminator(chars[end]) || is_closing(chars[end])) {
            end += 1;
        }
        let mut next = end;
        while next < n && chars[next].is_whitespace() {
            next += 1;
        }
        let boundary = next > end
            && next < n
            && starts_sentence(chars[next])
            && !(c == '.' && end == i + 1 && is_abbreviation(&chars, i));
        if boundary {
            spans.push(SentenceSpan { index: spans.len(), start: start.take().unwrap_or(i), end });
            i = next;
        } else {
            i = end;
        }
    }
    if let Some(s) = start {
        let mut end = n;
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push(SentenceSpan { index: spans.len(), start: s, end });
    }
    Ok(spans)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub index: usize,
    pub multi_sentence: bool,
}

/// Finds the sentence containing the answer start.
pub fn align_answer(document: &RawDocument, sentences: &[SentenceSpan]) -> Result<Alignment> {
    let offset = document.answer_start;
    let span = sentences
        .iter()
        .find(|s| s.contains(offset))
        .ok_or(Error::Alignment { offset })?;
    Ok(Alignment { index: span.index, multi_sentence: document.answer_end() > span.end })
}

/// Named fractions of a dataset, e.g. `[("train", 0.9), ("dev", 0.1)]`.
///
/// Examples sharing a context stay in the same split. Contexts are shuffled
/// with `seed`, then cut by cumulative fraction; the last split takes the rest.
pub fn split_dataset(
    examples: &[QAExample],
    fractions: &[(&str, f64)],
    seed: u64,
) -> Result<BTreeMap<String, Vec<QAExample>>> {
    if fractions.is_empty() {
        return Err(invalid("no split fractions given"));
    }
    if fractions.iter().any(|&(_, f)| !(0.0..=1.0).contains(&f)) {
        return Err(invalid("split fractions must lie in [0, 1]"));
    }
    let mut contexts: Vec<&str> = Vec::new();
    let mut seen = BTreeMap::new();
    for ex in examples {
        let ctx = ex.document.context.as_str();
        if seen.insert(ctx, ()).is_none() {
            contexts.push(ctx);
        }
    }
    let mut order: Vec<usize> = (0..contexts.len()).collect();
    rng::shuffle(&mut order, &mut rng::seeded(rng::derive(seed, "split")));
    let mut assignment: BTreeMap<&str, usize> = BTreeMap::new();
    let total = contexts.len() as f64;
    let mut cumulative = 0.0;
    let mut cursor = 0;
    for (split, &(_, frac)) in fractions.iter().enumerate() {
        cumulative += frac;
        let bound = if split + 1 == fractions.len() {
            contexts.len()
        } else {
            libm::round(cumulative * total) as usize
        };
        while cursor < bound.min(contexts.len()) {
            assignment.insert(contexts[order[cursor]], split);
            cursor += 1;
        }
    }
    let mut out: BTreeMap<String, Vec<QAExample>> =
        fractions.iter().map(|&(name, _)| (String::from(name), Vec::new())).collect();
    for ex in examples {
        let split = assignment[ex.document.context.as_str()];
        out.get_mut(fractions[split].0).expect("split exists").push(ex.clone());
    }
    Ok(out)
}

pub(crate) fn byte_offset(text: &str, char_index: usize) -> usize {
    text.char_indices().nth(char_index).map_or(text.len(), |(b, _)| b)
}

pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let b0 = byte_offset(text, start);
    let b1 = b0 + byte_offset(&text[b0..], end - start);
    &text[b0..b1]
}

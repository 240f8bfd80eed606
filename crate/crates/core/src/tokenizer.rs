//! Word-level lowercase tokenization, the vocabulary, and the encoder input
//! layout `[CLS] context [SEP] answer [SEP]` with its sentence-index map.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::QAExample;
use crate::error::{invalid, Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const SEP: TokenId = 4;
pub const CLS: TokenId = 5;

pub const SPECIAL_TOKENS: [&str; 6] = ["[PAD]", "[UNK]", "[BOS]", "[EOS]", "[SEP]", "[CLS]"];
pub const NUM_SPECIAL: usize = SPECIAL_TOKENS.len();

/// One surface token with its character offset in the source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Piece<'a> {
    pub text: &'a str,
    pub start: usize,
    pub alphanumeric: bool,
}

/// Splits on whitespace; runs of alphanumerics form one piece and every other
/// character is a piece by itself.
pub fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut run: Option<(usize, usize)> = None; // (byte start, char start)
    for (char_idx, (byte, c)) in text.char_indices().enumerate() {
        if c.is_alphanumeric() {
            if run.is_none() {
                run = Some((byte, char_idx));
            }
            continue;
        }
        if let Some((b0, c0)) = run.take() {
            out.push(Piece { text: &text[b0..byte], start: c0, alphanumeric: true });
        }
        if !c.is_whitespace() {
            out.push(Piece {
                text: &text[byte..byte + c.len_utf8()],
                start: char_idx,
                alphanumeric: false,
            });
        }
    }
    if let Some((b0, c0)) = run {
        out.push(Piece { text: &text[b0..], start: c0, alphanumeric: true });
    }
    out
}

/// Lowercased tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    pieces(text).into_iter().map(|p| p.text.to_lowercase()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: BTreeMap<String, TokenId>,
}

impl Vocabulary {
    /// Counts lowercased tokens of every distinct context and every question,
    /// keeps those seen at least `min_freq` times, most frequent first (ties
    /// alphabetical), truncated to `max_size` regular entries.
    pub fn build(examples: &[QAExample], max_size: usize, min_freq: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(invalid("cannot build a vocabulary from an empty corpus"));
        }
        if max_size <= 10 {
            return Err(invalid("max_size must exceed 10"));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut contexts: BTreeMap<&str, ()> = BTreeMap::new();
        let mut count = |text: &str| {
            for t in tokenize(text) {
                *counts.entry(t).or_insert(0) += 1;
            }
        };
        for ex in examples {
            if contexts.insert(ex.document.context.as_str(), ()).is_none() {
                count(&ex.document.context);
            }
            count(&ex.document.question);
        }
        let mut ranked: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size);
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t).collect())
    }

    /// Vocabulary whose regular (non-special) entries are `tokens`, in order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = BTreeMap::new();
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            token_to_id.insert(s.to_string(), i as TokenId);
        }
        for t in tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(invalid(alloc::format!("invalid vocabulary token {t:?}")));
            }
            let id = id_to_token.len() as TokenId;
            if token_to_id.insert(t.clone(), id).is_some() {
                return Err(invalid(alloc::format!("duplicate vocabulary token {t:?}")));
            }
            id_to_token.push(t);
        }
        Ok(Self { id_to_token, token_to_id })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Non-special tokens in id order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.id_to_token[NUM_SPECIAL..]
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        pieces(text).into_iter().map(|p| self.id(&p.text.to_lowercase())).collect()
    }

    /// Space-joined tokens; PAD and BOS are skipped and decoding stops at the
    /// first EOS.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut words: Vec<&str> = Vec::new();
        for &id in ids {
            match id {
                PAD | BOS => continue,
                EOS => break,
                _ => words.push(
                    self.token(id)
                        .ok_or_else(|| invalid(alloc::format!("token id {id} out of range")))?,
                ),
            }
        }
        Ok(words.join(" "))
    }
}

pub fn encode_text(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    vocab.encode(text)
}

pub fn decode_ids(ids: &[TokenId], vocab: &Vocabulary) -> Result<String> {
    vocab.decode(ids)
}

/// Encoder input: `[CLS] ctx [SEP] answer [SEP]`, optionally followed by PADs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelInput {
    pub token_ids: Vec<TokenId>,
    /// Sentence ordinal for context tokens, `-1` elsewhere.
    pub sentence_index: Vec<i32>,
    pub answer_mask: Vec<u8>,
    /// Number of non-pad positions.
    pub length: usize,
    /// Original sentence index behind each ordinal.
    pub kept_sentences: Vec<usize>,
}

impl ModelInput {
    pub fn num_sentences(&self) -> usize {
        self.kept_sentences.len()
    }

    /// Copy extended with `extra` PAD positions.
    pub fn padded(&self, extra: usize) -> ModelInput {
        let mut out = self.clone();
        out.token_ids.extend(std::iter::repeat_n(PAD, extra));
        out.sentence_index.extend(std::iter::repeat_n(-1, extra));
        out.answer_mask.extend(std::iter::repeat_n(0, extra));
        out
    }

    /// Token positions grouped by sentence ordinal.
    pub fn sentence_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.num_sentences()];
        for (pos, &s) in self.sentence_index.iter().enumerate() {
            if s >= 0 {
                groups[s as usize].push(pos);
            }
        }
        groups
    }

    /// Checks every layout invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.token_ids.len();
        if self.sentence_index.len() != n || self.answer_mask.len() != n || self.length > n {
            return Err(Error::Invariant("model input field lengths disagree".into()));
        }
        let body = &self.token_ids[..self.length];
        if body.first() != Some(&CLS) || body.iter().filter(|&&t| t == CLS).count() != 1 {
            return Err(Error::Invariant("exactly one CLS, at position 0".into()));
        }
        let seps: Vec<usize> =
            body.iter().enumerate().filter(|(_, &t)| t == SEP).map(|(i, _)| i).collect();
        if seps.len() != 2 || seps[1] != self.length - 1 {
            return Err(Error::Invariant("expected two SEP tokens, the last at the end".into()));
        }
        if self.token_ids[self.length..].iter().any(|&t| t != PAD) {
            return Err(Error::Invariant("non-pad token after length".into()));
        }
        let mut prev = 0;
        for pos in 0..n {
            let in_context = pos > 0 && pos < seps[0];
            let in_answer = pos > seps[0] && pos < seps[1];
            let s = self.sentence_index[pos];
            if in_context {
                if s < prev || s > prev + 1 || (pos == 1 && s != 0) {
                    return Err(Error::Invariant("sentence ordinals not contiguous".into()));
                }
                prev = s;
            } else if s != -1 {
                return Err(Error::Invariant("non-context token carries a sentence".into()));
            }
            if (self.answer_mask[pos] == 1) != in_answer {
                return Err(Error::Invariant("answer mask off the answer segment".into()));
            }
        }
        if seps[0] < 2 || prev as usize + 1 != self.num_sentences() {
            return Err(Error::Invariant("context segment and kept sentences disagree".into()));
        }
        if seps[1] == seps[0] + 1 {
            return Err(Error::Invariant("empty answer segment".into()));
        }
        Ok(())
    }
}

/// Layout over all sentences of `example`.
pub fn assemble_model_input(
    example: &QAExample,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<ModelInput> {
    let all: Vec<usize> = (0..example.num_sentences()).collect();
    assemble_model_input_subset(example, vocab, max_len, &all)
}

/// Layout over the sentences listed in `keep` (original indices).
///
/// When the layout exceeds `max_len`, whole sentences are dropped farthest
/// from the answer sentence first (ties drop the later sentence). If a single
/// sentence still overflows, its tokens are cut to a window around the answer.
pub fn assemble_model_input_subset(
    example: &QAExample,
    vocab: &Vocabulary,
    max_len: usize,
    keep: &[usize],
) -> Result<ModelInput> {
    if max_len < 8 {
        return Err(invalid("max_len must be at least 8"));
    }
    let answer_ids = vocab.encode(&example.document.answer_text);
    if answer_ids.is_empty() {
        return Err(invalid("answer has no tokens"));
    }
    let needed = answer_ids.len() + 4;
    if needed > max_len {
        return Err(Error::InputTooLong { needed, max_len });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() || kept.iter().any(|&i| i >= example.num_sentences()) {
        return Err(invalid("sentence subset is empty or out of range"));
    }
    let anchor = example.answer_sentence_index;
    let mut sentence_tokens: BTreeMap<usize, Vec<TokenId>> = kept
        .iter()
        .map(|&i| (i, vocab.encode(example.sentence_text(i))))
        .collect();
    let budget = max_len - 3 - answer_ids.len();
    let mut total: usize = sentence_tokens.values().map(Vec::len).sum();
    while total > budget && kept.len() > 1 {
        let (pos, _) = kept
            .iter()
            .enumerate()
            .max_by_key(|&(_, &i)| (i.abs_diff(anchor), i))
            .expect("non-empty");
        let dropped = kept.remove(pos);
        total -= sentence_tokens.remove(&dropped).map_or(0, |t| t.len());
    }
    if total > budget {
        let only = kept[0];
        let tokens = sentence_tokens.get_mut(&only).expect("kept sentence");
        let center = if only == anchor { answer_token_offset(example) } else { 0 };
        let start = center.saturating_sub(budget / 2).min(tokens.len() - budget);
        *tokens = tokens[start..start + budget].to_vec();
    }

    let mut input = ModelInput {
        token_ids: Vec::with_capacity(max_len),
        sentence_index: Vec::with_capacity(max_len),
        answer_mask: Vec::with_capacity(max_len),
        length: 0,
        kept_sentences: kept.clone(),
    };
    let push = |input: &mut ModelInput, id, sentence: i32, answer: u8| {
        input.token_ids.push(id);
        input.sentence_index.push(sentence);
        input.answer_mask.push(answer);
    };
    push(&mut input, CLS, -1, 0);
    for (ordinal, original) in kept.iter().enumerate() {
        for &id in &sentence_tokens[original] {
            push(&mut input, id, ordinal as i32, 0);
        }
    }
    push(&mut input, SEP, -1, 0);
    for &id in &answer_ids {
        push(&mut input, id, -1, 1);
    }
    push(&mut input, SEP, -1, 0);
    input.length = input.token_ids.len();
    Ok(input)
}

/// Index of the first answer-sentence token at or after the answer start.
fn answer_token_offset(example: &QAExample) -> usize {
    let span = example.sentences[example.answer_sentence_index];
    let rel = example.document.answer_start - span.start;
    pieces(example.sentence_text(span.index))
        .iter()
        .position(|p| p.start >= rel)
        .unwrap_or(0)
}

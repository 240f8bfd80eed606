//! Weak relevance labels (top-k cosine against the answer) and question types.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::QAExample;
use crate::embedding::{cosine_similarity, EmbeddingBackend};
use crate::error::{invalid, Result};
use crate::tokenizer::{pieces, tokenize};

/// Function words dropped before embedding.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has",
    "have", "he", "her", "his", "if", "in", "into", "is", "it", "its", "of", "on", "or", "our",
    "she", "so", "such", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "those", "to", "was", "were", "which", "while", "with", "would", "you",
];

fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

/// Tokens used for similarity: lowercased alphanumeric words without
/// stopwords, followed by the initials of every run of two or more
/// capitalized words ("International Business Machines" adds "ibm").
pub fn label_tokens(text: &str) -> Vec<String> {
    fn end_run(initials: &mut String, run: &mut usize, acronyms: &mut Vec<String>) {
        if *run >= 2 {
            acronyms.push(core::mem::take(initials));
        }
        initials.clear();
        *run = 0;
    }
    let mut words = Vec::new();
    let mut acronyms = Vec::new();
    let mut initials = String::new();
    let mut run = 0usize;
    for piece in pieces(text) {
        if !piece.alphanumeric {
            end_run(&mut initials, &mut run, &mut acronyms);
            continue;
        }
        let lower = piece.text.to_lowercase();
        let mut chars = piece.text.chars();
        let first = chars.next().unwrap_or(' ');
        let capitalized = first.is_uppercase() && chars.all(|c| c.is_lowercase());
        if capitalized && !is_stopword(&lower) {
            initials.extend(first.to_lowercase());
            run += 1;
        } else {
            end_run(&mut initials, &mut run, &mut acronyms);
        }
        if !is_stopword(&lower) {
            words.push(lower);
        }
    }
    end_run(&mut initials, &mut run, &mut acronyms);
    words.append(&mut acronyms);
    words
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceLabels {
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub k: usize,
}

impl RelevanceLabels {
    pub fn positives(&self) -> usize {
        self.labels.iter().map(|&l| usize::from(l)).sum()
    }
}

/// Marks the `min(k, n)` highest scores; equal scores favour the lower index.
pub fn top_k_labels(scores: &[f64], k: usize) -> Vec<u8> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = alloc::vec![0u8; scores.len()];
    for &i in order.iter().take(k) {
        labels[i] = 1;
    }
    labels
}

/// Per-sentence cosine similarity to the answer. Sentences (or answers) whose
/// token view is empty score 0.
pub fn sentence_scores(example: &QAExample, backend: &dyn EmbeddingBackend) -> Result<Vec<f64>> {
    let answer = label_tokens(&example.document.answer_text);
    let answer = if answer.is_empty() { None } else { Some(backend.embed_tokens(&answer)?) };
    (0..example.num_sentences())
        .map(|i| {
            let tokens = label_tokens(example.sentence_text(i));
            match (&answer, tokens.is_empty()) {
                (Some(a), false) => Ok(cosine_similarity(&backend.embed_tokens(&tokens)?, a)?.value),
                _ => Ok(0.0),
            }
        })
        .collect()
}

pub fn make_relevance_labels(
    example: &QAExample,
    backend: &dyn EmbeddingBackend,
    k: usize,
) -> Result<RelevanceLabels> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if example.num_sentences() == 0 {
        return Err(invalid("example has no sentences"));
    }
    let scores = sentence_scores(example, backend)?;
    Ok(RelevanceLabels { labels: top_k_labels(&scores, k), scores, k })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuestionType {
    What,
    Who,
    When,
    Where,
    Why,
    How,
    Which,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 8] = [
        QuestionType::What,
        QuestionType::Who,
        QuestionType::When,
        QuestionType::Where,
        QuestionType::Why,
        QuestionType::How,
        QuestionType::Which,
        QuestionType::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::What => "what",
            QuestionType::Who => "who",
            QuestionType::When => "when",
            QuestionType::Where => "where",
            QuestionType::Why => "why",
            QuestionType::How => "how",
            QuestionType::Which => "which",
            QuestionType::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// First wh-word scanning left to right; `Other` when there is none.
pub fn question_type_of(question: &str) -> Result<QuestionType> {
    if question.trim().is_empty() {
        return Err(invalid("empty question"));
    }
    let found = tokenize(question).iter().find_map(|t| match t.as_str() {
        "what" => Some(QuestionType::What),
        "who" | "whom" | "whose" => Some(QuestionType::Who),
        "when" => Some(QuestionType::When),
        "where" => Some(QuestionType::Where),
        "why" => Some(QuestionType::Why),
        "how" => Some(QuestionType::How),
        "which" => Some(QuestionType::Which),
        _ => None,
    });
    Ok(found.unwrap_or(QuestionType::Other))
}

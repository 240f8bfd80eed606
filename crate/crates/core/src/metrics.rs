//! BLEU-4, ROUGE-L and METEOR-lite over lowercased word tokens.
//!
//! METEOR-lite aligns exact matches, then suffix-stripped matches; there is no
//! synonym stage, so its numbers are not comparable with full METEOR.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Description of the BLEU smoothing, recorded next to reported scores.
pub const BLEU_SMOOTHING: &str =
    "corpus BLEU-4 with brevity penalty; unigram precision unsmoothed; for n >= 2 a zero match count becomes 1 / (total n-grams + 1)";

pub const ROUGE_BETA: f64 = 1.2;

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> BTreeMap<Vec<&str>, usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 (see [`BLEU_SMOOTHING`]).
pub fn bleu4<T: AsRef<str>>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(invalid("BLEU needs at least one candidate"));
    }
    if candidates.len() != references.len() {
        return Err(invalid(format!("{} candidates for {} references", candidates.len(), references.len())));
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (cand, reference) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += reference.len();
        for n in 1..=4 {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            totals[n - 1] += c.values().sum::<usize>();
            matches[n - 1] += c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    if cand_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if n == 0 || matches[n] > 0 {
            matches[n] as f64 / totals[n] as f64
        } else {
            1.0 / (totals[n] as f64 + 1.0)
        };
        log_sum += libm::log(p);
    }
    let bp = if cand_len > ref_len { 1.0 } else { libm::exp(1.0 - ref_len as f64 / cand_len as f64) };
    Ok((bp * libm::exp(log_sum / 4.0)).clamp(0.0, 1.0))
}

/// Sentence-level BLEU-4 with the same smoothing.
pub fn sentence_bleu4<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let c: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    bleu4(&[c], &[r]).unwrap_or(0.0)
}

pub fn lcs_length<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// Either side was empty; all fields are 0.
    pub empty: bool,
}

pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> RougeL {
    if candidate.is_empty() || reference.is_empty() {
        return RougeL { precision: 0.0, recall: 0.0, f: 0.0, empty: true };
    }
    let lcs = lcs_length(candidate, reference) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let f = if lcs == 0.0 { 0.0 } else { (1.0 + b2) * precision * recall / (recall + b2 * precision) };
    RougeL { precision, recall, f, empty: false }
}

const STEM_SUFFIXES: [&str; 5] = ["ing", "ed", "es", "s", "ly"];

/// Strips the first listed suffix that leaves at least three characters.
pub fn light_stem(word: &str) -> &str {
    for suffix in STEM_SUFFIXES {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.chars().count() >= 3 {
                return stem;
            }
        }
    }
    word
}

/// Candidate-to-reference alignment: exact matches first, then stems, each
/// stage greedy left to right taking the earliest free reference position.
pub fn meteor_alignment<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Vec<(usize, usize)> {
    let mut ref_used = alloc::vec![false; reference.len()];
    let mut cand_used = alloc::vec![false; candidate.len()];
    let mut pairs = Vec::new();
    let stages: [fn(&str) -> &str; 2] = [|w| w, light_stem];
    for key in stages {
        for (i, c) in candidate.iter().enumerate() {
            if cand_used[i] {
                continue;
            }
            let ck = key(c.as_ref());
            if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && key(reference[j].as_ref()) == ck) {
                ref_used[j] = true;
                cand_used[i] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Runs of matches adjacent in both sequences.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)) {
            chunks += 1;
        }
    }
    chunks
}

/// `F_mean · (1 − 0.5 · (chunks / matches)^3)` with `F_mean = 10PR / (R + 9P)`.
pub fn meteor_lite<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let pairs = meteor_alignment(candidate, reference);
    if pairs.is_empty() {
        return 0.0;
    }
    let m = pairs.len() as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = count_chunks(&pairs) as f64 / m;
    fmean * (1.0 - 0.5 * frag * frag * frag)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleScores {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub per_example: Vec<ExampleScores>,
    pub n_examples: usize,
}

/// Corpus BLEU-4 and the means of per-example ROUGE-L and METEOR-lite.
pub fn evaluate<T: AsRef<str>>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<MetricReport> {
    let bleu = bleu4(candidates, references)?;
    let per_example: Vec<ExampleScores> = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| ExampleScores {
            bleu4: sentence_bleu4(c, r),
            rouge_l: rouge_l(c, r).f,
            meteor_lite: meteor_lite(c, r),
        })
        .collect();
    let n = per_example.len();
    let mean = |f: fn(&ExampleScores) -> f64| per_example.iter().map(f).sum::<f64>() / n as f64;
    Ok(MetricReport {
        bleu4: bleu,
        rouge_l: mean(|s| s.rouge_l),
        meteor_lite: mean(|s| s.meteor_lite),
        n_examples: n,
        per_example,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = vec![toks("what does ibm stand for")];
        assert!((bleu4(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bleu4(&[toks("a b c d")], &[toks("e f g h")]).unwrap(), 0.0);
        assert!(bleu4::<String>(&[], &[]).is_err());
    }

    #[test]
    fn bleu_cat_on_mat_by_hand() {
        // Matches 5/6, 3/5, 1/4, 0/3 -> smoothed 1/4; equal lengths so no penalty.
        let got = bleu4(&[toks("the cat sat on the mat")], &[toks("the cat is on the mat")]).unwrap();
        let expect = libm::exp((libm::log(5.0 / 6.0) + libm::log(3.0 / 5.0) + libm::log(1.0 / 4.0) + libm::log(1.0 / 4.0)) / 4.0);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn rouge_examples() {
        let r = rouge_l(&toks("a b c"), &toks("a x c"));
        assert!((r.f - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")).f, 0.0);
        assert_eq!(rouge_l(&toks("a b"), &toks("a b")).f, 1.0);
        assert!(rouge_l(&toks(""), &toks("a")).empty);
        let (x, y) = (toks("a b c d"), toks("b d e"));
        let (f, b) = (rouge_l(&x, &y), rouge_l(&y, &x));
        assert_eq!((f.precision, f.recall), (b.recall, b.precision));
    }

    #[test]
    fn meteor_examples() {
        let got = meteor_lite(&toks("what is ibm"), &toks("what is the ibm"));
        let fmean = 10.0 * 0.75 / (0.75 + 9.0);
        let expect = fmean * (1.0 - 0.5 * libm::pow(2.0 / 3.0, 3.0));
        assert!((got - expect).abs() < 1e-12);
        assert!((expect - 0.655_270_655).abs() < 1e-9);
        let same = toks("what does ibm stand for");
        assert!((meteor_lite(&same, &same) - (1.0 - 0.5 / 125.0)).abs() < 1e-12);
        assert_eq!(meteor_lite(&toks("a b"), &toks("c d")), 0.0);
        // Stem stage: "renamed" ~ "renaming".
        assert!(meteor_lite(&toks("renamed"), &toks("renaming")) > 0.0);
        assert_eq!(light_stem("is"), "is");
        assert_eq!(light_stem("followed"), "follow");
    }

    #[test]
    fn report_shape() {
        let c = vec![toks("what is ibm"), toks("who ran")];
        let r = vec![toks("what is the ibm"), toks("who ran home")];
        let rep = evaluate(&c, &r).unwrap();
        assert_eq!(rep.n_examples, 2);
        assert_eq!(rep.per_example.len(), 2);
        for v in [rep.bleu4, rep.rouge_l, rep.meteor_lite] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

//! Independent reference implementations shared by the property and acceptance tests.
#![allow(dead_code)]

use qgen_core::decoding::{normalized_score, DecodeConfig, StepScorer};
use qgen_core::rng::splitmix;
use qgen_core::tokenizer::TokenId;

/// Prefix-dependent pseudo-random distributions over `vocab` ids.
pub struct HashScorer {
    pub seed: u64,
    pub vocab: usize,
}

impl StepScorer for HashScorer {
    fn log_probs(&self, prefix: &[TokenId]) -> qgen_core::Result<Vec<f64>> {
        let mut h = self.seed;
        for &t in prefix {
            h = splitmix(h ^ u64::from(t));
        }
        let logits: Vec<f64> = (0..self.vocab)
            .map(|v| {
                let r = splitmix(h.wrapping_add(v as u64));
                3.0 * ((r >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        Ok(logits.iter().map(|l| l - max - z.ln()).collect())
    }
}

/// Every complete hypothesis of at most `max_len` generated ids: ends at the
/// first EOS or runs to the budget.
pub fn enumerate(scorer: &dyn StepScorer, config: &DecodeConfig) -> Vec<(Vec<TokenId>, f64, bool)> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![config.bos], 0.0f64)];
    while let Some((prefix, lp)) = stack.pop() {
        let dist = scorer.log_probs(&prefix).unwrap();
        for (id, &v) in dist.iter().enumerate() {
            let id = id as TokenId;
            if config.banned.contains(&id) {
                continue;
            }
            let mut next = prefix.clone();
            next.push(id);
            let score = lp + v;
            if id == config.eos {
                out.push((next, score, true));
            } else if next.len() - 1 == config.max_len {
                out.push((next, score, false));
            } else {
                stack.push((next, score));
            }
        }
    }
    out
}

/// Best complete hypothesis by normalized score; ties go to the smaller sequence.
pub fn oracle_best(all: &[(Vec<TokenId>, f64, bool)], alpha: f64) -> Vec<TokenId> {
    let best = all
        .iter()
        .min_by(|a, b| {
            let (sa, sb) = (normalized_score(a.1, a.0.len() - 1, alpha), normalized_score(b.1, b.0.len() - 1, alpha));
            sb.total_cmp(&sa).then_with(|| a.0.cmp(&b.0))
        })
        .unwrap();
    best.0.clone()
}

pub fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return vec![];
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

/// Clipped matches by repeated removal from a reference pool.
pub fn clipped(cand: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let mut pool = ngrams(reference, n);
    let grams = ngrams(cand, n);
    let mut hits = 0;
    for g in &grams {
        if let Some(p) = pool.iter().position(|r| r == g) {
            pool.remove(p);
            hits += 1;
        }
    }
    (hits, grams.len())
}

pub fn oracle_bleu(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    for (c, r) in cands.iter().zip(refs) {
        for n in 1..=4 {
            let (h, g) = clipped(c, r, n);
            m[n - 1] += h;
            t[n - 1] += g;
        }
    }
    let c_len: usize = cands.iter().map(Vec::len).sum();
    let r_len: usize = refs.iter().map(Vec::len).sum();
    if c_len == 0 || m[0] == 0 {
        return 0.0;
    }
    let p: Vec<f64> = (0..4)
        .map(|n| if n > 0 && m[n] == 0 { 1.0 / (t[n] as f64 + 1.0) } else { m[n] as f64 / t[n] as f64 })
        .collect();
    let geo = (p.iter().map(|x| x.ln()).sum::<f64>() / 4.0).exp();
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    bp * geo
}

/// LCS by enumerating candidate subsequences (lists are short).
pub fn oracle_lcs(a: &[String], b: &[String]) -> usize {
    fn is_subsequence(sub: &[&String], b: &[String]) -> bool {
        let mut it = b.iter();
        sub.iter().all(|s| it.any(|x| x == *s))
    }
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() > best && is_subsequence(&sub, b) {
            best = sub.len();
        }
    }
    best
}

pub fn oracle_rouge(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = oracle_lcs(c, r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    let b2 = 1.44;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

pub fn oracle_stem(w: &str) -> String {
    for suf in ["ing", "ed", "es", "s", "ly"] {
        if w.len() >= suf.len() + 3 && w.ends_with(suf) {
            return w[..w.len() - suf.len()].to_string();
        }
    }
    w.to_string()
}

pub fn oracle_meteor(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut taken_r = vec![false; r.len()];
    let mut link: Vec<Option<usize>> = vec![None; c.len()];
    for stemmed in [false, true] {
        let key = |w: &String| if stemmed { oracle_stem(w) } else { w.clone() };
        for i in 0..c.len() {
            if link[i].is_some() {
                continue;
            }
            for j in 0..r.len() {
                if !taken_r[j] && key(&c[i]) == key(&r[j]) {
                    taken_r[j] = true;
                    link[i] = Some(j);
                    break;
                }
            }
        }
    }
    let pairs: Vec<(usize, usize)> = link.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 1;
    for w in pairs.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
            chunks += 1;
        }
    }
    let (p, rec) = (m as f64 / c.len() as f64, m as f64 / r.len() as f64);
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    fmean * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}


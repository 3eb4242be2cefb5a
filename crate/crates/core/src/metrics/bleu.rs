//! Corpus-level BLEU with clipped n-gram counts and a brevity penalty.

use std::collections::HashMap;

use crate::error::{Error, Result};

const SMOOTH_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to `len`; ties resolve to the shorter one.
fn closest_ref_len(len: usize, refs: &[Vec<usize>]) -> usize {
    let mut best = refs[0].len();
    for r in refs.iter().skip(1) {
        let d_new = r.len().abs_diff(len);
        let d_best = best.abs_diff(len);
        if d_new < d_best || (d_new == d_best && r.len() < best) {
            best = r.len();
        }
    }
    best
}

/// Cumulative BLEU-1..BLEU-`max_n` over a corpus.
///
/// Per sentence, candidate n-gram counts are clipped to the maximum count
/// across that sentence's references; numerators and denominators sum over
/// the corpus before the ratio. The brevity penalty uses the closest
/// reference length per candidate. Zero precisions are floored at 1e-9 so a
/// longer-n score degrades instead of collapsing the geometric mean.
pub fn bleu(candidates: &[Vec<usize>], references: &[Vec<Vec<usize>>], max_n: usize) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::config("bleu needs at least one candidate"));
    }
    if candidates.len() != references.len() {
        return Err(Error::config(format!(
            "bleu got {} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if !(1..=4).contains(&max_n) {
        return Err(Error::config(format!("bleu max_n must be 1..=4, got {max_n}")));
    }
    if references.iter().any(|r| r.is_empty()) {
        return Err(Error::config("every candidate needs at least one reference"));
    }

    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += closest_ref_len(cand.len(), refs);
        for n in 1..=max_n {
            let cand_counts = ngram_counts(cand, n);
            if cand_counts.is_empty() {
                continue;
            }
            let ref_counts: Vec<HashMap<&[usize], usize>> =
                refs.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, &count) in &cand_counts {
                let clip = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matched[n - 1] += count.min(clip);
                total[n - 1] += count;
            }
        }
    }

    let bp = if cand_len == 0 {
        0.0
    } else if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };

    let mut scores = Vec::with_capacity(max_n);
    for upto in 1..=max_n {
        let mut log_sum = 0.0;
        for n in 1..=upto {
            let p = if total[n - 1] == 0 {
                SMOOTH_EPSILON
            } else {
                let raw = matched[n - 1] as f64 / total[n - 1] as f64;
                if raw == 0.0 {
                    SMOOTH_EPSILON
                } else {
                    raw
                }
            };
            log_sum += p.ln();
        }
        scores.push(bp * (log_sum / upto as f64).exp());
    }
    Ok(scores)
}

//! Grounding counts and F1 scores over generated captions.

use serde::Serialize;

use crate::metrics::bbox::{iou_unchecked, Box4};

/// One generated object word with the box of its attended region. A word
/// without a box (external systems may omit them) can still word-match but
/// never counts as localized.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictedObject {
    pub word: usize,
    pub attended: Option<Box4>,
}

/// One annotated object instance from the scene's reference captions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoolEntry {
    pub word: usize,
    pub gt_box: Box4,
}

/// Outcome flags for one predicted object word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PredOutcome {
    /// Word-matched to a reference pool entry.
    pub matched: bool,
    /// Matched and the attended box overlaps a reference box of the word.
    pub localized: bool,
}

/// Per-sentence grounding counts.
///
/// `generated` counts predicted object words, `annotated` the reference
/// pool, `matched_pred`/`matched_pool` the two sides of a one-to-one greedy
/// word matching in token order, and `localized` the matched predictions
/// whose attended box clears IoU > 0.5 against any reference box of the
/// same word.
#[derive(Clone, Debug, Serialize)]
pub struct SentenceEval {
    pub preds: Vec<PredictedObject>,
    pub pool: Vec<PoolEntry>,
    pub outcomes: Vec<PredOutcome>,
    pub generated: usize,
    pub annotated: usize,
    pub matched_pred: usize,
    pub matched_pool: usize,
    pub localized: usize,
}

pub const IOU_THRESHOLD: f64 = 0.5;

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl SentenceEval {
    pub fn prec_all(&self) -> f64 {
        ratio(self.localized, self.generated)
    }

    pub fn rec_all(&self) -> f64 {
        ratio(self.localized, self.annotated)
    }

    pub fn prec_loc(&self) -> f64 {
        ratio(self.localized, self.matched_pred)
    }

    pub fn rec_loc(&self) -> f64 {
        ratio(self.localized, self.matched_pool)
    }

    pub fn f1_all(&self) -> f64 {
        f1(self.prec_all(), self.rec_all())
    }

    pub fn f1_loc(&self) -> f64 {
        f1(self.prec_loc(), self.rec_loc())
    }
}

/// Scores one generated sentence against the scene's reference pool.
///
/// Matching walks predictions in token order and consumes at most one pool
/// entry per prediction (same word, first unconsumed). Localization then
/// checks the attended box against every reference box of that word, not
/// only the consumed entry.
pub fn sentence_counts(preds: &[PredictedObject], pool: &[PoolEntry]) -> SentenceEval {
    let mut consumed = vec![false; pool.len()];
    let mut outcomes = Vec::with_capacity(preds.len());
    let mut matched_pred = 0;
    let mut matched_pool = 0;
    let mut localized = 0;
    for p in preds {
        let slot = pool
            .iter()
            .enumerate()
            .position(|(k, entry)| !consumed[k] && entry.word == p.word);
        let mut outcome = PredOutcome {
            matched: false,
            localized: false,
        };
        if let Some(k) = slot {
            consumed[k] = true;
            matched_pred += 1;
            matched_pool += 1;
            outcome.matched = true;
            let hit = p.attended.as_ref().is_some_and(|attended| {
                pool.iter()
                    .filter(|entry| entry.word == p.word)
                    .any(|entry| iou_unchecked(attended, &entry.gt_box) > IOU_THRESHOLD)
            });
            if hit {
                localized += 1;
                outcome.localized = true;
            }
        }
        outcomes.push(outcome);
    }
    SentenceEval {
        generated: preds.len(),
        annotated: pool.len(),
        matched_pred,
        matched_pool,
        localized,
        preds: preds.to_vec(),
        pool: pool.to_vec(),
        outcomes,
    }
}

/// Scores for one object class aggregated over a split.
#[derive(Clone, Debug, Serialize)]
pub struct ClassScores {
    pub class: usize,
    pub generated: usize,
    pub annotated: usize,
    pub prec_all: f64,
    pub rec_all: f64,
    pub f1_all: f64,
    pub prec_loc: f64,
    pub rec_loc: f64,
    pub f1_loc: f64,
}

/// Per-class and macro F1 over all sentences. Every class in
/// `0..num_classes` appears; classes never predicted score zero, which
/// drags the macro average down by design.
pub fn f1_per_class<F>(
    evals: &[SentenceEval],
    num_classes: usize,
    class_of_word: F,
) -> (Vec<ClassScores>, f64, f64)
where
    F: Fn(usize) -> Option<usize>,
{
    let mut gen = vec![0usize; num_classes];
    let mut ann = vec![0usize; num_classes];
    let mut m_pred = vec![0usize; num_classes];
    let mut m_pool = vec![0usize; num_classes];
    let mut loc = vec![0usize; num_classes];
    for ev in evals {
        for (p, out) in ev.preds.iter().zip(&ev.outcomes) {
            if let Some(k) = class_of_word(p.word) {
                gen[k] += 1;
                if out.matched {
                    // One-to-one matching: the consumed pool entry carries
                    // the same word, hence the same class.
                    m_pred[k] += 1;
                    m_pool[k] += 1;
                    if out.localized {
                        loc[k] += 1;
                    }
                }
            }
        }
        for entry in &ev.pool {
            if let Some(k) = class_of_word(entry.word) {
                ann[k] += 1;
            }
        }
    }
    let mut per_class = Vec::with_capacity(num_classes);
    let (mut sum_all, mut sum_loc) = (0.0, 0.0);
    for k in 0..num_classes {
        let prec_all = ratio(loc[k], gen[k]);
        let rec_all = ratio(loc[k], ann[k]);
        let prec_loc = ratio(loc[k], m_pred[k]);
        let rec_loc = ratio(loc[k], m_pool[k]);
        let s = ClassScores {
            class: k,
            generated: gen[k],
            annotated: ann[k],
            prec_all,
            rec_all,
            f1_all: f1(prec_all, rec_all),
            prec_loc,
            rec_loc,
            f1_loc: f1(prec_loc, rec_loc),
        };
        sum_all += s.f1_all;
        sum_loc += s.f1_loc;
        per_class.push(s);
    }
    let macro_all = if num_classes == 0 {
        0.0
    } else {
        sum_all / num_classes as f64
    };
    let macro_loc = if num_classes == 0 {
        0.0
    } else {
        sum_loc / num_classes as f64
    };
    (per_class, macro_all, macro_loc)
}

/// Mean of per-sentence F1_all and F1_loc.
pub fn f1_per_sentence(evals: &[SentenceEval]) -> (f64, f64) {
    if evals.is_empty() {
        return (0.0, 0.0);
    }
    let n = evals.len() as f64;
    let all: f64 = evals.iter().map(SentenceEval::f1_all).sum();
    let loc: f64 = evals.iter().map(SentenceEval::f1_loc).sum();
    (all / n, loc / n)
}

//! Group-fairness and utility metrics over binary predictions, plus the
//! entropy-gap bounds on statistical parity, equal opportunity and FPR.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Decision threshold on the positive-class probability.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("{0}")]
    UndefinedRate(&'static str),
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("score {value} at index {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("entropy gap must be >= 0, got {0}")]
    NegativeGap(f64),
    #[error("negative-label ratio must lie in [0, 1], got {0}")]
    RatioOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    scores: Vec<f64>,
    hard: Vec<u8>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
}

impl PredictionSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, sensitive: Vec<u8>) -> Result<Self, FairnessError> {
        let n = scores.len();
        for (what, len) in [("labels", labels.len()), ("sensitive", sensitive.len())] {
            if len != n {
                return Err(FairnessError::LengthMismatch { what, got: len, expected: n });
            }
        }
        if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(FairnessError::ScoreOutOfRange { index, value });
        }
        let hard = scores.iter().map(|&s| u8::from(s >= THRESHOLD)).collect();
        Ok(PredictionSet { scores, hard, labels, sensitive })
    }

    /// Build from hard decisions only; scores are set to 0 or 1.
    pub fn from_hard(hard: Vec<u8>, labels: Vec<u8>, sensitive: Vec<u8>) -> Result<Self, FairnessError> {
        Self::new(hard.iter().map(|&h| f64::from(h)).collect(), labels, sensitive)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn hard(&self) -> &[u8] {
        &self.hard
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    /// Restrict to the given indices.
    pub fn subset(&self, idx: &[usize]) -> Self {
        PredictionSet {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            hard: idx.iter().map(|&i| self.hard[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sensitive: idx.iter().map(|&i| self.sensitive[i]).collect(),
        }
    }

    /// True when every hard decision is the same class.
    pub fn is_constant(&self) -> bool {
        self.hard.windows(2).all(|w| w[0] == w[1])
    }

    /// Positive-decision rate among nodes accepted by `keep`.
    fn positive_rate(&self, keep: impl Fn(usize) -> bool, err: &'static str) -> Result<f64, FairnessError> {
        let (mut pos, mut total) = (0usize, 0usize);
        for i in (0..self.len()).filter(|&i| keep(i)) {
            total += 1;
            pos += self.hard[i] as usize;
        }
        if total == 0 {
            return Err(FairnessError::UndefinedRate(err));
        }
        Ok(pos as f64 / total as f64)
    }
}

/// `|P(ŷ=1 | s=0) - P(ŷ=1 | s=1)|`.
pub fn statistical_parity(p: &PredictionSet) -> Result<f64, FairnessError> {
    let s = p.sensitive();
    let r0 = p.positive_rate(|i| s[i] == 0, "statistical parity: group 0 is empty")?;
    let r1 = p.positive_rate(|i| s[i] == 1, "statistical parity: group 1 is empty")?;
    Ok((r0 - r1).abs())
}

/// `|P(ŷ=1 | s=0, y=1) - P(ŷ=1 | s=1, y=1)|`.
pub fn equal_opportunity(p: &PredictionSet) -> Result<f64, FairnessError> {
    let (s, y) = (p.sensitive(), p.labels());
    let r0 = p.positive_rate(|i| s[i] == 0 && y[i] == 1, "equal opportunity: group 0 has no positive labels")?;
    let r1 = p.positive_rate(|i| s[i] == 1 && y[i] == 1, "equal opportunity: group 1 has no positive labels")?;
    Ok((r0 - r1).abs())
}

/// `FP / (FP + TN)`.
pub fn false_positive_rate(p: &PredictionSet) -> Result<f64, FairnessError> {
    let y = p.labels();
    p.positive_rate(|i| y[i] == 0, "false positive rate: no negative labels")
}

pub fn accuracy(p: &PredictionSet) -> Result<f64, FairnessError> {
    if p.is_empty() {
        return Err(FairnessError::UndefinedRate("accuracy: empty prediction set"));
    }
    let correct = p.hard().iter().zip(p.labels()).filter(|(h, y)| h == y).count();
    Ok(correct as f64 / p.len() as f64)
}

/// F1 on the positive class; 0 when there are no true positives.
pub fn f1_score(p: &PredictionSet) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&h, &y) in p.hard().iter().zip(p.labels()) {
        match (h, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// Mann-Whitney AUC over scores with half credit for ties.
pub fn roc_auc(p: &PredictionSet) -> Result<f64, FairnessError> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p.scores()[a].total_cmp(&p.scores()[b]));
    let n_pos = p.labels().iter().filter(|&&y| y == 1).count();
    let n_neg = p.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(FairnessError::UndefinedRate("AUC: labels contain a single class"));
    }
    // Average ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && p.scores()[order[j + 1]] == p.scores()[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| p.labels()[k] == 1).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// `(acc, f1, auc)`.
pub fn utility_metrics(p: &PredictionSet) -> Result<(f64, f64, f64), FairnessError> {
    Ok((accuracy(p)?, f1_score(p), roc_auc(p)?))
}

/// Upper bound on both ΔSP and ΔEO: `sqrt(2 * gap)`.
pub fn sp_eo_bound(gap: f64) -> Result<f64, FairnessError> {
    if !(gap >= 0.0) {
        return Err(FairnessError::NegativeGap(gap));
    }
    Ok((2.0 * gap).sqrt())
}

/// Upper bound on FPR: `r / (1 + r) + sqrt(2 * gap)` with `r` the
/// negative-label proportion.
pub fn fpr_bound(gap: f64, r: f64) -> Result<f64, FairnessError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(FairnessError::RatioOutOfRange(r));
    }
    Ok(r / (1.0 + r) + sp_eo_bound(gap)?)
}

/// Measured metrics and bounds for one evaluation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub fpr: f64,
    pub d_sp: f64,
    pub d_eo: f64,
    pub sp_bound: f64,
    pub eo_bound: f64,
    pub fpr_bound: f64,
}

impl FairnessReport {
    /// Metrics of `p` with bounds for entropy gap `gap` and negative ratio `r`.
    pub fn evaluate(p: &PredictionSet, gap: f64, r: f64) -> Result<Self, FairnessError> {
        let (acc, f1, auc) = utility_metrics(p)?;
        let b = sp_eo_bound(gap)?;
        Ok(FairnessReport {
            acc,
            auc,
            f1,
            fpr: false_positive_rate(p)?,
            d_sp: statistical_parity(p)?,
            d_eo: equal_opportunity(p)?,
            sp_bound: b,
            eo_bound: b,
            fpr_bound: fpr_bound(gap, r)?,
        })
    }
}

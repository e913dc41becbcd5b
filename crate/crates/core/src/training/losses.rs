//! Task, contrastive and structural-entropy losses as tape expressions.

use std::f64::consts::LN_2;

use ndarray::Array2;

use super::{TrainConfig, TrainError};
use crate::autodiff::{Tape, Var};
use crate::graph::{SensitivePartition, WeightedGraph};

/// Mean binary cross-entropy `-(1/k) Σ [y ln p + (1 - y) ln(1 - p)]` of
/// `scores` (`k x 1`, probabilities) against `labels`.
pub fn bce_loss(tape: &mut Tape, scores: Var, labels: &[u8]) -> Result<Var, TrainError> {
    let (k, c) = tape.shape(scores);
    if c != 1 || k != labels.len() {
        return Err(TrainError::Precondition(format!(
            "bce_loss: scores are {k}x{c} but there are {} labels",
            labels.len()
        )));
    }
    if let Some(i) = tape.value(scores).iter().position(|s| !s.is_finite()) {
        return Err(TrainError::Precondition(format!("bce_loss: score {i} is not finite")));
    }
    let y = Array2::from_shape_fn((k, 1), |(i, _)| f64::from(labels[i]));
    let not_y = y.mapv(|v| 1.0 - v);
    let y = tape.constant(y);
    let not_y = tape.constant(not_y);

    let log_p = tape.log(scores);
    let neg = tape.scale(scores, -1.0);
    let one_minus = tape.add_scalar(neg, 1.0);
    let log_q = tape.log(one_minus);
    let a = tape.mul(y, log_p)?;
    let b = tape.mul(not_y, log_q)?;
    let ll = tape.add(a, b)?;
    let mean = tape.mean(ll);
    Ok(tape.scale(mean, -1.0))
}

/// Symmetric NT-Xent between per-node projections of two views.
///
/// With `S_ik = cos(za_i, zl_k) / t`, each node contributes
/// `-S_ii + ln Σ_k exp(S_ik)` (anchor to learner) and
/// `-S_ii + ln Σ_k exp(S_ki)` (learner to anchor); the loss averages the
/// `2n` terms. Negatives are the other nodes of the opposite view only.
pub fn nt_xent(tape: &mut Tape, za: Var, zl: Var, temperature: f64) -> Result<Var, TrainError> {
    let (sa, sl) = (tape.shape(za), tape.shape(zl));
    if sa != sl {
        return Err(TrainError::Precondition(format!("nt_xent: view shapes differ ({sa:?} vs {sl:?})")));
    }
    for (name, v) in [("anchor", za), ("learner", zl)] {
        if let Some(i) = tape.value(v).rows().into_iter().position(|r| r.iter().all(|&x| x == 0.0)) {
            return Err(TrainError::Precondition(format!("nt_xent: {name} projection row {i} is zero")));
        }
    }
    let n = sa.0 as f64;
    let a = tape.row_normalize(za);
    let l = tape.row_normalize(zl);
    let lt = tape.transpose(l);
    let sims = tape.matmul(a, lt)?;
    let sims = tape.scale(sims, 1.0 / temperature);

    let positives = tape.mul(a, l)?;
    let positives = tape.sum(positives);
    let positives = tape.scale(positives, -2.0 / temperature);

    let e = tape.exp(sims);
    let row = tape.row_sum(e);
    let row = tape.log(row);
    let row = tape.sum(row);
    let et = tape.transpose(e);
    let col = tape.row_sum(et);
    let col = tape.log(col);
    let col = tape.sum(col);

    let total = tape.add(positives, row)?;
    let total = tape.add(total, col)?;
    Ok(tape.scale(total, 1.0 / (2.0 * n)))
}

/// Index structure for evaluating the 2D-SE of a reweighted graph on a tape.
#[derive(Debug, Clone)]
pub struct EntropyStructure {
    n: usize,
    /// `[i_0, .., i_{m-1}, j_0, .., j_{m-1}]`.
    endpoints: Vec<usize>,
    groups: Vec<usize>,
    crossing: Vec<usize>,
}

impl EntropyStructure {
    /// Requires an edge touching each sensitive group so both block volumes
    /// stay positive for any positive weights.
    pub fn new(g: &WeightedGraph) -> Result<Self, TrainError> {
        let s = g.sensitive();
        for group in 0..2u8 {
            if !g.edges().iter().any(|e| s[e.i] == group || s[e.j] == group) {
                return Err(TrainError::Precondition(format!(
                    "entropy loss: sensitive group {group} has no incident edges"
                )));
            }
        }
        let edges = g.edges();
        let endpoints = edges.iter().map(|e| e.i).chain(edges.iter().map(|e| e.j)).collect();
        let crossing = edges.iter().enumerate().filter(|(_, e)| s[e.i] != s[e.j]).map(|(k, _)| k).collect();
        Ok(EntropyStructure { n: g.n(), endpoints, groups: s.iter().map(|&x| x as usize).collect(), crossing })
    }

    /// Uses the partition's membership only; volumes come from the weights.
    pub fn from_partition(g: &WeightedGraph, _p: &SensitivePartition) -> Result<Self, TrainError> {
        Self::new(g)
    }
}

/// 2D-SE in bits of the graph whose `m x 1` edge weights are `weights`.
///
/// Expanded form used here:
/// `H ln 2 = [Σ_b V_b ln V_b - Σ_v d_v ln d_v - c Σ_b ln V_b + 2 c ln V] / V`
/// with block volumes `V_b`, total volume `V` and cut weight `c`.
pub fn structural_entropy(tape: &mut Tape, weights: Var, st: &EntropyStructure) -> Result<Var, TrainError> {
    let both = tape.concat_rows(&[weights, weights])?;
    let degrees = tape.scatter_add_rows(both, &st.endpoints, st.n)?;
    let vol = tape.sum(degrees);
    let blocks = tape.scatter_add_rows(degrees, &st.groups, 2)?;

    let log_d = tape.log(degrees);
    let d_log_d = tape.mul(degrees, log_d)?;
    let d_log_d = tape.sum(d_log_d);
    let log_b = tape.log(blocks);
    let b_log_b = tape.mul(blocks, log_b)?;
    let b_log_b = tape.sum(b_log_b);
    let sum_log_b = tape.sum(log_b);
    let log_vol = tape.log(vol);

    let mut numer = tape.sub(b_log_b, d_log_d)?;
    if !st.crossing.is_empty() {
        let cut = tape.gather_rows(weights, &st.crossing)?;
        let cut = tape.sum(cut);
        let c_log_b = tape.mul(cut, sum_log_b)?;
        let c_log_v = tape.mul(cut, log_vol)?;
        let c_log_v = tape.scale(c_log_v, 2.0);
        numer = tape.sub(numer, c_log_b)?;
        numer = tape.add(numer, c_log_v)?;
    }
    let h = tape.div(numer, vol)?;
    Ok(tape.scale(h, 1.0 / LN_2))
}

/// `-H(G_l)`.
pub fn se_loss(tape: &mut Tape, weights: Var, st: &EntropyStructure) -> Result<Var, TrainError> {
    let h = structural_entropy(tape, weights, st)?;
    Ok(tape.scale(h, -1.0))
}

/// `L_task + λ1 L_cont + λ2 L_SE`; minimizing it maximizes the entropy.
pub fn total_loss(
    tape: &mut Tape,
    task: Var,
    cont: Option<Var>,
    se: Option<Var>,
    cfg: &TrainConfig,
) -> Result<Var, TrainError> {
    let mut total = task;
    for (term, weight) in [(cont, cfg.effective_lambda1()), (se, cfg.effective_lambda2())] {
        if let Some(t) = term {
            if weight != 0.0 {
                let scaled = tape.scale(t, weight);
                total = tape.add(total, scaled)?;
            }
        }
    }
    let v = tape.scalar(total);
    if !v.is_finite() {
        return Err(TrainError::Precondition(format!("total loss is not finite ({v})")));
    }
    Ok(total)
}

//! Two-dimensional structural entropy of a graph under the sensitive-attribute
//! partition, its analytic per-edge gradient, and a finite-difference oracle.
//!
//! All entropies are in bits. Internally the gradient is assembled in nats
//! and converted with a single `1 / ln 2` factor.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::graph::{GraphError, SensitivePartition, WeightedGraph};
use crate::numeric::sigmoid;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("total volume vol(G) is zero")]
    ZeroVolume,
    #[error("sensitive group {group} has zero volume")]
    ZeroBlockVolume { group: usize },
    #[error("edge #{index} has weight {w}; the gradient requires every weight > 0")]
    NonPositiveWeight { index: usize, w: f64 },
    #[error("finite-difference step {eps} must be positive and below every weight (edge #{index} has {w})")]
    StepTooLarge { eps: f64, index: usize, w: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    /// H^{P_S}(G) = intra_term + inter_term.
    pub h: f64,
    /// Volume-weighted degree entropy inside each group.
    pub intra_term: f64,
    /// Cut term `-Σ g(V_i)/vol(G) log2(vol(V_i)/vol(G))`.
    pub inter_term: f64,
    /// Maximum achievable entropy for the group sizes.
    pub h_max: f64,
    /// `max(0, h_max - h)`.
    pub gap: f64,
}

/// The `(alpha, beta)` pair contributed by one group to one edge's gradient,
/// in nats: `alpha` from the intra-group entropy term, `beta` from the cut term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupTerms {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGradient {
    /// dH/dA_(i,j) in bits per unit weight, aligned to the canonical edge list.
    pub per_edge: Vec<f64>,
    /// Per edge, the terms for groups 0 and 1. Empty for finite-difference output.
    pub per_group_terms: Vec<[GroupTerms; 2]>,
}

/// Maximum 2D-SE for the given group sizes: `log2 n + H(group proportions)`.
pub fn max_entropy(sizes: [usize; 2]) -> f64 {
    let n = (sizes[0] + sizes[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let group_entropy: f64 = sizes
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum();
    n.log2() + group_entropy
}

fn check_volumes(vol: f64, p: &SensitivePartition) -> Result<(), EntropyError> {
    if !(vol > 0.0) {
        return Err(EntropyError::ZeroVolume);
    }
    for (group, &v) in p.volumes.iter().enumerate() {
        if !(v > 0.0) {
            return Err(EntropyError::ZeroBlockVolume { group });
        }
    }
    Ok(())
}

/// Degree entropy of one group in nats, `-Σ p ln p` with `p = d / vol(V_i)`.
/// Zero-degree members contribute nothing (0 ln 0 = 0).
fn group_degree_entropy(g: &WeightedGraph, block: &[usize], vol: f64) -> f64 {
    block
        .iter()
        .map(|&v| g.degrees()[v])
        .filter(|&d| d > 0.0)
        .map(|d| {
            let p = d / vol;
            -p * p.ln()
        })
        .sum()
}

/// Two-dimensional structural entropy w.r.t. the sensitive partition.
pub fn two_dim_se(g: &WeightedGraph, p: &SensitivePartition) -> Result<EntropyReport, EntropyError> {
    let vol = g.volume();
    check_volumes(vol, p)?;

    let mut intra = 0.0;
    let mut inter = 0.0;
    for b in 0..2 {
        let vb = p.volumes[b];
        intra += vb / vol * group_degree_entropy(g, &p.blocks[b], vb);
        inter -= p.cuts[b] / vol * (vb / vol).ln();
    }
    let intra_term = intra / LN_2;
    let inter_term = inter / LN_2;
    let h = intra_term + inter_term;
    let h_max = max_entropy(p.block_sizes());
    if h > h_max + 1e-9 {
        log::warn!("2D-SE {h} exceeds h_max {h_max}; gap clamped to 0");
    }
    Ok(EntropyReport { h, intra_term, inter_term, h_max, gap: (h_max - h).max(0.0) })
}

/// Convenience: partition `g` by its own sensitive attribute and evaluate.
pub fn entropy_of(g: &WeightedGraph) -> Result<EntropyReport, EntropyError> {
    two_dim_se(g, &SensitivePartition::of(g))
}

/// Analytic gradient of the 2D-SE with respect to every edge weight.
///
/// For group `b` with volume `V_b`, degree entropy `E_b` (nats), cut weight
/// `c_b` and total volume `V`, an edge `(i, j)` with `k_b` endpoints in `b`
/// and crossing indicator `x` gets
///
/// ```text
/// dE_b    = k_b (1 - E_b) / V_b - Σ_{u ∈ {i,j} ∩ b} (1 + ln(d_u / V_b)) / V_b
/// alpha_b = k_b E_b / V + V_b dE_b / V - 2 V_b E_b / V²
/// beta_b  = -[(x / V - 2 c_b / V²) ln(V_b / V) + (c_b / V)(k_b / V_b - 2 / V)]
/// ```
///
/// and `dH/dA_(i,j) = Σ_b (alpha_b + beta_b) / ln 2`.
pub fn se_gradient(g: &WeightedGraph, p: &SensitivePartition) -> Result<EdgeGradient, EntropyError> {
    let vol = g.volume();
    check_volumes(vol, p)?;
    if let Some((index, &w)) = g.weights().iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
        return Err(EntropyError::NonPositiveWeight { index, w });
    }

    let s = g.sensitive();
    let d = g.degrees();
    let ent =
        [group_degree_entropy(g, &p.blocks[0], p.volumes[0]), group_degree_entropy(g, &p.blocks[1], p.volumes[1])];

    let mut per_edge = Vec::with_capacity(g.num_edges());
    let mut per_group_terms = Vec::with_capacity(g.num_edges());
    for e in g.edges() {
        let crossing = if s[e.i] != s[e.j] { 1.0 } else { 0.0 };
        let mut terms = [GroupTerms::default(); 2];
        for (b, t) in terms.iter_mut().enumerate() {
            let vb = p.volumes[b];
            let cb = p.cuts[b];
            let eb = ent[b];
            let mut k = 0.0;
            let mut endpoint_sum = 0.0;
            for u in [e.i, e.j] {
                if s[u] as usize == b {
                    k += 1.0;
                    endpoint_sum += 1.0 + (d[u] / vb).ln();
                }
            }
            let d_ent = k * (1.0 - eb) / vb - endpoint_sum / vb;
            t.alpha = k * eb / vol + vb * d_ent / vol - 2.0 * vb * eb / (vol * vol);
            t.beta = -((crossing / vol - 2.0 * cb / (vol * vol)) * (vb / vol).ln() + cb / vol * (k / vb - 2.0 / vol));
        }
        per_edge.push(terms.iter().map(|t| t.alpha + t.beta).sum::<f64>() / LN_2);
        per_group_terms.push(terms);
    }
    Ok(EdgeGradient { per_edge, per_group_terms })
}

/// `ln(x + δ) - ln(x - δ)`.
fn ln_ratio(x: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        0.0
    } else {
        (2.0 * delta / (x - delta)).ln_1p()
    }
}

/// `(x + δ) ln(x + δ) - (x - δ) ln(x - δ)`.
fn xlnx_diff(x: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        0.0
    } else {
        x * ln_ratio(x, delta) + delta * ((x + delta).ln() + (x - delta).ln())
    }
}

/// `(c + δc) ln(x + δx) - (c - δc) ln(x - δx)`.
fn c_ln_diff(c: f64, dc: f64, x: f64, dx: f64) -> f64 {
    c * ln_ratio(x, dx) + dc * ((x + dx).ln() + (x - dx).ln())
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Central finite-difference estimate `(H(w + ε e_k) - H(w - ε e_k)) / 2ε`
/// of the per-edge gradient.
///
/// With `N = Σ_b V_b ln V_b - Σ_v d_v ln d_v - c Σ_b ln V_b + 2 c ln V` the
/// entropy is `H = N / (V ln 2)`, and only the terms touching edge `k` move.
/// The difference of each moving term is evaluated directly (through
/// `ln_1p`) instead of subtracting two nearly equal entropies, so the
/// quotient keeps its accuracy even where the gradient is tiny.
pub fn se_gradient_fd(g: &WeightedGraph, p: &SensitivePartition, eps: f64) -> Result<EdgeGradient, EntropyError> {
    let vol = g.volume();
    check_volumes(vol, p)?;
    if let Some((index, &w)) = g.weights().iter().enumerate().find(|(_, &w)| !(eps > 0.0) || w <= eps) {
        return Err(EntropyError::StepTooLarge { eps, index, w });
    }
    let mut group = vec![0usize; g.n()];
    for (b, block) in p.blocks.iter().enumerate() {
        for &v in block {
            group[v] = b;
        }
    }
    let d = g.degrees();
    let vb = p.volumes;
    let c = p.cuts[0];
    let all_xlnx: f64 = d.iter().map(|&x| xlnx(x)).sum();

    let mut per_edge = Vec::with_capacity(g.num_edges());
    for e in g.edges() {
        let (bi, bj) = (group[e.i], group[e.j]);
        let mut dv = [0.0; 2];
        dv[bi] += eps;
        dv[bj] += eps;
        let dc = if bi != bj { eps } else { 0.0 };
        let dvol = 2.0 * eps;

        let mut diff = -xlnx_diff(d[e.i], eps) - xlnx_diff(d[e.j], eps) + 2.0 * c_ln_diff(c, dc, vol, dvol);
        for b in 0..2 {
            diff += xlnx_diff(vb[b], dv[b]) - c_ln_diff(c, dc, vb[b], dv[b]);
        }

        let others = all_xlnx - xlnx(d[e.i]) - xlnx(d[e.j]);
        let numerator = |sign: f64| {
            let cs = c + sign * dc;
            let vs = vol + sign * dvol;
            let mut n = -others - xlnx(d[e.i] + sign * eps) - xlnx(d[e.j] + sign * eps) + 2.0 * cs * vs.ln();
            for b in 0..2 {
                let x = vb[b] + sign * dv[b];
                n += xlnx(x) - cs * x.ln();
            }
            n
        };
        let sum = numerator(1.0) + numerator(-1.0);
        // N+/V+ - N-/V- with V± = V ± 2ε.
        let dh = (vol * diff - dvol * sum) / ((vol + dvol) * (vol - dvol));
        per_edge.push(dh / (LN_2 * 2.0 * eps));
    }
    Ok(EdgeGradient { per_edge, per_group_terms: Vec::new() })
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub graph: WeightedGraph,
    /// H before the first step and after every step; length `steps + 1`.
    pub trajectory: Vec<f64>,
}

/// Gradient ascent on sigmoid edge logits to maximize the 2D-SE.
///
/// The input weights are first rescaled so the largest becomes 1/2 (H is
/// invariant to a global scale), the logits are set to their inverse
/// sigmoid, and each step applies `a += lr * dH/dw * σ'(a)`. The returned
/// graph carries the learned weights mapped back to the input's scale.
pub fn entropy_ascent(
    g: &WeightedGraph,
    p: &SensitivePartition,
    steps: usize,
    lr: f64,
) -> Result<AscentResult, EntropyError> {
    let start = two_dim_se(g, p)?.h;
    if steps == 0 {
        return Ok(AscentResult { graph: g.clone(), trajectory: vec![start] });
    }
    if let Some((index, &w)) = g.weights().iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
        return Err(EntropyError::NonPositiveWeight { index, w });
    }
    let scale = 2.0 * g.weights().iter().cloned().fold(0.0, f64::max);
    let mut logits: Vec<f64> = g
        .weights()
        .iter()
        .map(|&w| {
            let x = w / scale;
            (x / (1.0 - x)).ln()
        })
        .collect();

    let mut trajectory = vec![start];
    let mut current = g.clone();
    for _ in 0..steps {
        let weights: Vec<f64> = logits.iter().map(|&a| sigmoid(a)).collect();
        let view = g.reweight(&weights)?;
        let grad = se_gradient(&view, &SensitivePartition::of(&view))?;
        for ((a, &w), dh) in logits.iter_mut().zip(&weights).zip(&grad.per_edge) {
            *a += lr * dh * w * (1.0 - w);
        }
        let weights: Vec<f64> = logits.iter().map(|&a| scale * sigmoid(a)).collect();
        current = g.reweight(&weights)?;
        trajectory.push(two_dim_se(&current, &SensitivePartition::of(&current))?.h);
    }
    Ok(AscentResult { graph: current, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::partition_by_sensitive;
    use crate::testutil::{bare, k4, random_graph};

    #[test]
    fn single_edge_fixture() {
        let g = bare(2, &[(0, 1, 1.0)], vec![0, 1]);
        let r = entropy_of(&g).unwrap();
        assert_eq!(r.intra_term, 0.0);
        assert!((r.inter_term - 1.0).abs() < 1e-15);
        assert!((r.h - 1.0).abs() < 1e-15);
        assert!((r.h_max - 2.0).abs() < 1e-15);
        assert!((r.gap - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k4_fixture() {
        let r = entropy_of(&k4()).unwrap();
        assert!((r.intra_term - 1.0).abs() < 1e-12);
        assert!((r.inter_term - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.h - 5.0 / 3.0).abs() < 1e-12);
        assert!((r.h_max - 3.0).abs() < 1e-12);
        assert!((r.gap - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let g = bare(3, &[(0, 1, 1.0)], vec![0, 0, 1]);
        assert_eq!(entropy_of(&g), Err(EntropyError::ZeroBlockVolume { group: 1 }));
        let g = bare(2, &[], vec![0, 1]);
        assert_eq!(entropy_of(&g), Err(EntropyError::ZeroVolume));
        let g = bare(3, &[(0, 1, 1.0), (1, 2, 0.0)], vec![0, 1, 1]);
        let p = partition_by_sensitive(&g);
        assert!(two_dim_se(&g, &p).is_ok());
        assert_eq!(se_gradient(&g, &p), Err(EntropyError::NonPositiveWeight { index: 1, w: 0.0 }));
    }

    #[test]
    fn isolated_nodes_contribute_nothing() {
        let with = bare(3, &[(0, 1, 1.0)], vec![0, 1, 1]);
        let without = bare(2, &[(0, 1, 1.0)], vec![0, 1]);
        assert_eq!(entropy_of(&with).unwrap().h, entropy_of(&without).unwrap().h);
    }

    #[test]
    fn k4_gradient_symmetry() {
        let g = k4();
        let p = partition_by_sensitive(&g);
        for grad in [se_gradient(&g, &p).unwrap(), se_gradient_fd(&g, &p, 1e-5).unwrap()] {
            let s = g.sensitive();
            let (inter, intra): (Vec<_>, Vec<_>) =
                g.edges().iter().zip(&grad.per_edge).partition(|(e, _)| s[e.i] != s[e.j]);
            assert_eq!(inter.len(), 4);
            assert_eq!(intra.len(), 2);
            for (_, &v) in &inter {
                assert!((v - inter[0].1).abs() < 1e-9);
            }
            assert!((intra[0].1 - intra[1].1).abs() < 1e-9);
        }
    }

    #[test]
    fn single_edge_gradient_vanishes() {
        let g = bare(2, &[(0, 1, 1.0)], vec![0, 1]);
        let p = partition_by_sensitive(&g);
        assert!(se_gradient(&g, &p).unwrap().per_edge[0].abs() < 1e-12);
        assert!(se_gradient_fd(&g, &p, 1e-5).unwrap().per_edge[0].abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_fd_seed7() {
        let g = random_graph(10, 0.4, (0.5, 2.0), 7);
        let p = partition_by_sensitive(&g);
        let a = se_gradient(&g, &p).unwrap();
        let f = se_gradient_fd(&g, &p, 1e-5).unwrap();
        for (x, y) in a.per_edge.iter().zip(&f.per_edge) {
            assert!(crate::numeric::rel_err(*x, *y) <= 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn group_terms_recombine() {
        let g = random_graph(12, 0.4, (0.5, 2.0), 3);
        let grad = se_gradient(&g, &partition_by_sensitive(&g)).unwrap();
        for (v, t) in grad.per_edge.iter().zip(&grad.per_group_terms) {
            let sum = (t[0].alpha + t[0].beta + t[1].alpha + t[1].beta) / LN_2;
            assert!((v - sum).abs() <= 1e-14 * v.abs().max(1.0), "{v} vs {sum}");
        }
    }

    #[test]
    fn fd_matches_plain_difference_quotient() {
        for seed in 0..5 {
            let g = random_graph(15, 0.3, (0.5, 2.0), seed);
            let p = partition_by_sensitive(&g);
            let fd = se_gradient_fd(&g, &p, 1e-4).unwrap();
            for k in 0..g.num_edges() {
                let mut w = g.weights().to_vec();
                w[k] += 1e-4;
                let up = entropy_of(&g.reweight(&w).unwrap()).unwrap().h;
                w[k] -= 2e-4;
                let down = entropy_of(&g.reweight(&w).unwrap()).unwrap().h;
                let plain = (up - down) / 2e-4;
                assert!((plain - fd.per_edge[k]).abs() < 1e-9, "edge {k}: {plain} vs {}", fd.per_edge[k]);
            }
        }
    }

    #[test]
    fn fd_step_precondition() {
        let g = bare(2, &[(0, 1, 1e-6)], vec![0, 1]);
        let p = partition_by_sensitive(&g);
        assert!(matches!(se_gradient_fd(&g, &p, 1e-5), Err(EntropyError::StepTooLarge { .. })));
        assert!(se_gradient_fd(&g, &p, 0.0).is_err());
    }

    #[test]
    fn ascent_cases() {
        let g = k4();
        let p = partition_by_sensitive(&g);
        let r = entropy_ascent(&g, &p, 0, 0.1).unwrap();
        assert_eq!(r.graph, g);
        assert_eq!(r.trajectory.len(), 1);

        let r = entropy_ascent(&g, &p, 200, 0.1).unwrap();
        assert!(r.trajectory[200] > r.trajectory[0]);
        for w in r.trajectory.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }

        let one = bare(2, &[(0, 1, 1.0)], vec![0, 1]);
        let r = entropy_ascent(&one, &partition_by_sensitive(&one), 50, 0.1).unwrap();
        for h in &r.trajectory {
            assert!((h - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ascent_regression_k4() {
        let g = k4();
        let r = entropy_ascent(&g, &partition_by_sensitive(&g), 200, 0.1).unwrap();
        // Frozen from the first run.
        assert!((r.trajectory[200] - K4_ASCENT_FINAL).abs() < 1e-9, "{}", r.trajectory[200]);
    }

    const K4_ASCENT_FINAL: f64 = 1.832818126064686;
}

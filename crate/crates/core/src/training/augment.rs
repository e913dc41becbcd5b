use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::AugmentConfig;
use crate::graph::WeightedGraph;

/// A randomly perturbed copy of a graph's weights and features.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub weights: Vec<f64>,
    pub features: Array2<f64>,
    /// Nodes that survived node dropping, ascending.
    pub kept: Vec<usize>,
}

/// Edge dropout, feature-column masking and node dropping.
///
/// A dropped edge gets weight 0; a dropped node loses its features and every
/// incident edge. If every node would be dropped, none is.
pub fn augment_view(g: &WeightedGraph, base: &[f64], cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> AugmentedView {
    let mut weights: Vec<f64> = base.iter().map(|&w| if rng.random_bool(cfg.edge_drop) { 0.0 } else { w }).collect();
    let mut features = g.features().clone();
    for mut col in features.columns_mut() {
        if rng.random_bool(cfg.feature_mask) {
            col.fill(0.0);
        }
    }
    let mut dropped: Vec<bool> = (0..g.n()).map(|_| rng.random_bool(cfg.node_drop)).collect();
    if dropped.iter().all(|&d| d) {
        dropped.fill(false);
    }
    for (k, e) in g.edges().iter().enumerate() {
        if dropped[e.i] || dropped[e.j] {
            weights[k] = 0.0;
        }
    }
    let mut kept = Vec::with_capacity(g.n());
    for (v, &d) in dropped.iter().enumerate() {
        if d {
            features.row_mut(v).fill(0.0);
        } else {
            kept.push(v);
        }
    }
    AugmentedView { weights, features, kept }
}

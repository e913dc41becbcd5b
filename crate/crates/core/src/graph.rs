//! Weighted undirected graphs with node attributes and the two-block
//! partition induced by a binary sensitive attribute.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge #{index} ({i}, {j}) is a self-loop")]
    SelfLoop { index: usize, i: usize, j: usize },
    #[error("edge #{index} ({i}, {j}) duplicates an earlier edge")]
    DuplicateEdge { index: usize, i: usize, j: usize },
    #[error("edge #{index} ({i}, {j}) has negative or non-finite weight {w}")]
    BadWeight { index: usize, i: usize, j: usize, w: f64 },
    #[error("edge #{index} ({i}, {j}) references a node outside [0, {n})")]
    NodeOutOfRange { index: usize, i: usize, j: usize, n: usize },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("{what}[{index}] = {value} is not binary")]
    NotBinary { what: &'static str, index: usize, value: u8 },
}

/// Canonical undirected edge `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
}

/// Undirected graph with nonnegative edge weights, node features `X`,
/// binary labels `Y` and binary sensitive attribute `S`.
///
/// Edges are stored sorted by `(i, j)` with `i < j`; the weight vector is
/// parallel to the edge list so per-edge parameters can be indexed stably.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    weights: Vec<f64>,
    features: Array2<f64>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
    degrees: Vec<f64>,
    /// For each node, `(neighbor, edge index)` pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
}

fn check_binary(what: &'static str, v: &[u8]) -> Result<(), GraphError> {
    match v.iter().position(|&x| x > 1) {
        Some(index) => Err(GraphError::NotBinary { what, index, value: v[index] }),
        None => Ok(()),
    }
}

fn check_weight(index: usize, e: Edge, w: f64) -> Result<(), GraphError> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(GraphError::BadWeight { index, i: e.i, j: e.j, w });
    }
    Ok(())
}

impl WeightedGraph {
    /// Validates and canonicalizes the inputs. Edge endpoints may be given in
    /// either order; the result stores them as `i < j` sorted ascending.
    pub fn new(
        n: usize,
        edges: &[(usize, usize, f64)],
        features: Array2<f64>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
    ) -> Result<Self, GraphError> {
        if features.nrows() != n {
            return Err(GraphError::LengthMismatch { what: "feature rows", got: features.nrows(), expected: n });
        }
        if labels.len() != n {
            return Err(GraphError::LengthMismatch { what: "labels", got: labels.len(), expected: n });
        }
        if sensitive.len() != n {
            return Err(GraphError::LengthMismatch { what: "sensitive", got: sensitive.len(), expected: n });
        }
        check_binary("labels", &labels)?;
        check_binary("sensitive", &sensitive)?;

        let mut tagged = Vec::with_capacity(edges.len());
        for (index, &(a, b, w)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { index, i: a, j: b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop { index, i: a, j: b });
            }
            let e = Edge { i: a.min(b), j: a.max(b) };
            check_weight(index, e, w)?;
            tagged.push((e, w, index));
        }
        tagged.sort_by_key(|&(e, _, index)| (e, index));
        for pair in tagged.windows(2) {
            if pair[0].0 == pair[1].0 {
                let (e, _, index) = pair[1];
                return Err(GraphError::DuplicateEdge { index, i: e.i, j: e.j });
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for (k, &(e, _, _)) in tagged.iter().enumerate() {
            adjacency[e.i].push((e.j, k));
            adjacency[e.j].push((e.i, k));
        }
        let mut g = WeightedGraph {
            n,
            edges: tagged.iter().map(|t| t.0).collect(),
            weights: tagged.iter().map(|t| t.1).collect(),
            features,
            labels,
            sensitive,
            degrees: Vec::new(),
            adjacency,
        };
        g.refresh_degrees();
        Ok(g)
    }

    fn refresh_degrees(&mut self) {
        let mut d = vec![0.0; self.n];
        for (e, &w) in self.edges.iter().zip(&self.weights) {
            d[e.i] += w;
            d[e.j] += w;
        }
        self.degrees = d;
    }

    /// Same topology and attributes with a new weight per edge.
    pub fn reweight(&self, new_weights: &[f64]) -> Result<Self, GraphError> {
        if new_weights.len() != self.edges.len() {
            return Err(GraphError::LengthMismatch {
                what: "weights",
                got: new_weights.len(),
                expected: self.edges.len(),
            });
        }
        for (index, (&e, &w)) in self.edges.iter().zip(new_weights).enumerate() {
            check_weight(index, e, w)?;
        }
        let mut g = self.clone();
        g.weights = new_weights.to_vec();
        g.refresh_degrees();
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// `(neighbor, edge index)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    /// Sum of all degrees, i.e. twice the total edge weight.
    pub fn volume(&self) -> f64 {
        self.degrees.iter().sum()
    }

    /// Copy with the sensitive attribute flipped 0 <-> 1.
    pub fn with_swapped_groups(&self) -> Self {
        let mut g = self.clone();
        for s in &mut g.sensitive {
            *s = 1 - *s;
        }
        g
    }

    /// Fraction of nodes with label 0.
    pub fn negative_ratio(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.labels.iter().filter(|&&y| y == 0).count() as f64 / self.n as f64
    }
}

/// The partition `{V_S0, V_S1}` of the node set by sensitive attribute,
/// with block volumes and cut weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivePartition {
    pub blocks: [Vec<usize>; 2],
    pub volumes: [f64; 2],
    /// Total weight of edges with exactly one endpoint in each block.
    pub cuts: [f64; 2],
}

impl SensitivePartition {
    pub fn of(g: &WeightedGraph) -> Self {
        let mut blocks: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut volumes = [0.0; 2];
        for (v, &s) in g.sensitive().iter().enumerate() {
            blocks[s as usize].push(v);
            volumes[s as usize] += g.degrees()[v];
        }
        let s = g.sensitive();
        let cut: f64 = g.edges().iter().zip(g.weights()).filter(|(e, _)| s[e.i] != s[e.j]).map(|(_, &w)| w).sum();
        SensitivePartition { blocks, volumes, cuts: [cut, cut] }
    }

    pub fn block_sizes(&self) -> [usize; 2] {
        [self.blocks[0].len(), self.blocks[1].len()]
    }
}

/// Convenience for `SensitivePartition::of`.
pub fn partition_by_sensitive(g: &WeightedGraph) -> SensitivePartition {
    SensitivePartition::of(g)
}

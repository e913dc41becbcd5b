use ndarray::Array2;

use crate::graph::WeightedGraph;

pub use crate::data::random_graph;

pub fn bare(n: usize, edges: &[(usize, usize, f64)], s: Vec<u8>) -> WeightedGraph {
    WeightedGraph::new(n, edges, Array2::zeros((n, 1)), vec![0; n], s).unwrap()
}

pub fn k4() -> WeightedGraph {
    let mut e = Vec::new();
    for i in 0..4 {
        for j in i + 1..4 {
            e.push((i, j, 1.0));
        }
    }
    bare(4, &e, vec![0, 0, 1, 1])
}

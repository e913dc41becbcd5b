//! GCN encoder, projector, classifier and the edge-weight structure learner.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, GraphTopology, Tape, Var};
use crate::graph::{GraphError, WeightedGraph};
use crate::numeric::sigmoid;

pub const HIDDEN_DIM: usize = 64;
pub const PROJECTION_DIM: usize = 32;
pub const CLASSIFIER_HIDDEN: usize = 32;
/// Initial edge logit; `σ(7) ≈ 0.99909` so the learner starts near the input graph.
pub const INITIAL_LOGIT: f64 = 7.0;

/// Dense `D^{-1/2} (A + I) D^{-1/2}` using the graph's current weights.
pub fn normalize_adjacency(g: &WeightedGraph) -> Array2<f64> {
    let n = g.n();
    let mut a = Array2::<f64>::eye(n);
    for (e, &w) in g.edges().iter().zip(g.weights()) {
        a[[e.i, e.j]] = w;
        a[[e.j, e.i]] = w;
    }
    let r: Vec<f64> = g.degrees().iter().map(|d| 1.0 / (d + 1.0).sqrt()).collect();
    for ((i, j), v) in a.indexed_iter_mut() {
        *v *= r[i] * r[j];
    }
    a
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Linear {
    fn new(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Linear { weight: glorot(rng, fan_in, fan_out), bias: Array2::zeros((1, fan_out)) }
    }
}

/// Two-layer perceptron with a ReLU between the layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    fn new(rng: &mut ChaCha8Rng, input: usize, hidden: usize, output: usize) -> Self {
        Mlp { hidden: Linear::new(rng, input, hidden), output: Linear::new(rng, hidden, output) }
    }
}

/// Two-layer GCN: `H = Â ReLU(Â X W1) W2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnEncoder {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl GcnEncoder {
    pub fn new(rng: &mut ChaCha8Rng, input_dim: usize) -> Self {
        GcnEncoder { w1: glorot(rng, input_dim, HIDDEN_DIM), w2: glorot(rng, HIDDEN_DIM, HIDDEN_DIM) }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Forward pass without gradients.
    pub fn encode(&self, g: &WeightedGraph) -> Result<Array2<f64>, autodiff::AutodiffError> {
        let mut tape = Tape::new();
        let bound = BoundEncoder { w1: tape.constant(self.w1.clone()), w2: tape.constant(self.w2.clone()) };
        let topo = Arc::new(GraphTopology::of(g));
        let w = tape.constant(edge_column(g.weights()));
        let x = tape.constant(g.features().clone());
        let h = bound.forward(&mut tape, w, x, &topo)?;
        Ok(tape.value(h).clone())
    }
}

pub type Projector = Mlp;
pub type Classifier = Mlp;

/// One trainable logit per undirected edge; the learner view has weights `σ(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureLearner {
    /// Shape `m x 1`, aligned to the canonical edge list.
    pub logits: Array2<f64>,
}

impl StructureLearner {
    pub fn new(num_edges: usize) -> Self {
        StructureLearner { logits: Array2::from_elem((num_edges, 1), INITIAL_LOGIT) }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.logits.iter().map(|&a| sigmoid(a)).collect()
    }

    /// `g` with every edge weight replaced by `σ(a)`.
    pub fn learner_view(&self, g: &WeightedGraph) -> Result<WeightedGraph, GraphError> {
        if self.logits.nrows() != g.num_edges() {
            return Err(GraphError::LengthMismatch {
                what: "edge logits",
                got: self.logits.nrows(),
                expected: g.num_edges(),
            });
        }
        g.reweight(&self.weights())
    }
}

/// Column vector `m x 1` of edge weights.
pub fn edge_column(w: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((w.len(), 1), w.to_vec()).expect("column shape")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairGseModel {
    pub encoder: GcnEncoder,
    pub projector: Projector,
    pub classifier: Classifier,
    pub learner: StructureLearner,
}

impl FairGseModel {
    pub fn new(seed: u64, input_dim: usize, num_edges: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FairGseModel {
            encoder: GcnEncoder::new(&mut rng, input_dim),
            projector: Mlp::new(&mut rng, HIDDEN_DIM, PROJECTION_DIM, PROJECTION_DIM),
            classifier: Mlp::new(&mut rng, HIDDEN_DIM, CLASSIFIER_HIDDEN, 1),
            learner: StructureLearner::new(num_edges),
        }
    }

    /// Every trainable tensor in a fixed order (matches [`BoundModel::vars`]).
    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.encoder.w1,
            &mut self.encoder.w2,
            &mut self.projector.hidden.weight,
            &mut self.projector.hidden.bias,
            &mut self.projector.output.weight,
            &mut self.projector.output.bias,
            &mut self.classifier.hidden.weight,
            &mut self.classifier.hidden.bias,
            &mut self.classifier.output.weight,
            &mut self.classifier.output.bias,
            &mut self.learner.logits,
        ]
    }

    /// Register every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut p = |a: &Array2<f64>| tape.param(a.clone());
        let bind_linear =
            |p: &mut dyn FnMut(&Array2<f64>) -> Var, l: &Linear| BoundLinear { weight: p(&l.weight), bias: p(&l.bias) };
        let encoder = BoundEncoder { w1: p(&self.encoder.w1), w2: p(&self.encoder.w2) };
        let projector = BoundMlp {
            hidden: bind_linear(&mut p, &self.projector.hidden),
            output: bind_linear(&mut p, &self.projector.output),
        };
        let classifier = BoundMlp {
            hidden: bind_linear(&mut p, &self.classifier.hidden),
            output: bind_linear(&mut p, &self.classifier.output),
        };
        let logits = p(&self.learner.logits);
        BoundModel { encoder, projector, classifier, logits }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> autodiff::Result<Var> {
        let y = tape.matmul(x, self.weight)?;
        tape.add(y, self.bias)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundMlp {
    pub hidden: BoundLinear,
    pub output: BoundLinear,
}

impl BoundMlp {
    /// Pre-activation output of the second layer.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> autodiff::Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h);
        self.output.forward(tape, h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundEncoder {
    pub w1: Var,
    pub w2: Var,
}

impl BoundEncoder {
    /// `Â ReLU(Â X W1) W2` where `Â` is built from the `m x 1` edge weights.
    pub fn forward(&self, tape: &mut Tape, weights: Var, x: Var, topo: &Arc<GraphTopology>) -> autodiff::Result<Var> {
        let h = tape.matmul(x, self.w1)?;
        let h = tape.propagate(weights, h, topo)?;
        let h = tape.relu(h);
        let h = tape.matmul(h, self.w2)?;
        tape.propagate(weights, h, topo)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundModel {
    pub encoder: BoundEncoder,
    pub projector: BoundMlp,
    pub classifier: BoundMlp,
    pub logits: Var,
}

impl BoundModel {
    /// Same order as [`FairGseModel::params_mut`].
    pub fn vars(&self) -> Vec<Var> {
        vec![
            self.encoder.w1,
            self.encoder.w2,
            self.projector.hidden.weight,
            self.projector.hidden.bias,
            self.projector.output.weight,
            self.projector.output.bias,
            self.classifier.hidden.weight,
            self.classifier.hidden.bias,
            self.classifier.output.weight,
            self.classifier.output.bias,
            self.logits,
        ]
    }

    /// Learner-view edge weights `σ(a)` as an `m x 1` tape value.
    pub fn learner_weights(&self, tape: &mut Tape) -> Var {
        tape.sigmoid(self.logits)
    }

    /// Positive-class probabilities, `n x 1`.
    pub fn classify(&self, tape: &mut Tape, h: Var) -> autodiff::Result<Var> {
        let z = self.classifier.forward(tape, h)?;
        Ok(tape.sigmoid(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::random_graph;
    use crate::numeric::grad_close;
    use crate::testutil::bare;
    use ndarray::array;

    #[test]
    fn normalize_adjacency_examples() {
        let g = bare(1, &[], vec![0]);
        assert_eq!(normalize_adjacency(&g), array![[1.0]]);
        let g = bare(2, &[(0, 1, 1.0)], vec![0, 1]);
        let a = normalize_adjacency(&g);
        assert!(a.iter().all(|&x| (x - 0.5).abs() < 1e-15), "{a}");
        let g = random_graph(9, 0.5, (0.1, 3.0), 1);
        let a = normalize_adjacency(&g);
        assert_eq!(a, a.t());
    }

    #[test]
    fn encoder_shapes_and_zero_weights() {
        let g = random_graph(10, 0.3, (0.5, 2.0), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut enc = GcnEncoder::new(&mut rng, 4);
        assert_eq!(enc.encode(&g).unwrap().dim(), (10, HIDDEN_DIM));
        enc.w1.fill(0.0);
        assert!(enc.encode(&g).unwrap().iter().all(|&v| v == 0.0));
        let wrong = GcnEncoder::new(&mut rng, 5);
        assert!(wrong.encode(&g).is_err());
    }

    #[test]
    fn learner_view_cases() {
        let g = random_graph(8, 0.5, (0.5, 2.0), 3);
        let mut sl = StructureLearner::new(g.num_edges());
        for w in sl.learner_view(&g).unwrap().weights() {
            assert!((w - 0.999_088_948_806).abs() < 1e-9);
            assert!((w - 1.0).abs() < 1e-3);
        }
        sl.logits.fill(0.0);
        assert!(sl.learner_view(&g).unwrap().weights().iter().all(|&w| w == 0.5));
        sl.logits.fill(60.0);
        assert!(sl.learner_view(&g).unwrap().weights().iter().all(|&w| w <= 1.0 && w > 0.999));
        let short = StructureLearner::new(g.num_edges() - 1);
        assert!(short.learner_view(&g).is_err());
    }

    #[test]
    fn encoder_gradient_wrt_edge_logit() {
        let g = random_graph(10, 0.35, (0.5, 2.0), 5);
        let model = FairGseModel::new(4, g.feature_dim(), g.num_edges());
        let topo = Arc::new(GraphTopology::of(&g));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let readout = Array2::from_shape_fn((g.n(), HIDDEN_DIM), |_| rng.random_range(-1.0..1.0));
        let logits: Array2<f64> = Array2::from_shape_fn((g.num_edges(), 1), |_| rng.random_range(-1.0..2.0));

        let eval = |a: &Array2<f64>, grad: bool| {
            let mut t = Tape::new();
            let b = BoundEncoder { w1: t.constant(model.encoder.w1.clone()), w2: t.constant(model.encoder.w2.clone()) };
            let lv = if grad { t.param(a.clone()) } else { t.constant(a.clone()) };
            let w = t.sigmoid(lv);
            let x = t.constant(g.features().clone());
            let h = b.forward(&mut t, w, x, &topo).unwrap();
            let r = t.constant(readout.clone());
            let p = t.mul(h, r).unwrap();
            let s = t.sum(p);
            if grad {
                t.backward(s).unwrap();
            }
            (t.scalar(s), t.grad(lv))
        };
        let (_, analytic) = eval(&logits, true);
        for k in 0..g.num_edges() {
            let mut up = logits.clone();
            up[[k, 0]] += 1e-5;
            let mut down = logits.clone();
            down[[k, 0]] -= 1e-5;
            let fd = (eval(&up, false).0 - eval(&down, false).0) / 2e-5;
            assert!(grad_close(analytic[[k, 0]], fd, 1e-5, 1e-6, 1e-9), "edge {k}: {} vs {fd}", analytic[[k, 0]]);
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let g = random_graph(9, 0.4, (0.5, 2.0), 8);
        let perm = [3, 7, 0, 8, 1, 5, 2, 6, 4]; // new index of old node v is perm[v]
        let mut x = Array2::zeros(g.features().dim());
        for (v, &pv) in perm.iter().enumerate() {
            x.row_mut(pv).assign(&g.features().row(v));
        }
        let edges: Vec<_> = g.edges().iter().zip(g.weights()).map(|(e, &w)| (perm[e.i], perm[e.j], w)).collect();
        let mut s = vec![0; g.n()];
        let mut y = vec![0; g.n()];
        for v in 0..g.n() {
            s[perm[v]] = g.sensitive()[v];
            y[perm[v]] = g.labels()[v];
        }
        let pg = WeightedGraph::new(g.n(), &edges, x, y, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = GcnEncoder::new(&mut rng, 4);
        let h = enc.encode(&g).unwrap();
        let ph = enc.encode(&pg).unwrap();
        for (v, &pv) in perm.iter().enumerate() {
            for (a, b) in h.row(v).iter().zip(ph.row(pv).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_and_vars_align() {
        let mut m = FairGseModel::new(0, 3, 5);
        let mut t = Tape::new();
        let b = m.bind(&mut t);
        let shapes: Vec<_> = b.vars().iter().map(|&v| t.shape(v)).collect();
        let pshapes: Vec<_> = m.params_mut().iter().map(|p| p.dim()).collect();
        assert_eq!(shapes, pshapes);
        assert_eq!(shapes[0], (3, HIDDEN_DIM));
        assert_eq!(shapes[10], (5, 1));
    }
}

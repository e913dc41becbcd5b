//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] owns every value created during a forward pass. Values are
//! addressed by [`Var`] handles; since an operation can only consume values
//! that already exist, tape order is a topological order and the backward
//! pass simply walks it in reverse.
//!
//! Elementwise binary operations broadcast an operand whose row or column
//! count is 1 against the other operand.

mod adam;

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::numeric::LOG_FLOOR;

pub use adam::{Adam, AdamConfig};

pub type Shape = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Shape, right: Shape },
    #[error("{op}: index {index} out of range for {len} rows")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("backward root must be 1x1, got {0:?}")]
    NonScalarRoot(Shape),
    #[error("backward already ran on this tape; call zero_grad first")]
    BackwardTwice,
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Topology consumed by [`Tape::propagate`]: the canonical edge list and, per
/// node, its incident `(neighbor, edge index)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub incident: Vec<Vec<(usize, usize)>>,
}

impl GraphTopology {
    pub fn of(g: &WeightedGraph) -> Self {
        GraphTopology {
            n: g.n(),
            edges: g.edges().iter().map(|e| (e.i, e.j)).collect(),
            incident: (0..g.n()).map(|v| g.neighbors(v).to_vec()).collect(),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Transpose(Var),
    RowNormalize(Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    Propagate { weights: Var, x: Var, topo: Arc<GraphTopology> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Log(..) => "log",
            Op::Exp(..) => "exp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSum(..) => "row_sum",
            Op::Transpose(..) => "transpose",
            Op::RowNormalize(..) => "row_normalize",
            Op::ConcatRows(..) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
            Op::Propagate { .. } => "propagate",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSum(a)
            | Op::Transpose(a)
            | Op::RowNormalize(a)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _) => vec![*a],
            Op::ConcatRows(vs) => vs.clone(),
            Op::Propagate { weights, x, .. } => vec![*weights, *x],
        }
    }
}

#[derive(Debug)]
struct Node {
    data: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Arena of values for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

fn shape(a: &Array2<f64>) -> Shape {
    a.dim()
}

fn broadcast_shape(op: &'static str, a: Shape, b: Shape) -> Result<Shape> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AutodiffError::ShapeMismatch { op, left: a, right: b }),
    }
}

/// Sum a broadcast gradient back down to `target`.
fn reduce_to(g: Array2<f64>, target: Shape) -> Array2<f64> {
    let mut g = g;
    if target.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if target.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn broadcast(a: &Array2<f64>, to: Shape) -> Array2<f64> {
    a.broadcast(to).expect("shape checked at construction").to_owned()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: Array2<f64>, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { data, grad: None, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf; gradients are accumulated for it.
    pub fn param(&mut self, data: Array2<f64>) -> Var {
        self.nodes.push(Node { data, grad: None, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, data: Array2<f64>) -> Var {
        self.nodes.push(Node { data, grad: None, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> Shape {
        shape(&self.nodes[v.0].data)
    }

    /// Scalar content of a 1x1 value.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].data[[0, 0]]
    }

    /// Accumulated gradient; zeros if nothing reached `v`.
    pub fn grad(&self, v: Var) -> Array2<f64> {
        let n = &self.nodes[v.0];
        n.grad.clone().unwrap_or_else(|| Array2::zeros(n.data.dim()))
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(AutodiffError::ShapeMismatch { op: "matmul", left: sa, right: sb });
        }
        let out = self.value(a).dot(self.value(b));
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Array2<f64>> {
        let to = broadcast_shape(op, self.shape(a), self.shape(b))?;
        let mut out = broadcast(self.value(a), to);
        Zip::from(&mut out).and_broadcast(self.value(b)).for_each(|x, &y| *x = f(*x, y));
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Elementwise quotient; the divisor is clamped to at least `LOG_FLOOR` in magnitude.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("div", a, b, |x, y| x / clamp_divisor(y))?;
        Ok(self.push(out, Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        self.push(out, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(crate::numeric::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Natural log of `max(x, LOG_FLOOR)`.
    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(LOG_FLOOR).ln());
        self.push(out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.sum() / v.len().max(1) as f64;
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a))
    }

    /// Sum along each row: `r x c -> r x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::RowSum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    /// Divide each row by its L2 norm (norm clamped to `LOG_FLOOR`).
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let norm = row.dot(&row).sqrt().max(LOG_FLOOR);
            row /= norm;
        }
        self.push(out, Op::RowNormalize(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(AutodiffError::ShapeMismatch { op: "concat_rows", left: (0, 0), right: (0, 0) });
        };
        let cols = self.shape(first).1;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("column counts checked");
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows of `a` at `index`, in order (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let len = self.shape(a).0;
        if let Some(&bad) = index.iter().find(|&&i| i >= len) {
            return Err(AutodiffError::IndexOutOfRange { op: "gather_rows", index: bad, len });
        }
        let out = self.value(a).select(Axis(0), index);
        Ok(self.push(out, Op::GatherRows(a, index.to_vec())))
    }

    /// `out[target[k]] += a[k]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, target: &[usize], rows: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if target.len() != r {
            return Err(AutodiffError::ShapeMismatch {
                op: "scatter_add_rows",
                left: (r, c),
                right: (target.len(), 1),
            });
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= rows) {
            return Err(AutodiffError::IndexOutOfRange { op: "scatter_add_rows", index: bad, len: rows });
        }
        let mut out = Array2::zeros((rows, c));
        let src = self.value(a);
        for (k, &t) in target.iter().enumerate() {
            let mut row = out.row_mut(t);
            row += &src.row(k);
        }
        Ok(self.push(out, Op::ScatterAddRows(a, target.to_vec())))
    }

    /// `Â · x` where `Â = D^{-1/2} (A + I) D^{-1/2}` is the symmetric
    /// normalized adjacency with self-loops built from the per-edge
    /// `weights` (shape `m x 1`) on `topo`. Differentiable in both the
    /// weights and `x`.
    pub fn propagate(&mut self, weights: Var, x: Var, topo: &Arc<GraphTopology>) -> Result<Var> {
        let sw = self.shape(weights);
        if sw != (topo.num_edges(), 1) {
            return Err(AutodiffError::ShapeMismatch { op: "propagate", left: sw, right: (topo.num_edges(), 1) });
        }
        let sx = self.shape(x);
        if sx.0 != topo.n {
            return Err(AutodiffError::ShapeMismatch { op: "propagate", left: (topo.n, topo.n), right: sx });
        }
        let w = self.value(weights).column(0).to_vec();
        let r = inv_sqrt_degrees(topo, &w);
        let out = sym_propagate(topo, &w, &r, self.value(x));
        Ok(self.push(out, Op::Propagate { weights, x, topo: Arc::clone(topo) }))
    }

    /// Reverse pass from a 1x1 root. Every ancestor's gradient is filled in.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let s = self.shape(root);
        if s != (1, 1) {
            return Err(AutodiffError::NonScalarRoot(s));
        }
        if self.backward_done {
            return Err(AutodiffError::BackwardTwice);
        }
        self.backward_done = true;
        self.nodes[root.0].grad = Some(Array2::ones((1, 1)));

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(idx, &g);
            self.nodes[idx].grad = Some(g);
            for (p, c) in contributions {
                let node = &mut self.nodes[p.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => *acc += &c,
                    None => node.grad = Some(c),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, g: &Array2<f64>) -> Vec<(Var, Array2<f64>)> {
        let node = &self.nodes[idx];
        let out = &node.data;
        let val = |v: Var| &self.nodes[v.0].data;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut r = Vec::new();
                if needs(*a) {
                    r.push((*a, g.dot(&val(*b).t())));
                }
                if needs(*b) {
                    r.push((*b, val(*a).t().dot(g)));
                }
                r
            }
            Op::Add(a, b) => {
                vec![(*a, reduce_to(g.clone(), shape(val(*a)))), (*b, reduce_to(g.clone(), shape(val(*b))))]
            }
            Op::Sub(a, b) => vec![(*a, reduce_to(g.clone(), shape(val(*a)))), (*b, reduce_to(-g, shape(val(*b))))],
            Op::Mul(a, b) => {
                let ga = g * &broadcast(val(*b), g.dim());
                let gb = g * &broadcast(val(*a), g.dim());
                vec![(*a, reduce_to(ga, shape(val(*a)))), (*b, reduce_to(gb, shape(val(*b))))]
            }
            Op::Div(a, b) => {
                let bb = broadcast(val(*b), g.dim());
                let ga = Zip::from(g).and(&bb).map_collect(|&g, &y| g / clamp_divisor(y));
                // d(x/y)/dy = -out/y where the divisor is not clamped.
                let gb =
                    Zip::from(g).and(out).and(&bb).map_collect(
                        |&g, &o, &y| {
                            if y.abs() >= LOG_FLOOR {
                                -g * o / y
                            } else {
                                0.0
                            }
                        },
                    );
                vec![(*a, reduce_to(ga, shape(val(*a)))), (*b, reduce_to(gb, shape(val(*b))))]
            }
            Op::Scale(a, c) => vec![(*a, g * *c)],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Sigmoid(a) => vec![(*a, Zip::from(g).and(out).map_collect(|&g, &y| g * y * (1.0 - y)))],
            Op::Relu(a) => vec![(*a, Zip::from(g).and(val(*a)).map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 }))],
            Op::Log(a) => {
                vec![(*a, Zip::from(g).and(val(*a)).map_collect(|&g, &x| if x >= LOG_FLOOR { g / x } else { 0.0 }))]
            }
            Op::Exp(a) => vec![(*a, g * out)],
            Op::Sum(a) => vec![(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]]))],
            Op::Mean(a) => {
                let v = val(*a);
                vec![(*a, Array2::from_elem(v.dim(), g[[0, 0]] / v.len().max(1) as f64))]
            }
            Op::RowSum(a) => vec![(*a, broadcast(g, val(*a).dim()))],
            Op::Transpose(a) => vec![(*a, g.t().to_owned())],
            Op::RowNormalize(a) => {
                let x = val(*a);
                let mut dx = Array2::zeros(x.dim());
                for ((xr, (yr, gr)), mut dr) in
                    x.rows().into_iter().zip(out.rows().into_iter().zip(g.rows())).zip(dx.rows_mut())
                {
                    let norm = xr.dot(&xr).sqrt();
                    if norm >= LOG_FLOOR {
                        let proj = yr.dot(&gr);
                        dr.assign(&((&gr - &(&yr * proj)) / norm));
                    } else {
                        dr.assign(&(&gr / LOG_FLOOR));
                    }
                }
                vec![(*a, dx)]
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let rows = val(p).nrows();
                        let piece = g.slice(ndarray::s![start..start + rows, ..]).to_owned();
                        start += rows;
                        (p, piece)
                    })
                    .collect()
            }
            Op::GatherRows(a, index) => {
                let mut ga = Array2::zeros(val(*a).dim());
                for (k, &i) in index.iter().enumerate() {
                    let mut row = ga.row_mut(i);
                    row += &g.row(k);
                }
                vec![(*a, ga)]
            }
            Op::ScatterAddRows(a, target) => vec![(*a, g.select(Axis(0), target))],
            Op::Propagate { weights, x, topo } => {
                let w = val(*weights).column(0).to_vec();
                let r = inv_sqrt_degrees(topo, &w);
                let xv = val(*x);
                let mut res = Vec::new();
                if needs(*x) {
                    // Â is symmetric.
                    res.push((*x, sym_propagate(topo, &w, &r, g)));
                }
                if needs(*weights) {
                    res.push((*weights, propagate_weight_grad(topo, &w, &r, xv, g)));
                }
                res
            }
        }
    }
}

fn clamp_divisor(y: f64) -> f64 {
    if y.abs() >= LOG_FLOOR {
        y
    } else if y < 0.0 {
        -LOG_FLOOR
    } else {
        LOG_FLOOR
    }
}

/// `D^{-1/2}` of `A + I`.
fn inv_sqrt_degrees(topo: &GraphTopology, w: &[f64]) -> Vec<f64> {
    let mut d = vec![1.0; topo.n];
    for (&(i, j), &we) in topo.edges.iter().zip(w) {
        d[i] += we;
        d[j] += we;
    }
    d.into_iter().map(|x| 1.0 / x.sqrt()).collect()
}

fn sym_propagate(topo: &GraphTopology, w: &[f64], r: &[f64], x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for v in 0..topo.n {
        let mut row = out.row_mut(v);
        row.scaled_add(r[v] * r[v], &x.row(v));
        for &(u, e) in &topo.incident[v] {
            row.scaled_add(w[e] * r[v] * r[u], &x.row(u));
        }
    }
    out
}

/// Gradient of `<g, Â x>` with respect to each edge weight.
///
/// With `D_v = 1 + Σ w`, `r = D^{-1/2}` and `c_vu = g_v · x_u`, an edge
/// `(i, j)` receives `r_i r_j (c_ij + c_ji) + s_i + s_j`, where `s_v` is the
/// derivative through `D_v` of every entry in row and column `v`:
/// `s_v = -c_vv r_v^4 - (r_v^2 / 2) Σ_u Â_vu (c_vu + c_uv)`.
fn propagate_weight_grad(topo: &GraphTopology, w: &[f64], r: &[f64], x: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let c = |v: usize, u: usize| g.row(v).dot(&x.row(u));
    let mut s = vec![0.0; topo.n];
    for v in 0..topo.n {
        let rv2 = r[v] * r[v];
        let mut acc = -c(v, v) * rv2 * rv2;
        for &(u, e) in &topo.incident[v] {
            let a_vu = w[e] * r[v] * r[u];
            acc -= 0.5 * rv2 * a_vu * (c(v, u) + c(u, v));
        }
        s[v] = acc;
    }
    let mut out = Array2::zeros((topo.num_edges(), 1));
    for (k, &(i, j)) in topo.edges.iter().enumerate() {
        out[[k, 0]] = r[i] * r[j] * (c(i, j) + c(j, i)) + s[i] + s[j];
    }
    out
}

#[cfg(test)]
mod tests;

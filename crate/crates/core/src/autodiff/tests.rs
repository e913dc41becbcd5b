use super::*;
use crate::numeric::grad_close;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(lo..hi))
}

/// Builds the scalar `f(inputs)` on a fresh tape.
type Builder<'a> = dyn Fn(&mut Tape, &[Var]) -> Var + 'a;

/// Central finite differences of `build` at `inputs`, checked against the
/// tape's backward pass.
fn check(inputs: &[Array2<f64>], build: &Builder, rel: f64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let root = build(&mut tape, &vars);
    tape.backward(root).unwrap();

    let eval = |xs: &[Array2<f64>]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let r = build(&mut t, &vs);
        t.scalar(r)
    };
    let eps = 1e-5;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]);
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xs = inputs.to_vec();
            xs[k][[r, c]] += eps;
            let up = eval(&xs);
            xs[k][[r, c]] -= 2.0 * eps;
            let down = eval(&xs);
            let fd = (up - down) / (2.0 * eps);
            let a = analytic[[r, c]];
            assert!(grad_close(a, fd, rel, 1e-6, 1e-9), "input {k} entry ({r},{c}): analytic {a} vs fd {fd}");
        }
    }
}

#[test]
fn sigmoid_at_zero() {
    let mut t = Tape::new();
    let x = t.param(array![[0.0]]);
    let y = t.sigmoid(x);
    assert_eq!(t.scalar(y), 0.5);
    t.backward(y).unwrap();
    assert_eq!(t.grad(x), array![[0.25]]);
}

#[test]
fn identity_root() {
    let mut t = Tape::new();
    let x = t.param(array![[3.0]]);
    t.backward(x).unwrap();
    assert_eq!(t.grad(x), array![[1.0]]);
}

#[test]
fn sum_backward_is_ones() {
    let mut t = Tape::new();
    let x = t.param(Array2::from_elem((3, 2), 0.7));
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x), Array2::<f64>::ones((3, 2)));
}

#[test]
fn backward_errors() {
    let mut t = Tape::new();
    let x = t.param(Array2::<f64>::ones((2, 2)));
    assert_eq!(t.backward(x), Err(AutodiffError::NonScalarRoot((2, 2))));
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.backward(s), Err(AutodiffError::BackwardTwice));
    t.zero_grad();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x), Array2::<f64>::ones((2, 2)));
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut t = Tape::new();
    let a = t.param(Array2::ones((3, 4)));
    let b = t.param(Array2::<f64>::ones((3, 2)));
    assert_eq!(t.matmul(a, b), Err(AutodiffError::ShapeMismatch { op: "matmul", left: (3, 4), right: (3, 2) }));
    assert!(t.add(a, b).is_err());
    let c = t.param(Array2::ones((1, 4)));
    let ac = t.add(a, c).unwrap();
    assert_eq!(t.shape(ac), (3, 4));
    assert!(t.gather_rows(a, &[3]).is_err());
    assert!(t.scatter_add_rows(a, &[0, 1], 2).is_err());
    assert!(t.concat_rows(&[a, b]).is_err());
}

#[test]
fn matmul_matches_fd_seed3() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_mat(&mut rng, 3, 4, -1.0, 1.0);
    let b = rand_mat(&mut rng, 4, 2, -1.0, 1.0);
    let w = rand_mat(&mut rng, 3, 2, -1.0, 1.0);
    check(
        &[a, b],
        &|t, v| {
            let p = t.matmul(v[0], v[1]).unwrap();
            let w = t.constant(w.clone());
            let q = t.mul(p, w).unwrap();
            t.sum(q)
        },
        1e-6,
    );
}

#[test]
fn elementwise_primitives_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_mat(&mut rng, 4, 3, -2.0, 2.0);
    let pos = rand_mat(&mut rng, 4, 3, 0.2, 3.0);
    let row = rand_mat(&mut rng, 1, 3, 0.5, 1.5);
    let col = rand_mat(&mut rng, 4, 1, 0.5, 1.5);
    let w = rand_mat(&mut rng, 4, 3, -1.0, 1.0);

    // Weighted readout so every entry of the output matters differently.
    let readout = move |t: &mut Tape, y: Var| {
        let wv = t.constant(w.clone());
        let p = t.mul(y, wv).unwrap();
        t.sum(p)
    };
    let r = &readout;
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.sigmoid(v[0]);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.exp(v[0]);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&pos),
        &|t, v| {
            let y = t.log(v[0]);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&pos),
        &|t, v| {
            let y = t.relu(v[0]);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.scale(v[0], -1.7);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.add_scalar(v[0], 2.0);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.row_normalize(v[0]);
            r(t, y)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.mean(v[0]);
            let z = t.mul(y, y).unwrap();
            t.sum(z)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.row_sum(v[0]);
            let z = t.exp(y);
            t.sum(z)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let y = t.transpose(v[0]);
            let y = t.transpose(y);
            r(t, y)
        },
        1e-6,
    );
    check(
        &[x.clone(), pos.clone()],
        &|t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            let y = t.mul(y, y).unwrap();
            r(t, y)
        },
        1e-6,
    );
    check(
        &[x.clone(), pos.clone()],
        &|t, v| {
            let y = t.sub(v[0], v[1]).unwrap();
            let y = t.mul(y, y).unwrap();
            r(t, y)
        },
        1e-6,
    );
    check(
        &[x.clone(), pos.clone()],
        &|t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            r(t, y)
        },
        1e-6,
    );
    check(
        &[x.clone(), pos.clone()],
        &|t, v| {
            let y = t.div(v[0], v[1]).unwrap();
            r(t, y)
        },
        1e-6,
    );
    // Broadcast row and column vectors.
    check(
        &[x.clone(), row.clone()],
        &|t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            r(t, y)
        },
        1e-6,
    );
    check(
        &[x.clone(), col.clone()],
        &|t, v| {
            let y = t.div(v[0], v[1]).unwrap();
            r(t, y)
        },
        1e-6,
    );
    check(
        &[row.clone(), x.clone()],
        &|t, v| {
            let y = t.sub(v[0], v[1]).unwrap();
            r(t, y)
        },
        1e-6,
    );
}

#[test]
fn structural_primitives_match_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_mat(&mut rng, 3, 2, -1.0, 1.0);
    let b = rand_mat(&mut rng, 2, 2, -1.0, 1.0);
    let w = rand_mat(&mut rng, 5, 2, -1.0, 1.0);
    check(
        &[a.clone(), b.clone()],
        &|t, v| {
            let c = t.concat_rows(&[v[0], v[1]]).unwrap();
            let wv = t.constant(w.clone());
            let p = t.mul(c, wv).unwrap();
            let p = t.mul(p, p).unwrap();
            t.sum(p)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&a),
        &|t, v| {
            let g = t.gather_rows(v[0], &[2, 0, 2, 1, 0]).unwrap();
            let wv = t.constant(w.clone());
            let p = t.mul(g, wv).unwrap();
            let p = t.exp(p);
            t.sum(p)
        },
        1e-6,
    );
    check(
        std::slice::from_ref(&w),
        &|t, v| {
            let s = t.scatter_add_rows(v[0], &[1, 0, 1, 2, 1], 3).unwrap();
            let av = t.constant(a.clone());
            let p = t.mul(s, av).unwrap();
            let p = t.mul(p, p).unwrap();
            t.sum(p)
        },
        1e-6,
    );
}

fn small_topology() -> (Arc<GraphTopology>, Array2<f64>) {
    let g = crate::data::random_graph(10, 0.4, (0.5, 2.0), 21);
    let w = Array2::from_shape_vec((g.num_edges(), 1), g.weights().to_vec()).unwrap();
    (Arc::new(GraphTopology::of(&g)), w)
}

#[test]
fn propagate_matches_dense_normalized_adjacency() {
    let g = crate::data::random_graph(12, 0.3, (0.5, 2.0), 4);
    let topo = Arc::new(GraphTopology::of(&g));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_mat(&mut rng, 12, 3, -1.0, 1.0);
    let dense = crate::model::normalize_adjacency(&g).dot(&x);
    let mut t = Tape::new();
    let wv = t.constant(Array2::from_shape_vec((g.num_edges(), 1), g.weights().to_vec()).unwrap());
    let xv = t.constant(x);
    let y = t.propagate(wv, xv, &topo).unwrap();
    for (a, b) in t.value(y).iter().zip(dense.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn propagate_matches_fd() {
    let (topo, w) = small_topology();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_mat(&mut rng, topo.n, 3, -1.0, 1.0);
    let r = rand_mat(&mut rng, topo.n, 3, -1.0, 1.0);
    check(
        &[w, x],
        &|t, v| {
            let y = t.propagate(v[0], v[1], &topo).unwrap();
            let rv = t.constant(r.clone());
            let p = t.mul(y, rv).unwrap();
            let p = t.mul(p, p).unwrap();
            t.sum(p)
        },
        1e-6,
    );
}

#[test]
fn sigmoid_matmul_chain_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = rand_mat(&mut rng, 3, 4, -1.0, 1.0);
    let x = rand_mat(&mut rng, 4, 1, -1.0, 1.0);
    check(
        &[w, x],
        &|t, v| {
            let p = t.matmul(v[0], v[1]).unwrap();
            let s = t.sigmoid(p);
            t.sum(s)
        },
        1e-6,
    );
}

#[test]
fn two_layer_chain_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_mat(&mut rng, 5, 3, -1.0, 1.0);
    let w1 = rand_mat(&mut rng, 3, 4, -1.0, 1.0);
    let b1 = rand_mat(&mut rng, 1, 4, -0.5, 0.5);
    let w2 = rand_mat(&mut rng, 4, 1, -1.0, 1.0);
    check(
        &[x, w1, b1, w2],
        &|t, v| {
            let h = t.matmul(v[0], v[1]).unwrap();
            let h = t.add(h, v[2]).unwrap();
            let h = t.sigmoid(h);
            let o = t.matmul(h, v[3]).unwrap();
            let o = t.sigmoid(o);
            let l = t.log(o);
            t.mean(l)
        },
        1e-6,
    );
}

#[test]
fn diamond_accumulates_both_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_mat(&mut rng, 2, 3, -1.0, 1.0);
    check(
        std::slice::from_ref(&x),
        &|t, v| {
            let a = t.sigmoid(v[0]);
            let b = t.exp(v[0]);
            let c = t.mul(a, b).unwrap();
            t.sum(c)
        },
        1e-6,
    );
    // x consumed twice by the same op: d(sum(x*x)) = 2x.
    let mut t = Tape::new();
    let xv = t.param(x.clone());
    let sq = t.mul(xv, xv).unwrap();
    let s = t.sum(sq);
    t.backward(s).unwrap();
    assert_eq!(t.grad(xv), &x * 2.0);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = rand_mat(&mut rng, 6, 5, -1.0, 1.0);
        let b = rand_mat(&mut rng, 5, 3, -1.0, 1.0);
        let mut t = Tape::new();
        let (av, bv) = (t.param(a), t.param(b));
        let p = t.matmul(av, bv).unwrap();
        let p = t.row_normalize(p);
        let s = t.exp(p);
        let s = t.sum(s);
        t.backward(s).unwrap();
        (t.scalar(s), t.grad(av), t.grad(bv))
    };
    let (s1, ga1, gb1) = run();
    let (s2, ga2, gb2) = run();
    assert_eq!(s1.to_bits(), s2.to_bits());
    assert_eq!(ga1, ga2);
    assert_eq!(gb1, gb2);
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let c = t.constant(array![[2.0]]);
    let p = t.param(array![[3.0]]);
    let y = t.mul(c, p).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(c), array![[0.0]]);
    assert_eq!(t.grad(p), array![[2.0]]);
}

#[test]
fn adam_single_step() {
    let mut adam = Adam::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() });
    let mut p = array![[0.0]];
    adam.step(&mut [&mut p], &[array![[1.0]]]);
    assert!((p[[0, 0]] + 0.001).abs() < 1e-10, "{}", p[[0, 0]]);
    assert_eq!(adam.steps_taken(), 1);
}

#[test]
fn adam_zero_grad_only_decays() {
    let mut adam = Adam::new(AdamConfig::default());
    let mut p = array![[2.0, -2.0]];
    adam.step(&mut [&mut p], &[Array2::zeros((1, 2))]);
    assert!(p[[0, 0]] < 2.0 && p[[0, 0]] > 1.99);
    assert!(p[[0, 1]] > -2.0 && p[[0, 1]] < -1.99);

    let mut adam = Adam::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() });
    let mut q = array![[2.0]];
    adam.step(&mut [&mut q], &[Array2::zeros((1, 1))]);
    assert_eq!(q[[0, 0]], 2.0);
}

#[test]
fn adam_identical_params_identical_updates() {
    let mut adam = Adam::new(AdamConfig::default());
    let mut a = array![[0.3, 0.3]];
    let mut b = array![[0.3, 0.3]];
    for k in 0..5 {
        let g = array![[0.1 * k as f64, 0.1 * k as f64]];
        adam.step(&mut [&mut a, &mut b], &[g.clone(), g]);
    }
    assert_eq!(a, b);
    assert_eq!(a[[0, 0]], a[[0, 1]]);
}

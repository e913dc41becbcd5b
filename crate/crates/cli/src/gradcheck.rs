//! Analytic-versus-finite-difference check of the per-edge entropy gradient
//! on a stream of random graphs.

use anyhow::Result;
use fairgse_core::data::random_graph;
use fairgse_core::entropy::{se_gradient, se_gradient_fd};
use fairgse_core::graph::{partition_by_sensitive, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub trials: usize,
    /// Central-difference step.
    pub eps: f64,
    pub tolerance: f64,
    /// Flip the sign of the analytic gradient before comparing. Only for
    /// checking that the harness can fail.
    #[doc(hidden)]
    pub flip_sign: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { seed: 0, trials: 100, eps: 1e-5, tolerance: 1e-5, flip_sign: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub edges: usize,
    pub max_rel_err: f64,
    /// Magnitude of the analytic gradient at the worst edge.
    pub worst_gradient: f64,
    pub worst_trial: usize,
    pub worst_edge: usize,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn table(&self) -> Table {
        let mut t =
            Table::new(["trials", "edges", "max_rel_err", "worst_gradient", "worst_trial", "worst_edge", "result"]);
        t.push(vec![
            self.trials.to_string(),
            self.edges.to_string(),
            format!("{:.3e}", self.max_rel_err),
            format!("{:.3e}", self.worst_gradient),
            self.worst_trial.to_string(),
            self.worst_edge.to_string(),
            if self.passed { "PASS" } else { "FAIL" }.to_string(),
        ]);
        t
    }
}

/// Relative-error denominator floor. Some graphs, such as a single edge
/// across groups, have an identically zero gradient, where the difference
/// quotient is pure round-off.
pub const ZERO_GRADIENT: f64 = 1e-9;

/// `count` random graphs with `n` uniform in `[5, 30]`, edge probability
/// 0.3 and weights uniform in `[0.5, 2.0)`. Deterministic per seed.
pub fn random_suite(seed: u64, count: usize) -> Vec<WeightedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(5..=30);
            random_graph(n, 0.3, (0.5, 2.0), rng.random())
        })
        .collect()
}

/// Analytic against finite-difference gradients over [`random_suite`].
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut report = GradcheckReport {
        trials: opts.trials,
        edges: 0,
        max_rel_err: 0.0,
        worst_gradient: 0.0,
        worst_trial: 0,
        worst_edge: 0,
        passed: false,
    };
    for (trial, g) in random_suite(opts.seed, opts.trials).into_iter().enumerate() {
        let p = partition_by_sensitive(&g);
        let analytic = se_gradient(&g, &p)?;
        let numeric = se_gradient_fd(&g, &p, opts.eps)?;
        for (k, (&a, &f)) in analytic.per_edge.iter().zip(&numeric.per_edge).enumerate() {
            let a = if opts.flip_sign { -a } else { a };
            let e = (a - f).abs() / a.abs().max(f.abs()).max(ZERO_GRADIENT);
            if e > report.max_rel_err || e.is_nan() {
                report.max_rel_err = e;
                report.worst_gradient = a.abs();
                report.worst_trial = trial;
                report.worst_edge = k;
            }
        }
        report.edges += g.num_edges();
    }
    report.passed = report.max_rel_err <= opts.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes_and_fault_fails() {
        let opts = GradcheckOptions { trials: 5, ..GradcheckOptions::default() };
        assert!(run_gradcheck(&opts).unwrap().passed);
        let faulty = GradcheckOptions { flip_sign: true, ..opts };
        let r = run_gradcheck(&faulty).unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_err > 1.0);
    }
}

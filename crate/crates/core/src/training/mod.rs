//! Losses, splits, the structure-bootstrapping update and the training loop.

mod augment;
mod config;
mod fit;
mod losses;
mod split;

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::data::DataError;
use crate::entropy::EntropyError;
use crate::fairness::FairnessError;
use crate::graph::GraphError;

pub use augment::{augment_view, AugmentedView};
pub use config::{Ablation, AugmentConfig, TrainConfig};
pub use fit::{fit, Checkpoint, EpochRecord, MetricsReport, TrainState, CHECKPOINT_VERSION};
pub use losses::{bce_loss, nt_xent, se_loss, structural_entropy, total_loss, EntropyStructure};
pub use split::{split_nodes, Split};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
    #[error("non-finite loss at epoch {epoch}: task={task}, contrastive={cont}, entropy={se}")]
    NonFinite { epoch: usize, task: f64, cont: f64, se: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// `A^a <- τ A^a + (1 - τ) A^l`, elementwise and in place.
pub fn bootstrap_update(anchor: &mut [f64], learner: &[f64], tau: f64) -> Result<(), TrainError> {
    if anchor.len() != learner.len() {
        return Err(TrainError::Precondition(format!(
            "bootstrap: anchor has {} weights, learner has {}",
            anchor.len(),
            learner.len()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(TrainError::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    for (a, &l) in anchor.iter_mut().zip(learner) {
        *a = tau * *a + (1.0 - tau) * l;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bootstrap_examples() {
        let mut a = vec![1.0, 0.3];
        bootstrap_update(&mut a, &[0.5, 0.9], 1.0).unwrap();
        assert_eq!(a, vec![1.0, 0.3]);
        bootstrap_update(&mut a, &[0.5, 0.9], 0.0).unwrap();
        assert_eq!(a, vec![0.5, 0.9]);
        let mut a = vec![1.0];
        bootstrap_update(&mut a, &[0.5], 0.9999).unwrap();
        assert!((a[0] - 0.99995).abs() < 1e-15);
        assert!(bootstrap_update(&mut a, &[0.5, 0.5], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn bootstrap_is_convex(
            pairs in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0), 1..20),
            tau in 0.0f64..=1.0,
        ) {
            let (mut a, l): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            bootstrap_update(&mut a, &l, tau).unwrap();
            for ((&(a0, l0), &a1), _) in pairs.iter().zip(&a).zip(&l) {
                prop_assert!(a1 >= a0.min(l0) - 1e-15 && a1 <= a0.max(l0) + 1e-15);
            }
        }
    }
}

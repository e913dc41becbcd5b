use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Which components of the pipeline are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Structure learner, contrastive loss and bootstrapping.
    #[default]
    Full,
    /// Learner replaced by random augmentations; no entropy loss.
    NoGsl,
    /// Contrastive loss disabled.
    NoCl,
    /// Anchor fixed at the input graph.
    NoSbm,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoGsl, Ablation::NoCl, Ablation::NoSbm];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoGsl => "no_gsl",
            Ablation::NoCl => "no_cl",
            Ablation::NoSbm => "no_sbm",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation `{s}` (expected full, no_gsl, no_cl or no_sbm)"))
    }
}

/// Random augmentation rates used by [`Ablation::NoGsl`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub edge_drop: f64,
    pub feature_mask: f64,
    pub node_drop: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { edge_drop: 0.2, feature_mask: 0.2, node_drop: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the contrastive loss.
    pub lambda1: f64,
    /// Weight of the structural-entropy loss.
    pub lambda2: f64,
    /// Anchor bootstrap decay.
    pub tau: f64,
    /// NT-Xent temperature.
    pub temperature: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub ablation: Ablation,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 0.5,
            lambda2: 1.0,
            tau: 0.9999,
            temperature: 0.5,
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 300,
            seed: 0,
            split: [0.5, 0.25, 0.25],
            ablation: Ablation::Full,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Plain GCN training: no auxiliary losses and a fixed anchor.
    pub fn vanilla(seed: u64) -> Self {
        TrainConfig { lambda1: 0.0, lambda2: 0.0, ablation: Ablation::NoSbm, seed, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() {
            return bad(format!("lambda1 must be >= 0, got {}", self.lambda1));
        }
        if !(self.lambda2 >= 0.0) || !self.lambda2.is_finite() {
            return bad(format!("lambda2 must be >= 0, got {}", self.lambda2));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {:?} must be nonnegative and sum to 1", self.split));
        }
        let a = self.augment;
        for (name, p) in [("edge_drop", a.edge_drop), ("feature_mask", a.feature_mask), ("node_drop", a.node_drop)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("augment.{name} must lie in [0, 1), got {p}"));
            }
        }
        Ok(())
    }

    /// Contrastive weight after applying the ablation.
    pub fn effective_lambda1(&self) -> f64 {
        match self.ablation {
            Ablation::NoCl => 0.0,
            _ => self.lambda1,
        }
    }

    /// Entropy weight after applying the ablation.
    pub fn effective_lambda2(&self) -> f64 {
        match self.ablation {
            Ablation::NoGsl => 0.0,
            _ => self.lambda2,
        }
    }

    pub fn bootstraps(&self) -> bool {
        matches!(self.ablation, Ablation::Full | Ablation::NoCl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::vanilla(3).validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = TrainConfig::default();
        for cfg in [
            TrainConfig { lambda1: -0.1, ..base.clone() },
            TrainConfig { lambda2: f64::NAN, ..base.clone() },
            TrainConfig { tau: 1.1, ..base.clone() },
            TrainConfig { temperature: 0.0, ..base.clone() },
            TrainConfig { split: [0.5, 0.25, 0.2], ..base.clone() },
            TrainConfig { epochs: 0, ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(TrainError::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn ablation_overrides() {
        let cfg = TrainConfig { ablation: Ablation::NoCl, ..TrainConfig::default() };
        assert_eq!(cfg.effective_lambda1(), 0.0);
        assert!(cfg.bootstraps());
        let cfg = TrainConfig { ablation: Ablation::NoGsl, ..TrainConfig::default() };
        assert_eq!(cfg.effective_lambda2(), 0.0);
        assert!(!cfg.bootstraps());
        assert!(!TrainConfig { ablation: Ablation::NoSbm, ..TrainConfig::default() }.bootstraps());
        assert_eq!("no_sbm".parse::<Ablation>().unwrap(), Ablation::NoSbm);
        assert!("none".parse::<Ablation>().is_err());
    }

    #[test]
    fn serde_round_trip_with_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"lambda1": 0.3, "ablation": "no_cl"}"#).unwrap();
        assert_eq!(cfg.lambda1, 0.3);
        assert_eq!(cfg.ablation, Ablation::NoCl);
        assert_eq!(cfg.tau, 0.9999);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lamda1": 0.3}"#).is_err());
    }
}

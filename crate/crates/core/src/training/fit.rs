use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    augment_view, bce_loss, bootstrap_update, nt_xent, se_loss, split_nodes, total_loss, Ablation, EntropyStructure,
    Split, TrainConfig, TrainError,
};
use crate::autodiff::{Adam, AdamConfig, GraphTopology, Tape, Var};
use crate::entropy::entropy_of;
use crate::fairness::{FairnessReport, PredictionSet, THRESHOLD};
use crate::graph::WeightedGraph;
use crate::model::{edge_column, FairGseModel};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Losses and accuracies from one epoch's forward pass (before its update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub cont_loss: f64,
    pub se_loss: f64,
    pub total_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// 2D-SE of the learner view in bits.
    pub h: f64,
}

/// Test-set metrics of the selected epoch plus entropy and bounds of the
/// final learner view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub fpr: f64,
    pub d_sp: f64,
    pub d_eo: f64,
    pub h: f64,
    pub h_max: f64,
    pub delta_h: f64,
    pub sp_bound: f64,
    pub eo_bound: f64,
    pub fpr_bound: f64,
    /// Fraction of negative labels in the whole graph.
    pub r: f64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// The selected model predicts one class for every validation node.
    pub fpr_shortcut: bool,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: FairGseModel,
    /// Anchor-view edge weights; never touched by the optimizer.
    pub anchor_weights: Vec<f64>,
    pub optimizer: Adam,
    pub epoch: usize,
    pub split: Split,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            config: self.config.clone(),
            epoch: self.epoch,
            model: self.model.clone(),
            anchor_weights: self.anchor_weights.clone(),
        }
    }
}

/// Serializable snapshot of the trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: TrainConfig,
    pub epoch: usize,
    pub model: FairGseModel,
    pub anchor_weights: Vec<f64>,
}

fn accuracy_on(scores: &[f64], labels: &[u8], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let hits = idx.iter().filter(|&&v| u8::from(scores[v] >= THRESHOLD) == labels[v]).count();
    hits as f64 / idx.len() as f64
}

fn check_inputs(g: &WeightedGraph) -> Result<(), TrainError> {
    for (what, v) in [("sensitive", g.sensitive()), ("labels", g.labels())] {
        if !v.contains(&0) || !v.contains(&1) {
            return Err(TrainError::Precondition(format!("{what} must contain both classes")));
        }
    }
    if g.num_edges() == 0 {
        return Err(TrainError::Precondition("graph has no edges".into()));
    }
    Ok(())
}

struct Selected {
    epoch: usize,
    val_acc: f64,
    scores: Vec<f64>,
}

/// Train on `g` with `cfg` and evaluate the best-validation epoch on the test set.
pub fn fit(g: &WeightedGraph, cfg: &TrainConfig) -> Result<(TrainState, MetricsReport), TrainError> {
    cfg.validate()?;
    check_inputs(g)?;
    let labels = g.labels();
    let split = split_nodes(labels, cfg.split, cfg.seed)?;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(TrainError::Precondition(format!("split {:?} leaves an empty set for {} nodes", cfg.split, g.n())));
    }
    let train_y: Vec<u8> = split.train.iter().map(|&v| labels[v]).collect();
    let (lambda1, lambda2) = (cfg.effective_lambda1(), cfg.effective_lambda2());
    let structure = if lambda2 > 0.0 { Some(EntropyStructure::new(g)?) } else { None };
    let topo = Arc::new(GraphTopology::of(g));

    let mut model = FairGseModel::new(cfg.seed, g.feature_dim(), g.num_edges());
    let mut optimizer = Adam::new(AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() });
    let mut anchor = g.weights().to_vec();
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    aug_rng.set_stream(2);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Selected> = None;
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let x = tape.constant(g.features().clone());
        let wa = tape.constant(edge_column(&anchor));
        let ha = bound.encoder.forward(&mut tape, wa, x, &topo)?;
        let scores = bound.classify(&mut tape, ha)?;
        let train_scores = tape.gather_rows(scores, &split.train)?;
        let task = bce_loss(&mut tape, train_scores, &train_y)?;

        let mut learner: Option<Var> = None;
        let mut cont = None;
        if lambda1 > 0.0 {
            let (wl, xl, kept) = if cfg.ablation == Ablation::NoGsl {
                let view = augment_view(g, &anchor, &cfg.augment, &mut aug_rng);
                let wl = tape.constant(edge_column(&view.weights));
                let xl = tape.constant(view.features);
                (wl, xl, Some(view.kept))
            } else {
                let wl = bound.learner_weights(&mut tape);
                learner = Some(wl);
                (wl, x, None)
            };
            let hl = bound.encoder.forward(&mut tape, wl, xl, &topo)?;
            let mut za = bound.projector.forward(&mut tape, ha)?;
            let mut zl = bound.projector.forward(&mut tape, hl)?;
            if let Some(kept) = kept.filter(|k| k.len() < g.n()) {
                za = tape.gather_rows(za, &kept)?;
                zl = tape.gather_rows(zl, &kept)?;
            }
            cont = Some(nt_xent(&mut tape, za, zl, cfg.temperature)?);
        }
        let mut se = None;
        if let Some(st) = &structure {
            let wl = match learner {
                Some(v) => v,
                None => bound.learner_weights(&mut tape),
            };
            se = Some(se_loss(&mut tape, wl, st)?);
        }

        let value = |t: &Tape, v: Option<Var>| v.map_or(0.0, |v| t.scalar(v));
        let (task_v, cont_v, se_v) = (tape.scalar(task), value(&tape, cont), value(&tape, se));
        if !(task_v.is_finite() && cont_v.is_finite() && se_v.is_finite()) {
            return Err(TrainError::NonFinite { epoch, task: task_v, cont: cont_v, se: se_v });
        }
        let total = total_loss(&mut tape, task, cont, se, cfg)?;
        let total_v = tape.scalar(total);
        tape.backward(total)?;
        let grads: Vec<_> = bound.vars().into_iter().map(|v| tape.grad(v)).collect();

        let all_scores: Vec<f64> = tape.value(scores).iter().copied().collect();
        let report_view = match cfg.ablation {
            Ablation::NoGsl => g.reweight(&anchor)?,
            _ => model.learner.learner_view(g)?,
        };
        let record = EpochRecord {
            epoch,
            task_loss: task_v,
            cont_loss: cont_v,
            se_loss: se_v,
            total_loss: total_v,
            train_acc: accuracy_on(&all_scores, labels, &split.train),
            val_acc: accuracy_on(&all_scores, labels, &split.val),
            h: entropy_of(&report_view)?.h,
        };
        log::debug!("epoch {epoch}: {record:?}");
        if best.as_ref().is_none_or(|b| record.val_acc > b.val_acc) {
            best = Some(Selected { epoch, val_acc: record.val_acc, scores: all_scores });
        }
        history.push(record);

        optimizer.step(&mut model.params_mut(), &grads);
        if cfg.bootstraps() {
            bootstrap_update(&mut anchor, &model.learner.weights(), cfg.tau)?;
        }
    }

    let best = best.expect("at least one epoch");
    let subset = |idx: &[usize]| {
        PredictionSet::new(
            idx.iter().map(|&v| best.scores[v]).collect(),
            idx.iter().map(|&v| labels[v]).collect(),
            idx.iter().map(|&v| g.sensitive()[v]).collect(),
        )
    };
    let test = subset(&split.test)?;
    let val = subset(&split.val)?;
    let final_view = match cfg.ablation {
        Ablation::NoGsl => g.reweight(&anchor)?,
        _ => model.learner.learner_view(g)?,
    };
    let entropy = entropy_of(&final_view)?;
    let r = g.negative_ratio();
    let fr = FairnessReport::evaluate(&test, entropy.gap, r)?;
    let report = MetricsReport {
        acc: fr.acc,
        auc: fr.auc,
        f1: fr.f1,
        fpr: fr.fpr,
        d_sp: fr.d_sp,
        d_eo: fr.d_eo,
        h: entropy.h,
        h_max: entropy.h_max,
        delta_h: entropy.gap,
        sp_bound: fr.sp_bound,
        eo_bound: fr.eo_bound,
        fpr_bound: fr.fpr_bound,
        r,
        best_epoch: best.epoch,
        best_val_acc: best.val_acc,
        fpr_shortcut: val.is_constant(),
    };
    let state =
        TrainState { config: cfg.clone(), model, anchor_weights: anchor, optimizer, epoch: cfg.epochs, split, history };
    Ok((state, report))
}

//! Behavior cloning, evaluation and two-fold cross-validation.

mod dataset;
mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{make_dataset, Dataset, SampleRef};
pub use metrics::{argmax, average_precision, evaluate, evaluate_dataset, evaluate_dataset_parallel, EvalReport};

use crate::error::{Error, Result};
use crate::model::{MgpiConfig, MgpiNetwork, Variant};
use crate::nn::{adam_update, AdamConfig, AdamState};
use crate::scene::Demonstration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Architecture, including variant and horizon.
    pub model: MgpiConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Neighbors per state (nearest first).
    pub neighbors: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(variant: Variant, action_count: usize, seed: u64) -> Self {
        TrainConfig {
            model: MgpiConfig::new(variant, action_count),
            epochs: 30,
            batch_size: 4096,
            neighbors: 4,
            adam: AdamConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.neighbors == 0 {
            return Err(Error::Config("epochs, batch size and neighbors must be at least 1".into()));
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch losses seen during the epoch.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: MgpiNetwork,
    pub loss_trace: Vec<EpochStats>,
}

/// Renders a loss trace as `epoch,mean_loss` CSV.
pub fn loss_trace_csv(trace: &[EpochStats]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for e in trace {
        s.push_str(&format!("{},{}\n", e.epoch, e.mean_loss));
    }
    s
}

/// Fits a freshly initialized network to the next-action targets of `demos`.
pub fn behavior_clone(demos: &[Demonstration], config: &TrainConfig) -> Result<TrainOutcome> {
    behavior_clone_with(demos, config, &mut |_| {})
}

/// [`behavior_clone`] reporting each finished epoch to `on_epoch`.
pub fn behavior_clone_with(
    demos: &[Demonstration],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    let ds = Dataset::build(demos, config.model.horizon, config.neighbors, config.model.position_scale)?;
    let actions = ds.scenario().action_count();
    if actions != config.model.action_count {
        return Err(Error::Config(format!(
            "{} demonstrations have {actions} actions, model expects {}",
            ds.scenario(),
            config.model.action_count
        )));
    }
    let mut net = MgpiNetwork::init(config.model, config.seed)?;
    let mut adam = AdamState::new(&net, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (batch, targets) = ds.batch(&net.config, chunk)?;
            let (loss, grad) = net.loss_and_gradient(&batch, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("loss {loss} at epoch {epoch}, minibatch {}", b + 1)));
            }
            adam_update(&mut net, &grad, &mut adam)?;
            total += loss * chunk.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: total / ds.len() as f64,
        };
        on_epoch(&stats);
        trace.push(stats);
    }
    Ok(TrainOutcome {
        network: net,
        loss_trace: trace,
    })
}

/// Averages of two fold reports; per-class AP averages over folds where the
/// class occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub cross_entropy: f64,
    pub accuracy: f64,
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    pub confusion: Vec<Vec<f64>>,
}

impl MeanReport {
    pub fn of(reports: &[EvalReport]) -> MeanReport {
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let classes = reports.first().map_or(0, |r| r.per_class_ap.len());
        MeanReport {
            cross_entropy: mean(&|r| r.cross_entropy),
            accuracy: mean(&|r| r.accuracy),
            map: mean(&|r| r.map),
            per_class_ap: (0..classes)
                .map(|c| {
                    let v: Vec<f64> = reports.iter().filter_map(|r| r.per_class_ap[c]).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect(),
            confusion: (0..classes)
                .map(|i| (0..classes).map(|j| mean(&|r| r.confusion[i][j] as f64)).collect())
                .collect(),
        }
    }

    pub fn confusion_csv(&self) -> String {
        metrics::confusion_csv(&self.confusion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    /// Demonstration indices tested in each fold.
    pub test_sets: [Vec<usize>; 2],
    pub folds: [EvalReport; 2],
    pub mean: MeanReport,
    pub loss_traces: [Vec<EpochStats>; 2],
}

/// Splits demonstrations into two halves by layout: demos sharing a layout
/// always land in the same half. Layout order is shuffled with `seed`.
pub fn split_folds(demos: &[Demonstration], seed: u64) -> Result<[Vec<usize>; 2]> {
    let mut layouts: Vec<Vec<usize>> = Vec::new();
    for (i, d) in demos.iter().enumerate() {
        match layouts.iter_mut().find(|g| demos[g[0]].layout == d.layout) {
            Some(g) => g.push(i),
            None => layouts.push(vec![i]),
        }
    }
    if layouts.len() < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 distinct layouts, got {}",
            layouts.len()
        )));
    }
    layouts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = layouts.len().div_ceil(2);
    let mut a: Vec<usize> = layouts[..half].concat();
    let mut b: Vec<usize> = layouts[half..].concat();
    a.sort_unstable();
    b.sort_unstable();
    Ok([a, b])
}

/// Two-fold cross-validation: train on one half, test on the other, and swap.
pub fn cross_validate(demos: &[Demonstration], config: &TrainConfig) -> Result<CrossValReport> {
    cross_validate_with(demos, config, &mut |_, _| {})
}

/// [`cross_validate`] reporting `(fold, epoch)` progress.
pub fn cross_validate_with(
    demos: &[Demonstration],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &EpochStats),
) -> Result<CrossValReport> {
    if demos.len() < 2 {
        return Err(Error::Config("cross-validation needs at least 2 demonstrations".into()));
    }
    let test_sets = split_folds(demos, config.seed)?;
    let mut folds = Vec::with_capacity(2);
    let mut traces = Vec::with_capacity(2);
    for (k, test) in test_sets.iter().enumerate() {
        let train_demos: Vec<Demonstration> = (0..demos.len())
            .filter(|i| !test.contains(i))
            .map(|i| demos[i].clone())
            .collect();
        let test_demos: Vec<Demonstration> = test.iter().map(|&i| demos[i].clone()).collect();
        let fold_config = TrainConfig {
            seed: config.seed.wrapping_add(k as u64),
            ..*config
        };
        let outcome = behavior_clone_with(&train_demos, &fold_config, &mut |s| on_epoch(k, s))?;
        folds.push(evaluate(&outcome.network, &test_demos, config.neighbors)?);
        traces.push(outcome.loss_trace);
    }
    let mean = MeanReport::of(&folds);
    let [f0, f1]: [EvalReport; 2] = folds.try_into().expect("two folds");
    let [t0, t1]: [Vec<EpochStats>; 2] = traces.try_into().expect("two folds");
    Ok(CrossValReport {
        test_sets,
        folds: [f0, f1],
        mean,
        loss_traces: [t0, t1],
    })
}

#[cfg(test)]
mod tests;

//! Adam training with mini-batches and k-fold best-instance selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::loss::{empirical_error, regularization, tape_error, tape_regularization, LossConfig};
use crate::network::{forward, init_weights, InitSpec, NetworkShape, NetworkWeights, TapeWeights};
use crate::systems::Dataset;

const PARTITION_STREAM: u64 = 7;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Overrides `min(floor(sqrt(training rows)), 32)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub folds: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Initialize every fold from the run seed instead of per-fold seeds.
    #[serde(default)]
    pub same_fold_seeds: bool,
    /// Worker threads for folds; `None` uses the global pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Epoch loss above this for `divergence_patience` epochs aborts a fold.
    pub divergence_threshold: f64,
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: None,
            folds: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            same_fold_seeds: false,
            threads: None,
            divergence_threshold: 1e6,
            divergence_patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.folds < 2 {
            return Err(Error::Invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Invalid("batch size must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Invalid("Adam betas must lie in [0, 1)".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Invalid("thread count must be positive".into()));
        }
        Ok(())
    }

    /// Batch size used for `rows` training samples.
    pub fn batch_for(&self, rows: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| ((rows as f64).sqrt().floor() as usize).min(32))
            .max(1)
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {g}")));
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Outcome of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub weights: NetworkWeights,
    pub held_out_loss: f64,
    /// Mean batch loss per epoch.
    pub history: Vec<f64>,
}

/// Shuffles `0..m` and cuts it into `folds` contiguous held-out sets.
pub fn partition(m: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PARTITION_STREAM);
    idx.shuffle(&mut rng);
    (0..folds)
        .map(|f| idx[f * m / folds..(f + 1) * m / folds].to_vec())
        .collect()
}

/// Initialization seed of fold `fold`.
pub fn fold_seed(seed: u64, fold: usize, same: bool) -> u64 {
    if same {
        seed
    } else {
        seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

fn time_of(data: &Dataset, shape: &NetworkShape, i: usize) -> Option<f64> {
    shape.time_input.then(|| data.t[i])
}

/// Plain total loss on the rows `idx` of `data`.
pub fn subset_loss(
    weights: &NetworkWeights,
    data: &Dataset,
    idx: &[usize],
    loss: &LossConfig,
) -> Result<f64> {
    let pred = idx
        .iter()
        .map(|&i| forward(weights, &data.x[i], time_of(data, &weights.shape, i)))
        .collect::<Result<Vec<_>>>()?;
    let target: Vec<Vec<f64>> = idx.iter().map(|&i| data.y[i].clone()).collect();
    let total = empirical_error(&pred, &target, loss.error) + regularization(weights, loss);
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::NonFinite(format!("loss {total}")))
    }
}

/// Trains one network from `init` on `train_idx` and scores it on `test_idx`.
#[allow(clippy::too_many_arguments)]
pub fn train_fold(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    fold: usize,
    shape: &NetworkShape,
    init: &InitSpec,
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<FoldResult> {
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Invalid("empty training or held-out split".into()));
    }
    let mut weights = init_weights(shape, init);
    let mut params = weights.to_flat();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let batch = cfg.batch_for(train_idx.len());
    let mut order = train_idx.to_vec();
    let mut tape = Tape::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut over = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            tape.clear();
            let reg = TapeWeights::register(&mut tape, &weights);
            let pred: Vec<_> = chunk
                .iter()
                .map(|&i| reg.forward(&mut tape, &data.x[i], time_of(data, shape, i)))
                .collect();
            let target: Vec<&[f64]> = chunk.iter().map(|&i| data.y[i].as_slice()).collect();
            let e = tape_error(&mut tape, &pred, &target, loss.error);
            let r = tape_regularization(&mut tape, &reg, loss);
            let total = tape.add(e, r);
            let diverged = |l: f64| Error::Diverged { epoch, loss: l };
            if tape.check().is_err() {
                return Err(diverged(total.value()));
            }
            let grads = tape.backward(total).map_err(|_| diverged(total.value()))?;
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate, cfg)
                .map_err(|_| diverged(total.value()))?;
            weights.set_flat(&params);
            sum += total.value();
            batches += 1;
        }
        let epoch_loss = sum / batches as f64;
        history.push(epoch_loss);
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        over = if epoch_loss > cfg.divergence_threshold { over + 1 } else { 0 };
        if over >= cfg.divergence_patience {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
    }
    let held_out_loss = subset_loss(&weights, data, test_idx, loss).map_err(|_| Error::Diverged {
        epoch: cfg.epochs,
        loss: f64::NAN,
    })?;
    Ok(FoldResult {
        fold,
        seed: init.seed,
        weights,
        held_out_loss,
        history,
    })
}

/// Every fold's outcome and the index of the best fold.
#[derive(Debug, Clone)]
pub struct KFoldResult {
    pub folds: Vec<std::result::Result<FoldResult, String>>,
    pub best: usize,
}

impl KFoldResult {
    pub fn best(&self) -> &FoldResult {
        self.folds[self.best].as_ref().expect("best fold succeeded")
    }
}

/// Trains one network per fold, each holding out a different part of the
/// data, and keeps the one with the lowest held-out loss.
pub fn train_kfold(
    data: &Dataset,
    shape: &NetworkShape,
    init: &InitSpec,
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<KFoldResult> {
    shape.validate()?;
    loss.validate()?;
    cfg.validate()?;
    if data.n() != shape.n {
        return Err(Error::Invalid(format!(
            "dataset has {} states, network expects {}",
            data.n(),
            shape.n
        )));
    }
    if data.len() < cfg.folds {
        return Err(Error::Invalid(format!(
            "{} samples cannot fill {} folds",
            data.len(),
            cfg.folds
        )));
    }
    let held = partition(data.len(), cfg.folds, init.seed);
    let run = |f: usize| {
        let test = &held[f];
        let train: Vec<usize> = held
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        let spec = InitSpec {
            seed: fold_seed(init.seed, f, cfg.same_fold_seeds),
            ..*init
        };
        train_fold(data, &train, test, f, shape, &spec, loss, cfg).map_err(|e| e.to_string())
    };
    let folds: Vec<_> = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(|| (0..cfg.folds).into_par_iter().map(run).collect()),
        None => (0..cfg.folds).into_par_iter().map(run).collect(),
    };
    let best = folds
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|f| (i, f.held_out_loss)))
        .fold(None, |acc: Option<(usize, f64)>, (i, l)| match acc {
            Some((_, b)) if b <= l => acc,
            _ => Some((i, l)),
        })
        .map(|(i, _)| i)
        .ok_or(Error::AllFoldsDiverged(cfg.folds))?;
    Ok(KFoldResult { folds, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{build_dataset, Layout, SystemDef};

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.01, &cfg).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[1.0, -3.0], &mut s, 0.01, &cfg).unwrap();
        // mh/sqrt(vh) = sign(g) on the first step
        assert!((p[0] - (1.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (2.0 + 0.01 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN], &mut s, 0.01, &cfg),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn batch_rule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_for(800), 28);
        assert_eq!(cfg.batch_for(12800), 32);
        assert_eq!(cfg.batch_for(3), 1);
    }

    #[test]
    fn partition_covers_indices() {
        let parts = partition(1003, 5, 9);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1003).collect::<Vec<_>>());
        assert!(parts.iter().all(|p| p.len() == 200 || p.len() == 201));
    }

    fn decay() -> Dataset {
        let sys = SystemDef::from_texts(
            "decay",
            &["x"],
            &["-x"],
            vec![(0.5, 2.0)],
            Layout {
                trajectories: 20,
                points: 10,
                horizon: 2.0,
            },
        )
        .unwrap();
        build_dataset(&sys, &sys.layout, 0.01, 0.01, 3).unwrap()
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let data = decay();
        let shape = NetworkShape::new(1, 1, 2).unwrap();
        let init = InitSpec::with_seed(2);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let idx: Vec<usize> = (0..data.len()).collect();
        let r = train_fold(&data, &idx, &idx, 0, &shape, &init, &LossConfig::custom(), &cfg)
            .unwrap();
        assert_eq!(r.weights, init_weights(&shape, &init));
        assert!(r.history.is_empty());
    }

    #[test]
    fn linear_decay_trains_down() {
        let data = decay();
        let shape = NetworkShape::new(1, 1, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let idx: Vec<usize> = (0..data.len()).collect();
        let r = train_fold(
            &data,
            &idx[..160],
            &idx[160..],
            0,
            &shape,
            &InitSpec::with_seed(1),
            &LossConfig {
                reg: crate::loss::RegKind::None,
                ..LossConfig::custom()
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(r.history.len(), 200);
        assert!(*r.history.last().unwrap() < 0.05, "{:?}", r.history.last());
    }

    #[test]
    fn identical_folds_pick_the_first() {
        let mut data = decay();
        let (x0, y0) = (data.x[0].clone(), data.y[0].clone());
        data.x.iter_mut().for_each(|r| *r = x0.clone());
        data.y.iter_mut().for_each(|r| *r = y0.clone());
        let shape = NetworkShape::new(1, 1, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            same_fold_seeds: true,
            ..TrainConfig::default()
        };
        let r = train_kfold(&data, &shape, &InitSpec::with_seed(4), &LossConfig::custom(), &cfg)
            .unwrap();
        let l0 = r.folds[0].as_ref().unwrap().held_out_loss;
        assert!(r.folds.iter().all(|f| f.as_ref().unwrap().held_out_loss == l0));
        assert_eq!(r.best, 0);
    }

    #[test]
    fn kfold_is_deterministic_across_thread_counts() {
        let data = decay();
        let shape = NetworkShape::new(1, 1, 1).unwrap();
        let base = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let init = InitSpec::with_seed(6);
        let a = train_kfold(&data, &shape, &init, &LossConfig::custom(), &base).unwrap();
        let one = TrainConfig {
            threads: Some(1),
            ..base
        };
        let b = train_kfold(&data, &shape, &init, &LossConfig::custom(), &one).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.best(), b.best());
    }

    #[test]
    fn adam_descends_a_convex_quadratic() {
        let cfg = TrainConfig::default();
        let target = [1.5, -0.5, 3.0];
        let f = |p: &[f64]| -> f64 { p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum() };
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        let mut prev = f(&p);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            adam_step(&mut p, &g, &mut s, 1e-3, &cfg).unwrap();
            let now = f(&p);
            assert!(now <= prev + 1e-6);
            prev = now;
        }
    }
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DynamicsModel, Ensemble, OvershootConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::bptt::{self, OvershootScratch};
use crate::nn::{adam_step, AdamState, Normalizer, RecurrentNet};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelTrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Caps the number of minibatches per epoch; `None` sweeps every segment.
    pub batches_per_epoch: Option<usize>,
    /// Validation uses at most this many evenly spaced segments.
    pub max_validation_segments: usize,
    pub overshoot: OvershootConfig,
}

impl Default for ModelTrainConfig {
    fn default() -> Self {
        ModelTrainConfig {
            hidden: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 20,
            batches_per_epoch: None,
            max_validation_segments: 512,
            overshoot: OvershootConfig::training(),
        }
    }
}

impl ModelTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.overshoot.validate()?;
        if self.hidden == 0 || self.batch_size == 0 || self.max_validation_segments == 0 {
            return Err(Error::InvalidParameter(
                "hidden size, batch size and validation segments must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: DynamicsModel,
    pub seed: u64,
    /// Best validation loss; the returned weights are the ones that achieved it.
    pub validation_loss: f64,
    pub epochs: usize,
    /// Validation loss before training and after every epoch.
    pub history: Vec<f64>,
}

/// Normalized episodes plus every admissible segment start.
struct SegmentPool {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    starts: Vec<(usize, usize)>,
}

impl SegmentPool {
    fn new(data: &Dataset, model: &DynamicsModel, cfg: &OvershootConfig) -> Self {
        let need = cfg.segment_states();
        let mut pool = SegmentPool {
            states: Vec::new(),
            actions: Vec::new(),
            starts: Vec::new(),
        };
        for (e, ep) in data.episodes.iter().enumerate() {
            let raw_s: Vec<f64> = ep.states.iter().map(|&x| x as f64).collect();
            let raw_a: Vec<f64> = ep.actions.iter().map(|&x| x as f64).collect();
            pool.states.push(model.state_norm.normalize(&raw_s));
            pool.actions.push(model.action_norm.normalize(&raw_a));
            let n = data.episode_len(e) + 1;
            if n >= need {
                pool.starts.extend((0..=n - need).map(|t| (e, t)));
            }
        }
        pool
    }

    fn loss(
        &self,
        net: &RecurrentNet,
        (e, t): (usize, usize),
        cfg: &OvershootConfig,
        grad: Option<(&mut [f64], f64)>,
        scratch: &mut OvershootScratch,
    ) -> f64 {
        let (s, a) = (net.output_dim(), net.input_dim() - net.output_dim());
        bptt::overshoot(
            net,
            &self.states[e][t * s..],
            &self.actions[e][t * a..],
            cfg.history_len,
            cfg.horizon,
            grad,
            scratch,
        )
    }

    /// Up to `max` starts spread evenly over the pool.
    fn strided(&self, max: usize) -> Vec<(usize, usize)> {
        let n = self.starts.len();
        if n <= max {
            return self.starts.clone();
        }
        (0..max).map(|i| self.starts[i * n / max]).collect()
    }
}

/// Fits state and action normalizers on `data`.
pub fn fit_normalizers(data: &Dataset) -> (Normalizer, Normalizer) {
    let s = data.state_rows();
    let a = data.action_rows();
    (
        Normalizer::fit(data.state_dim, s.chunks(data.state_dim)),
        Normalizer::fit(data.action_dim, a.chunks(data.action_dim)),
    )
}

/// Trains one model with normalizers fitted on `train`.
pub fn train_model(
    train: &Dataset,
    validation: &Dataset,
    cfg: &ModelTrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    let (sn, an) = fit_normalizers(train);
    train_model_with_norm(train, validation, cfg, seed, sn, an)
}

/// Trains one model by minibatch Adam on the overshooting loss, keeping the
/// weights with the lowest validation loss and stopping after `patience`
/// epochs without improvement.
pub fn train_model_with_norm(
    train: &Dataset,
    validation: &Dataset,
    cfg: &ModelTrainConfig,
    seed: u64,
    state_norm: Normalizer,
    action_norm: Normalizer,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let (s_dim, a_dim) = (train.state_dim, train.action_dim);
    let net = RecurrentNet::random(
        s_dim + a_dim,
        cfg.hidden,
        s_dim,
        &mut rng::stream(seed, rng::TAG_MODEL_INIT, 0, 0),
    );
    let mut model = DynamicsModel::new(net, state_norm, action_norm)?;
    let oc = &cfg.overshoot;
    let train_pool = SegmentPool::new(train, &model, oc);
    let val_pool = SegmentPool::new(validation, &model, oc);
    if train_pool.starts.is_empty() || val_pool.starts.is_empty() {
        let shortest = train
            .episodes
            .iter()
            .chain(&validation.episodes)
            .map(|e| e.actions.len() / a_dim.max(1) + 1)
            .min()
            .unwrap_or(0);
        return Err(Error::SegmentTooShort {
            needed: oc.segment_states(),
            actual: shortest,
        });
    }
    let val_starts = val_pool.strided(cfg.max_validation_segments);
    let mut scratch = OvershootScratch::new();
    let validate = |net: &RecurrentNet, scratch: &mut OvershootScratch| {
        val_starts
            .iter()
            .map(|&st| val_pool.loss(net, st, oc, None, scratch))
            .sum::<f64>()
            / val_starts.len() as f64
    };

    let mut params = model.net.flatten();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut best = validate(&model.net, &mut scratch);
    let mut best_params = params.clone();
    let mut history = vec![best];
    let mut stale = 0;
    let mut epochs = 0;
    let mut order = train_pool.starts.clone();
    let mut step = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng::stream(
            seed,
            rng::TAG_MODEL_BATCH,
            epoch as u64,
            0,
        ));
        let batches = order.chunks(cfg.batch_size);
        let limit = cfg.batches_per_epoch.unwrap_or(usize::MAX);
        for batch in batches.take(limit) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &st in batch {
                loss += w * train_pool.loss(&model.net, st, oc, Some((&mut grad, w)), &mut scratch);
            }
            if !loss.is_finite() || adam_step(&mut params, &grad, &mut adam).is_err() {
                return Err(Error::Diverged { step });
            }
            model.net.set_flat(&params)?;
            step += 1;
        }
        epochs = epoch + 1;
        let val = validate(&model.net, &mut scratch);
        if !val.is_finite() {
            return Err(Error::Diverged { step });
        }
        history.push(val);
        log::debug!("model seed {seed} epoch {epochs}: validation loss {val:.6}");
        if val < best {
            best = val;
            best_params.copy_from_slice(&params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.net.set_flat(&best_params)?;
    Ok(TrainedModel {
        model,
        seed,
        validation_loss: best,
        epochs,
        history,
    })
}

/// Trains `k` models with seeds `base_seed, …, base_seed + k - 1` on the same
/// split and shared normalizers. Members train in parallel; the result does
/// not depend on the number of worker threads.
pub fn train_ensemble(
    train: &Dataset,
    validation: &Dataset,
    cfg: &ModelTrainConfig,
    k: usize,
    base_seed: u64,
) -> Result<(Ensemble, Vec<TrainedModel>)> {
    use rayon::prelude::*;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "ensemble size must be at least 1".into(),
        ));
    }
    let (sn, an) = fit_normalizers(train);
    let seeds: Vec<u64> = (0..k as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let trained = seeds
        .par_iter()
        .map(|&s| train_model_with_norm(train, validation, cfg, s, sn.clone(), an.clone()))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(trained.iter().map(|t| t.model.clone()).collect(), seeds)?;
    Ok((ensemble, trained))
}

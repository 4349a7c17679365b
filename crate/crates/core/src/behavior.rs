//! Behavior cloning: the reference policy `ψ`.
//!
//! `ψ` has the same architecture as the searched policies and is fitted by
//! minibatch Adam to reproduce the dataset action `a_t` from the window of
//! states ending at `t`. The loss is the mean squared error over windows and
//! action components; the weights with the lowest validation error are kept.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{sidecar_path, Dataset};
use crate::error::{check_len, Error, Result};
use crate::jsonfile;
use crate::nn::{
    adam_step, weights, AdamState, Normalizer, PolicyArch, PolicyNet, PolicyScratch, PolicyWeights,
};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcTrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batches_per_epoch: Option<usize>,
}

impl Default for BcTrainConfig {
    fn default() -> Self {
        BcTrainConfig {
            hidden: PolicyArch::DEFAULT_HIDDEN,
            batch_size: 256,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 20,
            batches_per_epoch: None,
        }
    }
}

/// A fitted reference policy and how well it fits.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorClone {
    pub net: PolicyNet,
    pub weights: PolicyWeights,
    pub seed: u64,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub epochs: usize,
}

/// JSON sidecar stored next to the reference policy's weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRecord {
    pub net: PolicyNet,
    pub param_count: usize,
    pub seed: u64,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub epochs: usize,
    /// SHA-256 of the dataset the clone was fitted on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
}

/// Windows of a dataset in the policy's normalized space.
struct WindowSet {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    positions: Vec<(usize, usize)>,
    history_len: usize,
    state_dim: usize,
    action_dim: usize,
}

impl WindowSet {
    fn new(data: &Dataset, norm: &Normalizer) -> Self {
        let states = data
            .episodes
            .iter()
            .map(|e| norm.normalize(&e.states.iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .collect();
        let actions = data
            .episodes
            .iter()
            .map(|e| e.actions.iter().map(|&x| x as f64).collect())
            .collect();
        WindowSet {
            states,
            actions,
            positions: data.window_positions().collect(),
            history_len: data.history_len,
            state_dim: data.state_dim,
            action_dim: data.action_dim,
        }
    }

    fn get(&self, (e, t): (usize, usize)) -> (&[f64], &[f64]) {
        let (s, a, h) = (self.state_dim, self.action_dim, self.history_len);
        (
            &self.states[e][(t - h) * s..(t + 1) * s],
            &self.actions[e][t * a..(t + 1) * a],
        )
    }

    fn mse(&self, arch: &PolicyArch, theta: &[f64]) -> f64 {
        let mut hidden = vec![0.0; arch.hidden];
        let mut out = vec![0.0; arch.action_dim];
        let mut sq = 0.0;
        for &p in &self.positions {
            let (x, y) = self.get(p);
            arch.forward_into(theta, x, &mut hidden, &mut out);
            sq += out
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        sq / (self.positions.len() * arch.action_dim) as f64
    }
}

fn check_dataset(arch: &PolicyArch, data: &Dataset) -> Result<()> {
    check_len("dataset state dim", arch.state_dim, data.state_dim)?;
    check_len("dataset action dim", arch.action_dim, data.action_dim)?;
    check_len("dataset history length", arch.history_len, data.history_len)?;
    if data.window_count() == 0 {
        return Err(Error::InvalidParameter("dataset has no windows".into()));
    }
    Ok(())
}

/// Mean squared error between `π_θ` and the dataset actions over every
/// window and action component of `data`.
pub fn bc_action_mse(net: &PolicyNet, theta: &[f64], data: &Dataset) -> Result<f64> {
    net.check_weights(theta)?;
    check_dataset(&net.arch, data)?;
    Ok(WindowSet::new(data, &net.state_norm).mse(&net.arch, theta))
}

/// Fits the reference policy on `train`, selecting weights on `validation`.
/// The state normalizer is fitted on `train`.
pub fn train_bc(
    train: &Dataset,
    validation: &Dataset,
    cfg: &BcTrainConfig,
    seed: u64,
) -> Result<BehaviorClone> {
    if cfg.batch_size == 0 || cfg.hidden == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter(
            "batch size, hidden size and learning rate must be positive".into(),
        ));
    }
    let mut arch = PolicyArch::new(train.history_len, train.state_dim, train.action_dim);
    arch.hidden = cfg.hidden;
    check_dataset(&arch, train)?;
    check_dataset(&arch, validation)?;
    let rows = train.state_rows();
    let norm = Normalizer::fit(train.state_dim, rows.chunks(train.state_dim));
    let net = PolicyNet::new(arch, norm)?;
    let train_set = WindowSet::new(train, &net.state_norm);
    let val_set = WindowSet::new(validation, &net.state_norm);

    let mut theta = net
        .random_weights(&mut rng::stream(seed, rng::TAG_BC_INIT, 0, 0))
        .0;
    let mut adam = AdamState::new(theta.len(), cfg.learning_rate);
    let mut grad = vec![0.0; theta.len()];
    let mut scratch = PolicyScratch::new(&arch);
    let mut best = val_set.mse(&arch, &theta);
    let mut best_theta = theta.clone();
    let mut stale = 0;
    let mut epochs = 0;
    let mut order = train_set.positions.clone();
    let mut step = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng::stream(seed, rng::TAG_BC_BATCH, epoch as u64, 0));
        for batch in order
            .chunks(cfg.batch_size)
            .take(cfg.batches_per_epoch.unwrap_or(usize::MAX))
        {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            for &p in batch {
                let (x, y) = train_set.get(p);
                arch.accumulate_mse_gradient(&theta, x, y, w, &mut scratch, &mut grad);
            }
            if adam_step(&mut theta, &grad, &mut adam).is_err() {
                return Err(Error::Diverged { step });
            }
            step += 1;
        }
        epochs = epoch + 1;
        let val = val_set.mse(&arch, &theta);
        if !val.is_finite() {
            return Err(Error::Diverged { step });
        }
        log::debug!("behavior clone epoch {epochs}: validation mse {val:.6}");
        if val < best {
            best = val;
            best_theta.copy_from_slice(&theta);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let train_mse = train_set.mse(&arch, &best_theta);
    Ok(BehaviorClone {
        net,
        weights: PolicyWeights(best_theta),
        seed,
        train_mse,
        validation_mse: best,
        epochs,
    })
}

impl BehaviorClone {
    pub fn record(&self, dataset_sha256: Option<String>) -> BehaviorRecord {
        BehaviorRecord {
            net: self.net.clone(),
            param_count: self.weights.len(),
            seed: self.seed,
            train_mse: self.train_mse,
            validation_mse: self.validation_mse,
            epochs: self.epochs,
            dataset_sha256,
        }
    }
}

/// Writes the weights to `path` and the record to `path.json`.
pub fn save_policy(path: &Path, theta: &[f64], record: &BehaviorRecord) -> Result<()> {
    record.net.check_weights(theta)?;
    weights::write(path, theta)?;
    jsonfile::write(&sidecar_path(path), record)
}

pub fn load_policy(path: &Path) -> Result<(PolicyWeights, BehaviorRecord)> {
    let record: BehaviorRecord = jsonfile::read(&sidecar_path(path))?;
    let theta = weights::read(path)?;
    check_len("policy parameters", record.param_count, theta.len())?;
    record.net.check_weights(&theta)?;
    Ok((PolicyWeights(theta), record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split;
    use crate::env::{generate_dataset, BaselinePolicy, GenerateConfig};

    fn data() -> Dataset {
        let mut cfg = GenerateConfig::new(BaselinePolicy::Mediocre, 0.2, 2000, 4);
        cfg.episode_length = 200;
        cfg.history_len = 3;
        generate_dataset(&cfg).unwrap()
    }

    fn cfg() -> BcTrainConfig {
        BcTrainConfig {
            hidden: 8,
            batch_size: 64,
            learning_rate: 3e-3,
            max_epochs: 15,
            patience: 5,
            batches_per_epoch: None,
        }
    }

    #[test]
    fn clone_beats_constant_predictor() {
        let d = data();
        let (tr, va) = split(&d, 0.2, 0).unwrap();
        let bc = train_bc(&tr, &va, &cfg(), 3).unwrap();
        // predicting zero for every component scores the mean squared action
        let zero: f64 =
            va.action_rows().iter().map(|a| a * a).sum::<f64>() / va.action_rows().len() as f64;
        assert!(
            bc.validation_mse < 0.8 * zero,
            "{} vs {}",
            bc.validation_mse,
            zero
        );
        let again = bc_action_mse(&bc.net, bc.weights.as_slice(), &va).unwrap();
        assert!((again - bc.validation_mse).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_seed_dependent() {
        let d = data();
        let (tr, va) = split(&d, 0.2, 0).unwrap();
        let mut c = cfg();
        c.max_epochs = 2;
        let a = train_bc(&tr, &va, &c, 1).unwrap();
        assert_eq!(a, train_bc(&tr, &va, &c, 1).unwrap());
        assert_ne!(a.weights, train_bc(&tr, &va, &c, 2).unwrap().weights);
    }

    #[test]
    fn mse_matches_window_by_window_evaluation() {
        let d = data();
        let net = PolicyNet::new(PolicyArch::new(3, 6, 3), Normalizer::identity(6)).unwrap();
        let theta = net.random_weights(&mut rng::stream(0, 0, 0, 0));
        let mut sq = 0.0;
        let mut n = 0;
        for (e, t) in d.window_positions() {
            let w = d.window(e, t).unwrap();
            let a = crate::nn::policy_forward(&net, &theta, &w).unwrap();
            for (x, y) in a.iter().zip(d.action(e, t)) {
                sq += (x - *y as f64).powi(2);
                n += 1;
            }
        }
        let direct = bc_action_mse(&net, theta.as_slice(), &d).unwrap();
        assert!((direct - sq / n as f64).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let d = data();
        let (tr, va) = split(&d, 0.2, 0).unwrap();
        let mut c = cfg();
        c.max_epochs = 1;
        let bc = train_bc(&tr, &va, &c, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("psi.wsbw");
        save_policy(&p, bc.weights.as_slice(), &bc.record(Some("ab".into()))).unwrap();
        let (w, rec) = load_policy(&p).unwrap();
        assert_eq!(rec.dataset_sha256.as_deref(), Some("ab"));
        assert_eq!(rec.net, bc.net);
        for (x, y) in w.0.iter().zip(&bc.weights.0) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
}

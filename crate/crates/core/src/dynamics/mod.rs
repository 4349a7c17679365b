//! Recurrent transition-model ensembles.
//!
//! A [`DynamicsModel`] is a [`RecurrentNet`] wrapped in per-feature
//! standardization of its state and action inputs. Its prediction lives in
//! normalized state space; predictions are fed back unchanged as the next
//! input state and only denormalized to read rewards.
//!
//! Training minimizes the overshooting loss (see [`crate::nn::bptt`]): after
//! `history_len` warm-up steps on recorded states the model predicts
//! `horizon` further states from its own outputs while consuming recorded
//! actions. Rollouts ([`rollout`]) replace the recorded actions by a policy
//! and score each step with the worst reward across ensemble members.

mod io;
mod rollout;
mod train;

pub use io::{load_ensemble, load_model, save_ensemble, save_model, ModelRecord};
pub use rollout::{
    rollout_conservative, rollout_single, Propagation, RolloutConfig, RolloutEngine, RolloutStats,
    RolloutTrace,
};
pub use train::{
    fit_normalizers, train_ensemble, train_model, train_model_with_norm, ModelTrainConfig,
    TrainedModel,
};

use serde::{Deserialize, Serialize};

use crate::data::HistoryWindow;
use crate::error::{check_finite, check_len, Error, Result};
use crate::nn::bptt::{self, OvershootScratch};
use crate::nn::{Normalizer, RecurrentNet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OvershootConfig {
    /// Warm-up steps `H_p` on recorded states.
    pub history_len: usize,
    /// Predicted steps `H_f`.
    pub horizon: usize,
    /// Discount for rollouts; unused by the training loss.
    pub gamma: f64,
}

impl Default for OvershootConfig {
    fn default() -> Self {
        Self::training()
    }
}

impl OvershootConfig {
    /// `H_p = 30`, `H_f = 50`.
    pub fn training() -> Self {
        OvershootConfig {
            history_len: 30,
            horizon: 50,
            gamma: 0.97,
        }
    }

    /// `H_p = 30`, `H_f = 100`, `γ = 0.97`.
    pub fn rollout() -> Self {
        OvershootConfig {
            history_len: 30,
            horizon: 100,
            gamma: 0.97,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }

    /// States a training segment must hold.
    pub fn segment_states(&self) -> usize {
        self.history_len + self.horizon + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModel {
    pub net: RecurrentNet,
    pub state_norm: Normalizer,
    pub action_norm: Normalizer,
}

impl DynamicsModel {
    pub fn new(net: RecurrentNet, state_norm: Normalizer, action_norm: Normalizer) -> Result<Self> {
        let m = DynamicsModel {
            net,
            state_norm,
            action_norm,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.state_norm.validate()?;
        self.action_norm.validate()?;
        check_len("model output", self.state_norm.dim(), self.net.output_dim())?;
        check_len(
            "model input",
            self.state_norm.dim() + self.action_norm.dim(),
            self.net.input_dim(),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.state_norm.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_norm.dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.net.hidden_dim()
    }

    /// One step in raw units: returns `(next state, new hidden)`.
    pub fn step(
        &self,
        state: &[f64],
        action: &[f64],
        hidden: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("model state", self.state_dim(), state.len())?;
        check_len("model action", self.action_dim(), action.len())?;
        check_len("model hidden", self.hidden_dim(), hidden.len())?;
        check_finite("model state", state)?;
        check_finite("model action", action)?;
        let input = self.input(state, action);
        let mut h = vec![0.0; self.hidden_dim()];
        let mut y = vec![0.0; self.state_dim()];
        self.net.step_into(&input, hidden, &mut h, &mut y);
        Ok((self.state_norm.denormalize(&y), h))
    }

    fn input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut input = vec![0.0; self.net.input_dim()];
        let s = self.state_dim();
        self.state_norm.normalize_into(state, &mut input[..s]);
        self.action_norm.normalize_into(action, &mut input[s..]);
        input
    }

    /// Normalizes a raw segment into `(states, actions)`.
    fn normalize_segment(&self, segment: &Segment<'_>) -> (Vec<f64>, Vec<f64>) {
        (
            self.state_norm.normalize(segment.states),
            self.action_norm.normalize(segment.actions),
        )
    }
}

/// `K` models sharing dimensions and normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<DynamicsModel>,
    pub seeds: Vec<u64>,
}

impl Ensemble {
    pub fn new(members: Vec<DynamicsModel>, seeds: Vec<u64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter(
                "an ensemble needs at least one member".into(),
            ));
        }
        check_len("ensemble seeds", members.len(), seeds.len())?;
        let first = &members[0];
        for m in &members {
            m.validate()?;
            if m.state_norm != first.state_norm
                || m.action_norm != first.action_norm
                || m.hidden_dim() != first.hidden_dim()
            {
                return Err(Error::InvalidParameter(
                    "ensemble members must share dimensions and normalization".into(),
                ));
            }
        }
        Ok(Ensemble { members, seeds })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.members[0].state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.members[0].action_dim()
    }
}

/// A contiguous slice of one trajectory in raw units: `n + 1` states and `n`
/// actions, row-major.
#[derive(Clone, Copy, Debug)]
pub struct Segment<'a> {
    pub states: &'a [f64],
    pub actions: &'a [f64],
}

impl<'a> Segment<'a> {
    fn check(&self, model: &DynamicsModel, cfg: &OvershootConfig) -> Result<()> {
        cfg.validate()?;
        let (s, a) = (model.state_dim(), model.action_dim());
        if self.states.len() % s != 0 {
            return Err(Error::Dimension {
                context: "segment states",
                expected: s,
                actual: self.states.len() % s,
            });
        }
        let n = self.states.len() / s;
        if n < cfg.segment_states() {
            return Err(Error::SegmentTooShort {
                needed: cfg.segment_states(),
                actual: n,
            });
        }
        if self.actions.len() < (cfg.segment_states() - 1) * a {
            return Err(Error::Dimension {
                context: "segment actions",
                expected: (cfg.segment_states() - 1) * a,
                actual: self.actions.len(),
            });
        }
        check_finite("segment states", self.states)?;
        check_finite("segment actions", self.actions)
    }
}

/// Hidden state after feeding the window's first `history_len` (state,
/// action) pairs to `model`, starting from zeros.
pub fn warmup_hidden(model: &DynamicsModel, window: &HistoryWindow) -> Result<Vec<f64>> {
    check_len("window state dim", model.state_dim(), window.state_dim)?;
    check_len("window action dim", model.action_dim(), window.action_dim)?;
    check_finite("window states", &window.states)?;
    check_finite("window actions", &window.actions)?;
    let mut h = vec![0.0; model.hidden_dim()];
    let mut next = vec![0.0; model.hidden_dim()];
    let mut y = vec![0.0; model.state_dim()];
    for i in 0..window.history_len() {
        let input = model.input(window.state(i), window.action(i));
        model.net.step_into(&input, &h, &mut next, &mut y);
        std::mem::swap(&mut h, &mut next);
    }
    Ok(h)
}

/// Overshooting loss of `model` on `segment` (normalized-space mean squared
/// error over the `horizon` open-loop predictions).
pub fn overshoot_loss(
    model: &DynamicsModel,
    segment: &Segment<'_>,
    cfg: &OvershootConfig,
) -> Result<f64> {
    segment.check(model, cfg)?;
    let (s, a) = model.normalize_segment(segment);
    Ok(bptt::overshoot(
        &model.net,
        &s,
        &a,
        cfg.history_len,
        cfg.horizon,
        None,
        &mut OvershootScratch::new(),
    ))
}

/// Gradient of [`overshoot_loss`] with respect to the model parameters, in
/// canonical order.
pub fn bptt_gradient(
    model: &DynamicsModel,
    segment: &Segment<'_>,
    cfg: &OvershootConfig,
) -> Result<Vec<f64>> {
    Ok(batch_gradient(model, std::slice::from_ref(segment), cfg)?.1)
}

/// Mean loss and mean gradient over a batch of segments.
pub fn batch_gradient(
    model: &DynamicsModel,
    segments: &[Segment<'_>],
    cfg: &OvershootConfig,
) -> Result<(f64, Vec<f64>)> {
    if segments.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let mut grad = vec![0.0; model.net.param_count()];
    let mut scratch = OvershootScratch::new();
    let w = 1.0 / segments.len() as f64;
    let mut loss = 0.0;
    for seg in segments {
        seg.check(model, cfg)?;
        let (s, a) = model.normalize_segment(seg);
        loss += w * bptt::overshoot(
            &model.net,
            &s,
            &a,
            cfg.history_len,
            cfg.horizon,
            Some((&mut grad, w)),
            &mut scratch,
        );
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn toy_model(hidden: usize) -> DynamicsModel {
        let net = RecurrentNet::random(3, hidden, 2, &mut rng::stream(21, 0, 0, 0));
        DynamicsModel::new(
            net,
            Normalizer {
                mean: vec![0.5, -1.0],
                scale: vec![2.0, 0.5],
            },
            Normalizer {
                mean: vec![0.1],
                scale: vec![0.9],
            },
        )
        .unwrap()
    }

    fn toy_segment(n: usize) -> (Vec<f64>, Vec<f64>) {
        let s = (0..(n + 1) * 2)
            .map(|i| (i as f64 * 0.37).sin() * 2.0)
            .collect();
        let a = (0..n).map(|i| (i as f64 * 0.71).cos()).collect();
        (s, a)
    }

    #[test]
    fn bptt_matches_finite_differences_on_toy_instance() {
        let model = toy_model(4);
        let cfg = OvershootConfig {
            history_len: 2,
            horizon: 3,
            gamma: 1.0,
        };
        let (s, a) = toy_segment(5);
        let seg = Segment {
            states: &s,
            actions: &a,
        };
        let grad = bptt_gradient(&model, &seg, &cfg).unwrap();
        let flat = model.net.flatten();
        for i in 0..flat.len() {
            let at = |d: f64| {
                let mut m = model.clone();
                let mut p = flat.clone();
                p[i] += d;
                m.net.set_flat(&p).unwrap();
                overshoot_loss(&m, &seg, &cfg).unwrap()
            };
            let fd = (at(1e-5) - at(-1e-5)) / 2e-5;
            if fd.abs() < 1e-8 && grad[i].abs() < 1e-8 {
                continue;
            }
            assert!((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()) < 1e-4);
        }
    }

    #[test]
    fn exact_model_has_zero_loss_and_gradient() {
        // With all weights zero the prediction is the head bias; a constant
        // trajectory at that value (in normalized space) is reproduced exactly.
        let mut model = toy_model(4);
        model
            .net
            .set_flat(&vec![0.0; model.net.param_count()])
            .unwrap();
        model.net.head.bias = vec![0.25, -0.5];
        let raw = model.state_norm.denormalize(&[0.25, -0.5]);
        let s: Vec<f64> = (0..6).flat_map(|_| raw.clone()).collect();
        let a = vec![0.3; 5];
        let cfg = OvershootConfig {
            history_len: 2,
            horizon: 3,
            gamma: 1.0,
        };
        let seg = Segment {
            states: &s,
            actions: &a,
        };
        assert_eq!(overshoot_loss(&model, &seg, &cfg).unwrap(), 0.0);
        assert!(bptt_gradient(&model, &seg, &cfg)
            .unwrap()
            .iter()
            .all(|g| *g == 0.0));
    }

    #[test]
    fn duplicated_segments_leave_mean_gradient_unchanged() {
        let model = toy_model(4);
        let cfg = OvershootConfig {
            history_len: 2,
            horizon: 3,
            gamma: 1.0,
        };
        let (s, a) = toy_segment(5);
        let seg = Segment {
            states: &s,
            actions: &a,
        };
        let (l1, g1) = batch_gradient(&model, &[seg], &cfg).unwrap();
        let (l2, g2) = batch_gradient(&model, &[seg, seg], &cfg).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (x, y) in g1.iter().zip(&g2) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn single_step_horizon_is_one_step_mse() {
        let model = toy_model(5);
        let cfg = OvershootConfig {
            history_len: 3,
            horizon: 1,
            gamma: 1.0,
        };
        let (s, a) = toy_segment(4);
        let seg = Segment {
            states: &s,
            actions: &a,
        };
        let loss = overshoot_loss(&model, &seg, &cfg).unwrap();
        let window = HistoryWindow::new(2, 1, s[..8].to_vec(), a[..3].to_vec()).unwrap();
        let h = warmup_hidden(&model, &window).unwrap();
        let (pred, _) = model.step(&s[6..8], &a[3..4], &h).unwrap();
        let zp = model.state_norm.normalize(&pred);
        let zt = model.state_norm.normalize(&s[8..10]);
        let direct = ((zp[0] - zt[0]).powi(2) + (zp[1] - zt[1]).powi(2)) / 2.0;
        assert!((loss - direct).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_two_step_instance() {
        // scalar state and action, one hidden unit, identity normalization:
        // h1 = tanh(0.5·s0 + 1·a0), y1 = 2·h1 (warm-up, unscored)
        // h2 = tanh(0.5·s1 + 1·a1 + 0.3·h1), y2 = 2·h2 → scored against s2
        let net = RecurrentNet {
            cell: crate::nn::RecurrentParams {
                input_dim: 2,
                hidden_dim: 1,
                input_weights: vec![0.5, 1.0],
                recurrent_weights: vec![0.3],
                bias: vec![0.0],
            },
            head: crate::nn::DenseParams::new(1, 1, vec![2.0], vec![0.0]).unwrap(),
        };
        let model =
            DynamicsModel::new(net, Normalizer::identity(1), Normalizer::identity(1)).unwrap();
        let s = [0.2, 0.4, 1.0];
        let a = [0.1, -0.3];
        let cfg = OvershootConfig {
            history_len: 1,
            horizon: 1,
            gamma: 1.0,
        };
        let h1 = (0.5f64 * 0.2 + 0.1).tanh();
        let h2 = (0.5f64 * 0.4 - 0.3 + 0.3 * h1).tanh();
        let expected = (2.0 * h2 - 1.0).powi(2);
        let loss = overshoot_loss(
            &model,
            &Segment {
                states: &s,
                actions: &a,
            },
            &cfg,
        )
        .unwrap();
        assert!((loss - expected).abs() < 1e-15);
    }

    #[test]
    fn short_segment_is_rejected() {
        let model = toy_model(4);
        let cfg = OvershootConfig {
            history_len: 2,
            horizon: 3,
            gamma: 1.0,
        };
        let (s, a) = toy_segment(4);
        let err = overshoot_loss(
            &model,
            &Segment {
                states: &s,
                actions: &a,
            },
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::SegmentTooShort {
                needed: 6,
                actual: 5
            }
        ));
    }

    #[test]
    fn warmup_edge_cases() {
        let mut model = toy_model(3);
        let w0 = HistoryWindow::new(2, 1, vec![1.0, 2.0], vec![]).unwrap();
        assert_eq!(warmup_hidden(&model, &w0).unwrap(), vec![0.0; 3]);

        // zero weights: every step gives tanh(b); after any number of steps the
        // hidden state is tanh(b)
        model
            .net
            .set_flat(&vec![0.0; model.net.param_count()])
            .unwrap();
        model.net.cell.bias = vec![0.2, -0.7, 1.5];
        let states: Vec<f64> = (0..31 * 2).map(|i| i as f64).collect();
        let w = HistoryWindow::new(2, 1, states, vec![0.5; 30]).unwrap();
        let h = warmup_hidden(&model, &w).unwrap();
        assert_eq!(h, vec![0.2f64.tanh(), (-0.7f64).tanh(), 1.5f64.tanh()]);
        assert_eq!(h, warmup_hidden(&model, &w).unwrap());
    }
}

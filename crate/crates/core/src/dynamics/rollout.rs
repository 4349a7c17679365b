//! Policy rollouts through an ensemble.
//!
//! From a dataset window the models are warmed up on the recorded history;
//! then, for `horizon` steps, the policy picks an action from its window of
//! the last `history_len + 1` states and every member predicts the next
//! state. The step reward is the minimum over members and the return is
//! `Σ_j γ^j · min_k r_j^k`.
//!
//! With [`Propagation::Independent`] each member follows its own trajectory
//! (its own predictions feed its own next input and the policy's window).
//! With [`Propagation::Argmin`] all members share one trajectory that
//! continues from the prediction of the member with the lowest reward.

use serde::{Deserialize, Serialize};

use super::{warmup_hidden, DynamicsModel, Ensemble};
use crate::data::HistoryWindow;
use crate::env::state_reward;
use crate::error::{check_len, Error, Result};
use crate::nn::PolicyNet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    #[default]
    Independent,
    Argmin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub history_len: usize,
    pub horizon: usize,
    pub gamma: f64,
    #[serde(default)]
    pub propagation: Propagation,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            history_len: 30,
            horizon: 100,
            gamma: 0.97,
            propagation: Propagation::Independent,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter(
                "rollout horizon must be at least 1".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Per-step record of one rollout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutTrace {
    /// `min_k r_j^k` for each step.
    pub min_rewards: Vec<f64>,
    /// Member rewards, step-major (`K` entries per step).
    pub member_rewards: Vec<f64>,
    /// Member attaining the minimum (lowest index on ties).
    pub argmin: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RolloutStats {
    /// Discounted return of the worst-case reward sequence.
    pub ret: f64,
    /// Sum over visited windows of the mean squared difference between the
    /// evaluated policy's action and a reference policy's action.
    pub deviation_sum: f64,
    pub deviation_count: usize,
}

struct PreparedStart {
    /// Window states in the policy's normalized space.
    window: Vec<f64>,
    /// Last window state in the models' normalized space.
    current: Vec<f64>,
    /// Warm-up hidden state per member, concatenated.
    hiddens: Vec<f64>,
}

/// An ensemble, a policy architecture and a fixed set of start windows with
/// the model warm-up precomputed, ready to score many weight vectors.
pub struct RolloutEngine<'a> {
    ensemble: &'a Ensemble,
    policy: &'a PolicyNet,
    cfg: RolloutConfig,
    starts: Vec<PreparedStart>,
}

impl<'a> RolloutEngine<'a> {
    pub fn new(
        ensemble: &'a Ensemble,
        policy: &'a PolicyNet,
        starts: &[HistoryWindow],
        cfg: RolloutConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let arch = &policy.arch;
        check_len("policy state dim", ensemble.state_dim(), arch.state_dim)?;
        check_len("policy action dim", ensemble.action_dim(), arch.action_dim)?;
        check_len("policy history length", cfg.history_len, arch.history_len)?;
        if starts.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one start window is required".into(),
            ));
        }
        let prepared = starts
            .iter()
            .map(|w| {
                check_len("start window length", cfg.history_len + 1, w.len())?;
                let mut hiddens = Vec::new();
                for m in &ensemble.members {
                    hiddens.extend(warmup_hidden(m, w)?);
                }
                Ok(PreparedStart {
                    window: policy.state_norm.normalize(&w.states),
                    current: ensemble.members[0].state_norm.normalize(w.current()),
                    hiddens,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RolloutEngine {
            ensemble,
            policy,
            cfg,
            starts: prepared,
        })
    }

    pub fn config(&self) -> &RolloutConfig {
        &self.cfg
    }

    pub fn n_starts(&self) -> usize {
        self.starts.len()
    }

    /// Rolls `theta` out from start `start`. With `reference` set, also
    /// accumulates the squared action deviation from that weight vector on
    /// every window the rollout visits.
    pub fn rollout(
        &self,
        start: usize,
        theta: &[f64],
        reference: Option<&[f64]>,
        trace: Option<&mut RolloutTrace>,
    ) -> Result<RolloutStats> {
        self.policy.check_weights(theta)?;
        if let Some(r) = reference {
            self.policy.check_weights(r)?;
        }
        let p = self.starts.get(start).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "start {start} out of range ({} starts)",
                self.starts.len()
            ))
        })?;
        match self.cfg.propagation {
            Propagation::Independent => self.independent(p, theta, reference, trace),
            Propagation::Argmin => self.argmin(p, theta, reference, trace),
        }
    }

    /// Mean return over all start windows.
    pub fn mean_return(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.mean_stats(theta, None)?.0)
    }

    /// Mean return and mean action deviation from `reference` over all start
    /// windows.
    pub fn mean_stats(&self, theta: &[f64], reference: Option<&[f64]>) -> Result<(f64, f64)> {
        let mut ret = 0.0;
        let (mut dev, mut count) = (0.0, 0usize);
        for i in 0..self.starts.len() {
            let s = self.rollout(i, theta, reference, None)?;
            ret += s.ret;
            dev += s.deviation_sum;
            count += s.deviation_count;
        }
        let mean_dev = if count == 0 { 0.0 } else { dev / count as f64 };
        Ok((ret / self.starts.len() as f64, mean_dev))
    }

    fn independent(
        &self,
        p: &PreparedStart,
        theta: &[f64],
        reference: Option<&[f64]>,
        mut trace: Option<&mut RolloutTrace>,
    ) -> Result<RolloutStats> {
        let ens = &self.ensemble.members;
        let k = ens.len();
        let mut b = Buffers::new(self, p, k);
        let mut stats = RolloutStats::default();
        let mut discount = 1.0;
        let mut rewards = vec![0.0; k];
        for j in 0..self.cfg.horizon {
            let (mut min_r, mut arg) = (f64::INFINITY, 0);
            for (m, model) in ens.iter().enumerate() {
                b.act(self, m, j, theta, reference, &mut stats);
                let r = b.predict(model, m, m, j)?;
                b.push(self, m, j);
                rewards[m] = r;
                if r < min_r {
                    min_r = r;
                    arg = m;
                }
            }
            stats.ret += discount * min_r;
            discount *= self.cfg.gamma;
            if let Some(t) = trace.as_deref_mut() {
                t.min_rewards.push(min_r);
                t.member_rewards.extend_from_slice(&rewards);
                t.argmin.push(arg);
            }
        }
        Ok(stats)
    }

    fn argmin(
        &self,
        p: &PreparedStart,
        theta: &[f64],
        reference: Option<&[f64]>,
        mut trace: Option<&mut RolloutTrace>,
    ) -> Result<RolloutStats> {
        let ens = &self.ensemble.members;
        let k = ens.len();
        let s_dim = self.ensemble.state_dim();
        let mut b = Buffers::new(self, p, 1);
        let mut stats = RolloutStats::default();
        let mut discount = 1.0;
        let mut rewards = vec![0.0; k];
        let mut preds = vec![0.0; k * s_dim];
        let mut raws = vec![0.0; k * s_dim];
        for j in 0..self.cfg.horizon {
            b.act(self, 0, j, theta, reference, &mut stats);
            let (mut min_r, mut arg) = (f64::INFINITY, 0);
            for (m, model) in ens.iter().enumerate() {
                let r = b.predict(model, 0, m, j)?;
                preds[m * s_dim..(m + 1) * s_dim].copy_from_slice(&b.pred);
                raws[m * s_dim..(m + 1) * s_dim].copy_from_slice(&b.raw);
                rewards[m] = r;
                if r < min_r {
                    min_r = r;
                    arg = m;
                }
            }
            b.pred
                .copy_from_slice(&preds[arg * s_dim..(arg + 1) * s_dim]);
            b.raw.copy_from_slice(&raws[arg * s_dim..(arg + 1) * s_dim]);
            b.push(self, 0, j);
            stats.ret += discount * min_r;
            discount *= self.cfg.gamma;
            if let Some(t) = trace.as_deref_mut() {
                t.min_rewards.push(min_r);
                t.member_rewards.extend_from_slice(&rewards);
                t.argmin.push(arg);
            }
        }
        Ok(stats)
    }
}

/// Working memory for one rollout with `lanes` trajectories.
struct Buffers {
    /// Per lane: `history_len + 1 + horizon` policy-normalized states.
    traj: Vec<f64>,
    lane_len: usize,
    /// Per lane: current model-normalized state.
    current: Vec<f64>,
    /// Per member: hidden state.
    hidden: Vec<f64>,
    new_hidden: Vec<f64>,
    input: Vec<f64>,
    policy_hidden: Vec<f64>,
    action: Vec<f64>,
    reference_action: Vec<f64>,
    pred: Vec<f64>,
    raw: Vec<f64>,
}

impl Buffers {
    fn new(e: &RolloutEngine<'_>, p: &PreparedStart, lanes: usize) -> Self {
        let s = e.ensemble.state_dim();
        let a = e.ensemble.action_dim();
        let lane_len = (e.cfg.history_len + 1 + e.cfg.horizon) * s;
        let mut traj = vec![0.0; lanes * lane_len];
        let mut current = Vec::with_capacity(lanes * s);
        for l in 0..lanes {
            traj[l * lane_len..l * lane_len + p.window.len()].copy_from_slice(&p.window);
            current.extend_from_slice(&p.current);
        }
        let h = e.ensemble.members[0].hidden_dim();
        Buffers {
            traj,
            lane_len,
            current,
            hidden: p.hiddens.clone(),
            new_hidden: vec![0.0; h],
            input: vec![0.0; s + a],
            policy_hidden: vec![0.0; e.policy.arch.hidden],
            action: vec![0.0; a],
            reference_action: vec![0.0; a],
            pred: vec![0.0; s],
            raw: vec![0.0; s],
        }
    }

    /// Policy action for `lane` at step `j`, into `self.action`.
    fn act(
        &mut self,
        e: &RolloutEngine<'_>,
        lane: usize,
        j: usize,
        theta: &[f64],
        reference: Option<&[f64]>,
        stats: &mut RolloutStats,
    ) {
        let arch = &e.policy.arch;
        let s = arch.state_dim;
        let off = lane * self.lane_len + j * s;
        let window = &self.traj[off..off + arch.input_dim()];
        arch.forward_into(theta, window, &mut self.policy_hidden, &mut self.action);
        if let Some(r) = reference {
            arch.forward_into(
                r,
                window,
                &mut self.policy_hidden,
                &mut self.reference_action,
            );
            let sq: f64 = self
                .action
                .iter()
                .zip(&self.reference_action)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            stats.deviation_sum += sq / self.action.len() as f64;
            stats.deviation_count += 1;
        }
    }

    /// Steps member `m` from the current state of `lane` with `self.action`,
    /// leaving the normalized prediction in `self.pred`, the raw one in
    /// `self.raw`, and returning its reward.
    fn predict(&mut self, model: &DynamicsModel, lane: usize, m: usize, j: usize) -> Result<f64> {
        let s = self.pred.len();
        let h = self.new_hidden.len();
        self.input[..s].copy_from_slice(&self.current[lane * s..(lane + 1) * s]);
        model
            .action_norm
            .normalize_into(&self.action, &mut self.input[s..]);
        let hidden = &mut self.hidden[m * h..(m + 1) * h];
        model
            .net
            .step_into(&self.input, hidden, &mut self.new_hidden, &mut self.pred);
        hidden.copy_from_slice(&self.new_hidden);
        model.state_norm.denormalize_into(&self.pred, &mut self.raw);
        if self.raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::RolloutNonFinite { member: m, step: j });
        }
        Ok(state_reward(&self.raw))
    }

    /// Appends the last prediction to `lane`'s trajectory.
    fn push(&mut self, e: &RolloutEngine<'_>, lane: usize, j: usize) {
        let s = self.pred.len();
        self.current[lane * s..(lane + 1) * s].copy_from_slice(&self.pred);
        let off = lane * self.lane_len + (e.cfg.history_len + 1 + j) * s;
        e.policy
            .state_norm
            .normalize_into(&self.raw, &mut self.traj[off..off + s]);
    }
}

/// Conservative rollout of `theta` from one start window, with its trace.
pub fn rollout_conservative(
    ensemble: &Ensemble,
    policy: &PolicyNet,
    theta: &[f64],
    start: &HistoryWindow,
    cfg: &RolloutConfig,
) -> Result<(f64, RolloutTrace)> {
    let engine = RolloutEngine::new(ensemble, policy, std::slice::from_ref(start), *cfg)?;
    let mut trace = RolloutTrace::default();
    let stats = engine.rollout(0, theta, None, Some(&mut trace))?;
    Ok((stats.ret, trace))
}

/// Plain rollout of `theta` through a single model: returns the discounted
/// return and the per-step rewards.
pub fn rollout_single(
    model: &DynamicsModel,
    policy: &PolicyNet,
    theta: &[f64],
    start: &HistoryWindow,
    cfg: &RolloutConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    policy.check_weights(theta)?;
    check_len("start window length", cfg.history_len + 1, start.len())?;
    let arch = &policy.arch;
    let s = model.state_dim();
    let mut hidden = warmup_hidden(model, start)?;
    let mut window: Vec<f64> = policy.state_norm.normalize(&start.states);
    let mut state = model.state_norm.normalize(start.current());
    let mut rewards = Vec::with_capacity(cfg.horizon);
    let (mut ret, mut discount) = (0.0, 1.0);
    for j in 0..cfg.horizon {
        let mut ph = vec![0.0; arch.hidden];
        let mut action = vec![0.0; arch.action_dim];
        arch.forward_into(theta, &window[j * s..], &mut ph, &mut action);
        let mut input = state.clone();
        input.extend(model.action_norm.normalize(&action));
        let mut next_hidden = vec![0.0; hidden.len()];
        let mut pred = vec![0.0; s];
        model
            .net
            .step_into(&input, &hidden, &mut next_hidden, &mut pred);
        let raw = model.state_norm.denormalize(&pred);
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::RolloutNonFinite { member: 0, step: j });
        }
        let r = state_reward(&raw);
        rewards.push(r);
        ret += discount * r;
        discount *= cfg.gamma;
        window.extend(policy.state_norm.normalize(&raw));
        state = pred;
        hidden = next_hidden;
    }
    Ok((ret, rewards))
}

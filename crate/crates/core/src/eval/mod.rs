//! Ground-truth evaluation and result aggregation.
//!
//! A policy is scored by running it on the simulator for a number of seeded
//! episodes. Every episode first takes `history_len` steps with the zero
//! action, so that the policy's first window consists of real observations,
//! and then `horizon` scored steps with the policy; the episode return is the
//! undiscounted sum of the scored rewards.

mod stats;
mod sweep;
mod table;

pub use stats::{mean, percentile, standard_error};
pub use sweep::{rank_plot_script, return_curve_script, sweep_d, sweep_rows, SweepCell, SweepRow};
pub use table::{average_rank, Cell, RankSummary, ScoreTable, TABLE1_CSV};

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Action, BaselinePolicy, EnvState, InitMode, MiniIbConfig, Observable};
use crate::error::{Error, Result};
use crate::nn::PolicyNet;
use crate::{jsonfile, rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub setpoint: f64,
    pub init: InitMode,
    pub env: MiniIbConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 100,
            horizon: 100,
            seed: 0,
            setpoint: 50.0,
            init: InitMode::Random,
            env: MiniIbConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub tenth_percentile: f64,
    pub standard_error: f64,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_returns(returns: Vec<f64>, horizon: usize, seed: u64) -> Result<Self> {
        Ok(EvalReport {
            mean: mean(&returns),
            tenth_percentile: percentile(&returns, 10.0)?,
            standard_error: standard_error(&returns),
            episodes: returns.len(),
            horizon,
            seed,
            returns,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        jsonfile::write(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        jsonfile::read(path)
    }

    /// `episode,return` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "episode,return")?;
        for (i, r) in self.returns.iter().enumerate() {
            writeln!(out, "{i},{r}")?;
        }
        Ok(())
    }
}

/// Runs `act` as a controller; it receives every observable of the episode so
/// far (oldest first) and returns the next action.
pub fn evaluate_controller<F>(cfg: &EvalConfig, history_len: usize, act: F) -> Result<EvalReport>
where
    F: Fn(&[Observable]) -> Result<Action> + Sync,
{
    if cfg.episodes == 0 {
        return Err(Error::InvalidParameter(
            "at least one evaluation episode is required".into(),
        ));
    }
    let returns = (0..cfg.episodes)
        .into_par_iter()
        .map(|e| {
            let seed = rng::derive(cfg.seed, rng::TAG_EVAL, e as u64, 0);
            let mut env = EnvState::reset(cfg.env, seed, cfg.setpoint, cfg.init)?;
            let mut seen = vec![*env.observable()];
            for _ in 0..history_len {
                env.step(Action::ZERO)?;
                seen.push(*env.observable());
            }
            let mut ret = 0.0;
            for _ in 0..cfg.horizon {
                let a = act(&seen)?;
                ret += env.step(a)?;
                seen.push(*env.observable());
            }
            Ok(ret)
        })
        .collect::<Result<Vec<f64>>>()?;
    EvalReport::from_returns(returns, cfg.horizon, cfg.seed)
}

/// Evaluates `π_θ` on the simulator.
pub fn evaluate_policy(net: &PolicyNet, theta: &[f64], cfg: &EvalConfig) -> Result<EvalReport> {
    net.check_weights(theta)?;
    let h = net.arch.history_len;
    evaluate_controller(cfg, h, |seen| {
        let window: Vec<f64> = seen[seen.len() - h - 1..]
            .iter()
            .flat_map(|o| o.to_array())
            .collect();
        Ok(Action::from_slice(&net.act(theta, &window)?))
    })
}

/// Evaluates a deterministic baseline with the same protocol.
pub fn evaluate_baseline(
    policy: BaselinePolicy,
    history_len: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_controller(cfg, history_len, |seen| policy.action(seen))
}

use serde::{Deserialize, Serialize};

use super::{
    epsilon_greedy, Action, BaselinePolicy, EnvState, InitMode, MiniIbConfig, ACTION_DIM, STATE_DIM,
};
use crate::data::{Dataset, Episode, GenerationRecord};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub policy: BaselinePolicy,
    pub epsilon: f64,
    pub n_transitions: usize,
    pub episode_length: usize,
    pub history_len: usize,
    pub seed: u64,
    pub setpoint: f64,
    pub init: InitMode,
    pub env: MiniIbConfig,
}

impl Default for GenerateConfig {
    /// 10k transitions of mediocre-0.2.
    fn default() -> Self {
        GenerateConfig::new(BaselinePolicy::Mediocre, 0.2, 10_000, 0)
    }
}

impl GenerateConfig {
    pub fn new(policy: BaselinePolicy, epsilon: f64, n_transitions: usize, seed: u64) -> Self {
        GenerateConfig {
            policy,
            epsilon,
            n_transitions,
            episode_length: 1000,
            history_len: 30,
            seed,
            setpoint: 50.0,
            init: InitMode::Random,
            env: MiniIbConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.episode_length < self.history_len + 2 {
            return Err(Error::InvalidParameter(format!(
                "episode length {} shorter than history length + 2 = {}",
                self.episode_length,
                self.history_len + 2
            )));
        }
        if self.n_transitions < self.episode_length {
            return Err(Error::InvalidParameter(format!(
                "{} transitions do not fill one episode of {}",
                self.n_transitions, self.episode_length
            )));
        }
        Ok(())
    }
}

/// Rolls out `policy` with ε-greedy exploration on MiniIB.
///
/// Produces `n_transitions / episode_length` episodes; a remainder is appended
/// to the last episode so that exactly `n_transitions` transitions exist.
/// Episode `e` uses environment seed `derive(seed, ENV, e)` and exploration
/// stream `(seed, EXPLORE, e)`. Recorded actions are the clipped actions that
/// were applied, rounded to `f32` before stepping so every stored transition
/// is exactly what the plant saw.
pub fn generate_dataset(cfg: &GenerateConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n_episodes = cfg.n_transitions / cfg.episode_length;
    let mut episodes = Vec::with_capacity(n_episodes);
    for e in 0..n_episodes {
        let len = if e + 1 == n_episodes {
            cfg.n_transitions - cfg.episode_length * (n_episodes - 1)
        } else {
            cfg.episode_length
        };
        let env_seed = rng::derive(cfg.seed, rng::TAG_ENV, e as u64, 0);
        let mut env = EnvState::reset(cfg.env, env_seed, cfg.setpoint, cfg.init)?;
        let mut explore = rng::stream(cfg.seed, rng::TAG_EXPLORE, e as u64, 0);
        let mut states = Vec::with_capacity((len + 1) * STATE_DIM);
        let mut actions = Vec::with_capacity(len * ACTION_DIM);
        for _ in 0..len {
            states.extend(env.observable().to_array().iter().map(|&x| x as f32));
            let base = cfg.policy.action(env.history())?;
            let a = epsilon_greedy(base, cfg.epsilon, &mut explore)?.clipped();
            let a32 = a.to_array().map(|x| x as f32);
            actions.extend_from_slice(&a32);
            env.step(Action::from_slice(&a32.map(f64::from)))?;
        }
        states.extend(env.observable().to_array().iter().map(|&x| x as f32));
        episodes.push(Episode { states, actions });
    }
    Dataset::new(
        STATE_DIM,
        ACTION_DIM,
        cfg.history_len,
        episodes,
        Some(GenerationRecord::from_config(cfg)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_episodes() {
        let mut cfg = GenerateConfig::new(BaselinePolicy::Mediocre, 0.2, 5000, 1);
        cfg.episode_length = 1000;
        let d = generate_dataset(&cfg).unwrap();
        assert_eq!(d.n_episodes(), 5);
        assert_eq!(d.n_transitions(), 5000);

        cfg.n_transitions = 2500;
        cfg.episode_length = 1000;
        let d = generate_dataset(&cfg).unwrap();
        assert_eq!(d.n_episodes(), 2);
        assert_eq!(d.episode_len(1), 1500);
        assert_eq!(d.n_transitions(), 2500);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = GenerateConfig {
            episode_length: 200,
            ..GenerateConfig::new(BaselinePolicy::Optimized, 0.4, 600, 5)
        };
        assert_eq!(
            generate_dataset(&cfg).unwrap(),
            generate_dataset(&cfg).unwrap()
        );
        let other = GenerateConfig {
            seed: 6,
            ..cfg.clone()
        };
        assert_ne!(
            generate_dataset(&cfg).unwrap(),
            generate_dataset(&other).unwrap()
        );
    }

    #[test]
    fn mediocre_replay_is_exact_without_noise_or_exploration() {
        let cfg = GenerateConfig {
            episode_length: 100,
            env: MiniIbConfig::noiseless(),
            ..GenerateConfig::new(BaselinePolicy::Mediocre, 0.0, 300, 2)
        };
        let d = generate_dataset(&cfg).unwrap();
        for e in 0..d.n_episodes() {
            for t in cfg.history_len..d.episode_len(e) {
                let s = d.state(e, t);
                let a = d.action(e, t);
                for k in 0..3 {
                    let expected = ((25.0 - s[k] as f64).clamp(-1.0, 1.0)) as f32;
                    assert_eq!(a[k], expected);
                }
            }
        }
    }

    #[test]
    fn stored_states_respect_bounds() {
        let cfg = GenerateConfig {
            episode_length: 100,
            ..GenerateConfig::new(BaselinePolicy::Bad, 0.6, 200, 3)
        };
        let d = generate_dataset(&cfg).unwrap();
        for e in 0..d.n_episodes() {
            for t in 0..=d.episode_len(e) {
                let s = d.state(e, t);
                assert!(s[4] >= 0.0 && s[5] >= 0.0);
                assert!((0.0..=100.0).contains(&s[0]));
            }
        }
    }

    #[test]
    fn validation() {
        let base = GenerateConfig::new(BaselinePolicy::Bad, 0.0, 1000, 0);
        assert!(generate_dataset(&GenerateConfig {
            epsilon: 1.5,
            ..base.clone()
        })
        .is_err());
        assert!(generate_dataset(&GenerateConfig {
            episode_length: 31,
            ..base.clone()
        })
        .is_err());
        assert!(generate_dataset(&GenerateConfig {
            n_transitions: 999,
            ..base
        })
        .is_err());
    }
}

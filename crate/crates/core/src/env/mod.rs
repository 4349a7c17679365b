//! MiniIB: a small surrogate plant exposing the Industrial Benchmark's
//! observable interface.
//!
//! Observables per step are the steerings velocity `v`, gain `g` and shift
//! `h` (all in `[0, 100]`), the setpoint `p`, fatigue `f` and consumption `c`.
//! Actions are proposed steering changes `(Δv, Δg, Δh) ∈ [-1, 1]³`.
//!
//! Dynamics, with `e_t = (v_t + g_t) / 200`:
//!
//! ```text
//! v' = clip(v + 10·Δv, 0, 100)                      (likewise g', h')
//! ema' = 0.9·ema + 0.1·e'
//! f' = max(0, 5·ema'·(1 + ξ)),        ξ ~ N(0, 0.1 + 0.2·h'/100)
//! c' = max(0, 0.5·|v_{t-4} - p| + 0.1·g_{t-4} + η),  η ~ N(0, 0.5)
//! r  = -c' - 3·f'
//! ```
//!
//! Consumption reacts to steerings with a delay of five steps: the new
//! consumption at step `t + 1` reads the steerings of step `t - 4`. All
//! constants live in [`MiniIbConfig`].

mod generate;
mod policies;

pub use generate::{generate_dataset, GenerateConfig};
pub use policies::{epsilon_greedy, BaselinePolicy};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

pub const STATE_DIM: usize = 6;
pub const ACTION_DIM: usize = 3;
/// Feature names in the order used by every flattened state vector.
pub const STATE_FIELDS: [&str; STATE_DIM] = ["v", "g", "h", "p", "f", "c"];
pub const FATIGUE: usize = 4;
pub const CONSUMPTION: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub v: f64,
    pub g: f64,
    pub h: f64,
    pub p: f64,
    pub f: f64,
    pub c: f64,
}

impl Observable {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.v, self.g, self.h, self.p, self.f, self.c]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Observable {
            v: x[0],
            g: x[1],
            h: x[2],
            p: x[3],
            f: x[4],
            c: x[5],
        }
    }

    /// `r = -c - 3f`.
    pub fn reward(&self) -> f64 {
        reward(self.c, self.f)
    }
}

pub fn reward(consumption: f64, fatigue: f64) -> f64 {
    -consumption - 3.0 * fatigue
}

/// Reward read from a flattened observable vector.
#[inline]
pub fn state_reward(state: &[f64]) -> f64 {
    reward(state[CONSUMPTION], state[FATIGUE])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dv: f64,
    pub dg: f64,
    pub dh: f64,
}

impl Action {
    pub const ZERO: Action = Action {
        dv: 0.0,
        dg: 0.0,
        dh: 0.0,
    };

    pub fn new(dv: f64, dg: f64, dh: f64) -> Self {
        Action { dv, dg, dh }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Action::new(a[0], a[1], a[2])
    }

    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        [self.dv, self.dg, self.dh]
    }

    pub fn clipped(&self) -> Self {
        Action::new(
            self.dv.clamp(-1.0, 1.0),
            self.dg.clamp(-1.0, 1.0),
            self.dh.clamp(-1.0, 1.0),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiniIbConfig {
    pub steering_step: f64,
    pub effort_decay: f64,
    pub fatigue_scale: f64,
    pub fatigue_noise_base: f64,
    pub fatigue_noise_shift: f64,
    pub consumption_offset_weight: f64,
    pub consumption_gain_weight: f64,
    pub consumption_noise: f64,
    pub delay: usize,
    pub noise: bool,
}

impl Default for MiniIbConfig {
    fn default() -> Self {
        MiniIbConfig {
            steering_step: 10.0,
            effort_decay: 0.9,
            fatigue_scale: 5.0,
            fatigue_noise_base: 0.1,
            fatigue_noise_shift: 0.2,
            consumption_offset_weight: 0.5,
            consumption_gain_weight: 0.1,
            consumption_noise: 0.5,
            delay: 5,
            noise: true,
        }
    }
}

impl MiniIbConfig {
    pub fn noiseless() -> Self {
        MiniIbConfig {
            noise: false,
            ..Self::default()
        }
    }

    fn effort(&self, v: f64, g: f64) -> f64 {
        (v + g) / 200.0
    }

    fn consumption_mean(&self, lagged: &Observable, setpoint: f64) -> f64 {
        self.consumption_offset_weight * (lagged.v - setpoint).abs()
            + self.consumption_gain_weight * lagged.g
    }
}

/// Initial steerings of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Fixed { v: f64, g: f64, h: f64 },
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    config: MiniIbConfig,
    observable: Observable,
    effort_ema: f64,
    /// Oldest first; the last entry is the current observable.
    history: Vec<Observable>,
    rng: ChaCha8Rng,
}

impl EnvState {
    /// Starts an episode. The history buffer is filled with copies of the
    /// initial observable, whose fatigue and consumption are the noise-free
    /// values of the formulas above.
    pub fn reset(config: MiniIbConfig, seed: u64, setpoint: f64, init: InitMode) -> Result<Self> {
        if !(0.0..=100.0).contains(&setpoint) {
            return Err(Error::InvalidParameter(format!(
                "setpoint {setpoint} outside [0, 100]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, g, h) = match init {
            InitMode::Fixed { v, g, h } => {
                if ![v, g, h].iter().all(|x| (0.0..=100.0).contains(x)) {
                    return Err(Error::InvalidParameter(
                        "initial steerings must lie in [0, 100]".into(),
                    ));
                }
                (v, g, h)
            }
            InitMode::Random => (
                100.0 * rng.random::<f64>(),
                100.0 * rng.random::<f64>(),
                100.0 * rng.random::<f64>(),
            ),
        };
        let effort_ema = config.effort(v, g);
        let mut observable = Observable {
            v,
            g,
            h,
            p: setpoint,
            f: config.fatigue_scale * effort_ema,
            c: 0.0,
        };
        observable.c = config.consumption_mean(&observable, setpoint);
        Ok(EnvState {
            config,
            observable,
            effort_ema,
            history: vec![observable; config.delay + 1],
            rng,
        })
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn effort_ema(&self) -> f64 {
        self.effort_ema
    }

    pub fn config(&self) -> &MiniIbConfig {
        &self.config
    }

    /// The last `delay + 1` observables, oldest first.
    pub fn history(&self) -> &[Observable] {
        &self.history
    }

    /// Applies `action` (clipped to `[-1, 1]³`) and returns the reward of the
    /// resulting observable.
    pub fn step(&mut self, action: Action) -> Result<f64> {
        check_finite("action", &action.to_array())?;
        let a = action.clipped();
        let cfg = self.config;
        let o = self.observable;
        let v = (o.v + cfg.steering_step * a.dv).clamp(0.0, 100.0);
        let g = (o.g + cfg.steering_step * a.dg).clamp(0.0, 100.0);
        let h = (o.h + cfg.steering_step * a.dh).clamp(0.0, 100.0);
        self.effort_ema =
            cfg.effort_decay * self.effort_ema + (1.0 - cfg.effort_decay) * cfg.effort(v, g);

        let (xi, eta) = if cfg.noise {
            let fatigue_sd = cfg.fatigue_noise_base + cfg.fatigue_noise_shift * h / 100.0;
            let xi = Normal::new(0.0, fatigue_sd)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(&mut self.rng);
            let eta = Normal::new(0.0, cfg.consumption_noise)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(&mut self.rng);
            (xi, eta)
        } else {
            (0.0, 0.0)
        };
        let f = (cfg.fatigue_scale * self.effort_ema * (1.0 + xi)).max(0.0);
        let lagged = self.history[self.history.len() - cfg.delay];
        let c = (cfg.consumption_mean(&lagged, o.p) + eta).max(0.0);

        self.observable = Observable {
            v,
            g,
            h,
            p: o.p,
            f,
            c,
        };
        self.history.remove(0);
        self.history.push(self.observable);
        Ok(self.observable.reward())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixed(v: f64, g: f64, h: f64) -> InitMode {
        InitMode::Fixed { v, g, h }
    }

    #[test]
    fn reset_evaluates_noise_free_formulas() {
        let s = EnvState::reset(MiniIbConfig::default(), 0, 50.0, fixed(50.0, 50.0, 50.0)).unwrap();
        let o = s.observable();
        assert_eq!((o.v, o.g, o.h, o.p), (50.0, 50.0, 50.0, 50.0));
        // effort 0.5 → f = 2.5; c = 0.5·|50 - 50| + 0.1·50 = 5
        assert_eq!(o.f, 2.5);
        assert_eq!(o.c, 5.0);
        assert_eq!(s.effort_ema(), 0.5);
        assert_eq!(s.history().len(), 6);
    }

    #[test]
    fn reset_is_deterministic_and_validates_setpoint() {
        let a = EnvState::reset(MiniIbConfig::default(), 3, 50.0, InitMode::Random).unwrap();
        let b = EnvState::reset(MiniIbConfig::default(), 3, 50.0, InitMode::Random).unwrap();
        let c = EnvState::reset(MiniIbConfig::default(), 4, 50.0, InitMode::Random).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.observable(), c.observable());
        let o = a.observable();
        assert!([o.v, o.g, o.h].iter().all(|x| (0.0..=100.0).contains(x)));
        assert!(EnvState::reset(MiniIbConfig::default(), 0, 100.5, InitMode::Random).is_err());
        assert!(EnvState::reset(MiniIbConfig::default(), 0, -1.0, InitMode::Random).is_err());
    }

    #[test]
    fn reward_identity() {
        assert_eq!(reward(10.0, 5.0), -25.0);
    }

    #[test]
    fn steering_clips_at_boundary() {
        let mut s =
            EnvState::reset(MiniIbConfig::default(), 0, 50.0, fixed(95.0, 50.0, 0.0)).unwrap();
        s.step(Action::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.observable().v, 100.0);
        s.step(Action::new(7.0, -3.0, -1.0)).unwrap();
        assert_eq!(s.observable().v, 100.0);
        assert_eq!(s.observable().g, 40.0);
        assert_eq!(s.observable().h, 0.0);
    }

    #[test]
    fn noiseless_fixed_point_step() {
        // v = g = p = 50, h = 0, ema at its fixed point 0.5:
        // f' = 5·0.5 = 2.5, c' = 0.5·0 + 0.1·50 = 5, r = -5 - 7.5 = -12.5
        let mut s =
            EnvState::reset(MiniIbConfig::noiseless(), 0, 50.0, fixed(50.0, 50.0, 0.0)).unwrap();
        let r = s.step(Action::ZERO).unwrap();
        assert_eq!(s.observable().f, 2.5);
        assert_eq!(s.observable().c, 5.0);
        assert_eq!(r, -12.5);
    }

    #[test]
    fn consumption_reacts_after_five_steps() {
        let run = |bump: bool| {
            let mut s =
                EnvState::reset(MiniIbConfig::noiseless(), 0, 50.0, fixed(30.0, 30.0, 30.0))
                    .unwrap();
            let mut cs = Vec::new();
            for t in 0..12 {
                let dv = if bump && t == 2 { 1.0 } else { 0.0 };
                s.step(Action::new(dv, 0.0, 0.0)).unwrap();
                cs.push(s.observable().c);
            }
            cs
        };
        let (base, bumped) = (run(false), run(true));
        // the bump lands in v at step 3 (the observable after the third action)
        let first = (0..12).find(|&i| base[i] != bumped[i]).unwrap();
        assert_eq!(first, 2 + 5);
    }

    #[test]
    fn noisy_steps_are_reproducible() {
        let run = || {
            let mut s =
                EnvState::reset(MiniIbConfig::default(), 9, 50.0, InitMode::Random).unwrap();
            (0..20)
                .map(|i| s.step(Action::new((i as f64).sin(), 0.3, -0.2)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_non_finite_action() {
        let mut s = EnvState::reset(MiniIbConfig::default(), 0, 50.0, InitMode::Random).unwrap();
        assert!(s.step(Action::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn steerings_stay_in_range(actions in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..60), seed in 0u64..1000) {
            let mut s = EnvState::reset(MiniIbConfig::default(), seed, 50.0, InitMode::Random).unwrap();
            for (a, b, c) in actions {
                let r = s.step(Action::new(a, b, c)).unwrap();
                let o = *s.observable();
                prop_assert!((0.0..=100.0).contains(&o.v) && (0.0..=100.0).contains(&o.g) && (0.0..=100.0).contains(&o.h));
                prop_assert!(o.f >= 0.0 && o.c >= 0.0);
                prop_assert_eq!(r, -o.c - 3.0 * o.f);
            }
        }
    }
}

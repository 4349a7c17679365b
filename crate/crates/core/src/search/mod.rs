//! Policy search in weight space.
//!
//! Candidate policies are flat weight vectors of the same network as the
//! behavior clone `ψ`. Fitness is the mean conservative ensemble return over a
//! fixed set of start windows (the same windows for every particle and every
//! iteration). A ring-topology particle swarm ([`optimize`]) maximizes it.
//!
//! Two modes are provided:
//!
//! * [`SearchMode::Constrained`] keeps every particle inside the box
//!   `|θ_i − ψ_i| ≤ d` by clipping after each move.
//! * [`SearchMode::Penalized`] is an ordinary unconstrained swarm started
//!   from freshly initialized networks ([`penalized_initial_swarm`]); it knows
//!   `ψ` only through the fitness, which subtracts `α` times the mean squared
//!   action difference between `π_θ` and `ψ` on the windows visited during the
//!   rollouts. `α` is set once from the initial swarm so that the penalty is
//!   worth half the mean absolute return.

mod constraint;
mod pso;

pub use constraint::{clip_to_box, ConstraintBox};
pub use pso::{
    optimize, optimize_from, pso_step, ring_neighbors, Particle, RandomFactors, SearchResult,
    SeededFactors, Swarm, SwarmConfig,
};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, HistoryWindow};
use crate::dynamics::{Ensemble, RolloutConfig, RolloutEngine};
use crate::error::{Error, Result};
use crate::nn::PolicyNet;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// Mean conservative return.
    Pure,
    /// Mean conservative return minus `alpha` times the mean action penalty.
    Penalized { alpha: f64 },
}

/// Return and action penalty of one weight vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessParts {
    pub mean_return: f64,
    /// Mean over visited windows of `mean_j (π_θ − ψ)_j²`.
    pub penalty: f64,
}

impl FitnessParts {
    pub fn penalized(&self, alpha: f64) -> f64 {
        self.mean_return - alpha * self.penalty
    }
}

/// Everything fitness depends on: models, start windows, reference policy and
/// mode.
pub struct FitnessSpec<'a> {
    engine: RolloutEngine<'a>,
    reference: &'a [f64],
    pub mode: FitnessMode,
}

impl<'a> FitnessSpec<'a> {
    pub fn new(
        ensemble: &'a Ensemble,
        net: &'a PolicyNet,
        reference: &'a [f64],
        starts: &[HistoryWindow],
        rollout: RolloutConfig,
        mode: FitnessMode,
    ) -> Result<Self> {
        net.check_weights(reference)?;
        Ok(FitnessSpec {
            engine: RolloutEngine::new(ensemble, net, starts, rollout)?,
            reference,
            mode,
        })
    }

    pub fn n_starts(&self) -> usize {
        self.engine.n_starts()
    }

    pub fn parts(&self, theta: &[f64]) -> Result<FitnessParts> {
        let (mean_return, penalty) = self.engine.mean_stats(theta, Some(self.reference))?;
        Ok(FitnessParts {
            mean_return,
            penalty,
        })
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        match self.mode {
            FitnessMode::Pure => self.engine.mean_return(theta),
            FitnessMode::Penalized { alpha } => Ok(self.parts(theta)?.penalized(alpha)),
        }
    }
}

pub fn evaluate_fitness(theta: &[f64], spec: &FitnessSpec<'_>) -> Result<f64> {
    spec.evaluate(theta)
}

/// `α` such that `α · mean penalty = 0.5 · mean |return|` over `population`
/// (zero when the mean penalty is zero).
pub fn calibrate_alpha<P: AsRef<[f64]> + Sync>(
    population: &[P],
    spec: &FitnessSpec<'_>,
) -> Result<f64> {
    if population.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot calibrate on an empty population".into(),
        ));
    }
    let parts = population
        .par_iter()
        .map(|p| spec.parts(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(alpha_from_parts(&parts))
}

pub(crate) fn alpha_from_parts(parts: &[FitnessParts]) -> f64 {
    let n = parts.len() as f64;
    let ret = parts.iter().map(|p| p.mean_return.abs()).sum::<f64>() / n;
    let pen = parts.iter().map(|p| p.penalty).sum::<f64>() / n;
    if pen == 0.0 {
        0.0
    } else {
        0.5 * ret / pen
    }
}

/// Draws `n` distinct window positions from `dataset` and returns the windows.
pub fn sample_starts(dataset: &Dataset, n: usize, seed: u64) -> Result<Vec<HistoryWindow>> {
    let positions: Vec<(usize, usize)> = dataset.window_positions().collect();
    if n == 0 || n > positions.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {n} start windows from {} available",
            positions.len()
        )));
    }
    let mut r = rng::stream(seed, rng::TAG_STARTS, 0, 0);
    sample(&mut r, positions.len(), n)
        .into_iter()
        .map(|i| {
            let (e, t) = positions[i];
            dataset.window(e, t)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    #[serde(alias = "wsbc")]
    Constrained,
    Penalized,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wsbc" | "constrained" => Ok(SearchMode::Constrained),
            "penalized" => Ok(SearchMode::Penalized),
            _ => Err(Error::InvalidParameter(format!(
                "unknown search mode {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Box radius `d`.
    pub d: f64,
    pub mode: SearchMode,
    pub n_starts: usize,
    pub swarm: SwarmConfig,
    pub rollout: RolloutConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            d: 0.1,
            mode: SearchMode::Constrained,
            n_starts: 20,
            swarm: SwarmConfig::default(),
            rollout: RolloutConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub theta_star: Vec<f64>,
    /// Fitness of `theta_star` under the search's own objective.
    pub best_fitness: f64,
    pub history: Vec<f64>,
    /// Calibrated `α` (penalized mode only).
    pub alpha: Option<f64>,
    /// Return and penalty of `theta_star`.
    pub parts: FitnessParts,
}

/// Initial swarm of penalized mode: particle `p` holds the network's default
/// random initialization drawn from stream `(seed, SWARM_INIT, p, 1)`; all
/// velocities are zero.
pub fn penalized_initial_swarm(net: &PolicyNet, cfg: &SwarmConfig) -> Result<Swarm> {
    cfg.validate()?;
    let positions = (0..cfg.n_particles)
        .map(|p| {
            net.random_weights(&mut rng::stream(cfg.seed, rng::TAG_SWARM_INIT, p as u64, 1))
                .0
        })
        .collect();
    Swarm::from_positions(positions)
}

/// Searches for the best policy near `ψ` (see the module docs for the two
/// modes). The start windows are drawn from `dataset` with the swarm seed.
/// `observer` sees the swarm and the movement box after every iteration.
pub fn wsbc_search(
    ensemble: &Ensemble,
    net: &PolicyNet,
    psi: &[f64],
    dataset: &Dataset,
    cfg: &SearchConfig,
    mut observer: impl FnMut(&Swarm, &ConstraintBox),
) -> Result<SearchOutcome> {
    if cfg.d.is_nan() || cfg.d <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "d must be positive, got {}",
            cfg.d
        )));
    }
    net.check_weights(psi)?;
    let starts = sample_starts(dataset, cfg.n_starts, cfg.swarm.seed)?;
    let mut spec = FitnessSpec::new(ensemble, net, psi, &starts, cfg.rollout, FitnessMode::Pure)?;
    let (initial, bx, alpha) = match cfg.mode {
        SearchMode::Constrained => {
            let bx = ConstraintBox::new(psi.to_vec(), cfg.d)?;
            (Swarm::init(&bx, &cfg.swarm)?, bx, None)
        }
        SearchMode::Penalized => {
            let initial = penalized_initial_swarm(net, &cfg.swarm)?;
            let positions: Vec<&[f64]> = initial.positions().collect();
            let alpha = calibrate_alpha(&positions, &spec)?;
            spec.mode = FitnessMode::Penalized { alpha };
            log::info!("penalized search: calibrated alpha = {alpha}");
            (
                initial,
                ConstraintBox::new(psi.to_vec(), f64::INFINITY)?,
                Some(alpha),
            )
        }
    };
    let res = optimize_from(
        initial,
        |theta| spec.evaluate(theta),
        &bx,
        &cfg.swarm,
        |s| {
            log::debug!(
                "iteration {}: best fitness {:.4}",
                s.iteration,
                s.particles[s.global_best()].best_fitness
            );
            observer(s, &bx)
        },
    )?;
    let parts = spec.parts(&res.best_position)?;
    Ok(SearchOutcome {
        theta_star: res.best_position,
        best_fitness: res.best_fitness,
        history: res.history,
        alpha,
        parts,
    })
}

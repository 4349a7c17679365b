use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConstraintBox;
use crate::error::{check_len, Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub n_particles: usize,
    pub neighborhood_size: usize,
    /// Inertia `w`.
    pub inertia: f64,
    /// Cognitive coefficient `c1`.
    pub cognitive: f64,
    /// Social coefficient `c2`.
    pub social: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Half-width of the initial sampling region when the box is unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_spread: Option<f64>,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            n_particles: 200,
            neighborhood_size: 30,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            iterations: 300,
            seed: 0,
            init_spread: None,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 || self.neighborhood_size == 0 {
            return Err(Error::InvalidParameter(
                "swarm and neighborhood sizes must be positive".into(),
            ));
        }
        if self.neighborhood_size > self.n_particles {
            return Err(Error::InvalidParameter(format!(
                "neighborhood size {} exceeds swarm size {}",
                self.neighborhood_size, self.n_particles
            )));
        }
        if ![self.inertia, self.cognitive, self.social]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::InvalidParameter(
                "PSO coefficients must be finite".into(),
            ));
        }
        if let Some(s) = self.init_spread {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(
                    "initial spread must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    /// `-∞` until the particle has been evaluated.
    pub best_fitness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    /// Number of moves made so far.
    pub iteration: usize,
}

impl Swarm {
    /// Particle 0 sits exactly on the anchor; the others are uniform in the
    /// box (or within `init_spread` of the anchor when the box is unbounded),
    /// with velocities uniform in `[-r/2, r/2]` where `r` is that half-width.
    pub fn init(bx: &ConstraintBox, cfg: &SwarmConfig) -> Result<Self> {
        cfg.validate()?;
        let spread = match cfg.init_spread {
            Some(s) => s.min(bx.radius()),
            None if bx.is_bounded() => bx.radius(),
            None => {
                return Err(Error::InvalidParameter(
                    "an unbounded box needs an explicit initial spread".into(),
                ))
            }
        };
        let region = if spread < bx.radius() {
            ConstraintBox::new(bx.anchor().to_vec(), spread)?
        } else {
            bx.clone()
        };
        let particles = (0..cfg.n_particles)
            .map(|p| {
                let mut r = rng::stream(cfg.seed, rng::TAG_SWARM_INIT, p as u64, 0);
                let position: Vec<f64> = if p == 0 {
                    region.anchor().to_vec()
                } else {
                    region
                        .lower()
                        .iter()
                        .zip(region.upper())
                        .map(|(&lo, &hi)| r.random_range(lo..=hi))
                        .collect()
                };
                let velocity = (0..bx.dim())
                    .map(|_| r.random_range(-spread / 2.0..=spread / 2.0))
                    .collect();
                Particle {
                    best_position: position.clone(),
                    position,
                    velocity,
                    best_fitness: f64::NEG_INFINITY,
                }
            })
            .collect();
        Ok(Swarm {
            particles,
            iteration: 0,
        })
    }

    /// A swarm at the given positions with zero velocities.
    pub fn from_positions(positions: Vec<Vec<f64>>) -> Result<Self> {
        let dim = positions.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "a swarm needs at least one non-empty position".into(),
            ));
        }
        let particles = positions
            .into_iter()
            .map(|position| {
                check_len("particle position", dim, position.len())?;
                Ok(Particle {
                    velocity: vec![0.0; dim],
                    best_position: position.clone(),
                    position,
                    best_fitness: f64::NEG_INFINITY,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Swarm {
            particles,
            iteration: 0,
        })
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.iter().map(|p| p.position.as_slice())
    }

    /// Index of the particle with the best personal best (first on ties).
    pub fn global_best(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.best_fitness > self.particles[best].best_fitness {
                best = i;
            }
        }
        best
    }

    /// Replaces personal bests that `fitnesses` strictly improve.
    pub fn update_bests(&mut self, fitnesses: &[f64]) -> Result<()> {
        check_len("fitness list", self.particles.len(), fitnesses.len())?;
        for (p, &f) in self.particles.iter_mut().zip(fitnesses) {
            if f > p.best_fitness {
                p.best_fitness = f;
                p.best_position.copy_from_slice(&p.position);
            }
        }
        Ok(())
    }
}

/// The `size` particles of the ring window around `index`, in circular order
/// starting from the leftmost: `(size - 1) / 2` on the left, `size / 2` on the
/// right, `index` itself included. For odd sizes the window is centered and
/// the neighbor relation is symmetric; even sizes lean one to the right.
pub fn ring_neighbors(index: usize, n_particles: usize, size: usize) -> Result<Vec<usize>> {
    if size == 0 || size > n_particles {
        return Err(Error::InvalidParameter(format!(
            "neighborhood size {size} must be in 1..={n_particles}"
        )));
    }
    if index >= n_particles {
        return Err(Error::InvalidParameter(format!(
            "particle {index} out of range"
        )));
    }
    let left = (size - 1) / 2;
    let start = index + n_particles - left;
    Ok((0..size).map(|k| (start + k) % n_particles).collect())
}

/// Source of the per-coordinate factors `r1`, `r2 ∈ [0, 1]` of the velocity
/// update.
pub trait RandomFactors {
    fn fill(&mut self, iteration: usize, particle: usize, r1: &mut [f64], r2: &mut [f64]);
}

/// Draws `r1` then `r2` from the stream of `(seed, iteration, particle)`.
#[derive(Clone, Copy, Debug)]
pub struct SeededFactors(pub u64);

impl RandomFactors for SeededFactors {
    fn fill(&mut self, iteration: usize, particle: usize, r1: &mut [f64], r2: &mut [f64]) {
        let mut r = rng::stream(
            self.0,
            rng::TAG_SWARM_STEP,
            iteration as u64,
            particle as u64,
        );
        r1.iter_mut().for_each(|x| *x = r.random());
        r2.iter_mut().for_each(|x| *x = r.random());
    }
}

/// One PSO iteration for maximization: updates personal bests with
/// `fitnesses` (the fitness of each current position), then moves every
/// particle
///
/// ```text
/// v ← w·v + c1·r1·(personal best − x) + c2·r2·(neighborhood best − x)
/// x ← clip(x + v)
/// ```
///
/// zeroing the velocity of every clipped coordinate. The neighborhood best is
/// the best personal best in the particle's ring window; ties go to the
/// first in the window's order.
pub fn pso_step(
    swarm: &mut Swarm,
    fitnesses: &[f64],
    bx: &ConstraintBox,
    cfg: &SwarmConfig,
    factors: &mut impl RandomFactors,
) -> Result<()> {
    cfg.validate()?;
    check_len("swarm size", cfg.n_particles, swarm.particles.len())?;
    swarm.update_bests(fitnesses)?;
    let n = swarm.particles.len();
    let leaders: Vec<usize> = (0..n)
        .map(|i| {
            let hood = ring_neighbors(i, n, cfg.neighborhood_size)?;
            let mut best = hood[0];
            for &j in &hood[1..] {
                if swarm.particles[j].best_fitness > swarm.particles[best].best_fitness {
                    best = j;
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let social: Vec<Vec<f64>> = leaders
        .iter()
        .map(|&l| swarm.particles[l].best_position.clone())
        .collect();
    let dim = bx.dim();
    let mut r1 = vec![0.0; dim];
    let mut r2 = vec![0.0; dim];
    for (i, p) in swarm.particles.iter_mut().enumerate() {
        check_len("particle position", dim, p.position.len())?;
        factors.fill(swarm.iteration, i, &mut r1, &mut r2);
        let g = &social[i];
        for k in 0..dim {
            let x = p.position[k];
            p.velocity[k] = cfg.inertia * p.velocity[k]
                + cfg.cognitive * r1[k] * (p.best_position[k] - x)
                + cfg.social * r2[k] * (g[k] - x);
            p.position[k] = x + p.velocity[k];
        }
        let Particle {
            position, velocity, ..
        } = p;
        bx.clip_in_place(position, |k| velocity[k] = 0.0);
    }
    swarm.iteration += 1;
    Ok(())
}

/// Result of [`optimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Global best fitness after evaluating the initial swarm and after each
    /// iteration (`iterations + 1` entries).
    pub history: Vec<f64>,
}

/// Maximizes `fitness` over the box with a ring-topology PSO.
///
/// The initial swarm is evaluated, then each of `cfg.iterations` iterations
/// moves the swarm and evaluates the new positions. Fitness evaluations run on
/// the rayon pool; results do not depend on the number of threads.
/// `observer` sees the swarm after every move.
pub fn optimize<F>(
    fitness: F,
    bx: &ConstraintBox,
    cfg: &SwarmConfig,
    observer: impl FnMut(&Swarm),
) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    optimize_from(Swarm::init(bx, cfg)?, fitness, bx, cfg, observer)
}

/// [`optimize`] starting from a given swarm.
pub fn optimize_from<F>(
    mut swarm: Swarm,
    fitness: F,
    bx: &ConstraintBox,
    cfg: &SwarmConfig,
    mut observer: impl FnMut(&Swarm),
) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let eval = |swarm: &Swarm| -> Result<Vec<f64>> {
        swarm
            .particles
            .par_iter()
            .map(|p| fitness(&p.position))
            .collect()
    };
    let mut factors = SeededFactors(cfg.seed);
    let mut fits = eval(&swarm)?;
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        pso_step(&mut swarm, &fits, bx, cfg, &mut factors)?;
        history.push(swarm.particles[swarm.global_best()].best_fitness);
        observer(&swarm);
        fits = eval(&swarm)?;
    }
    swarm.update_bests(&fits)?;
    let g = swarm.global_best();
    history.push(swarm.particles[g].best_fitness);
    Ok(SearchResult {
        best_position: swarm.particles[g].best_position.clone(),
        best_fitness: swarm.particles[g].best_fitness,
        history,
    })
}

//! Offline datasets and history windows.
//!
//! An episode of length `L` stores `L + 1` states and `L` actions; transition
//! `t` is `(s_t, a_t, s_{t+1})`. A [`HistoryWindow`] ending at step `t` holds
//! the states `s_{t-H}, …, s_t` (oldest first) and the actions
//! `a_{t-H}, …, a_{t-1}` between them, where `H` is the history length. The
//! first `H` steps of an episode never end a window: they only serve as
//! warm-up context. An episode therefore yields exactly `L - H` windows
//! (`t = H, …, L - 1`), each paired with the action `a_t` taken at its end.

mod format;

pub use format::{export_csv, load_dataset, save_dataset, sidecar_path};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::{BaselinePolicy, GenerateConfig, InitMode, MiniIbConfig};
use crate::error::{check_len, Error, Result};
use crate::rng;

/// How a dataset was produced; stored in the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub policy: BaselinePolicy,
    pub epsilon: f64,
    pub seed: u64,
    pub n_transitions: usize,
    pub episode_length: usize,
    pub setpoint: f64,
    pub init: InitMode,
    pub env: MiniIbConfig,
}

impl GenerationRecord {
    pub fn from_config(cfg: &GenerateConfig) -> Self {
        GenerationRecord {
            policy: cfg.policy,
            epsilon: cfg.epsilon,
            seed: cfg.seed,
            n_transitions: cfg.n_transitions,
            episode_length: cfg.episode_length,
            setpoint: cfg.setpoint,
            init: cfg.init,
            env: cfg.env,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `(len + 1) · state_dim` values, row-major.
    pub states: Vec<f32>,
    /// `len · action_dim` values, row-major.
    pub actions: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub state_dim: usize,
    pub action_dim: usize,
    pub history_len: usize,
    pub episodes: Vec<Episode>,
    pub metadata: Option<GenerationRecord>,
}

impl Dataset {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        history_len: usize,
        episodes: Vec<Episode>,
        metadata: Option<GenerationRecord>,
    ) -> Result<Self> {
        let d = Dataset {
            state_dim,
            action_dim,
            history_len,
            episodes,
            metadata,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::InvalidParameter(
                "state and action dimensions must be positive".into(),
            ));
        }
        for ep in &self.episodes {
            if ep.actions.len() % self.action_dim != 0 {
                return Err(Error::Dimension {
                    context: "episode actions",
                    expected: self.action_dim,
                    actual: ep.actions.len() % self.action_dim,
                });
            }
            let len = ep.actions.len() / self.action_dim;
            check_len(
                "episode states",
                (len + 1) * self.state_dim,
                ep.states.len(),
            )?;
            if len < self.history_len + 2 {
                return Err(Error::InvalidParameter(format!(
                    "episode of length {len} is shorter than history length + 2 = {}",
                    self.history_len + 2
                )));
            }
            if ep.states.iter().chain(&ep.actions).any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "dataset contains non-finite values".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn episode_len(&self, episode: usize) -> usize {
        self.episodes[episode].actions.len() / self.action_dim
    }

    pub fn n_transitions(&self) -> usize {
        (0..self.n_episodes()).map(|e| self.episode_len(e)).sum()
    }

    pub fn state(&self, episode: usize, t: usize) -> &[f32] {
        &self.episodes[episode].states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, episode: usize, t: usize) -> &[f32] {
        &self.episodes[episode].actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    /// Every `(episode, t)` that ends a window, in trajectory order.
    pub fn window_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_episodes())
            .flat_map(move |e| (self.history_len..self.episode_len(e)).map(move |t| (e, t)))
    }

    pub fn window_count(&self) -> usize {
        (0..self.n_episodes())
            .map(|e| self.episode_len(e) - self.history_len)
            .sum()
    }

    pub fn window(&self, episode: usize, t: usize) -> Result<HistoryWindow> {
        extract_window(self, episode, t, self.history_len)
    }

    /// All states as `f64` rows, for statistics.
    pub fn state_rows(&self) -> Vec<f64> {
        self.episodes
            .iter()
            .flat_map(|e| e.states.iter().map(|&x| x as f64))
            .collect()
    }

    pub fn action_rows(&self) -> Vec<f64> {
        self.episodes
            .iter()
            .flat_map(|e| e.actions.iter().map(|&x| x as f64))
            .collect()
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            history_len: self.history_len,
            episodes: indices.iter().map(|&i| self.episodes[i].clone()).collect(),
            metadata: self.metadata.clone(),
        }
    }
}

/// The last `history_len + 1` states up to step `t`, oldest first, and the
/// `history_len` actions between them.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryWindow {
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
}

impl HistoryWindow {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        states: Vec<f64>,
        actions: Vec<f64>,
    ) -> Result<Self> {
        if state_dim == 0 || states.len() % state_dim != 0 || states.is_empty() {
            return Err(Error::InvalidParameter(
                "window states do not form whole rows".into(),
            ));
        }
        let n = states.len() / state_dim;
        check_len("window actions", (n - 1) * action_dim, actions.len())?;
        Ok(HistoryWindow {
            state_dim,
            action_dim,
            states,
            actions,
        })
    }

    /// Number of states (`history_len + 1`).
    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn history_len(&self) -> usize {
        self.len() - 1
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// The most recent state.
    pub fn current(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

pub fn extract_window(
    dataset: &Dataset,
    episode: usize,
    t: usize,
    history_len: usize,
) -> Result<HistoryWindow> {
    if episode >= dataset.n_episodes() {
        return Err(Error::InvalidParameter(format!(
            "episode {episode} out of range"
        )));
    }
    if t < history_len {
        return Err(Error::WindowOutOfRange {
            t,
            history: history_len,
        });
    }
    if t >= dataset.episode_len(episode) {
        return Err(Error::InvalidParameter(format!(
            "step {t} has no action in episode {episode} of length {}",
            dataset.episode_len(episode)
        )));
    }
    let (sd, ad) = (dataset.state_dim, dataset.action_dim);
    let start = t - history_len;
    let ep = &dataset.episodes[episode];
    Ok(HistoryWindow {
        state_dim: sd,
        action_dim: ad,
        states: ep.states[start * sd..(t + 1) * sd]
            .iter()
            .map(|&x| x as f64)
            .collect(),
        actions: ep.actions[start * ad..t * ad]
            .iter()
            .map(|&x| x as f64)
            .collect(),
    })
}

/// Splits whole episodes into `(train, validation)`.
///
/// Episode indices are shuffled with the seeded stream and the first
/// `round(fraction · n)` (clamped to `1..n-1`) go to validation. Both parts
/// keep the original episode order.
pub fn split(dataset: &Dataset, validation_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {validation_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.n_episodes();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} episode(s)"
        )));
    }
    let n_val = ((validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::TAG_SPLIT, 0, 0));
    let mut val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&val)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Episodes whose state entries encode `(episode, t, feature)`.
    pub(crate) fn labelled(lens: &[usize], history_len: usize) -> Dataset {
        let episodes = lens
            .iter()
            .enumerate()
            .map(|(e, &len)| Episode {
                states: (0..=len)
                    .flat_map(|t| (0..2).map(move |k| (e * 10000 + t * 10 + k) as f32))
                    .collect(),
                actions: (0..len).map(|t| (e * 10000 + t) as f32).collect(),
            })
            .collect();
        Dataset::new(2, 1, history_len, episodes, None).unwrap()
    }

    #[test]
    fn window_layout_and_boundary() {
        let d = labelled(&[10, 12], 3);
        let w = d.window(1, 3).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w.state(0), &[10000.0, 10001.0]);
        assert_eq!(w.current(), &[10030.0, 10031.0]);
        assert_eq!(w.actions, vec![10000.0, 10001.0, 10002.0]);
        assert!(matches!(
            d.window(0, 2),
            Err(Error::WindowOutOfRange { t: 2, history: 3 })
        ));
        assert!(d.window(0, 10).is_err());
        assert_eq!(d.window(0, 5).unwrap(), d.window(0, 5).unwrap());
    }

    #[test]
    fn default_history_gives_186_inputs() {
        let ep = Episode {
            states: vec![0.0; 41 * 6],
            actions: vec![0.0; 40 * 3],
        };
        let d = Dataset::new(6, 3, 30, vec![ep], None).unwrap();
        assert_eq!(d.window(0, 30).unwrap().states.len(), 186);
    }

    #[test]
    fn window_count_per_episode() {
        let d = labelled(&[10, 12, 7], 3);
        assert_eq!(d.window_count(), 7 + 9 + 4);
        assert_eq!(d.window_positions().count(), d.window_count());
    }

    #[test]
    fn validation_rejects_short_episodes() {
        let ep = Episode {
            states: vec![0.0; 5 * 2],
            actions: vec![0.0; 4],
        };
        assert!(Dataset::new(2, 1, 3, vec![ep], None).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = labelled(&vec![6; 100], 2);
        let (tr, va) = split(&d, 0.1, 4).unwrap();
        assert_eq!((tr.n_episodes(), va.n_episodes()), (90, 10));
        let (tr2, va2) = split(&d, 0.1, 4).unwrap();
        assert_eq!((tr, va), (tr2, va2));
        assert!(split(&labelled(&[6], 2), 0.5, 0).is_err());
        assert!(split(&d, 0.0, 0).is_err());
        assert!(split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn split_of_three_episodes() {
        let d = labelled(&[6, 7, 8], 2);
        let (tr, va) = split(&d, 0.5, 11).unwrap();
        assert_eq!((tr.n_episodes(), va.n_episodes()), (1, 2));
        // recompute the assignment with the same seeded shuffle
        let mut order = vec![0usize, 1, 2];
        order.shuffle(&mut rng::stream(11, rng::TAG_SPLIT, 0, 0));
        let mut val = order[..2].to_vec();
        val.sort_unstable();
        let val_lens: Vec<usize> = (0..2).map(|e| va.episode_len(e)).collect();
        assert_eq!(val_lens, val.iter().map(|&i| 6 + i).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn windows_never_cross_episodes(lens in prop::collection::vec(5usize..30, 1..6), hist in 0usize..4) {
            let d = labelled(&lens, hist);
            for (e, t) in d.window_positions() {
                let w = d.window(e, t).unwrap();
                for i in 0..w.len() {
                    let label = w.state(i)[0] as usize;
                    prop_assert_eq!(label / 10000, e);
                    prop_assert_eq!((label % 10000) / 10, t - hist + i);
                }
            }
        }

        #[test]
        fn split_partitions_episodes(n in 2usize..40, frac in 0.05f64..0.95, seed in 0u64..100) {
            let d = labelled(&vec![5; n], 1);
            let (tr, va) = split(&d, frac, seed).unwrap();
            prop_assert_eq!(tr.n_episodes() + va.n_episodes(), n);
            let mut ids: Vec<usize> = tr.episodes.iter().chain(&va.episodes).map(|e| e.states[0] as usize / 10000).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
        }
    }
}

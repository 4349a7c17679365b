use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, Observable};
use crate::error::{Error, Result};

/// The three deterministic data-collection controllers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselinePolicy {
    Bad,
    Mediocre,
    Optimized,
}

impl BaselinePolicy {
    pub const ALL: [BaselinePolicy; 3] = [
        BaselinePolicy::Bad,
        BaselinePolicy::Mediocre,
        BaselinePolicy::Optimized,
    ];

    /// Number of past observables (including the current one) the policy reads.
    pub fn history_needed(&self) -> usize {
        match self {
            BaselinePolicy::Bad | BaselinePolicy::Mediocre => 1,
            BaselinePolicy::Optimized => 6,
        }
    }

    /// Unclipped action for `history` (oldest first, last = current step).
    pub fn raw_action(&self, history: &[Observable]) -> Result<[f64; 3]> {
        let needed = self.history_needed();
        if history.len() < needed {
            return Err(Error::InsufficientHistory {
                needed,
                available: history.len(),
            });
        }
        let n = history.len() - 1;
        let now = &history[n];
        Ok(match self {
            BaselinePolicy::Bad => [100.0 - now.v, 100.0 - now.g, 100.0 - now.h],
            BaselinePolicy::Mediocre => [25.0 - now.v, 25.0 - now.g, 25.0 - now.h],
            BaselinePolicy::Optimized => {
                let lag = |k: usize| &history[n - k];
                [
                    -lag(5).v - 0.91,
                    2.0 * lag(3).f - now.p + 1.43,
                    -3.48 * lag(3).h - lag(4).h + 2.0 * now.p + 0.81,
                ]
            }
        })
    }

    /// Action clipped to `[-1, 1]³`.
    pub fn action(&self, history: &[Observable]) -> Result<Action> {
        let [a, b, c] = self.raw_action(history)?;
        Ok(Action::new(a, b, c).clipped())
    }
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselinePolicy::Bad => "bad",
            BaselinePolicy::Mediocre => "mediocre",
            BaselinePolicy::Optimized => "optimized",
        })
    }
}

impl FromStr for BaselinePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bad" => Ok(BaselinePolicy::Bad),
            "mediocre" | "med" => Ok(BaselinePolicy::Mediocre),
            "optimized" | "opt" => Ok(BaselinePolicy::Optimized),
            _ => Err(Error::InvalidParameter(format!(
                "unknown baseline policy {s:?}"
            ))),
        }
    }
}

/// With probability `epsilon` replaces `base` by a uniform draw from
/// `[-1, 1]³` (all three components re-drawn jointly).
///
/// Consumes one uniform draw for the coin and, when exploring, three more.
pub fn epsilon_greedy<R: Rng>(base: Action, epsilon: f64, rng: &mut R) -> Result<Action> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    let coin: f64 = rng.random();
    if coin < epsilon {
        let mut u = || 2.0 * rng.random::<f64>() - 1.0;
        Ok(Action::new(u(), u(), u()))
    } else {
        Ok(base)
    }
}

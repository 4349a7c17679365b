use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_uniform, Normalizer};
use crate::data::HistoryWindow;
use crate::error::{check_finite, check_len, Result};
use crate::linalg;

/// Shape of the policy network: `(history_len + 1)` stacked observable states
/// in, one ReLU hidden layer, a tanh-squashed action out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub history_len: usize,
    pub state_dim: usize,
    pub hidden: usize,
    pub action_dim: usize,
}

impl PolicyArch {
    pub const DEFAULT_HIDDEN: usize = 20;

    pub fn new(history_len: usize, state_dim: usize, action_dim: usize) -> Self {
        PolicyArch {
            history_len,
            state_dim,
            hidden: Self::DEFAULT_HIDDEN,
            action_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        (self.history_len + 1) * self.state_dim
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input_dim()
            + self.hidden
            + self.action_dim * self.hidden
            + self.action_dim
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (w1, rest) = theta.split_at(self.hidden * self.input_dim());
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.action_dim * self.hidden);
        (w1, b1, w2, b2)
    }

    /// Forward pass on an already normalized, flattened window. `hidden` is
    /// scratch of length `self.hidden`.
    #[inline]
    pub fn forward_into(
        &self,
        theta: &[f64],
        input: &[f64],
        hidden: &mut [f64],
        action: &mut [f64],
    ) {
        let (w1, b1, w2, b2) = self.split(theta);
        linalg::affine(w1, b1, input, hidden);
        for h in hidden.iter_mut() {
            *h = h.max(0.0);
        }
        linalg::affine(w2, b2, hidden, action);
        for a in action.iter_mut() {
            *a = a.tanh();
        }
    }

    /// Adds the gradient of `mean_i (π(input)_i - target_i)² · weight` to
    /// `grad` and returns the unweighted sum of squared errors.
    pub(crate) fn accumulate_mse_gradient(
        &self,
        theta: &[f64],
        input: &[f64],
        target: &[f64],
        weight: f64,
        scratch: &mut PolicyScratch,
        grad: &mut [f64],
    ) -> f64 {
        let (w1, b1, w2, b2) = self.split(theta);
        let PolicyScratch {
            hidden,
            action,
            d_out,
            d_hidden,
        } = scratch;
        linalg::affine(w1, b1, input, hidden);
        hidden.iter_mut().for_each(|h| *h = h.max(0.0));
        linalg::affine(w2, b2, hidden, action);
        let mut sq = 0.0;
        for ((d, a), t) in d_out.iter_mut().zip(action.iter_mut()).zip(target) {
            *a = a.tanh();
            let e = *a - t;
            sq += e * e;
            *d = 2.0 * e * weight / self.action_dim as f64 * (1.0 - *a * *a);
        }
        let n1 = self.hidden * self.input_dim();
        let (g_w1, rest) = grad.split_at_mut(n1);
        let (g_b1, rest) = rest.split_at_mut(self.hidden);
        let (g_w2, g_b2) = rest.split_at_mut(self.action_dim * self.hidden);
        linalg::add_outer(g_w2, d_out, hidden);
        g_b2.iter_mut().zip(d_out.iter()).for_each(|(g, d)| *g += d);
        d_hidden.iter_mut().for_each(|d| *d = 0.0);
        linalg::add_transposed(w2, d_out, d_hidden);
        for (d, h) in d_hidden.iter_mut().zip(hidden.iter()) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        linalg::add_outer(g_w1, d_hidden, input);
        g_b1.iter_mut()
            .zip(d_hidden.iter())
            .for_each(|(g, d)| *g += d);
        sq
    }
}

pub(crate) struct PolicyScratch {
    hidden: Vec<f64>,
    action: Vec<f64>,
    d_out: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl PolicyScratch {
    pub(crate) fn new(arch: &PolicyArch) -> Self {
        PolicyScratch {
            hidden: vec![0.0; arch.hidden],
            action: vec![0.0; arch.action_dim],
            d_out: vec![0.0; arch.action_dim],
            d_hidden: vec![0.0; arch.hidden],
        }
    }
}

/// Flat policy parameter vector in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyWeights(pub Vec<f64>);

impl PolicyWeights {
    pub fn zeros(arch: &PolicyArch) -> Self {
        PolicyWeights(vec![0.0; arch.param_count()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A policy architecture together with the fixed standardization applied to
/// every state in its input window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub arch: PolicyArch,
    pub state_norm: Normalizer,
}

impl PolicyNet {
    pub fn new(arch: PolicyArch, state_norm: Normalizer) -> Result<Self> {
        check_len("policy state normalizer", arch.state_dim, state_norm.dim())?;
        state_norm.validate()?;
        Ok(PolicyNet { arch, state_norm })
    }

    pub fn random_weights<R: Rng>(&self, rng: &mut R) -> PolicyWeights {
        let a = &self.arch;
        let mut w = PolicyWeights::zeros(a);
        let n1 = a.hidden * a.input_dim();
        init_uniform(rng, &mut w.0[..n1], a.input_dim());
        let o2 = n1 + a.hidden;
        init_uniform(rng, &mut w.0[o2..o2 + a.action_dim * a.hidden], a.hidden);
        w
    }

    pub fn check_weights(&self, theta: &[f64]) -> Result<()> {
        check_len("policy weights", self.arch.param_count(), theta.len())?;
        check_finite("policy weights", theta)
    }

    /// Evaluates the policy on raw (unnormalized) stacked states.
    pub fn act(&self, theta: &[f64], raw_states: &[f64]) -> Result<Vec<f64>> {
        self.check_weights(theta)?;
        check_len("policy window", self.arch.input_dim(), raw_states.len())?;
        check_finite("policy window", raw_states)?;
        let input = self.state_norm.normalize(raw_states);
        let mut hidden = vec![0.0; self.arch.hidden];
        let mut action = vec![0.0; self.arch.action_dim];
        self.arch
            .forward_into(theta, &input, &mut hidden, &mut action);
        Ok(action)
    }
}

/// `a_t = π_θ(s_t, …, s_{t-H_p})` for a dataset or environment window.
pub fn policy_forward(
    net: &PolicyNet,
    theta: &PolicyWeights,
    window: &HistoryWindow,
) -> Result<Vec<f64>> {
    check_len("window state dim", net.arch.state_dim, window.state_dim)?;
    check_len("window length", net.arch.history_len + 1, window.len())?;
    net.act(&theta.0, &window.states)
}

//! Overshooting loss and its gradient by backpropagation through time.
//!
//! All quantities are in the model's normalized space. A segment holds
//! `T + 1` states and `T` actions with `T = warmup + horizon`; the model input
//! at step `t` is `[ŝ_t, a_t]` (state features first). For `t ≤ warmup` the
//! input state is the recorded one; afterwards it is the model's own previous
//! prediction. Only the `horizon` predictions made from step `warmup` onward
//! are scored:
//!
//! ```text
//! loss = 1 / (horizon · S) · Σ_{t = warmup}^{warmup + horizon - 1} ‖y_t - s_{t+1}‖²
//! ```

use super::RecurrentNet;
use crate::linalg;

/// Reusable buffers for [`overshoot`].
#[derive(Default)]
pub struct OvershootScratch {
    hiddens: Vec<f64>,
    inputs: Vec<f64>,
    preds: Vec<f64>,
    dh: Vec<f64>,
    dh_next: Vec<f64>,
    dz: Vec<f64>,
    dy: Vec<f64>,
    dstate_next: Vec<f64>,
}

impl OvershootScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Model input `[ŝ_t, a_t]` consumed at step `t` during the last call.
    pub fn input(&self, t: usize, input_dim: usize) -> &[f64] {
        &self.inputs[t * input_dim..(t + 1) * input_dim]
    }

    /// Prediction `y_t` made at step `t` during the last call.
    pub fn prediction(&self, t: usize, state_dim: usize) -> &[f64] {
        &self.preds[t * state_dim..(t + 1) * state_dim]
    }
}

/// Evaluates the overshooting loss on one normalized segment and, if `grad`
/// is given, adds `weight · ∂loss/∂params` to it in canonical order.
///
/// The caller guarantees `states.len() ≥ (warmup + horizon + 1) · S` and
/// `actions.len() ≥ (warmup + horizon) · A`.
pub fn overshoot(
    net: &RecurrentNet,
    states: &[f64],
    actions: &[f64],
    warmup: usize,
    horizon: usize,
    grad: Option<(&mut [f64], f64)>,
    scratch: &mut OvershootScratch,
) -> f64 {
    let s_dim = net.output_dim();
    let i_dim = net.input_dim();
    let a_dim = i_dim - s_dim;
    let h_dim = net.hidden_dim();
    let steps = warmup + horizon;

    scratch.hiddens.clear();
    scratch.hiddens.resize((steps + 1) * h_dim, 0.0);
    scratch.inputs.clear();
    scratch.inputs.resize(steps * i_dim, 0.0);
    scratch.preds.clear();
    scratch.preds.resize(steps * s_dim, 0.0);

    let norm = 1.0 / (horizon * s_dim) as f64;
    let mut loss = 0.0;
    for t in 0..steps {
        let x = &mut scratch.inputs[t * i_dim..(t + 1) * i_dim];
        if t <= warmup {
            x[..s_dim].copy_from_slice(&states[t * s_dim..(t + 1) * s_dim]);
        } else {
            x[..s_dim].copy_from_slice(&scratch.preds[(t - 1) * s_dim..t * s_dim]);
        }
        x[s_dim..].copy_from_slice(&actions[t * a_dim..(t + 1) * a_dim]);
        let (prev, next) = scratch.hiddens.split_at_mut((t + 1) * h_dim);
        let h_prev = &prev[t * h_dim..];
        let h_new = &mut next[..h_dim];
        let y = &mut scratch.preds[t * s_dim..(t + 1) * s_dim];
        net.step_into(
            &scratch.inputs[t * i_dim..(t + 1) * i_dim],
            h_prev,
            h_new,
            y,
        );
        if t >= warmup {
            let target = &states[(t + 1) * s_dim..(t + 2) * s_dim];
            loss += y
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    loss *= norm;

    let Some((grad, weight)) = grad else {
        return loss;
    };
    debug_assert_eq!(grad.len(), net.param_count());
    let (g_win, rest) = grad.split_at_mut(h_dim * i_dim);
    let (g_wrec, rest) = rest.split_at_mut(h_dim * h_dim);
    let (g_b, rest) = rest.split_at_mut(h_dim);
    let (g_wh, g_bh) = rest.split_at_mut(s_dim * h_dim);

    let OvershootScratch {
        hiddens,
        inputs,
        preds,
        dh,
        dh_next,
        dz,
        dy,
        dstate_next,
    } = scratch;
    dh.clear();
    dh.resize(h_dim, 0.0);
    dh_next.clear();
    dh_next.resize(h_dim, 0.0);
    dz.clear();
    dz.resize(h_dim, 0.0);
    dy.clear();
    dy.resize(s_dim, 0.0);
    dstate_next.clear();
    dstate_next.resize(s_dim, 0.0);

    let w_in = &net.cell.input_weights;
    let w_rec = &net.cell.recurrent_weights;
    let w_head = &net.head.weights;
    let scale = 2.0 * norm * weight;

    for t in (0..steps).rev() {
        let h_t = &hiddens[(t + 1) * h_dim..(t + 2) * h_dim];
        let h_prev = &hiddens[t * h_dim..(t + 1) * h_dim];
        let x_t = &inputs[t * i_dim..(t + 1) * i_dim];

        let mut any_dy = false;
        if t >= warmup {
            let y = &preds[t * s_dim..(t + 1) * s_dim];
            let target = &states[(t + 1) * s_dim..(t + 2) * s_dim];
            for i in 0..s_dim {
                dy[i] = scale * (y[i] - target[i]);
                if t + 1 < steps {
                    dy[i] += dstate_next[i];
                }
            }
            any_dy = true;
        }
        dh.copy_from_slice(dh_next);
        if any_dy {
            linalg::add_outer(g_wh, dy, h_t);
            g_bh.iter_mut().zip(dy.iter()).for_each(|(g, d)| *g += d);
            linalg::add_transposed(w_head, dy, dh);
        }
        for j in 0..h_dim {
            dz[j] = dh[j] * (1.0 - h_t[j] * h_t[j]);
        }
        linalg::add_outer(g_win, dz, x_t);
        linalg::add_outer(g_wrec, dz, h_prev);
        g_b.iter_mut().zip(dz.iter()).for_each(|(g, d)| *g += d);

        dh_next.iter_mut().for_each(|d| *d = 0.0);
        linalg::add_transposed(w_rec, dz, dh_next);

        // The state part of x_t is the previous prediction only past warm-up.
        dstate_next.iter_mut().for_each(|d| *d = 0.0);
        if t > warmup {
            for (row, &dzj) in w_in.chunks_exact(i_dim).zip(dz.iter()) {
                for i in 0..s_dim {
                    dstate_next[i] += row[i] * dzj;
                }
            }
        }
    }
    loss
}

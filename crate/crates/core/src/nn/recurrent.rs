use rand::Rng;

use super::{init_uniform, DenseParams};
use crate::error::{check_finite, check_len, Result};
use crate::linalg;

/// Parameters of a tanh recurrent cell:
/// `h' = tanh(W_in · x + W_rec · h + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub input_weights: Vec<f64>,
    pub recurrent_weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl RecurrentParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        RecurrentParams {
            input_dim,
            hidden_dim,
            input_weights: vec![0.0; hidden_dim * input_dim],
            recurrent_weights: vec![0.0; hidden_dim * hidden_dim],
            bias: vec![0.0; hidden_dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len(
            "recurrent input weights",
            self.hidden_dim * self.input_dim,
            self.input_weights.len(),
        )?;
        check_len(
            "recurrent weights",
            self.hidden_dim * self.hidden_dim,
            self.recurrent_weights.len(),
        )?;
        check_len("recurrent bias", self.hidden_dim, self.bias.len())?;
        check_finite("recurrent input weights", &self.input_weights)?;
        check_finite("recurrent weights", &self.recurrent_weights)?;
        check_finite("recurrent bias", &self.bias)
    }

    pub fn param_count(&self) -> usize {
        self.input_weights.len() + self.recurrent_weights.len() + self.bias.len()
    }
}

/// One step of the recurrent cell followed by the linear head.
///
/// Returns `(prediction, new_hidden)`.
pub fn recurrent_step(
    params: &RecurrentParams,
    head: &DenseParams,
    input: &[f64],
    hidden: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("recurrent step input", params.input_dim, input.len())?;
    check_len("recurrent step hidden", params.hidden_dim, hidden.len())?;
    check_len("head input", params.hidden_dim, head.inputs)?;
    check_finite("recurrent step input", input)?;
    check_finite("recurrent step hidden", hidden)?;
    let mut new_hidden = vec![0.0; params.hidden_dim];
    let mut prediction = vec![0.0; head.outputs];
    cell_forward(params, input, hidden, &mut new_hidden);
    head.forward_into(&new_hidden, &mut prediction);
    Ok((prediction, new_hidden))
}

#[inline]
pub(crate) fn cell_forward(
    params: &RecurrentParams,
    input: &[f64],
    hidden: &[f64],
    out: &mut [f64],
) {
    let ni = params.input_dim;
    let nh = params.hidden_dim;
    for j in 0..nh {
        let z = linalg::dot(&params.input_weights[j * ni..(j + 1) * ni], input)
            + linalg::dot(&params.recurrent_weights[j * nh..(j + 1) * nh], hidden)
            + params.bias[j];
        out[j] = z.tanh();
    }
}

/// Recurrent cell plus linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentNet {
    pub cell: RecurrentParams,
    pub head: DenseParams,
}

impl RecurrentNet {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        RecurrentNet {
            cell: RecurrentParams::zeros(input_dim, hidden_dim),
            head: DenseParams::zeros(output_dim, hidden_dim),
        }
    }

    pub fn random<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim);
        init_uniform(rng, &mut net.cell.input_weights, input_dim);
        init_uniform(rng, &mut net.cell.recurrent_weights, hidden_dim);
        init_uniform(rng, &mut net.head.weights, hidden_dim);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.head.outputs
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        self.head.validate()?;
        check_len("head input", self.cell.hidden_dim, self.head.inputs)
    }

    pub fn param_count(&self) -> usize {
        self.cell.param_count() + self.head.param_count()
    }

    /// Parameters in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.cell.input_weights);
        out.extend_from_slice(&self.cell.recurrent_weights);
        out.extend_from_slice(&self.cell.bias);
        out.extend_from_slice(&self.head.weights);
        out.extend_from_slice(&self.head.bias);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("recurrent net parameters", self.param_count(), flat.len())?;
        let mut rest = flat;
        for dst in [
            &mut self.cell.input_weights,
            &mut self.cell.recurrent_weights,
            &mut self.cell.bias,
            &mut self.head.weights,
            &mut self.head.bias,
        ] {
            let (a, b) = rest.split_at(dst.len());
            dst.copy_from_slice(a);
            rest = b;
        }
        Ok(())
    }

    pub fn from_flat(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        flat: &[f64],
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim);
        net.set_flat(flat)?;
        Ok(net)
    }

    /// Unchecked step used on hot paths.
    #[inline]
    pub(crate) fn step_into(
        &self,
        input: &[f64],
        hidden: &[f64],
        new_hidden: &mut [f64],
        prediction: &mut [f64],
    ) {
        cell_forward(&self.cell, input, hidden, new_hidden);
        self.head.forward_into(new_hidden, prediction);
    }
}

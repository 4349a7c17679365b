use crate::error::{check_finite, check_len, Result};
use crate::linalg;

/// Affine layer `y = W x + b` with `W` stored row-major (`out × in`).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        DenseParams {
            outputs,
            inputs,
            weights: vec![0.0; outputs * inputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn new(outputs: usize, inputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let p = DenseParams {
            outputs,
            inputs,
            weights,
            bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_len(
            "dense weights",
            self.outputs * self.inputs,
            self.weights.len(),
        )?;
        check_len("dense bias", self.outputs, self.bias.len())?;
        check_finite("dense weights", &self.weights)?;
        check_finite("dense bias", &self.bias)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        linalg::affine(&self.weights, &self.bias, x, out);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", self.inputs, x.len())?;
        check_finite("dense input", x)?;
        let mut out = vec![0.0; self.outputs];
        self.forward_into(x, &mut out);
        Ok(out)
    }
}

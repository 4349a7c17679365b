use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Per-feature affine standardization `(x - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Z-score statistics over `rows`, each of length `dim`. Features with a
    /// standard deviation below 1e-8 (constant columns) get scale 1.
    pub fn fit<'a, I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        for row in rows.clone() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity(dim);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n as f64).sqrt();
                if sd < 1e-8 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Normalizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_len("normalizer scale", self.mean.len(), self.scale.len())?;
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(crate::Error::InvalidParameter(
                "normalizer scales must be finite and strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Normalizes `x` (a concatenation of whole feature vectors) into `out`.
    #[inline]
    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (xs, os) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for i in 0..d {
                os[i] = (xs[i] - self.mean[i]) / self.scale[i];
            }
        }
    }

    #[inline]
    pub fn denormalize_into(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (zs, os) in z.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for i in 0..d {
                os[i] = zs[i] * self.scale[i] + self.mean[i];
            }
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.denormalize_into(z, &mut out);
        out
    }
}

use crate::error::{check_finite, check_len, Error, Result};

/// Axis-aligned box of radius `d` around an anchor `ψ`: the admissible set
/// `{θ : |θ_i − ψ_i| ≤ d for every i}`.
///
/// Membership is decided on the computed distance `|θ_i − ψ_i|` in `f64`.
/// Because `ψ_i ± d` is itself rounded, the per-coordinate bounds are
/// tightened at construction so that every value between them passes the
/// membership test; clipping to them therefore never produces a violation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBox {
    anchor: Vec<f64>,
    radius: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ConstraintBox {
    /// `radius` must be positive; `f64::INFINITY` gives an unconstrained box.
    pub fn new(anchor: Vec<f64>, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "box radius must be positive, got {radius}"
            )));
        }
        check_finite("box anchor", &anchor)?;
        let lower = anchor.iter().map(|&a| lower_bound(a, radius)).collect();
        let upper = anchor.iter().map(|&a| upper_bound(a, radius)).collect();
        Ok(ConstraintBox {
            anchor,
            radius,
            lower,
            upper,
        })
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.radius.is_finite()
    }

    /// `max_i |θ_i − ψ_i|`.
    pub fn distance(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.anchor)
            .map(|(t, a)| (t - a).abs())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && self.first_violation(theta).is_none()
    }

    /// Index and distance of the first coordinate outside the box.
    pub fn first_violation(&self, theta: &[f64]) -> Option<(usize, f64)> {
        theta
            .iter()
            .zip(&self.anchor)
            .map(|(t, a)| (t - a).abs())
            .enumerate()
            .find(|(_, dist)| !(*dist <= self.radius))
    }

    /// Errors with [`Error::ConstraintViolated`] unless `theta` is inside.
    pub fn verify(&self, theta: &[f64]) -> Result<()> {
        check_len("constrained vector", self.dim(), theta.len())?;
        match self.first_violation(theta) {
            None => Ok(()),
            Some((index, distance)) => Err(Error::ConstraintViolated {
                index,
                distance,
                radius: self.radius,
            }),
        }
    }

    /// Clamps every coordinate into the box in place and calls `on_clip(i)`
    /// for each coordinate that moved.
    pub fn clip_in_place(&self, theta: &mut [f64], mut on_clip: impl FnMut(usize)) {
        for (i, x) in theta.iter_mut().enumerate() {
            if *x < self.lower[i] {
                *x = self.lower[i];
                on_clip(i);
            } else if *x > self.upper[i] {
                *x = self.upper[i];
                on_clip(i);
            }
        }
    }

    /// Rounds `theta` to `f32` precision, stepping any coordinate that would
    /// leave the box one `f32` ulp at a time back toward the anchor. The
    /// result is inside whenever the anchor is `f32`-representable.
    pub fn quantize_f32(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.anchor)
            .map(|(&t, &a)| {
                let mut q = t as f32;
                loop {
                    let dist = (q as f64 - a).abs();
                    if dist <= self.radius {
                        break;
                    }
                    let next = if q as f64 > a {
                        q.next_down()
                    } else {
                        q.next_up()
                    };
                    if (next as f64 - a).abs() >= dist {
                        break;
                    }
                    q = next;
                }
                q as f64
            })
            .collect()
    }
}

fn lower_bound(a: f64, d: f64) -> f64 {
    if d.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let mut lo = a - d;
    while !((lo - a).abs() <= d) {
        lo = lo.next_up();
    }
    lo
}

fn upper_bound(a: f64, d: f64) -> f64 {
    if d.is_infinite() {
        return f64::INFINITY;
    }
    let mut hi = a + d;
    while !((hi - a).abs() <= d) {
        hi = hi.next_down();
    }
    hi
}

/// Returns `theta` with each coordinate clamped to `[ψ_i − d, ψ_i + d]`.
pub fn clip_to_box(theta: &[f64], bx: &ConstraintBox) -> Result<Vec<f64>> {
    check_len("clipped vector", bx.dim(), theta.len())?;
    let mut out = theta.to_vec();
    bx.clip_in_place(&mut out, |_| {});
    Ok(out)
}

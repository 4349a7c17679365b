//! Minimal neural-network kernel.
//!
//! Two architectures are supported, each with a fixed canonical parameter
//! order so that flat weight vectors can be compared index by index, clipped
//! into boxes and written to disk:
//!
//! - [`RecurrentNet`]: a single tanh recurrent cell followed by a linear head,
//!   used as the transition model. Order: input weights (row-major), recurrent
//!   weights (row-major), recurrent bias, head weights (row-major), head bias.
//! - [`PolicyArch`]: one ReLU hidden layer and a tanh-squashed output layer.
//!   Order: hidden weights (row-major), hidden bias, output weights
//!   (row-major), output bias.

mod adam;
pub mod bptt;
mod dense;
mod norm;
mod policy;
mod recurrent;
pub mod weights;

pub use adam::{adam_step, AdamState};
pub use dense::DenseParams;
pub use norm::Normalizer;
pub(crate) use policy::PolicyScratch;
pub use policy::{policy_forward, PolicyArch, PolicyNet, PolicyWeights};
pub use recurrent::{recurrent_step, RecurrentNet, RecurrentParams};

use rand::Rng;

/// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn init_uniform<R: Rng>(rng: &mut R, out: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for w in out {
        *w = (rng.random::<f64>() * 2.0 - 1.0) * bound;
    }
}

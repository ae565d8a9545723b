//! Differentiable building blocks with hand-written reverse passes.
//!
//! Every layer exposes a forward function that returns its output together
//! with a trace of the intermediate values, and a backward function that
//! consumes that trace, accumulates parameter gradients into a zero-initialised
//! tensor set of the same shape, and returns gradients for its inputs.

mod activation;
mod attention;
mod dense;
mod dropout;
pub mod gradcheck;
mod pool;
mod recurrent;

pub use activation::Activation;
pub use attention::{attention_pool, AttentionParams, AttentionTrace};
pub use dense::{dense_forward, dense_sigmoid};
pub use dropout::{dropout, Mode};
pub use pool::{global_max_pool, max_pool_backward, max_pool_time, max_pool_with_argmax};
pub use recurrent::{
    bidirectional, recurrent_forward, BiRecurrent, BiTrace, CellKind, CellTrace, Direction,
    RecurrentCell,
};

use crate::tensor::Tensor2;

/// A set of trainable tensors with a stable order.
pub trait Parameterized {
    fn tensors(&self) -> Vec<&Tensor2>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor2>;

    /// A structurally identical copy with every entry zero; used as a
    /// gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

//! Minimal dense-tensor layer library: exact forward/backward passes for the
//! layers the detection network needs, an Adam optimizer, and a
//! finite-difference gradient checker. All math is 64-bit; gradients are
//! hand-derived per layer (no taping).

pub mod adam;
pub mod batchnorm;
pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{bn_backward, bn_forward_infer, bn_forward_train, BnCache, RunningStats};
pub use gradcheck::{central_diff_grad, compare_grads, GradCheckReport};
pub use loss::softmax_cross_entropy;
pub use ops::*;
pub use tensor::Tensor;

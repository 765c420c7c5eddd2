//! Deterministic dense-math kernels, gradient checking, RNG and the optimizer.

mod adam;
mod gradcheck;
mod kernels;
pub mod rng;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use kernels::{
    cross_entropy, layer_norm, layer_norm_backward, layer_norm_forward, masked_softmax,
    masked_softmax_backward, matmul, matmul_backward, scatter_add, softmax, LayerNormCache,
};
pub(crate) use kernels::{axpy, dot, gemm_a_bt_acc, gemm_acc, gemm_at_b_acc, norm};
pub use tensor::Tensor;

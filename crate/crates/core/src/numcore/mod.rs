//! Dense linear algebra, activations, loss, Adam, seeded RNG streams and the
//! finite-difference gradient oracle.

mod gradcheck;
mod ops;
mod param;
mod rng;
mod tensor;

pub use gradcheck::{
    check_params, finite_diff_check, finite_diff_check_with, numeric_gradient, numeric_gradient_with, relative_error, FdScheme,
    ParamCheck, Stencil, DEFAULT_FD_STEP,
};
pub use ops::{cross_entropy, relu, sigmoid, sigmoid_scalar, softmax, softmax_backward, tanh_act, tanh_scalar};
pub use param::{adam_step, AdamConfig, ParamKind, ParamTensor};
pub use rng::{Rng, RNG_ALGORITHM};
pub use tensor::{affine, Matrix, Vector};

pub(crate) use tensor::{add_into, axpy, dot};

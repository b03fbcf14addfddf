//! Layer-level forward and backward mathematics.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod local;
pub mod pool;
pub mod saaf;

pub use activation::{activation_backward, activation_eval, softplus, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{
    batchnorm_apply, batchnorm_backward, batchnorm_infer, batchnorm_train, BatchNormState,
    BatchStats, NormMode,
};
pub use conv::{conv1d_adjoint, conv1d_backward, conv1d_forward, ConvKernel};
pub use dense::{dense_forward, Dense, LocalDense};
pub use gradcheck::{GradcheckConfig, GradcheckReport};
pub use local::{local_conv1d_backward, local_conv1d_forward, LocalKernel};
pub use pool::{maxpool_forward, unpool, PoolIndices};
pub use saaf::{fit_saaf, saaf_eval, saaf_smoothness_penalty, Breakpoints, Saaf, SaafParams};

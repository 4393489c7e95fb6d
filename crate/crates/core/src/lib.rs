//! Prototype-based neural-network layers.
//!
//! LVQ classification heads (GLVQ, RSLVQ) over Euclidean, Omega and
//! projection dissimilarities; kernel-prototype convolutions producing
//! dissimilarity stacks with soft and hard assignments; and the training
//! toolkit around them (initialization, neural-gas cooperation, Adam,
//! finite-difference gradient checks).
//!
//! All tensors are dense `f64` arrays. Images are `[rows, cols, channels]`
//! in row-major order with the channel index fastest; filter banks are
//! `[k_rows, k_cols, channels, n_filters]`.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dissimilarity;
pub mod error;
pub mod lvq;
pub mod network;
pub mod proto_conv;
pub mod tensor;
pub mod train;

pub use dissimilarity::{
    euclidean_sq, nonlinear_projection_sq, omega_sq, projection_sq, response_backward, response_batch,
    response_efficient, response_naive, Activation, Dissimilarity, PreparedPrototypes, PrototypeSet,
    ResponseGrads,
};
pub use error::{Error, Result};
pub use lvq::{
    apply_reject, calibrate_nball_radii, classify, glvq_backward, glvq_loss, rslvq_backward, rslvq_loss,
    rslvq_log_prob, rslvq_probs, voronoi_assign, wta, ClassificationDecision, Prediction, RejectPolicy,
};
pub use network::{ActivationKind, ActivationLayer, Layer, LossKind, LvqHead, Network};
pub use proto_conv::{
    hard_assign, hard_assign_backward, nball_score, proto_conv, proto_conv_backward, soft_assign_sigmoid,
    soft_assign_softmax, DissimilarityStack, HardMode, KernelPrototypeBank, StackKind,
};
pub use tensor::{conv2d, extract_windows, squared_window_norms, ConvGeometry, Padding, Tensor, WindowMatrix};

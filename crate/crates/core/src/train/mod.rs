//! Initialization, neural-gas cooperation, regularization, optimization and
//! the finite-difference gradient oracle.

mod gradcheck;
mod init;
mod neural_gas;
mod optim;

pub use gradcheck::{gradcheck, gradcheck_coords, numeric_gradient, relative_error, GradcheckReport, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use init::{init_from_samples, init_kmeans, kmeans, quantization_error, KMeans};
pub use neural_gas::{neural_gas_rank_weights, NeighborhoodSchedule};
pub use optim::{Adam, AdamConfig, DebiasedAverage};

use crate::error::{Error, Result};

/// `strength · Σ r_k²` and its gradient. Squared radii are non-negative, so
/// the l1 norm is their plain sum and the gradient is `strength` everywhere.
pub fn l1_bias_penalty(radii_sq: &[f64], strength: f64) -> Result<(f64, Vec<f64>)> {
    if !(strength >= 0.0) {
        return Err(Error::Argument(format!("penalty strength must be non-negative, got {strength}")));
    }
    if radii_sq.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Argument("squared radii must be non-negative".into()));
    }
    Ok((strength * radii_sq.iter().sum::<f64>(), vec![strength; radii_sq.len()]))
}

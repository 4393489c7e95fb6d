use crate::error::{Error, Result};

/// `exp(-rank_k / λ)` where `rank_k` is the 0-based position of `d_k` in
/// ascending order, ties broken by index.
pub fn neural_gas_rank_weights(d: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("neighborhood width must be positive, got {lambda}")));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut w = vec![0.0; d.len()];
    for (rank, &k) in order.iter().enumerate() {
        w[k] = (-(rank as f64) / lambda).exp();
    }
    Ok(w)
}

/// Neighborhood width annealed geometrically per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodSchedule {
    pub lambda: f64,
    pub decay: f64,
}

impl NeighborhoodSchedule {
    pub fn new(lambda: f64, decay: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("λ must be positive, got {lambda}")));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!("λ decay must lie in (0, 1], got {decay}")));
        }
        Ok(Self { lambda, decay })
    }

    /// Width used during `epoch` (0-based). Never reaches zero: it is floored
    /// at the smallest positive double.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        (self.lambda * self.decay.powi(epoch.min(i32::MAX as usize) as i32)).max(f64::MIN_POSITIVE)
    }
}

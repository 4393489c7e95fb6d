use crate::error::{shape_err, Error, Result};

/// Exponential moving average with zero de-biasing.
///
/// After `t` updates the estimate is `m_t / (1 - β^t)`, where
/// `m_t = β m_{t-1} + (1 - β) v_t` and `m_0 = 0`. It is kept in the
/// equivalent incremental form `e_t = e_{t-1} + (1-β)/(1-β^t) · (v_t - e_{t-1})`,
/// whose first step has coefficient exactly 1, so the first estimate is the
/// first observation bit for bit and a constant stream never drifts.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedAverage {
    beta: f64,
    beta_pow: f64,
    t: u64,
    estimate: Vec<f64>,
}

impl DebiasedAverage {
    pub fn new(beta: f64, len: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Argument(format!("β must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            beta,
            beta_pow: 1.0,
            t: 0,
            estimate: vec![0.0; len],
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Current de-biased estimate (all zeros before the first update).
    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    /// The raw, biased average `m_t`.
    pub fn biased(&self) -> Vec<f64> {
        self.estimate.iter().map(|e| e * (1.0 - self.beta_pow)).collect()
    }

    pub fn update(&mut self, value: &[f64]) -> Result<&[f64]> {
        if value.len() != self.estimate.len() {
            return Err(shape_err!(
                "value has {} entries, the average tracks {}",
                value.len(),
                self.estimate.len()
            ));
        }
        self.update_with(|i| value[i]);
        Ok(&self.estimate)
    }

    fn update_with(&mut self, value: impl Fn(usize) -> f64) {
        self.t += 1;
        self.beta_pow *= self.beta;
        let rate = (1.0 - self.beta) / (1.0 - self.beta_pow);
        for (i, e) in self.estimate.iter_mut().enumerate() {
            *e += rate * (value(i) - *e);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    first: DebiasedAverage,
    second: DebiasedAverage,
    non_negative: bool,
}

/// Adaptive-moment optimizer over a fixed list of parameter slices.
///
/// Slots flagged non-negative (squared radii) are clamped at zero after
/// every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    slots: Vec<Slot>,
}

impl Adam {
    /// `layout` holds `(length, non_negative)` per parameter slice.
    pub fn new(config: AdamConfig, layout: &[(usize, bool)]) -> Result<Self> {
        config.validate()?;
        let slots = layout
            .iter()
            .map(|&(len, non_negative)| {
                Ok(Slot {
                    first: DebiasedAverage::new(config.beta1, len)?,
                    second: DebiasedAverage::new(config.beta2, len)?,
                    non_negative,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, slots })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.slots.first().map_or(0, |s| s.first.steps())
    }

    /// `p ← p - η m̂ / (√v̂ + ε)` for every slot.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(shape_err!(
                "optimizer tracks {} slots, got {} parameters and {} gradients",
                self.slots.len(),
                params.len(),
                grads.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let len = self.slots[i].first.estimate().len();
            if p.len() != len || g.len() != len {
                return Err(shape_err!(
                    "slot {i}: {} parameters and {} gradients, expected {len}",
                    p.len(),
                    g.len()
                ));
            }
        }
        let AdamConfig {
            learning_rate,
            epsilon,
            ..
        } = self.config;
        for ((slot, p), g) in self.slots.iter_mut().zip(params.iter_mut()).zip(grads) {
            slot.first.update_with(|i| g[i]);
            slot.second.update_with(|i| g[i] * g[i]);
            for ((v, m), s) in p
                .iter_mut()
                .zip(slot.first.estimate())
                .zip(slot.second.estimate())
            {
                *v -= learning_rate * m / (s.sqrt() + epsilon);
                if slot.non_negative && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(())
    }
}

//! Prototype classification: winner-takes-all, class mapping, the GLVQ and
//! RSLVQ losses with their gradients, and reject options.

use crate::dissimilarity::{Dissimilarity, PreparedPrototypes, PrototypeSet};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Index of the smallest value; ties go to the lowest index.
pub fn wta(d: &[f64]) -> Result<usize> {
    let mut best = *d
        .first()
        .ok_or_else(|| Error::Argument("winner-takes-all over an empty vector".into()))?;
    let mut idx = 0;
    for (k, &v) in d.iter().enumerate().skip(1) {
        if v < best {
            best = v;
            idx = k;
        }
    }
    Ok(idx)
}

fn check_labels(d: &[f64], labels: &[usize]) -> Result<()> {
    if d.len() != labels.len() {
        return Err(shape_err!(
            "{} distances for {} prototype labels",
            d.len(),
            labels.len()
        ));
    }
    Ok(())
}

/// Class of the winning prototype.
pub fn classify(d: &[f64], labels: &[usize]) -> Result<usize> {
    check_labels(d, labels)?;
    Ok(labels[wta(d)?])
}

/// Winning prototype for every row of a `batch x n` matrix.
pub fn voronoi_assign(xs: &Tensor, protos: &PrototypeSet, spec: &Dissimilarity) -> Result<Vec<usize>> {
    if xs.rank() != 2 {
        return Err(shape_err!("batch must be a matrix, got {:?}", xs.shape()));
    }
    let prepared = PreparedPrototypes::new(protos, spec, xs.cols())?;
    (0..xs.rows())
        .map(|i| wta(&prepared.response(xs.row(i))?))
        .collect()
}

/// The closest correct and closest incorrect prototype, `(k⁺, k⁻)`.
fn glvq_winners(d: &[f64], labels: &[usize], true_class: usize) -> Result<(usize, usize)> {
    check_labels(d, labels)?;
    let mut plus: Option<usize> = None;
    let mut minus: Option<usize> = None;
    for (k, (&dk, &c)) in d.iter().zip(labels).enumerate() {
        let slot = if c == true_class { &mut plus } else { &mut minus };
        if slot.is_none_or(|j| dk < d[j]) {
            *slot = Some(k);
        }
    }
    match (plus, minus) {
        (Some(p), Some(m)) => Ok((p, m)),
        (None, _) => Err(Error::Config(format!(
            "no prototype carries the true class {true_class}"
        ))),
        (_, None) => Err(Error::Config(
            "GLVQ needs at least one prototype of another class".into(),
        )),
    }
}

/// `(d⁺ - d⁻) / (d⁺ + d⁻)`, in `[-1, 1]`; defined as 0 when both are 0.
pub fn glvq_loss(d: &[f64], labels: &[usize], true_class: usize) -> Result<f64> {
    let (p, m) = glvq_winners(d, labels, true_class)?;
    let (dp, dm) = (d[p], d[m]);
    let sum = dp + dm;
    Ok(if sum == 0.0 { 0.0 } else { (dp - dm) / sum })
}

/// Gradient of `upstream * glvq_loss` with respect to the distances. Only the
/// two active components are non-zero.
pub fn glvq_backward(d: &[f64], labels: &[usize], true_class: usize, upstream: f64) -> Result<Vec<f64>> {
    let (p, m) = glvq_winners(d, labels, true_class)?;
    let mut grad = vec![0.0; d.len()];
    let (dp, dm) = (d[p], d[m]);
    let sum = dp + dm;
    if sum != 0.0 {
        let s2 = sum * sum;
        grad[p] = upstream * 2.0 * dm / s2;
        grad[m] = -upstream * 2.0 * dp / s2;
    }
    Ok(grad)
}

/// `softmax(-d)` over prototypes, stabilized by the maximum of `-d`.
pub fn prototype_softmax(d: &[f64]) -> Result<Vec<f64>> {
    let min = d
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::Argument("softmax over an empty vector".into()))?;
    let e: Vec<f64> = d.iter().map(|&v| (min - v).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

fn n_classes_of(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Class probabilities: the softmax mass of every prototype summed per class.
pub fn rslvq_probs(d: &[f64], labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(d, labels)?;
    let q = prototype_softmax(d)?;
    let mut p = vec![0.0; n_classes_of(labels)];
    for (qk, &c) in q.iter().zip(labels) {
        p[c] += qk;
    }
    Ok(p)
}

/// `log p̂_c` computed as a difference of log-sum-exps so that it stays
/// finite even when the probability underflows.
pub fn rslvq_log_prob(d: &[f64], labels: &[usize], true_class: usize) -> Result<f64> {
    check_labels(d, labels)?;
    if !labels.contains(&true_class) {
        return Err(Error::Config(format!(
            "no prototype carries the true class {true_class}"
        )));
    }
    let lse = |it: &mut dyn Iterator<Item = f64>| -> f64 {
        let v: Vec<f64> = it.collect();
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + v.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    };
    let all = lse(&mut d.iter().map(|v| -v));
    let class = lse(
        &mut d
            .iter()
            .zip(labels)
            .filter(|(_, &c)| c == true_class)
            .map(|(v, _)| -v),
    );
    Ok(class - all)
}

/// Negative log-likelihood `-log p̂_c`, with the probability clamped at
/// [`PROB_FLOOR`].
pub fn rslvq_loss(d: &[f64], labels: &[usize], true_class: usize) -> Result<f64> {
    let log_p = rslvq_log_prob(d, labels, true_class)?;
    Ok(-log_p.max(PROB_FLOOR.ln()))
}

/// Gradient of `upstream * rslvq_loss` with respect to the distances:
/// `q_k [c_k = c] / p̂_c - q_k`, where `q = softmax(-d)`.
///
/// The clamp only bounds the reported loss; the gradient is the one of the
/// unclamped log-likelihood so hard negatives still receive a signal.
pub fn rslvq_backward(d: &[f64], labels: &[usize], true_class: usize, upstream: f64) -> Result<Vec<f64>> {
    let log_p = rslvq_log_prob(d, labels, true_class)?;
    let q = prototype_softmax(d)?;
    // q_k / p̂_c for in-class prototypes, evaluated in log space.
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let log_z = (d.iter().map(|v| (min - v).exp()).sum::<f64>()).ln() - min;
    Ok(d.iter()
        .zip(labels)
        .zip(&q)
        .map(|((&dk, &c), &qk)| {
            let within = if c == true_class {
                (-dk - log_z - log_p).exp()
            } else {
                0.0
            };
            upstream * (within - qk)
        })
        .collect())
}

/// A predicted class or a rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Reject,
}

impl Prediction {
    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(c) => Some(c),
            Prediction::Reject => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDecision {
    pub winner_index: usize,
    pub predicted: Prediction,
    pub distances: Vec<f64>,
    pub probabilities: Option<Vec<f64>>,
}

impl ClassificationDecision {
    /// WTA decision from a response vector, optionally with RSLVQ probabilities.
    pub fn from_distances(d: Vec<f64>, labels: &[usize], with_probabilities: bool) -> Result<Self> {
        check_labels(&d, labels)?;
        let winner_index = wta(&d)?;
        let probabilities = if with_probabilities {
            Some(rslvq_probs(&d, labels)?)
        } else {
            None
        };
        Ok(Self {
            winner_index,
            predicted: Prediction::Class(labels[winner_index]),
            distances: d,
            probabilities,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum RejectPolicy {
    #[default]
    None,
    /// Reject when the input lies outside every prototype's ball, i.e.
    /// `d_k > r_k²` for all `k`. Radii are given squared.
    NBall { radii_sq: Vec<f64> },
    /// Chow's rule: reject when the top class probability is below `1 - λ_r/λ_e`.
    CostRatio { lambda_e: f64, lambda_r: f64 },
}

impl RejectPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            RejectPolicy::None => Ok(()),
            RejectPolicy::NBall { radii_sq } => {
                if radii_sq.iter().any(|r| r.is_nan() || *r < 0.0) {
                    return Err(Error::Config("n-ball radii must be non-negative".into()));
                }
                Ok(())
            }
            RejectPolicy::CostRatio { lambda_e, lambda_r } => {
                if !(*lambda_r > 0.0 && lambda_r < lambda_e) {
                    return Err(Error::Config(format!(
                        "reject costs need 0 < λ_r < λ_e, got λ_r={lambda_r}, λ_e={lambda_e}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Whether the policy needs class probabilities.
    pub fn needs_probabilities(&self) -> bool {
        matches!(self, RejectPolicy::CostRatio { .. })
    }
}

pub fn apply_reject(mut decision: ClassificationDecision, policy: &RejectPolicy) -> Result<ClassificationDecision> {
    policy.validate()?;
    let reject = match policy {
        RejectPolicy::None => false,
        RejectPolicy::NBall { radii_sq } => {
            if radii_sq.len() != decision.distances.len() {
                return Err(Error::Config(format!(
                    "{} radii for {} prototypes",
                    radii_sq.len(),
                    decision.distances.len()
                )));
            }
            decision.distances.iter().zip(radii_sq).all(|(d, r)| d > r)
        }
        RejectPolicy::CostRatio { lambda_e, lambda_r } => {
            let probs = decision.probabilities.as_ref().ok_or_else(|| {
                Error::Config("cost-ratio reject needs class probabilities".into())
            })?;
            let top = probs.iter().copied().fold(0.0, f64::max);
            top < 1.0 - lambda_r / lambda_e
        }
    };
    if reject {
        decision.predicted = Prediction::Reject;
    }
    Ok(decision)
}

/// Per-prototype squared radii at the given quantile (nearest-rank) of the
/// winner distances of correctly labelled points it wins. Prototypes that
/// win no such point get radius 0.
pub fn calibrate_nball_radii(
    responses: &[Vec<f64>],
    targets: &[usize],
    labels: &[usize],
    quantile: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Argument(format!("quantile {quantile} outside [0, 1]")));
    }
    if responses.len() != targets.len() {
        return Err(shape_err!(
            "{} responses for {} targets",
            responses.len(),
            targets.len()
        ));
    }
    let mut per_proto: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (d, &t) in responses.iter().zip(targets) {
        check_labels(d, labels)?;
        let k = wta(d)?;
        if labels[k] == t {
            per_proto[k].push(d[k]);
        }
    }
    Ok(per_proto
        .into_iter()
        .map(|mut v| {
            if v.is_empty() {
                return 0.0;
            }
            v.sort_by(f64::total_cmp);
            let rank = ((quantile * v.len() as f64).ceil() as usize).clamp(1, v.len());
            v[rank - 1]
        })
        .collect())
}

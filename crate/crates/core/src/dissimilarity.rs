//! Dissimilarity measures and the prototype response vector.
//!
//! Four measures are supported, all squared Euclidean distances after an
//! optional input transform:
//!
//! | kind                     | value                          | prototype space |
//! |--------------------------|--------------------------------|-----------------|
//! | `Euclidean`              | `‖x - w‖²`                     | input (`n`)     |
//! | `Omega`                  | `‖Ω(x - w)‖²`                  | input (`n`)     |
//! | `Projection`             | `‖Ωx - w‖²`                    | projected (`m`) |
//! | `NonlinearProjection`    | `‖φ(Ωx - b) - w‖²`             | projected (`m`) |
//!
//! The response vector can be computed naively, one prototype at a time over
//! materialized difference vectors, or through the dot-product identity
//! `d = -2 W z + (‖z‖² + ‖w_k‖²)_k`, which only needs the single scalar `‖z‖²`
//! per input and cached prototype norms.

use std::borrow::Cow;
use std::sync::OnceLock;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{dot, dot2, matmul_nt, squared_norm, two_sum, Tensor};

/// Component-wise activation used by the nonlinear projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Identity => t,
            Activation::Relu => t.max(0.0),
            Activation::Sigmoid => sigmoid(t),
        }
    }

    /// Derivative at `t`. The ReLU derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(t);
                s * (1.0 - s)
            }
        }
    }
}

/// Selection of the dissimilarity measure together with its parameters.
/// `omega` is always `m x n` with `n` the input dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Dissimilarity {
    Euclidean,
    Omega {
        omega: Tensor,
    },
    Projection {
        omega: Tensor,
    },
    NonlinearProjection {
        omega: Tensor,
        bias: Vec<f64>,
        activation: Activation,
    },
}

impl Dissimilarity {
    pub fn omega(&self) -> Option<&Tensor> {
        match self {
            Dissimilarity::Euclidean => None,
            Dissimilarity::Omega { omega }
            | Dissimilarity::Projection { omega }
            | Dissimilarity::NonlinearProjection { omega, .. } => Some(omega),
        }
    }

    pub fn omega_mut(&mut self) -> Option<&mut Tensor> {
        match self {
            Dissimilarity::Euclidean => None,
            Dissimilarity::Omega { omega }
            | Dissimilarity::Projection { omega }
            | Dissimilarity::NonlinearProjection { omega, .. } => Some(omega),
        }
    }

    pub fn bias(&self) -> Option<&[f64]> {
        match self {
            Dissimilarity::NonlinearProjection { bias, .. } => Some(bias),
            _ => None,
        }
    }

    pub fn bias_mut(&mut self) -> Option<&mut Vec<f64>> {
        match self {
            Dissimilarity::NonlinearProjection { bias, .. } => Some(bias),
            _ => None,
        }
    }

    /// Dimension prototypes must have for inputs of dimension `input_dim`.
    pub fn prototype_dim(&self, input_dim: usize) -> Result<usize> {
        let Some(omega) = self.omega() else {
            return Ok(input_dim);
        };
        let [m, n] = omega.shape()[..] else {
            return Err(shape_err!("omega must be a matrix, got {:?}", omega.shape()));
        };
        if n != input_dim {
            return Err(shape_err!(
                "omega has {n} columns but the input has dimension {input_dim}"
            ));
        }
        if let Some(b) = self.bias() {
            if b.len() != m {
                return Err(shape_err!("bias has {} entries, omega has {m} rows", b.len()));
            }
        }
        Ok(match self {
            Dissimilarity::Omega { .. } => input_dim,
            _ => m,
        })
    }

    /// Validates that inputs of `input_dim` can be compared with `protos`.
    pub fn check(&self, input_dim: usize, protos: &PrototypeSet) -> Result<()> {
        let want = self.prototype_dim(input_dim)?;
        if protos.dim() != want {
            return Err(shape_err!(
                "prototypes have dimension {}, the measure needs {want}",
                protos.dim()
            ));
        }
        Ok(())
    }

    /// The vector that is compared against the (possibly projected) prototypes.
    /// For `Omega` this is `Ωx`; for the projection kinds it is `Ωx` or `φ(Ωx - b)`.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Dissimilarity::Euclidean => x.to_vec(),
            Dissimilarity::Omega { omega } | Dissimilarity::Projection { omega } => {
                mat_vec(omega, x)
            }
            Dissimilarity::NonlinearProjection {
                omega,
                bias,
                activation,
            } => mat_vec(omega, x)
                .into_iter()
                .zip(bias)
                .map(|(u, b)| activation.apply(u - b))
                .collect(),
        }
    }
}

fn mat_vec(m: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), x)).collect()
}

/// `Mᵀ v` for an `r x c` matrix `M`.
fn mat_t_vec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (i, &vi) in v.iter().enumerate() {
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += vi * mij;
        }
    }
    out
}

/// Row prototypes with optional class labels.
///
/// The squared prototype norms used by the efficient response are computed
/// lazily and dropped whenever the weights are borrowed mutably.
#[derive(Debug, Clone)]
pub struct PrototypeSet {
    weights: Tensor,
    labels: Option<Vec<usize>>,
    /// `‖w_k‖²` as compensated `(hi, lo)` parts.
    norms: OnceLock<(Vec<f64>, Vec<f64>)>,
}

impl PartialEq for PrototypeSet {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.labels == other.labels
    }
}

impl PrototypeSet {
    /// `weights` is `N_W x dim`. Labels are 0-based class ids; when present,
    /// every class in `0..=max_label` must own at least one prototype.
    pub fn new(weights: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(shape_err!(
                "prototype matrix must be N_W x dim, got {:?}",
                weights.shape()
            ));
        }
        if !weights.is_finite() {
            return Err(Error::Numeric("prototype weights must be finite".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != weights.rows() {
                return Err(shape_err!(
                    "{} labels for {} prototypes",
                    labels.len(),
                    weights.rows()
                ));
            }
            let n_classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut seen = vec![false; n_classes];
            labels.iter().for_each(|&c| seen[c] = true);
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::Config(format!("class {missing} owns no prototype")));
            }
        }
        Ok(Self {
            weights,
            labels,
            norms: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(shape_err!("prototype rows have different lengths"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(Tensor::matrix(rows.len(), dim, data)?, labels)
    }

    pub fn len(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// Mutable access to the weights; invalidates the cached norms.
    pub fn weights_mut(&mut self) -> &mut Tensor {
        self.norms = OnceLock::new();
        &mut self.weights
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.weights.row(k)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    fn norm_parts(&self) -> &(Vec<f64>, Vec<f64>) {
        self.norms
            .get_or_init(|| (0..self.len()).map(|k| dot2(self.row(k), self.row(k))).unzip())
    }

    /// `‖w_k‖²` for every prototype.
    pub fn squared_norms(&self) -> &[f64] {
        &self.norm_parts().0
    }

    /// Rounding remainders of [`Self::squared_norms`]: `hi + lo` carries the
    /// norms to about twice the working precision.
    pub fn squared_norms_lo(&self) -> &[f64] {
        &self.norm_parts().1
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape_err!("vector lengths differ: {} vs {}", a.len(), b.len()));
    }
    Ok(())
}

fn check_omega(omega: &Tensor, rows: usize, cols: usize) -> Result<()> {
    if omega.shape() != [rows, cols] {
        return Err(shape_err!(
            "omega is {:?}, expected {rows} x {cols}",
            omega.shape()
        ));
    }
    Ok(())
}

/// `(x - w)ᵀ(x - w)`.
pub fn euclidean_sq(x: &[f64], w: &[f64]) -> Result<f64> {
    check_len(x, w)?;
    Ok(x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `‖Ω(x - w)‖²` for `Ω` of shape `m x n`.
pub fn omega_sq(x: &[f64], w: &[f64], omega: &Tensor) -> Result<f64> {
    check_len(x, w)?;
    check_omega(omega, omega.rows(), x.len())?;
    let diff: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - b).collect();
    Ok(squared_norm(&mat_vec(omega, &diff)))
}

/// `‖Ωx - w‖²`, with the prototype living in the projection space.
pub fn projection_sq(x: &[f64], w: &[f64], omega: &Tensor) -> Result<f64> {
    check_omega(omega, w.len(), x.len())?;
    euclidean_sq(&mat_vec(omega, x), w)
}

/// `‖φ(Ωx - b) - w‖²`.
pub fn nonlinear_projection_sq(
    x: &[f64],
    w: &[f64],
    omega: &Tensor,
    bias: &[f64],
    activation: Activation,
) -> Result<f64> {
    check_omega(omega, w.len(), x.len())?;
    check_len(bias, w)?;
    let z: Vec<f64> = mat_vec(omega, x)
        .into_iter()
        .zip(bias)
        .map(|(u, b)| activation.apply(u - b))
        .collect();
    euclidean_sq(&z, w)
}

/// Prototype response computed the direct way: the (transformed) input is
/// replicated once per prototype, the difference vectors are materialized
/// and each component is reduced independently.
pub fn response_naive(x: &[f64], protos: &PrototypeSet, spec: &Dissimilarity) -> Result<Vec<f64>> {
    spec.check(x.len(), protos)?;
    let compare = match spec {
        Dissimilarity::Omega { .. } => Cow::Borrowed(x),
        _ => Cow::Owned(spec.embed(x)),
    };
    let dim = protos.dim();
    // One replica of the input per prototype, minus the prototype.
    let mut diffs = Vec::with_capacity(protos.len() * dim);
    for _ in 0..protos.len() {
        diffs.extend_from_slice(&compare);
    }
    for (row, w) in diffs
        .chunks_exact_mut(dim)
        .zip(protos.weights().data().chunks_exact(dim))
    {
        row.iter_mut().zip(w).for_each(|(r, wi)| *r -= wi);
    }
    Ok(diffs
        .chunks_exact(dim)
        .map(|diff| match spec {
            Dissimilarity::Omega { omega } => squared_norm(&mat_vec(omega, diff)),
            _ => squared_norm(diff),
        })
        .collect())
}

/// Prototypes prepared for repeated efficient response evaluation: the
/// vectors the embedded input is compared against and their squared norms.
#[derive(Debug, Clone)]
pub struct PreparedPrototypes<'a> {
    spec: &'a Dissimilarity,
    compare: Cow<'a, [f64]>,
    norms: Cow<'a, [f64]>,
    norms_lo: Cow<'a, [f64]>,
    n_protos: usize,
    dim: usize,
    input_dim: usize,
}

impl<'a> PreparedPrototypes<'a> {
    pub fn new(protos: &'a PrototypeSet, spec: &'a Dissimilarity, input_dim: usize) -> Result<Self> {
        spec.check(input_dim, protos)?;
        let n_protos = protos.len();
        Ok(match spec {
            // Prototypes live in input space; compare against Ω w_k.
            Dissimilarity::Omega { omega } => {
                let m = omega.rows();
                let projected = matmul_nt(protos.weights().data(), n_protos, omega.data(), m, input_dim);
                let (norms, norms_lo): (Vec<f64>, Vec<f64>) =
                    projected.chunks_exact(m).map(|w| dot2(w, w)).unzip();
                Self {
                    spec,
                    compare: Cow::Owned(projected),
                    norms: Cow::Owned(norms),
                    norms_lo: Cow::Owned(norms_lo),
                    n_protos,
                    dim: m,
                    input_dim,
                }
            }
            _ => Self {
                spec,
                compare: Cow::Borrowed(protos.weights().data()),
                norms: Cow::Borrowed(protos.squared_norms()),
                norms_lo: Cow::Borrowed(protos.squared_norms_lo()),
                n_protos,
                dim: protos.dim(),
                input_dim,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.n_protos
    }

    pub fn is_empty(&self) -> bool {
        self.n_protos == 0
    }

    /// `d = -2 W z + b(z, W)` with `b_k = ‖z‖² + ‖w_k‖²`, clamped at zero.
    pub fn response(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(shape_err!(
                "input has dimension {}, expected {}",
                x.len(),
                self.input_dim
            ));
        }
        let z = self.spec.embed(x);
        let zz = dot(&z, &z);
        // Rounding error of the plain expansion is at most about
        // `(dim + 2) eps (zz + 2|w||z| + ww) <= 2 (dim + 2) eps (zz + ww)`.
        // Where that is not negligible against the result (close prototypes,
        // where the three terms cancel), redo the entry in compensated form.
        let guard = 2.0 * (self.dim as f64 + 2.0) * f64::EPSILON / CANCELLATION_REL_ERROR;
        let mut zz2 = None;
        Ok(self
            .compare
            .chunks_exact(self.dim)
            .zip(self.norms.iter().zip(self.norms_lo.iter()))
            .map(|(w, (&ww, &ww_lo))| {
                let d = zz - 2.0 * dot(w, &z) + ww;
                if d > guard * (zz + ww) {
                    return d;
                }
                let (zz, zz_lo) = *zz2.get_or_insert_with(|| dot2(&z, &z));
                let (wz, wz_lo) = dot2(w, &z);
                let (s, e1) = two_sum(zz, -2.0 * wz);
                let (s, e2) = two_sum(s, ww);
                (s + (e1 + e2 + zz_lo - 2.0 * wz_lo + ww_lo)).max(0.0)
            })
            .collect())
    }
}

/// Relative error the expansion may leave before an entry is recomputed.
const CANCELLATION_REL_ERROR: f64 = 1e-12;

/// Prototype response via the dot-product identity.
pub fn response_efficient(
    x: &[f64],
    protos: &PrototypeSet,
    spec: &Dissimilarity,
) -> Result<Vec<f64>> {
    PreparedPrototypes::new(protos, spec, x.len())?.response(x)
}

/// Efficient response for every row of a `batch x n` matrix.
pub fn response_batch(xs: &Tensor, protos: &PrototypeSet, spec: &Dissimilarity) -> Result<Tensor> {
    if xs.rank() != 2 {
        return Err(shape_err!("batch must be a matrix, got {:?}", xs.shape()));
    }
    let prepared = PreparedPrototypes::new(protos, spec, xs.cols())?;
    let mut out = Vec::with_capacity(xs.rows() * protos.len());
    for i in 0..xs.rows() {
        out.extend(prepared.response(xs.row(i))?);
    }
    Tensor::matrix(xs.rows(), protos.len(), out)
}

/// Gradients of `⟨upstream, d(x)⟩` with respect to every input of the response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGrads {
    pub input: Vec<f64>,
    /// Same shape as the prototype matrix.
    pub prototypes: Tensor,
    pub omega: Option<Tensor>,
    pub bias: Option<Vec<f64>>,
}

/// Analytic backward pass of the response vector for all four measures.
pub fn response_backward(
    x: &[f64],
    protos: &PrototypeSet,
    spec: &Dissimilarity,
    upstream: &[f64],
) -> Result<ResponseGrads> {
    spec.check(x.len(), protos)?;
    if upstream.len() != protos.len() {
        return Err(shape_err!(
            "upstream has {} entries for {} prototypes",
            upstream.len(),
            protos.len()
        ));
    }
    let n = x.len();
    let dim = protos.dim();
    let mut grad_w = Tensor::zeros(&[protos.len(), dim]);

    if let Dissimilarity::Omega { omega } = spec {
        // d_k = ‖Ω e_k‖², e_k = x - w_k.
        // ∂/∂x = 2 Σ g_k ΩᵀΩ e_k, ∂/∂w_k = -2 g_k ΩᵀΩ e_k, ∂/∂Ω = 2 Σ g_k (Ω e_k) e_kᵀ.
        let m = omega.rows();
        let mut grad_x = vec![0.0; n];
        let mut grad_omega = Tensor::zeros(&[m, n]);
        for (k, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let e: Vec<f64> = x.iter().zip(protos.row(k)).map(|(a, b)| a - b).collect();
            let v = mat_vec(omega, &e);
            let back = mat_t_vec(omega, &v);
            for ((gx, gw), b) in grad_x.iter_mut().zip(grad_w.row_mut(k)).zip(&back) {
                *gx += 2.0 * g * b;
                *gw = -2.0 * g * b;
            }
            for (i, vi) in v.iter().enumerate() {
                for (go, ej) in grad_omega.row_mut(i).iter_mut().zip(&e) {
                    *go += 2.0 * g * vi * ej;
                }
            }
        }
        return Ok(ResponseGrads {
            input: grad_x,
            prototypes: grad_w,
            omega: Some(grad_omega),
            bias: None,
        });
    }

    // Kinds that compare z against prototypes in z-space:
    // ∂d_k/∂w_k = -2(z - w_k), ∂/∂z = 2 Σ g_k (z - w_k).
    let (z, pre) = match spec {
        Dissimilarity::NonlinearProjection { omega, bias, .. } => {
            let u: Vec<f64> = mat_vec(omega, x).iter().zip(bias).map(|(a, b)| a - b).collect();
            (spec.embed(x), Some(u))
        }
        _ => (spec.embed(x), None),
    };
    let mut grad_z = vec![0.0; dim];
    for (k, &g) in upstream.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for ((gz, gw), (zi, wi)) in grad_z
            .iter_mut()
            .zip(grad_w.row_mut(k))
            .zip(z.iter().zip(protos.row(k)))
        {
            let e = zi - wi;
            *gz += 2.0 * g * e;
            *gw = -2.0 * g * e;
        }
    }

    Ok(match spec {
        Dissimilarity::Euclidean => ResponseGrads {
            input: grad_z,
            prototypes: grad_w,
            omega: None,
            bias: None,
        },
        Dissimilarity::Projection { omega } => ResponseGrads {
            input: mat_t_vec(omega, &grad_z),
            prototypes: grad_w,
            omega: Some(outer(&grad_z, x)),
            bias: None,
        },
        Dissimilarity::NonlinearProjection { omega, activation, .. } => {
            let u = pre.expect("computed above");
            let grad_u: Vec<f64> = grad_z
                .iter()
                .zip(&u)
                .map(|(g, &ui)| g * activation.derivative(ui))
                .collect();
            ResponseGrads {
                input: mat_t_vec(omega, &grad_u),
                prototypes: grad_w,
                omega: Some(outer(&grad_u, x)),
                bias: Some(grad_u.iter().map(|g| -g).collect()),
            }
        }
        Dissimilarity::Omega { .. } => unreachable!("handled above"),
    })
}

fn outer(a: &[f64], b: &[f64]) -> Tensor {
    let data = a.iter().flat_map(|ai| b.iter().map(move |bj| ai * bj)).collect();
    Tensor::matrix(a.len(), b.len(), data).expect("non-empty operands")
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, normal_vec(rng, r * c)).unwrap()
    }

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        (0..n).for_each(|i| t.row_mut(i)[i] = 1.0);
        t
    }

    #[test]
    fn euclidean_values() {
        assert_eq!(euclidean_sq(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(euclidean_sq(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (x, w) = (normal_vec(&mut rng, 17), normal_vec(&mut rng, 17));
        let mut oracle = 0.0;
        for i in 0..17 {
            oracle += (x[i] - w[i]).powi(2);
        }
        assert!((euclidean_sq(&x, &w).unwrap() - oracle).abs() < 1e-12);
        assert!(matches!(euclidean_sq(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn omega_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, w) = (normal_vec(&mut rng, 5), normal_vec(&mut rng, 5));
        let eye = identity(5);
        assert!((omega_sq(&x, &w, &eye).unwrap() - euclidean_sq(&x, &w).unwrap()).abs() < 1e-12);
        assert_eq!(omega_sq(&x, &w, &Tensor::zeros(&[3, 5])).unwrap(), 0.0);

        let omega = normal_matrix(&mut rng, 3, 5);
        let mut oracle = 0.0;
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..5 {
                acc += omega.at(&[i, j]) * (x[j] - w[j]);
            }
            oracle += acc * acc;
        }
        assert!((omega_sq(&x, &w, &omega).unwrap() - oracle).abs() < 1e-12);
        assert!(omega_sq(&x, &w, &Tensor::zeros(&[3, 4])).is_err());
    }

    #[test]
    fn projection_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (x, w) = (normal_vec(&mut rng, 4), normal_vec(&mut rng, 4));
        let eye = identity(4);
        assert!(
            (projection_sq(&x, &w, &eye).unwrap() - euclidean_sq(&x, &w).unwrap()).abs() < 1e-12
        );
        let omega = normal_matrix(&mut rng, 2, 4);
        let proj = mat_vec(&omega, &x);
        assert_eq!(projection_sq(&x, &proj, &omega).unwrap(), 0.0);

        let w2 = normal_vec(&mut rng, 2);
        let mut oracle = 0.0;
        for i in 0..2 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += omega.at(&[i, j]) * x[j];
            }
            oracle += (acc - w2[i]).powi(2);
        }
        assert!((projection_sq(&x, &w2, &omega).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_projection_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = normal_vec(&mut rng, 6);
        let omega = normal_matrix(&mut rng, 3, 6);
        let w = normal_vec(&mut rng, 3);
        let zero = [0.0; 3];
        let a = nonlinear_projection_sq(&x, &w, &omega, &zero, Activation::Identity).unwrap();
        assert!((a - projection_sq(&x, &w, &omega).unwrap()).abs() < 1e-12);

        let bias = normal_vec(&mut rng, 3);
        let on_target: Vec<f64> = (0..3)
            .map(|i| sigmoid(dot(omega.row(i), &x) - bias[i]))
            .collect();
        let v = nonlinear_projection_sq(&x, &on_target, &omega, &bias, Activation::Sigmoid);
        assert_eq!(v.unwrap(), 0.0);

        let mut oracle = 0.0;
        for i in 0..3 {
            let mut u = -bias[i];
            for j in 0..6 {
                u += omega.at(&[i, j]) * x[j];
            }
            oracle += (1.0 / (1.0 + (-u).exp()) - w[i]).powi(2);
        }
        let v = nonlinear_projection_sq(&x, &w, &omega, &bias, Activation::Sigmoid).unwrap();
        assert!((v - oracle).abs() < 1e-12);
    }

    #[test]
    fn response_small_cases() {
        let protos = PrototypeSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], None).unwrap();
        let x = [1.0, 0.0];
        assert_eq!(response_naive(&x, &protos, &Dissimilarity::Euclidean).unwrap(), vec![0.0, 2.0]);
        assert_eq!(
            response_efficient(&x, &protos, &Dissimilarity::Euclidean).unwrap(),
            vec![0.0, 2.0]
        );

        let single = PrototypeSet::from_rows(&[vec![2.0, 2.0]], None).unwrap();
        assert_eq!(response_naive(&x, &single, &Dissimilarity::Euclidean).unwrap().len(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let w = normal_matrix(&mut rng, 7, 3);
        let protos = PrototypeSet::new(w, None).unwrap();
        let d = response_efficient(&[0.0; 3], &protos, &Dissimilarity::Euclidean).unwrap();
        for (k, dk) in d.iter().enumerate() {
            assert!((dk - squared_norm(protos.row(k))).abs() < 1e-12);
        }
        let x = normal_vec(&mut rng, 3);
        let naive = response_naive(&x, &protos, &Dissimilarity::Euclidean).unwrap();
        for (k, dk) in naive.iter().enumerate() {
            assert!((dk - euclidean_sq(&x, protos.row(k)).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn efficient_matches_naive_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let protos = PrototypeSet::new(normal_matrix(&mut rng, 200, 64), None).unwrap();
        let x = normal_vec(&mut rng, 64);
        let a = response_naive(&x, &protos, &Dissimilarity::Euclidean).unwrap();
        let b = response_efficient(&x, &protos, &Dissimilarity::Euclidean).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-10 * p.abs().max(q.abs()));
        }
    }

    #[test]
    fn efficient_response_is_an_affine_map() {
        // d(x) = A x + b(x, W) with A = -2W.
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let w = normal_matrix(&mut rng, 9, 5);
        let protos = PrototypeSet::new(w.clone(), None).unwrap();
        let x = normal_vec(&mut rng, 5);
        let d = response_efficient(&x, &protos, &Dissimilarity::Euclidean).unwrap();
        let xx = squared_norm(&x);
        for k in 0..9 {
            let ax: f64 = (0..5).map(|j| -2.0 * w.at(&[k, j]) * x[j]).sum();
            let b = xx + squared_norm(w.row(k));
            assert!((d[k] - (ax + b)).abs() < 1e-12 * (ax.abs() + b));
        }
    }

    #[test]
    fn norm_cache_is_invalidated_on_update() {
        let mut protos = PrototypeSet::from_rows(&[vec![1.0, 1.0]], None).unwrap();
        assert_eq!(protos.squared_norms(), &[2.0]);
        protos.weights_mut().data_mut()[0] = 3.0;
        assert_eq!(protos.squared_norms(), &[10.0]);
        let d = response_efficient(&[0.0, 0.0], &protos, &Dissimilarity::Euclidean).unwrap();
        assert_eq!(d, vec![10.0]);
    }

    #[test]
    fn label_coverage_is_validated() {
        let rows = [vec![0.0], vec![1.0]];
        assert!(PrototypeSet::from_rows(&rows, Some(vec![0, 2])).is_err());
        assert_eq!(PrototypeSet::from_rows(&rows, Some(vec![1, 0])).unwrap().n_classes(), 2);
    }

    #[test]
    fn euclidean_backward_unit_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let protos = PrototypeSet::new(normal_matrix(&mut rng, 4, 3), None).unwrap();
        let x = normal_vec(&mut rng, 3);
        let g = response_backward(&x, &protos, &Dissimilarity::Euclidean, &[0.0, 1.0, 0.0, 0.0])
            .unwrap();
        for k in 0..4 {
            for j in 0..3 {
                let expected = if k == 1 { -2.0 * (x[j] - protos.row(1)[j]) } else { 0.0 };
                assert_eq!(g.prototypes.at(&[k, j]), expected);
            }
        }
        let zero = response_backward(&x, &protos, &Dissimilarity::Euclidean, &[0.0; 4]).unwrap();
        assert!(zero.input.iter().chain(zero.prototypes.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn nonnegative_under_cancellation() {
        let protos = PrototypeSet::from_rows(&[vec![0.1, 0.2, 0.3]], None).unwrap();
        let d = response_efficient(&[0.1, 0.2, 0.3], &protos, &Dissimilarity::Euclidean).unwrap();
        assert!(d[0] >= 0.0 && d[0] < 1e-15);
    }

    #[test]
    fn close_prototypes_keep_relative_accuracy() {
        // Distances of 1e-16 against squared norms near 0.5: the plain
        // expansion has no correct digits left here.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = normal_vec(&mut rng, 32).iter().map(|v| v * 0.1).collect::<Vec<_>>();
        let mut near = w.clone();
        near[3] += 1e-8;
        let far: Vec<f64> = w.iter().map(|v| v + 1.0).collect();
        let protos = PrototypeSet::from_rows(&[near, far], None).unwrap();
        let a = response_naive(&w, &protos, &Dissimilarity::Euclidean).unwrap();
        let b = response_efficient(&w, &protos, &Dissimilarity::Euclidean).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(q.abs()), "{p} vs {q}");
        }
    }
}

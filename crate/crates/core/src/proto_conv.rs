//! Kernel-prototype convolution.
//!
//! Every kernel is treated as a prototype in the space of flattened windows,
//! and the response at each position is the squared distance between the
//! window and the kernel:
//!
//! ```text
//! x ⊛ k = x² ∗ 1 - 2 x ∗ k ⊕ ‖k‖²
//! ```
//!
//! i.e. squared window norms, minus twice an ordinary convolution, plus the
//! broadcast kernel norm. The result is a *dissimilarity stack* with one
//! channel per kernel-prototype. With trainable squared radii the layer emits
//! n-ball scores `r² - d` instead, positive exactly inside the ball.
//!
//! Soft assignments divide by `σ²`: `softmax(-d/σ²)` over channels and
//! `sigmoid(score/σ²)` per value. Hard assignments use the same σ for their
//! straight-through surrogate gradient.

use crate::dissimilarity::sigmoid;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{
    conv2d, extract_windows, filter_bank_from_matrix, filter_matrix, fold_windows, matmul_nn,
    matmul_tn, squared_norm, squared_window_norms, ConvGeometry, Padding, Tensor,
};

/// What the values of a [`DissimilarityStack`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackKind {
    Distance,
    NBallScore,
    SoftProb,
    SoftPossibility,
    HardOneHot,
    HardBinary,
}

/// `[out_rows, out_cols, n_prototypes]` values tagged with their meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityStack {
    pub values: Tensor,
    pub kind: StackKind,
}

impl DissimilarityStack {
    pub fn channels(&self) -> usize {
        self.values.shape()[2]
    }

    /// Channel vector of every pixel.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.data().chunks_exact(self.channels())
    }

    fn expect(&self, kind: StackKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Argument(format!(
                "expected a {kind:?} stack, got {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Kernel-prototypes `[k_rows, k_cols, channels, n]` with optional squared radii.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPrototypeBank {
    pub kernels: Tensor,
    pub radii_sq: Option<Vec<f64>>,
    pub stride: (usize, usize),
    pub padding: Padding,
}

impl KernelPrototypeBank {
    pub fn new(
        kernels: Tensor,
        radii_sq: Option<Vec<f64>>,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        if kernels.rank() != 4 {
            return Err(shape_err!(
                "kernel-prototypes must be k_rows x k_cols x channels x n, got {:?}",
                kernels.shape()
            ));
        }
        if let Some(r) = &radii_sq {
            if r.len() != kernels.shape()[3] {
                return Err(shape_err!(
                    "{} radii for {} kernel-prototypes",
                    r.len(),
                    kernels.shape()[3]
                ));
            }
            if r.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config("squared radii must be non-negative".into()));
            }
        }
        Ok(Self {
            kernels,
            radii_sq,
            stride,
            padding,
        })
    }

    pub fn kernel_extent(&self) -> (usize, usize) {
        (self.kernels.shape()[0], self.kernels.shape()[1])
    }

    pub fn channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn len(&self) -> usize {
        self.kernels.shape()[3]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn geometry(&self, input: (usize, usize, usize)) -> Result<ConvGeometry> {
        if input.2 != self.channels() {
            return Err(shape_err!(
                "input has {} channels, kernel-prototypes have {}",
                input.2,
                self.channels()
            ));
        }
        ConvGeometry::new(input, self.kernel_extent(), self.stride, self.padding)
    }

    /// Output of the layer: distances, or n-ball scores when radii are set.
    pub fn forward(&self, x: &Tensor) -> Result<DissimilarityStack> {
        let stack = proto_conv(x, self)?;
        match &self.radii_sq {
            Some(r) => nball_score(&stack, r),
            None => Ok(stack),
        }
    }

    /// Clamps the squared radii to be non-negative.
    pub fn clamp_radii(&mut self) {
        if let Some(r) = &mut self.radii_sq {
            r.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

/// Distance stack `‖x̃_ij - k̃_k‖²` via the convolution identity. Rounding
/// residue below zero is clamped to 0.
pub fn proto_conv(x: &Tensor, bank: &KernelPrototypeBank) -> Result<DissimilarityStack> {
    let (_, _, c) = x.image_dims()?;
    if c != bank.channels() {
        return Err(shape_err!(
            "input has {c} channels, kernel-prototypes have {}",
            bank.channels()
        ));
    }
    let ext = bank.kernel_extent();
    let norms = squared_window_norms(x, ext, bank.stride, bank.padding)?;
    let cross = conv2d(x, &bank.kernels, None, bank.stride, bank.padding)?;
    let kmat = filter_matrix(&bank.kernels)?;
    let knorms: Vec<f64> = (0..bank.len()).map(|k| squared_norm(kmat.row(k))).collect();
    let n = bank.len();
    let mut values = cross;
    for (pixel, &xx) in values.data_mut().chunks_exact_mut(n).zip(norms.data()) {
        for (v, kk) in pixel.iter_mut().zip(&knorms) {
            *v = (xx - 2.0 * *v + kk).max(0.0);
        }
    }
    Ok(DissimilarityStack {
        values,
        kind: StackKind::Distance,
    })
}

/// `r_k² - d` for every pixel and channel.
pub fn nball_score(stack: &DissimilarityStack, radii_sq: &[f64]) -> Result<DissimilarityStack> {
    stack.expect(StackKind::Distance)?;
    if radii_sq.len() != stack.channels() {
        return Err(shape_err!(
            "{} radii for {} channels",
            radii_sq.len(),
            stack.channels()
        ));
    }
    let mut values = stack.values.clone();
    for pixel in values.data_mut().chunks_exact_mut(radii_sq.len()) {
        pixel.iter_mut().zip(radii_sq).for_each(|(v, r)| *v = r - *v);
    }
    Ok(DissimilarityStack {
        values,
        kind: StackKind::NBallScore,
    })
}

/// ReLU-clipped n-ball scores: zero outside the ball, at most `r²` inside.
pub fn relu_scores(scores: &DissimilarityStack) -> Result<DissimilarityStack> {
    scores.expect(StackKind::NBallScore)?;
    let mut values = scores.values.clone();
    values.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(DissimilarityStack {
        values,
        kind: StackKind::NBallScore,
    })
}

pub fn relu_scores_backward(scores: &DissimilarityStack, upstream: &Tensor) -> Tensor {
    let mut g = upstream.clone();
    g.data_mut()
        .iter_mut()
        .zip(scores.values.data())
        .for_each(|(g, &s)| {
            if s <= 0.0 {
                *g = 0.0
            }
        });
    g
}

fn check_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("σ must be positive, got {sigma}")));
    }
    Ok(sigma * sigma)
}

/// Per pixel, `softmax(-d / σ²)` over channels.
pub fn soft_assign_softmax(stack: &DissimilarityStack, sigma: f64) -> Result<DissimilarityStack> {
    stack.expect(StackKind::Distance)?;
    let s2 = check_sigma(sigma)?;
    let n = stack.channels();
    let mut values = stack.values.clone();
    for pixel in values.data_mut().chunks_exact_mut(n) {
        let min = pixel.iter().copied().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for v in pixel.iter_mut() {
            *v = ((min - *v) / s2).exp();
            z += *v;
        }
        pixel.iter_mut().for_each(|v| *v /= z);
    }
    Ok(DissimilarityStack {
        values,
        kind: StackKind::SoftProb,
    })
}

/// Gradient with respect to the distances given the upstream gradient on
/// the probabilities: `-(1/σ²) y_k (g_k - Σ_j g_j y_j)`.
pub fn soft_assign_softmax_backward(
    stack: &DissimilarityStack,
    sigma: f64,
    upstream: &Tensor,
) -> Result<Tensor> {
    let y = soft_assign_softmax(stack, sigma)?;
    let s2 = sigma * sigma;
    let n = stack.channels();
    let mut grad = upstream.clone();
    for (g, yp) in grad.data_mut().chunks_exact_mut(n).zip(y.pixels()) {
        let inner: f64 = g.iter().zip(yp).map(|(a, b)| a * b).sum();
        g.iter_mut()
            .zip(yp)
            .for_each(|(gk, yk)| *gk = -yk * (*gk - inner) / s2);
    }
    Ok(grad)
}

/// `sigmoid(score / σ²)`: above 0.5 exactly inside the ball.
pub fn soft_assign_sigmoid(scores: &DissimilarityStack, sigma: f64) -> Result<DissimilarityStack> {
    scores.expect(StackKind::NBallScore)?;
    let s2 = check_sigma(sigma)?;
    let mut values = scores.values.clone();
    values.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v / s2));
    Ok(DissimilarityStack {
        values,
        kind: StackKind::SoftPossibility,
    })
}

pub fn soft_assign_sigmoid_backward(
    scores: &DissimilarityStack,
    sigma: f64,
    upstream: &Tensor,
) -> Result<Tensor> {
    let y = soft_assign_sigmoid(scores, sigma)?;
    let s2 = sigma * sigma;
    let mut grad = upstream.clone();
    grad.data_mut()
        .iter_mut()
        .zip(y.values.data())
        .for_each(|(g, &s)| *g *= s * (1.0 - s) / s2);
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardMode {
    /// One for the closest prototype, zero elsewhere (input: distances).
    OneHot,
    /// Heaviside of the n-ball score, with `H(0) = 0` (input: scores).
    Heaviside,
}

/// Discrete assignment. The backward pass ([`hard_assign_backward`]) uses the
/// gradient of the σ-parameterized soft counterpart.
pub fn hard_assign(stack: &DissimilarityStack, mode: HardMode, sigma: f64) -> Result<DissimilarityStack> {
    check_sigma(sigma)?;
    let mut values = stack.values.clone();
    let kind = match mode {
        HardMode::OneHot => {
            stack.expect(StackKind::Distance)?;
            let n = stack.channels();
            for pixel in values.data_mut().chunks_exact_mut(n) {
                let mut best = 0;
                for k in 1..n {
                    if pixel[k] < pixel[best] {
                        best = k;
                    }
                }
                pixel.fill(0.0);
                pixel[best] = 1.0;
            }
            StackKind::HardOneHot
        }
        HardMode::Heaviside => {
            stack.expect(StackKind::NBallScore)?;
            values
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
            StackKind::HardBinary
        }
    };
    Ok(DissimilarityStack { values, kind })
}

/// Straight-through surrogate gradient of [`hard_assign`].
pub fn hard_assign_backward(
    stack: &DissimilarityStack,
    mode: HardMode,
    sigma: f64,
    upstream: &Tensor,
) -> Result<Tensor> {
    match mode {
        HardMode::OneHot => soft_assign_softmax_backward(stack, sigma, upstream),
        HardMode::Heaviside => soft_assign_sigmoid_backward(stack, sigma, upstream),
    }
}

/// Gradients of `⟨upstream, layer(x)⟩` for a kernel-prototype layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoConvGrads {
    pub input: Tensor,
    /// Same layout as the kernel bank.
    pub kernels: Tensor,
    pub radii_sq: Option<Vec<f64>>,
}

/// Backward pass of [`KernelPrototypeBank::forward`].
///
/// `upstream` is the gradient on the layer output: on the distances when the
/// bank has no radii, on the n-ball scores otherwise. `rank_weights`, when
/// given, has the output's shape and scales each position's contribution to
/// the kernel gradient (neural-gas cooperation); the input gradient is not
/// scaled.
pub fn proto_conv_backward(
    x: &Tensor,
    bank: &KernelPrototypeBank,
    upstream: &Tensor,
    rank_weights: Option<&Tensor>,
) -> Result<ProtoConvGrads> {
    let geometry = bank.geometry(x.image_dims()?)?;
    let n = bank.len();
    let expected = [geometry.out_rows, geometry.out_cols, n];
    if upstream.shape() != expected {
        return Err(shape_err!(
            "upstream is {:?}, layer output is {expected:?}",
            upstream.shape()
        ));
    }
    if let Some(w) = rank_weights {
        if w.shape() != expected {
            return Err(shape_err!("rank weights are {:?}, expected {expected:?}", w.shape()));
        }
    }
    // Gradient on the distances.
    let mut g_dist = upstream.data().to_vec();
    let grad_radii = bank.radii_sq.as_ref().map(|_| {
        let mut gr = vec![0.0; n];
        for pixel in upstream.data().chunks_exact(n) {
            gr.iter_mut().zip(pixel).for_each(|(a, b)| *a += b);
        }
        g_dist.iter_mut().for_each(|g| *g = -*g);
        gr
    });

    let windows = extract_windows(x, bank.kernel_extent(), bank.stride, bank.padding)?;
    let p = geometry.n_positions();
    let l = geometry.window_len();
    let kmat = filter_matrix(&bank.kernels)?;

    // ∂/∂k̃_k = -2 Σ_p G_pk (x̃_p - k̃_k)
    let g_kern_src: std::borrow::Cow<'_, [f64]> = match rank_weights {
        Some(w) => g_dist.iter().zip(w.data()).map(|(a, b)| a * b).collect(),
        None => std::borrow::Cow::Borrowed(&g_dist),
    };
    let gx = matmul_tn(&g_kern_src, p, n, &windows.rows, l);
    let mut col_sums = vec![0.0; n];
    for pixel in g_kern_src.chunks_exact(n) {
        col_sums.iter_mut().zip(pixel).for_each(|(a, b)| *a += b);
    }
    let mut gk = vec![0.0; n * l];
    for k in 0..n {
        let kr = kmat.row(k);
        for w in 0..l {
            gk[k * l + w] = -2.0 * (gx[k * l + w] - col_sums[k] * kr[w]);
        }
    }

    // ∂/∂x̃_p = 2 Σ_k G_pk (x̃_p - k̃_k), folded back onto the input grid.
    let gk_windows = matmul_nn(&g_dist, p, kmat.data(), n, l);
    let mut g_windows = vec![0.0; p * l];
    for pos in 0..p {
        let s: f64 = g_dist[pos * n..(pos + 1) * n].iter().sum();
        let row = &mut g_windows[pos * l..(pos + 1) * l];
        for ((o, xw), kw) in row
            .iter_mut()
            .zip(windows.row(pos))
            .zip(&gk_windows[pos * l..(pos + 1) * l])
        {
            *o = 2.0 * (s * xw - kw);
        }
    }

    Ok(ProtoConvGrads {
        input: fold_windows(&g_windows, &geometry),
        kernels: filter_bank_from_matrix(&gk, bank.kernel_extent(), bank.channels(), n),
        radii_sq: grad_radii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissimilarity::{euclidean_sq, response_backward, response_efficient, Dissimilarity, PrototypeSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn distance_stack(values: Vec<f64>, n: usize) -> DissimilarityStack {
        let px = values.len() / n;
        DissimilarityStack {
            values: Tensor::new(vec![1, px, n], values).unwrap(),
            kind: StackKind::Distance,
        }
    }

    fn score_stack(values: Vec<f64>, n: usize) -> DissimilarityStack {
        DissimilarityStack {
            kind: StackKind::NBallScore,
            ..distance_stack(values, n)
        }
    }

    #[test]
    fn zero_kernels_give_window_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let x = rand_tensor(&mut rng, &[6, 5, 2]);
        let bank = KernelPrototypeBank::new(Tensor::zeros(&[3, 3, 2, 3]), None, (1, 1), Padding::Same).unwrap();
        let stack = proto_conv(&x, &bank).unwrap();
        let norms = squared_window_norms(&x, (3, 3), (1, 1), Padding::Same).unwrap();
        for (pixel, nn) in stack.pixels().zip(norms.data()) {
            assert!(pixel.iter().all(|v| (v - nn).abs() < 1e-14));
        }
    }

    #[test]
    fn kernel_equal_to_window_is_zero_there() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = rand_tensor(&mut rng, &[5, 5, 1]);
        let windows = extract_windows(&x, (2, 2), (1, 1), Padding::Valid).unwrap();
        let kernel = filter_bank_from_matrix(windows.row(7), (2, 2), 1, 1);
        let bank = KernelPrototypeBank::new(kernel, None, (1, 1), Padding::Valid).unwrap();
        let stack = proto_conv(&x, &bank).unwrap();
        assert!(stack.values.data()[7] < 1e-15);
    }

    #[test]
    fn matches_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = rand_tensor(&mut rng, &[8, 8, 2]);
        let kernels = rand_tensor(&mut rng, &[3, 3, 2, 5]);
        let bank = KernelPrototypeBank::new(kernels.clone(), None, (1, 1), Padding::Valid).unwrap();
        let stack = proto_conv(&x, &bank).unwrap();
        let windows = extract_windows(&x, (3, 3), (1, 1), Padding::Valid).unwrap();
        let kmat = filter_matrix(&kernels).unwrap();
        for p in 0..windows.n_positions() {
            for k in 0..5 {
                let oracle = euclidean_sq(windows.row(p), kmat.row(k)).unwrap();
                let got = stack.values.data()[p * 5 + k];
                assert!((got - oracle).abs() <= 1e-10 * oracle.abs());
            }
        }
    }

    #[test]
    fn one_by_one_reduces_to_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = rand_tensor(&mut rng, &[1, 1, 4]);
        let kernels = rand_tensor(&mut rng, &[1, 1, 4, 3]);
        let bank = KernelPrototypeBank::new(kernels.clone(), None, (1, 1), Padding::Valid).unwrap();
        let protos = PrototypeSet::new(filter_matrix(&kernels).unwrap(), None).unwrap();
        let stack = proto_conv(&x, &bank).unwrap();
        let d = response_efficient(x.data(), &protos, &Dissimilarity::Euclidean).unwrap();
        for (a, b) in stack.values.data().iter().zip(&d) {
            assert!((a - b).abs() < 1e-14);
        }

        let up = rand_tensor(&mut rng, &[1, 1, 3]);
        let g = proto_conv_backward(&x, &bank, &up, None).unwrap();
        let r = response_backward(x.data(), &protos, &Dissimilarity::Euclidean, up.data()).unwrap();
        for (a, b) in g.input.data().iter().zip(&r.input) {
            assert!((a - b).abs() < 1e-14);
        }
        let gk = filter_matrix(&g.kernels).unwrap();
        for (a, b) in gk.data().iter().zip(r.prototypes.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = rand_tensor(&mut rng, &[5, 4, 2]);
        let bank = KernelPrototypeBank::new(
            rand_tensor(&mut rng, &[2, 2, 2, 3]),
            Some(vec![1.0, 2.0, 3.0]),
            (1, 1),
            Padding::Valid,
        )
        .unwrap();
        let g = proto_conv_backward(&x, &bank, &Tensor::zeros(&[4, 3, 3]), None).unwrap();
        assert!(g.input.data().iter().chain(g.kernels.data()).all(|&v| v == 0.0));
        assert_eq!(g.radii_sq.unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn nball_values() {
        let s = nball_score(&distance_stack(vec![25.0, 0.0], 1), &[4.0]).unwrap();
        assert_eq!(s.values.data(), &[-21.0, 4.0]);
        let r = relu_scores(&s).unwrap();
        assert_eq!(r.values.data(), &[0.0, 4.0]);
        assert!(nball_score(&s, &[4.0]).is_err());
    }

    #[test]
    fn softmax_assignment() {
        let s = soft_assign_softmax(&distance_stack(vec![3.0; 4], 4), 0.7).unwrap();
        assert!(s.values.data().iter().all(|v| (v - 0.25).abs() < 1e-15));

        let sigma: f64 = 1.3;
        let d = sigma * sigma * 3f64.ln();
        let s = soft_assign_softmax(&distance_stack(vec![0.0, d], 2), sigma).unwrap();
        assert!((s.values.data()[0] - 0.75).abs() < 1e-15);
        assert!((s.values.data()[1] - 0.25).abs() < 1e-15);

        let s = soft_assign_softmax(&distance_stack(vec![0.5, 0.2, 0.9], 3), 1e-3).unwrap();
        assert!(s.values.data()[1] >= 1.0 - 1e-9);
        assert!(soft_assign_softmax(&distance_stack(vec![1.0], 1), 0.0).is_err());
        assert!(soft_assign_softmax(&distance_stack(vec![1.0], 1), -1.0).is_err());
    }

    #[test]
    fn sigmoid_assignment() {
        let s = soft_assign_sigmoid(&score_stack(vec![0.0, 1e4, -1e4], 3), 1.0).unwrap();
        assert_eq!(s.values.data()[0], 0.5);
        assert_eq!(s.values.data()[1], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let mut scores: Vec<f64> = (0..200).map(|_| rng.random_range(-5.0..5.0)).collect();
        scores.sort_by(f64::total_cmp);
        let s = soft_assign_sigmoid(&score_stack(scores.clone(), 1), 0.8).unwrap();
        for (w, sc) in s.values.data().windows(2).zip(scores.windows(2)) {
            assert!(w[1] >= w[0]);
            if sc[0] < sc[1] {
                assert!(w[1] > w[0] || w[1] == 1.0 || w[0] == 0.0);
            }
        }
        for (v, sc) in s.values.data().iter().zip(&scores) {
            assert_eq!(*v > 0.5, *sc > 0.0);
        }
    }

    #[test]
    fn hard_assignment_forward() {
        let h = hard_assign(&distance_stack(vec![1.0, 2.0, 3.0], 3), HardMode::OneHot, 1.0).unwrap();
        assert_eq!(h.values.data(), &[1.0, 0.0, 0.0]);
        let h = hard_assign(&distance_stack(vec![2.0, 1.0, 1.0], 3), HardMode::OneHot, 1.0).unwrap();
        assert_eq!(h.values.data(), &[0.0, 1.0, 0.0]);
        let h = hard_assign(&score_stack(vec![-1.0, 0.0, 0.5], 3), HardMode::Heaviside, 1.0).unwrap();
        assert_eq!(h.values.data(), &[0.0, 0.0, 1.0]);
        assert!(hard_assign(&score_stack(vec![1.0], 1), HardMode::OneHot, 1.0).is_err());
    }

    #[test]
    fn hard_backward_is_the_soft_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let d = distance_stack((0..12).map(|_| rng.random_range(0.0..3.0)).collect(), 4);
        let up = rand_tensor(&mut rng, &[1, 3, 4]);
        let a = hard_assign_backward(&d, HardMode::OneHot, 0.9, &up).unwrap();
        let b = soft_assign_softmax_backward(&d, 0.9, &up).unwrap();
        assert_eq!(a, b);
        let s = score_stack(d.values.data().to_vec(), 4);
        let a = hard_assign_backward(&s, HardMode::Heaviside, 0.9, &up).unwrap();
        let b = soft_assign_sigmoid_backward(&s, 0.9, &up).unwrap();
        assert_eq!(a, b);
    }
}

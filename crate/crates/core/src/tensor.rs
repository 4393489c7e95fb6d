//! Dense tensors, sliding-window extraction and convolution as a matrix product.
//!
//! Images are stored as `[rows, cols, channels]` in row-major order, so the
//! channel index runs fastest. Filter banks are `[k_rows, k_cols, channels, n_filters]`.
//! A flattened window (and a flattened kernel) uses the same channel-fastest,
//! then column, then row order as the image itself; a window that covers the
//! whole image therefore flattens to exactly the image's data.
//!
//! Output extents follow `out = floor((in + pad_total - k) / stride) + 1`.
//! [`Padding::Valid`] uses no padding. [`Padding::Same`] zero-pads so that
//! `out = ceil(in / stride)`, splitting the padding with the smaller half
//! before the data.

use crate::error::{shape_err, Result};
#[cfg(test)]
use crate::error::Error;

/// Dense, row-major array of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Wraps `data` with the given shape. Every extent must be positive and
    /// the data length must equal their product.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(shape_err!("extents must be positive, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(shape_err!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor. Panics on a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "extents must be positive, got {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Convenience constructor for a `rows x cols` matrix.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row count of a rank-2 tensor (the leading extent otherwise).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of values per leading index.
    pub fn cols(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    /// Slice of all values under leading index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Value at a multi-index. Panics when out of range.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| {
                assert!(i < n, "index {i} out of range {n}");
                acc * n + i
            })
    }

    /// Interprets a rank-3 tensor as an image `(rows, cols, channels)`.
    pub fn image_dims(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(shape_err!("expected a rows x cols x channels image, got {:?}", self.shape)),
        }
    }
}

/// Sequential left-to-right dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn squared_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `a + b` as an unevaluated sum `(s, e)` with `s = fl(a + b)`, exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    // 2^27 + 1
    let c = 134_217_729.0 * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

/// `a * b` as an unevaluated sum `(p, e)` with `p = fl(a * b)`, exactly
/// (barring overflow). Dekker's splitting, so no FMA is required.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, al * bl - (((p - ah * bh) - al * bh) - ah * bl))
}

/// Dot product in twice the working precision: returns `(hi, lo)` whose sum
/// approximates the exact result with a relative error of order ε² times
/// the condition number. Sequential left to right.
pub fn dot2(a: &[f64], b: &[f64]) -> (f64, f64) {
    debug_assert_eq!(a.len(), b.len());
    let (mut s, mut c) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (p, ep) = two_prod(*x, *y);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    two_sum(s, c)
}

/// `a (m x k) * b(n x k)^T`, returning an `m x n` row-major buffer.
pub fn matmul_nt(a: &[f64], m: usize, b: &[f64], n: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let ai = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out.push(dot(ai, &b[j * k..(j + 1) * k]));
        }
    }
    out
}

/// `a (m x k) * b (k x n)`, returning an `m x n` row-major buffer.
pub fn matmul_nn(a: &[f64], m: usize, b: &[f64], k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let oi = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &bpj) in oi.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bpj;
            }
        }
    }
    out
}

/// `a (k x m)^T * b (k x n)`, returning an `m x n` row-major buffer.
pub fn matmul_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let bp = &b[p * n..(p + 1) * n];
        for (i, &api) in a[p * m..(p + 1) * m].iter().enumerate() {
            if api == 0.0 {
                continue;
            }
            for (o, &bpj) in out[i * n..(i + 1) * n].iter_mut().zip(bp) {
                *o += api * bpj;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

/// Resolved geometry of a sliding-window operation. Pairs are `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_rows: usize,
    pub in_cols: usize,
    pub channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// Zero rows/cols inserted before the data.
    pub pad_before: (usize, usize),
    /// Total zero rows/cols inserted (before + after).
    pub pad_total: (usize, usize),
    pub out_rows: usize,
    pub out_cols: usize,
}

impl ConvGeometry {
    pub fn new(
        input: (usize, usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let (in_rows, in_cols, channels) = input;
        if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(shape_err!(
                "kernel {kernel:?} and stride {stride:?} must be positive"
            ));
        }
        let axis = |len: usize, k: usize, s: usize| -> Result<(usize, usize, usize)> {
            let total = match padding {
                Padding::Valid => 0,
                Padding::Same => {
                    let out = len.div_ceil(s);
                    ((out - 1) * s + k).saturating_sub(len)
                }
            };
            if k > len + total {
                return Err(shape_err!(
                    "kernel extent {k} exceeds padded input extent {}",
                    len + total
                ));
            }
            Ok((total / 2, total, (len + total - k) / s + 1))
        };
        let (pb_r, pt_r, out_rows) = axis(in_rows, kernel.0, stride.0)?;
        let (pb_c, pt_c, out_cols) = axis(in_cols, kernel.1, stride.1)?;
        Ok(Self {
            in_rows,
            in_cols,
            channels,
            kernel,
            stride,
            pad_before: (pb_r, pb_c),
            pad_total: (pt_r, pt_c),
            out_rows,
            out_cols,
        })
    }

    pub fn n_positions(&self) -> usize {
        self.out_rows * self.out_cols
    }

    pub fn window_len(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.channels
    }

    /// Top-left source coordinate of the window at output position `(i, j)`,
    /// in unpadded input coordinates (negative inside the padding).
    pub fn origin(&self, i: usize, j: usize) -> (isize, isize) {
        (
            (i * self.stride.0) as isize - self.pad_before.0 as isize,
            (j * self.stride.1) as isize - self.pad_before.1 as isize,
        )
    }

    /// Calls `f(window_offset, input_offset)` for every in-bounds element of the
    /// window at output position `(i, j)`.
    #[inline]
    fn for_each_tap(&self, i: usize, j: usize, mut f: impl FnMut(usize, usize)) {
        let (r0, c0) = self.origin(i, j);
        let (kr, kc) = self.kernel;
        let c = self.channels;
        for dr in 0..kr {
            let r = r0 + dr as isize;
            if r < 0 || r >= self.in_rows as isize {
                continue;
            }
            for dc in 0..kc {
                let col = c0 + dc as isize;
                if col < 0 || col >= self.in_cols as isize {
                    continue;
                }
                let w_off = (dr * kc + dc) * c;
                let x_off = (r as usize * self.in_cols + col as usize) * c;
                for ch in 0..c {
                    f(w_off + ch, x_off + ch);
                }
            }
        }
    }
}

/// One flattened window per output position, stacked as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMatrix {
    pub geometry: ConvGeometry,
    /// `n_positions x window_len`, row-major; row `i * out_cols + j` is the window at `(i, j)`.
    pub rows: Vec<f64>,
    /// Top-left source coordinate of every row.
    pub origin_map: Vec<(isize, isize)>,
}

impl WindowMatrix {
    pub fn n_positions(&self) -> usize {
        self.geometry.n_positions()
    }

    pub fn window_len(&self) -> usize {
        self.geometry.window_len()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let l = self.window_len();
        &self.rows[p * l..(p + 1) * l]
    }
}

fn check_image(x: &Tensor) -> Result<(usize, usize, usize)> {
    x.image_dims()
}

/// Extracts every sliding window of `x` (the im2col transform).
pub fn extract_windows(
    x: &Tensor,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<WindowMatrix> {
    let geometry = ConvGeometry::new(check_image(x)?, kernel, stride, padding)?;
    Ok(extract_with(x, geometry))
}

pub(crate) fn extract_with(x: &Tensor, geometry: ConvGeometry) -> WindowMatrix {
    let l = geometry.window_len();
    let mut rows = vec![0.0; geometry.n_positions() * l];
    let mut origin_map = Vec::with_capacity(geometry.n_positions());
    let data = x.data();
    for i in 0..geometry.out_rows {
        for j in 0..geometry.out_cols {
            let p = i * geometry.out_cols + j;
            let row = &mut rows[p * l..(p + 1) * l];
            geometry.for_each_tap(i, j, |w, s| row[w] = data[s]);
            origin_map.push(geometry.origin(i, j));
        }
    }
    WindowMatrix {
        geometry,
        rows,
        origin_map,
    }
}

/// Scatter-adds per-window gradients back onto the input grid (the adjoint of
/// [`extract_windows`]). `rows` is `n_positions x window_len`.
pub fn fold_windows(rows: &[f64], geometry: &ConvGeometry) -> Tensor {
    let l = geometry.window_len();
    assert_eq!(rows.len(), geometry.n_positions() * l, "window buffer size");
    let mut out = Tensor::zeros(&[geometry.in_rows, geometry.in_cols, geometry.channels]);
    let data = out.data_mut();
    for i in 0..geometry.out_rows {
        for j in 0..geometry.out_cols {
            let p = i * geometry.out_cols + j;
            let row = &rows[p * l..(p + 1) * l];
            geometry.for_each_tap(i, j, |w, s| data[s] += row[w]);
        }
    }
    out
}

/// Flattens a `[k_rows, k_cols, channels, n_filters]` bank into the
/// `n_filters x window_len` matrix of vectorized filters.
pub fn filter_matrix(bank: &Tensor) -> Result<Tensor> {
    let [kr, kc, c, nf] = bank.shape()[..] else {
        return Err(shape_err!(
            "filter bank must be k_rows x k_cols x channels x n_filters, got {:?}",
            bank.shape()
        ));
    };
    let l = kr * kc * c;
    let src = bank.data();
    let mut out = vec![0.0; nf * l];
    for w in 0..l {
        for f in 0..nf {
            out[f * l + w] = src[w * nf + f];
        }
    }
    Tensor::matrix(nf, l, out)
}

/// Inverse of [`filter_matrix`].
pub fn filter_bank_from_matrix(
    matrix: &[f64],
    kernel: (usize, usize),
    channels: usize,
    n_filters: usize,
) -> Tensor {
    let l = kernel.0 * kernel.1 * channels;
    assert_eq!(matrix.len(), l * n_filters);
    let mut out = vec![0.0; l * n_filters];
    for f in 0..n_filters {
        for w in 0..l {
            out[w * n_filters + f] = matrix[f * l + w];
        }
    }
    Tensor::new(vec![kernel.0, kernel.1, channels, n_filters], out)
        .expect("extents are positive")
}

/// Multi-channel cross-correlation with optional per-filter bias, evaluated as
/// the window matrix times the transposed filter matrix.
pub fn conv2d(
    x: &Tensor,
    bank: &Tensor,
    bias: Option<&[f64]>,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor> {
    let (_, _, c) = check_image(x)?;
    let kmat = filter_matrix(bank)?;
    let bs = bank.shape();
    if bs[2] != c {
        return Err(shape_err!(
            "filter bank has {} channels, input has {c}",
            bs[2]
        ));
    }
    let nf = bs[3];
    if let Some(b) = bias {
        if b.len() != nf {
            return Err(shape_err!("bias has {} entries for {nf} filters", b.len()));
        }
    }
    let windows = extract_windows(x, (bs[0], bs[1]), stride, padding)?;
    let g = windows.geometry;
    let mut out = matmul_nt(
        &windows.rows,
        g.n_positions(),
        kmat.data(),
        nf,
        g.window_len(),
    );
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(nf) {
            for (o, bl) in row.iter_mut().zip(b) {
                *o += bl;
            }
        }
    }
    Tensor::new(vec![g.out_rows, g.out_cols, nf], out)
}

/// Squared norm of every sliding window: the component-wise square of `x`
/// convolved with an all-ones kernel.
pub fn squared_window_norms(
    x: &Tensor,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor> {
    let (_, _, c) = check_image(x)?;
    let mut sq = x.clone();
    sq.data_mut().iter_mut().for_each(|v| *v *= *v);
    let ones = Tensor::filled(&[kernel.0, kernel.1, c, 1], 1.0);
    conv2d(&sq, &ones, None, stride, padding)
}

//! Binary checkpoint of a trained network.
//!
//! All integers are little-endian `u64` unless noted, all reals little-endian
//! IEEE-754 `f64`; tags are single bytes.
//!
//! ```text
//! magic        8 bytes  "PLAYERCK"
//! version      u32      1
//! input shape  3 x u64  rows, cols, channels
//! layer count  u64
//! layers       tag byte followed by the layer body
//!
//! tag 1, proto_conv
//!   k_rows, k_cols, channels, n      4 x u64
//!   stride rows, stride cols         2 x u64
//!   padding                          byte: 0 valid, 1 same
//!   has radii                        byte: 0 / 1
//!   kernels                          k_rows*k_cols*channels*n f64, layout [k_rows, k_cols, channels, n]
//!   radii_sq                         n f64 (only when present)
//!
//! tag 2, activation
//!   kind                             byte: 0 identity, 1 relu, 2 softmax, 3 sigmoid, 4 hard_onehot, 5 hard_heaviside
//!   sigma, sigma_decay               2 x f64
//!
//! tag 3, lvq_head
//!   loss                             byte: 0 glvq, 1 rslvq
//!   n prototypes, prototype dim      2 x u64
//!   labels                           n x u64
//!   prototypes                       n*dim f64, row-major
//!   dissimilarity                    byte: 0 euclidean, 1 omega, 2 projection, 3 nonlinear_projection
//!   omega (kinds 1-3)                rows, cols u64 then rows*cols f64, row-major
//!   bias, phi (kind 3)               rows f64, then byte: 0 identity, 1 relu, 2 sigmoid
//! ```

use std::path::Path;

use protolayer::{
    Activation, ActivationKind, ActivationLayer, Dissimilarity, KernelPrototypeBank, Layer, LossKind,
    LvqHead, Network, Padding, PrototypeSet, Tensor,
};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"PLAYERCK";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    for d in net.input_shape() {
        w.u64(d);
    }
    w.u64(net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::ProtoConv(bank) => {
                w.u8(1);
                for &d in bank.kernels.shape() {
                    w.u64(d);
                }
                w.u64(bank.stride.0);
                w.u64(bank.stride.1);
                w.u8(match bank.padding {
                    Padding::Valid => 0,
                    Padding::Same => 1,
                });
                w.u8(bank.radii_sq.is_some() as u8);
                w.f64s(bank.kernels.data());
                if let Some(r) = &bank.radii_sq {
                    w.f64s(r);
                }
            }
            Layer::Activation(a) => {
                w.u8(2);
                w.u8(match a.kind {
                    ActivationKind::Identity => 0,
                    ActivationKind::Relu => 1,
                    ActivationKind::Softmax => 2,
                    ActivationKind::Sigmoid => 3,
                    ActivationKind::HardOneHot => 4,
                    ActivationKind::HardHeaviside => 5,
                });
                w.f64s(&[a.sigma, a.sigma_decay]);
            }
            Layer::LvqHead(head) => {
                w.u8(3);
                w.u8(match head.loss {
                    LossKind::Glvq => 0,
                    LossKind::Rslvq => 1,
                });
                w.u64(head.prototypes.len());
                w.u64(head.prototypes.dim());
                for &l in head.prototypes.labels().expect("heads are labeled") {
                    w.u64(l);
                }
                w.f64s(head.prototypes.weights().data());
                let kind = match &head.dissimilarity {
                    Dissimilarity::Euclidean => 0,
                    Dissimilarity::Omega { .. } => 1,
                    Dissimilarity::Projection { .. } => 2,
                    Dissimilarity::NonlinearProjection { .. } => 3,
                };
                w.u8(kind);
                if let Some(o) = head.dissimilarity.omega() {
                    w.u64(o.rows());
                    w.u64(o.cols());
                    w.f64s(o.data());
                }
                if let Dissimilarity::NonlinearProjection { bias, activation, .. } = &head.dissimilarity {
                    w.f64s(bias);
                    w.u8(match activation {
                        Activation::Identity => 0,
                        Activation::Relu => 1,
                        Activation::Sigmoid => 2,
                    });
                }
            }
        }
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> CliResult<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CliError::format(format!(
                "checkpoint truncated reading {what} at byte offset {}",
                self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> CliResult<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u64(&mut self, what: &str) -> CliResult<usize> {
        let b = self.take(8, what)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| CliError::format(format!("{what} {v} does not fit in memory")))
    }
    fn f64s(&mut self, n: usize, what: &str) -> CliResult<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| CliError::format(format!("{what} count {n} overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn bad_tag(&self, what: &str, v: u8) -> CliError {
        CliError::format(format!("unknown {what} tag {v} at byte offset {}", self.pos - 1))
    }
}

fn fmt_err(e: protolayer::Error) -> CliError {
    CliError::format(format!("inconsistent checkpoint: {e}"))
}

pub fn decode(bytes: &[u8]) -> CliResult<Network> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(CliError::format("not a protolayer checkpoint (bad magic at byte offset 0)"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CliError::format(format!("unsupported checkpoint version {version} at byte offset 8")));
    }
    let input_shape = [r.u64("input shape")?, r.u64("input shape")?, r.u64("input shape")?];
    let n_layers = r.u64("layer count")?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let layer = match r.u8("layer tag")? {
            1 => {
                let shape = [r.u64("kernel shape")?, r.u64("kernel shape")?, r.u64("kernel shape")?, r.u64("kernel shape")?];
                let stride = (r.u64("stride")?, r.u64("stride")?);
                let padding = match r.u8("padding")? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    v => return Err(r.bad_tag("padding", v)),
                };
                let has_radii = match r.u8("radii flag")? {
                    0 => false,
                    1 => true,
                    v => return Err(r.bad_tag("radii flag", v)),
                };
                let n: usize = shape.iter().product();
                let kernels = Tensor::new(shape.to_vec(), r.f64s(n, "kernels")?).map_err(fmt_err)?;
                let radii = if has_radii { Some(r.f64s(shape[3], "radii")?) } else { None };
                Layer::ProtoConv(KernelPrototypeBank::new(kernels, radii, stride, padding).map_err(fmt_err)?)
            }
            2 => {
                let kind = match r.u8("activation kind")? {
                    0 => ActivationKind::Identity,
                    1 => ActivationKind::Relu,
                    2 => ActivationKind::Softmax,
                    3 => ActivationKind::Sigmoid,
                    4 => ActivationKind::HardOneHot,
                    5 => ActivationKind::HardHeaviside,
                    v => return Err(r.bad_tag("activation", v)),
                };
                let s = r.f64s(2, "sigma")?;
                Layer::Activation(ActivationLayer::new(kind, s[0], s[1]).map_err(fmt_err)?)
            }
            3 => {
                let loss = match r.u8("loss")? {
                    0 => LossKind::Glvq,
                    1 => LossKind::Rslvq,
                    v => return Err(r.bad_tag("loss", v)),
                };
                let n = r.u64("prototype count")?;
                let dim = r.u64("prototype dimension")?;
                let labels = (0..n).map(|_| r.u64("label")).collect::<CliResult<Vec<_>>>()?;
                let w = r.f64s(n.saturating_mul(dim), "prototypes")?;
                let prototypes =
                    PrototypeSet::new(Tensor::matrix(n, dim, w).map_err(fmt_err)?, Some(labels)).map_err(fmt_err)?;
                let kind = r.u8("dissimilarity")?;
                if kind > 3 {
                    return Err(r.bad_tag("dissimilarity", kind));
                }
                let omega = if kind > 0 {
                    let rows = r.u64("omega rows")?;
                    let cols = r.u64("omega cols")?;
                    Some(Tensor::matrix(rows, cols, r.f64s(rows.saturating_mul(cols), "omega")?).map_err(fmt_err)?)
                } else {
                    None
                };
                let dissimilarity = match (kind, omega) {
                    (0, _) => Dissimilarity::Euclidean,
                    (1, Some(omega)) => Dissimilarity::Omega { omega },
                    (2, Some(omega)) => Dissimilarity::Projection { omega },
                    (_, Some(omega)) => {
                        let bias = r.f64s(omega.rows(), "bias")?;
                        let activation = match r.u8("phi")? {
                            0 => Activation::Identity,
                            1 => Activation::Relu,
                            2 => Activation::Sigmoid,
                            v => return Err(r.bad_tag("phi", v)),
                        };
                        Dissimilarity::NonlinearProjection { omega, bias, activation }
                    }
                    _ => unreachable!("omega read for kinds 1-3"),
                };
                Layer::LvqHead(LvqHead {
                    prototypes,
                    dissimilarity,
                    loss,
                })
            }
            v => return Err(r.bad_tag("layer", v)),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(CliError::format(format!("trailing bytes after byte offset {}", r.pos)));
    }
    Network::new(input_shape, layers).map_err(fmt_err)
}

pub fn save(path: &Path, net: &Network) -> CliResult<()> {
    std::fs::write(path, encode(net)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> CliResult<Network> {
    decode(&std::fs::read(path).map_err(|e| CliError::io(path, e))?)
}

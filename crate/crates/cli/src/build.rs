//! Assembles and initializes a network from the model config and the
//! training data. Every data-driven initializer sees the signal the layer
//! will actually receive, i.e. the training samples pushed through the
//! already-initialized layers before it.

use protolayer::network::Signal;
use protolayer::tensor::{extract_windows, filter_bank_from_matrix};
use protolayer::train::{init_from_samples, init_kmeans};
use protolayer::{
    Activation, ActivationKind, ActivationLayer, Dissimilarity, KernelPrototypeBank, Layer, LossKind,
    LvqHead, Network, PrototypeSet, Tensor,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{
    ActivationName, DissimilarityName, InitName, LayerConfig, ScalarActivationName,
};
use crate::data::Dataset;
use crate::error::{CliError, CliResult};

/// Training samples used for data-driven initialization.
const INIT_SAMPLES: usize = 2000;
/// Windows pooled for kernel-prototype initialization.
const INIT_WINDOWS: usize = 20_000;
const KMEANS_ITERS: usize = 50;

fn activation_kind(a: ActivationName) -> ActivationKind {
    match a {
        ActivationName::Identity => ActivationKind::Identity,
        ActivationName::Relu => ActivationKind::Relu,
        ActivationName::Softmax => ActivationKind::Softmax,
        ActivationName::Sigmoid => ActivationKind::Sigmoid,
        ActivationName::HardOnehot => ActivationKind::HardOneHot,
        ActivationName::HardHeaviside => ActivationKind::HardHeaviside,
    }
}

fn layer_err(i: usize, what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("layer {i} ({what}): {e}"))
}

/// Builds the configured network with parameters initialized from `train`.
pub fn build_network(
    layers: &[LayerConfig],
    loss: LossKind,
    train: &Dataset,
    seed: u64,
) -> CliResult<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(INIT_SAMPLES);
    let mut signals: Vec<Signal> = idx.iter().map(|&i| Signal::Raw(train.sample(i))).collect();
    let targets: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
    let n_classes = train.n_classes();

    let mut built = Vec::with_capacity(layers.len());
    let mut shape = train.shape;
    for (i, cfg) in layers.iter().enumerate() {
        let layer = match cfg {
            LayerConfig::ProtoConv {
                kernels,
                kernel_size,
                stride,
                padding,
                radii,
                init_radius_sq,
                init,
            } => {
                let err = |e: &dyn std::fmt::Display| layer_err(i, "proto_conv", e);
                let ext = (kernel_size[0], kernel_size[1]);
                let stride = (stride[0], stride[1]);
                let padding = (*padding).into();
                // Pool windows from the current signals.
                let mut pool = Vec::new();
                let mut window_len = 0;
                for s in &signals {
                    let w = extract_windows(s.values(), ext, stride, padding).map_err(|e| err(&e))?;
                    window_len = w.window_len();
                    pool.push(w);
                }
                let per_sample = pool.first().map_or(0, |w| w.n_positions());
                let mut picks: Vec<(usize, usize)> = (0..pool.len())
                    .flat_map(|s| (0..per_sample).map(move |p| (s, p)))
                    .collect();
                picks.shuffle(&mut rng);
                picks.truncate(INIT_WINDOWS);
                let mut rows = Vec::with_capacity(picks.len() * window_len);
                for &(s, p) in &picks {
                    rows.extend_from_slice(pool[s].row(p));
                }
                let windows = Tensor::matrix(picks.len(), window_len, rows).map_err(|e| err(&e))?;
                let centers = match init {
                    InitName::Samples => init_from_samples(&windows, None, *kernels, rng.random())?,
                    InitName::Kmeans => init_kmeans(&windows, *kernels, KMEANS_ITERS, rng.random())?,
                };
                let bank_tensor =
                    filter_bank_from_matrix(centers.weights().data(), ext, shape[2], *kernels);
                let radii_sq = if *radii {
                    let r = match init_radius_sq {
                        Some(r) => *r,
                        None => median_nearest(&windows, &centers),
                    };
                    Some(vec![r; *kernels])
                } else {
                    None
                };
                let bank = KernelPrototypeBank::new(bank_tensor, radii_sq, stride, padding).map_err(|e| err(&e))?;
                let g = bank.geometry((shape[0], shape[1], shape[2])).map_err(|e| err(&e))?;
                shape = [g.out_rows, g.out_cols, *kernels];
                for s in &mut signals {
                    *s = Signal::Stack(bank.forward(s.values()).map_err(|e| err(&e))?);
                }
                Layer::ProtoConv(bank)
            }
            LayerConfig::Activation {
                kind,
                sigma,
                sigma_decay,
            } => {
                let a = ActivationLayer::new(activation_kind(*kind), *sigma, *sigma_decay)
                    .map_err(|e| layer_err(i, "activation", e))?;
                for s in &mut signals {
                    let Signal::Stack(stack) = s else {
                        return Err(layer_err(i, "activation", "needs a dissimilarity stack as input"));
                    };
                    *s = Signal::Stack(a.forward(stack).map_err(|e| layer_err(i, "activation", e))?);
                }
                Layer::Activation(a)
            }
            LayerConfig::LvqHead {
                prototypes_per_class,
                dissimilarity,
                projection_dim,
                activation,
                init,
            } => {
                let err = |e: &dyn std::fmt::Display| layer_err(i, "lvq_head", e);
                let n: usize = shape.iter().product();
                let gaussian = |rng: &mut ChaCha8Rng, m: usize| {
                    let scale = 1.0 / (n as f64).sqrt();
                    let v = (0..m * n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                    Tensor::matrix(m, n, v)
                };
                let need_m = || projection_dim.ok_or_else(|| err(&"projection_dim is required"));
                let spec = match dissimilarity {
                    DissimilarityName::Euclidean => Dissimilarity::Euclidean,
                    DissimilarityName::Omega => {
                        let m = projection_dim.unwrap_or(n);
                        let omega = if m == n {
                            let mut eye = Tensor::zeros(&[n, n]);
                            (0..n).for_each(|k| eye.row_mut(k)[k] = 1.0);
                            eye
                        } else {
                            gaussian(&mut rng, m).map_err(|e| err(&e))?
                        };
                        Dissimilarity::Omega { omega }
                    }
                    DissimilarityName::Projection => Dissimilarity::Projection {
                        omega: gaussian(&mut rng, need_m()?).map_err(|e| err(&e))?,
                    },
                    DissimilarityName::NonlinearProjection => {
                        let m = need_m()?;
                        Dissimilarity::NonlinearProjection {
                            omega: gaussian(&mut rng, m).map_err(|e| err(&e))?,
                            bias: vec![0.0; m],
                            activation: match activation.unwrap_or(ScalarActivationName::Sigmoid) {
                                ScalarActivationName::Identity => Activation::Identity,
                                ScalarActivationName::Relu => Activation::Relu,
                                ScalarActivationName::Sigmoid => Activation::Sigmoid,
                            },
                        }
                    }
                };
                if activation.is_some() && !matches!(spec, Dissimilarity::NonlinearProjection { .. }) {
                    return Err(err(&"activation only applies to nonlinear_projection"));
                }
                // Prototypes live where the measure compares them.
                let in_proto_space = |x: &[f64]| match &spec {
                    Dissimilarity::Euclidean | Dissimilarity::Omega { .. } => x.to_vec(),
                    _ => spec.embed(x),
                };
                let dim = spec.prototype_dim(n).map_err(|e| err(&e))?;
                let mut feats = Vec::with_capacity(signals.len() * dim);
                for s in &signals {
                    feats.extend(in_proto_space(s.values().data()));
                }
                let feats = Tensor::matrix(signals.len(), dim, feats).map_err(|e| err(&e))?;
                let prototypes = init_head(&feats, &targets, n_classes, *prototypes_per_class, *init, &mut rng)
                    .map_err(|e| err(&e.message))?;
                Layer::LvqHead(LvqHead {
                    prototypes,
                    dissimilarity: spec,
                    loss,
                })
            }
        };
        built.push(layer);
    }
    Network::new(train.shape, built).map_err(CliError::from)
}

fn init_head(
    feats: &Tensor,
    targets: &[usize],
    n_classes: usize,
    per_class: usize,
    init: InitName,
    rng: &mut ChaCha8Rng,
) -> CliResult<PrototypeSet> {
    if (0..n_classes).any(|c| !targets.contains(&c)) {
        return Err(CliError::new("data", "initialization sample misses a class"));
    }
    match init {
        InitName::Samples => Ok(init_from_samples(feats, Some(targets), per_class, rng.random())?),
        InitName::Kmeans => {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for c in 0..n_classes {
                let members: Vec<usize> = (0..targets.len()).filter(|&i| targets[i] == c).collect();
                let mut v = Vec::with_capacity(members.len() * feats.cols());
                for &i in &members {
                    v.extend_from_slice(feats.row(i));
                }
                let class_data = Tensor::matrix(members.len(), feats.cols(), v)?;
                let centers = init_kmeans(&class_data, per_class, KMEANS_ITERS, rng.random())?;
                for k in 0..per_class {
                    rows.push(centers.row(k).to_vec());
                    labels.push(c);
                }
            }
            Ok(PrototypeSet::from_rows(&rows, Some(labels))?)
        }
    }
}

fn median_nearest(windows: &Tensor, centers: &PrototypeSet) -> f64 {
    let spec = Dissimilarity::Euclidean;
    let mut d: Vec<f64> = (0..windows.rows())
        .map(|i| {
            protolayer::response_efficient(windows.row(i), centers, &spec)
                .expect("matching dimensions")
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d.get(d.len() / 2).copied().unwrap_or(1.0).max(1e-6)
}

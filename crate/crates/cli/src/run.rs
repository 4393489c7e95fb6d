//! Training and evaluation runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use protolayer::train::Adam;
use protolayer::{
    calibrate_nball_radii, glvq_loss, rslvq_loss, LossKind, Network, Prediction, RejectPolicy,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::build::build_network;
use crate::checkpoint;
use crate::config::{DataConfig, RejectConfig, RunConfig};
use crate::data::{gen_blobs, load_idx, Dataset};
use crate::error::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    /// Accuracy over the accepted samples (0 when everything is rejected).
    pub accuracy: f64,
    pub reject_rate: f64,
    pub wall_time_s: f64,
}

/// Result of evaluating a network on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub reject_rate: f64,
    /// `confusion[true][predicted]`, with a last column for rejections.
    pub confusion: Vec<Vec<usize>>,
}

/// Train and test splits described by the data config.
pub fn load_data(cfg: &RunConfig) -> CliResult<(Dataset, Dataset)> {
    match &cfg.data {
        DataConfig::SyntheticBlobs {
            n_classes,
            n_per_class,
            dim,
            spread,
            test_fraction,
        } => {
            let blobs = gen_blobs(*n_classes, *n_per_class, *dim, *spread, cfg.seed)?;
            let n_test = (blobs.data.len() as f64 * test_fraction).round() as usize;
            let (train, test) = blobs.data.split(n_test, cfg.seed ^ 0x5eed);
            Ok((train, test))
        }
        DataConfig::IdxImages {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
        } => {
            let train = load_idx(train_images, train_labels, *train_limit, cfg.seed)?;
            let test = load_idx(test_images, test_labels, *test_limit, cfg.seed.wrapping_add(1))?;
            if train.shape != test.shape {
                return Err(CliError::format("train and test images differ in shape"));
            }
            Ok((train, test))
        }
    }
}

fn example_loss(kind: LossKind, d: &[f64], labels: &[usize], y: usize) -> CliResult<f64> {
    Ok(match kind {
        LossKind::Glvq => glvq_loss(d, labels, y)?,
        LossKind::Rslvq => rslvq_loss(d, labels, y)?,
    })
}

/// Mean loss, accuracy on accepted samples, reject rate and confusion counts.
pub fn evaluate(net: &Network, data: &Dataset, policy: &RejectPolicy) -> CliResult<Evaluation> {
    if data.shape != net.input_shape() {
        return Err(CliError::format(format!(
            "checkpoint expects inputs of shape {:?}, the dataset has {:?}",
            net.input_shape(),
            data.shape
        )));
    }
    let head = net.head();
    let labels = head.prototypes.labels().expect("heads are labeled");
    let n_classes = head.prototypes.n_classes().max(data.n_classes());
    let prepared = net.prepare()?;
    let mut confusion = vec![vec![0; n_classes + 1]; n_classes];
    let (mut loss, mut correct, mut rejected) = (0.0, 0usize, 0usize);
    for i in 0..data.len() {
        let y = data.labels[i];
        let decision = net.decide(&prepared, &data.sample(i), policy)?;
        loss += example_loss(head.loss, &decision.distances, labels, y)?;
        match decision.predicted {
            Prediction::Class(c) => {
                confusion[y][c] += 1;
                correct += (c == y) as usize;
            }
            Prediction::Reject => {
                confusion[y][n_classes] += 1;
                rejected += 1;
            }
        }
    }
    let n = data.len().max(1) as f64;
    let accepted = data.len() - rejected;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: if accepted == 0 { 0.0 } else { correct as f64 / accepted as f64 },
        reject_rate: rejected as f64 / n,
        confusion,
    })
}

/// Head responses of every sample.
pub fn responses(net: &Network, data: &Dataset) -> CliResult<Vec<Vec<f64>>> {
    let prepared = net.prepare()?;
    (0..data.len())
        .map(|i| Ok(net.forward(&prepared, &data.sample(i))?.distances))
        .collect()
}

/// Turns the configured reject policy into a concrete one, calibrating
/// n-ball radii on `train` when a quantile is given.
pub fn resolve_reject(cfg: &RejectConfig, net: &Network, train: &Dataset) -> CliResult<RejectPolicy> {
    Ok(match cfg {
        RejectConfig::None => RejectPolicy::None,
        RejectConfig::CostRatio { lambda_e, lambda_r } => RejectPolicy::CostRatio {
            lambda_e: *lambda_e,
            lambda_r: *lambda_r,
        },
        RejectConfig::Nball { radii_sq: Some(r), .. } => RejectPolicy::NBall { radii_sq: r.clone() },
        RejectConfig::Nball { quantile, .. } => {
            let q = quantile.expect("validated: quantile or radii");
            let labels = net.head().prototypes.labels().expect("heads are labeled");
            let radii_sq = calibrate_nball_radii(&responses(net, train)?, &train.labels, labels, q)?;
            RejectPolicy::NBall { radii_sq }
        }
    })
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub metrics: Vec<MetricsRecord>,
}

fn record(epoch: usize, split: &str, e: &Evaluation, start: Instant) -> MetricsRecord {
    MetricsRecord {
        epoch,
        split: split.to_string(),
        loss: e.loss,
        accuracy: e.accuracy,
        reject_rate: e.reject_rate,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn log_metrics(out: &mut Vec<MetricsRecord>, net: &Network, cfg: &RunConfig, train: &Dataset, test: &Dataset, epoch: usize, start: Instant) -> CliResult<()> {
    let policy = resolve_reject(&cfg.reject, net, train)?;
    out.push(record(epoch, "train", &evaluate(net, train, &policy)?, start));
    if !test.is_empty() {
        out.push(record(epoch, "test", &evaluate(net, test, &policy)?, start));
    }
    Ok(())
}

/// Initializes and trains the configured network in memory. Epoch 0 rows
/// describe the initialization.
pub fn train(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> CliResult<TrainOutcome> {
    let start = Instant::now();
    let mut net = build_network(&cfg.model.layers, cfg.loss.into(), train, cfg.seed)?;
    let layout: Vec<(usize, bool)> = net.param_layout().iter().map(|p| (p.len, p.non_negative)).collect();
    let mut adam = Adam::new(cfg.optimizer.into(), &layout)?;
    let schedule = cfg.neural_gas.map(|ng| ng.schedule()).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::new();
    log_metrics(&mut metrics, &net, cfg, train, test, 0, start)?;
    for epoch in 0..cfg.epochs {
        let lambda = schedule.map(|s| s.lambda_at(epoch));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = net.zero_grads();
            {
                let prepared = net.prepare()?;
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let loss = net.accumulate(&prepared, &train.sample(i), train.labels[i], scale, lambda, &mut grads)?;
                    if !loss.is_finite() {
                        let last = net.layers().len() - 1;
                        return Err(CliError::new(
                            "numeric",
                            format!("non-finite loss at layer {last} (lvq_head), epoch {}", epoch + 1),
                        ));
                    }
                }
            }
            if cfg.regularization.l1_radii > 0.0 {
                net.l1_radii_penalty(cfg.regularization.l1_radii, &mut grads)?;
            }
            let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam.step(&mut net.params_mut(), &g)?;
            net.clamp_radii();
        }
        net.decay_sigmas();
        log_metrics(&mut metrics, &net, cfg, train, test, epoch + 1, start)?;
    }
    Ok(TrainOutcome { network: net, metrics })
}

pub fn write_metrics(path: &Path, metrics: &[MetricsRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    for m in metrics {
        w.serialize(m).map_err(|e| CliError::new("io", e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::format(format!("{}: {e}", path.display())))
}

/// Files written by [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub outcome: TrainOutcome,
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainArtifacts> {
    let (train_set, test_set) = load_data(cfg)?;
    let outcome = train(cfg, &train_set, &test_set)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    let metrics = cfg.output_dir.join(METRICS_FILE);
    let checkpoint = cfg.output_dir.join(CHECKPOINT_FILE);
    write_metrics(&metrics, &outcome.metrics)?;
    checkpoint::save(&checkpoint, &outcome.network)?;
    Ok(TrainArtifacts {
        metrics,
        checkpoint,
        outcome,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
}

/// Evaluates a checkpoint on a split of the config's dataset and writes a
/// plain-text report next to the checkpoint unless `report` says otherwise.
pub fn cmd_eval(
    checkpoint_path: &Path,
    cfg: &RunConfig,
    split: Split,
    report: Option<&Path>,
) -> CliResult<(Evaluation, PathBuf)> {
    let net = checkpoint::load(checkpoint_path)?;
    let (train_set, test_set) = load_data(cfg)?;
    let policy = resolve_reject(&cfg.reject, &net, &train_set)?;
    let data = match split {
        Split::Train => &train_set,
        Split::Test => &test_set,
    };
    let eval = evaluate(&net, data, &policy)?;
    let report_path = match report {
        Some(p) => p.to_path_buf(),
        None => checkpoint_path.with_file_name(format!(
            "eval_{}.txt",
            match split {
                Split::Train => "train",
                Split::Test => "test",
            }
        )),
    };
    std::fs::write(&report_path, format_report(&eval, data.len())).map_err(|e| CliError::io(&report_path, e))?;
    Ok((eval, report_path))
}

pub fn format_report(e: &Evaluation, n: usize) -> String {
    let mut s = format!(
        "samples {n}\nloss {}\naccuracy {}\nreject_rate {}\nconfusion (rows: true class, columns: predicted class, last: rejected)\n",
        e.loss, e.accuracy, e.reject_rate
    );
    for row in &e.confusion {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

//! Gradient checks, the response benchmark and prototype export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use protolayer::network::OpCheck;
use protolayer::train::GRADCHECK_STEP;
use protolayer::{
    response_naive, Dissimilarity, Layer, Network, PreparedPrototypes, PrototypeSet, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alloc::{is_installed, measure_peak};
use crate::build::build_network;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pgm;
use crate::run::load_data;

/// Coordinates probed per parameter tensor and check point.
pub const GRADCHECK_COORDS: usize = 40;

/// Worst result per operation over all check points, in first-seen order.
pub fn worst_per_op(checks: impl IntoIterator<Item = OpCheck>) -> Vec<OpCheck> {
    let mut out: Vec<OpCheck> = Vec::new();
    for c in checks {
        match out.iter_mut().find(|o| o.op == c.op) {
            Some(o) if c.report.max_relative_error > o.report.max_relative_error => *o = c,
            Some(_) => {}
            None => out.push(c),
        }
    }
    out
}

/// One line per operation; fails with class `gradcheck` if any exceeds `tol`.
pub fn gradcheck_report(worst: &[OpCheck], tol: f64) -> CliResult<String> {
    let mut report = String::new();
    let mut failed = Vec::new();
    for c in worst {
        let ok = c.report.max_relative_error < tol;
        if ok {
            let _ = writeln!(report, "pass {c}");
        } else {
            let resolved = if c.report.oracle_resolves(tol) { "resolved" } else { "unresolved" };
            let _ = writeln!(report, "FAIL {c} (oracle spread {:.1e}, {resolved})", c.report.oracle_spread);
        }
        if !ok {
            failed.push(c.op.clone());
        }
    }
    if failed.is_empty() {
        Ok(report)
    } else {
        print!("{report}");
        Err(CliError::new(
            "gradcheck",
            format!("{} operation(s) above tolerance {tol:e}: {}", failed.len(), failed.join(", ")),
        ))
    }
}

/// Checks every differentiable operation of `net` at `points` training
/// samples drawn with `seed`.
pub fn gradcheck_network(
    net: &Network,
    samples: &[(Tensor, usize)],
    points: usize,
    seed: u64,
) -> CliResult<Vec<OpCheck>> {
    if samples.is_empty() {
        return Err(CliError::usage("gradcheck needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::new();
    for p in 0..points {
        let (x, y) = &samples[rng.random_range(0..samples.len())];
        all.extend(net.gradcheck_ops(x, *y, seed.wrapping_add(p as u64), GRADCHECK_STEP, GRADCHECK_COORDS)?);
    }
    Ok(worst_per_op(all))
}

/// Builds the configured model (initialized, untrained) and checks it.
pub fn cmd_gradcheck(cfg: &RunConfig, tol: f64, points: usize) -> CliResult<String> {
    if !(tol > 0.0) || points == 0 {
        return Err(CliError::usage("--tol must be positive and --points at least 1"));
    }
    let (train, _) = load_data(cfg)?;
    let net = build_network(&cfg.model.layers, cfg.loss.into(), &train, cfg.seed)?;
    let samples: Vec<(Tensor, usize)> = (0..train.len().min(1000)).map(|i| (train.sample(i), train.labels[i])).collect();
    let worst = gradcheck_network(&net, &samples, points, cfg.seed)?;
    gradcheck_report(&worst, tol)
}

/// Agreement tolerance between the two response paths.
pub const BENCH_AGREEMENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dim: usize,
    pub n_protos: usize,
    pub max_rel_diff: f64,
    pub naive_peak_bytes: usize,
    pub efficient_peak_bytes: usize,
    pub naive_time_s: f64,
    pub efficient_time_s: f64,
}

/// Peak transient allocation and best-of-`repeats` wall time of the naive
/// and the efficient Euclidean response, for every `(dim, n_protos)` pair.
/// Needs [`crate::alloc::TrackingAllocator`] as the global allocator.
pub fn cmd_bench(dims: &[usize], protos: &[usize], repeats: usize, seed: u64) -> CliResult<Vec<BenchRow>> {
    if dims.is_empty() || protos.is_empty() || repeats == 0 || dims.iter().chain(protos).any(|&v| v == 0) {
        return Err(CliError::usage("bench needs positive --dims, --protos and --repeats"));
    }
    if !is_installed() {
        return Err(CliError::new("bench", "the tracking allocator is not installed"));
    }
    let spec = Dissimilarity::Euclidean;
    let mut rows = Vec::new();
    for &dim in dims {
        for &nw in protos {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((dim as u64) << 32) ^ nw as u64);
            let w: Vec<f64> = (0..nw * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let set = PrototypeSet::new(Tensor::matrix(nw, dim, w)?, None)?;
            let prepared = PreparedPrototypes::new(&set, &spec, dim)?;
            let a = response_naive(&x, &set, &spec)?;
            let b = prepared.response(&x)?;
            let max_rel_diff = a
                .iter()
                .zip(&b)
                .map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(1.0))
                .fold(0.0, f64::max);
            if !(max_rel_diff <= BENCH_AGREEMENT) {
                return Err(CliError::new(
                    "numeric",
                    format!("responses disagree at dim {dim}, {nw} prototypes: {max_rel_diff:e}"),
                ));
            }
            let (_, naive_peak_bytes) = measure_peak(|| response_naive(&x, &set, &spec));
            let (_, efficient_peak_bytes) = measure_peak(|| prepared.response(&x));
            let time = |f: &dyn Fn() -> Vec<f64>| {
                (0..repeats)
                    .map(|_| {
                        let t = Instant::now();
                        std::hint::black_box(f());
                        t.elapsed().as_secs_f64()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let naive_time_s = time(&|| response_naive(&x, &set, &spec).expect("checked above"));
            let efficient_time_s = time(&|| prepared.response(&x).expect("checked above"));
            rows.push(BenchRow {
                dim,
                n_protos: nw,
                max_rel_diff,
                naive_peak_bytes,
                efficient_peak_bytes,
                naive_time_s,
                efficient_time_s,
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::new("io", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::new("io", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// A prototype ready for export: a file stem and its values.
struct Exported {
    stem: String,
    values: Vec<f64>,
}

/// Prototypes of the first layer that lives in single-channel image space:
/// a head directly on the input (Euclidean or Omega), else the first
/// kernel-prototype convolution on the input. Returns `(height, width)`.
fn image_prototypes(net: &Network) -> Option<((usize, usize), Vec<Exported>)> {
    let [rows, cols, ch] = net.input_shape();
    match net.layers().first()? {
        Layer::LvqHead(head)
            if ch == 1
                && matches!(head.dissimilarity, Dissimilarity::Euclidean | Dissimilarity::Omega { .. }) =>
        {
            let labels = head.prototypes.labels()?;
            let out = (0..head.prototypes.len())
                .map(|k| Exported {
                    stem: format!("proto_{k:03}_class_{}", labels[k]),
                    values: head.prototypes.row(k).to_vec(),
                })
                .collect();
            Some(((rows, cols), out))
        }
        Layer::ProtoConv(bank) if bank.channels() == 1 => {
            let (kr, kc) = bank.kernel_extent();
            let n = bank.len();
            let data = bank.kernels.data();
            let out = (0..n)
                .map(|k| Exported {
                    stem: format!("kernel_{k:03}"),
                    values: (0..kr * kc).map(|p| data[p * n + k]).collect(),
                })
                .collect();
            Some(((kr, kc), out))
        }
        _ => None,
    }
}

/// Writes one P5 graymap per prototype, or with `csv` a `prototypes.csv` of
/// the raw head prototypes (`index,label,values...`).
pub fn cmd_export_protos(checkpoint_path: &Path, out_dir: &Path, csv: bool) -> CliResult<Vec<PathBuf>> {
    let net = crate::checkpoint::load(checkpoint_path)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    if csv {
        let head = net.head();
        let labels = head.prototypes.labels().expect("heads are labeled");
        let path = out_dir.join("prototypes.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        for (k, label) in labels.iter().enumerate() {
            let mut rec = vec![k.to_string(), label.to_string()];
            rec.extend(head.prototypes.row(k).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(|e| CliError::new("io", e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        return Ok(vec![path]);
    }
    let ((h, w), protos) = image_prototypes(&net).ok_or_else(|| {
        CliError::usage(
            "prototypes are not single-channel images at the input; rerun with --csv for a raw export",
        )
    })?;
    let mut written = Vec::new();
    for p in protos {
        let path = out_dir.join(format!("{}.pgm", p.stem));
        pgm::write(&path, w, h, &pgm::normalize(&p.values))?;
        written.push(path);
    }
    Ok(written)
}


use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dissimilarity::PrototypeSet;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{dot, squared_norm, Tensor};

fn check_batch(data: &Tensor) -> Result<()> {
    if data.rank() != 2 {
        return Err(shape_err!("data must be a samples x features matrix, got {:?}", data.shape()));
    }
    Ok(())
}

/// Prototypes copied from randomly drawn samples: `per_class` per class when
/// labels are given, `per_class` in total otherwise.
pub fn init_from_samples(
    data: &Tensor,
    labels: Option<&[usize]>,
    per_class: usize,
    seed: u64,
) -> Result<PrototypeSet> {
    check_batch(data)?;
    if per_class == 0 {
        return Err(Error::Argument("need at least one prototype per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (picked, proto_labels) = match labels {
        None => {
            if data.rows() < per_class {
                return Err(Error::Data(format!(
                    "{} samples cannot seed {per_class} prototypes",
                    data.rows()
                )));
            }
            let mut idx: Vec<usize> = (0..data.rows()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(per_class);
            (idx, None)
        }
        Some(labels) => {
            if labels.len() != data.rows() {
                return Err(shape_err!("{} labels for {} samples", labels.len(), data.rows()));
            }
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &c) in labels.iter().enumerate() {
                by_class.entry(c).or_default().push(i);
            }
            let n_classes = by_class.keys().next_back().map_or(0, |c| c + 1);
            let mut picked = Vec::new();
            let mut proto_labels = Vec::new();
            for c in 0..n_classes {
                let members = by_class.get_mut(&c).map(Vec::as_mut_slice).unwrap_or_default();
                if members.len() < per_class {
                    return Err(Error::Data(format!(
                        "class {c} has {} samples, {per_class} prototypes requested",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                picked.extend_from_slice(&members[..per_class]);
                proto_labels.extend(std::iter::repeat_n(c, per_class));
            }
            (picked, Some(proto_labels))
        }
    };
    let rows: Vec<Vec<f64>> = picked.iter().map(|&i| data.row(i).to_vec()).collect();
    PrototypeSet::from_rows(&rows, proto_labels)
}

/// Outcome of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Tensor,
    pub assignments: Vec<usize>,
    /// Quantization error after every assignment step.
    pub errors: Vec<f64>,
}

/// Mean squared distance of every sample to its nearest center.
pub fn quantization_error(data: &Tensor, centers: &Tensor) -> Result<f64> {
    check_batch(data)?;
    check_batch(centers)?;
    if data.cols() != centers.cols() {
        return Err(shape_err!("data has {} features, centers {}", data.cols(), centers.cols()));
    }
    let norms: Vec<f64> = (0..centers.rows()).map(|k| squared_norm(centers.row(k))).collect();
    let total: f64 = (0..data.rows())
        .map(|i| nearest(data.row(i), centers, &norms).1)
        .sum();
    Ok(total / data.rows() as f64)
}

fn nearest(x: &[f64], centers: &Tensor, norms: &[f64]) -> (usize, f64) {
    let xx = squared_norm(x);
    let mut best = (0, f64::INFINITY);
    for (k, nk) in norms.iter().enumerate() {
        let d = (xx - 2.0 * dot(x, centers.row(k)) + nk).max(0.0);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn distinct_rows(data: &Tensor, order: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    order
        .iter()
        .copied()
        .filter(|&i| seen.insert(data.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .collect()
}

/// Lloyd iterations from `k` distinct random samples until the assignment
/// stops changing or `max_iters` updates were made. An empty cluster is
/// reseeded at the sample currently farthest from its center.
pub fn kmeans(data: &Tensor, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    check_batch(data)?;
    if k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    order.shuffle(&mut rng);
    let distinct = distinct_rows(data, &order);
    if distinct.len() < k {
        return Err(Error::Data(format!(
            "k = {k} exceeds the {} distinct samples",
            distinct.len()
        )));
    }
    let n = data.cols();
    let mut centers = Tensor::zeros(&[k, n]);
    for (c, &i) in distinct[..k].iter().enumerate() {
        centers.row_mut(c).copy_from_slice(data.row(i));
    }

    let assign = |centers: &Tensor| {
        let norms: Vec<f64> = (0..k).map(|c| squared_norm(centers.row(c))).collect();
        (0..data.rows())
            .map(|i| nearest(data.row(i), centers, &norms))
            .collect::<Vec<_>>()
    };

    let mut current = assign(&centers);
    let mut errors = vec![current.iter().map(|a| a.1).sum::<f64>() / data.rows() as f64];
    for _ in 0..max_iters {
        let mut sums = Tensor::zeros(&[k, n]);
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in current.iter().enumerate() {
            counts[c] += 1;
            sums.row_mut(c).iter_mut().zip(data.row(i)).for_each(|(s, x)| *s += x);
        }
        let mut dist: Vec<f64> = current.iter().map(|a| a.1).collect();
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (o, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *o = s * inv;
                }
            } else {
                // Lowest index among the farthest samples; it then sits on its center.
                let far = dist
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, d)| if *d > dist[best] { i } else { best });
                centers.row_mut(c).copy_from_slice(data.row(far));
                dist[far] = 0.0;
            }
        }
        let next = assign(&centers);
        errors.push(next.iter().map(|a| a.1).sum::<f64>() / data.rows() as f64);
        let changed = next.iter().zip(&current).any(|(a, b)| a.0 != b.0);
        current = next;
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centers,
        assignments: current.into_iter().map(|a| a.0).collect(),
        errors,
    })
}

/// k-means centers as an unlabeled prototype set.
pub fn init_kmeans(data: &Tensor, k: usize, max_iters: usize, seed: u64) -> Result<PrototypeSet> {
    PrototypeSet::new(kmeans(data, k, max_iters, seed)?.centers, None)
}

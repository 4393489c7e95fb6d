//! Seeded inputs shared by the benchmarks.

use protolayer::{KernelPrototypeBank, Padding, PrototypeSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `n` unlabeled prototypes of dimension `dim` and one input vector.
pub fn prototypes_and_input(n: usize, dim: usize, seed: u64) -> (PrototypeSet, Vec<f64>) {
    let mut r = rng(seed);
    let w = Tensor::matrix(n, dim, uniform(&mut r, n * dim)).expect("sizes match");
    (PrototypeSet::new(w, None).expect("valid set"), uniform(&mut r, dim))
}

/// A `side x side x channels` image and `n` kernel-prototypes of extent `k`.
pub fn image_and_bank(side: usize, channels: usize, k: usize, n: usize, seed: u64) -> (Tensor, KernelPrototypeBank) {
    let mut r = rng(seed);
    let x = Tensor::new(vec![side, side, channels], uniform(&mut r, side * side * channels)).expect("sizes match");
    let kernels = Tensor::new(vec![k, k, channels, n], uniform(&mut r, k * k * channels * n)).expect("sizes match");
    let bank = KernelPrototypeBank::new(kernels, None, (1, 1), Padding::Valid).expect("valid bank");
    (x, bank)
}

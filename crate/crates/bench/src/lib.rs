//! Fixtures shared by the benchmarks.

use epift_core::episodes::{Sample, SamplePool};
use epift_core::{DType, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(r: &mut ChaCha8Rng, shape: &[usize], dtype: DType) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.sample(StandardNormal)).collect(), dtype).unwrap()
}

/// Gaussian feature clusters, `per_class` samples of `[bins, frames]` each.
pub fn feature_pool(classes: usize, per_class: usize, bins: usize, frames: usize, seed: u64) -> SamplePool {
    let mut r = rng(seed);
    let mut samples = Vec::new();
    for c in 0..classes {
        let mean = randn(&mut r, &[bins, frames], DType::F32);
        for i in 0..per_class {
            let noise = randn(&mut r, &[bins, frames], DType::F32);
            let data = mean.data().iter().zip(noise.data()).map(|(m, n)| m + 0.5 * n).collect();
            let t = Tensor::new(&[bins, frames], data, DType::F32).unwrap();
            samples.push(Sample::new(t, c, format!("{c}-{i}")));
        }
    }
    SamplePool::from_samples(samples).unwrap()
}

//! Seeded randomness.
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded
//! with a 64-bit value through `SeedableRng::seed_from_u64`, which expands
//! the seed with PCG32. Standard normals use the ziggurat sampler of
//! `rand_distr::StandardNormal`. Samples are drawn as `f64` and converted to
//! the working scalar, so `f32` and `f64` runs consume identical streams.
//!
//! Independent streams are derived from one master seed with [`sub_seed`],
//! a SplitMix64 mix of `(master, stream)`. Adding a new stream id never
//! shifts the values produced by existing ones.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::{norm2, Matrix};
use crate::scalar::Real;

pub type SeededRng = ChaCha20Rng;

/// Stream ids used by the instance generator and the certifier.
pub mod stream {
    pub const FRAME: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const MEASUREMENT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const PROBES: u64 = 5;
}

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` of master seed `master`:
/// `splitmix64(master ^ splitmix64(stream))`.
pub fn sub_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

pub fn normal<T: Real>(rng: &mut SeededRng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vec<T: Real>(rng: &mut SeededRng, len: usize) -> Vec<T> {
    (0..len).map(|_| normal(rng)).collect()
}

/// Row-major fill with i.i.d. standard normals.
pub fn normal_matrix<T: Real>(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Uniform random subset of `{0..n}` of size `k`, sorted ascending.
pub fn subset(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Uniform point on the sphere of `radius` around `center`.
pub fn on_sphere<T: Real>(rng: &mut SeededRng, center: &[T], radius: T) -> Vec<T> {
    let dir: Vec<T> = loop {
        let g = normal_vec::<T>(rng, center.len());
        if norm2(&g) > T::zero() {
            break g;
        }
    };
    let s = radius / norm2(&dir);
    center.iter().zip(&dir).map(|(&c, &g)| c + s * g).collect()
}

/// Uniform point in the closed ball of `radius` around `center`.
pub fn in_ball<T: Real>(rng: &mut SeededRng, center: &[T], radius: T) -> Vec<T> {
    let u: f64 = rng.random();
    let r = radius * T::lit(u.powf(1.0 / center.len().max(1) as f64));
    on_sphere(rng, center, r)
}

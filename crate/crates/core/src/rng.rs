//! Seeded random streams.
//!
//! Every stochastic routine takes a plain `u64` seed. Sub-streams (per trial,
//! per noise draw, per restart) are derived with a SplitMix64 mix of the parent
//! seed and a stream tag, so that independent work units never share draws and
//! results do not depend on scheduling order.

use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream.wrapping_mul(GOLDEN).rotate_left(17)))
}

/// Derives a seed from a chain of stream tags.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &tag| derive_seed(s, tag))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from CN(0, variance): real and imaginary parts i.i.d. N(0, variance / 2).
pub fn complex_gaussian(rng: &mut Rng, variance: f64) -> Complex<f64> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(s * re, s * im)
}

/// Matrix of i.i.d. CN(0, variance) entries, filled in column-major order.
pub fn complex_gaussian_matrix(
    rng: &mut Rng,
    nrows: usize,
    ncols: usize,
    variance: f64,
) -> DMatrix<Complex<f64>> {
    let mut m = DMatrix::zeros(nrows, ncols);
    for v in m.iter_mut() {
        *v = complex_gaussian(rng, variance);
    }
    m
}

//! Seeded weight initialization.

use ndarray::ArrayD;
use rand::Rng;

/// Xavier/Glorot uniform: entries from `U(-a, a)` with
/// `a = sqrt(6 / (fan_in + fan_out))`. Entries are drawn in row-major
/// order so a given seed always produces the same tensor.
pub fn xavier_uniform(
    rng: &mut impl Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> ArrayD<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_init(rng, shape, -a, a)
}

pub fn uniform_init(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(shape.to_vec(), || rng.random_range(lo..hi))
}

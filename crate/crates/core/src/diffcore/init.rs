use rand::Rng;

use super::tensor::{Scalar, Tensor};

/// Uniform init in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<F: Scalar, R: Rng>(
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64(rng.random_range(-bound..bound)).unwrap())
        .collect();
    Tensor::new(shape, data)
}

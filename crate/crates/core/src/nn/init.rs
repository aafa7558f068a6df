use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Scalar, Tensor};

pub const INIT_STDDEV: f64 = 0.02;

/// Draws a tensor from a normal distribution with mean 0 and `stddev`,
/// resampling anything beyond two standard deviations.
pub fn truncated_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], stddev: f64, rng: &mut R) -> Tensor<T> {
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    while data.len() < len {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            data.push(T::lit(z * stddev));
        }
    }
    Tensor::new(shape, data).expect("shape matches generated length")
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

/// Feedback payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl Codeword {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::from_f64(&[1, self.values.len()], &self.values)
    }

    pub(crate) fn from_tensor<T: Scalar>(t: &Tensor<T>, normalized: bool) -> Self {
        Self {
            values: t.data().iter().map(|v| v.as_f64()).collect(),
            normalized,
        }
    }
}

pub fn normalize_codeword(s: &Codeword) -> Result<Codeword> {
    let norm = s.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateCodeword);
    }
    Ok(Codeword {
        values: s.values.iter().map(|v| v / norm).collect(),
        normalized: true,
    })
}

/// Scales every row of a `batch x n_cw` tensor to unit L2 norm. Returns the
/// normalized rows and the original norms (needed by the reverse pass).
pub fn normalize_rows<T: Scalar>(s: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let n = s.item_len();
    let mut out = s.clone();
    let mut norms = Vec::with_capacity(s.batch());
    for row in out.data_mut().chunks_exact_mut(n) {
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() || !norm.is_finite() {
            return Err(Error::DegenerateCodeword);
        }
        row.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Gradient through [`normalize_rows`]: `(g - y (y . g)) / ||s||` per row.
pub fn normalize_rows_backward<T: Scalar>(normalized: &Tensor<T>, norms: &[T], grad: &Tensor<T>) -> Tensor<T> {
    let n = normalized.item_len();
    let mut out = grad.clone();
    for ((g, y), &norm) in out
        .data_mut()
        .chunks_exact_mut(n)
        .zip(normalized.data().chunks_exact(n))
        .zip(norms)
    {
        let dot: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
        for (gi, &yi) in g.iter_mut().zip(y) {
            *gi = (*gi - yi * dot) / norm;
        }
    }
    out
}

/// Per-element noise power giving `snr_db` on a unit-norm codeword of length
/// `n_cw`: `1 / (n_cw * 10^(snr_db / 10))`.
pub fn snr_to_sigma_sq(snr_db: f64, n_cw: usize) -> f64 {
    1.0 / (n_cw as f64 * 10f64.powf(snr_db / 10.0))
}

/// Additive white Gaussian feedback noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub snr_db: f64,
    pub sigma_sq: f64,
}

impl NoiseModel {
    pub fn new(snr_db: f64, n_cw: usize) -> Self {
        Self {
            snr_db,
            sigma_sq: snr_to_sigma_sq(snr_db, n_cw),
        }
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            sigma_sq: 0.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }

    /// A `shape`-sized draw of i.i.d. `N(0, sigma_sq)` values.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, shape: &[usize], rng: &mut R) -> Tensor<T> {
        let sigma = self.sigma();
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(sigma * z)
            })
            .collect();
        Tensor::new(shape, data).expect("shape matches generated length")
    }
}

pub fn add_noise<R: Rng + ?Sized>(s: &Codeword, noise: &NoiseModel, rng: &mut R) -> Codeword {
    let n: Tensor<f64> = noise.sample(&[s.len()], rng);
    Codeword {
        values: s.values.iter().zip(n.data()).map(|(a, b)| a + b).collect(),
        normalized: s.normalized,
    }
}

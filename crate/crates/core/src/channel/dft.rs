use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::matrix::CMatrix;

/// Unitary DFT matrix with entries `exp(-2*pi*i*j*k/n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::Config("DFT size must be at least 1".into()));
    }
    let norm = 1.0 / (n as f64).sqrt();
    Ok(CMatrix::from_fn(n, n, |j, k| {
        // reduce the exponent first so large n keeps full phase accuracy
        let phase = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
        Complex64::from_polar(norm, phase)
    }))
}

/// FFT-backed evaluation of `F_d X F_a^H` and its inverse for a fixed
/// `n_c x n_t` geometry, with `F_d`, `F_a` the unitary DFT matrices of size
/// `n_c` and `n_t`.
pub struct DftPair {
    n_c: usize,
    n_t: usize,
    delay_fwd: Arc<dyn Fft<f64>>,
    delay_inv: Arc<dyn Fft<f64>>,
    angle_fwd: Arc<dyn Fft<f64>>,
    angle_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftPair")
            .field("n_c", &self.n_c)
            .field("n_t", &self.n_t)
            .finish()
    }
}

impl DftPair {
    pub fn new(n_c: usize, n_t: usize) -> Result<Self> {
        if n_c == 0 || n_t == 0 {
            return Err(Error::Config("DFT size must be at least 1".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_c,
            n_t,
            delay_fwd: planner.plan_fft_forward(n_c),
            delay_inv: planner.plan_fft_inverse(n_c),
            angle_fwd: planner.plan_fft_forward(n_t),
            angle_inv: planner.plan_fft_inverse(n_t),
        })
    }

    fn check(&self, m: &CMatrix) -> Result<()> {
        if m.dims() != [self.n_c, self.n_t] {
            return Err(Error::dims("angular-delay transform", &m.dims(), &[self.n_c, self.n_t]));
        }
        Ok(())
    }

    /// `F_d X F_a^H`.
    pub fn forward(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check(x)?;
        Ok(self.apply(x, &self.delay_fwd, &self.angle_inv))
    }

    /// `F_d^H Y F_a`.
    pub fn inverse(&self, y: &CMatrix) -> Result<CMatrix> {
        self.check(y)?;
        Ok(self.apply(y, &self.delay_inv, &self.angle_fwd))
    }

    fn apply(&self, x: &CMatrix, columns: &Arc<dyn Fft<f64>>, rows: &Arc<dyn Fft<f64>>) -> CMatrix {
        let (n_c, n_t) = (self.n_c, self.n_t);
        let mut out = x.clone();
        let mut col = vec![Complex64::new(0.0, 0.0); n_c];
        for c in 0..n_t {
            for r in 0..n_c {
                col[r] = out.get(r, c);
            }
            columns.process(&mut col);
            for r in 0..n_c {
                out.data_mut()[r * n_t + c] = col[r];
            }
        }
        for row in out.data_mut().chunks_exact_mut(n_t) {
            rows.process(row);
        }
        out.scale(1.0 / ((n_c * n_t) as f64).sqrt())
    }
}

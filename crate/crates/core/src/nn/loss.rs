use crate::error::{Error, Result};

use super::{Scalar, Tensor};

pub const KL_CLAMP: f64 = 1e-7;

/// A scalar objective together with its gradient w.r.t. the first argument.
#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: T,
    pub grad: Tensor<T>,
}

/// Per-sample squared error norm averaged over the batch:
/// `(1/N) * sum_i ||pred_i - target_i||^2`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<LossValue<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::dims("mse_loss", pred.shape(), target.shape()));
    }
    let n = T::lit(pred.batch() as f64);
    let diff = pred.sub(target)?;
    let value = diff.sum_sq() / n;
    let two = T::lit(2.0);
    let grad = diff.map(|d| two * d / n);
    Ok(LossValue { value, grad })
}

/// Bernoulli KL divergence `KL(target || actual)` summed over neurons.
pub fn bernoulli_kl(target: f64, actual: f64) -> f64 {
    target * (target / actual).ln() + (1.0 - target) * ((1.0 - target) / (1.0 - actual)).ln()
}

/// Sparsity penalty over sigmoid activations of shape `batch x neurons`.
///
/// The average activation of every neuron over the batch is pushed towards
/// `target` via the Bernoulli KL divergence; averages are clamped to
/// `[1e-7, 1 - 1e-7]` before taking logarithms.
pub fn kl_sparsity<T: Scalar>(activations: &Tensor<T>, target: f64) -> Result<LossValue<T>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!(
            "sparsity target must lie in (0, 1), got {target}"
        )));
    }
    if activations.shape().len() != 2 {
        return Err(Error::dims("kl_sparsity", activations.shape(), &[0, 0]));
    }
    let (batch, neurons) = (activations.batch(), activations.shape()[1]);
    let mut mean = vec![0.0f64; neurons];
    for row in activations.data().chunks_exact(neurons) {
        for (m, &a) in mean.iter_mut().zip(row) {
            *m += a.as_f64();
        }
    }
    let mut value = 0.0;
    let mut dmean = vec![T::zero(); neurons];
    for (m, d) in mean.iter_mut().zip(dmean.iter_mut()) {
        *m /= batch as f64;
        let clamped = m.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
        value += bernoulli_kl(target, clamped);
        if clamped == *m {
            *d = T::lit((-target / clamped + (1.0 - target) / (1.0 - clamped)) / batch as f64);
        }
    }
    let mut grad = Vec::with_capacity(activations.len());
    for _ in 0..batch {
        grad.extend_from_slice(&dmean);
    }
    Ok(LossValue {
        value: T::lit(value),
        grad: Tensor::new(activations.shape(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = t(&[1, 2], &[1.0, 2.0]);
        assert_eq!(mse_loss(&a, &a).unwrap().value, 0.0);
        let l = mse_loss(&a, &Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(l.value, 5.0);
        assert_eq!(l.grad.data(), &[2.0, 4.0]);
        // per-sample squared norms 5 and 3
        let p = t(&[2, 2], &[1.0, 2.0, 1.0, std::f64::consts::SQRT_2]);
        let l = mse_loss(&p, &Tensor::zeros(&[2, 2])).unwrap();
        assert!((l.value - 4.0).abs() < 1e-12);
        assert!(mse_loss(&p, &a).is_err());
    }

    #[test]
    fn kl_examples() {
        let at_target = Tensor::<f64>::full(&[4, 3], 0.05);
        assert!(kl_sparsity(&at_target, 0.05).unwrap().value.abs() < 1e-15);
        // 0.5 ln 2 + 0.5 ln(2/3)
        let l = kl_sparsity(&t(&[2, 1], &[0.2, 0.3]), 0.5).unwrap();
        assert!((l.value - 0.143841036).abs() < 1e-4);
        assert!(kl_sparsity(&t(&[1, 1], &[0.3]), 0.5).unwrap().value > 0.0);
        assert!(matches!(kl_sparsity(&at_target, 1.0), Err(Error::Config(_))));
        assert!(matches!(kl_sparsity(&at_target, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn kl_handles_saturated_neurons() {
        let l = kl_sparsity(&t(&[2, 1], &[0.0, 0.0]), 0.05).unwrap();
        assert!(l.value.is_finite() && l.value > 0.0);
        assert_eq!(l.grad.data(), &[0.0, 0.0]);
    }
}

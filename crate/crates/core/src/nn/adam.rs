use log::warn;

use crate::error::{Error, Result};

use super::{Gradients, ParameterGroup, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// The group was frozen; nothing changed.
    SkippedFrozen,
}

/// Moment estimates for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<G: ParameterGroup<T> + ?Sized>(group: &G, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = group.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step<G: ParameterGroup<T> + ?Sized>(&mut self, group: &mut G, grads: &Gradients<T>) -> Result<StepOutcome> {
        if group.is_frozen() {
            warn!("adam step requested on a frozen parameter group; skipped");
            return Ok(StepOutcome::SkippedFrozen);
        }
        let mut params = group.params_mut();
        if params.len() != grads.tensors.len() || params.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "adam: {} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.tensors.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(&grads.tensors) {
            p.expect_shape("adam gradient", g.shape())?;
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let corr1 = T::lit(1.0 - c.beta1.powi(self.t as i32));
        let corr2 = T::lit(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.epsilon));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(StepOutcome::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Dense, Layer};
    use crate::nn::Sequential;

    fn scalar_group(value: f64) -> Sequential<f64> {
        let d = Dense::from_parts(Tensor::from_f64(&[1, 1], &[value]).unwrap(), Tensor::zeros(&[1])).unwrap();
        Sequential::new(vec![Layer::Dense(d)])
    }

    fn grads(gw: f64) -> Gradients<f64> {
        Gradients {
            tensors: vec![Tensor::from_f64(&[1, 1], &[gw]).unwrap(), Tensor::zeros(&[1])],
        }
    }

    fn weight(g: &Sequential<f64>) -> f64 {
        g.params()[0].data()[0]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut g = scalar_group(0.7);
        let mut s = AdamState::new(&g, AdamConfig::default());
        s.step(&mut g, &grads(0.0)).unwrap();
        assert_eq!(weight(&g), 0.7);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        let mut g = scalar_group(0.0);
        let mut s = AdamState::new(&g, AdamConfig::with_learning_rate(0.001));
        s.step(&mut g, &grads(0.5)).unwrap();
        assert!((weight(&g) + 0.001).abs() < 1e-9);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        let (lr, b1, b2, eps, grad) = (0.001f64, 0.9f64, 0.999f64, 1e-8f64, 0.3f64);
        let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad * grad;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        let mut g = scalar_group(1.0);
        let mut s = AdamState::new(&g, AdamConfig::default());
        s.step(&mut g, &grads(grad)).unwrap();
        s.step(&mut g, &grads(grad)).unwrap();
        assert!((weight(&g) - p).abs() < 1e-10);
        assert!(s.v.iter().all(|v| v.data().iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn frozen_group_is_untouched() {
        let mut g = scalar_group(0.25);
        g.set_frozen(true);
        let mut s = AdamState::new(&g, AdamConfig::default());
        for _ in 0..10 {
            assert_eq!(s.step(&mut g, &grads(1.0)).unwrap(), StepOutcome::SkippedFrozen);
        }
        assert_eq!(weight(&g).to_bits(), 0.25f64.to_bits());
        assert_eq!(s.t, 0);
    }
}

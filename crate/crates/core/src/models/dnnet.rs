use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    kl_sparsity, ActivationKind, BatchNorm, Cache, Dense, Gradients, Layer, LayerSpec, Mode, ParameterGroup, Scalar,
    Sequential, Tape, Tensor,
};

use super::codeword::Codeword;
use super::spec::DnnetSpec;

/// Noise estimator with a global skip connection: the network predicts the
/// noise `n_hat` in a received codeword and the clean estimate is
/// `s_hat = s_tilde - n_hat`.
///
/// Layout: batch normalization on the input, `layers - 2` sigmoid hidden
/// layers, linear output layer.
#[derive(Debug, Clone)]
pub struct Dnnet<T> {
    pub net: Sequential<T>,
    spec: DnnetSpec,
    n_cw: usize,
}

#[derive(Debug, Clone)]
pub struct DnnetTape<T> {
    pub net: Tape<T>,
    /// Layer indices of the hidden sigmoid outputs.
    hidden_at: Vec<usize>,
}

/// Result of a DNNet forward pass.
#[derive(Debug, Clone)]
pub struct DnnetOutput<T> {
    pub denoised: Tensor<T>,
    pub noise: Tensor<T>,
    pub hidden: Vec<Tensor<T>>,
}

impl<T: Scalar> Dnnet<T> {
    pub fn new<R: Rng + ?Sized>(n_cw: usize, spec: DnnetSpec, rng: &mut R) -> Result<Self> {
        spec.validate(n_cw)?;
        let mut layers = vec![Layer::BatchNorm(BatchNorm::new(n_cw))];
        let mut width = n_cw;
        for _ in 0..spec.hidden_layers() {
            layers.push(Layer::Dense(Dense::new(width, spec.hidden_width, rng)));
            layers.push(Layer::Activation(ActivationKind::Sigmoid));
            width = spec.hidden_width;
        }
        layers.push(Layer::Dense(Dense::new(width, n_cw, rng)));
        Ok(Self {
            net: Sequential::new(layers),
            spec,
            n_cw,
        })
    }

    /// Rebuilds a DNNet from its serialized layers. The sparsity settings are
    /// not part of the layer list and are taken from `spec`.
    pub fn from_layers(layers: Vec<Layer<T>>, spec: DnnetSpec) -> Result<Self> {
        let bad = || Error::Usage("layer list does not describe a DNNet".into());
        let n_cw = match layers.first() {
            Some(Layer::BatchNorm(bn)) => bn.features(),
            _ => return Err(bad()),
        };
        if layers.len() < 4 || layers.len() % 2 != 0 {
            return Err(bad());
        }
        let hidden = (layers.len() - 2) / 2;
        let mut width = n_cw;
        let mut hidden_width = 0;
        for pair in layers[1..layers.len() - 1].chunks(2) {
            match pair {
                [Layer::Dense(d), Layer::Activation(ActivationKind::Sigmoid)] if d.inputs() == width => {
                    width = d.outputs();
                    hidden_width = width;
                }
                _ => return Err(bad()),
            }
        }
        match layers.last() {
            Some(Layer::Dense(d)) if d.inputs() == width && d.outputs() == n_cw => {}
            _ => return Err(bad()),
        }
        let spec = DnnetSpec {
            layers: hidden + 2,
            hidden_width,
            ..spec
        };
        spec.validate(n_cw)?;
        Ok(Self {
            net: Sequential::new(layers),
            spec,
            n_cw,
        })
    }

    pub fn spec(&self) -> DnnetSpec {
        self.spec
    }

    /// Replaces the sparsity settings, which are not part of the weights.
    pub fn set_sparsity(&mut self, sparsity_target: f64, kl_weight: f64) -> Result<()> {
        let spec = DnnetSpec {
            sparsity_target,
            kl_weight,
            ..self.spec
        };
        spec.validate(self.n_cw)?;
        self.spec = spec;
        Ok(())
    }

    pub fn n_cw(&self) -> usize {
        self.n_cw
    }

    fn check_input(&self, s: &Tensor<T>) -> Result<()> {
        if s.shape().len() != 2 || s.shape()[1] != self.n_cw {
            return Err(Error::dims("DNNet input", s.shape(), &[self.n_cw]));
        }
        Ok(())
    }

    /// Forward pass recording a tape. `Mode::Train` uses batch statistics in
    /// the normalization layer and needs at least two samples.
    pub fn forward(&self, received: &Tensor<T>, mode: Mode) -> Result<(DnnetOutput<T>, DnnetTape<T>)> {
        self.check_input(received)?;
        let (noise, tape) = self.net.forward(received, mode)?;
        let hidden_at: Vec<usize> = (0..self.spec.hidden_layers()).map(|i| 2 + 2 * i).collect();
        let hidden = hidden_at
            .iter()
            .map(|&i| match &tape.caches()[i] {
                Cache::Output(y) => y.clone(),
                _ => unreachable!("sigmoid layers cache their output"),
            })
            .collect();
        let denoised = received.sub(&noise)?;
        Ok((
            DnnetOutput {
                denoised,
                noise,
                hidden,
            },
            DnnetTape { net: tape, hidden_at },
        ))
    }

    /// Inference with running statistics; returns `(s_hat, n_hat)`.
    pub fn infer(&self, received: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_input(received)?;
        let noise = self.net.infer(received)?;
        Ok((received.sub(&noise)?, noise))
    }

    /// Sum over hidden layers of the KL sparsity penalty, with the gradient
    /// taps to feed into [`Dnnet::backward`].
    pub fn sparsity_penalty(
        &self,
        out: &DnnetOutput<T>,
        tape: &DnnetTape<T>,
    ) -> Result<(f64, Vec<(usize, Tensor<T>)>)> {
        let mut total = 0.0;
        let mut taps = Vec::with_capacity(out.hidden.len());
        for (h, &at) in out.hidden.iter().zip(&tape.hidden_at) {
            let kl = kl_sparsity(h, self.spec.sparsity_target)?;
            total += kl.value.as_f64();
            taps.push((at, kl.grad));
        }
        Ok((total, taps))
    }

    /// Reverse pass given the gradient on `s_hat`. `taps` carry extra
    /// gradients on hidden activations (already weighted). Returns the
    /// gradient with respect to the received codeword.
    pub fn backward(
        &self,
        tape: &DnnetTape<T>,
        grad_denoised: &Tensor<T>,
        grads: Option<&mut Gradients<T>>,
        taps: &[(usize, Tensor<T>)],
    ) -> Result<Tensor<T>> {
        let grad_noise = grad_denoised.map(|g| -g);
        let through = self.net.backward_with_taps(&tape.net, &grad_noise, grads, taps)?;
        grad_denoised.add(&through)
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages.
    pub fn commit_stats(&mut self, tape: &DnnetTape<T>) {
        self.net.commit_stats(&tape.net);
    }

    /// Single-sample denoising (inference mode); returns `(s_hat, n_hat)`.
    pub fn denoise(&self, received: &Codeword) -> Result<(Codeword, Codeword)> {
        let (s, n) = self.infer(&received.to_tensor()?)?;
        Ok((
            Codeword::from_tensor(&s, received.normalized),
            Codeword::from_tensor(&n, false),
        ))
    }

    /// Raw network output `n_hat` for a single codeword.
    pub fn neu_forward(&self, received: &Codeword) -> Result<Codeword> {
        Ok(self.denoise(received)?.1)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.net.specs(&[self.n_cw])
    }
}

impl<T: Scalar> ParameterGroup<T> for Dnnet<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.net.params_mut()
    }

    fn is_frozen(&self) -> bool {
        self.net.is_frozen()
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.net.set_frozen(frozen)
    }
}

use rand::Rng;

use crate::channel::TruncatedCsi;
use crate::error::{Error, Result};
use crate::nn::{
    ActivationKind, BatchNorm, Conv2d, Dense, Gradients, Layer, LayerSpec, Mode, ParameterGroup, Reshape, Scalar,
    Sequential, Tape, Tensor,
};

use super::codeword::Codeword;
use super::spec::AutoencoderSpec;

/// UE-side compressor: per-channel input normalization, 3x3 convolution (2 -> 2 channels) with leaky ReLU,
/// flattened and projected linearly to the codeword length.
#[derive(Debug, Clone)]
pub struct Encoder<T> {
    pub net: Sequential<T>,
    spec: AutoencoderSpec,
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(spec: AutoencoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let dims = spec.input_dims();
        let layers = vec![
            Layer::BatchNorm(BatchNorm::new(2)),
            Layer::Conv2d(Conv2d::new(2, 2, 3, rng)?),
            Layer::Activation(ActivationKind::LeakyRelu),
            Layer::Reshape(Reshape::new(&dims, &[spec.input_len()])?),
            Layer::Dense(Dense::new(spec.input_len(), spec.n_cw, rng)),
        ];
        Ok(Self {
            net: Sequential::new(layers),
            spec,
        })
    }

    /// Rebuilds an encoder from its serialized layer list.
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        let bad = || Error::Usage("layer list does not describe an encoder".into());
        let spec = match layers.as_slice() {
            [Layer::BatchNorm(bn), Layer::Conv2d(c), Layer::Activation(ActivationKind::LeakyRelu), Layer::Reshape(r), Layer::Dense(d)]
                if bn.features() == 2
                    && c.in_channels() == 2
                    && c.out_channels() == 2
                    && r.input_dims.len() == 3
                    && r.input_dims[0] == 2 =>
            {
                let spec = AutoencoderSpec::new(r.input_dims[1], r.input_dims[2], d.outputs())?;
                if d.inputs() != spec.input_len() {
                    return Err(bad());
                }
                spec
            }
            _ => return Err(bad()),
        };
        Ok(Self {
            net: Sequential::new(layers),
            spec,
        })
    }

    pub fn spec(&self) -> AutoencoderSpec {
        self.spec
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != 4 || x.shape()[1..] != self.spec.input_dims() {
            return Err(Error::dims("encoder input", x.shape(), &self.spec.input_dims()));
        }
        Ok(())
    }

    /// `batch x 2 x n_p x n_t` -> unnormalized `batch x n_cw` codewords.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(x)?;
        self.net.forward(x, mode)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.net.infer(x)
    }

    pub fn backward(&self, tape: &Tape<T>, grad: &Tensor<T>, grads: Option<&mut Gradients<T>>) -> Result<Tensor<T>> {
        self.net.backward(tape, grad, grads)
    }

    /// Folds the input normalization statistics of a training pass into the
    /// running averages.
    pub fn commit_stats(&mut self, tape: &Tape<T>) {
        self.net.commit_stats(tape);
    }

    /// Single-sample convenience wrapper; the result is not normalized.
    pub fn encode(&self, h: &TruncatedCsi) -> Result<Codeword> {
        let x = Tensor::from_f64(&[1, 2, h.n_p, h.n_t], &h.values)?;
        Ok(Codeword::from_tensor(&self.infer(&x)?, false))
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.net.specs(&self.spec.input_dims())
    }
}

impl<T: Scalar> ParameterGroup<T> for Encoder<T> {
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

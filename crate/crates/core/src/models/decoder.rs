use rand::Rng;

use crate::channel::{ScaleBounds, TruncatedCsi};
use crate::error::{Error, Result};
use crate::nn::layers::sigmoid;
use crate::nn::{
    ActivationKind, Conv2d, Dense, Gradients, Layer, LayerSpec, Mode, ParameterGroup, Reshape, Scalar, Sequential,
    Tape, Tensor,
};

use super::codeword::Codeword;
use super::spec::AutoencoderSpec;

/// Channel widths of one refinement block: 2 -> 8 -> 16 -> 2.
const REFINE_WIDTHS: [usize; 4] = [2, 8, 16, 2];
const REFINE_LAYERS: usize = 5;

/// BS-side reconstruction: linear expansion to `2 x n_p x n_t`, residual
/// refinement blocks, then a sigmoid onto the [0, 1] input range.
#[derive(Debug, Clone)]
pub struct Decoder<T> {
    pub head: Sequential<T>,
    pub blocks: Vec<Sequential<T>>,
    spec: AutoencoderSpec,
    frozen: bool,
}

#[derive(Debug, Clone)]
pub struct DecoderTape<T> {
    head: Tape<T>,
    blocks: Vec<Tape<T>>,
    output: Tensor<T>,
}

pub fn refine_block<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Result<Sequential<T>> {
    let w = REFINE_WIDTHS;
    Ok(Sequential::new(vec![
        Layer::Conv2d(Conv2d::new(w[0], w[1], 3, rng)?),
        Layer::Activation(ActivationKind::LeakyRelu),
        Layer::Conv2d(Conv2d::new(w[1], w[2], 3, rng)?),
        Layer::Activation(ActivationKind::LeakyRelu),
        Layer::Conv2d(Conv2d::new(w[2], w[3], 3, rng)?),
    ]))
}

impl<T: Scalar> Decoder<T> {
    pub fn new<R: Rng + ?Sized>(spec: AutoencoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let head = Sequential::new(vec![
            Layer::Dense(Dense::new(spec.n_cw, spec.input_len(), rng)),
            Layer::Reshape(Reshape::new(&[spec.input_len()], &spec.input_dims())?),
        ]);
        let blocks = (0..spec.refine_blocks)
            .map(|_| refine_block(rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            head,
            blocks,
            spec,
            frozen: false,
        })
    }

    /// Rebuilds a decoder from its serialized layer list: dense, reshape,
    /// `5 * blocks` refinement layers, final sigmoid.
    pub fn from_layers(mut layers: Vec<Layer<T>>) -> Result<Self> {
        let bad = || Error::Usage("layer list does not describe a decoder".into());
        if layers.len() < 3 || (layers.len() - 3) % REFINE_LAYERS != 0 {
            return Err(bad());
        }
        if !matches!(layers.pop(), Some(Layer::Activation(ActivationKind::Sigmoid))) {
            return Err(bad());
        }
        let body = layers.split_off(2);
        let spec = match layers.as_slice() {
            [Layer::Dense(d), Layer::Reshape(r)] if r.output_dims.len() == 3 && r.output_dims[0] == 2 => {
                let mut spec = AutoencoderSpec::new(r.output_dims[1], r.output_dims[2], d.inputs())?;
                spec.refine_blocks = body.len() / REFINE_LAYERS;
                if d.outputs() != spec.input_len() {
                    return Err(bad());
                }
                spec
            }
            _ => return Err(bad()),
        };
        let mut blocks = Vec::new();
        let mut body = body.into_iter();
        for _ in 0..spec.refine_blocks {
            let block: Vec<Layer<T>> = body.by_ref().take(REFINE_LAYERS).collect();
            let ok = matches!(
                block.as_slice(),
                [Layer::Conv2d(a), Layer::Activation(ActivationKind::LeakyRelu), Layer::Conv2d(b), Layer::Activation(ActivationKind::LeakyRelu), Layer::Conv2d(c)]
                    if a.in_channels() == 2 && a.out_channels() == b.in_channels() && b.out_channels() == c.in_channels() && c.out_channels() == 2
            );
            if !ok {
                return Err(bad());
            }
            blocks.push(Sequential::new(block));
        }
        Ok(Self {
            head: Sequential::new(layers),
            blocks,
            spec,
            frozen: false,
        })
    }

    /// Flat layer list in serialization order.
    pub fn layers(&self) -> Vec<&Layer<T>> {
        let mut out: Vec<&Layer<T>> = self.head.layers.iter().collect();
        for b in &self.blocks {
            out.extend(b.layers.iter());
        }
        out
    }

    pub fn spec(&self) -> AutoencoderSpec {
        self.spec
    }

    fn check_input(&self, s: &Tensor<T>) -> Result<()> {
        if s.shape().len() != 2 || s.shape()[1] != self.spec.n_cw {
            return Err(Error::dims("decoder input", s.shape(), &[self.spec.n_cw]));
        }
        Ok(())
    }

    pub fn forward(&self, s: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, DecoderTape<T>)> {
        self.check_input(s)?;
        let (mut y, head) = self.head.forward(s, mode)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (r, tape) = block.forward(&y, mode)?;
            y.add_assign(&r)?;
            blocks.push(tape);
        }
        let output = y.map(sigmoid);
        Ok((output.clone(), DecoderTape { head, blocks, output }))
    }

    pub fn infer(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(s)?;
        let mut y = self.head.infer(s)?;
        for block in &self.blocks {
            let r = block.infer(&y)?;
            y.add_assign(&r)?;
        }
        Ok(y.map(sigmoid))
    }

    pub fn backward(
        &self,
        tape: &DecoderTape<T>,
        grad: &Tensor<T>,
        grads: Option<&mut Gradients<T>>,
    ) -> Result<Tensor<T>> {
        let mut g = grad.zip_map(&tape.output, |g, s| g * s * (T::one() - s))?;
        let mut grads = grads.map(|g| g.tensors.as_mut_slice());
        let mut offsets = vec![self.head.params().len()];
        for b in &self.blocks {
            offsets.push(offsets.last().unwrap() + b.params().len());
        }
        for (i, (block, btape)) in self.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            let slot = grads.as_deref_mut().map(|gr| &mut gr[offsets[i]..offsets[i + 1]]);
            let through = block.backward_into(btape, &g, slot, &[])?;
            g.add_assign(&through)?;
        }
        let slot = grads.map(|gr| &mut gr[..offsets[0]]);
        let gx = self.head.backward_into(&tape.head, &g, slot, &[])?;
        Ok(gx)
    }

    /// Single-sample convenience wrapper.
    pub fn decode(&self, s: &Codeword, bounds: ScaleBounds) -> Result<TruncatedCsi> {
        let y = self.infer(&s.to_tensor()?)?;
        TruncatedCsi::new(
            self.spec.n_p,
            self.spec.n_t,
            y.data().iter().map(|v| v.as_f64()).collect(),
            bounds,
        )
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut specs = self.head.specs(&[self.spec.n_cw]);
        for b in &self.blocks {
            specs.extend(b.specs(&self.spec.input_dims()));
        }
        specs
    }
}

impl<T: Scalar> ParameterGroup<T> for Decoder<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.head.params();
        for b in &self.blocks {
            p.extend(b.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.head.params_mut();
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

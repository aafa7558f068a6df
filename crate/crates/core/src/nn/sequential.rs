use crate::error::{Error, Result};

use super::layers::{Cache, Layer, LayerSpec, Mode};
use super::{Gradients, ParameterGroup, Scalar, Tensor};

/// Caches recorded by [`Sequential::forward`], one per layer.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

impl<T> Tape<T> {
    pub fn caches(&self) -> &[Cache<T>] {
        &self.caches
    }
}

/// A chain of layers with a single input and output.
#[derive(Debug, Clone)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
    frozen: bool,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers, frozen: false }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tape<T>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&cur, mode)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, Tape { caches }))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Reverse pass over a recorded tape. Parameter gradients are accumulated
    /// into `grads` (aligned with [`ParameterGroup::params`]) when provided.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        grad_out: &Tensor<T>,
        grads: Option<&mut Gradients<T>>,
    ) -> Result<Tensor<T>> {
        self.backward_with_taps(tape, grad_out, grads, &[])
    }

    /// Like [`Sequential::backward`], additionally injecting `taps[j].1` as
    /// gradient on the output of layer `taps[j].0`. This is how penalties on
    /// intermediate activations enter the reverse pass.
    pub fn backward_with_taps(
        &self,
        tape: &Tape<T>,
        grad_out: &Tensor<T>,
        grads: Option<&mut Gradients<T>>,
        taps: &[(usize, Tensor<T>)],
    ) -> Result<Tensor<T>> {
        self.backward_into(tape, grad_out, grads.map(|g| g.tensors.as_mut_slice()), taps)
    }

    /// Reverse pass accumulating into a slice of gradient tensors aligned with
    /// this chain's parameters. Used when the chain is part of a larger group.
    pub fn backward_into(
        &self,
        tape: &Tape<T>,
        grad_out: &Tensor<T>,
        mut grads: Option<&mut [Tensor<T>]>,
        taps: &[(usize, Tensor<T>)],
    ) -> Result<Tensor<T>> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::Usage(format!(
                "tape has {} entries for {} layers",
                tape.caches.len(),
                self.layers.len()
            )));
        }
        let offsets = self.param_offsets();
        let mut g = grad_out.clone();
        for (i, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            for (_, extra) in taps.iter().filter(|(at, _)| *at == i) {
                g.add_assign(extra)?;
            }
            let slot = grads.as_deref_mut().map(|gr| &mut gr[offsets[i]..offsets[i + 1]]);
            g = layer.backward(cache, &g, slot)?;
        }
        Ok(g)
    }

    pub fn commit_stats(&mut self, tape: &Tape<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            layer.commit_stats(cache);
        }
    }

    pub fn specs(&self, input_dims: &[usize]) -> Vec<LayerSpec> {
        let mut dims = input_dims.to_vec();
        self.layers
            .iter()
            .map(|l| {
                let spec = l.spec(&dims);
                dims = spec.output_dims.clone();
                spec
            })
            .collect()
    }

    fn param_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0];
        for layer in &self.layers {
            offsets.push(offsets.last().unwrap() + layer.params().len());
        }
        offsets
    }
}

impl<T: Scalar> ParameterGroup<T> for Sequential<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

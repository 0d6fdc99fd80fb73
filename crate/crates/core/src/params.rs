//! Flat, ordered parameter storage and the layer handles that index into it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::ops::{self, bias_shape, kernel_shape, ConvSpec};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct NamedParam<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Parameters in creation order. That order is the layer order written to
/// checkpoints and the order the optimizer walks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<NamedParam<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.entries.push(NamedParam {
            name: name.into(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn entries(&self) -> &[NamedParam<T>] {
        &self.entries
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|e| &mut e.value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Register every parameter as a trainable leaf, in store order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.entries.iter().map(|e| tape.param(e.value.clone())).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| NamedParam {
                    name: e.name.clone(),
                    value: e.value.cast(),
                })
                .collect(),
        }
    }
}

/// Convolution whose weights live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub name: String,
    pub kernel: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvLayer {
    pub fn create<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: impl Into<String>,
        kernel: usize,
        dilation: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let name = name.into();
        let spec = ConvSpec::<T>::glorot(kernel, dilation, in_channels, out_channels, rng)?;
        let weight = store.push(format!("{name}.weight"), spec.weights);
        let bias = store.push(format!("{name}.bias"), spec.bias);
        Ok(Self {
            name,
            kernel,
            dilation,
            in_channels,
            out_channels,
            weight,
            bias,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        tape.conv2d(x, vars[self.weight.0], vars[self.bias.0], self.dilation)
    }

    /// Convolution followed by ReLU.
    pub fn forward_relu<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let y = self.forward(tape, vars, x)?;
        Ok(tape.relu(y))
    }

    pub fn spec<T: Real>(&self, store: &ParamStore<T>) -> ConvSpec<T> {
        ConvSpec::new(
            self.kernel,
            self.dilation,
            store.get(self.weight).clone(),
            store.get(self.bias).clone(),
        )
        .expect("layer parameters are consistent")
    }

    pub fn param_count(&self) -> usize {
        kernel_shape(self.kernel, self.in_channels, self.out_channels).numel() + self.out_channels
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseLayer {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl DenseLayer {
    pub fn create<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: impl Into<String>,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let name = name.into();
        let w = ops::glorot_uniform(Shape::new(1, 1, inputs, outputs), inputs, outputs, rng);
        let weight = store.push(format!("{name}.weight"), w);
        let bias = store.push(format!("{name}.bias"), Tensor::zeros(bias_shape(outputs)));
        Self {
            name,
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        tape.dense(x, vars[self.weight.0], vars[self.bias.0])
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

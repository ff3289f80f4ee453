use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    /// Negative-slope coefficient.
    LeakyRelu(f64),
}

/// One layer of a fixed feed-forward architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
        bias: bool,
        activation: Activation,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        activation: Activation,
    },
    Flatten,
}

/// Versioned, serializable description of a network's layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDescriptor {
    pub version: u32,
    pub layers: Vec<LayerSpec>,
}

/// Ordered set of named weight tensors plus the layout they realize.
#[derive(Debug, Clone)]
pub struct NetworkParams<F> {
    layout: LayoutDescriptor,
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Scalar> NetworkParams<F> {
    pub fn new(layout: LayoutDescriptor, entries: Vec<(String, Tensor<F>)>) -> Self {
        NetworkParams { layout, entries }
    }

    pub fn layout(&self) -> &LayoutDescriptor {
        &self.layout
    }

    pub fn entries(&self) -> &[(String, Tensor<F>)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor<F>)] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn total_parameter_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Names of bias tensors present in the parameter set.
    pub fn bias_tensor_names(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(n, _)| n.ends_with(".bias"))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Squared Frobenius norm summed over all parameter tensors.
    pub fn frobenius_sq(&self) -> F {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.data().iter())
            .map(|&v| v * v)
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in &mut self.entries {
            let g = t.ensure_grad();
            g.fill(F::zero());
        }
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in &mut self.entries {
            t.clear_grad();
        }
    }

    /// Fails unless every parameter has a populated gradient buffer.
    pub fn require_grads(&self) -> Result<()> {
        for (name, t) in &self.entries {
            if t.grad().is_none() {
                return Err(Error::Usage(format!(
                    "parameter '{name}' has no gradient; run backward first"
                )));
            }
        }
        Ok(())
    }

    pub fn map_precision<G: Scalar>(&self, f: impl Fn(F) -> G + Copy) -> NetworkParams<G> {
        NetworkParams {
            layout: self.layout.clone(),
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.map_data(f)))
                .collect(),
        }
    }
}

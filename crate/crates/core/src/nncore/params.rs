use rand::Rng;

use super::{Real, Tensor2};
use crate::error::{Error, Result};

/// One dense layer's parameters with gradient and Adam moment slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub weight: Tensor2,
    pub bias: Vec<Real>,
    pub grad_weight: Tensor2,
    pub grad_bias: Vec<Real>,
    pub m_weight: Tensor2,
    pub v_weight: Tensor2,
    pub m_bias: Vec<Real>,
    pub v_bias: Vec<Real>,
}

impl Layer {
    pub fn new(name: impl Into<String>, weight: Tensor2, bias: Vec<Real>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape(
                "Layer::new",
                format!("bias {} for weight {:?}", bias.len(), weight.shape()),
            ));
        }
        let (r, c) = weight.shape();
        Ok(Self {
            name: name.into(),
            grad_weight: Tensor2::zeros(r, c),
            m_weight: Tensor2::zeros(r, c),
            v_weight: Tensor2::zeros(r, c),
            grad_bias: vec![0.0; c],
            m_bias: vec![0.0; c],
            v_bias: vec![0.0; c],
            weight,
            bias,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Ordered, uniquely named collection of layers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    layers: Vec<Layer>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: Layer) -> Result<()> {
        if self.index_of(&layer.name).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate layer name `{}`", layer.name)));
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for l in &mut self.layers {
            l.grad_weight.fill(0.0);
            l.grad_bias.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Detached gradient buffer with this store's shapes, all zeros.
    pub fn grads_like(&self) -> Grads {
        Grads {
            weights: self
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// `grad_slots += scale · grads`.
    pub fn accumulate_grads(&mut self, grads: &Grads, scale: Real) -> Result<()> {
        if grads.weights.len() != self.layers.len() {
            return Err(Error::shape("accumulate_grads", "layer count differs"));
        }
        for (l, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            if gw.shape() != l.weight.shape() || gb.len() != l.bias.len() {
                return Err(Error::shape("accumulate_grads", format!("layer `{}`", l.name)));
            }
            for (a, g) in l.grad_weight.data_mut().iter_mut().zip(gw.data()) {
                *a += scale * g;
            }
            for (a, g) in l.grad_bias.iter_mut().zip(gb) {
                *a += scale * g;
            }
        }
        Ok(())
    }
}

/// Gradient buffer aligned with a [`ParamStore`]'s layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<Real>>,
}

impl Grads {
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn zero(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.biases.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v = 0.0));
    }

    pub fn flat(&self) -> Vec<Real> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Self {
            name: name.into(),
            fan_in,
            fan_out,
        }
    }
}

/// He-uniform weights in `±√(6 / fan_in)`, zero biases.
pub fn init_params<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for s in specs {
        if s.fan_in == 0 || s.fan_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer `{}` has a zero dimension",
                s.name
            )));
        }
        let bound = (6.0 / s.fan_in as f64).sqrt();
        let data = (0..s.fan_in * s.fan_out)
            .map(|_| rng.random_range(-bound..bound) as Real)
            .collect();
        let weight = Tensor2::from_vec(s.fan_in, s.fan_out, data)?;
        store.push(Layer::new(s.name.clone(), weight, vec![0.0; s.fan_out])?)?;
    }
    Ok(store)
}

//! Dense layers and feed-forward networks.
//!
//! A layer computes `activation(W x + b)` with `W` stored as an
//! `(out_dim, in_dim)` matrix. Batched evaluation takes one example per row.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::NnError;

/// Element-wise output nonlinearity of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's own output value.
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Identity => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

const SIGMOID_LO: f64 = f64::MIN_POSITIVE;
const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function. Saturated results are pinned to the nearest
/// representable values inside the open interval (0, 1).
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(SIGMOID_LO, SIGMOID_HI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Array2<f64>,
    biases: Array1<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        biases: Array1<f64>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if weights.nrows() != biases.len() {
            return Err(NnError::BiasMismatch {
                rows: weights.nrows(),
                biases: biases.len(),
            });
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(NnError::InvalidConfig("layer dimensions must be positive".into()));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteParameters);
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights =
            Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-limit..=limit));
        Self {
            weights,
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    /// A layer mapping back from this layer's output space: weights are
    /// this layer's transpose and biases start at zero.
    pub fn transposed(&self, activation: Activation) -> Self {
        Self {
            weights: self.weights.t().to_owned(),
            biases: Array1::zeros(self.in_dim()),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.biases)
    }

    /// Batched forward pass; rows of `x` are examples.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.biases.view().insert_axis(Axis(0));
        if self.activation != Activation::Identity {
            let act = self.activation;
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    pub fn forward_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut z = self.weights.dot(&x) + &self.biases;
        let act = self.activation;
        z.mapv_inplace(|v| act.apply(v));
        z
    }
}

/// An ordered stack of dimension-compatible dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyNetwork);
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::IncompatibleLayers {
                    layer: k + 1,
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// Activations of every layer for a single input, final output last.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<Array1<f64>>, NnError> {
        if input.len() != self.in_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.in_dim(),
                actual: input.len(),
            });
        }
        let mut acts: Vec<Array1<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = match acts.last() {
                None => layer.forward_one(ArrayView1::from(input)),
                Some(prev) => layer.forward_one(prev.view()),
            };
            acts.push(next);
        }
        Ok(acts)
    }

    /// Batched forward pass keeping every layer's activations.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>, NnError> {
        self.check_input(x)?;
        Ok(forward_layers(&self.layers.iter().collect::<Vec<_>>(), x))
    }

    /// Batched forward pass returning only the final output.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x)?;
        let mut out = self.layers[0].forward_batch(x);
        for layer in &self.layers[1..] {
            out = layer.forward_batch(out.view());
        }
        Ok(out)
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.in_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.in_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }
}

pub(crate) fn forward_layers(layers: &[&DenseLayer], x: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for layer in layers {
        let next = match acts.last() {
            None => layer.forward_batch(x),
            Some(prev) => layer.forward_batch(prev.view()),
        };
        acts.push(next);
    }
    acts
}

//! Dense-network substrate: batched forward/backward passes, SGD and Adam
//! updates, central-difference gradient checks and a checksummed weight file.

mod gradcheck;
mod optim;
mod weights;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gradcheck::{grad_check, relative_error};
pub use optim::{update, Algorithm, OptimizerConfig, OptimizerState};
pub use weights::{load_weights, save_weights, WeightFile, WeightManifest};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("weight file: {0}")]
    Format(String),
    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative given pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        Self { in_dim, out_dim, activation }
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// A named flat array with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![0.0; n] }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.data).expect("matrix shape")
    }

    pub fn matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.data).expect("matrix shape")
    }

    pub fn vector(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[..])
    }

    pub fn vector_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.data[..])
    }
}

/// Ordered collection of parameter tensors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterBundle {
    pub tensors: Vec<Tensor>,
}

impl ParameterBundle {
    /// Fan-in scaled normal weights, zero biases. Tensor names are
    /// `{prefix}layer{i}.weight` / `.bias`.
    pub fn init<R: Rng>(specs: &[LayerSpec], prefix: &str, rng: &mut R) -> Self {
        let mut tensors = Vec::with_capacity(specs.len() * 2);
        for (i, s) in specs.iter().enumerate() {
            let scale = 1.0 / (s.in_dim as f64).sqrt();
            let data = (0..s.in_dim * s.out_dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            tensors.push(Tensor { name: format!("{prefix}layer{i}.weight"), shape: vec![s.out_dim, s.in_dim], data });
            tensors.push(Tensor::zeros(format!("{prefix}layer{i}.bias"), vec![s.out_dim]));
        }
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self { tensors: self.tensors.iter().map(|t| Tensor::zeros(t.name.clone(), t.shape.clone())).collect() }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn flat_get(&self, mut idx: usize) -> f64 {
        for t in &self.tensors {
            if idx < t.data.len() {
                return t.data[idx];
            }
            idx -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn flat_set(&mut self, mut idx: usize, value: f64) {
        for t in &mut self.tensors {
            if idx < t.data.len() {
                t.data[idx] = value;
                return;
            }
            idx -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn congruent(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    /// Concatenate bundles, keeping order.
    pub fn concat(parts: Vec<ParameterBundle>) -> Self {
        Self { tensors: parts.into_iter().flat_map(|p| p.tensors).collect() }
    }

    /// Split off consecutive groups of the given tensor counts.
    pub fn split(self, counts: &[usize]) -> Vec<ParameterBundle> {
        let mut it = self.tensors.into_iter();
        counts.iter().map(|&n| ParameterBundle { tensors: it.by_ref().take(n).collect() }).collect()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }
}

/// Inputs and pre-activations of every layer, recorded by `forward`.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

/// Batched forward pass; rows of `x` are samples.
pub fn forward(params: &ParameterBundle, specs: &[LayerSpec], x: ArrayView2<f64>) -> (Array2<f64>, Tape) {
    assert_eq!(params.tensors.len(), specs.len() * 2, "bundle does not match specs");
    assert_eq!(x.ncols(), specs[0].in_dim, "input width {} != {}", x.ncols(), specs[0].in_dim);
    let mut tape = Tape { inputs: Vec::new(), pre: Vec::new(), outputs: Vec::new() };
    let mut h = x.to_owned();
    for (i, spec) in specs.iter().enumerate() {
        let w = params.tensors[2 * i].matrix();
        let b = params.tensors[2 * i + 1].vector();
        let mut z = h.dot(&w.t());
        z += &b;
        let act = spec.activation;
        let a = z.mapv(|v| act.apply(v));
        tape.inputs.push(h);
        tape.pre.push(z);
        tape.outputs.push(a.clone());
        h = a;
    }
    (h, tape)
}

/// Single-sample convenience wrapper over [`forward`].
pub fn forward_one(params: &ParameterBundle, specs: &[LayerSpec], x: &[f64]) -> (Vec<f64>, Tape) {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row");
    let (out, tape) = forward(params, specs, view);
    (out.into_raw_vec_and_offset().0, tape)
}

/// Reverse-mode gradients of the batch output with respect to parameters and
/// inputs, given the upstream gradient of the loss with respect to the output.
pub fn backward(
    params: &ParameterBundle,
    specs: &[LayerSpec],
    tape: &Tape,
    upstream: ArrayView2<f64>,
) -> (ParameterBundle, Array2<f64>) {
    let mut grads = params.zeros_like();
    let mut delta = upstream.to_owned();
    for i in (0..specs.len()).rev() {
        let act = specs[i].activation;
        let z = &tape.pre[i];
        let a = &tape.outputs[i];
        ndarray::Zip::from(&mut delta).and(z).and(a).for_each(|d, &z, &a| *d *= act.derivative(z, a));
        let dw = delta.t().dot(&tape.inputs[i]);
        grads.tensors[2 * i].matrix_mut().assign(&dw);
        grads.tensors[2 * i + 1].vector_mut().assign(&delta.sum_axis(Axis(0)));
        delta = delta.dot(&params.tensors[2 * i].matrix());
    }
    (grads, delta)
}

/// Row-stack equally sized slices into a matrix.
pub fn stack_rows<'a, I>(rows: I, width: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        assert_eq!(r.len(), width);
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, width), data).expect("row stack")
}

pub fn param_count(specs: &[LayerSpec]) -> usize {
    specs.iter().map(LayerSpec::param_count).sum()
}

pub fn row(v: &Array1<f64>) -> ArrayView2<'_, f64> {
    v.view().insert_axis(Axis(0))
}

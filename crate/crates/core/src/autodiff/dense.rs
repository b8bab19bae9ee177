use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Grads, Tape, Var};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply(self, x: &mut DMatrix<f64>) {
        match self {
            Activation::Tanh => x.apply(|v| *v = super::tape::tanh(*v)),
        }
    }

    fn apply_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Fully connected network; hidden layers use `activation`, the output layer is affine.
/// Weights are stored `d_in × d_out` so a batch `X` (rows are samples) maps to `X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    dims: Vec<usize>,
    activation: Activation,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DMatrix<f64>>,
}

/// A network whose parameters are leaves of a tape.
#[derive(Debug, Clone)]
pub struct BoundNet {
    weights: Vec<Var>,
    biases: Vec<Var>,
    activation: Activation,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidConfig(format!("bad layer dims {dims:?}")));
    }
    Ok(())
}

impl DenseNet {
    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        validate_dims(dims)?;
        let weights = dims
            .windows(2)
            .map(|p| {
                let limit = (6.0 / (p[0] + p[1]) as f64).sqrt();
                DMatrix::from_fn(p[0], p[1], |_, _| rng.random_range(-limit..limit))
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            activation,
            weights,
            biases: dims[1..].iter().map(|&d| DMatrix::zeros(1, d)).collect(),
        })
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            activation,
            weights: dims.windows(2).map(|p| DMatrix::zeros(p[0], p[1])).collect(),
            biases: dims[1..].iter().map(|&d| DMatrix::zeros(1, d)).collect(),
        })
    }

    /// Single affine layer with identity weights.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut net = Self::zeros(&[dim, dim], Activation::Tanh)?;
        net.weights[0] = DMatrix::identity(dim, dim);
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DMatrix<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.biases
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("network input", self.input_dim(), x.ncols())?;
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = &h * w;
            for (j, mut col) in h.column_iter_mut().enumerate() {
                col.add_scalar_mut(b[(0, j)]);
            }
            if l < last {
                self.activation.apply(&mut h);
            }
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward_batch(&DMatrix::from_row_slice(1, x.len(), x))?;
        Ok(out.iter().copied().collect())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundNet {
        BoundNet {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            biases: self.biases.iter().map(|b| tape.leaf(b.clone())).collect(),
            activation: self.activation,
        }
    }

    /// Append parameters in canonical order: per layer, weights column-major then biases.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
    }

    /// Inverse of [`write_params`](Self::write_params); returns the number of values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        check_dim("parameter vector", self.n_params(), src.len().min(self.n_params()))?;
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&src[at..at + n]);
            at += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&src[at..at + n]);
            at += n;
        }
        Ok(at)
    }
}

impl BoundNet {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let last = self.weights.len() - 1;
        let mut h = x;
        for (l, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = tape.matmul(h, w);
            h = tape.add_row(h, b);
            if l < last {
                h = self.activation.apply_tape(tape, h);
            }
        }
        h
    }

    /// Append gradients in the same order as [`DenseNet::write_params`].
    pub fn write_grads(&self, tape: &Tape, grads: &mut Grads, out: &mut Vec<f64>) {
        for (&w, &b) in self.weights.iter().zip(&self.biases) {
            for v in [w, b] {
                match grads.take(v) {
                    Some(g) => out.extend_from_slice(g.as_slice()),
                    None => out.extend(std::iter::repeat_n(0.0, tape.value(v).len())),
                }
            }
        }
    }
}

/// Flat parameter vector of a model with a fixed canonical ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn pack(nets: &[&DenseNet]) -> Self {
        let mut out = Vec::with_capacity(nets.iter().map(|n| n.n_params()).sum());
        for net in nets {
            net.write_params(&mut out);
        }
        ParamVector(out)
    }

    pub fn unpack(&self, nets: &mut [&mut DenseNet]) -> Result<()> {
        let total: usize = nets.iter().map(|n| n.n_params()).sum();
        check_dim("parameter vector", total, self.0.len())?;
        let mut at = 0;
        for net in nets.iter_mut() {
            at += net.read_params(&self.0[at..])?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

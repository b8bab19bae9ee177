use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::dense::{Activation, BoundNet, DenseNet};
use super::tape::{Tape, Var};
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_LOWER: f64 = 0.01;
pub const DEFAULT_UPPER: f64 = 100.0;

/// `V(g) = ‖g‖²·(a + (b − a)·sigmoid(φ(g)))`, so `a‖g‖² ≤ V(g) ≤ b‖g‖²` and `V(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovHead {
    a: f64,
    b: f64,
    phi: DenseNet,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LyapunovHead {
    pub fn new(a: f64, b: f64, phi: DenseNet) -> Result<Self> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::InvalidConfig(format!("need 0 < a < b, got a={a}, b={b}")));
        }
        if phi.output_dim() != 1 {
            return Err(Error::InvalidConfig("phi must map to a scalar".into()));
        }
        Ok(Self { a, b, phi })
    }

    /// Head with a Xavier-initialized `φ` of the given hidden widths.
    pub fn xavier<R: Rng>(g_dim: usize, hidden: &[usize], a: f64, b: f64, rng: &mut R) -> Result<Self> {
        let mut dims = vec![g_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self::new(a, b, DenseNet::xavier(&dims, Activation::Tanh, rng)?)
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn phi(&self) -> &DenseNet {
        &self.phi
    }

    pub fn phi_mut(&mut self) -> &mut DenseNet {
        &mut self.phi
    }

    pub fn g_dim(&self) -> usize {
        self.phi.input_dim()
    }

    /// `V` for every row of `g`.
    pub fn value_batch(&self, g: &DMatrix<f64>) -> Result<DVector<f64>> {
        let phi = self.phi.forward_batch(g)?;
        Ok(DVector::from_fn(g.nrows(), |i, _| {
            g.row(i).norm_squared() * (self.a + (self.b - self.a) * sigmoid(phi[(i, 0)]))
        }))
    }

    pub fn value(&self, g: &[f64]) -> Result<f64> {
        check_dim("lyapunov input", self.g_dim(), g.len())?;
        Ok(self.value_batch(&DMatrix::from_row_slice(1, g.len(), g))?[0])
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundLyapunov {
        BoundLyapunov {
            a: self.a,
            b: self.b,
            phi: self.phi.bind(tape),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundLyapunov {
    a: f64,
    b: f64,
    phi: BoundNet,
}

impl BoundLyapunov {
    /// `n × 1` node of `V` per row of `g`.
    pub fn forward(&self, tape: &mut Tape, g: Var) -> Var {
        let phi = self.phi.forward(tape, g);
        let s = tape.sigmoid(phi);
        let coeff = tape.affine(s, self.b - self.a, self.a);
        let sq = tape.row_sum_sq(g);
        tape.mul(sq, coeff)
    }

    pub fn phi(&self) -> &BoundNet {
        &self.phi
    }
}

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Plant;
use crate::behavior_data::SignalLayout;
use crate::error::{check_dim, Result};

/// `x⁺ = A x + B u`, `y = C x`, with `w` laid out as `SignalLayout` says.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    x: DVector<f64>,
    layout: Arc<SignalLayout>,
    dt: f64,
}

impl LinearPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        x0: DVector<f64>,
        layout: Arc<SignalLayout>,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim("A cols", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("B cols", layout.u_dim(), b.ncols())?;
        check_dim("C cols", n, c.ncols())?;
        check_dim("C rows", layout.y_dim(), c.nrows())?;
        check_dim("x0", n, x0.len())?;
        Ok(Self {
            a,
            b,
            c,
            x: x0,
            layout,
            dt: 1.0,
        })
    }

    /// `y⁺ = y + u` in the `(u, y)` layout.
    pub fn integrator(x0: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, x0),
            Arc::new(SignalLayout::siso()),
        )
        .expect("static plant")
    }

    /// Position/velocity double integrator observed through position, `(u, y)` layout.
    pub fn double_integrator(position: f64, velocity: f64) -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_row_slice(&[position, velocity]),
            Arc::new(SignalLayout::siso()),
        )
        .expect("static plant")
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn set_state(&mut self, x: &[f64]) {
        self.x = DVector::from_column_slice(x);
    }
}

impl Plant for LinearPlant {
    fn layout(&self) -> Arc<SignalLayout> {
        self.layout.clone()
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn measure(&self) -> Vec<f64> {
        (&self.c * &self.x).iter().copied().collect()
    }

    fn apply(&mut self, u: &[f64]) {
        self.x = &self.a * &self.x + &self.b * DVector::from_column_slice(u);
    }

    fn state(&self) -> Vec<f64> {
        self.x.iter().copied().collect()
    }
}

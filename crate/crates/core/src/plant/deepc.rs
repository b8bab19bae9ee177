//! Receding-horizon DeePC baseline on a two-block (past/future) Hankel matrix.
//!
//! With data matrix `H` split into past rows `W_p` (all signals of the first `t_ini` slots),
//! future outputs `Y_f` and future inputs `U_f`, each step solves
//!
//! ```text
//! min_c  λ_ini‖W_p c − w_ini‖² + q‖Y_f c − y_ref‖² + r‖U_f c − u_ref‖² + λ_g‖c‖²
//! ```
//!
//! in closed form through the SVD `A = U S Vᵀ` of the stacked weighted rows:
//! `c = V diag(s/(s² + λ_g)) Uᵀ b`. Only the first planned input is applied, so the whole
//! plan collapses to a fixed linear map of `b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Controller;
use crate::behavior_data::{build_mosaic_hankel, SignalLayout, TrajectoryDataset, Window};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepcConfig {
    /// Past slots matched against the measured window.
    pub t_ini: usize,
    /// Planned future slots.
    pub horizon: usize,
    /// Output tracking weight.
    pub q: f64,
    /// Input effort weight.
    pub r: f64,
    /// Ridge weight on the column-combination vector.
    pub lambda_g: f64,
    /// Weight of the soft past-window match.
    pub lambda_ini: f64,
    /// Target sample; outputs and inputs are steered toward its components.
    pub setpoint: Vec<f64>,
}

impl DeepcConfig {
    pub fn new(t_ini: usize, w_dim: usize) -> Self {
        Self {
            t_ini,
            horizon: 10,
            q: 1.0,
            r: 0.1,
            lambda_g: 1e-3,
            lambda_ini: 1e4,
            setpoint: vec![0.0; w_dim],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Deepc {
    cfg: DeepcConfig,
    layout: std::sync::Arc<SignalLayout>,
    /// First planned input as a linear map of the right-hand side `b`.
    policy: DMatrix<f64>,
    rhs_len: usize,
    past_rows: usize,
}

impl Deepc {
    pub fn from_dataset(ds: &TrajectoryDataset, cfg: DeepcConfig) -> Result<Self> {
        let layout = ds.layout().clone();
        let w = layout.w_dim();
        check_dim("setpoint", w, cfg.setpoint.len())?;
        if cfg.t_ini == 0 || cfg.horizon == 0 {
            return Err(Error::InvalidConfig("t_ini and horizon must be positive".into()));
        }
        if !(cfg.q >= 0.0 && cfg.r >= 0.0 && cfg.lambda_g > 0.0 && cfg.lambda_ini > 0.0) {
            return Err(Error::InvalidConfig("DeePC weights must be nonnegative, ridges positive".into()));
        }
        let slots = cfg.t_ini + cfg.horizon;
        let h = build_mosaic_hankel(ds.trajectories(), slots - 1)?;
        let past_rows = cfg.t_ini * w;
        let y_dim = layout.y_dim();
        let u_dim = layout.u_dim();
        let n_rows = past_rows + cfg.horizon * (y_dim + u_dim);
        let mut a = DMatrix::zeros(n_rows, h.ncols());
        let (si, sq, sr) = (cfg.lambda_ini.sqrt(), cfg.q.sqrt(), cfg.r.sqrt());
        for i in 0..past_rows {
            a.row_mut(i).copy_from(&(h.row(i) * si));
        }
        let mut row = past_rows;
        for j in 0..cfg.horizon {
            let base = (cfg.t_ini + j) * w;
            for &c in layout.output_indices() {
                a.row_mut(row).copy_from(&(h.row(base + c) * sq));
                row += 1;
            }
            for &c in layout.input_indices() {
                a.row_mut(row).copy_from(&(h.row(base + c) * sr));
                row += 1;
            }
        }
        let base = cfg.t_ini * w;
        let first_input = DMatrix::from_fn(u_dim, h.ncols(), |i, j| h[(base + layout.input_indices()[i], j)]);
        // thin SVD of Aᵀ (tall) gives A = U S Vᵀ with U = right factor
        let svd = a.transpose().svd(true, true);
        let (Some(v), Some(ut)) = (svd.u, svd.v_t) else {
            return Err(Error::IllConditioned("DeePC data SVD failed".into()));
        };
        let smax = svd.singular_values.max();
        if !(smax > 0.0 && smax.is_finite()) {
            return Err(Error::IllConditioned("DeePC data matrix is zero or non-finite".into()));
        }
        let gains = svd.singular_values.map(|s| s / (s * s + cfg.lambda_g));
        let mut fv = first_input * v;
        for (j, mut col) in fv.column_iter_mut().enumerate() {
            col *= gains[j];
        }
        let policy = fv * ut;
        Ok(Self {
            cfg,
            layout,
            policy,
            rhs_len: n_rows,
            past_rows,
        })
    }

    pub fn config(&self) -> &DeepcConfig {
        &self.cfg
    }

    /// First input of the plan for the given past samples (`t_ini` slots, flattened).
    pub fn plan_first_input(&self, past: &[f64]) -> Result<Vec<f64>> {
        check_dim("DeePC past window", self.past_rows, past.len())?;
        let cfg = &self.cfg;
        let mut b = DVector::zeros(self.rhs_len);
        let si = cfg.lambda_ini.sqrt();
        for (i, v) in past.iter().enumerate() {
            b[i] = si * v;
        }
        let (sq, sr) = (cfg.q.sqrt(), cfg.r.sqrt());
        let mut row = self.past_rows;
        for _ in 0..cfg.horizon {
            for &c in self.layout.output_indices() {
                b[row] = sq * cfg.setpoint[c];
                row += 1;
            }
            for &c in self.layout.input_indices() {
                b[row] = sr * cfg.setpoint[c];
                row += 1;
            }
        }
        Ok((&self.policy * b).iter().copied().collect())
    }
}

impl Controller for Deepc {
    fn tag(&self) -> &str {
        "deepc"
    }

    fn control(&mut self, window: &Window) -> Result<Vec<f64>> {
        let data = window.data();
        if self.past_rows > data.len() {
            return Err(Error::DimensionMismatch {
                context: "DeePC t_ini exceeds the window",
                expected: self.past_rows,
                got: data.len(),
            });
        }
        self.plan_first_input(&data[data.len() - self.past_rows..])
    }
}

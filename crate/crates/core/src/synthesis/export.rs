//! Problem export in sparse triplet form for external conic solvers.
//!
//! Variables are `x = (svec(W), vec(Y))`: the upper triangle of `W` column by column
//! (entry `(i, j)`, `i ≤ j`, at `j(j+1)/2 + i`), then `Y` column-major.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::StabilizationProblem;

/// Symmetric block `F(x) = constant + Σ coeff·x_var ≽ 0`, lower-triangle entries only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
    /// `(row, col, var, value)` with `row ≥ col`.
    pub coeffs: Vec<(usize, usize, usize, f64)>,
    /// `(row, col, value)` with `row ≥ col`.
    pub constant: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicExport {
    pub g_dim: usize,
    pub beta: f64,
    pub n_vars: usize,
    /// `A_eq x = 0`, `(row, col, value)`.
    pub eq_rows: usize,
    pub eq: Vec<(usize, usize, f64)>,
    pub psd_blocks: Vec<PsdBlock>,
}

fn w_var(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

pub fn export_conic(prob: &StabilizationProblem) -> ConicExport {
    let g = prob.g_dim();
    let beta = prob.beta();
    let n_w = g * (g + 1) / 2;
    let y_var = |i: usize, j: usize| n_w + j * g + i;
    let a = prob.past_operator();
    let b = prob.future_operator();
    let m = a.nrows();

    let mut eq = Vec::new();
    for col in 0..g {
        for r in 0..m {
            let row = r + m * col;
            for k in 0..g {
                if a[(r, k)] != 0.0 {
                    eq.push((row, y_var(k, col), a[(r, k)]));
                }
                if b[(r, k)] != 0.0 {
                    eq.push((row, w_var(k, col), -b[(r, k)]));
                }
            }
        }
    }

    let eps = prob.eps_pd();
    let mut w_block = PsdBlock {
        name: "W - eps_pd I".into(),
        dim: g,
        coeffs: Vec::new(),
        constant: (0..g).map(|i| (i, i, -eps)).collect(),
    };
    for j in 0..g {
        for i in j..g {
            w_block.coeffs.push((i, j, w_var(i, j), 1.0));
        }
    }

    let mut lmi = PsdBlock {
        name: "[[(1-beta)W, Y^T], [Y, W]]".into(),
        dim: 2 * g,
        coeffs: Vec::new(),
        constant: Vec::new(),
    };
    for j in 0..g {
        for i in j..g {
            lmi.coeffs.push((i, j, w_var(i, j), 1.0 - beta));
            lmi.coeffs.push((g + i, g + j, w_var(i, j), 1.0));
        }
    }
    for col in 0..g {
        for k in 0..g {
            lmi.coeffs.push((g + k, col, y_var(k, col), 1.0));
        }
    }

    ConicExport {
        g_dim: g,
        beta,
        n_vars: n_w + g * g,
        eq_rows: m * g,
        eq,
        psd_blocks: vec![w_block, lmi],
    }
}

impl ConicExport {
    pub fn pack(&self, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
        let g = self.g_dim;
        let mut x = vec![0.0; self.n_vars];
        for j in 0..g {
            for i in 0..=j {
                x[w_var(i, j)] = 0.5 * (w[(i, j)] + w[(j, i)]);
            }
        }
        let n_w = g * (g + 1) / 2;
        for j in 0..g {
            for i in 0..g {
                x[n_w + j * g + i] = y[(i, j)];
            }
        }
        x
    }

    pub fn eq_residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.eq_rows];
        for &(row, col, v) in &self.eq {
            r[row] += v * x[col];
        }
        r
    }

    pub fn evaluate_block(&self, block: &PsdBlock, x: &[f64]) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(block.dim, block.dim);
        for &(i, j, v) in &block.constant {
            f[(i, j)] += v;
        }
        for &(i, j, var, v) in &block.coeffs {
            f[(i, j)] += v * x[var];
        }
        for j in 0..block.dim {
            for i in 0..j {
                f[(i, j)] = f[(j, i)];
            }
        }
        f
    }
}

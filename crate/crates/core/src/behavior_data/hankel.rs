use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

use super::Trajectory;

/// Default relative threshold for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Hankel matrix of order `L+1`: column `j` is the window `w̃_{L+j}`.
pub fn build_hankel(traj: &Trajectory, depth: usize) -> Result<DMatrix<f64>> {
    let horizon = traj.horizon();
    if horizon < depth {
        return Err(Error::TrajectoryTooShort {
            horizon,
            needed: depth,
        });
    }
    let rows = (depth + 1) * traj.layout().w_dim();
    let cols = horizon + 1 - depth;
    let mut h = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        h.column_mut(j)
            .copy_from_slice(traj.segment(j, j + depth));
    }
    Ok(h)
}

/// Column-wise concatenation of the Hankel matrices of several trajectories.
pub fn build_mosaic_hankel<'a, I>(trajs: I, depth: usize) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let blocks = trajs
        .into_iter()
        .map(|t| build_hankel(t, depth))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = blocks.first() else {
        return Err(Error::InvalidConfig("no trajectories for Hankel matrix".into()));
    };
    let rows = first.nrows();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut h = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in &blocks {
        h.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub numerical_rank: usize,
    pub required: usize,
    pub satisfied: bool,
    pub singular_values: Vec<f64>,
}

/// Numerical rank of `h` against `(L+1)·u_dim + n_B`; counts singular values above `tol·σ_max`.
pub fn check_rank(h: &DMatrix<f64>, depth: usize, u_dim: usize, n_b: usize, tol: f64) -> RankReport {
    let singular_values = linalg::singular_values(h);
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let numerical_rank = singular_values.iter().filter(|&&s| s > tol * smax).count();
    let required = (depth + 1) * u_dim + n_b;
    RankReport {
        numerical_rank,
        required,
        satisfied: numerical_rank == required,
        singular_values,
    }
}

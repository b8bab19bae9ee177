//! Exact intrinsic-state construction for LTI behaviors.
//!
//! The Hankel matrix of a persistently exciting trajectory spans the restricted behavior.
//! Keeping its leading `g_dim` singular triplets gives a full-column-rank `H_r = U_g Σ_g`
//! whose left inverse `H_pinv = Σ_g⁻¹ U_gᵀ` is the state map: `g = H_pinv w̃`, `w̃ = H_r g`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::behavior_data::{
    build_hankel, build_mosaic_hankel, check_rank, RankReport, SignalLayout, Trajectory, Window, WindowSelectors,
};
use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct IntrinsicLtiRep {
    h_r: DMatrix<f64>,
    h_pinv: DMatrix<f64>,
    g_dim: usize,
    selectors: WindowSelectors,
    layout: Arc<SignalLayout>,
    singular_values: Vec<f64>,
}

/// SVD reduction of `h` to its leading `g_dim` directions.
pub fn reduce_hankel(
    h: &DMatrix<f64>,
    g_dim: usize,
    depth: usize,
    layout: Arc<SignalLayout>,
    tol: f64,
) -> Result<IntrinsicLtiRep> {
    check_dim("Hankel rows", (depth + 1) * layout.w_dim(), h.nrows())?;
    if g_dim == 0 {
        return Err(Error::InvalidConfig("g_dim must be positive".into()));
    }
    let (u, sigma) = linalg::sorted_svd(h);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let threshold = tol * smax;
    match sigma.get(g_dim - 1) {
        Some(&s) if s > threshold => {}
        other => {
            return Err(Error::RankDeficient {
                index: g_dim - 1,
                value: other.copied().unwrap_or(0.0),
                threshold,
            })
        }
    }
    let u_g = u.columns(0, g_dim).into_owned();
    let mut h_r = u_g.clone();
    let mut h_pinv = u_g.transpose();
    for j in 0..g_dim {
        h_r.column_mut(j).scale_mut(sigma[j]);
        h_pinv.row_mut(j).scale_mut(1.0 / sigma[j]);
    }
    let selectors = WindowSelectors::new(depth, &layout);
    Ok(IntrinsicLtiRep {
        h_r,
        h_pinv,
        g_dim,
        selectors,
        layout,
        singular_values: sigma[..g_dim].to_vec(),
    })
}

/// Build the Hankel matrix of `traj`, report its rank against `(L+1)u + n_B`,
/// and reduce it to that many intrinsic coordinates.
pub fn fit_lti(
    traj: &Trajectory,
    depth: usize,
    n_b: usize,
    tol: f64,
) -> Result<(IntrinsicLtiRep, RankReport)> {
    let h = build_hankel(traj, depth)?;
    let layout = traj.layout().clone();
    let report = check_rank(&h, depth, layout.u_dim(), n_b, tol);
    let rep = reduce_hankel(&h, report.required, depth, layout, tol)?;
    Ok((rep, report))
}

/// [`fit_lti`] over several trajectories through their mosaic Hankel matrix.
pub fn fit_lti_mosaic(
    trajs: &[Trajectory],
    depth: usize,
    n_b: usize,
    tol: f64,
) -> Result<(IntrinsicLtiRep, RankReport)> {
    let Some(first) = trajs.first() else {
        return Err(Error::InvalidConfig("no trajectories to fit".into()));
    };
    let h = build_mosaic_hankel(trajs, depth)?;
    let layout = first.layout().clone();
    let report = check_rank(&h, depth, layout.u_dim(), n_b, tol);
    let rep = reduce_hankel(&h, report.required, depth, layout, tol)?;
    Ok((rep, report))
}

impl IntrinsicLtiRep {
    /// Rebuild from a stored `H_r`; the left inverse is recomputed from its SVD.
    pub fn from_reduced(
        h_r: DMatrix<f64>,
        depth: usize,
        layout: Arc<SignalLayout>,
        singular_values: Vec<f64>,
    ) -> Result<Self> {
        check_dim("H_r rows", (depth + 1) * layout.w_dim(), h_r.nrows())?;
        let g_dim = h_r.ncols();
        let svd = h_r.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-14 * smax) {
            return Err(Error::RankDeficient {
                index: g_dim.saturating_sub(1),
                value: smin,
                threshold: 1e-14 * smax,
            });
        }
        let h_pinv = svd
            .pseudo_inverse(0.0)
            .map_err(|e| Error::Format(e.to_string()))?;
        let selectors = WindowSelectors::new(depth, &layout);
        Ok(Self {
            h_r,
            h_pinv,
            g_dim,
            selectors,
            layout,
            singular_values,
        })
    }

    pub fn h_r(&self) -> &DMatrix<f64> {
        &self.h_r
    }

    pub fn h_pinv(&self) -> &DMatrix<f64> {
        &self.h_pinv
    }

    pub fn g_dim(&self) -> usize {
        self.g_dim
    }

    pub fn depth(&self) -> usize {
        self.selectors.depth()
    }

    pub fn selectors(&self) -> &WindowSelectors {
        &self.selectors
    }

    pub fn layout(&self) -> &Arc<SignalLayout> {
        &self.layout
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// State cardinality implied by `g_dim = (L+1)u + n_B`.
    pub fn n_b(&self) -> usize {
        self.g_dim - (self.depth() + 1) * self.layout.u_dim()
    }

    /// `Π₋ H_r`.
    pub fn past_block(&self) -> DMatrix<f64> {
        self.h_r.rows_range(self.selectors.past_rows()).into_owned()
    }

    /// `Π₊ H_r`.
    pub fn future_block(&self) -> DMatrix<f64> {
        self.h_r.rows_range(self.selectors.future_rows()).into_owned()
    }

    /// `Π_u H_r`.
    pub fn input_block(&self) -> DMatrix<f64> {
        linalg::select_rows(&self.h_r, &self.selectors.input_rows())
    }

    pub fn chi_slice(&self, w: &[f64]) -> Result<DVector<f64>> {
        check_dim("window", self.h_r.nrows(), w.len())?;
        Ok(&self.h_pinv * DVector::from_column_slice(w))
    }

    /// State map `g = H_pinv w̃`.
    pub fn chi(&self, w: &Window) -> Result<DVector<f64>> {
        check_dim("window depth", self.depth(), w.depth())?;
        self.chi_slice(w.data())
    }

    /// Parameterization map `w̃ = H_r g`.
    pub fn eta(&self, g: &DVector<f64>) -> Result<Window> {
        check_dim("intrinsic state", self.g_dim, g.len())?;
        let w = &self.h_r * g;
        Window::new(w.as_slice().to_vec(), self.depth(), self.layout.clone())
    }

    /// `Π₋ H_r g_k − Π₊ H_r g_{k-1}`; zero exactly for admissible one-step transitions.
    pub fn weaving_residual(&self, g_k: &DVector<f64>, g_km1: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("intrinsic state", self.g_dim, g_k.len())?;
        check_dim("intrinsic state", self.g_dim, g_km1.len())?;
        let now = &self.h_r * g_k;
        let before = &self.h_r * g_km1;
        let past = now.rows_range(self.selectors.past_rows());
        let future = before.rows_range(self.selectors.future_rows());
        Ok(past - future)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = LtiModelFile {
            depth: self.depth(),
            g_dim: self.g_dim,
            w_dim: self.layout.w_dim(),
            input_indices: self.layout.input_indices().to_vec(),
            output_indices: self.layout.output_indices().to_vec(),
            names: self.layout.names().to_vec(),
            units: self.layout.units().to_vec(),
            h_r: linalg::to_nested(&self.h_r),
            singular_values: self.singular_values.clone(),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: LtiModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        let layout = SignalLayout::new(
            file.w_dim,
            file.input_indices,
            file.output_indices,
            file.names,
            file.units,
        )?;
        let h_r = linalg::from_nested(&file.h_r)?;
        check_dim("stored g_dim", file.g_dim, h_r.ncols())?;
        Self::from_reduced(h_r, file.depth, Arc::new(layout), file.singular_values)
    }
}

/// On-disk `lti_model.json`.
#[derive(Debug, Serialize, Deserialize)]
struct LtiModelFile {
    #[serde(rename = "L")]
    depth: usize,
    g_dim: usize,
    w_dim: usize,
    input_indices: Vec<usize>,
    output_indices: Vec<usize>,
    names: Vec<String>,
    units: Vec<String>,
    #[serde(rename = "H_r")]
    h_r: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior_data::{make_window, DEFAULT_RANK_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn integrator_run(n: usize, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = -0.4;
        let mut data = Vec::new();
        for _ in 0..n {
            let u: f64 = rng.random_range(-1.0..1.0);
            data.extend_from_slice(&[u, y]);
            y += u;
        }
        Trajectory::from_flat(data, Arc::new(SignalLayout::siso()), 1.0).unwrap()
    }

    #[test]
    fn orthonormal_input_keeps_span() {
        let layout = Arc::new(SignalLayout::autonomous_scalar());
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let rep = reduce_hankel(&h, 2, 2, layout, DEFAULT_RANK_TOL).unwrap();
        let proj = rep.h_r() * rep.h_pinv();
        assert!((&proj * &h - &h).norm() < 1e-14);
    }

    #[test]
    fn integrator_reduction_reconstructs_hankel() {
        let t = integrator_run(201, 3);
        let h = build_hankel(&t, 1).unwrap();
        let rep = reduce_hankel(&h, 3, 1, t.layout().clone(), DEFAULT_RANK_TOL).unwrap();
        // oracle: the full SVD reconstruction of H is H itself, so the projector must fix it
        let resid = (&h - rep.h_r() * rep.h_pinv() * &h).norm() / h.norm();
        assert!(resid <= 1e-10, "residual {resid}");
        let eye = rep.h_pinv() * rep.h_r();
        assert!(linalg::max_abs(&(eye - DMatrix::identity(3, 3))) <= 1e-10);
    }

    #[test]
    fn rank_deficient_request_errors() {
        let t = integrator_run(50, 4);
        let h = build_hankel(&t, 1).unwrap();
        assert!(matches!(
            reduce_hankel(&h, 4, 1, t.layout().clone(), DEFAULT_RANK_TOL),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn maps_are_linear_and_inverse_on_span() {
        let t = integrator_run(100, 5);
        let (rep, _) = fit_lti(&t, 2, 1, DEFAULT_RANK_TOL).unwrap();
        let zero = Window::zeros(2, t.layout().clone());
        assert!(rep.chi(&zero).unwrap().iter().all(|&v| v == 0.0));
        assert!(rep.eta(&DVector::zeros(rep.g_dim())).unwrap().data().iter().all(|&v| v == 0.0));
        for j in 0..rep.g_dim() {
            let col = rep.h_r().column(j).into_owned();
            let back = rep.h_r() * rep.chi_slice(col.as_slice()).unwrap();
            assert!((back - &col).amax() <= 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let g = DVector::from_fn(rep.g_dim(), |_, _| rng.random_range(-1.0..1.0));
            let again = rep.chi(&rep.eta(&g).unwrap()).unwrap();
            assert!((again - &g).amax() <= 1e-10);
        }
    }

    #[test]
    fn weaving_residual_vanishes_on_data_and_not_on_noise() {
        let t = integrator_run(80, 6);
        let (rep, _) = fit_lti(&t, 2, 1, DEFAULT_RANK_TOL).unwrap();
        let zero = DVector::zeros(rep.g_dim());
        assert_eq!(rep.weaving_residual(&zero, &zero).unwrap().amax(), 0.0);
        for k in 3..=t.horizon() {
            let gk = rep.chi(&make_window(&t, k, 2).unwrap()).unwrap();
            let gkm1 = rep.chi(&make_window(&t, k - 1, 2).unwrap()).unwrap();
            assert!(rep.weaving_residual(&gk, &gkm1).unwrap().amax() <= 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = DVector::from_fn(rep.g_dim(), |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(rep.g_dim(), |_, _| rng.random_range(-1.0..1.0));
        assert!(rep.weaving_residual(&a, &b).unwrap().amax() > 1e-3);
    }

    #[test]
    fn g_dim_matches_rank_requirement() {
        let t = integrator_run(120, 11);
        let (rep, report) = fit_lti(&t, 3, 1, DEFAULT_RANK_TOL).unwrap();
        assert!(report.satisfied);
        assert_eq!(rep.g_dim(), report.required);
        assert_eq!(rep.n_b(), 1);
    }

    #[test]
    fn save_load_preserves_maps() {
        let t = integrator_run(60, 12);
        let (rep, _) = fit_lti(&t, 1, 1, DEFAULT_RANK_TOL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lti_model.json");
        rep.save(&path).unwrap();
        let back = IntrinsicLtiRep::load(&path).unwrap();
        assert_eq!(back.h_r(), rep.h_r());
        assert!(linalg::max_abs(&(back.h_pinv() * back.h_r() - DMatrix::identity(3, 3))) <= 1e-10);
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["L", "g_dim", "w_dim", "input_indices", "H_r", "singular_values"] {
            assert!(raw.get(key).is_some(), "missing {key}");
        }
    }
}

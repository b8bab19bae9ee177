//! Semidefinite feasibility synthesis of an exponentially stable controlled LTI behavior.
//!
//! Unknowns are a symmetric `W` and a square `Y`. A solution satisfies
//!
//! ```text
//! W ≻ 0
//! Π₋ H_r Y − Π₊ H_r W = 0
//! [ (1−β) W   Yᵀ ]
//! [    Y      W  ]  ≽ 0
//! ```
//!
//! and yields the controlled transition `Ψ = Y W⁻¹`, the Lyapunov matrix `M = W⁻¹`, and the
//! gain `K = Π_u H_r Ψ H_pinv` acting on the previous window: `u_k = K w̃_{k-1}`.

mod export;
mod solver;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::lti_behavior::IntrinsicLtiRep;

pub use export::{export_conic, ConicExport, PsdBlock};
pub use solver::{polish_min_y, solve_feasibility};

pub const DEFAULT_EPS_PD: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Largest acceptable condition number of `W` when inverting it.
pub const MAX_CONDITION: f64 = 1e12;

/// How the weaving equality is posed on the data operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeavingMode {
    /// `Π₋H_r Y = Π₊H_r W` with the raw blocks.
    Exact,
    /// `Π₋H_r` truncated to its behavioral rank `g − u` and `Π₊H_r` projected onto its range.
    /// Identical to `Exact` on noise-free LTI data; keeps the input freedom on data from
    /// mildly nonlinear plants.
    Projected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Residual tolerance for the certificate checks.
    pub tol: f64,
    /// The PSD step projects onto `Z ≽ margin·I`; the feasible set is a cone so the
    /// normalization is free.
    pub margin: f64,
    /// Accept the subspace iterate once `λ_min(Z) ≥ accept_fraction·margin`.
    pub accept_fraction: f64,
    pub weaving: WeavingMode,
    /// Shrink `‖Y‖` after a feasible point is found.
    pub polish: bool,
    /// When the projections end without a certificate, continue with a log-barrier
    /// search for the largest normalized `λ_min(Z)` on the same subspace.
    pub barrier_fallback: bool,
    /// Seed for the sampled decay checks.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5_000,
            tol: DEFAULT_TOL,
            margin: 1.0,
            accept_fraction: 0.01,
            weaving: WeavingMode::Projected,
            polish: false,
            barrier_fallback: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilizationProblem {
    rep: IntrinsicLtiRep,
    beta: f64,
    eps_pd: f64,
    options: SolverOptions,
    /// Left operator of the weaving equality (`Π₋H_r` or its truncation).
    past: DMatrix<f64>,
    /// Right operator of the weaving equality (`Π₊H_r` or its projection).
    future: DMatrix<f64>,
}

/// Encode the feasibility problem for decay rate `beta ∈ (0, 1]`.
pub fn assemble(rep: &IntrinsicLtiRep, beta: f64, eps_pd: f64) -> Result<StabilizationProblem> {
    assemble_with(rep, beta, eps_pd, SolverOptions::default())
}

pub fn assemble_with(
    rep: &IntrinsicLtiRep,
    beta: f64,
    eps_pd: f64,
    options: SolverOptions,
) -> Result<StabilizationProblem> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidConfig(format!("beta = {beta} outside (0, 1]")));
    }
    if !(eps_pd > 0.0) {
        return Err(Error::InvalidConfig(format!("eps_pd = {eps_pd} must be positive")));
    }
    if !(options.margin > 0.0 && options.accept_fraction > 0.0 && options.accept_fraction <= 1.0) {
        return Err(Error::InvalidConfig("invalid solver margin settings".into()));
    }
    let (past, future) = weaving_operators(rep, options.weaving);
    Ok(StabilizationProblem {
        rep: rep.clone(),
        beta,
        eps_pd,
        options,
        past,
        future,
    })
}

fn weaving_operators(rep: &IntrinsicLtiRep, mode: WeavingMode) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = rep.past_block();
    let b = rep.future_block();
    match mode {
        WeavingMode::Exact => (a, b),
        WeavingMode::Projected => {
            let rank = rep.g_dim() - rep.layout().u_dim();
            let (u, s) = linalg::sorted_svd(&a);
            let r = rank.min(s.len());
            let u_r = u.columns(0, r).into_owned();
            let proj = &u_r * u_r.transpose();
            (&proj * &a, &proj * &b)
        }
    }
}

impl StabilizationProblem {
    pub fn rep(&self) -> &IntrinsicLtiRep {
        &self.rep
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eps_pd(&self) -> f64 {
        self.eps_pd
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn g_dim(&self) -> usize {
        self.rep.g_dim()
    }

    pub fn past_operator(&self) -> &DMatrix<f64> {
        &self.past
    }

    pub fn future_operator(&self) -> &DMatrix<f64> {
        &self.future
    }

    /// `[[(1−β)W, Yᵀ], [Y, W]]`.
    pub fn lmi_block(&self, w: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        lmi_block(self.beta, w, y)
    }
}

pub(crate) fn lmi_block(beta: f64, w: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let g = w.nrows();
    let mut z = DMatrix::zeros(2 * g, 2 * g);
    z.view_mut((0, 0), (g, g)).copy_from(&(w * (1.0 - beta)));
    z.view_mut((0, g), (g, g)).copy_from(&y.transpose());
    z.view_mut((g, 0), (g, g)).copy_from(y);
    z.view_mut((g, g), (g, g)).copy_from(w);
    z
}

/// `D W D` with `D = diag(σ_i/σ_1)`: `W` re-expressed in the orthonormal window chart
/// `U_g`, where its conditioning no longer carries the spread of the Hankel spectrum.
pub fn balanced(rep: &IntrinsicLtiRep, w: &DMatrix<f64>) -> DMatrix<f64> {
    let sv = rep.singular_values();
    let s0 = sv[0];
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] * (sv[i] / s0) * (sv[j] / s0))
}

/// Residuals of a candidate certificate. Matrix residuals are max-abs entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `λ_min` of the balanced `W` (see [`balanced`]).
    pub min_eig_w: f64,
    /// `eps_pd` times `λ_max` of the balanced `W`.
    pub eps_pd_effective: f64,
    pub lmi_min_eig: f64,
    /// `Π₋H_r Y − Π₊H_r W` on the raw data blocks.
    pub weaving: f64,
    /// Same residual on the operators the problem was posed with.
    pub weaving_model: f64,
    /// `Π₋H_r Ψ − Π₊H_r` on the raw data blocks.
    pub subset: f64,
    pub subset_model: f64,
    /// `(I − H_r H_pinv) H_r Ψ`.
    pub span: f64,
    pub spectral_radius: f64,
    /// Largest observed `‖Ψg‖_M / ‖g‖_M` over sampled trajectories, `M = W⁻¹`.
    pub max_decay_ratio: f64,
    pub decay_bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizedController {
    pub beta: f64,
    #[serde(rename = "W", with = "nested")]
    pub w: DMatrix<f64>,
    #[serde(rename = "Y", with = "nested")]
    pub y: DMatrix<f64>,
    #[serde(rename = "Psi", with = "nested")]
    pub psi: DMatrix<f64>,
    /// `u_k = K w̃_{k-1}`.
    #[serde(rename = "K", with = "nested")]
    pub gain: DMatrix<f64>,
    #[serde(rename = "L")]
    pub depth: usize,
    pub residuals: CertificateReport,
}

/// Report for a search that did not produce a certificate. Never a proof of infeasibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub beta: f64,
    pub iterations: usize,
    pub reason: StopReason,
    /// Smallest Frobenius distance seen between the subspace iterate and the PSD set.
    pub best_gap: f64,
    /// Largest `λ_min` of a subspace iterate, relative to the margin.
    pub best_min_eig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Stalled,
    EmptySubspace,
    /// The barrier search bounded the normalized `λ_min(Z)` below zero.
    NoInterior,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Feasible(StabilizedController),
    Infeasible(InfeasibleReport),
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible(_))
    }

    pub fn controller(&self) -> Option<&StabilizedController> {
        match self {
            SolveOutcome::Feasible(c) => Some(c),
            SolveOutcome::Infeasible(_) => None,
        }
    }
}

/// `Ψ = Y W⁻¹` and `K = Π_u H_r Ψ H_pinv`, with the certificate recomputed.
pub fn extract_controller(
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rep: &IntrinsicLtiRep,
    beta: f64,
) -> Result<StabilizedController> {
    let g = rep.g_dim();
    check_dim("W rows", g, w.nrows())?;
    check_dim("W cols", g, w.ncols())?;
    check_dim("Y rows", g, y.nrows())?;
    check_dim("Y cols", g, y.ncols())?;
    let w = linalg::symmetrize(w);
    let cond = linalg::sym_condition_number(&w);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular(cond));
    }
    let lu = w.clone().lu();
    // Ψ = Y W⁻¹ = (W⁻¹ Yᵀ)ᵀ for symmetric W
    let psi = lu
        .solve(&y.transpose())
        .ok_or(Error::Singular(cond))?
        .transpose();
    let gain = rep.input_block() * &psi * rep.h_pinv();
    let mut ctrl = StabilizedController {
        beta,
        w,
        y: y.clone(),
        psi,
        gain,
        depth: rep.depth(),
        residuals: empty_report(),
    };
    ctrl.residuals = verify_certificate(&ctrl, rep, beta);
    Ok(ctrl)
}

fn empty_report() -> CertificateReport {
    CertificateReport {
        min_eig_w: f64::NAN,
        eps_pd_effective: f64::NAN,
        lmi_min_eig: f64::NAN,
        weaving: f64::NAN,
        weaving_model: f64::NAN,
        subset: f64::NAN,
        subset_model: f64::NAN,
        span: f64::NAN,
        spectral_radius: f64::NAN,
        max_decay_ratio: f64::NAN,
        decay_bound: f64::NAN,
        passed: false,
    }
}

/// Recompute every certificate residual, using the default projected weaving operators
/// for the `*_model` entries.
pub fn verify_certificate(
    ctrl: &StabilizedController,
    rep: &IntrinsicLtiRep,
    beta: f64,
) -> CertificateReport {
    verify_with(ctrl, rep, beta, DEFAULT_EPS_PD, DEFAULT_TOL, WeavingMode::Projected, 0)
}

pub fn verify_with(
    ctrl: &StabilizedController,
    rep: &IntrinsicLtiRep,
    beta: f64,
    eps_pd: f64,
    tol: f64,
    mode: WeavingMode,
    seed: u64,
) -> CertificateReport {
    let (w, y, psi) = (&ctrl.w, &ctrl.y, &ctrl.psi);
    let a = rep.past_block();
    let b = rep.future_block();
    let (a_m, b_m) = weaving_operators(rep, mode);

    let eig_w = linalg::sym_eigen(&balanced(rep, w)).eigenvalues;
    let min_eig_w = eig_w.min();
    let eps_pd_effective = eps_pd * eig_w.max().max(0.0);
    let lmi_min_eig = linalg::min_eigenvalue(&lmi_block(beta, w, y));
    let weaving = linalg::max_abs(&(&a * y - &b * w));
    let weaving_model = linalg::max_abs(&(&a_m * y - &b_m * w));
    let subset = linalg::max_abs(&(&a * psi - &b));
    let subset_model = linalg::max_abs(&(&a_m * psi - &b_m));
    let image = rep.h_r() * psi;
    let span = linalg::max_abs(&(&image - rep.h_r() * (rep.h_pinv() * &image)));
    let spectral_radius = linalg::spectral_radius(psi);

    let decay_bound = (1.0 - beta).sqrt();
    let max_decay_ratio = sampled_decay_ratio(psi, w, seed);

    let passed = min_eig_w >= eps_pd_effective
        && lmi_min_eig >= -tol
        && weaving_model <= tol
        && subset_model <= tol
        && max_decay_ratio <= decay_bound + 1e-8;
    CertificateReport {
        min_eig_w,
        eps_pd_effective,
        lmi_min_eig,
        weaving,
        weaving_model,
        subset,
        subset_model,
        span,
        spectral_radius,
        max_decay_ratio,
        decay_bound,
        passed,
    }
}

/// Simulate `g ← Ψ g` from random unit starts and track the largest one-step M-norm ratio.
fn sampled_decay_ratio(psi: &DMatrix<f64>, w: &DMatrix<f64>, seed: u64) -> f64 {
    let g = psi.nrows();
    let Some(chol) = w.clone().cholesky() else {
        return f64::INFINITY;
    };
    let m_norm = |v: &DVector<f64>| v.dot(&chol.solve(v)).max(0.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..32 {
        let mut v = DVector::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..50 {
            let before = m_norm(&v);
            if before < 1e-200 {
                break;
            }
            let next = psi * &v;
            worst = worst.max(m_norm(&next) / before);
            v = next / before;
        }
    }
    worst
}

impl StabilizedController {
    /// `u_k` for the previous window `w̃_{k-1}`.
    pub fn control(&self, window: &[f64]) -> Result<Vec<f64>> {
        check_dim("window", self.gain.ncols(), window.len())?;
        Ok((&self.gain * DVector::from_column_slice(window))
            .iter()
            .copied()
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub(crate) mod nested {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        linalg::to_nested(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        linalg::from_nested(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests;

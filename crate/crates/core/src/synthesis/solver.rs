//! Alternating projections between the structured weaving subspace and the shifted PSD cone.
//!
//! The iterate is the symmetric `2g × 2g` block `Z = [[(1−β)W, Yᵀ], [Y, W]]`. The subspace
//! `S` collects every `Z` of that shape whose `(W, Y)` satisfy the weaving equality; its
//! Frobenius projection is a precomputed orthonormal basis. The convex side is
//! `{Z ≽ margin·I}`, projected by eigenvalue clipping.
//!
//! Projections crawl when the feasible set is thin. If they end without a certificate, a
//! log-barrier Newton method on the same subspace maximizes `t` subject to `Z − tI ≻ 0`
//! and `tr W = g`; a positive optimum is a certificate, a negative upper bound proves
//! there is none.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg;

use super::{
    extract_controller, verify_with, InfeasibleReport, SolveOutcome, StabilizationProblem,
    StabilizedController, StopReason,
};

/// Iterations over which the PSD gap must shrink by at least `STALL_REL` to keep going.
const STALL_WINDOW: usize = 250;
const STALL_REL: f64 = 1e-7;

struct Subspace {
    g: usize,
    beta: f64,
    /// Orthonormal basis of `vec(S)`, column-major `vec`.
    basis: DMatrix<f64>,
    /// Coordinates are rescaled by `D = diag(σ/σ₁)`: the search runs on `(DWD, DYD)`,
    /// which leaves both the weaving equality and the LMI invariant.
    scale: DVector<f64>,
}

impl Subspace {
    fn new(prob: &StabilizationProblem) -> Self {
        let g = prob.g_dim();
        let beta = prob.beta();
        let sv = prob.rep().singular_values();
        let scale = DVector::from_fn(g, |i, _| (sv[i] / sv[0]).max(1e-300));
        let inv = DMatrix::from_diagonal(&scale.map(|v| 1.0 / v));
        let a = prob.past_operator() * &inv;
        let b = prob.future_operator() * &inv;
        let m = a.nrows();
        let n_w = g * (g + 1) / 2;
        let n_p = n_w + g * g;
        let w_idx = |i: usize, j: usize| {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            hi * (hi + 1) / 2 + lo
        };
        let y_idx = |i: usize, j: usize| n_w + j * g + i;

        // weaving equality C p = 0, one row per entry of A Y − B W
        let mut c = DMatrix::zeros(m * g, n_p);
        for col in 0..g {
            for r in 0..m {
                let row = r + m * col;
                for k in 0..g {
                    c[(row, y_idx(k, col))] += a[(r, k)];
                    c[(row, w_idx(k, col))] -= b[(r, k)];
                }
            }
        }
        let null = linalg::null_space(&c, 1e-12);

        // embedding of the parameters into vec(Z)
        let n2 = 2 * g;
        let z_idx = |i: usize, j: usize| i + n2 * j;
        let mut e = DMatrix::zeros(n2 * n2, n_p);
        for j in 0..g {
            for i in 0..=j {
                let p = w_idx(i, j);
                e[(z_idx(i, j), p)] = 1.0 - beta;
                e[(z_idx(g + i, g + j), p)] = 1.0;
                if i != j {
                    e[(z_idx(j, i), p)] = 1.0 - beta;
                    e[(z_idx(g + j, g + i), p)] = 1.0;
                }
            }
        }
        for col in 0..g {
            for k in 0..g {
                let p = y_idx(k, col);
                e[(z_idx(g + k, col), p)] = 1.0;
                e[(z_idx(col, g + k), p)] = 1.0;
            }
        }
        let spanning = e * null;
        let basis = if spanning.ncols() == 0 {
            spanning
        } else {
            spanning.qr().q()
        };
        Self { g, beta, basis, scale }
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn project(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let n2 = 2 * self.g;
        let coords = self.basis.tr_mul(&DVector::from_column_slice(z.as_slice()));
        let flat = &self.basis * coords;
        DMatrix::from_column_slice(n2, n2, flat.as_slice())
    }

    fn split(&self, z: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let g = self.g;
        let unscale = |m: DMatrix<f64>| {
            DMatrix::from_fn(g, g, |i, j| m[(i, j)] / (self.scale[i] * self.scale[j]))
        };
        let w = unscale(z.view((g, g), (g, g)).into_owned());
        let y = unscale(z.view((g, 0), (g, g)).into_owned());
        (w, y)
    }

    /// Scaled iterate of an original-coordinate pair.
    fn lift(&self, w: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        let g = self.g;
        let rescale = |m: &DMatrix<f64>| DMatrix::from_fn(g, g, |i, j| m[(i, j)] * self.scale[i] * self.scale[j]);
        super::lmi_block(self.beta, &rescale(w), &rescale(y))
    }
}

struct Search {
    iterations: usize,
    found: Option<(DMatrix<f64>, DMatrix<f64>)>,
    reason: StopReason,
    best_gap: f64,
    best_min_eig: f64,
}

fn run(prob: &StabilizationProblem, space: &Subspace, start: DMatrix<f64>, max_iters: usize) -> Search {
    let opts = prob.options();
    let margin = opts.margin;
    let accept = opts.accept_fraction * margin;
    let g = prob.g_dim();
    let mut z = start;
    let mut best_gap = f64::INFINITY;
    let mut best_min_eig = f64::NEG_INFINITY;
    let mut gaps: Vec<f64> = Vec::with_capacity(max_iters.min(1 << 16));
    for it in 0..max_iters {
        let zs = space.project(&z);
        let (clipped, min_eig) = linalg::clip_eigenvalues(&zs, margin);
        best_min_eig = best_min_eig.max(min_eig / margin);
        if min_eig >= accept {
            let wb = zs.view((g, g), (g, g)).into_owned();
            let eig = linalg::sym_eigen(&wb).eigenvalues;
            let top = eig.max();
            if top > 0.0 && eig.min() >= prob.eps_pd() * top {
                let (w, y) = space.split(&(&zs / top));
                return Search {
                    iterations: it + 1,
                    found: Some((w, y)),
                    reason: StopReason::MaxIterations,
                    best_gap: 0.0,
                    best_min_eig,
                };
            }
        }
        let gap = (&zs - &clipped).norm();
        best_gap = best_gap.min(gap);
        gaps.push(gap);
        if it >= 2 * STALL_WINDOW {
            let old = gaps[it - STALL_WINDOW];
            if gap > 0.0 && gap >= old * (1.0 - STALL_REL) {
                return Search {
                    iterations: it + 1,
                    found: None,
                    reason: StopReason::Stalled,
                    best_gap,
                    best_min_eig,
                };
            }
        }
        z = clipped;
    }
    Search {
        iterations: max_iters,
        found: None,
        reason: StopReason::MaxIterations,
        best_gap,
        best_min_eig,
    }
}

const BARRIER_ROUNDS: usize = 40;
const NEWTON_STEPS: usize = 60;

/// Orthonormal basis columns reshaped to `2g × 2g` matrices.
fn basis_matrices(space: &Subspace) -> Vec<DMatrix<f64>> {
    let n2 = 2 * space.g;
    space
        .basis
        .column_iter()
        .map(|c| DMatrix::from_column_slice(n2, n2, c.as_slice()))
        .collect()
}

fn combine(mats: &[DMatrix<f64>], p: &[f64]) -> DMatrix<f64> {
    let mut z: DMatrix<f64> = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (m, &pi) in mats.iter().zip(p) {
        z += m * pi;
    }
    z
}

/// `−log det(Z(p) − tI)`, or `None` outside the cone.
fn neg_log_det(z: &DMatrix<f64>, t: f64) -> Option<(f64, DMatrix<f64>)> {
    let n = z.nrows();
    let s = z - DMatrix::identity(n, n) * t;
    let chol = s.cholesky()?;
    let l = chol.l();
    let ld: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
    Some((-2.0 * ld, linv))
}

/// Barrier search on the subspace; see the module docs.
fn barrier(prob: &StabilizationProblem, space: &Subspace) -> Search {
    let g = space.g;
    let n2 = 2 * g;
    let mats = basis_matrices(space);
    let d = mats.len();
    // trace of the W block of each basis element
    let c: Vec<f64> = mats.iter().map(|m| (g..n2).map(|i| m[(i, i)]).sum()).collect();
    let cn = c.iter().map(|v| v * v).sum::<f64>();
    let fail = |iterations, reason, best_min_eig| Search {
        iterations,
        found: None,
        reason,
        best_gap: f64::INFINITY,
        best_min_eig,
    };
    if cn <= 0.0 {
        return fail(0, StopReason::EmptySubspace, f64::NEG_INFINITY);
    }
    let mut p: Vec<f64> = c.iter().map(|v| g as f64 * v / cn).collect();
    let mut t = linalg::min_eigenvalue(&combine(&mats, &p)) - 1.0;
    let mut s = 1.0;
    let mut steps = 0;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..BARRIER_ROUNDS {
        for _ in 0..NEWTON_STEPS {
            steps += 1;
            let z = combine(&mats, &p);
            let Some((phi, linv)) = neg_log_det(&z, t) else { break };
            let f0 = -s * t + phi;
            // C_i = L⁻¹ B_i L⁻ᵀ, with B_t = −I appended last
            let mut cm = DMatrix::zeros(n2 * n2, d + 1);
            for (i, m) in mats.iter().enumerate() {
                let ci = &linv * m * linv.transpose();
                cm.column_mut(i).copy_from_slice(ci.as_slice());
            }
            let ct = -(&linv * linv.transpose());
            cm.column_mut(d).copy_from_slice(ct.as_slice());
            let mut grad = DVector::from_fn(d + 1, |i, _| {
                let col = cm.column(i);
                -(0..n2).map(|k| col[k + n2 * k]).sum::<f64>()
            });
            grad[d] -= s;
            let hess = cm.tr_mul(&cm);
            let mut kkt = DMatrix::zeros(d + 2, d + 2);
            kkt.view_mut((0, 0), (d + 1, d + 1)).copy_from(&hess);
            for i in 0..d {
                kkt[(i, d + 1)] = c[i];
                kkt[(d + 1, i)] = c[i];
            }
            let mut rhs = DVector::zeros(d + 2);
            rhs.rows_mut(0, d + 1).copy_from(&(-&grad));
            let Some(sol) = kkt.clone().lu().solve(&rhs) else { break };
            let dx = sol.rows(0, d + 1).into_owned();
            let decrement = -grad.dot(&dx);
            if !(decrement > 1e-10) {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let pt: Vec<f64> = p.iter().zip(dx.iter()).map(|(a, b)| a + step * b).collect();
                let tt = t + step * dx[d];
                if let Some((phi1, _)) = neg_log_det(&combine(&mats, &pt), tt) {
                    if -s * tt + phi1 <= f0 - 0.25 * step * decrement {
                        p = pt;
                        t = tt;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved || decrement < 1e-9 {
                break;
            }
        }
        let bound = t + n2 as f64 / s;
        best = best.max(t);
        log::debug!("barrier s={s:e} t={t:e} bound={bound:e}");
        if bound < 0.0 {
            return fail(steps, StopReason::NoInterior, best);
        }
        if t > 0.0 && n2 as f64 / s <= 0.1 * t {
            let zs = combine(&mats, &p);
            let wb = zs.view((g, g), (g, g)).into_owned();
            let eig = linalg::sym_eigen(&wb).eigenvalues;
            let top = eig.max();
            if top > 0.0 && eig.min() >= prob.eps_pd() * top {
                let (w, y) = space.split(&(&zs / top));
                return Search {
                    iterations: steps,
                    found: Some((w, y)),
                    reason: StopReason::MaxIterations,
                    best_gap: 0.0,
                    best_min_eig: t,
                };
            }
        }
        s *= 8.0;
    }
    fail(steps, StopReason::MaxIterations, best)
}

/// Search for `(W, Y)` satisfying the problem's constraints. Failure to find one is reported
/// as [`SolveOutcome::Infeasible`] together with the best residuals reached.
pub fn solve_feasibility(prob: &StabilizationProblem) -> Result<SolveOutcome> {
    let opts = prob.options();
    let g = prob.g_dim();
    let space = Subspace::new(prob);
    if space.dim() == 0 {
        return Ok(SolveOutcome::Infeasible(InfeasibleReport {
            beta: prob.beta(),
            iterations: 0,
            reason: StopReason::EmptySubspace,
            best_gap: f64::INFINITY,
            best_min_eig: f64::NEG_INFINITY,
        }));
    }
    let start = DMatrix::identity(2 * g, 2 * g) * (2.0 * opts.margin);
    let mut search = run(prob, &space, start, opts.max_iters);
    if search.found.is_none() && opts.barrier_fallback {
        log::info!(
            "projections ended after {} iterations ({:?}); switching to the barrier search",
            search.iterations,
            search.reason
        );
        let fallback = barrier(prob, &space);
        search = Search {
            iterations: search.iterations + fallback.iterations,
            best_gap: search.best_gap,
            ..fallback
        };
    }
    let Some((w, y)) = search.found else {
        log::info!(
            "no certificate after {} iterations ({:?}); best gap {:e}",
            search.iterations,
            search.reason,
            search.best_gap
        );
        return Ok(SolveOutcome::Infeasible(InfeasibleReport {
            beta: prob.beta(),
            iterations: search.iterations,
            reason: search.reason,
            best_gap: search.best_gap,
            best_min_eig: search.best_min_eig,
        }));
    };
    log::info!("certificate found after {} iterations", search.iterations);
    let mut ctrl = finish(prob, &w, &y)?;
    if opts.polish {
        ctrl = polish_with(prob, &space, ctrl)?;
    }
    Ok(SolveOutcome::Feasible(ctrl))
}

fn finish(prob: &StabilizationProblem, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<StabilizedController> {
    let opts = prob.options();
    let mut ctrl = extract_controller(w, y, prob.rep(), prob.beta())?;
    ctrl.residuals = verify_with(
        &ctrl,
        prob.rep(),
        prob.beta(),
        prob.eps_pd(),
        opts.tol,
        opts.weaving,
        opts.seed,
    );
    Ok(ctrl)
}

/// Repeatedly shrink `Y` toward zero and restore feasibility, keeping the smallest `‖Y‖_F`
/// certificate reached.
pub fn polish_min_y(prob: &StabilizationProblem, ctrl: StabilizedController) -> Result<StabilizedController> {
    let space = Subspace::new(prob);
    polish_with(prob, &space, ctrl)
}

fn polish_with(
    prob: &StabilizationProblem,
    space: &Subspace,
    mut best: StabilizedController,
) -> Result<StabilizedController> {
    for _ in 0..20 {
        let shrunk = &best.y * 0.8;
        let start = space.lift(&best.w, &shrunk);
        let search = run(prob, space, start, 2_000);
        match search.found {
            Some((w, y)) if y.norm() < best.y.norm() * (1.0 - 1e-6) => {
                best = finish(prob, &w, &y)?;
            }
            _ => break,
        }
    }
    Ok(best)
}

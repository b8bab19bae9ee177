use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::behavior_data::{SignalLayout, Trajectory, DEFAULT_RANK_TOL};
use crate::lti_behavior::fit_lti;

/// `(u, y)` data of `x⁺ = A x + B u`, `y = C x` under uniform random input.
fn siso_run(a: &DMatrix<f64>, b: &[f64], c: &[f64], n: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = a.nrows();
    let mut x = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_column_slice(b);
    let c = DVector::from_column_slice(c);
    let mut data = Vec::new();
    for _ in 0..n {
        let u: f64 = rng.random_range(-1.0..1.0);
        data.extend_from_slice(&[u, c.dot(&x)]);
        x = a * &x + &b * u;
    }
    Trajectory::from_flat(data, Arc::new(SignalLayout::siso()), 1.0).unwrap()
}

fn integrator_rep(depth: usize) -> IntrinsicLtiRep {
    let a = DMatrix::from_element(1, 1, 1.0);
    let t = siso_run(&a, &[1.0], &[1.0], 201, 21);
    fit_lti(&t, depth, 1, DEFAULT_RANK_TOL).unwrap().0
}

fn double_integrator_rep() -> IntrinsicLtiRep {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let t = siso_run(&a, &[0.0, 1.0], &[1.0, 0.0], 201, 22);
    fit_lti(&t, 3, 2, DEFAULT_RANK_TOL).unwrap().0
}

fn solve(rep: &IntrinsicLtiRep, beta: f64) -> SolveOutcome {
    solve_feasibility(&assemble(rep, beta, DEFAULT_EPS_PD).unwrap()).unwrap()
}

#[test]
fn rejects_invalid_beta() {
    let rep = integrator_rep(1);
    for beta in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(matches!(assemble(&rep, beta, 1e-6), Err(Error::InvalidConfig(_))));
    }
    assert!(assemble(&rep, 1.0, 1e-6).is_ok());
    assert!(assemble(&rep, 0.05, 0.0).is_err());
}

#[test]
fn integrator_is_stabilized() {
    let rep = integrator_rep(1);
    assert_eq!(rep.g_dim(), 3);
    let outcome = solve(&rep, 0.05);
    let ctrl = outcome.controller().expect("feasible");
    let r = &ctrl.residuals;
    assert!(r.passed, "{r:?}");
    assert!(r.weaving <= 1e-6 && r.subset <= 1e-6 && r.lmi_min_eig >= -1e-6);
    assert!(r.min_eig_w >= r.eps_pd_effective);
    assert!(r.spectral_radius <= 0.95_f64.sqrt() + 1e-8);
    assert!(r.span <= 1e-9);
    assert_eq!(ctrl.gain.shape(), (1, 4));

    // close the loop on the true plant y⁺ = y + u from a nonzero past
    let mut window = vec![0.0, 2.0, 0.0, 2.0];
    let mut y = 2.0;
    for _ in 0..400 {
        let u = ctrl.control(&window).unwrap()[0];
        let sample = [u, y];
        window.drain(..2);
        window.extend_from_slice(&sample);
        y += u;
    }
    assert!(y.abs() < 1e-6, "y = {y}");
}

/// Independent feasibility oracle: every `Ψ` with `Π₋H_rΨ = Π₊H_r` is `Ψ_p + N k`, with
/// `N` spanning the kernel of `Π₋H_r`. A grid over `k` finds a Schur-stable member, and the
/// discrete Lyapunov equation turns it into an explicit `(W, Y)` certificate.
#[test]
fn integrator_oracle_agrees_with_solver() {
    let rep = integrator_rep(1);
    let a = rep.past_block();
    let b = rep.future_block();
    let psi_p = a.clone().pseudo_inverse(1e-12).unwrap() * &b;
    let null = crate::linalg::null_space(&a, 1e-20);
    assert_eq!(null.ncols(), 1);
    let bound = 0.95_f64.sqrt();
    let mut found = None;
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
    'outer: for &k0 in &grid {
        for &k1 in &grid {
            for &k2 in &grid {
                let k = DMatrix::from_row_slice(1, 3, &[k0, k1, k2]);
                let psi = &psi_p + &null * &k;
                if crate::linalg::spectral_radius(&psi) < 0.5 * bound {
                    found = Some(psi);
                    break 'outer;
                }
            }
        }
    }
    let psi = found.expect("grid contains a stabilizing transition");
    // M = Σ (Ψᵀ/√(1-β))^j (Ψ/√(1-β))^j solves the scaled Lyapunov equation with Q = I
    let scaled = &psi / bound;
    let mut m = DMatrix::identity(3, 3);
    let mut term = DMatrix::identity(3, 3);
    for _ in 0..500 {
        term = scaled.transpose() * &term * &scaled;
        m += &term;
    }
    let w = m.try_inverse().unwrap();
    let y = &psi * &w;
    let lmi = lmi_block(0.05, &w, &y);
    assert!(crate::linalg::min_eigenvalue(&lmi) >= -1e-9);
    assert!(crate::linalg::max_abs(&(&a * &y - &b * &w)) <= 1e-9);
    assert!(solve(&rep, 0.05).is_feasible());
}

#[test]
fn unstable_autonomous_system_is_infeasible() {
    let layout = Arc::new(SignalLayout::autonomous_scalar());
    let data: Vec<f64> = (0..12).map(|k| 2f64.powi(k) * 1e-3).collect();
    let t = Trajectory::from_flat(data, layout, 1.0).unwrap();
    let (rep, report) = fit_lti(&t, 1, 1, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(report.required, 1);
    for beta in [0.01, 0.05, 0.5, 1.0] {
        match solve(&rep, beta) {
            SolveOutcome::Infeasible(r) => assert!(r.best_min_eig < 0.5),
            SolveOutcome::Feasible(_) => panic!("beta {beta} must be infeasible"),
        }
    }
}

#[test]
fn beta_one_is_infeasible_for_data_reps() {
    let rep = integrator_rep(1);
    assert!(!solve(&rep, 1.0).is_feasible());
}

#[test]
fn zero_y_gives_zero_controller() {
    let rep = integrator_rep(2);
    let g = rep.g_dim();
    let ctrl = extract_controller(&DMatrix::identity(g, g), &DMatrix::zeros(g, g), &rep, 0.05).unwrap();
    assert_eq!(ctrl.psi, DMatrix::zeros(g, g));
    assert_eq!(ctrl.gain, DMatrix::zeros(1, 6));
}

#[test]
fn singular_w_is_rejected() {
    let rep = integrator_rep(1);
    let mut w = DMatrix::identity(3, 3);
    w[(2, 2)] = 1e-14;
    assert!(matches!(
        extract_controller(&w, &DMatrix::zeros(3, 3), &rep, 0.05),
        Err(Error::Singular(_))
    ));
}

#[test]
fn subset_residual_is_linear_in_perturbation() {
    let rep = integrator_rep(1);
    let ctrl = solve(&rep, 0.05).controller().unwrap().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
    let perturbed = |eps: f64| {
        extract_controller(&ctrl.w, &(&ctrl.y + &dir * eps), &rep, 0.05)
            .unwrap()
            .residuals
            .subset
    };
    let (r1, r2) = (perturbed(1e-2), perturbed(2e-2));
    assert!(r1 > 1e-4);
    assert!((r2 / r1 - 2.0).abs() < 1e-6, "{r1} {r2}");
}

#[test]
fn decay_in_lyapunov_norm() {
    let rep = double_integrator_rep();
    assert_eq!(rep.g_dim(), 6);
    let ctrl = solve(&rep, 0.05).controller().unwrap().clone();
    let m = ctrl.w.clone().try_inverse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let g = DVector::from_fn(6, |_, _| rng.random_range(-10.0..10.0));
        let next = &ctrl.psi * &g;
        let v0 = g.dot(&(&m * &g));
        let v1 = next.dot(&(&m * &next));
        assert!(v1 <= 0.95 * v0 + 1e-8 * v0.max(1.0));
    }
    // zero start stays zero
    let zero = DVector::zeros(6);
    assert_eq!((&ctrl.psi * &zero).amax(), 0.0);
}

#[test]
fn closed_loop_windows_converge_in_span() {
    let rep = double_integrator_rep();
    let ctrl = solve(&rep, 0.05).controller().unwrap().clone();
    let rate = 0.95_f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = ctrl.w.clone().try_inverse().unwrap();
    for _ in 0..10 {
        let g0 = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let mut w = rep.h_r() * g0;
        let mut prev_m = f64::INFINITY;
        for _ in 0..400 {
            let g = rep.h_pinv() * &w;
            let m_norm = g.dot(&(&m * &g)).sqrt();
            assert!(m_norm <= rate * prev_m + 1e-12);
            prev_m = m_norm;
            w = rep.h_r() * (&ctrl.psi * g);
        }
        assert!(w.amax() < 1e-4);
    }
}

#[test]
fn export_matches_solution() {
    let rep = double_integrator_rep();
    let prob = assemble(&rep, 0.05, DEFAULT_EPS_PD).unwrap();
    let ctrl = solve_feasibility(&prob).unwrap().controller().unwrap().clone();
    let ex = export_conic(&prob);
    assert_eq!(ex.n_vars, 21 + 36);
    let x = ex.pack(&ctrl.w, &ctrl.y);
    let eq = ex.eq_residual(&x);
    assert!(crate::linalg::max_abs_slice(&eq) <= 1e-8);
    for block in &ex.psd_blocks {
        let f = ex.evaluate_block(block, &x);
        assert!(crate::linalg::min_eigenvalue(&f) >= -1e-8, "{}", block.name);
    }
    let lmi = ex.evaluate_block(&ex.psd_blocks[1], &x);
    assert!(crate::linalg::max_abs(&(lmi - lmi_block(0.05, &ctrl.w, &ctrl.y))) <= 1e-12);
}

#[test]
fn polish_does_not_grow_y() {
    let rep = integrator_rep(1);
    let opts = SolverOptions {
        polish: true,
        ..SolverOptions::default()
    };
    let plain = solve(&rep, 0.05).controller().unwrap().y.norm();
    let prob = assemble_with(&rep, 0.05, DEFAULT_EPS_PD, opts).unwrap();
    let polished = solve_feasibility(&prob).unwrap().controller().unwrap().clone();
    assert!(polished.residuals.passed);
    assert!(polished.y.norm() <= plain * (1.0 + 1e-9));
}

#[test]
fn exact_and_projected_agree_on_lti_data() {
    let rep = double_integrator_rep();
    let opts = SolverOptions {
        weaving: WeavingMode::Exact,
        ..SolverOptions::default()
    };
    let prob = assemble_with(&rep, 0.05, DEFAULT_EPS_PD, opts).unwrap();
    let exact = solve_feasibility(&prob).unwrap();
    let ctrl = exact.controller().expect("feasible");
    assert!(ctrl.residuals.weaving <= 1e-6);
    let projected = assemble(&rep, 0.05, DEFAULT_EPS_PD).unwrap();
    assert!(crate::linalg::max_abs(&(projected.past_operator() - prob.past_operator())) <= 1e-9);
}

#[test]
fn controller_json_layout() {
    let rep = integrator_rep(1);
    let ctrl = solve(&rep, 0.05).controller().unwrap().clone();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("controller.json");
    ctrl.save(&path).unwrap();
    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["beta", "W", "Y", "Psi", "K", "residuals"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }
    let back = StabilizedController::load(&path).unwrap();
    assert_eq!(back.gain, ctrl.gain);
}


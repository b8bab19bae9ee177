use super::*;
use crate::behavior_data::{Split, DEFAULT_RANK_TOL};
use crate::lti_behavior::IntrinsicLtiRep;
use crate::synthesis::{assemble, solve_feasibility, DEFAULT_EPS_PD};

fn double_integrator_design() -> (IntrinsicLtiRep, StabilizedController) {
    let cfg = GeneratorConfig::linear(PlantKind::DoubleIntegrator, 1, 200, 11, Split::Train);
    let t = generate_trajectory(&cfg, 0).unwrap();
    let (rep, _) = crate::lti_behavior::fit_lti(&t, 3, 2, DEFAULT_RANK_TOL).unwrap();
    let prob = assemble(&rep, 0.05, DEFAULT_EPS_PD).unwrap();
    let ctrl = solve_feasibility(&prob).unwrap().controller().unwrap().clone();
    (rep, ctrl)
}

#[test]
fn setpoint_controller_holds_equilibrium() {
    let mut plant = DronePlant::new(DroneState::default());
    let mut ctrl = ConstantController(vec![0.0; 3]);
    let log = run_closed_loop(&mut plant, &mut ctrl, 4, &ClosedLoopConfig::new(4, 50, 3)).unwrap();
    assert_eq!(log.records.len(), 55);
    assert!(log.records.iter().all(|r| r.w.iter().all(|v| *v == 0.0)));
}

#[test]
fn logged_windows_overlap_exactly() {
    let mut plant = DronePlant::new(DroneState::at(1.0, 2.0, 3.0, 0.4));
    let mut ctrl = ConstantController(vec![1.0, 0.1, -0.5]);
    let log = run_closed_loop(&mut plant, &mut ctrl, 4, &ClosedLoopConfig::new(4, 30, 3)).unwrap();
    let w = 6;
    let controlled: Vec<_> = log.controlled().collect();
    assert_eq!(controlled.len(), 30);
    for pair in controlled.windows(2) {
        assert_eq!(pair[0].window[w..], pair[1].window[..4 * w]);
    }
    for r in &controlled {
        // the last slot of w̃_{k−1} is the sample logged at k − 1
        assert_eq!(r.window[4 * w..], log.records[r.k - 1].w[..]);
    }
}

#[test]
fn short_warmup_is_rejected() {
    let mut plant = DronePlant::new(DroneState::default());
    let mut ctrl = ConstantController(vec![0.0; 3]);
    let cfg = ClosedLoopConfig { warmup: 4, ..ClosedLoopConfig::new(4, 5, 3) };
    assert!(run_closed_loop(&mut plant, &mut ctrl, 4, &cfg).is_err());
}

#[test]
fn non_finite_control_aborts() {
    let mut plant = DronePlant::new(DroneState::default());
    let mut ctrl = ConstantController(vec![f64::NAN, 0.0, 0.0]);
    let err = run_closed_loop(&mut plant, &mut ctrl, 1, &ClosedLoopConfig::new(1, 5, 3)).unwrap_err();
    assert!(matches!(err, crate::Error::NonFinite(_)));
}

#[test]
fn certified_gain_decays_on_linear_plant() {
    let (rep, ctrl) = double_integrator_design();
    let bound = 0.95_f64.sqrt();
    let mut plant = LinearPlant::double_integrator(3.0, -1.0);
    let mut c = LinearGainController::with_rep(ctrl, &rep);
    let log = run_closed_loop(&mut plant, &mut c, 3, &ClosedLoopConfig::new(3, 400, 1)).unwrap();
    let values: Vec<f64> = log.controlled().map(|r| r.lyapunov.unwrap()).collect();
    for pair in values.windows(2) {
        if pair[0] > 1e-20 {
            assert!((pair[1] / pair[0]).sqrt() <= bound + 1e-6, "{pair:?}");
        }
    }
    let last = log.records.last().unwrap();
    assert!(last.w.iter().all(|v| v.abs() < 1e-6), "{:?}", last.w);
}

fn integrator_deepc(cfg: DeepcConfig) -> Deepc {
    let gen = GeneratorConfig::linear(PlantKind::Integrator, 4, 60, 5, Split::Train);
    Deepc::from_dataset(&generate_dataset(&gen).unwrap(), cfg).unwrap()
}

#[test]
fn deepc_at_setpoint_plans_nothing() {
    let d = integrator_deepc(DeepcConfig::new(2, 2));
    assert_eq!(d.plan_first_input(&[0.0; 4]).unwrap(), vec![0.0]);
}

/// Two-slot horizon on `y⁺ = y + u`: `y_k` is fixed by the past, so the plan minimizes
/// `q(y_k + u_k)² + r u_k²` (the last input is free and zero), giving `u_k = −q y_k/(q + r)`.
#[test]
fn deepc_matches_hand_solved_integrator_plan() {
    let cfg = DeepcConfig {
        horizon: 2,
        q: 1.0,
        r: 0.5,
        lambda_g: 1e-9,
        lambda_ini: 1e6,
        ..DeepcConfig::new(1, 2)
    };
    let d = integrator_deepc(cfg);
    for (u_prev, y_prev) in [(0.3, 1.0), (-0.2, -0.7), (0.0, 2.0)] {
        let y_k = y_prev + u_prev;
        let want = -y_k / 1.5;
        let got = d.plan_first_input(&[u_prev, y_prev]).unwrap()[0];
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

#[test]
fn deepc_drives_integrator_to_zero() {
    let mut d = integrator_deepc(DeepcConfig::new(2, 2));
    let mut plant = LinearPlant::integrator(1.5);
    let log = run_closed_loop(&mut plant, &mut d, 1, &ClosedLoopConfig::new(1, 60, 1)).unwrap();
    let y_end = log.records.last().unwrap().w[1];
    assert!(y_end.abs() < 1e-3, "{y_end}");
}

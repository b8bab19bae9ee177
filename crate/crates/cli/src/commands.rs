use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use calib_core::behavior_data::{fit_normalizer, read_dataset, write_dataset, Split, TrajectoryDataset};
use calib_core::calib::{
    eval_model, rollout_predicted, train, Architecture, CalibController, CalibModel, TrainConfig,
    CHECKPOINT_FILE, METRICS_FILE,
};
use calib_core::lti_behavior::{fit_lti_mosaic, IntrinsicLtiRep};
use calib_core::plant::{
    generate_dataset, run_closed_loop, ClosedLoopConfig, Controller, Deepc, DeepcConfig, GeneratorConfig,
    LinearGainController, PlantKind,
};
use calib_core::synthesis::{
    assemble_with, solve_feasibility, verify_certificate, SolveOutcome, SolverOptions,
    StabilizedController, WeavingMode,
};

use crate::args::*;
use crate::{CliError, CliResult};

pub const LTI_FILE: &str = "lti_model.json";
pub const CONTROLLER_FILE: &str = "controller.json";
pub const INFEASIBLE_FILE: &str = "infeasible_report.json";
pub const PREDICTION_FILE: &str = "predicted.csv";

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(calib_core::Error::from)?;
    fs::write(path, text).map_err(calib_core::Error::from)?;
    Ok(())
}

/// `<command>.config.json`: the parsed flags plus every module default they resolve to.
fn snapshot<A: Serialize, R: Serialize>(out: &Path, command: &str, args: &A, resolved: &R) -> CliResult<()> {
    fs::create_dir_all(out).map_err(calib_core::Error::from)?;
    let value = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "resolved": resolved,
    });
    write_json(&out.join(format!("{command}.config.json")), &value)
}

/// Print the summary and keep a copy as `<command>.summary.txt`.
fn summary(out: &Path, command: &str, text: &str) -> CliResult<()> {
    print!("{text}");
    fs::write(out.join(format!("{command}.summary.txt")), text).map_err(calib_core::Error::from)?;
    Ok(())
}

fn plant_kind(p: PlantArg) -> PlantKind {
    match p {
        PlantArg::Drone => PlantKind::Drone,
        PlantArg::Integrator => PlantKind::Integrator,
        PlantArg::DoubleIntegrator => PlantKind::DoubleIntegrator,
    }
}

fn load_dataset(dir: &Path) -> CliResult<TrajectoryDataset> {
    read_dataset(dir).map_err(|e| match e {
        calib_core::Error::Io(io) => {
            calib_core::Error::Io(std::io::Error::new(io.kind(), format!("dataset {}: {io}", dir.display())))
        }
        other => other,
    })
    .map_err(CliError::from)
}

fn required<'a, T>(v: &'a Option<T>, flag: &str, why: &str) -> CliResult<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Usage(format!("--{flag} is required {why}")))
}

pub fn gen_data(out: &Path, args: GenDataArgs) -> CliResult<()> {
    let plant = plant_kind(args.plant);
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    if plant != PlantKind::Drone && (args.near_origin || args.yaw_range.is_some()) {
        return Err(CliError::Usage("--near-origin and --yaw-range apply to the drone only".into()));
    }
    let mut cfg = match plant {
        PlantKind::Drone if args.near_origin => GeneratorConfig::drone_near_origin(args.count, args.length, args.seed, split),
        PlantKind::Drone => GeneratorConfig::drone(args.count, args.length, args.seed, split),
        other => GeneratorConfig::linear(other, args.count, args.length, args.seed, split),
    };
    if let Some(y) = args.yaw_range {
        cfg.yaw_range = [-y, y];
    }
    cfg.validate()?;
    snapshot(out, "gen-data", &args, &cfg)?;
    let ds = generate_dataset(&cfg)?;
    write_dataset(&ds, out)?;
    summary(
        out,
        "gen-data",
        &format!(
            "{} {} trajectories of {} samples ({} split, seed {}) -> {}\n",
            ds.len(),
            plant,
            args.length,
            split,
            args.seed,
            out.display()
        ),
    )
}

pub fn fit_lti(out: &Path, args: FitLtiArgs) -> CliResult<()> {
    let ds = load_dataset(&args.data)?;
    snapshot(out, "fit-lti", &args, &json!({ "depth": args.depth, "nb": args.nb, "tol": args.tol }))?;
    let (rep, report) = fit_lti_mosaic(ds.trajectories(), args.depth, args.nb, args.tol)?;
    rep.save(&out.join(LTI_FILE))?;
    write_json(&out.join("rank_report.json"), &report)?;
    let mut text = format!(
        "Hankel rank {} (required {}, {}); g_dim {}\n",
        report.numerical_rank,
        report.required,
        match report.numerical_rank.cmp(&report.required) {
            std::cmp::Ordering::Equal => "satisfied",
            std::cmp::Ordering::Greater => "exceeded: data not exactly LTI",
            std::cmp::Ordering::Less => "NOT met: data not persistently exciting",
        },
        rep.g_dim()
    );
    let shown = report.singular_values.len().min(rep.g_dim() + 2);
    let sv: Vec<String> = report.singular_values[..shown].iter().map(|s| format!("{s:.3e}")).collect();
    let _ = writeln!(text, "leading singular values: {}", sv.join(" "));
    let _ = writeln!(text, "representation -> {}", out.join(LTI_FILE).display());
    summary(out, "fit-lti", &text)
}

pub fn synth(out: &Path, args: SynthArgs) -> CliResult<()> {
    let rep = IntrinsicLtiRep::load(&args.rep)?;
    let opts = SolverOptions {
        max_iters: args.max_iters,
        weaving: match args.weaving {
            WeavingArg::Projected => WeavingMode::Projected,
            WeavingArg::Exact => WeavingMode::Exact,
        },
        polish: args.polish,
        barrier_fallback: !args.no_barrier,
        seed: args.seed,
        ..SolverOptions::default()
    };
    snapshot(out, "synth", &args, &json!({ "beta": args.beta, "eps_pd": args.eps_pd, "solver": opts }))?;
    let prob = assemble_with(&rep, args.beta, args.eps_pd, opts)?;
    match solve_feasibility(&prob)? {
        SolveOutcome::Feasible(ctrl) => {
            ctrl.save(&out.join(CONTROLLER_FILE))?;
            let r = &ctrl.residuals;
            let text = format!(
                "feasible at beta {}: min eig W {:.3e}, LMI min eig {:.3e}, weaving {:.2e}, subset {:.2e}\n\
                 spectral radius {:.6} (bound {:.6}), certificate {}\ncontroller -> {}\n",
                args.beta,
                r.min_eig_w,
                r.lmi_min_eig,
                r.weaving_model,
                r.subset_model,
                r.spectral_radius,
                r.decay_bound,
                if r.passed { "passed" } else { "FAILED" },
                out.join(CONTROLLER_FILE).display()
            );
            summary(out, "synth", &text)
        }
        SolveOutcome::Infeasible(report) => {
            write_json(&out.join(INFEASIBLE_FILE), &report)?;
            let text = format!(
                "no certificate found at beta {} after {} iterations ({:?}); best gap {:.3e}\nreport -> {}\n",
                report.beta,
                report.iterations,
                report.reason,
                report.best_gap,
                out.join(INFEASIBLE_FILE).display()
            );
            summary(out, "synth", &text)?;
            Err(CliError::Infeasible(format!("synthesis infeasible at beta {}", report.beta)))
        }
    }
}

pub fn train_calib(out: &Path, args: TrainCalibArgs) -> CliResult<()> {
    let train_ds = load_dataset(&args.train)?;
    let test_ds = args.test.as_deref().map(load_dataset).transpose()?;
    let arch = match (args.compact, args.width) {
        (true, _) => Architecture::compact(),
        (false, Some(w)) => Architecture {
            hidden: vec![w, w],
            lyap_hidden: vec![(w / 2).max(1), (w / 2).max(1)],
            ..Architecture::default()
        },
        (false, None) => Architecture::default(),
    };
    let cfg = TrainConfig {
        lambda_chi: args.lambda_chi,
        lambda_eta: args.lambda_eta,
        lambda_w: args.lambda_w,
        lambda_inf: args.lambda_inf,
        lambda_e: args.lambda_e,
        lambda_v: args.lambda_v,
        lambda_grad: args.lambda_grad,
        beta: args.beta,
        lr: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
    };
    cfg.validate()?;
    let normalizer = fit_normalizer(&train_ds, train_ds.setpoint())?;
    snapshot(
        out,
        "train-calib",
        &args,
        &json!({ "depth": args.depth, "nb": args.nb, "architecture": arch, "train": cfg, "normalizer": normalizer }),
    )?;
    let mut model = CalibModel::new(train_ds.layout().clone(), args.depth, args.nb, normalizer, &arch, args.seed)?;
    log::info!("g_dim {} with {} parameters", model.g_dim(), model.n_params());
    let report = train(&mut model, &train_ds, test_ds.as_ref(), &cfg, Some(out))?;
    let first = &report.metrics[0];
    let last = report.metrics.last().unwrap_or(first);
    let best = &report.metrics[report.best_epoch];
    let mut text = format!("g_dim {}, {} parameters, {} epochs\n", model.g_dim(), model.n_params(), cfg.epochs);
    let _ = writeln!(
        text,
        "test recon MSE {:.3e} -> {:.3e} (best epoch {}: {:.3e}), violation rate {:.3}, |chi(0)| {:.2e}, |eta(0)| {:.2e}",
        first.test_recon_mse,
        last.test_recon_mse,
        report.best_epoch,
        best.test_recon_mse,
        best.test_violation_rate,
        best.test_anchor_chi,
        best.test_anchor_eta
    );
    let _ = writeln!(
        text,
        "checkpoint -> {}\nmetrics -> {}",
        out.join(CHECKPOINT_FILE).display(),
        out.join(METRICS_FILE).display()
    );
    summary(out, "train-calib", &text)
}

fn parse_saturation(ranges: &[String], u_dim: usize) -> CliResult<Option<Vec<[f64; 2]>>> {
    if ranges.is_empty() {
        return Ok(None);
    }
    if ranges.len() != u_dim {
        return Err(CliError::Usage(format!("--saturate needs {u_dim} ranges, got {}", ranges.len())));
    }
    ranges.iter()
        .map(|s| {
            let bad = || CliError::Usage(format!("saturation range {s:?} is not lo:hi"));
            let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            if !(lo <= hi) {
                return Err(bad());
            }
            Ok([lo, hi])
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

pub fn simulate(out: &Path, args: SimulateArgs) -> CliResult<()> {
    let kind = plant_kind(args.plant);
    let mut x0 = args.init.clone();
    if kind == PlantKind::Drone && x0.len() == 3 {
        x0.push(0.0);
    }
    if x0.len() != kind.state_dim() {
        return Err(CliError::Usage(format!("--init needs {} values for the {kind}", kind.state_dim())));
    }
    let mut plant = kind.build(&x0);
    let layout = plant.layout();
    let mut calib_model = None;
    let (mut controller, depth): (Box<dyn Controller>, usize) = match args.controller {
        ControllerArg::Lti => {
            let ctrl = StabilizedController::load(required(&args.model, "model", "for the lti controller")?)?;
            let depth = ctrl.depth;
            let c = match &args.rep {
                Some(p) => LinearGainController::with_rep(ctrl, &IntrinsicLtiRep::load(p)?),
                None => LinearGainController::new(ctrl),
            };
            (Box::new(c), depth)
        }
        ControllerArg::Calib => {
            let (model, _) = CalibModel::load(required(&args.model, "model", "for the calib controller")?)?;
            let depth = model.depth();
            calib_model = Some(model.clone());
            (Box::new(CalibController::new(model)), depth)
        }
        ControllerArg::Deepc => {
            let ds = load_dataset(required(&args.data, "data", "for the deepc controller")?)?;
            let mut cfg = DeepcConfig::new(args.depth + 1, ds.layout().w_dim());
            cfg.horizon = args.horizon;
            cfg.setpoint = ds.setpoint().to_vec();
            (Box::new(Deepc::from_dataset(&ds, cfg)?), args.depth)
        }
    };
    let mut cfg = ClosedLoopConfig::new(depth, args.steps, layout.u_dim());
    cfg.saturation = parse_saturation(&args.saturate, layout.u_dim())?;
    snapshot(out, "simulate", &args, &json!({ "initial_state": x0, "closed_loop": cfg }))?;
    let log = run_closed_loop(plant.as_mut(), controller.as_mut(), depth, &cfg)?;
    let log_file = out.join(format!("closed_loop_{}.csv", log.controller));
    log.write_csv(&log_file)?;

    let controlled: Vec<_> = log.controlled().collect();
    let mut text = format!("{} controller, {} steps after {} warm-up steps\n", log.controller, args.steps, cfg.warmup);
    if let Some(last) = controlled.last() {
        let y = layout.outputs_of(&last.w);
        let _ = writeln!(text, "final outputs {y:.4?} (max abs {:.4})", y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let _ = writeln!(text, "log -> {}", log_file.display());
    if let (Some(model), Some(first)) = (calib_model, controlled.first()) {
        let pred = rollout_predicted(&model, &first.window, args.predict)?;
        let path = out.join(PREDICTION_FILE);
        let mut wr = csv::Writer::from_path(&path).map_err(calib_core::Error::from)?;
        let mut header = vec!["t".to_string()];
        header.extend(log.names.iter().cloned());
        wr.write_record(&header).map_err(calib_core::Error::from)?;
        for (j, s) in pred.samples.iter().enumerate() {
            let mut row = vec![format!("{}", (first.k + j) as f64 * plant.dt())];
            row.extend(s.iter().map(|v| format!("{v}")));
            wr.write_record(&row).map_err(calib_core::Error::from)?;
        }
        wr.flush().map_err(calib_core::Error::from)?;
        let _ = writeln!(text, "predicted rollout -> {}", path.display());
    }
    summary(out, "simulate", &text)
}

pub fn eval(out: &Path, args: EvalArgs) -> CliResult<()> {
    if let Some(model_path) = &args.model {
        let data = required(&args.data, "data", "with --model")?;
        let (model, stored) = CalibModel::load(model_path)?;
        let mut cfg = stored.unwrap_or_default();
        if let Some(b) = args.beta {
            cfg.beta = b;
        }
        cfg.validate()?;
        snapshot(out, "eval", &args, &json!({ "train": cfg }))?;
        let ds = load_dataset(data)?;
        let report = eval_model(&model, &ds, &cfg)?;
        write_json(&out.join("eval_report.json"), &report)?;
        let text = format!(
            "{} window pairs: recon MSE {:.3e}, weaving MSE {:.3e}, subset MSE {:.3e}, violation rate {:.4}, \
             |chi(0)| {:.2e}, |eta(0)| {:.2e}\nreport -> {}\n",
            report.pairs,
            report.recon_mse,
            report.weaving_mse,
            report.subset_mse,
            report.violation_rate,
            report.anchor_chi,
            report.anchor_eta,
            out.join("eval_report.json").display()
        );
        return summary(out, "eval", &text);
    }
    let ctrl_path = required(&args.controller, "controller", "(or --model with --data)")?;
    let rep = IntrinsicLtiRep::load(required(&args.rep, "rep", "with --controller")?)?;
    let ctrl = StabilizedController::load(ctrl_path)?;
    let beta = args.beta.unwrap_or(ctrl.beta);
    snapshot(out, "eval", &args, &json!({ "beta": beta }))?;
    let report = verify_certificate(&ctrl, &rep, beta);
    write_json(&out.join("certificate.json"), &report)?;
    let text = format!(
        "certificate at beta {beta}: {} (min eig W {:.3e}, LMI {:.3e}, weaving {:.2e}, subset {:.2e}, rho {:.6})\n",
        if report.passed { "passed" } else { "FAILED" },
        report.min_eig_w,
        report.lmi_min_eig,
        report.weaving_model,
        report.subset_model,
        report.spectral_radius
    );
    summary(out, "eval", &text)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Infeasible("certificate check failed".into()))
    }
}

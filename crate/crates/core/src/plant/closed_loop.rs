use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Controller, Plant};
use crate::behavior_data::{SignalLayout, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopConfig {
    /// Setpoint-input steps used to fill the first window; at least `L + 1`.
    pub warmup: usize,
    /// Controlled steps after warm-up.
    pub steps: usize,
    /// Input applied during warm-up.
    pub setpoint_input: Vec<f64>,
    /// Optional `[lo, hi]` clamp per input channel.
    pub saturation: Option<Vec<[f64; 2]>>,
}

impl ClosedLoopConfig {
    pub fn new(depth: usize, steps: usize, u_dim: usize) -> Self {
        Self {
            warmup: depth + 1,
            steps,
            setpoint_input: vec![0.0; u_dim],
            saturation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub state: Vec<f64>,
    /// Measured sample `w_k = (y_k, u_k)`.
    pub w: Vec<f64>,
    /// `w̃_{k−1}` the controller saw; empty during warm-up.
    pub window: Vec<f64>,
    pub lyapunov: Option<f64>,
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopLog {
    pub controller: String,
    pub depth: usize,
    pub config: ClosedLoopConfig,
    pub names: Vec<String>,
    pub records: Vec<StepRecord>,
}

/// Warm up with setpoint inputs, then at every step `k` measure `y_k`, ask the controller
/// for `u_k` given `w̃_{k−1}`, log `w_k` and apply `u_k`. The controller only ever sees
/// measured windows.
pub fn run_closed_loop(
    plant: &mut dyn Plant,
    controller: &mut dyn Controller,
    depth: usize,
    cfg: &ClosedLoopConfig,
) -> Result<ClosedLoopLog> {
    let layout = plant.layout();
    if cfg.warmup < depth + 1 {
        return Err(Error::InvalidConfig(format!(
            "warmup {} cannot fill a window of depth {depth}",
            cfg.warmup
        )));
    }
    crate::error::check_dim("setpoint input", layout.u_dim(), cfg.setpoint_input.len())?;
    let w_dim = layout.w_dim();
    let dt = plant.dt();
    let mut history: Vec<f64> = Vec::with_capacity((cfg.warmup + cfg.steps) * w_dim);
    let mut records = Vec::with_capacity(cfg.warmup + cfg.steps);
    for k in 0..cfg.warmup + cfg.steps {
        let y = plant.measure();
        let state = plant.state();
        let warm = k < cfg.warmup;
        let (u, window, lyapunov) = if warm {
            (cfg.setpoint_input.clone(), Vec::new(), None)
        } else {
            let start = (k - depth - 1) * w_dim;
            let window = Window::new(history[start..k * w_dim].to_vec(), depth, layout.clone())?;
            let mut u = controller.control(&window)?;
            if u.len() != layout.u_dim() || u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "controller {} returned {u:?} at step {k} (state {state:?})",
                    controller.tag()
                )));
            }
            if let Some(sat) = &cfg.saturation {
                for (ui, r) in u.iter_mut().zip(sat) {
                    *ui = ui.clamp(r[0], r[1]);
                }
            }
            let v = controller.lyapunov(&window);
            (u, window.into_data(), v)
        };
        let w = layout.compose(&y, &u);
        history.extend_from_slice(&w);
        records.push(StepRecord {
            k,
            t: k as f64 * dt,
            state,
            w,
            window,
            lyapunov,
            warmup: warm,
        });
        plant.apply(&u);
    }
    Ok(ClosedLoopLog {
        controller: controller.tag().to_string(),
        depth,
        config: cfg.clone(),
        names: layout.names().to_vec(),
        records,
    })
}

impl ClosedLoopLog {
    pub fn controlled(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| !r.warmup)
    }

    /// Measured outputs of every record, using `layout`'s output indices.
    pub fn outputs(&self, layout: &SignalLayout) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| layout.outputs_of(&r.w)).collect()
    }

    /// CSV with `t`, one column per signal and `V` (empty when the controller has none),
    /// one row per controlled step.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "t")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out, ",V")?;
        for r in self.controlled() {
            write!(out, "{:.6}", r.t)?;
            for v in &r.w {
                write!(out, ",{v:.10e}")?;
            }
            match r.lyapunov {
                Some(v) => writeln!(out, ",{v:.10e}")?,
                None => writeln!(out, ",")?,
            }
        }
        out.flush()?;
        Ok(())
    }
}

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CalibModel, PairSet};
use crate::behavior_data::{TrajectoryDataset, Window};
use crate::error::{check_dim, Result};
use crate::plant::Controller;

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

impl CalibModel {
    fn encode_physical(&self, window: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("window", self.window_len(), window.len())?;
        self.encode(&row(&self.normalizer.normalize(window)))
    }

    /// `V(χ(w̃))` of a physical window.
    pub fn lyapunov_of(&self, window: &[f64]) -> Result<f64> {
        let g = self.encode_physical(window)?;
        Ok(self.lyap.value_batch(&g)?[0])
    }
}

/// `u_k`: the input components of the last slot of `η(ψ(χ(w̃_{k−1})))`, in physical units.
pub fn control_action(model: &CalibModel, window: &[f64]) -> Result<Vec<f64>> {
    let g = model.encode_physical(window)?;
    let next = model.decode(&model.transition(&g)?)?;
    let sel = model.selectors();
    let inputs = sel.inputs(next.as_slice());
    Ok(model.normalizer.denormalize_components(&inputs, model.layout.input_indices()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `η(χ(w̃_init))` in physical units.
    pub reconstruction: Vec<f64>,
    /// Last slot of `η(ψᵏ(χ(w̃_init)))` for `k = 1..=steps`, physical units.
    pub samples: Vec<Vec<f64>>,
}

/// Open-loop prediction of the controlled behavior by iterating `ψ` on the intrinsic state.
pub fn rollout_predicted(model: &CalibModel, window: &[f64], steps: usize) -> Result<Prediction> {
    let mut g = model.encode_physical(window)?;
    let norm = &model.normalizer;
    let recon = model.decode(&g)?;
    let reconstruction = norm.denormalize(recon.as_slice());
    let sel = model.selectors();
    let mut samples = Vec::with_capacity(steps);
    for _ in 0..steps {
        g = model.transition(&g)?;
        let w = model.decode(&g)?;
        samples.push(norm.denormalize(sel.last(w.as_slice())));
    }
    Ok(Prediction { reconstruction, samples })
}

/// Certificate and fit metrics of a model over every window pair of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub recon_mse: f64,
    pub recon_max: f64,
    pub weaving_mse: f64,
    pub subset_mse: f64,
    /// Fraction of windows with `V(ψ(g)) > (1−β)V(g)`.
    pub violation_rate: f64,
    /// Mean of `max{V(ψ(g)) − (1−β)V(g), 0}` over all windows.
    pub violation_mean: f64,
    /// `‖χ(0)‖∞`.
    pub anchor_chi: f64,
    /// `‖η(0)‖∞`.
    pub anchor_eta: f64,
    pub v_anchor: f64,
    /// Composite training loss with dataset-wide maxima in the worst-case term.
    pub loss: f64,
}

const EVAL_CHUNK: usize = 4096;

pub fn eval_model(model: &CalibModel, ds: &TrajectoryDataset, cfg: &super::TrainConfig) -> Result<EvalReport> {
    let set = PairSet::new(ds, model.depth, &model.normalizer)?;
    Ok(eval_pairs(model, &set, cfg)?.0)
}

pub(crate) fn eval_pairs(
    model: &CalibModel,
    set: &PairSet,
    cfg: &super::TrainConfig,
) -> Result<(EvalReport, super::LossTerms)> {
    let w = model.layout.w_dim();
    let d = model.window_len();
    let shift = d - w;
    let beta = cfg.beta;
    let (mut recon, mut weave, mut subset, mut viol, mut viol_sum) = (0.0, 0.0, 0.0, 0usize, 0.0);
    let (mut max_prev, mut max_next) = (0.0f64, 0.0f64);
    for batch in set.chunks(EVAL_CHUNK) {
        let g_prev = model.encode(&batch.prev)?;
        let g_next = model.encode(&batch.next)?;
        let r_prev = model.decode(&g_prev)?;
        let r_next = model.decode(&g_next)?;
        let e_prev = &batch.prev - &r_prev;
        recon += e_prev.norm_squared();
        max_prev = max_prev.max(e_prev.amax());
        max_next = max_next.max((&batch.next - &r_next).amax());
        let fut_prev = r_prev.columns(w, shift);
        weave += (r_next.columns(0, shift) - fut_prev).norm_squared();
        let g_ctrl = model.transition(&g_prev)?;
        let r_ctrl = model.decode(&g_ctrl)?;
        subset += (r_ctrl.columns(0, shift) - fut_prev).norm_squared();
        let v_prev = model.lyap.value_batch(&g_prev)?;
        let v_ctrl = model.lyap.value_batch(&g_ctrl)?;
        for (vc, vp) in v_ctrl.iter().zip(v_prev.iter()) {
            let excess = vc - (1.0 - beta) * vp;
            if excess > 0.0 {
                viol += 1;
                viol_sum += excess;
            }
        }
    }
    let n = set.len() as f64;
    let chi0 = model.encode(&DMatrix::zeros(1, d))?;
    let eta0 = model.decode(&DMatrix::zeros(1, model.g_dim))?;
    let v_anchor = model.lyap.value_batch(&chi0)?[0];
    let mean_abs = |m: &DMatrix<f64>| m.iter().map(|v| v.abs()).sum::<f64>() / m.len() as f64;
    let terms = super::LossTerms {
        recon: recon / (n * d as f64),
        anchor_chi: mean_abs(&chi0),
        anchor_eta: mean_abs(&eta0),
        weaving: weave / (n * shift as f64),
        worst: max_prev + max_next,
        subset: subset / (n * shift as f64),
        v_anchor,
        hinge: viol_sum / n,
    };
    let report = EvalReport {
        pairs: set.len(),
        recon_mse: terms.recon,
        recon_max: max_prev,
        weaving_mse: terms.weaving,
        subset_mse: terms.subset,
        violation_rate: viol as f64 / n,
        violation_mean: terms.hinge,
        anchor_chi: chi0.amax(),
        anchor_eta: eta0.amax(),
        v_anchor,
        loss: terms.total(cfg),
    };
    Ok((report, terms))
}

/// Closed-loop controller applying [`control_action`], reporting `V(χ(w̃))`.
#[derive(Debug, Clone)]
pub struct CalibController {
    model: CalibModel,
}

impl CalibController {
    pub fn new(model: CalibModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &CalibModel {
        &self.model
    }
}

impl Controller for CalibController {
    fn tag(&self) -> &str {
        "calib"
    }

    fn control(&mut self, window: &Window) -> Result<Vec<f64>> {
        control_action(&self.model, window.data())
    }

    fn lyapunov(&self, window: &Window) -> Option<f64> {
        self.model.lyapunov_of(window.data()).ok()
    }
}

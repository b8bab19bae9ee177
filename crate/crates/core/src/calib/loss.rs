//! Training losses on a batch of normalized window pairs `(w̃_{k−1}, w̃_k)`.
//!
//! Intrinsic part: reconstruction MSE of `w̃_{k−1}`, MAE anchoring of `χ(0)` and `η(0)`,
//! the weaving MSE between the past of `η(χ(w̃_k))` and the future of `η(χ(w̃_{k−1}))`, and
//! the worst absolute reconstruction entry of each window stream.
//!
//! Controlled part: the subset MSE between the past of `η(ψ(g))` and the future of `η(g)`
//! with `g = χ(w̃_{k−1})`, `V(χ(0))`, and the mean hinge `max{V(ψ(g)) − (1−β)V(g), 0}`.

use nalgebra::DMatrix;

use super::{BoundModel, CalibModel, TrainConfig};
use crate::autodiff::{Tape, Var};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    /// `w̃_{k−1}`, one normalized window per row.
    pub prev: DMatrix<f64>,
    /// `w̃_k`.
    pub next: DMatrix<f64>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.prev.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.prev.nrows() == 0
    }
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub recon: f64,
    pub anchor_chi: f64,
    pub anchor_eta: f64,
    pub weaving: f64,
    /// Sum of the max-abs reconstruction errors of both window streams.
    pub worst: f64,
    pub subset: f64,
    pub v_anchor: f64,
    pub hinge: f64,
}

impl LossTerms {
    pub fn intrinsic(&self, cfg: &TrainConfig) -> Vec<(&'static str, f64)> {
        vec![
            ("recon", self.recon),
            ("anchor_chi", cfg.lambda_chi * self.anchor_chi),
            ("anchor_eta", cfg.lambda_eta * self.anchor_eta),
            ("weaving", cfg.lambda_w * self.weaving),
            ("worst", cfg.lambda_inf * self.worst),
        ]
    }

    pub fn controlled(&self, cfg: &TrainConfig) -> Vec<(&'static str, f64)> {
        vec![
            ("subset", cfg.lambda_e * self.subset),
            ("v_anchor", cfg.lambda_v * self.v_anchor),
            ("hinge", cfg.lambda_grad * self.hinge),
        ]
    }

    pub fn total(&self, cfg: &TrainConfig) -> f64 {
        self.intrinsic(cfg).iter().chain(&self.controlled(cfg)).map(|t| t.1).sum()
    }
}

/// A loss value with its weighted contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
}

struct TermVars {
    recon: Var,
    anchor_chi: Var,
    anchor_eta: Var,
    weaving: Var,
    worst_prev: Var,
    worst_next: Var,
    subset: Var,
    v_anchor: Var,
    hinge: Var,
}

fn build(tape: &mut Tape, m: &BoundModel, model: &CalibModel, batch: &PairBatch, beta: f64) -> TermVars {
    let w = model.layout().w_dim();
    let d = model.window_len();
    let shift = d - w;
    let prev = tape.leaf(batch.prev.clone());
    let next = tape.leaf(batch.next.clone());

    let g_prev = m.chi.forward(tape, prev);
    let g_next = m.chi.forward(tape, next);
    let r_prev = m.eta.forward(tape, g_prev);
    let r_next = m.eta.forward(tape, g_next);

    let e_prev = tape.sub(prev, r_prev);
    let e_next = tape.sub(next, r_next);
    let recon = tape.mean_sq(e_prev);
    let worst_prev = tape.max_abs(e_prev);
    let worst_next = tape.max_abs(e_next);

    let zero_w = tape.leaf(DMatrix::zeros(1, d));
    let chi0 = m.chi.forward(tape, zero_w);
    let anchor_chi = tape.mean_abs(chi0);
    let zero_g = tape.leaf(DMatrix::zeros(1, model.g_dim()));
    let eta0 = m.eta.forward(tape, zero_g);
    let anchor_eta = tape.mean_abs(eta0);

    // Π₊ is the last L slots, Π₋ the first L
    let fut_prev = tape.cols(r_prev, w, shift);
    let past_next = tape.cols(r_next, 0, shift);
    let dw = tape.sub(past_next, fut_prev);
    let weaving = tape.mean_sq(dw);

    let g_ctrl = m.psi.forward(tape, g_prev);
    let r_ctrl = m.eta.forward(tape, g_ctrl);
    let past_ctrl = tape.cols(r_ctrl, 0, shift);
    let ds = tape.sub(past_ctrl, fut_prev);
    let subset = tape.mean_sq(ds);

    let v0 = m.lyap.forward(tape, chi0);
    let v_anchor = tape.mean(v0);
    let v_prev = m.lyap.forward(tape, g_prev);
    let v_ctrl = m.lyap.forward(tape, g_ctrl);
    let v_bound = tape.scale(v_prev, 1.0 - beta);
    let excess = tape.sub(v_ctrl, v_bound);
    let hinge = tape.relu(excess);
    let hinge = tape.mean(hinge);

    TermVars {
        recon,
        anchor_chi,
        anchor_eta,
        weaving,
        worst_prev,
        worst_next,
        subset,
        v_anchor,
        hinge,
    }
}

fn weighted(tape: &mut Tape, t: &TermVars, cfg: &TrainConfig) -> Var {
    tape.weighted_sum(&[
        (1.0, t.recon),
        (cfg.lambda_chi, t.anchor_chi),
        (cfg.lambda_eta, t.anchor_eta),
        (cfg.lambda_w, t.weaving),
        (cfg.lambda_inf, t.worst_prev),
        (cfg.lambda_inf, t.worst_next),
        (cfg.lambda_e, t.subset),
        (cfg.lambda_v, t.v_anchor),
        (cfg.lambda_grad, t.hinge),
    ])
}

fn read_terms(tape: &Tape, t: &TermVars) -> LossTerms {
    let v = |x: Var| tape.scalar_value(x);
    LossTerms {
        recon: v(t.recon),
        anchor_chi: v(t.anchor_chi),
        anchor_eta: v(t.anchor_eta),
        weaving: v(t.weaving),
        worst: v(t.worst_prev) + v(t.worst_next),
        subset: v(t.subset),
        v_anchor: v(t.v_anchor),
        hinge: v(t.hinge),
    }
}

fn check_batch(model: &CalibModel, batch: &PairBatch) -> Result<()> {
    check_dim("window pair batch", batch.prev.shape().0, batch.next.shape().0)?;
    check_dim("window length", model.window_len(), batch.prev.ncols())?;
    check_dim("window length", model.window_len(), batch.next.ncols())?;
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    Ok(())
}

fn evaluate(model: &CalibModel, batch: &PairBatch, cfg: &TrainConfig) -> Result<LossTerms> {
    check_batch(model, batch)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let vars = build(&mut tape, &bound, model, batch, cfg.beta);
    let terms = read_terms(&tape, &vars);
    finite(&terms)?;
    Ok(terms)
}

fn finite(t: &LossTerms) -> Result<()> {
    let all = [t.recon, t.anchor_chi, t.anchor_eta, t.weaving, t.worst, t.subset, t.v_anchor, t.hinge];
    if all.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("loss terms {t:?}")))
    }
}

fn report(terms: Vec<(&'static str, f64)>) -> LossReport {
    LossReport {
        total: terms.iter().map(|t| t.1).sum(),
        terms,
    }
}

pub fn loss_intrinsic(model: &CalibModel, batch: &PairBatch, cfg: &TrainConfig) -> Result<LossReport> {
    Ok(report(evaluate(model, batch, cfg)?.intrinsic(cfg)))
}

pub fn loss_controlled(model: &CalibModel, batch: &PairBatch, cfg: &TrainConfig) -> Result<LossReport> {
    Ok(report(evaluate(model, batch, cfg)?.controlled(cfg)))
}

/// Composite loss, its terms, and the gradient in [`CalibModel::params`] order.
pub fn loss_and_grad(model: &CalibModel, batch: &PairBatch, cfg: &TrainConfig) -> Result<(f64, LossTerms, Vec<f64>)> {
    check_batch(model, batch)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let vars = build(&mut tape, &bound, model, batch, cfg.beta);
    let total = weighted(&mut tape, &vars, cfg);
    let terms = read_terms(&tape, &vars);
    let value = tape.scalar_value(total);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss terms {terms:?}")));
    }
    let mut grads = tape.backward(total);
    let mut out = Vec::with_capacity(model.n_params());
    bound.chi.write_grads(&tape, &mut grads, &mut out);
    bound.eta.write_grads(&tape, &mut grads, &mut out);
    bound.psi.write_grads(&tape, &mut grads, &mut out);
    bound.lyap.phi().write_grads(&tape, &mut grads, &mut out);
    Ok((value, terms, out))
}

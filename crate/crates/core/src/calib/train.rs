use std::fs::File;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::control::eval_pairs;
use super::{loss_and_grad, CalibModel, EvalReport, LossTerms, PairSet, TrainConfig};
use crate::autodiff::{adam_step, AdamConfig, AdamState, ParamVector};
use crate::behavior_data::TrajectoryDataset;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt.json";

/// Losses above this abort training.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// One row of `metrics.csv`. Epoch 0 describes the initial model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_recon: f64,
    pub train_anchor_chi: f64,
    pub train_anchor_eta: f64,
    pub train_weaving: f64,
    pub train_worst: f64,
    pub train_subset: f64,
    pub train_v_anchor: f64,
    pub train_hinge: f64,
    pub test_loss: f64,
    pub test_recon_mse: f64,
    pub test_weaving_mse: f64,
    pub test_subset_mse: f64,
    pub test_violation_rate: f64,
    pub test_anchor_chi: f64,
    pub test_anchor_eta: f64,
}

impl EpochMetrics {
    fn new(epoch: usize, train: &LossTerms, train_loss: f64, test: &EvalReport) -> Self {
        Self {
            epoch,
            train_loss,
            train_recon: train.recon,
            train_anchor_chi: train.anchor_chi,
            train_anchor_eta: train.anchor_eta,
            train_weaving: train.weaving,
            train_worst: train.worst,
            train_subset: train.subset,
            train_v_anchor: train.v_anchor,
            train_hinge: train.hinge,
            test_loss: test.loss,
            test_recon_mse: test.recon_mse,
            test_weaving_mse: test.weaving_mse,
            test_subset_mse: test.subset_mse,
            test_violation_rate: test.violation_rate,
            test_anchor_chi: test.anchor_chi,
            test_anchor_eta: test.anchor_eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    /// Epoch whose parameters the model holds on return (0 = initial).
    pub best_epoch: usize,
    pub best_test_loss: f64,
}

/// Mini-batch Adam on the composite loss. After every epoch the model is evaluated on
/// `test` (or on the training pairs when absent); the best-by-test parameters are restored on
/// return and, with `out_dir`, checkpointed next to `metrics.csv`.
pub fn train(
    model: &mut CalibModel,
    train_ds: &TrajectoryDataset,
    test_ds: Option<&TrajectoryDataset>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let train_set = PairSet::new(train_ds, model.depth(), model.normalizer())?;
    let test_set = match test_ds {
        Some(ds) => Some(PairSet::new(ds, model.depth(), model.normalizer())?),
        None => None,
    };
    let eval = |m: &CalibModel| Ok::<_, Error>(eval_pairs(m, test_set.as_ref().unwrap_or(&train_set), cfg)?.0);
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(csv::Writer::from_writer(File::create(dir.join(METRICS_FILE))?))
        }
        None => None,
    };
    let mut log_row = |row: &EpochMetrics| -> Result<()> {
        if let Some(w) = writer.as_mut() {
            w.serialize(row)?;
            w.flush()?;
        }
        Ok(())
    };

    let start = Instant::now();
    let initial = eval(model)?;
    let (_, train0) = eval_pairs(model, &train_set, cfg)?;
    let first = EpochMetrics::new(0, &train0, train0.total(cfg), &initial);
    log_row(&first)?;
    let mut metrics = vec![first];
    let mut best = (0usize, initial.loss, model.params());
    if let Some(dir) = out_dir {
        model.save(&dir.join(CHECKPOINT_FILE), Some(cfg))?;
    }

    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut state = AdamState::new(model.n_params());
    let mut params = model.params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4500);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut sum_loss = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let batch = train_set.batch(idx);
            let (loss, terms, grad) = match loss_and_grad(model, &batch, cfg) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            if loss > DIVERGENCE_LIMIT {
                return Err(Error::Diverged { epoch, loss });
            }
            adam_step(&mut params.0, &grad, &mut state, &adam);
            model.set_params(&params)?;
            accumulate(&mut sum, &terms);
            sum_loss += loss;
            batches += 1;
        }
        let mean = scale(&sum, 1.0 / batches as f64);
        let report = eval(model)?;
        if !report.loss.is_finite() || report.loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { epoch, loss: report.loss });
        }
        let row = EpochMetrics::new(epoch, &mean, sum_loss / batches as f64, &report);
        log::info!(
            "epoch {epoch} ({:.1}s): train {:.4e} test {:.4e} recon {:.3e} violations {:.3}",
            start.elapsed().as_secs_f64(),
            row.train_loss,
            row.test_loss,
            row.test_recon_mse,
            row.test_violation_rate
        );
        log_row(&row)?;
        metrics.push(row);
        if report.loss < best.1 {
            best = (epoch, report.loss, params.clone());
            if let Some(dir) = out_dir {
                model.save(&dir.join(CHECKPOINT_FILE), Some(cfg))?;
            }
        }
    }
    let (best_epoch, best_test_loss, best_params): (usize, f64, ParamVector) = best;
    model.set_params(&best_params)?;
    Ok(TrainReport {
        metrics,
        best_epoch,
        best_test_loss,
    })
}

fn accumulate(acc: &mut LossTerms, t: &LossTerms) {
    acc.recon += t.recon;
    acc.anchor_chi += t.anchor_chi;
    acc.anchor_eta += t.anchor_eta;
    acc.weaving += t.weaving;
    acc.worst += t.worst;
    acc.subset += t.subset;
    acc.v_anchor += t.v_anchor;
    acc.hinge += t.hinge;
}

fn scale(t: &LossTerms, s: f64) -> LossTerms {
    LossTerms {
        recon: t.recon * s,
        anchor_chi: t.anchor_chi * s,
        anchor_eta: t.anchor_eta * s,
        weaving: t.weaving * s,
        worst: t.worst * s,
        subset: t.subset * s,
        v_anchor: t.v_anchor * s,
        hinge: t.hinge * s,
    }
}

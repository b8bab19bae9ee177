use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

use super::TrajectoryDataset;

/// Standard deviations below this are treated as degenerate and clamped to 1.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Per-component affine map `w ↦ (w - center) / scale`, centered on the control setpoint
/// so that the setpoint window maps to the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalizer {
    pub fn new(center: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_dim("normalizer scale", center.len(), scale.len())?;
        if let Some(bad) = scale.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "normalizer scale[{bad}] = {} is not strictly positive",
                scale[bad]
            )));
        }
        Ok(Self { center, scale })
    }

    pub fn identity(w_dim: usize) -> Self {
        Self {
            center: vec![0.0; w_dim],
            scale: vec![1.0; w_dim],
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn w_dim(&self) -> usize {
        self.center.len()
    }

    /// Normalize a sample or any time-major stack of samples in place.
    pub fn normalize_in_place(&self, v: &mut [f64]) {
        let w = self.w_dim();
        debug_assert_eq!(v.len() % w, 0);
        for (i, x) in v.iter_mut().enumerate() {
            let c = i % w;
            *x = (*x - self.center[c]) / self.scale[c];
        }
    }

    pub fn denormalize_in_place(&self, v: &mut [f64]) {
        let w = self.w_dim();
        debug_assert_eq!(v.len() % w, 0);
        for (i, x) in v.iter_mut().enumerate() {
            let c = i % w;
            *x = *x * self.scale[c] + self.center[c];
        }
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.normalize_in_place(&mut out);
        out
    }

    pub fn denormalize(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.denormalize_in_place(&mut out);
        out
    }

    /// Map normalized values of selected components back to physical units.
    pub fn denormalize_components(&self, values: &[f64], components: &[usize]) -> Vec<f64> {
        values
            .iter()
            .zip(components)
            .map(|(&v, &c)| v * self.scale[c] + self.center[c])
            .collect()
    }
}

/// Setpoint-centered normalizer whose scale is the per-component standard deviation
/// over every sample in the dataset.
pub fn fit_normalizer(ds: &TrajectoryDataset, setpoint: &[f64]) -> Result<Normalizer> {
    let w = ds.layout().w_dim();
    check_dim("setpoint", w, setpoint.len())?;
    let mut count = 0usize;
    let mut mean = vec![0.0; w];
    let mut m2 = vec![0.0; w];
    // Welford accumulation keeps the variance accurate for large offsets.
    for traj in ds.trajectories() {
        for s in traj.samples() {
            count += 1;
            for c in 0..w {
                let delta = s[c] - mean[c];
                mean[c] += delta / count as f64;
                m2[c] += delta * (s[c] - mean[c]);
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidConfig("cannot fit normalizer on empty dataset".into()));
    }
    let scale = m2
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let std = (m / count as f64).sqrt();
            if std < DEGENERATE_STD {
                log::warn!("component {c} is degenerate (std = {std:e}); scale clamped to 1");
                1.0
            } else {
                std
            }
        })
        .collect();
    Normalizer::new(setpoint.to_vec(), scale)
}

//! The drone plant, data generation, closed-loop harness and the DeePC baseline.

use std::sync::Arc;

use crate::behavior_data::{SignalLayout, Window};
use crate::error::Result;
use crate::synthesis::StabilizedController;

mod closed_loop;
mod deepc;
mod drone;
mod generator;
mod linear;

pub use closed_loop::{run_closed_loop, ClosedLoopConfig, ClosedLoopLog, StepRecord};
pub use deepc::{Deepc, DeepcConfig};
pub use drone::{drone_step, DroneInput, DronePlant, DroneState, TAU};
pub use generator::{
    generate_dataset, generate_trajectory, trajectory_seed, GeneratorConfig, PlantKind,
};
pub use linear::LinearPlant;

/// A discrete-time system driven through its inputs and observed through its outputs.
pub trait Plant {
    fn layout(&self) -> Arc<SignalLayout>;
    fn dt(&self) -> f64;
    /// Current outputs `y_k`.
    fn measure(&self) -> Vec<f64>;
    /// Advance one step under input `u_k`.
    fn apply(&mut self, u: &[f64]);
    /// Internal state, for logging only.
    fn state(&self) -> Vec<f64>;
}

/// Maps the previous window `w̃_{k−1}` (physical units) to the next input `u_k`.
pub trait Controller {
    fn tag(&self) -> &str;
    fn control(&mut self, window: &Window) -> Result<Vec<f64>>;
    /// Lyapunov value of the window, when the controller has one.
    fn lyapunov(&self, _window: &Window) -> Option<f64> {
        None
    }
}

/// Always returns the same input.
#[derive(Debug, Clone)]
pub struct ConstantController(pub Vec<f64>);

impl Controller for ConstantController {
    fn tag(&self) -> &str {
        "constant"
    }

    fn control(&mut self, _window: &Window) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// `u_k = K w̃_{k−1}` from a synthesized certificate, with `V = gᵀW⁻¹g` on `g = H_pinv w̃`
/// when the representation is attached.
#[derive(Debug, Clone)]
pub struct LinearGainController {
    ctrl: StabilizedController,
    lyap: Option<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)>,
}

impl LinearGainController {
    pub fn new(ctrl: StabilizedController) -> Self {
        Self { ctrl, lyap: None }
    }

    pub fn with_rep(ctrl: StabilizedController, rep: &crate::lti_behavior::IntrinsicLtiRep) -> Self {
        let m = ctrl.w.clone().try_inverse();
        let lyap = m.map(|m| (m, rep.h_pinv().clone()));
        Self { ctrl, lyap }
    }
}

impl Controller for LinearGainController {
    fn tag(&self) -> &str {
        "lti"
    }

    fn control(&mut self, window: &Window) -> Result<Vec<f64>> {
        self.ctrl.control(window.data())
    }

    fn lyapunov(&self, window: &Window) -> Option<f64> {
        let (m, pinv) = self.lyap.as_ref()?;
        let g = pinv * nalgebra::DVector::from_column_slice(window.data());
        Some(g.dot(&(m * &g)))
    }
}

#[cfg(test)]
mod tests;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Plant;
use crate::behavior_data::SignalLayout;

/// Sampling period of the discretized drone, seconds.
pub const TAU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroneState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Yaw, radians, unwrapped.
    pub mu: f64,
}

impl DroneState {
    pub fn at(x: f64, y: f64, z: f64, mu: f64) -> Self {
        Self { x, y, z, mu }
    }

    /// Yaw wrapped to `(−π, π]`, for reporting.
    pub fn wrapped_yaw(&self) -> f64 {
        let mut m = self.mu.rem_euclid(2.0 * PI);
        if m > PI {
            m -= 2.0 * PI;
        }
        m
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroneInput {
    /// Forward velocity, m/s.
    pub v: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
    /// Vertical velocity, m/s.
    pub s: f64,
}

impl DroneInput {
    pub fn new(v: f64, omega: f64, s: f64) -> Self {
        Self { v, omega, s }
    }
}

pub fn drone_step(state: &DroneState, input: &DroneInput, tau: f64) -> DroneState {
    DroneState {
        x: state.x + tau * input.v * state.mu.cos(),
        y: state.y + tau * input.v * state.mu.sin(),
        z: state.z + tau * input.s,
        mu: state.mu + tau * input.omega,
    }
}

/// The drone as a [`Plant`]: outputs are positions, yaw stays hidden.
#[derive(Debug, Clone)]
pub struct DronePlant {
    state: DroneState,
    tau: f64,
    layout: Arc<SignalLayout>,
}

impl DronePlant {
    pub fn new(state: DroneState) -> Self {
        Self {
            state,
            tau: TAU,
            layout: Arc::new(SignalLayout::drone()),
        }
    }

    pub fn drone_state(&self) -> DroneState {
        self.state
    }
}

impl Plant for DronePlant {
    fn layout(&self) -> Arc<SignalLayout> {
        self.layout.clone()
    }

    fn dt(&self) -> f64 {
        self.tau
    }

    fn measure(&self) -> Vec<f64> {
        self.state.position().to_vec()
    }

    fn apply(&mut self, u: &[f64]) {
        self.state = drone_step(&self.state, &DroneInput::new(u[0], u[1], u[2]), self.tau);
    }

    fn state(&self) -> Vec<f64> {
        vec![self.state.x, self.state.y, self.state.z, self.state.mu]
    }
}

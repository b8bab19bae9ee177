//! Dense networks with reverse-mode gradients, Adam, and a bounded Lyapunov head.

mod adam;
mod dense;
mod lyapunov;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{Activation, BoundNet, DenseNet, ParamVector};
pub use lyapunov::{BoundLyapunov, LyapunovHead, DEFAULT_LOWER, DEFAULT_UPPER};
pub use tape::{Grads, Tape, Var};

/// Central-difference gradient of `f` at `p`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, p: &[f64], step: f64) -> Vec<f64> {
    let mut work = p.to_vec();
    (0..p.len())
        .map(|i| {
            work[i] = p[i] + step;
            let up = f(&work);
            work[i] = p[i] - step;
            let down = f(&work);
            work[i] = p[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of one manifest sample `w` into input and output components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalLayout {
    w_dim: usize,
    input_indices: Vec<usize>,
    output_indices: Vec<usize>,
    names: Vec<String>,
    units: Vec<String>,
}

impl SignalLayout {
    pub fn new(
        w_dim: usize,
        input_indices: Vec<usize>,
        output_indices: Vec<usize>,
        names: Vec<String>,
        units: Vec<String>,
    ) -> Result<Self> {
        let mut seen = vec![false; w_dim];
        for &i in input_indices.iter().chain(&output_indices) {
            if i >= w_dim {
                return Err(Error::InvalidLayout(format!(
                    "component index {i} outside 0..{w_dim}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidLayout(format!("component {i} listed twice")));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidLayout(format!(
                "component {missing} is neither input nor output"
            )));
        }
        if names.len() != w_dim || units.len() != w_dim {
            return Err(Error::InvalidLayout(format!(
                "expected {w_dim} names and units, got {} and {}",
                names.len(),
                units.len()
            )));
        }
        Ok(Self {
            w_dim,
            input_indices,
            output_indices,
            names,
            units,
        })
    }

    /// Layout with generated names `w0, w1, ...` and empty units.
    pub fn unnamed(
        w_dim: usize,
        input_indices: Vec<usize>,
        output_indices: Vec<usize>,
    ) -> Result<Self> {
        let names = (0..w_dim).map(|i| format!("w{i}")).collect();
        let units = vec![String::new(); w_dim];
        Self::new(w_dim, input_indices, output_indices, names, units)
    }

    /// `w = col(x, y, z, v, omega, s)`: positions are outputs, velocities and yaw rate inputs.
    pub fn drone() -> Self {
        let names = ["x", "y", "z", "v", "omega", "s"].map(String::from).to_vec();
        let units = ["m", "m", "m", "m/s", "rad/s", "m/s"]
            .map(String::from)
            .to_vec();
        Self::new(6, vec![3, 4, 5], vec![0, 1, 2], names, units).expect("static layout")
    }

    /// Single-input single-output layout `w = col(u, y)`.
    pub fn siso() -> Self {
        Self::new(
            2,
            vec![0],
            vec![1],
            vec!["u".into(), "y".into()],
            vec![String::new(), String::new()],
        )
        .expect("static layout")
    }

    /// Output-only scalar layout for autonomous systems.
    pub fn autonomous_scalar() -> Self {
        Self::new(1, vec![], vec![0], vec!["y".into()], vec![String::new()])
            .expect("static layout")
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn u_dim(&self) -> usize {
        self.input_indices.len()
    }

    pub fn y_dim(&self) -> usize {
        self.output_indices.len()
    }

    pub fn input_indices(&self) -> &[usize] {
        &self.input_indices
    }

    pub fn output_indices(&self) -> &[usize] {
        &self.output_indices
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    /// Assemble a manifest sample from separate output and input vectors.
    pub fn compose(&self, outputs: &[f64], inputs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(outputs.len(), self.y_dim());
        debug_assert_eq!(inputs.len(), self.u_dim());
        let mut w = vec![0.0; self.w_dim];
        for (&i, &v) in self.output_indices.iter().zip(outputs) {
            w[i] = v;
        }
        for (&i, &v) in self.input_indices.iter().zip(inputs) {
            w[i] = v;
        }
        w
    }

    pub fn inputs_of(&self, sample: &[f64]) -> Vec<f64> {
        self.input_indices.iter().map(|&i| sample[i]).collect()
    }

    pub fn outputs_of(&self, sample: &[f64]) -> Vec<f64> {
        self.output_indices.iter().map(|&i| sample[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlap_and_gaps() {
        assert!(SignalLayout::unnamed(3, vec![0], vec![0, 1]).is_err());
        assert!(SignalLayout::unnamed(3, vec![0], vec![1]).is_err());
        assert!(SignalLayout::unnamed(2, vec![2], vec![0]).is_err());
        assert!(SignalLayout::unnamed(2, vec![1], vec![0]).is_ok());
    }

    #[test]
    fn drone_layout_dimensions() {
        let l = SignalLayout::drone();
        assert_eq!((l.w_dim(), l.u_dim(), l.y_dim()), (6, 3, 3));
        let w = l.compose(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert_eq!(w, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(l.inputs_of(&w), vec![4.0, 5.0, 6.0]);
    }
}

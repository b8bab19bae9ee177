use std::sync::Arc;

use crate::error::{check_dim, Error, Result};

use super::SignalLayout;

/// Sampled trajectory `w_[0,T]`, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: Vec<f64>,
    layout: Arc<SignalLayout>,
    dt: f64,
}

impl Trajectory {
    pub fn new(samples: &[Vec<f64>], layout: Arc<SignalLayout>, dt: f64) -> Result<Self> {
        let w = layout.w_dim();
        let mut data = Vec::with_capacity(samples.len() * w);
        for s in samples {
            check_dim("trajectory sample", w, s.len())?;
            data.extend_from_slice(s);
        }
        Self::from_flat(data, layout, dt)
    }

    pub fn from_flat(data: Vec<f64>, layout: Arc<SignalLayout>, dt: f64) -> Result<Self> {
        let w = layout.w_dim();
        if w == 0 || data.is_empty() || !data.len().is_multiple_of(w) {
            return Err(Error::Format(format!(
                "flat trajectory of length {} is not a nonempty multiple of w_dim {w}",
                data.len()
            )));
        }
        Ok(Self { data, layout, dt })
    }

    /// Number of samples, `T + 1`.
    pub fn len(&self) -> usize {
        self.data.len() / self.layout.w_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Final time index `T`.
    pub fn horizon(&self) -> usize {
        self.len() - 1
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        let w = self.layout.w_dim();
        &self.data[k * w..(k + 1) * w]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.layout.w_dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn layout(&self) -> &Arc<SignalLayout> {
        &self.layout
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Contiguous slots `k0..=k1`, time-major.
    pub fn segment(&self, k0: usize, k1: usize) -> &[f64] {
        let w = self.layout.w_dim();
        &self.data[k0 * w..(k1 + 1) * w]
    }
}

/// Stacked trajectory segment `w̃_k = w_[k-L, k]`, oldest slot first.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    data: Vec<f64>,
    depth: usize,
    layout: Arc<SignalLayout>,
}

impl Window {
    pub fn new(data: Vec<f64>, depth: usize, layout: Arc<SignalLayout>) -> Result<Self> {
        check_dim("window", (depth + 1) * layout.w_dim(), data.len())?;
        Ok(Self {
            data,
            depth,
            layout,
        })
    }

    pub fn zeros(depth: usize, layout: Arc<SignalLayout>) -> Self {
        let n = (depth + 1) * layout.w_dim();
        Self {
            data: vec![0.0; n],
            depth,
            layout,
        }
    }

    /// The window obtained by repeating one sample in every slot.
    pub fn constant(sample: &[f64], depth: usize, layout: Arc<SignalLayout>) -> Result<Self> {
        check_dim("window sample", layout.w_dim(), sample.len())?;
        let data = sample.repeat(depth + 1);
        Ok(Self {
            data,
            depth,
            layout,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn layout(&self) -> &Arc<SignalLayout> {
        &self.layout
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        let w = self.layout.w_dim();
        &self.data[i * w..(i + 1) * w]
    }

    /// Drop the oldest slot and append `sample` as the newest.
    pub fn shifted(&self, sample: &[f64]) -> Result<Self> {
        let w = self.layout.w_dim();
        check_dim("window sample", w, sample.len())?;
        let mut data = Vec::with_capacity(self.data.len());
        data.extend_from_slice(&self.data[w..]);
        data.extend_from_slice(sample);
        Ok(Self {
            data,
            depth: self.depth,
            layout: self.layout.clone(),
        })
    }
}

/// Index maps for the selectors Π₋ (first L slots), Π₊ (last L slots),
/// Π₀ (last slot) and Π_u (input components of the last slot).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSelectors {
    depth: usize,
    w_dim: usize,
    input_indices: Vec<usize>,
}

impl WindowSelectors {
    pub fn new(depth: usize, layout: &SignalLayout) -> Self {
        Self {
            depth,
            w_dim: layout.w_dim(),
            input_indices: layout.input_indices().to_vec(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn u_dim(&self) -> usize {
        self.input_indices.len()
    }

    pub fn window_len(&self) -> usize {
        (self.depth + 1) * self.w_dim
    }

    /// Length of Π₋ and Π₊ images, `L·w`.
    pub fn shift_len(&self) -> usize {
        self.depth * self.w_dim
    }

    pub fn past<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[..self.shift_len()]
    }

    pub fn future<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.w_dim..]
    }

    pub fn last<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.shift_len()..]
    }

    pub fn inputs(&self, v: &[f64]) -> Vec<f64> {
        let last = self.last(v);
        self.input_indices.iter().map(|&i| last[i]).collect()
    }

    /// Row indices of Π₋ in a window-indexed matrix.
    pub fn past_rows(&self) -> std::ops::Range<usize> {
        0..self.shift_len()
    }

    pub fn future_rows(&self) -> std::ops::Range<usize> {
        self.w_dim..self.window_len()
    }

    pub fn last_rows(&self) -> std::ops::Range<usize> {
        self.shift_len()..self.window_len()
    }

    /// Row indices of Π_u in a window-indexed matrix.
    pub fn input_rows(&self) -> Vec<usize> {
        self.input_indices
            .iter()
            .map(|&i| self.shift_len() + i)
            .collect()
    }
}

/// `w̃_k` from samples `k-L ..= k`.
pub fn make_window(traj: &Trajectory, k: usize, depth: usize) -> Result<Window> {
    let horizon = traj.horizon();
    if k < depth || k > horizon {
        return Err(Error::IndexOutOfRange { k, depth, horizon });
    }
    Ok(Window {
        data: traj.segment(k - depth, k).to_vec(),
        depth,
        layout: traj.layout().clone(),
    })
}

/// Overlapping window pairs `(w̃_{k-1}, w̃_k)` for `k = L+1 ..= T`; empty when `T < L+1`.
pub fn sliding_pairs(traj: &Trajectory, depth: usize) -> Vec<(Window, Window)> {
    let horizon = traj.horizon();
    if horizon < depth + 1 {
        return Vec::new();
    }
    (depth + 1..=horizon)
        .map(|k| {
            let prev = make_window(traj, k - 1, depth).expect("index checked");
            let next = make_window(traj, k, depth).expect("index checked");
            (prev, next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_d() -> Arc<SignalLayout> {
        Arc::new(SignalLayout::unnamed(2, vec![1], vec![0]).unwrap())
    }

    fn traj_from(values: &[f64], layout: Arc<SignalLayout>) -> Trajectory {
        Trajectory::from_flat(values.to_vec(), layout, 1.0).unwrap()
    }

    #[test]
    fn depth_zero_window_is_the_sample() {
        let t = traj_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], two_d());
        for k in 0..3 {
            assert_eq!(make_window(&t, k, 0).unwrap().data(), t.sample(k));
        }
    }

    #[test]
    fn stacks_by_hand() {
        let t = traj_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], two_d());
        assert_eq!(make_window(&t, 1, 1).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn last_window_of_long_trajectory() {
        let values: Vec<f64> = (0..201 * 2).map(f64::from).collect();
        let t = traj_from(&values, two_d());
        let w = make_window(&t, 200, 4).unwrap();
        assert_eq!(w.data().len(), 10);
        assert_eq!(w.data(), &values[196 * 2..]);
    }

    #[test]
    fn out_of_range_indices() {
        let t = traj_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], two_d());
        assert!(matches!(
            make_window(&t, 0, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            make_window(&t, 3, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn pair_counts() {
        let t = traj_from(&[0.0; 8], two_d()); // T = 3
        assert!(sliding_pairs(&t, 3).is_empty());
        assert_eq!(sliding_pairs(&t, 2).len(), 1);
        let long = traj_from(&[0.0; 201 * 2], two_d());
        assert_eq!(sliding_pairs(&long, 4).len(), 196);
    }

    #[test]
    fn selectors_pick_expected_ranges() {
        let sel = WindowSelectors::new(2, &SignalLayout::unnamed(2, vec![1], vec![0]).unwrap());
        let v = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(sel.past(&v), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(sel.future(&v), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(sel.last(&v), &[4.0, 5.0]);
        assert_eq!(sel.inputs(&v), vec![5.0]);
        assert_eq!(sel.input_rows(), vec![5]);
    }

    proptest! {
        #[test]
        fn shift_overlap_holds_on_every_pair(
            values in proptest::collection::vec(-1e3f64..1e3, 2 * 12),
            depth in 0usize..5,
        ) {
            let t = traj_from(&values, two_d());
            let sel = WindowSelectors::new(depth, t.layout());
            for (prev, next) in sliding_pairs(&t, depth) {
                prop_assert_eq!(sel.future(prev.data()), sel.past(next.data()));
                let mut rebuilt = sel.past(next.data()).to_vec();
                rebuilt.extend_from_slice(sel.last(next.data()));
                prop_assert_eq!(&rebuilt[..], next.data());
                prop_assert_eq!(sel.inputs(next.data()), t.layout().inputs_of(sel.last(next.data())));
            }
        }
    }
}

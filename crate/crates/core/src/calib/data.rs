use nalgebra::DMatrix;

use crate::behavior_data::{Normalizer, TrajectoryDataset, WindowSelectors};
use crate::error::{check_dim, Error, Result};

use super::PairBatch;

/// Every normalized window of a dataset, stored row-contiguous, plus the index pairs
/// `(w̃_{k−1}, w̃_k)` of consecutive windows within each trajectory.
#[derive(Debug, Clone)]
pub struct PairSet {
    window_len: usize,
    windows: Vec<f64>,
    pairs: Vec<(u32, u32)>,
}

impl PairSet {
    pub fn new(ds: &TrajectoryDataset, depth: usize, normalizer: &Normalizer) -> Result<Self> {
        let w = ds.layout().w_dim();
        check_dim("normalizer", w, normalizer.w_dim())?;
        let window_len = (depth + 1) * w;
        let sel = WindowSelectors::new(depth, ds.layout());
        let mut windows = Vec::new();
        let mut pairs = Vec::new();
        let mut count = 0u32;
        for traj in ds.trajectories() {
            if traj.len() < depth + 2 {
                continue;
            }
            let n = traj.len() - depth;
            let flat: Vec<f64> = normalizer.normalize(traj.as_flat());
            for k in 0..n {
                windows.extend_from_slice(&flat[k * w..k * w + window_len]);
            }
            for k in 1..n {
                let (a, b) = (count + k as u32 - 1, count + k as u32);
                // overlap is exact by construction; check it anyway
                let pa = &windows[a as usize * window_len..(a as usize + 1) * window_len];
                let pb = &windows[b as usize * window_len..(b as usize + 1) * window_len];
                if sel.future(pa) != sel.past(pb) {
                    return Err(Error::Format("window pair overlap mismatch".into()));
                }
                pairs.push((a, b));
            }
            count += n as u32;
        }
        if pairs.is_empty() {
            return Err(Error::TrajectoryTooShort { horizon: 0, needed: depth + 1 });
        }
        Ok(Self { window_len, windows, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    fn window(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.windows[i * self.window_len..(i + 1) * self.window_len]
    }

    /// Batch of the pairs at the given positions.
    pub fn batch(&self, idx: &[usize]) -> PairBatch {
        let d = self.window_len;
        let gather = |pick: fn(&(u32, u32)) -> u32| {
            let mut m = DMatrix::zeros(idx.len(), d);
            for (r, &i) in idx.iter().enumerate() {
                let src = self.window(pick(&self.pairs[i]));
                for (c, v) in src.iter().enumerate() {
                    m[(r, c)] = *v;
                }
            }
            m
        };
        PairBatch {
            prev: gather(|p| p.0),
            next: gather(|p| p.1),
        }
    }

    /// Consecutive batches over all pairs in storage order.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = PairBatch> + '_ {
        let n = self.len();
        (0..n).step_by(size.max(1)).map(move |s| {
            let idx: Vec<usize> = (s..(s + size).min(n)).collect();
            self.batch(&idx)
        })
    }
}

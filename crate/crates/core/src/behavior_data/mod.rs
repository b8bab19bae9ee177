//! Trajectory data, windowing, Hankel construction and normalization.
//!
//! A window `w̃_k` stacks the samples `w_{k-L}, ..., w_k` time-major (oldest slot first),
//! with each slot ordered as in the [`SignalLayout`]. Every downstream module shares this
//! flattening.

mod dataset;
mod hankel;
mod layout;
mod normalizer;
mod window;

pub use dataset::{
    read_dataset, write_dataset, DatasetManifest, Provenance, Split, TrajectoryDataset,
    MANIFEST_FILE,
};
pub use hankel::{build_hankel, build_mosaic_hankel, check_rank, RankReport, DEFAULT_RANK_TOL};
pub use layout::SignalLayout;
pub use normalizer::{fit_normalizer, Normalizer, DEGENERATE_STD};
pub use window::{make_window, sliding_pairs, Trajectory, Window, WindowSelectors};

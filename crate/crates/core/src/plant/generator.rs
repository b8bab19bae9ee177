use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DronePlant, DroneState, LinearPlant, Plant};
use crate::behavior_data::{Provenance, Split, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Drone,
    Integrator,
    DoubleIntegrator,
}

impl fmt::Display for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlantKind::Drone => "drone",
            PlantKind::Integrator => "integrator",
            PlantKind::DoubleIntegrator => "double-integrator",
        })
    }
}

impl FromStr for PlantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drone" => Ok(PlantKind::Drone),
            "integrator" => Ok(PlantKind::Integrator),
            "double-integrator" => Ok(PlantKind::DoubleIntegrator),
            other => Err(Error::InvalidConfig(format!("unknown plant {other:?}"))),
        }
    }
}

impl PlantKind {
    /// Plant at the given initial state.
    pub fn build(self, x0: &[f64]) -> Box<dyn Plant> {
        match self {
            PlantKind::Drone => Box::new(DronePlant::new(DroneState::at(x0[0], x0[1], x0[2], x0[3]))),
            PlantKind::Integrator => Box::new(LinearPlant::integrator(x0[0])),
            PlantKind::DoubleIntegrator => Box::new(LinearPlant::double_integrator(x0[0], x0[1])),
        }
    }

    /// Length of the internal state vector.
    pub fn state_dim(self) -> usize {
        match self {
            PlantKind::Drone => 4,
            PlantKind::Integrator => 1,
            PlantKind::DoubleIntegrator => 2,
        }
    }

    fn input_names(self) -> &'static [&'static str] {
        match self {
            PlantKind::Drone => &["v", "omega", "s"],
            PlantKind::Integrator | PlantKind::DoubleIntegrator => &["u"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub plant: PlantKind,
    /// `[lo, hi]` per input channel.
    pub input_ranges: Vec<[f64; 2]>,
    /// Inclusive range of hold lengths, in steps.
    pub hold: [usize; 2],
    /// Samples per trajectory.
    pub length: usize,
    pub count: usize,
    /// Uniform range for every non-yaw initial state component.
    pub position_range: [f64; 2],
    /// Uniform range for the initial yaw (drone only).
    pub yaw_range: [f64; 2],
    pub seed: u64,
    pub split: Split,
}

impl GeneratorConfig {
    /// Full operating range: positions in `[−10, 10]³`, any heading.
    pub fn drone(count: usize, length: usize, seed: u64, split: Split) -> Self {
        Self {
            plant: PlantKind::Drone,
            input_ranges: vec![[0.0, 5.0], [-0.5, 0.5], [-5.0, 5.0]],
            hold: [1, 5],
            length,
            count,
            position_range: [-10.0, 10.0],
            yaw_range: [-PI, PI],
            seed,
            split,
        }
    }

    /// Small-signal data for the linear design: positions in `[−1, 1]³`, inputs at 10% of
    /// the full ranges, heading close to zero.
    pub fn drone_near_origin(count: usize, length: usize, seed: u64, split: Split) -> Self {
        Self {
            input_ranges: vec![[0.0, 0.5], [-0.05, 0.05], [-0.5, 0.5]],
            position_range: [-1.0, 1.0],
            yaw_range: [-0.1, 0.1],
            ..Self::drone(count, length, seed, split)
        }
    }

    pub fn linear(plant: PlantKind, count: usize, length: usize, seed: u64, split: Split) -> Self {
        Self {
            plant,
            input_ranges: vec![[-1.0, 1.0]],
            hold: [1, 1],
            length,
            count,
            position_range: [-1.0, 1.0],
            yaw_range: [0.0, 0.0],
            seed,
            split,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if self.length < 2 {
            return bad(format!("length {} too short", self.length));
        }
        if self.hold[0] == 0 || self.hold[0] > self.hold[1] || self.hold[1] > self.length {
            return bad(format!("hold range {:?} must lie in [1, length]", self.hold));
        }
        let want = self.plant.input_names().len();
        if self.input_ranges.len() != want {
            return bad(format!("{} input ranges given, plant has {want}", self.input_ranges.len()));
        }
        let ranges = self
            .input_ranges
            .iter()
            .chain([&self.position_range, &self.yaw_range]);
        for r in ranges {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return bad(format!("invalid range {r:?}"));
            }
        }
        Ok(())
    }

    fn provenance(&self) -> Provenance {
        let mut ranges = BTreeMap::new();
        for (name, r) in self.plant.input_names().iter().zip(&self.input_ranges) {
            ranges.insert(name.to_string(), *r);
        }
        ranges.insert("hold".into(), [self.hold[0] as f64, self.hold[1] as f64]);
        ranges.insert("initial_position".into(), self.position_range);
        if self.plant == PlantKind::Drone {
            ranges.insert("initial_yaw".into(), self.yaw_range);
        }
        Provenance {
            generator: self.plant.to_string(),
            seed: self.seed,
            ranges,
        }
    }
}

/// SplitMix64 finalizer; decorrelates per-trajectory seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`; train and test draw from disjoint streams.
pub fn trajectory_seed(master: u64, split: Split, index: usize) -> u64 {
    let tag = match split {
        Split::Train => 0x5452_4149_4E00_0000,
        Split::Test => 0x5445_5354_0000_0000,
    };
    mix(mix(master ^ tag).wrapping_add(index as u64))
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// One trajectory: random initial state, then piecewise-constant random inputs with
/// independently drawn hold lengths. Each sample is `(y_k, u_k)` with `y_k` measured
/// before `u_k` is applied.
pub fn generate_trajectory(cfg: &GeneratorConfig, index: usize) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(cfg.seed, cfg.split, index));
    let mut x0: Vec<f64> = (0..cfg.plant.state_dim())
        .map(|_| uniform(&mut rng, cfg.position_range))
        .collect();
    if cfg.plant == PlantKind::Drone {
        x0[3] = uniform(&mut rng, cfg.yaw_range);
    }
    let mut plant = cfg.plant.build(&x0);
    let layout = plant.layout();
    let mut data = Vec::with_capacity(cfg.length * layout.w_dim());
    let mut u = vec![0.0; cfg.input_ranges.len()];
    let mut hold_left = 0;
    for _ in 0..cfg.length {
        if hold_left == 0 {
            for (ui, r) in u.iter_mut().zip(&cfg.input_ranges) {
                *ui = uniform(&mut rng, *r);
            }
            hold_left = rng.random_range(cfg.hold[0]..=cfg.hold[1]);
        }
        hold_left -= 1;
        data.extend(layout.compose(&plant.measure(), &u));
        plant.apply(&u);
    }
    Trajectory::from_flat(data, layout, plant.dt())
}

pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<TrajectoryDataset> {
    cfg.validate()?;
    let trajectories = (0..cfg.count)
        .map(|i| generate_trajectory(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(trajectories, cfg.split, cfg.provenance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior_data::sliding_pairs;

    #[test]
    fn inputs_respect_ranges_and_holds() {
        let cfg = GeneratorConfig::drone(20, 201, 3, Split::Train);
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 20);
        for t in ds.trajectories() {
            assert_eq!(t.len(), 201);
            let mut run = 1;
            let mut prev: Option<Vec<f64>> = None;
            for s in t.samples() {
                let u = t.layout().inputs_of(s);
                for (ui, r) in u.iter().zip(&cfg.input_ranges) {
                    assert!(*ui >= r[0] && *ui <= r[1]);
                }
                if prev.as_ref() == Some(&u) {
                    run += 1;
                    assert!(run <= 5);
                } else {
                    run = 1;
                }
                prev = Some(u);
            }
        }
    }

    #[test]
    fn window_counts() {
        let cfg = GeneratorConfig::drone(2, 201, 1, Split::Test);
        let ds = generate_dataset(&cfg).unwrap();
        // 197 windows give 196 consecutive pairs
        assert_eq!(sliding_pairs(&ds.trajectories()[0], 4).len(), 196);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = GeneratorConfig::drone(3, 31, 9, Split::Train);
        assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
        let test = GeneratorConfig { split: Split::Test, ..cfg.clone() };
        assert_ne!(
            generate_dataset(&cfg).unwrap().trajectories()[0],
            generate_dataset(&test).unwrap().trajectories()[0]
        );
    }

    #[test]
    fn measured_positions_follow_the_model() {
        let cfg = GeneratorConfig::drone(1, 50, 4, Split::Train);
        let t = generate_trajectory(&cfg, 0).unwrap();
        for k in 0..49 {
            let (a, b) = (t.sample(k), t.sample(k + 1));
            // vertical channel is exactly z⁺ = z + τ s
            assert!((b[2] - a[2] - 0.1 * a[5]).abs() < 1e-12);
            // planar speed matches v
            let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            assert!((d - 0.1 * a[3]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = GeneratorConfig::drone(1, 10, 0, Split::Train);
        cfg.hold = [0, 3];
        assert!(cfg.validate().is_err());
        cfg.hold = [1, 11];
        assert!(cfg.validate().is_err());
        cfg.hold = [1, 5];
        cfg.count = 0;
        assert!(cfg.validate().is_err());
    }
}

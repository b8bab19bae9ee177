use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

use super::{SignalLayout, Trajectory};

pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    /// Named `[lo, hi]` ranges used by the generator.
    pub ranges: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    trajectories: Vec<Trajectory>,
    split: Split,
    provenance: Provenance,
    setpoint: Vec<f64>,
}

impl TrajectoryDataset {
    /// All trajectories must share one layout and sampling period. The setpoint defaults to zero.
    pub fn new(trajectories: Vec<Trajectory>, split: Split, provenance: Provenance) -> Result<Self> {
        let Some(first) = trajectories.first() else {
            return Err(Error::InvalidConfig("dataset has no trajectories".into()));
        };
        let layout = first.layout().clone();
        let dt = first.dt();
        for t in &trajectories[1..] {
            if **t.layout() != *layout {
                return Err(Error::InvalidLayout("trajectories disagree on layout".into()));
            }
            if t.dt() != dt {
                return Err(Error::InvalidConfig("trajectories disagree on dt".into()));
            }
        }
        let setpoint = vec![0.0; layout.w_dim()];
        Ok(Self {
            trajectories,
            split,
            provenance,
            setpoint,
        })
    }

    pub fn with_setpoint(mut self, setpoint: Vec<f64>) -> Result<Self> {
        check_dim("setpoint", self.layout().w_dim(), setpoint.len())?;
        self.setpoint = setpoint;
        Ok(self)
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn layout(&self) -> &Arc<SignalLayout> {
        self.trajectories[0].layout()
    }

    pub fn dt(&self) -> f64 {
        self.trajectories[0].dt()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn setpoint(&self) -> &[f64] {
        &self.setpoint
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// On-disk `dataset.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub w_dim: usize,
    pub input_indices: Vec<usize>,
    pub output_indices: Vec<usize>,
    pub dt: f64,
    pub setpoint: Vec<f64>,
    pub files: Vec<String>,
    pub seed: u64,
    pub split: Split,
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub units: Vec<String>,
    #[serde(default)]
    pub generator: String,
    #[serde(default)]
    pub ranges: BTreeMap<String, [f64; 2]>,
}

fn format_float(v: f64) -> String {
    // 17 significant digits round-trip every f64 exactly.
    format!("{v:.16e}")
}

/// Write `dataset.json` plus one CSV per trajectory into `dir`.
pub fn write_dataset(ds: &TrajectoryDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let layout = ds.layout();
    let digits = ds.len().saturating_sub(1).to_string().len().max(5);
    let mut files = Vec::with_capacity(ds.len());
    for (i, traj) in ds.trajectories().iter().enumerate() {
        let name = format!("traj_{i:0digits$}.csv");
        let mut wr = csv::Writer::from_path(dir.join(&name))?;
        let mut header = vec!["t".to_string()];
        header.extend(layout.names().iter().cloned());
        wr.write_record(&header)?;
        for (k, s) in traj.samples().enumerate() {
            let mut row = Vec::with_capacity(s.len() + 1);
            row.push(format_float(k as f64 * traj.dt()));
            row.extend(s.iter().map(|&v| format_float(v)));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        files.push(name);
    }
    let manifest = DatasetManifest {
        w_dim: layout.w_dim(),
        input_indices: layout.input_indices().to_vec(),
        output_indices: layout.output_indices().to_vec(),
        dt: ds.dt(),
        setpoint: ds.setpoint().to_vec(),
        files,
        seed: ds.provenance().seed,
        split: ds.split(),
        names: layout.names().to_vec(),
        units: layout.units().to_vec(),
        generator: ds.provenance().generator.clone(),
        ranges: ds.provenance().ranges.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<TrajectoryDataset> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let layout = if manifest.names.len() == manifest.w_dim {
        let units = if manifest.units.len() == manifest.w_dim {
            manifest.units.clone()
        } else {
            vec![String::new(); manifest.w_dim]
        };
        SignalLayout::new(
            manifest.w_dim,
            manifest.input_indices.clone(),
            manifest.output_indices.clone(),
            manifest.names.clone(),
            units,
        )?
    } else {
        SignalLayout::unnamed(
            manifest.w_dim,
            manifest.input_indices.clone(),
            manifest.output_indices.clone(),
        )?
    };
    let layout = Arc::new(layout);
    let mut trajectories = Vec::with_capacity(manifest.files.len());
    for file in &manifest.files {
        let mut rd = csv::Reader::from_path(dir.join(file))?;
        let width = rd.headers()?.len();
        check_dim("trajectory CSV columns", manifest.w_dim + 1, width)?;
        let mut data = Vec::new();
        for record in rd.records() {
            let record = record?;
            for field in record.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::Format(format!("{file}: bad float {field:?}: {e}")))?;
                data.push(v);
            }
        }
        trajectories.push(Trajectory::from_flat(data, layout.clone(), manifest.dt)?);
    }
    let provenance = Provenance {
        generator: manifest.generator.clone(),
        seed: manifest.seed,
        ranges: manifest.ranges.clone(),
    };
    TrajectoryDataset::new(trajectories, manifest.split, provenance)?
        .with_setpoint(manifest.setpoint)
}

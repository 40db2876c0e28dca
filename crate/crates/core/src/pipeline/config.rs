use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cpfem::CpfemConfig;
use crate::error::{Error, Result};
use crate::mode::DeformationMode;
use crate::nn::{CnnConfig, WganConfig};
use crate::phasefield::PhaseFieldParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile '{s}' (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetStage {
    pub n_initial_conditions: usize,
    pub snapshots: usize,
    /// Solver steps between snapshots.
    pub interval: usize,
    /// Inclusive range of nucleation band half widths, cells.
    pub band_half_width: [usize; 2],
    pub seed_noise_amplitude: f64,
    pub params: PhaseFieldParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemStage {
    /// Size of the seeded subsample of the dataset that gets FEM labels.
    pub images: usize,
    pub modes: Vec<DeformationMode>,
    pub solver: CpfemConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchStage {
    pub iterations: usize,
    pub reference_points: usize,
    pub compare_points: Vec<usize>,
    pub compare_repeats: usize,
    pub heatmap_resolution: usize,
    /// Half width of the martensite-fraction window for the trade-off table.
    pub fraction_window: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetStage,
    pub fem: FemStage,
    pub gan: WganConfig,
    pub cnn: CnnConfig,
    pub search: SearchStage,
}

impl PipelineConfig {
    pub fn profile(profile: Profile) -> Self {
        let full = Self {
            seed: 2024,
            out: PathBuf::from("runs/paper"),
            dataset: DatasetStage {
                n_initial_conditions: 170,
                snapshots: 10,
                interval: 500,
                band_half_width: [2, 6],
                seed_noise_amplitude: 0.09,
                params: PhaseFieldParams::default(),
            },
            fem: FemStage {
                images: 116,
                modes: DeformationMode::ALL.to_vec(),
                solver: CpfemConfig::default(),
            },
            gan: WganConfig {
                checkpoint_every: 10_000,
                ..WganConfig::default()
            },
            cnn: CnnConfig::default(),
            search: SearchStage {
                iterations: 5000,
                reference_points: 5000,
                compare_points: (1..=10).map(|i| i * 100).collect(),
                compare_repeats: 10,
                heatmap_resolution: 101,
                fraction_window: 0.02,
            },
        };
        match profile {
            Profile::Paper => full,
            Profile::Desk => Self {
                out: PathBuf::from("runs/desk"),
                dataset: DatasetStage {
                    n_initial_conditions: 24,
                    snapshots: 5,
                    interval: 1000,
                    ..full.dataset
                },
                gan: WganConfig {
                    iterations: 5000,
                    checkpoint_every: 1000,
                    generator_widths: [32, 16],
                    critic_widths: [16, 32],
                    ..full.gan
                },
                search: SearchStage {
                    iterations: 2000,
                    heatmap_resolution: 51,
                    ..full.search
                },
                ..full
            },
        }
    }

    /// Profile defaults, overlaid with the JSON object in `file` (if any),
    /// then with the command-line seed and output directory.
    pub fn load(profile: Profile, file: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let mut value = serde_json::to_value(Self::profile(profile))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
                _ => Error::Io(e),
            })?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if !overlay.is_object() {
                return Err(Error::Config(format!("{}: top level must be an object", path.display())));
            }
            merge(&mut value, overlay);
        }
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = out {
            cfg.out = o.to_path_buf();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.n_initial_conditions == 0 || d.snapshots == 0 || d.interval == 0 {
            return Err(Error::Config("dataset counts and interval must be positive".into()));
        }
        if d.band_half_width[0] > d.band_half_width[1] {
            return Err(Error::Config("band_half_width must be [min, max]".into()));
        }
        d.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.fem.images == 0 || self.fem.modes.is_empty() {
            return Err(Error::Config("fem stage needs images and modes".into()));
        }
        if self.fem.images > d.n_initial_conditions * d.snapshots {
            return Err(Error::Config(format!(
                "fem.images = {} exceeds the {} dataset images",
                self.fem.images,
                d.n_initial_conditions * d.snapshots
            )));
        }
        let needed: usize = self.cnn.split.iter().sum();
        if needed > self.fem.images {
            return Err(Error::Config(format!(
                "cnn split {:?} needs {needed} labelled images, fem.images = {}",
                self.cnn.split, self.fem.images
            )));
        }
        self.fem.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.gan.validate()?;
        self.cnn.validate()?;
        let s = &self.search;
        if s.iterations == 0 || s.reference_points == 0 || s.compare_repeats == 0 || s.compare_points.is_empty() {
            return Err(Error::Config("search counts must be positive".into()));
        }
        if s.heatmap_resolution < 2 || !(s.fraction_window >= 0.0) {
            return Err(Error::Config("heatmap_resolution >= 2 and fraction_window >= 0 required".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

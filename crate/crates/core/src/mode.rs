use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loading case applied to a specimen. The integer codes are stable and are
/// what every CSV and checkpoint stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum DeformationMode {
    TensileX = 0,
    TensileY = 1,
    ShearX = 2,
    ShearY = 3,
}

impl DeformationMode {
    pub const ALL: [DeformationMode; 4] = [
        DeformationMode::TensileX,
        DeformationMode::TensileY,
        DeformationMode::ShearX,
        DeformationMode::ShearY,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("invalid deformation mode code {code}")))
    }

    pub fn is_shear(self) -> bool {
        matches!(self, DeformationMode::ShearX | DeformationMode::ShearY)
    }

    pub fn name(self) -> &'static str {
        match self {
            DeformationMode::TensileX => "tensile_x",
            DeformationMode::TensileY => "tensile_y",
            DeformationMode::ShearX => "shear_x",
            DeformationMode::ShearY => "shear_y",
        }
    }

    /// The mode obtained by exchanging the x and y axes.
    pub fn axis_swapped(self) -> Self {
        match self {
            DeformationMode::TensileX => DeformationMode::TensileY,
            DeformationMode::TensileY => DeformationMode::TensileX,
            DeformationMode::ShearX => DeformationMode::ShearY,
            DeformationMode::ShearY => DeformationMode::ShearX,
        }
    }
}

impl fmt::Display for DeformationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeformationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "tensile_x" | "tensilex" | "0" => Ok(DeformationMode::TensileX),
            "tensile_y" | "tensiley" | "1" => Ok(DeformationMode::TensileY),
            "shear_x" | "shearx" | "2" => Ok(DeformationMode::ShearX),
            "shear_y" | "sheary" | "3" => Ok(DeformationMode::ShearY),
            _ => Err(Error::Config(format!("unknown deformation mode '{s}'"))),
        }
    }
}

/// Strength and ductility of one microstructure under one mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanicalProps {
    /// Maximum nominal stress, MPa.
    pub sigma_max: f64,
    /// True strain at necking onset.
    pub eps_lim: f64,
    pub mode: DeformationMode,
}

impl MechanicalProps {
    pub fn new(sigma_max: f64, eps_lim: f64, mode: DeformationMode) -> Result<Self> {
        if !(sigma_max.is_finite() && eps_lim.is_finite()) || sigma_max <= 0.0 || eps_lim <= 0.0 {
            return Err(Error::State(format!(
                "mechanical properties must be finite and positive, got sigma_max={sigma_max}, eps_lim={eps_lim}"
            )));
        }
        Ok(Self {
            sigma_max,
            eps_lim,
            mode,
        })
    }
}

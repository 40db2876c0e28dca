//! Crystal-plasticity finite elements with dislocation-density hardening.

mod band;
mod considere;
mod fem;
mod io;
mod material;
mod slip;

pub use band::BandMatrix;
pub use considere::{considere, ConsidereResult, StressStrainCurve};
pub use fem::{simulate, CpfemConfig, SimOutput, Simulation};
pub use io::{curve_file_name, read_props_csv, write_curve_csv, write_props_csv, PropsRow};
pub use material::{gn_density_rates, stress_rate, PhaseMaterial, SlipMatrix, L_MAX, NUM_SLIP, RHO_FLOOR};
pub use slip::{planar_systems, resolved_shear_stress, slip_rate, SlipSystem, Voigt};

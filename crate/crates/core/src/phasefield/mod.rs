//! Two-variant Allen–Cahn martensite model on a periodic square grid.

mod elastic;
mod energy;
mod ic;
mod params;
mod solver;

pub use elastic::{elastic_solve, ElasticSolution, ElasticSolver, TensorField};
pub use energy::{chem_driving_force, chem_energy_density, grad_driving_force, grad_energy_density, laplacian};
pub use ic::{run_snapshots, run_trajectory, write_trajectory_csv, InitialCondition, TrajectoryRow};
pub use params::PhaseFieldParams;
pub use solver::{total_free_energy, PhaseFieldSolver};

use crate::error::Result;
use crate::micro::{label_pixels, Field2, MicrostructureImage};

/// Order parameters of the two martensite variants plus the simulation clock.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseFieldState {
    pub phi1: Field2,
    pub phi2: Field2,
    /// Seconds.
    pub time: f64,
    pub step: usize,
}

impl PhaseFieldState {
    pub fn zeros(n: usize) -> Self {
        Self {
            phi1: Field2::zeros(n, n),
            phi2: Field2::zeros(n, n),
            time: 0.0,
            step: 0,
        }
    }

    pub fn label(&self) -> Result<MicrostructureImage> {
        label_pixels(&self.phi1, &self.phi2)
    }

    /// Exchange the variants and the x/y axes.
    pub fn variant_swapped(&self) -> Self {
        Self {
            phi1: self.phi2.transposed(),
            phi2: self.phi1.transposed(),
            time: self.time,
            step: self.step,
        }
    }

    /// Periodic translation by `(drow, dcol)` cells.
    pub fn rolled(&self, drow: usize, dcol: usize) -> Self {
        Self {
            phi1: self.phi1.rolled(drow, dcol),
            phi2: self.phi2.rolled(drow, dcol),
            time: self.time,
            step: self.step,
        }
    }
}

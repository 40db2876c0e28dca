use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::PhaseFieldParams;
use super::solver::PhaseFieldSolver;
use super::PhaseFieldState;
use crate::error::{Error, Result};
use crate::micro::MicrostructureImage;
use crate::rng::Rng;

/// Seeded nucleation band along a former grain boundary.
///
/// The band runs parallel to the x axis. Its row position is drawn from the
/// seed; cells inside it receive independent uniform noise in
/// `[0, seed_noise_amplitude)` on both order parameters, cells outside start
/// as ferrite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    /// Cells on each side of the band's centre row.
    pub boundary_half_width: usize,
    pub seed_noise_amplitude: f64,
    pub seed: u64,
}

impl InitialCondition {
    pub fn validate(&self, grid: usize) -> Result<()> {
        if !(self.seed_noise_amplitude >= 0.0 && self.seed_noise_amplitude < 0.1) {
            return Err(Error::Parameter(format!(
                "seed noise amplitude must lie in [0, 0.1), got {}",
                self.seed_noise_amplitude
            )));
        }
        if 2 * self.boundary_half_width + 1 > grid {
            return Err(Error::Parameter(format!(
                "band of half width {} does not fit a {grid}-cell grid",
                self.boundary_half_width
            )));
        }
        Ok(())
    }

    pub fn build(&self, grid: usize) -> Result<PhaseFieldState> {
        self.validate(grid)?;
        let mut rng = Rng::new(self.seed).substream("phasefield-ic");
        let centre = rng.below(grid);
        let mut state = PhaseFieldState::zeros(grid);
        for row in 0..grid {
            let d = (row + grid - centre) % grid;
            let dist = d.min(grid - d);
            for col in 0..grid {
                // Always draw so that the stream position does not depend on
                // the band width.
                let a = rng.uniform() * self.seed_noise_amplitude;
                let b = rng.uniform() * self.seed_noise_amplitude;
                if dist <= self.boundary_half_width {
                    state.phi1.set(row, col, a);
                    state.phi2.set(row, col, b);
                }
            }
        }
        Ok(state)
    }
}

/// One line of `trajectory_{ic}.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time_s: f64,
    pub total_energy_j: f64,
    pub martensite_fraction: f64,
}

/// Evolve from `ic`, labeling the state after `(j + 1) * interval` steps for
/// `j = 0..n_snapshots`, and recording a trajectory row for every step.
pub fn run_trajectory(
    ic: &InitialCondition,
    params: &PhaseFieldParams,
    n_snapshots: usize,
    interval: usize,
) -> Result<(Vec<MicrostructureImage>, Vec<TrajectoryRow>)> {
    if n_snapshots == 0 {
        return Err(Error::Parameter("n_snapshots must be at least 1".into()));
    }
    let solver = PhaseFieldSolver::new(params.clone())?;
    let mut state = ic.build(params.grid)?;
    let total = n_snapshots * interval;
    let mut images = Vec::with_capacity(n_snapshots);
    let mut rows = Vec::with_capacity(total + 1);
    for step in 0..=total {
        let (next, energy) = if step < total {
            let (n, e) = solver.step_with_energy(&state)?;
            (Some(n), e)
        } else {
            (None, solver.total_free_energy(&state)?)
        };
        let image = state.label()?;
        rows.push(TrajectoryRow {
            step,
            time_s: state.time,
            total_energy_j: energy,
            martensite_fraction: image.martensite_fraction(),
        });
        if interval == 0 {
            images.resize(n_snapshots, image);
        } else if step > 0 && step % interval == 0 {
            images.push(image);
        }
        match next {
            Some(n) => state = n,
            None => break,
        }
    }
    Ok((images, rows))
}

/// Snapshots only; see [`run_trajectory`].
pub fn run_snapshots(
    ic: &InitialCondition,
    params: &PhaseFieldParams,
    n_snapshots: usize,
    interval: usize,
) -> Result<Vec<MicrostructureImage>> {
    Ok(run_trajectory(ic, params, n_snapshots, interval)?.0)
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,time_s,total_energy_J,martensite_fraction")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{}",
            r.step, r.time_s, r.total_energy_j, r.martensite_fraction
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ic(seed: u64) -> InitialCondition {
        InitialCondition {
            boundary_half_width: 2,
            seed_noise_amplitude: 0.05,
            seed,
        }
    }

    #[test]
    fn band_is_seeded_and_deterministic() {
        let a = ic(4).build(32).unwrap();
        let b = ic(4).build(32).unwrap();
        assert_eq!(a, b);
        let rows_with_noise = (0..32)
            .filter(|&r| (0..32).any(|c| a.phi1.get(r, c) > 0.0))
            .count();
        assert_eq!(rows_with_noise, 5);
        assert!(a.phi1.max_abs() < 0.05 && a.phi2.max_abs() < 0.05);
        assert_ne!(a, ic(5).build(32).unwrap());
    }

    #[test]
    fn amplitude_is_bounded() {
        let mut bad = ic(0);
        bad.seed_noise_amplitude = 0.1;
        assert!(matches!(bad.build(32), Err(Error::Parameter(_))));
        let mut wide = ic(0);
        wide.boundary_half_width = 16;
        assert!(wide.build(32).is_err());
    }

    #[test]
    fn zero_interval_labels_the_initial_condition() {
        let p = PhaseFieldParams::default();
        let imgs = run_snapshots(&ic(1), &p, 1, 0).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0], ic(1).build(32).unwrap().label().unwrap());
    }

    #[test]
    fn zero_snapshots_is_rejected() {
        assert!(run_snapshots(&ic(1), &PhaseFieldParams::default(), 0, 10).is_err());
    }
}

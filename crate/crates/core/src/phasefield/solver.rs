use super::elastic::ElasticSolver;
use super::energy::{chem_driving_force, chem_energy_density, grad_driving_force, grad_energy_density};
use super::params::PhaseFieldParams;
use super::PhaseFieldState;
use crate::error::{Error, Result};
use crate::micro::Field2;

/// Explicit-Euler integrator holding the precomputed elastic kernel.
pub struct PhaseFieldSolver {
    params: PhaseFieldParams,
    elastic: ElasticSolver,
    dt: f64,
}

impl PhaseFieldSolver {
    pub fn new(params: PhaseFieldParams) -> Result<Self> {
        params.validate()?;
        let elastic = ElasticSolver::new(&params)?;
        let dt = params.time_step();
        Ok(Self { params, elastic, dt })
    }

    pub fn params(&self) -> &PhaseFieldParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Total driving force `dG/dphi_i` per unit volume for both variants,
    /// checked term by term for non-finite values.
    pub fn driving_force(&self, state: &PhaseFieldState) -> Result<[Field2; 2]> {
        Ok(self.evaluate(state, false)?.0)
    }

    /// Driving forces plus, if asked, the total free energy of `state`,
    /// sharing one elastic solve.
    fn evaluate(&self, state: &PhaseFieldState, with_energy: bool) -> Result<([Field2; 2], f64)> {
        let chem = chem_driving_force(state, &self.params);
        check_finite(&chem, state.step, "chemical driving force")?;
        let grad = grad_driving_force(state, &self.params);
        check_finite(&grad, state.step, "gradient driving force")?;
        let solution = self.elastic.solve(state)?;
        let elast = solution.driving_force(&self.params);
        check_finite(&elast, state.step, "elastic driving force")?;
        let mut out = chem;
        for v in 0..2 {
            for i in 0..out[v].len() {
                out[v].data[i] += grad[v].data[i] + elast[v].data[i];
            }
        }
        let energy = if with_energy {
            self.energy_from(state, &solution.energy_density)
        } else {
            0.0
        };
        Ok((out, energy))
    }

    fn energy_from(&self, state: &PhaseFieldState, elastic_density: &Field2) -> f64 {
        let grad = grad_energy_density(state, &self.params);
        let mut sum = 0.0;
        for i in 0..state.phi1.len() {
            sum += chem_energy_density(state.phi1.data[i], state.phi2.data[i], &self.params)
                + grad.data[i]
                + elastic_density.data[i];
        }
        sum * self.params.cell_volume()
    }

    pub fn step(&self, state: &PhaseFieldState) -> Result<PhaseFieldState> {
        Ok(self.step_with_energy(state)?.0)
    }

    /// Advance one step; also returns the free energy of the incoming state.
    pub fn step_with_energy(&self, state: &PhaseFieldState) -> Result<(PhaseFieldState, f64)> {
        let n = self.params.grid;
        if state.phi1.width != n || state.phi1.height != n || !state.phi1.same_shape(&state.phi2) {
            return Err(Error::Dimension(format!(
                "state is {}x{}, params grid is {n}x{n}",
                state.phi1.width, state.phi1.height
            )));
        }
        for (name, f) in [("phi1", &state.phi1), ("phi2", &state.phi2)] {
            if f.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: state.step,
                    term: format!("{name} is not finite"),
                });
            }
        }
        let (force, energy) = self.evaluate(state, true)?;
        let rate = self.dt * self.params.mobility;
        let mut next = state.clone();
        for (phi, f) in [(&mut next.phi1, &force[0]), (&mut next.phi2, &force[1])] {
            for (p, g) in phi.data.iter_mut().zip(&f.data) {
                *p -= rate * g;
            }
        }
        next.time += self.dt;
        next.step += 1;
        Ok((next, energy))
    }

    pub fn total_free_energy(&self, state: &PhaseFieldState) -> Result<f64> {
        let elast = self.elastic.solve(state)?;
        Ok(self.energy_from(state, &elast.energy_density))
    }
}

fn check_finite(fields: &[Field2; 2], step: usize, term: &str) -> Result<()> {
    if fields.iter().any(|f| f.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::Divergence {
            step,
            term: term.to_string(),
        });
    }
    Ok(())
}

/// Free energy of the whole cell for unit thickness, J.
pub fn total_free_energy(state: &PhaseFieldState, params: &PhaseFieldParams) -> Result<f64> {
    PhaseFieldSolver::new(params.clone())?.total_free_energy(state)
}

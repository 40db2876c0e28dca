use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Material and numerical constants of the martensite phase-field model.
///
/// Energies enter per mole (`delta_f`, `grad_coeff_sq`) and are converted to
/// volumetric densities with `molar_volume`. Elastic constants are in GPa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseFieldParams {
    /// Chemical free-energy change of the transformation, J/mol.
    pub delta_f: f64,
    pub landau_a: f64,
    pub landau_b: f64,
    pub landau_c: f64,
    /// Square of the gradient coefficient, J m^2 / mol.
    pub grad_coeff_sq: f64,
    /// Order-parameter mobility, 1/(J s).
    pub mobility: f64,
    pub c11_gpa: f64,
    pub c44_gpa: f64,
    pub c12_gpa: f64,
    /// Expansion magnitude of the eigenstrain (transverse axis).
    pub eigen_a: f64,
    /// Compression magnitude of the eigenstrain (Bain axis).
    pub eigen_b: f64,
    /// m^3/mol.
    pub molar_volume: f64,
    pub grid: usize,
    /// Side length of the square periodic domain, m.
    pub domain_size: f64,
    /// Explicit time step, s. `None` picks 0.2 of the stability bound.
    pub dt: Option<f64>,
}

impl Default for PhaseFieldParams {
    fn default() -> Self {
        Self {
            delta_f: 1.0e3,
            landau_a: 0.15,
            landau_b: -2.3,
            landau_c: 2.15,
            grad_coeff_sq: 5.0e-15,
            mobility: 1.0,
            c11_gpa: 397.0,
            c44_gpa: 123.5,
            c12_gpa: 150.0,
            eigen_a: 0.01,
            eigen_b: 0.01,
            molar_volume: 7.09e-6,
            grid: 32,
            domain_size: 31.0e-6,
            dt: None,
        }
    }
}

/// Range of order-parameter values over which curvature bounds are taken.
pub(crate) const PHI_BOUND: f64 = 1.05;

impl PhaseFieldParams {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = (self.landau_a, self.landau_b, self.landau_c);
        let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
        if (a + b + c).abs() > 1e-12 * scale {
            return Err(Error::Parameter(format!(
                "Landau constants must satisfy A+B+C=0, got {}",
                a + b + c
            )));
        }
        if a / 2.0 + b / 3.0 + c / 4.0 >= 0.0 {
            return Err(Error::Parameter(
                "Landau constants must make phi=1 the stable well (A/2+B/3+C/4 < 0)".into(),
            ));
        }
        if a <= 0.0 {
            return Err(Error::Parameter("A must be positive for phi=0 to be metastable".into()));
        }
        let (c11, c12, c44) = (self.c11_gpa, self.c12_gpa, self.c44_gpa);
        if !(c11 > c12.abs() && c44 > 0.0 && c11 + 2.0 * c12 > 0.0) {
            return Err(Error::Parameter(format!(
                "cubic elastic constants not positive definite (C11={c11}, C12={c12}, C44={c44})"
            )));
        }
        for (name, v) in [
            ("delta_f", self.delta_f),
            ("grad_coeff_sq", self.grad_coeff_sq),
            ("mobility", self.mobility),
            ("molar_volume", self.molar_volume),
            ("domain_size", self.domain_size),
        ] {
            if !(v.is_finite() && v >= 0.0) || (name != "grad_coeff_sq" && v == 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid < 2 || !self.grid.is_power_of_two() {
            return Err(Error::Parameter(format!("grid must be a power of two, got {}", self.grid)));
        }
        if !(self.eigen_a.is_finite() && self.eigen_b.is_finite()) {
            return Err(Error::Parameter("eigenstrains must be finite".into()));
        }
        if let Some(dt) = self.dt {
            let bound = self.stability_bound();
            if !(dt > 0.0 && dt <= bound) {
                return Err(Error::Parameter(format!(
                    "dt={dt:e} s outside (0, {bound:e}] stability bound"
                )));
            }
        }
        Ok(())
    }

    /// Energy scale `delta_f / V_m`, J/m^3.
    pub fn energy_density_scale(&self) -> f64 {
        self.delta_f / self.molar_volume
    }

    /// Volumetric gradient coefficient `a^2 / V_m`, J/m.
    pub fn gradient_coefficient(&self) -> f64 {
        self.grad_coeff_sq / self.molar_volume
    }

    /// Grid spacing, m.
    pub fn spacing(&self) -> f64 {
        self.domain_size / self.grid as f64
    }

    /// Cell volume for unit thickness, m^3.
    pub fn cell_volume(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    /// (C11, C12, C44) in Pa.
    pub fn stiffness_pa(&self) -> (f64, f64, f64) {
        (self.c11_gpa * 1e9, self.c12_gpa * 1e9, self.c44_gpa * 1e9)
    }

    /// In-plane diagonal eigenstrain `(exx, eyy)` of variant 1 or 2.
    /// Variant 1 compresses along x, variant 2 along y.
    pub fn eigenstrain(&self, variant: usize) -> [f64; 2] {
        match variant {
            1 => [-self.eigen_b, self.eigen_a],
            2 => [self.eigen_a, -self.eigen_b],
            _ => panic!("variant must be 1 or 2"),
        }
    }

    /// Gram matrix `e(i) : C : e(j)` of the two eigenstrains, J/m^3.
    pub fn eigenstrain_gram(&self) -> [[f64; 2]; 2] {
        let (c11, c12, _) = self.stiffness_pa();
        let mut g = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let ei = self.eigenstrain(i + 1);
                let ej = self.eigenstrain(j + 1);
                let sj = [c11 * ej[0] + c12 * ej[1], c12 * ej[0] + c11 * ej[1]];
                g[i][j] = ei[0] * sj[0] + ei[1] * sj[1];
            }
        }
        g
    }

    /// Upper bound on the curvature (per unit volume) of the discrete free
    /// energy over `phi in [-0.05, 1.05]^2`, J/m^3.
    pub fn curvature_bound(&self) -> f64 {
        let m = PHI_BOUND;
        let chem = self.energy_density_scale()
            * (self.landau_a.abs() + 2.0 * self.landau_b.abs() * m + 6.0 * self.landau_c.abs() * m * m);
        let h = self.spacing();
        let grad = 8.0 * self.gradient_coefficient() / (h * h);
        let g = self.eigenstrain_gram();
        let tr = g[0][0] + g[1][1];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let elastic = 0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt());
        chem + grad + elastic
    }

    /// Largest explicit-Euler step that still guarantees descent, s.
    pub fn stability_bound(&self) -> f64 {
        2.0 / (self.mobility * self.curvature_bound())
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or_else(|| 0.2 * self.stability_bound())
    }
}

//! Per-phase constants and the dislocation-density hardening laws.
//!
//! Units: stresses and moduli in MPa, lengths in um, densities in 1/um^2.

use serde::{Deserialize, Serialize};

use super::slip::{SlipSystem, Voigt};
use crate::error::{Error, Result};

pub const NUM_SLIP: usize = 3;

pub type SlipMatrix = [[f64; NUM_SLIP]; NUM_SLIP];

/// Lower guard on the statistically stored density, 1/um^2.
pub const RHO_FLOOR: f64 = 1e-4;
/// Upper guard on the mean free path, um.
pub const L_MAX: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMaterial {
    /// Young's modulus, MPa.
    pub young: f64,
    pub poisson: f64,
    /// Initial statistically stored density per slip system, 1/um^2.
    pub rho_s_init: f64,
    /// Burgers vector length, um.
    pub burgers: f64,
    pub a_coeff: f64,
    pub c_coeff: f64,
    pub c_star: f64,
    /// Lattice friction, MPa.
    pub tau_y: f64,
    /// Reference slip rate, 1/s.
    pub gamma_dot_0: f64,
    /// Rate sensitivity exponent.
    pub m_exp: f64,
    /// Hardening interaction matrix.
    pub big_omega: SlipMatrix,
    /// Mean-free-path interaction matrix, zero diagonal.
    pub small_omega: SlipMatrix,
}

fn ones() -> SlipMatrix {
    [[1.0; NUM_SLIP]; NUM_SLIP]
}

fn ones_off_diagonal() -> SlipMatrix {
    let mut w = ones();
    for (i, row) in w.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    w
}

impl PhaseMaterial {
    pub fn ferrite() -> Self {
        Self {
            young: 205.9e3,
            poisson: 0.3,
            rho_s_init: 1.0,
            burgers: 2.5e-4,
            a_coeff: 0.1,
            c_coeff: 1.0,
            c_star: 10.0,
            tau_y: 50.0,
            gamma_dot_0: 1.0e-3,
            m_exp: 0.01,
            big_omega: ones(),
            small_omega: ones_off_diagonal(),
        }
    }

    pub fn martensite() -> Self {
        Self {
            young: 237.3e3,
            poisson: 0.333,
            rho_s_init: 1.0e3,
            tau_y: 400.0,
            m_exp: 0.007,
            ..Self::ferrite()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("young", self.young),
            ("rho_s_init", self.rho_s_init),
            ("burgers", self.burgers),
            ("a_coeff", self.a_coeff),
            ("c_coeff", self.c_coeff),
            ("c_star", self.c_star),
            ("tau_y", self.tau_y),
            ("gamma_dot_0", self.gamma_dot_0),
            ("m_exp", self.m_exp),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(Error::Parameter(format!("poisson ratio {} out of range", self.poisson)));
        }
        for i in 0..NUM_SLIP {
            if self.small_omega[i][i] != 0.0 {
                return Err(Error::Parameter("omega must have a zero diagonal".into()));
            }
            for j in 0..NUM_SLIP {
                let (a, b) = (self.big_omega[i][j], self.big_omega[j][i]);
                if a != b || a < 0.0 || !a.is_finite() {
                    return Err(Error::Parameter("Omega must be symmetric and non-negative".into()));
                }
                if self.small_omega[i][j] < 0.0 || !self.small_omega[i][j].is_finite() {
                    return Err(Error::Parameter("omega must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        self.young / (2.0 * (1.0 + self.poisson))
    }

    /// Plane-strain isotropic stiffness in the 4-component Voigt layout.
    pub fn stiffness(&self) -> [[f64; 4]; 4] {
        let mu = self.shear_modulus();
        let lambda = self.young * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson));
        let d = lambda + 2.0 * mu;
        [
            [d, lambda, lambda, 0.0],
            [lambda, d, lambda, 0.0],
            [lambda, lambda, d, 0.0],
            [0.0, 0.0, 0.0, mu],
        ]
    }

    /// `tau_y + a mu b sum_beta Omega(alpha, beta) sqrt(rho_S(beta))`, MPa.
    pub fn flow_stress(&self, rho_s: &[f64; NUM_SLIP], alpha: usize) -> f64 {
        let k = self.a_coeff * self.shear_modulus() * self.burgers;
        let sum: f64 = (0..NUM_SLIP)
            .map(|b| self.big_omega[alpha][b] * rho_s[b].max(0.0).sqrt())
            .sum();
        self.tau_y + k * sum
    }

    /// Hardening modulus `h(alpha, beta)`, MPa.
    pub fn hardening_modulus(&self, rho_s: f64, l: f64, alpha: usize, beta: usize) -> Result<f64> {
        if !(rho_s > 0.0) {
            return Err(Error::State(format!("SS density must be positive, got {rho_s}")));
        }
        if !(l > 0.0) {
            return Err(Error::State(format!("mean free path must be positive, got {l}")));
        }
        Ok(self.hardening_modulus_unchecked(rho_s, l, alpha, beta))
    }

    #[inline]
    pub(crate) fn hardening_modulus_unchecked(&self, rho_s: f64, l: f64, alpha: usize, beta: usize) -> f64 {
        let k = self.a_coeff * self.shear_modulus() * self.burgers;
        k * self.big_omega[alpha][beta] * self.c_coeff / (2.0 * self.burgers * l * rho_s.sqrt())
    }

    /// `c / (b L) |gdot|`, 1/(um^2 s).
    pub fn ss_density_rate(&self, gamma_dot: f64, l: f64) -> Result<f64> {
        if !(l > 0.0) {
            return Err(Error::State(format!("mean free path must be positive, got {l}")));
        }
        Ok(self.c_coeff / (self.burgers * l) * gamma_dot.abs())
    }

    /// Mean free path of system `beta`, um, and whether the `L_MAX` guard
    /// was applied. `rho_g` holds GN density magnitudes.
    pub fn mean_free_path(&self, rho_g: &[f64; NUM_SLIP], rho_s: &[f64; NUM_SLIP], beta: usize) -> (f64, bool) {
        let total: f64 = (0..NUM_SLIP)
            .map(|g| self.small_omega[beta][g] * (rho_g[g].abs() + rho_s[g]))
            .sum();
        if !(total > 0.0) {
            return (L_MAX, true);
        }
        let l = self.c_star / total.sqrt();
        if l > L_MAX {
            (L_MAX, true)
        } else {
            (l, false)
        }
    }
}

/// GN density rates `(screw, edge)` for one system from the in-plane slip-rate
/// gradient, 1/(um^2 s). In plane strain the binormal is out of plane; the
/// screw term uses the in-plane projection `m` in its place.
pub fn gn_density_rates(grad: [f64; 2], sys: &SlipSystem, burgers: f64) -> (f64, f64) {
    let screw = (grad[0] * sys.m[0] + grad[1] * sys.m[1]) / burgers;
    let edge = -(grad[0] * sys.s[0] + grad[1] * sys.s[1]) / burgers;
    (screw, edge)
}

/// Jaumann stress rate `C:D - sum gdot (C:p + w sigma - sigma w)`.
pub fn stress_rate(
    stiffness: &[[f64; 4]; 4],
    sigma: &Voigt,
    d: &Voigt,
    systems: &[SlipSystem; NUM_SLIP],
    gamma_dot: &[f64; NUM_SLIP],
) -> Voigt {
    let mut out = mat_vec(stiffness, d);
    for (sys, &gd) in systems.iter().zip(gamma_dot) {
        if gd == 0.0 {
            continue;
        }
        let cp = mat_vec(stiffness, &sys.schmid_voigt());
        let spin = sys.spin_term(sigma);
        for k in 0..4 {
            out[k] -= gd * (cp[k] + spin[k]);
        }
    }
    out
}

#[inline]
pub(crate) fn mat_vec(a: &[[f64; 4]; 4], x: &Voigt) -> Voigt {
    let mut y = [0.0; 4];
    for i in 0..4 {
        y[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2] + a[i][3] * x[3];
    }
    y
}

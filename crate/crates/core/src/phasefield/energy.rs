//! Local (chemical) and gradient contributions to the free energy and their
//! functional derivatives.

use super::params::PhaseFieldParams;
use super::PhaseFieldState;
use crate::micro::Field2;

/// Chemical free-energy density at one point, J/m^3. The third variant is
/// absent in 2-D.
pub fn chem_energy_density(phi1: f64, phi2: f64, params: &PhaseFieldParams) -> f64 {
    let (a, b, c) = (params.landau_a, params.landau_b, params.landau_c);
    let sq = phi1 * phi1 + phi2 * phi2;
    let cube = phi1 * phi1 * phi1 + phi2 * phi2 * phi2;
    params.energy_density_scale() * (a / 2.0 * sq + b / 3.0 * cube + c / 4.0 * sq * sq)
}

#[inline]
fn chem_derivative(phi: f64, sq: f64, params: &PhaseFieldParams) -> f64 {
    params.energy_density_scale()
        * (params.landau_a * phi + params.landau_b * phi * phi + params.landau_c * phi * sq)
}

/// Pointwise derivative of the chemical energy density with respect to each
/// order parameter, J/m^3.
pub fn chem_driving_force(state: &PhaseFieldState, params: &PhaseFieldParams) -> [Field2; 2] {
    let (w, h) = (state.phi1.width, state.phi1.height);
    let mut f1 = Field2::zeros(w, h);
    let mut f2 = Field2::zeros(w, h);
    for i in 0..state.phi1.len() {
        let p1 = state.phi1.data[i];
        let p2 = state.phi2.data[i];
        let sq = p1 * p1 + p2 * p2;
        f1.data[i] = chem_derivative(p1, sq, params);
        f2.data[i] = chem_derivative(p2, sq, params);
    }
    [f1, f2]
}

/// Five-point periodic Laplacian with spacing `h`.
pub fn laplacian(field: &Field2, h: f64) -> Field2 {
    let (w, ht) = (field.width, field.height);
    let inv = 1.0 / (h * h);
    Field2::from_fn(w, ht, |r, c| {
        let up = field.get((r + 1) % ht, c);
        let down = field.get((r + ht - 1) % ht, c);
        let right = field.get(r, (c + 1) % w);
        let left = field.get(r, (c + w - 1) % w);
        (up + down + left + right - 4.0 * field.get(r, c)) * inv
    })
}

/// `-(a^2/V_m) lap(phi_i)` for both order parameters, J/m^3.
pub fn grad_driving_force(state: &PhaseFieldState, params: &PhaseFieldParams) -> [Field2; 2] {
    let h = params.spacing();
    let k = params.gradient_coefficient();
    let mut out = [laplacian(&state.phi1, h), laplacian(&state.phi2, h)];
    for f in &mut out {
        for v in &mut f.data {
            *v *= -k;
        }
    }
    out
}

/// Gradient energy density `(a^2 / 2V_m) |grad phi|^2` per cell, using forward
/// differences so that its exact variation is the five-point Laplacian.
pub fn grad_energy_density(state: &PhaseFieldState, params: &PhaseFieldParams) -> Field2 {
    let h = params.spacing();
    let k = params.gradient_coefficient();
    let (w, ht) = (state.phi1.width, state.phi1.height);
    Field2::from_fn(w, ht, |r, c| {
        let mut s = 0.0;
        for phi in [&state.phi1, &state.phi2] {
            let here = phi.get(r, c);
            let dx = phi.get(r, (c + 1) % w) - here;
            let dy = phi.get((r + 1) % ht, c) - here;
            s += dx * dx + dy * dy;
        }
        0.5 * k * s / (h * h)
    })
}

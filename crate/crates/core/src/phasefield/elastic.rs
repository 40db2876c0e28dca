//! Fourier-space microelasticity for a periodic, homogeneous, cubic medium
//! carrying the variant eigenstrain field `e0(x) = phi1 e0(1) + phi2 e0(2)`.
//!
//! The total strain is the compatible field solving mechanical equilibrium
//! with zero average strain; all quantities are plane strain.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::params::PhaseFieldParams;
use super::PhaseFieldState;
use crate::error::{Error, Result};
use crate::micro::Field2;

/// In-plane symmetric tensor field `(xx, yy, xy)`.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub xx: Field2,
    pub yy: Field2,
    pub xy: Field2,
}

#[derive(Clone, Debug)]
pub struct ElasticSolution {
    /// Elastic strain `e - e0`.
    pub elastic_strain: TensorField,
    /// Cauchy stress, Pa.
    pub stress: TensorField,
    /// `0.5 sigma : e_el`, J/m^3.
    pub energy_density: Field2,
}

impl ElasticSolution {
    /// `-sigma : e0(i)` for both variants, J/m^3.
    pub fn driving_force(&self, params: &PhaseFieldParams) -> [Field2; 2] {
        let e1 = params.eigenstrain(1);
        let e2 = params.eigenstrain(2);
        let s = &self.stress;
        let force = |e: [f64; 2]| {
            let mut f = Field2::zeros(s.xx.width, s.xx.height);
            for i in 0..f.len() {
                f.data[i] = -(s.xx.data[i] * e[0] + s.yy.data[i] * e[1]);
            }
            f
        };
        [force(e1), force(e2)]
    }
}

/// Reusable spectral solver: FFT plans plus the per-wavevector linear map from
/// the two order-parameter spectra to the total-strain spectrum.
pub struct ElasticSolver {
    n: usize,
    c11: f64,
    c12: f64,
    c44: f64,
    e1: [f64; 2],
    e2: [f64; 2],
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// For each wavevector, `[[xx from phi1, xx from phi2], [yy..], [xy..]]`.
    kernel: Vec<[[f64; 2]; 3]>,
    /// Wavevectors, 1/m.
    wavevectors: Vec<[f64; 2]>,
}

impl ElasticSolver {
    pub fn new(params: &PhaseFieldParams) -> Result<Self> {
        params.validate()?;
        let n = params.grid;
        let (c11, c12, c44) = params.stiffness_pa();
        let e1 = params.eigenstrain(1);
        let e2 = params.eigenstrain(2);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = params.domain_size;
        // The Nyquist wavenumber is zeroed: first derivatives of that mode
        // are not representable on a real grid.
        let freq = |m: usize| {
            let m = match m.cmp(&(n / 2)) {
                std::cmp::Ordering::Less => m as f64,
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Greater => m as f64 - n as f64,
            };
            2.0 * std::f64::consts::PI * m / len
        };
        let sigma0 = |e: [f64; 2]| [c11 * e[0] + c12 * e[1], c12 * e[0] + c11 * e[1]];
        let s1 = sigma0(e1);
        let s2 = sigma0(e2);
        let mut kernel = Vec::with_capacity(n * n);
        let mut wavevectors = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let (kx, ky) = (freq(col), freq(row));
                wavevectors.push([kx, ky]);
                if kx == 0.0 && ky == 0.0 {
                    kernel.push([[0.0; 2]; 3]);
                    continue;
                }
                // Acoustic tensor K_ik = C_ijkl k_j k_l.
                let kxx = c11 * kx * kx + c44 * ky * ky;
                let kyy = c44 * kx * kx + c11 * ky * ky;
                let kxy = (c12 + c44) * kx * ky;
                let det = kxx * kyy - kxy * kxy;
                let solve = |t: [f64; 2]| {
                    [
                        (kyy * t[0] - kxy * t[1]) / det,
                        (-kxy * t[0] + kxx * t[1]) / det,
                    ]
                };
                let strain = |s: [f64; 2]| {
                    let a = solve([s[0] * kx, s[1] * ky]);
                    [kx * a[0], ky * a[1], 0.5 * (kx * a[1] + ky * a[0])]
                };
                let m1 = strain(s1);
                let m2 = strain(s2);
                kernel.push([[m1[0], m2[0]], [m1[1], m2[1]], [m1[2], m2[2]]]);
            }
        }
        Ok(Self {
            n,
            c11,
            c12,
            c44,
            e1,
            e2,
            fwd,
            inv,
            kernel,
            wavevectors,
        })
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
        if inverse {
            let s = 1.0 / (n * n) as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    fn spectrum(&self, f: &Field2) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        buf
    }

    /// Total (compatible) strain spectrum `(xx, yy, xy)`.
    fn total_strain_spectrum(&self, state: &PhaseFieldState) -> [Vec<Complex64>; 3] {
        let p1 = self.spectrum(&state.phi1);
        let p2 = self.spectrum(&state.phi2);
        let mut out = [
            vec![Complex64::default(); p1.len()],
            vec![Complex64::default(); p1.len()],
            vec![Complex64::default(); p1.len()],
        ];
        for (i, k) in self.kernel.iter().enumerate() {
            for (c, row) in k.iter().enumerate() {
                out[c][i] = p1[i] * row[0] + p2[i] * row[1];
            }
        }
        out
    }

    pub fn solve(&self, state: &PhaseFieldState) -> Result<ElasticSolution> {
        let n = self.n;
        if state.phi1.width != n || state.phi1.height != n || !state.phi1.same_shape(&state.phi2) {
            return Err(Error::Dimension(format!(
                "state is {}x{}, solver grid is {n}x{n}",
                state.phi1.width, state.phi1.height
            )));
        }
        let [mut sxx, mut syy, mut sxy] = self.total_strain_spectrum(state);
        self.fft2(&mut sxx, true);
        self.fft2(&mut syy, true);
        self.fft2(&mut sxy, true);
        let mut el = TensorField {
            xx: Field2::zeros(n, n),
            yy: Field2::zeros(n, n),
            xy: Field2::zeros(n, n),
        };
        let mut st = el.clone();
        let mut energy = Field2::zeros(n, n);
        for i in 0..n * n {
            let (p1, p2) = (state.phi1.data[i], state.phi2.data[i]);
            let exx = sxx[i].re - (p1 * self.e1[0] + p2 * self.e2[0]);
            let eyy = syy[i].re - (p1 * self.e1[1] + p2 * self.e2[1]);
            let exy = sxy[i].re;
            let (txx, tyy, txy) = (
                self.c11 * exx + self.c12 * eyy,
                self.c12 * exx + self.c11 * eyy,
                2.0 * self.c44 * exy,
            );
            el.xx.data[i] = exx;
            el.yy.data[i] = eyy;
            el.xy.data[i] = exy;
            st.xx.data[i] = txx;
            st.yy.data[i] = tyy;
            st.xy.data[i] = txy;
            energy.data[i] = 0.5 * (txx * exx + tyy * eyy + 2.0 * txy * exy);
        }
        Ok(ElasticSolution {
            elastic_strain: el,
            stress: st,
            energy_density: energy,
        })
    }

    /// Largest relative equilibrium residual over all nonzero wavevectors:
    /// `|k . sigma_hat(k)| / (|k| |sigma_hat(k)|)`.
    pub fn divergence_residual(&self, solution: &ElasticSolution) -> f64 {
        let sxx = self.spectrum(&solution.stress.xx);
        let syy = self.spectrum(&solution.stress.yy);
        let sxy = self.spectrum(&solution.stress.xy);
        let norm_all = sxx
            .iter()
            .chain(&syy)
            .chain(&sxy)
            .map(|v| v.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for (i, k) in self.wavevectors.iter().enumerate() {
            let kn = (k[0] * k[0] + k[1] * k[1]).sqrt();
            if kn == 0.0 {
                continue;
            }
            let dx = sxx[i] * k[0] + sxy[i] * k[1];
            let dy = sxy[i] * k[0] + syy[i] * k[1];
            let res = (dx.norm_sqr() + dy.norm_sqr()).sqrt() / (kn * norm_all);
            worst = worst.max(res);
        }
        worst
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Convenience wrapper building a one-off solver.
pub fn elastic_solve(state: &PhaseFieldState, params: &PhaseFieldParams) -> Result<ElasticSolution> {
    ElasticSolver::new(params)?.solve(state)
}

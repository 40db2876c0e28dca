//! Plane-strain crystal-plasticity finite elements on the pixel mesh.
//!
//! One bilinear quadrilateral per pixel with B-bar 2x2 integration. Each load
//! step solves the rate-tangent linearization of the visco-plastic update
//! (theta-method in the slip increments) and carries the equilibrium residual
//! into the next step.

use serde::{Deserialize, Serialize};

use super::band::BandMatrix;
use super::considere::{considere, StressStrainCurve};
use super::material::{gn_density_rates, mat_vec, PhaseMaterial, NUM_SLIP, RHO_FLOOR};
use super::slip::{planar_systems, resolved_shear_stress, slip_rate_slope, slip_rate_unchecked, SlipSystem, Voigt};
use crate::error::{Error, Result};
use crate::micro::{MicrostructureImage, Phase};
use crate::mode::{DeformationMode, MechanicalProps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpfemConfig {
    pub ferrite: PhaseMaterial,
    pub martensite: PhaseMaterial,
    /// Side of the square specimen, um.
    pub domain_size: f64,
    /// Equivalent strain rate, 1/s.
    pub strain_rate: f64,
    /// In-plane lattice rotation shared by all elements, degrees.
    pub lattice_angle_deg: f64,
    /// Slip directions relative to the lattice, degrees.
    pub slip_offsets_deg: [f64; 3],
    /// Extra lattice rotation of variant1 and variant2, degrees.
    pub variant_offsets_deg: [f64; 2],
    /// Equivalent-strain cap of a run.
    pub strain_cap: f64,
    /// Strain beyond the nominal-stress peak simulated before stopping.
    pub neck_margin: f64,
    pub initial_strain_increment: f64,
    pub max_strain_increment: f64,
    /// Target largest slip increment per step.
    pub max_slip_increment: f64,
    /// Target rise of `tau/g` beyond the flow surface per step, averaged over
    /// the integration points, in units of the rate sensitivity.
    pub max_ratio_change: f64,
    /// Implicitness of the slip increment (0 explicit, 1 backward).
    pub theta: f64,
    pub max_steps: usize,
}

impl Default for CpfemConfig {
    fn default() -> Self {
        Self {
            ferrite: PhaseMaterial::ferrite(),
            martensite: PhaseMaterial::martensite(),
            domain_size: 31.0,
            strain_rate: 1.0e-4,
            lattice_angle_deg: 10.0,
            slip_offsets_deg: [0.0, 60.0, -60.0],
            variant_offsets_deg: [0.0, 90.0],
            strain_cap: 1.0,
            neck_margin: 0.05,
            initial_strain_increment: 2.0e-5,
            max_strain_increment: 4.0e-3,
            max_slip_increment: 1.0e-2,
            max_ratio_change: 0.5,
            theta: 1.0,
            max_steps: 4000,
        }
    }
}

impl CpfemConfig {
    pub fn validate(&self) -> Result<()> {
        self.ferrite.validate()?;
        self.martensite.validate()?;
        for (name, v) in [
            ("domain_size", self.domain_size),
            ("strain_rate", self.strain_rate),
            ("strain_cap", self.strain_cap),
            ("neck_margin", self.neck_margin),
            ("initial_strain_increment", self.initial_strain_increment),
            ("max_strain_increment", self.max_strain_increment),
            ("max_slip_increment", self.max_slip_increment),
            ("max_ratio_change", self.max_ratio_change),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Parameter(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.max_steps == 0 {
            return Err(Error::Parameter("max_steps must be positive".into()));
        }
        Ok(())
    }

    fn material(&self, phase: Phase) -> &PhaseMaterial {
        match phase {
            Phase::Ferrite => &self.ferrite,
            _ => &self.martensite,
        }
    }

    fn systems(&self, phase: Phase) -> [SlipSystem; NUM_SLIP] {
        let extra = match phase {
            Phase::Ferrite => 0.0,
            Phase::Variant1 => self.variant_offsets_deg[0],
            Phase::Variant2 => self.variant_offsets_deg[1],
        };
        planar_systems(self.lattice_angle_deg + extra, &self.slip_offsets_deg)
    }
}

/// Result of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub mode: DeformationMode,
    pub curve: StressStrainCurve,
    /// Smoothed `d(true stress)/d(true strain)` per sample, MPa.
    pub hardening_rate: Vec<f64>,
    /// `eps_lim` falls back to the final strain when no neck was found.
    pub props: MechanicalProps,
    pub necking_detected: bool,
    pub steps: usize,
}

const NGP: usize = 4;
const G: f64 = 0.577_350_269_189_625_8;
const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

type BMatrix = [[f64; 8]; 4];

const FLOW_RATIO: f64 = 0.98;
/// Target for the largest single-point overshoot, in units of the rate
/// sensitivity.
const LOCAL_OVERSHOOT: f64 = 5.0;
const REJECT_FACTOR: f64 = 2.0;
const MIN_INCREMENT: f64 = 1e-7;

struct Snapshot {
    sigma: Vec<Voigt>,
    g: Vec<[f64; NUM_SLIP]>,
    rho_s: Vec<[f64; NUM_SLIP]>,
    gamma: Vec<[f64; NUM_SLIP]>,
    gamma_dot: Vec<[f64; NUM_SLIP]>,
    rho_g_screw: Vec<[f64; NUM_SLIP]>,
    rho_g_edge: Vec<[f64; NUM_SLIP]>,
    u: Vec<f64>,
    applied: f64,
    time: f64,
    step: usize,
    clamped_l: bool,
}

/// Per-integration-point linearization produced before the global solve.
#[derive(Clone, Copy, Default)]
struct PointTangent {
    c_tan: [[f64; 4]; 4],
    /// `dgamma = q + qmat . deps`.
    q: [f64; NUM_SLIP],
    qmat: [[f64; 4]; NUM_SLIP],
    /// Stress relaxation `sum R q`.
    relax: Voigt,
    /// `R` vectors, needed to recover the stress increment.
    r: [[f64; 4]; NUM_SLIP],
}

/// A running simulation with inspectable state.
pub struct Simulation {
    cfg: CpfemConfig,
    mode: DeformationMode,
    n: usize,
    h: f64,
    phases: Vec<Phase>,
    systems: [[SlipSystem; NUM_SLIP]; 3],
    stiffness: [[[f64; 4]; 4]; 2],
    bbar: [BMatrix; NGP],
    weight: f64,
    // Integration-point state, index `e * NGP + gp`.
    sigma: Vec<Voigt>,
    g: Vec<[f64; NUM_SLIP]>,
    rho_s: Vec<[f64; NUM_SLIP]>,
    gamma: Vec<[f64; NUM_SLIP]>,
    gamma_dot: Vec<[f64; NUM_SLIP]>,
    // Element state.
    rho_g_screw: Vec<[f64; NUM_SLIP]>,
    rho_g_edge: Vec<[f64; NUM_SLIP]>,
    u: Vec<f64>,
    /// Prescribed dofs and, per dof, its share of the applied displacement
    /// (1 on the moving face, 0 on fixed dofs).
    prescribed: Vec<(usize, f64)>,
    /// Dofs whose reaction is the applied load.
    loaded: Vec<usize>,
    step: usize,
    time: f64,
    /// Applied face displacement, um.
    applied: f64,
    next_increment: f64,
    clamped_l: bool,
    matrix: BandMatrix,
}

impl Simulation {
    pub fn new(image: &MicrostructureImage, mode: DeformationMode, cfg: &CpfemConfig) -> Result<Self> {
        cfg.validate()?;
        if image.width() != image.height() {
            return Err(Error::Dimension(format!(
                "FEM needs a square image, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let n = image.width();
        let h = cfg.domain_size / n as f64;
        let phases = image.labels().to_vec();
        let systems = [
            cfg.systems(Phase::Ferrite),
            cfg.systems(Phase::Variant1),
            cfg.systems(Phase::Variant2),
        ];
        let stiffness = [cfg.ferrite.stiffness(), cfg.martensite.stiffness()];
        let bbar = bbar_matrices(h);
        let nel = n * n;
        let npt = nel * NGP;
        let mut g = Vec::with_capacity(npt);
        let mut rho_s = Vec::with_capacity(npt);
        for &ph in &phases {
            let mat = cfg.material(ph);
            let rho = [mat.rho_s_init.max(RHO_FLOOR); NUM_SLIP];
            let gg: [f64; NUM_SLIP] = std::array::from_fn(|a| mat.flow_stress(&rho, a));
            for _ in 0..NGP {
                g.push(gg);
                rho_s.push(rho);
            }
        }
        let nn = n + 1;
        let node = |i: usize, j: usize| j * nn + i;
        let mut prescribed = Vec::new();
        let mut loaded = Vec::new();
        match mode {
            DeformationMode::TensileX => {
                for j in 0..nn {
                    prescribed.push((2 * node(0, j), 0.0));
                    prescribed.push((2 * node(n, j), 1.0));
                    loaded.push(2 * node(n, j));
                }
                prescribed.push((2 * node(0, 0) + 1, 0.0));
            }
            DeformationMode::TensileY => {
                for i in 0..nn {
                    prescribed.push((2 * node(i, 0) + 1, 0.0));
                    prescribed.push((2 * node(i, n) + 1, 1.0));
                    loaded.push(2 * node(i, n) + 1);
                }
                prescribed.push((2 * node(0, 0), 0.0));
            }
            DeformationMode::ShearX => {
                for i in 0..nn {
                    prescribed.push((2 * node(i, 0), 0.0));
                    prescribed.push((2 * node(i, 0) + 1, 0.0));
                    prescribed.push((2 * node(i, n), 1.0));
                    prescribed.push((2 * node(i, n) + 1, 0.0));
                    loaded.push(2 * node(i, n));
                }
            }
            DeformationMode::ShearY => {
                for j in 0..nn {
                    prescribed.push((2 * node(0, j), 0.0));
                    prescribed.push((2 * node(0, j) + 1, 0.0));
                    prescribed.push((2 * node(n, j), 0.0));
                    prescribed.push((2 * node(n, j) + 1, 1.0));
                    loaded.push(2 * node(n, j) + 1);
                }
            }
        }
        let ndof = 2 * nn * nn;
        let bw = 2 * (nn + 1) + 1;
        Ok(Self {
            cfg: cfg.clone(),
            mode,
            n,
            h,
            phases,
            systems,
            stiffness,
            bbar,
            weight: 0.25 * h * h,
            sigma: vec![[0.0; 4]; npt],
            g,
            rho_s,
            gamma: vec![[0.0; NUM_SLIP]; npt],
            gamma_dot: vec![[0.0; NUM_SLIP]; npt],
            rho_g_screw: vec![[0.0; NUM_SLIP]; nel],
            rho_g_edge: vec![[0.0; NUM_SLIP]; nel],
            u: vec![0.0; ndof],
            prescribed,
            loaded,
            step: 0,
            time: 0.0,
            applied: 0.0,
            next_increment: cfg.initial_strain_increment,
            clamped_l: false,
            matrix: BandMatrix::zeros(ndof, bw),
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Whether the `L_MAX` guard has been hit.
    pub fn mean_free_path_clamped(&self) -> bool {
        self.clamped_l
    }

    fn length(&self) -> f64 {
        self.cfg.domain_size
    }

    /// Current homogenized (equivalent true strain, equivalent true stress).
    pub fn response(&self) -> (f64, f64) {
        let len = self.length();
        let force = self.reaction();
        let strain = self.applied / len;
        let stress = force / len;
        if self.mode.is_shear() {
            (strain / 3f64.sqrt(), stress * 3f64.sqrt())
        } else {
            (strain, stress)
        }
    }

    fn reaction(&self) -> f64 {
        let f = self.internal_force();
        self.loaded.iter().map(|&d| f[d]).sum()
    }

    fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.n;
        let (i, j) = (e % n, e / n);
        let nn = n + 1;
        let nodes = [j * nn + i, j * nn + i + 1, (j + 1) * nn + i + 1, (j + 1) * nn + i];
        let mut d = [0; 8];
        for (k, nd) in nodes.iter().enumerate() {
            d[2 * k] = 2 * nd;
            d[2 * k + 1] = 2 * nd + 1;
        }
        d
    }

    fn internal_force(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.u.len()];
        for e in 0..self.n * self.n {
            let dofs = self.element_dofs(e);
            for gp in 0..NGP {
                let s = &self.sigma[e * NGP + gp];
                let b = &self.bbar[gp];
                for (k, &d) in dofs.iter().enumerate() {
                    f[d] += self.weight * (b[0][k] * s[0] + b[1][k] * s[1] + b[2][k] * s[2] + b[3][k] * s[3]);
                }
            }
        }
        f
    }

    fn kind(&self, e: usize) -> usize {
        self.phases[e].code() as usize
    }

    fn mat(&self, e: usize) -> &PhaseMaterial {
        self.cfg.material(self.phases[e])
    }

    fn rho_g_magnitude(&self, e: usize) -> [f64; NUM_SLIP] {
        std::array::from_fn(|a| self.rho_g_screw[e][a].hypot(self.rho_g_edge[e][a]))
    }

    fn mean_free_paths(&self, e: usize, p: usize) -> ([f64; NUM_SLIP], bool) {
        let mat = self.mat(e);
        let rg = self.rho_g_magnitude(e);
        let mut clamped = false;
        let l = std::array::from_fn(|b| {
            let (l, c) = mat.mean_free_path(&rg, &self.rho_s[p], b);
            clamped |= c;
            l
        });
        (l, clamped)
    }

    /// Rate-tangent linearization at integration point `p` of element `e`.
    fn linearize(&self, e: usize, p: usize, dt: f64, l: &[f64; NUM_SLIP]) -> PointTangent {
        let mat = self.mat(e);
        let systems = &self.systems[self.kind(e)];
        let c = &self.stiffness[usize::from(self.phases[e] != Phase::Ferrite)];
        let sigma = &self.sigma[p];
        let th = self.cfg.theta * dt;
        let mut out = PointTangent::default();
        let mut pv = [[0.0; 4]; NUM_SLIP];
        let mut cp = [[0.0; 4]; NUM_SLIP];
        let mut a = [0.0; NUM_SLIP];
        let mut b = [0.0; NUM_SLIP];
        let gd = self.gamma_dot[p];
        for al in 0..NUM_SLIP {
            let sys = &systems[al];
            pv[al] = sys.schmid_voigt();
            cp[al] = mat_vec(c, &pv[al]);
            let spin = sys.spin_term(sigma);
            for k in 0..4 {
                out.r[al][k] = cp[al][k] + spin[k];
            }
            let tau = resolved_shear_stress(sigma, sys);
            let g = self.g[p][al];
            a[al] = slip_rate_slope(tau, g, mat.gamma_dot_0, mat.m_exp);
            b[al] = gd[al] / (mat.m_exp * g);
        }
        let mut nmat = [[0.0; NUM_SLIP]; NUM_SLIP];
        for al in 0..NUM_SLIP {
            for be in 0..NUM_SLIP {
                let pr: f64 = (0..4).map(|k| pv[al][k] * out.r[be][k]).sum();
                let hard = if gd[be] != 0.0 {
                    let rho = self.rho_s[p][be].max(RHO_FLOOR);
                    mat.hardening_modulus_unchecked(rho, l[be], al, be) * gd[be].signum()
                } else {
                    0.0
                };
                nmat[al][be] = f64::from(u8::from(al == be)) + th * a[al] * pr + th * b[al] * hard;
            }
        }
        let minv = invert3(&nmat);
        for be in 0..NUM_SLIP {
            out.q[be] = (0..NUM_SLIP).map(|al| minv[be][al] * dt * gd[al]).sum();
            for k in 0..4 {
                out.qmat[be][k] = (0..NUM_SLIP).map(|al| minv[be][al] * th * a[al] * cp[al][k]).sum();
            }
        }
        out.c_tan = *c;
        for be in 0..NUM_SLIP {
            for i in 0..4 {
                out.relax[i] += out.r[be][i] * out.q[be];
                for j in 0..4 {
                    out.c_tan[i][j] -= out.r[be][i] * out.qmat[be][j];
                }
            }
        }
        out
    }

    /// Advance one load step. Returns the new (strain, stress) sample.
    ///
    /// A step whose slip or stress-ratio change exceeds its target by more
    /// than `REJECT_FACTOR` is undone and retried with a smaller increment.
    pub fn advance(&mut self) -> Result<(f64, f64)> {
        let remaining = self.cfg.strain_cap - self.applied / self.length() / self.strain_scale();
        let mut d_eq = self.next_increment.min(self.cfg.max_strain_increment).min(remaining.max(1e-12));
        loop {
            let saved = self.snapshot();
            let ratio = self.try_step(d_eq)?;
            if ratio > REJECT_FACTOR && d_eq > MIN_INCREMENT {
                self.restore(saved);
                d_eq = (d_eq * (0.8 / ratio).max(0.1)).max(MIN_INCREMENT);
                continue;
            }
            let factor = if ratio > 0.0 { (1.0 / ratio).clamp(0.5, 1.5) } else { 1.5 };
            self.next_increment = (d_eq * factor).min(self.cfg.max_strain_increment);
            return Ok(self.response());
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            sigma: self.sigma.clone(),
            g: self.g.clone(),
            rho_s: self.rho_s.clone(),
            gamma: self.gamma.clone(),
            gamma_dot: self.gamma_dot.clone(),
            rho_g_screw: self.rho_g_screw.clone(),
            rho_g_edge: self.rho_g_edge.clone(),
            u: self.u.clone(),
            applied: self.applied,
            time: self.time,
            step: self.step,
            clamped_l: self.clamped_l,
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.sigma = s.sigma;
        self.g = s.g;
        self.rho_s = s.rho_s;
        self.gamma = s.gamma;
        self.gamma_dot = s.gamma_dot;
        self.rho_g_screw = s.rho_g_screw;
        self.rho_g_edge = s.rho_g_edge;
        self.u = s.u;
        self.applied = s.applied;
        self.time = s.time;
        self.step = s.step;
        self.clamped_l = s.clamped_l;
    }

    /// Take a step of `d_eq` equivalent strain and return how far it
    /// overshot the step-size targets (1 means exactly on target).
    fn try_step(&mut self, d_eq: f64) -> Result<f64> {
        let len = self.length();
        let dt = d_eq / self.cfg.strain_rate;
        // Face displacement increment producing `d_eq` of equivalent strain.
        let du_face = d_eq * self.strain_scale() * len;
        let nel = self.n * self.n;

        let mut tangents = Vec::with_capacity(nel * NGP);
        let mut paths = Vec::with_capacity(nel * NGP);
        for e in 0..nel {
            for gp in 0..NGP {
                let p = e * NGP + gp;
                let (l, c) = self.mean_free_paths(e, p);
                self.clamped_l |= c;
                tangents.push(self.linearize(e, p, dt, &l));
                paths.push(l);
            }
        }

        // Assemble K du = f_relax - f_int.
        let mut rhs = self.internal_force();
        rhs.iter_mut().for_each(|v| *v = -*v);
        self.matrix.clear();
        for e in 0..nel {
            let dofs = self.element_dofs(e);
            let mut ke = [[0.0; 8]; 8];
            for gp in 0..NGP {
                let t = &tangents[e * NGP + gp];
                let b = &self.bbar[gp];
                let mut cb = [[0.0; 8]; 4];
                for i in 0..4 {
                    for k in 0..8 {
                        cb[i][k] = (0..4).map(|j| t.c_tan[i][j] * b[j][k]).sum();
                    }
                }
                for r in 0..8 {
                    for k in 0..8 {
                        ke[r][k] += self.weight * (0..4).map(|i| b[i][r] * cb[i][k]).sum::<f64>();
                    }
                    rhs[dofs[r]] += self.weight * (0..4).map(|i| b[i][r] * t.relax[i]).sum::<f64>();
                }
            }
            for r in 0..8 {
                for k in 0..8 {
                    self.matrix.add(dofs[r], dofs[k], ke[r][k]);
                }
            }
        }
        for &(d, share) in &self.prescribed {
            self.matrix.set_identity_row(d);
            rhs[d] = share * du_face;
        }
        self.matrix.factorize().map_err(|err| Error::Divergence {
            step: self.step,
            term: format!("global stiffness: {err}"),
        })?;
        self.matrix.solve_in_place(&mut rhs)?;
        let du = rhs;
        if du.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step,
                term: "displacement increment".into(),
            });
        }

        // Local updates.
        let mut max_dgamma: f64 = 0.0;
        let mut overshoot_sum = 0.0;
        let mut overshoot_max: f64 = 0.0;
        let mut elem_dgamma = vec![[0.0; NUM_SLIP]; nel];
        for e in 0..nel {
            let dofs = self.element_dofs(e);
            let kind = self.kind(e);
            let mat = self.mat(e).clone();
            let due: [f64; 8] = std::array::from_fn(|k| du[dofs[k]]);
            for gp in 0..NGP {
                let p = e * NGP + gp;
                let t = &tangents[p];
                let b = &self.bbar[gp];
                let deps: Voigt = std::array::from_fn(|i| (0..8).map(|k| b[i][k] * due[k]).sum());
                let mut dgamma = [0.0; NUM_SLIP];
                for be in 0..NUM_SLIP {
                    dgamma[be] = t.q[be] + (0..4).map(|k| t.qmat[be][k] * deps[k]).sum::<f64>();
                }
                let dsig = mat_vec(&t.c_tan, &deps);
                let systems = self.systems[kind];
                let before: [f64; NUM_SLIP] = std::array::from_fn(|a| {
                    resolved_shear_stress(&self.sigma[p], &systems[a]) / self.g[p][a]
                });
                for i in 0..4 {
                    self.sigma[p][i] += dsig[i] - t.relax[i];
                }
                let l = &paths[p];
                let rho_old = self.rho_s[p];
                for be in 0..NUM_SLIP {
                    self.rho_s[p][be] += mat.c_coeff / (mat.burgers * l[be]) * dgamma[be].abs();
                    self.gamma[p][be] += dgamma[be];
                    elem_dgamma[e][be] += dgamma[be] / NGP as f64;
                    max_dgamma = max_dgamma.max(dgamma[be].abs());
                }
                // Hardening modulus with 2 sqrt(rho) replaced by the secant
                // sqrt(rho_old) + sqrt(rho_new): the exact step integral when L
                // is frozen over the step.
                for al in 0..NUM_SLIP {
                    let dg: f64 = (0..NUM_SLIP)
                        .map(|be| {
                            let (r0, r1) = (rho_old[be].max(RHO_FLOOR), self.rho_s[p][be].max(RHO_FLOOR));
                            let secant = 2.0 * r0.sqrt() / (r0.sqrt() + r1.sqrt());
                            mat.hardening_modulus_unchecked(r0, l[be], al, be) * secant * dgamma[be].abs()
                        })
                        .sum();
                    self.g[p][al] += dg;
                }
                let mut point_overshoot: f64 = 0.0;
                for al in 0..NUM_SLIP {
                    let tau = resolved_shear_stress(&self.sigma[p], &systems[al]);
                    let g = self.g[p][al];
                    self.gamma_dot[p][al] = slip_rate_unchecked(tau, g, mat.gamma_dot_0, mat.m_exp);
                    let after = tau / g;
                    // Overshoot of tau/g past the flow surface within one step.
                    let excess = after.abs() - before[al].abs().max(FLOW_RATIO);
                    point_overshoot = point_overshoot.max(excess / mat.m_exp);
                }
                overshoot_sum += point_overshoot;
                overshoot_max = overshoot_max.max(point_overshoot);
                if self.sigma[p].iter().chain(&self.g[p]).any(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        step: self.step,
                        term: format!("integration point state in element {e}"),
                    });
                }
            }
        }
        self.update_gn_densities(&elem_dgamma);

        for (u, d) in self.u.iter_mut().zip(&du) {
            *u += d;
        }
        self.applied += du_face;
        self.time += dt;
        self.step += 1;

        let overshoot = overshoot_sum / (nel * NGP) as f64;
        Ok((max_dgamma / self.cfg.max_slip_increment)
            .max(overshoot / self.cfg.max_ratio_change)
            .max(overshoot_max / LOCAL_OVERSHOOT))
    }

    /// Ratio of face displacement / length to the equivalent strain.
    fn strain_scale(&self) -> f64 {
        if self.mode.is_shear() {
            3f64.sqrt()
        } else {
            1.0
        }
    }

    fn update_gn_densities(&mut self, elem_dgamma: &[[f64; NUM_SLIP]]) {
        let n = self.n;
        let nn = n + 1;
        let mut nodal = vec![[0.0; NUM_SLIP]; nn * nn];
        let mut count = vec![0u8; nn * nn];
        for e in 0..n * n {
            let (i, j) = (e % n, e / n);
            for nd in [j * nn + i, j * nn + i + 1, (j + 1) * nn + i + 1, (j + 1) * nn + i] {
                for a in 0..NUM_SLIP {
                    nodal[nd][a] += elem_dgamma[e][a];
                }
                count[nd] += 1;
            }
        }
        for (v, &c) in nodal.iter_mut().zip(&count) {
            for x in v.iter_mut() {
                *x /= f64::from(c);
            }
        }
        for e in 0..n * n {
            let (i, j) = (e % n, e / n);
            let nodes = [j * nn + i, j * nn + i + 1, (j + 1) * nn + i + 1, (j + 1) * nn + i];
            let kind = self.kind(e);
            let burgers = self.mat(e).burgers;
            for a in 0..NUM_SLIP {
                let mut grad = [0.0; 2];
                for k in 0..4 {
                    grad[0] += XI[k] * nodal[nodes[k]][a] / (2.0 * self.h);
                    grad[1] += ETA[k] * nodal[nodes[k]][a] / (2.0 * self.h);
                }
                let (screw, edge) = gn_density_rates(grad, &self.systems[kind][a], burgers);
                self.rho_g_screw[e][a] += screw;
                self.rho_g_edge[e][a] += edge;
            }
        }
    }

    /// Largest relative gap between the integrated flow stresses and the
    /// flow stress evaluated from the stored densities.
    pub fn hardening_drift(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (p, g) in self.g.iter().enumerate() {
            let mat = self.mat(p / NGP);
            for (a, &gv) in g.iter().enumerate() {
                let direct = mat.flow_stress(&self.rho_s[p], a);
                worst = worst.max((gv - direct).abs() / direct);
            }
        }
        worst
    }

    pub fn rho_s(&self) -> &[[f64; NUM_SLIP]] {
        &self.rho_s
    }

    pub fn flow_stresses(&self) -> &[[f64; NUM_SLIP]] {
        &self.g
    }

    /// GN density magnitudes per element and system, 1/um^2.
    pub fn rho_g(&self) -> Vec<[f64; NUM_SLIP]> {
        (0..self.n * self.n).map(|e| self.rho_g_magnitude(e)).collect()
    }

    pub fn accumulated_slip(&self) -> &[[f64; NUM_SLIP]] {
        &self.gamma
    }

    /// Element-averaged von Mises stress, MPa, row-major like the image.
    pub fn von_mises_field(&self) -> Vec<f64> {
        (0..self.n * self.n)
            .map(|e| {
                let mut s = 0.0;
                for gp in 0..NGP {
                    let v = &self.sigma[e * NGP + gp];
                    let (a, b, c, d) = (v[0], v[1], v[2], v[3]);
                    s += (0.5 * ((a - b).powi(2) + (b - c).powi(2) + (c - a).powi(2)) + 3.0 * d * d).sqrt();
                }
                s / NGP as f64
            })
            .collect()
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv = 1.0 / det;
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
            let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]) * inv;
        }
    }
    r
}

/// B-bar matrices at the four Gauss points of a square element of side `h`,
/// rows `[xx, yy, zz, gxy]`, columns `(ux, uy)` per node.
fn bbar_matrices(h: f64) -> [BMatrix; NGP] {
    let gps = [(-G, -G), (G, -G), (G, G), (-G, G)];
    let mut b = [[[0.0; 8]; 4]; NGP];
    let mut vol = [[0.0; 8]; NGP];
    for (q, &(xi, eta)) in gps.iter().enumerate() {
        for k in 0..4 {
            let dx = XI[k] * (1.0 + eta * ETA[k]) / 4.0 * 2.0 / h;
            let dy = ETA[k] * (1.0 + xi * XI[k]) / 4.0 * 2.0 / h;
            b[q][0][2 * k] = dx;
            b[q][1][2 * k + 1] = dy;
            b[q][3][2 * k] = dy;
            b[q][3][2 * k + 1] = dx;
            vol[q][2 * k] = dx;
            vol[q][2 * k + 1] = dy;
        }
    }
    let mut mean = [0.0; 8];
    for v in &vol {
        for k in 0..8 {
            mean[k] += v[k] / NGP as f64;
        }
    }
    for q in 0..NGP {
        for k in 0..8 {
            let corr = (mean[k] - vol[q][k]) / 3.0;
            b[q][0][k] += corr;
            b[q][1][k] += corr;
            b[q][2][k] += corr;
        }
    }
    b
}

/// Run `mode` on `image` until the neck is passed by `neck_margin` or the
/// strain cap is reached.
pub fn simulate(image: &MicrostructureImage, mode: DeformationMode, cfg: &CpfemConfig) -> Result<SimOutput> {
    let mut sim = Simulation::new(image, mode, cfg)?;
    let mut curve = StressStrainCurve::default();
    curve.push(0.0, 0.0);
    let mut peak = (0.0, f64::NEG_INFINITY);
    loop {
        let (e, s) = sim.advance()?;
        curve.push(e, s);
        let nominal = *curve.nominal_stress.last().unwrap();
        if nominal > peak.1 {
            peak = (e, nominal);
        }
        let done = e >= cfg.strain_cap * (1.0 - 1e-12)
            || (curve.len() >= 12 && e >= peak.0 + cfg.neck_margin)
            || sim.step_count() >= cfg.max_steps;
        if done {
            break;
        }
    }
    let analysis = considere(&curve)?;
    let necking_detected = analysis.eps_lim.is_some();
    let eps_lim = analysis.eps_lim.unwrap_or(*curve.true_strain.last().unwrap());
    let props = MechanicalProps::new(analysis.sigma_max, eps_lim, mode).map_err(|e| Error::Divergence {
        step: sim.step_count(),
        term: format!("property extraction: {e}"),
    })?;
    Ok(SimOutput {
        mode,
        curve,
        hardening_rate: analysis.hardening_rate,
        props,
        necking_detected,
        steps: sim.step_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbar_reproduces_homogeneous_strain() {
        let h = 0.5;
        let b = bbar_matrices(h);
        // u = (a x + c y, d x + e y) at nodes (0,0),(h,0),(h,h),(0,h).
        let (a, c, d, e) = (1e-3, 2e-3, -5e-4, 3e-3);
        let xy = [(0.0, 0.0), (h, 0.0), (h, h), (0.0, h)];
        let mut u = [0.0; 8];
        for (k, &(x, y)) in xy.iter().enumerate() {
            u[2 * k] = a * x + c * y;
            u[2 * k + 1] = d * x + e * y;
        }
        for bq in &b {
            let eps: Vec<f64> = (0..4).map(|i| (0..8).map(|k| bq[i][k] * u[k]).sum()).collect();
            assert!((eps[0] - a).abs() < 1e-15);
            assert!((eps[1] - e).abs() < 1e-15);
            assert!(eps[2].abs() < 1e-15);
            assert!((eps[3] - (c + d)).abs() < 1e-15);
        }
    }

    #[test]
    fn invert3_is_an_inverse() {
        let m = [[2.0, 0.3, -0.1], [0.2, 1.5, 0.4], [0.0, -0.7, 3.0]];
        let inv = invert3(&m);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - f64::from(u8::from(i == j))).abs() < 1e-14);
            }
        }
    }
}

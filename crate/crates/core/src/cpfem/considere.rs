use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogenized response sampled at every load step. For shear modes the
/// von Mises equivalents `sqrt(3) tau` and `gamma / sqrt(3)` are stored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StressStrainCurve {
    pub true_strain: Vec<f64>,
    /// MPa.
    pub true_stress: Vec<f64>,
    /// MPa.
    pub nominal_stress: Vec<f64>,
}

impl StressStrainCurve {
    /// Curve whose nominal stress follows from incompressible thinning,
    /// `nominal = true * exp(-strain)`.
    pub fn from_true(true_strain: Vec<f64>, true_stress: Vec<f64>) -> Self {
        let nominal_stress = true_strain
            .iter()
            .zip(&true_stress)
            .map(|(e, s)| s * (-e).exp())
            .collect();
        Self {
            true_strain,
            true_stress,
            nominal_stress,
        }
    }

    pub fn len(&self) -> usize {
        self.true_strain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_strain.is_empty()
    }

    pub fn push(&mut self, strain: f64, stress: f64) {
        self.true_strain.push(strain);
        self.true_stress.push(stress);
        self.nominal_stress.push(stress * (-strain).exp());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsidereResult {
    /// Maximum nominal stress, MPa.
    pub sigma_max: f64,
    /// Necking strain; `None` when the hardening rate never drops to the
    /// stress.
    pub eps_lim: Option<f64>,
    /// Smoothed `d(true stress)/d(true strain)` at every sample, MPa.
    pub hardening_rate: Vec<f64>,
}

const WINDOW: usize = 5;

/// Derivative at sample `i` of the least-squares quadratic through the
/// five-sample window around it (shifted inward at the ends).
fn smoothed_slope(x: &[f64], y: &[f64], i: usize) -> f64 {
    let n = x.len();
    let half = WINDOW / 2;
    let start = i.saturating_sub(half).min(n - WINDOW);
    let xs = &x[start..start + WINDOW];
    let ys = &y[start..start + WINDOW];
    let x0 = x[i];
    let scale = (xs[WINDOW - 1] - xs[0]).abs().max(f64::MIN_POSITIVE);
    // Normal equations in the centred, scaled variable u = (x - x0) / scale.
    let mut s = [0.0; 5];
    let mut t = [0.0; 3];
    for (&xv, &yv) in xs.iter().zip(ys) {
        let u = (xv - x0) / scale;
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * yv;
            }
            p *= u;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let coef = solve3(m, t);
    coef[1] / scale
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *o = det(&mc) / d;
    }
    out
}

/// Considere analysis of a true stress-strain curve.
pub fn considere(curve: &StressStrainCurve) -> Result<ConsidereResult> {
    let n = curve.len();
    if n < 10 {
        return Err(Error::Domain(format!("Considere analysis needs at least 10 samples, got {n}")));
    }
    if curve.true_stress.len() != n || curve.nominal_stress.len() != n {
        return Err(Error::Dimension("curve columns differ in length".into()));
    }
    let x = &curve.true_strain;
    let y = &curve.true_stress;
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("strain samples must be strictly increasing".into()));
    }
    let hardening_rate: Vec<f64> = (0..n).map(|i| smoothed_slope(x, y, i)).collect();
    let mut eps_lim = None;
    for i in 0..n {
        let f = hardening_rate[i] - y[i];
        if f <= 0.0 {
            eps_lim = Some(if i == 0 {
                x[0]
            } else {
                let fp = hardening_rate[i - 1] - y[i - 1];
                x[i - 1] + (x[i] - x[i - 1]) * fp / (fp - f)
            });
            break;
        }
    }
    let sigma_max = curve.nominal_stress.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ConsidereResult {
        sigma_max,
        eps_lim,
        hardening_rate,
    })
}

//! Planar slip systems and the power-law flow rule.
//!
//! Stresses and strains use 4-component plane-strain Voigt vectors:
//! stress `[sxx, syy, szz, sxy]`, strain `[exx, eyy, ezz, gxy]` with
//! engineering shear, so `stress . strain` is the full double contraction.

use crate::error::{Error, Result};

pub type Voigt = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlipSystem {
    /// Unit slip direction.
    pub s: [f64; 2],
    /// Unit slip-plane normal.
    pub m: [f64; 2],
    /// Out-of-plane binormal `s x m` (always `+z` or `-z` in 2-D).
    pub t: [f64; 3],
    /// Symmetric Schmid tensor `sym(s (x) m)`, in-plane `[[xx, xy], [xy, yy]]`.
    pub p: [[f64; 2]; 2],
    /// Skew part: `w[0][1] = -w[1][0]`.
    pub w: [[f64; 2]; 2],
}

impl SlipSystem {
    /// System whose slip direction makes `angle_deg` with the x axis.
    pub fn from_angle(angle_deg: f64) -> Self {
        let (sn, cs) = angle_deg.to_radians().sin_cos();
        Self::new([cs, sn], [-sn, cs])
    }

    pub fn new(s: [f64; 2], m: [f64; 2]) -> Self {
        let mut p = [[0.0; 2]; 2];
        let mut w = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = 0.5 * (s[i] * m[j] + m[i] * s[j]);
                w[i][j] = 0.5 * (s[i] * m[j] - m[i] * s[j]);
            }
        }
        let t = [0.0, 0.0, s[0] * m[1] - s[1] * m[0]];
        Self { s, m, t, p, w }
    }

    /// `p` as a strain-like Voigt vector (engineering shear), so that
    /// `tau = sigma . schmid_voigt()`.
    pub fn schmid_voigt(&self) -> Voigt {
        [self.p[0][0], self.p[1][1], 0.0, 2.0 * self.p[0][1]]
    }

    /// `w sigma - sigma w` as a stress-like Voigt vector.
    pub fn spin_term(&self, sigma: &Voigt) -> Voigt {
        let w = self.w[0][1];
        [
            2.0 * w * sigma[3],
            -2.0 * w * sigma[3],
            0.0,
            w * (sigma[1] - sigma[0]),
        ]
    }
}

/// The three planar systems at `base`, `base + 60` and `base - 60` degrees.
pub fn planar_systems(base_deg: f64, offsets_deg: &[f64; 3]) -> [SlipSystem; 3] {
    offsets_deg.map(|o| SlipSystem::from_angle(base_deg + o))
}

/// `tau = sigma : p`, MPa.
pub fn resolved_shear_stress(sigma: &Voigt, sys: &SlipSystem) -> f64 {
    let p = sys.schmid_voigt();
    sigma.iter().zip(&p).map(|(a, b)| a * b).sum()
}

/// Power-law slip rate `gdot0 sgn(tau) |tau/g|^(1/m)`, 1/s.
pub fn slip_rate(tau: f64, g: f64, gamma_dot_0: f64, m_exp: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::State(format!("flow stress must be positive, got {g}")));
    }
    Ok(slip_rate_unchecked(tau, g, gamma_dot_0, m_exp))
}

#[inline]
pub(crate) fn slip_rate_unchecked(tau: f64, g: f64, gamma_dot_0: f64, m_exp: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let r = (tau / g).abs();
    gamma_dot_0 * tau.signum() * r.powf(1.0 / m_exp)
}

/// `d(gdot)/d(tau)`, finite at `tau = 0`.
#[inline]
pub(crate) fn slip_rate_slope(tau: f64, g: f64, gamma_dot_0: f64, m_exp: f64) -> f64 {
    let r = (tau / g).abs();
    gamma_dot_0 / (m_exp * g) * r.powf(1.0 / m_exp - 1.0)
}

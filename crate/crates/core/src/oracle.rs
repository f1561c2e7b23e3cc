//! Closed-form steady-state flux of the three-site chain with `eps_1 = eps_3 = 0`,
//! and its limiting forms. These serve as independent checks of the numeric
//! pipeline.

use serde::{Deserialize, Serialize};

/// Three-site parameters with the outer site energies at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeSiteParams {
    pub eps2: f64,
    pub j1: f64,
    #[serde(default)]
    pub j2: f64,
    pub gamma_leak: f64,
    #[serde(default)]
    pub gamma_deph: f64,
}

/// Coherent, nearest-neighbor tunneling only.
pub fn eta_coherent_nn(eps2: f64, j1: f64, gamma_leak: f64) -> f64 {
    let g = gamma_leak;
    let j4 = j1.powi(4);
    4.0 * g * g * j4 / (12.0 * g * j4 + g.powi(3) * (eps2 * eps2 + 2.0 * j1 * j1))
}

/// Coherent with a direct 1-3 coupling `j2`.
pub fn eta_coherent_nnn(eps2: f64, j1: f64, j2: f64, gamma_leak: f64) -> f64 {
    let g = gamma_leak;
    let k = j1 * j1 - j2 * (eps2 + j2);
    4.0 * g * g * k * k
        / (12.0 * g * k * k + g.powi(3) * (eps2 * eps2 + 2.0 * eps2 * j2 + 2.0 * (j1 * j1 + j2 * j2)))
}

/// Nearest-neighbor chain with local dephasing `gamma_deph` on every site.
pub fn eta_dephasing_nn(eps2: f64, j1: f64, gamma_leak: f64, gamma_deph: f64) -> f64 {
    let (g, gd, e2) = (gamma_leak, gamma_deph, eps2 * eps2);
    let (j2, j4) = (j1 * j1, j1.powi(4));
    let num = 2.0 * g * j2 * (4.0 * gd.powi(3) + 4.0 * gd * gd * g + gd * (g * g + 8.0 * j2) + 2.0 * g * j2);
    let den = gd * gd * (12.0 * g * (e2 + 4.0 * j2) + 7.0 * g.powi(3))
        + gd * (4.0 * g * g * (2.0 * e2 + 5.0 * j2) + g.powi(4) + 48.0 * j4)
        + g.powi(3) * (e2 + 2.0 * j2)
        + 12.0 * gd.powi(4) * g
        + 8.0 * gd.powi(3) * (2.0 * g * g + 3.0 * j2)
        + 12.0 * g * j4;
    num / den
}

/// First-order slope `d eta / d gamma_deph` at zero dephasing (nearest neighbor).
pub fn dephasing_slope_nn(eps2: f64, j1: f64, gamma_leak: f64) -> f64 {
    let (g, e2, j2) = (gamma_leak, eps2 * eps2, j1 * j1);
    let d = g * g * e2 + 2.0 * g * g * j2 + 12.0 * j2 * j2;
    2.0 * g * g * (g * g * e2 * j2 - 8.0 * e2 * j2 * j2 - 12.0 * j2.powi(3)) / (d * d)
}

/// Flat-profile flux to first order in `gamma_deph` and second order in `j2`.
///
/// The dephasing term on the `j1` channel is `-6 G g^2 J1^2 / (g^2 + 6 J1^2)^2`,
/// the zero-detuning value of [`dephasing_slope_nn`].
pub fn eta_perturbative_nnn(j1: f64, j2: f64, gamma_leak: f64, gamma_deph: f64) -> f64 {
    let (g, gd) = (gamma_leak, gamma_deph);
    let (a, b) = (j1 * j1, j2 * j2);
    let g2 = g * g;
    let base = 4.0 * g * (a - b).powi(2) / (12.0 * (a - b).powi(2) + 2.0 * g2 * (a + b));
    let ballistic = -6.0 * gd * g2 * a / (g2 + 6.0 * a).powi(2);
    let interference = 2.0 * gd * g2 * b * (2.0 * g2 * g2 + 23.0 * g2 * a - 42.0 * a * a) / (a * (g2 + 6.0 * a).powi(3));
    base + ballistic + interference
}

/// Coherent nearest-neighbor flux for `eps2 >> J1` (with `gamma_leak > J1`).
pub fn eta_deep_tunneling(eps2: f64, j1: f64, gamma_leak: f64, gamma_deph: f64) -> f64 {
    4.0 * j1.powi(4) / (gamma_leak * eps2 * eps2) + 2.0 * gamma_deph * j1 * j1 / (eps2 * eps2)
}

/// Nearest-neighbor flux for `eps2 << J1` (with `gamma_leak > J1`).
pub fn eta_ballistic(j1: f64, gamma_leak: f64, gamma_deph: f64) -> f64 {
    2.0 * j1 * j1 / gamma_leak - gamma_deph * gamma_leak * gamma_leak / (6.0 * j1 * j1)
}

/// Weak-leak limit: equal populations, flux `gamma_leak / 3`.
pub fn eta_weak_leak(gamma_leak: f64) -> f64 {
    gamma_leak / 3.0
}

impl ThreeSiteParams {
    /// The exact closed form that covers these parameters, if any.
    pub fn exact(&self) -> Option<f64> {
        match (self.j2 == 0.0, self.gamma_deph == 0.0) {
            (true, true) => Some(eta_coherent_nn(self.eps2, self.j1, self.gamma_leak)),
            (false, true) => Some(eta_coherent_nnn(self.eps2, self.j1, self.j2, self.gamma_leak)),
            (true, false) => Some(eta_dephasing_nn(self.eps2, self.j1, self.gamma_leak, self.gamma_deph)),
            (false, false) => None,
        }
    }
}

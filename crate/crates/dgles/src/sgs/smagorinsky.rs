//! Classical Smagorinsky closure with Van Driest damping, optional Yoshizawa
//! isotropic term and eddy-diffusivity subgrid heat flux.

use super::{sgs_turbulent_diffusion, SgsFluxes, SgsNodeInput};
use crate::gas::{deviatoric, strain_norm, strain_rate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmagorinskyConfig {
    pub c_s: f64,
    pub c_i: f64,
    /// Van Driest constant A.
    pub a: f64,
    pub pr_sgs: f64,
    pub damping_enabled: bool,
}

impl Default for SmagorinskyConfig {
    fn default() -> Self {
        SmagorinskyConfig {
            c_s: 0.1,
            c_i: 0.0,
            a: 25.0,
            pr_sgs: 0.9,
            damping_enabled: true,
        }
    }
}

/// Van Driest damping factor f_D = 1 - exp(-y+/A).
pub fn van_driest(y_plus: f64, a: f64) -> f64 {
    if y_plus.is_infinite() {
        return 1.0;
    }
    1.0 - (-y_plus / a).exp()
}

/// Eddy viscosity nu_sgs = Re C_S^2 Delta^2 |S| f_D and the deviatoric
/// subgrid stress tau^d = -(1/Re) rho nu_sgs S^d.
pub fn eddy_viscosity(
    rho: f64,
    s: &[[f64; 3]; 3],
    delta: f64,
    y_plus: f64,
    cfg: &SmagorinskyConfig,
    re: f64,
) -> (f64, [[f64; 3]; 3]) {
    let f_d = if cfg.damping_enabled {
        van_driest(y_plus, cfg.a)
    } else {
        1.0
    };
    let nu = re * cfg.c_s * cfg.c_s * delta * delta * strain_norm(s) * f_d;
    let sd = deviatoric(s);
    let factor = -rho * nu / re;
    let mut tau_dev = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            tau_dev[i][j] = factor * sd[i][j];
        }
    }
    (nu, tau_dev)
}

/// Yoshizawa model for the isotropic part, tau_kk = C_I rho Delta^2 |S|^2.
pub fn yoshizawa_trace(rho: f64, delta: f64, s_norm: f64, c_i: f64) -> f64 {
    c_i * rho * delta * delta * s_norm * s_norm
}

/// Eddy-diffusivity heat flux Q_i = -(Pr/Pr_sgs) rho nu_sgs d_i T.
pub fn sgs_heat_flux(rho: f64, nu: f64, grad_t: &[f64; 3], pr: f64, pr_sgs: f64) -> [f64; 3] {
    let c = -(pr / pr_sgs) * rho * nu;
    [c * grad_t[0], c * grad_t[1], c * grad_t[2]]
}

/// Full Smagorinsky node evaluation.
pub fn evaluate(input: &SgsNodeInput, cfg: &SmagorinskyConfig, re: f64, pr: f64) -> SgsFluxes {
    let s = strain_rate(input.grad_u);
    let (nu, tau_dev) = eddy_viscosity(input.rho, &s, input.delta, input.y_plus, cfg, re);
    let tau_kk = yoshizawa_trace(input.rho, input.delta, strain_norm(&s), cfg.c_i);
    let mut tau = tau_dev;
    for i in 0..3 {
        tau[i][i] += tau_kk / 3.0;
    }
    let q = sgs_heat_flux(input.rho, nu, input.grad_t, pr, cfg.pr_sgs);
    let j = sgs_turbulent_diffusion(input.u, &tau, tau_kk);
    SgsFluxes {
        tau,
        q,
        j,
        tau_kk,
        beta: 1.0,
    }
}

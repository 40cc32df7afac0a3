//! Subgrid-scale closures.
//!
//! Two models are provided behind a common evaluation interface: the
//! classical Smagorinsky closure with Van Driest wall damping
//! ([`smagorinsky`]) and the dynamic anisotropic tensor-coefficient closure
//! ([`anisotropic`]). Model selection is a plain enum so the solver loops
//! stay free of virtual dispatch.

pub mod anisotropic;
pub mod smagorinsky;

pub use anisotropic::{AnisotropicConfig, DynWorkspace, ElemCoeffs};
pub use smagorinsky::SmagorinskyConfig;

/// Which closure the solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgsModelKind {
    None,
    Smagorinsky,
    Anisotropic,
}

/// Subgrid fluxes at one quadrature node.
#[derive(Debug, Clone, Copy, Default)]
pub struct SgsFluxes {
    /// Full subgrid stress tensor (limited, where the model limits it).
    pub tau: [[f64; 3]; 3],
    /// Subgrid temperature flux Q^sgs.
    pub q: [f64; 3],
    /// Subgrid turbulent diffusion J^sgs.
    pub j: [f64; 3],
    /// Trace of the (limited) subgrid stress.
    pub tau_kk: f64,
    /// Backscatter limiter actually applied (1 when inactive).
    pub beta: f64,
}

impl SgsFluxes {
    pub fn zero() -> Self {
        SgsFluxes {
            beta: 1.0,
            ..Default::default()
        }
    }
}

/// Per-node inputs shared by all closures.
#[derive(Debug, Clone, Copy)]
pub struct SgsNodeInput<'a> {
    pub rho: f64,
    pub u: [f64; 3],
    pub t: f64,
    /// grad_u[i][d] = d_d u_i.
    pub grad_u: &'a [[f64; 3]; 3],
    pub grad_t: &'a [f64; 3],
    /// Molecular stress at the node (enters the backscatter limiter).
    pub sigma: &'a [[f64; 3]; 3],
    /// Wall distance in wall units, Re * u_tau * d_wall.
    pub y_plus: f64,
    /// Grid filter width of the element.
    pub delta: f64,
}

/// RANS-style turbulent diffusion assembly, J_i = 2 u_k tau_ik + u_i tau_kk.
/// `tau` is the full subgrid stress tensor.
pub fn sgs_turbulent_diffusion(u: [f64; 3], tau: &[[f64; 3]; 3], tau_kk: f64) -> [f64; 3] {
    let mut j = [0.0; 3];
    for i in 0..3 {
        let mut s = 0.0;
        for k in 0..3 {
            s += u[k] * tau[i][k];
        }
        j[i] = 2.0 * s + u[i] * tau_kk;
    }
    j
}

/// Double contraction of two 3x3 tensors.
#[inline]
pub fn contract(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Backscatter limiter: beta = 1 where tau : S <= 0 (dissipative), else
/// min(1, (sigma : S / Re) / (tau : S)), guaranteeing nonnegative total
/// dissipation. Returns beta and the limited tensor.
pub fn backscatter_limiter(
    tau: &[[f64; 3]; 3],
    sigma: &[[f64; 3]; 3],
    s: &[[f64; 3]; 3],
    re: f64,
) -> (f64, [[f64; 3]; 3]) {
    let ts = contract(tau, s);
    let beta = if ts <= 0.0 {
        1.0
    } else {
        (contract(sigma, s) / re / ts).min(1.0)
    };
    let mut limited = *tau;
    for row in limited.iter_mut() {
        for v in row.iter_mut() {
            *v *= beta;
        }
    }
    (beta, limited)
}

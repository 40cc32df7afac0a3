//! Pointwise flux evaluations: convective, viscous and subgrid blocks, the
//! Rusanov numerical flux and the weak wall ghost state.

use crate::gas::{conserved_from_primitives, GasParameters, PrimitiveState};
use crate::sgs::SgsFluxes;
use crate::{Error, Result};

/// Everything needed to evaluate the total flux at one quadrature node.
#[derive(Debug, Clone, Copy)]
pub struct FluxNode<'a> {
    pub prim: PrimitiveState,
    /// Conserved total energy rho e (trace value, not recomputed).
    pub rho_e: f64,
    pub mu: f64,
    /// sigma = mu S^d at the node.
    pub sigma: &'a [[f64; 3]; 3],
    /// q = -mu grad T at the node.
    pub q_mol: &'a [f64; 3],
    pub sgs: &'a SgsFluxes,
}

/// Total flux F = F^c - F^v + F^sgs, `out[var][dir]`.
pub fn total_flux(node: &FluxNode, params: &GasParameters) -> [[f64; 3]; 5] {
    let p = &node.prim;
    let gm2 = params.gm2();
    let re = params.re;
    let kap = params.kappa();
    let mut f = [[0.0; 3]; 5];
    let rho_h = node.rho_e + p.p;
    for d in 0..3 {
        // Convective block.
        f[0][d] = p.rho * p.u[d];
        for i in 0..3 {
            f[1 + i][d] = p.rho * p.u[i] * p.u[d];
        }
        f[1 + d][d] += p.p / gm2;
        f[4][d] = rho_h * p.u[d];

        // Viscous block (enters with a minus sign).
        for i in 0..3 {
            f[1 + i][d] -= node.sigma[i][d] / re;
        }
        let work: f64 = (0..3).map(|k| p.u[k] * node.sigma[k][d]).sum();
        f[4][d] -= gm2 / re * work - node.q_mol[d] / (kap * re * params.pr);

        // Subgrid block.
        for i in 0..3 {
            f[1 + i][d] += node.sgs.tau[i][d];
        }
        f[4][d] += node.sgs.q[d] / kap
            + 0.5 * gm2 * (node.sgs.j[d] - node.sgs.tau_kk * p.u[d]);
    }
    f
}

/// Scalar Rusanov flux: 0.5 (f_l + f_r) - 0.5 lambda (u_r - u_l).
#[inline]
pub fn rusanov(f_l: f64, f_r: f64, u_l: f64, u_r: f64, lambda: f64) -> f64 {
    0.5 * (f_l + f_r) - 0.5 * lambda * (u_r - u_l)
}

/// Maximum signal speed of two states: |u.n| + sqrt(T)/Ma.
pub fn max_signal_speed(
    prim_l: &PrimitiveState,
    prim_r: &PrimitiveState,
    n: &[f64; 3],
    ma: f64,
) -> f64 {
    let speed = |p: &PrimitiveState| -> f64 {
        let un = p.u[0] * n[0] + p.u[1] * n[1] + p.u[2] * n[2];
        un.abs() + p.t.sqrt() / ma
    };
    speed(prim_l).max(speed(prim_r))
}

/// Ghost state for the isothermal no-slip wall: mirrored velocity, reflected
/// temperature 2 T_w - T, interior density. The Rusanov average then sees
/// u = 0 and T = T_w on the wall.
pub fn wall_ghost(
    interior: &PrimitiveState,
    tau_kk: f64,
    t_wall: f64,
    params: &GasParameters,
    element: usize,
) -> Result<(PrimitiveState, [f64; 5])> {
    let t_ghost = 2.0 * t_wall - interior.t;
    if !(t_ghost > 0.0) {
        return Err(Error::PositivityViolation {
            element,
            quantity: "wall ghost temperature",
            value: t_ghost,
        });
    }
    let u_ghost = [-interior.u[0], -interior.u[1], -interior.u[2]];
    let rho = interior.rho;
    let cons = conserved_from_primitives(rho, u_ghost, t_ghost, tau_kk, params);
    let kappa = params.kappa();
    let prim = PrimitiveState {
        rho,
        u: u_ghost,
        t: t_ghost,
        p: rho * t_ghost,
        e_i: (1.0 - kappa) / kappa * t_ghost,
    };
    Ok((prim, cons))
}

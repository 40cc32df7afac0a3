//! Dynamic anisotropic closure.
//!
//! The subgrid stress is proportional to the strain rate through a fourth
//! order tensor built from a rotation `a` and a symmetric coefficient tensor
//! determined by the Germano procedure between the grid filter (degree q) and
//! the test filter (degree qhat < q). With the Cartesian choice a = I the
//! coefficient solve is entrywise; the general rotated form is available as a
//! library function. Coefficients are averaged per element (numerator and
//! denominator separately, then one ratio) and are not averaged in time.

use super::{backscatter_limiter, sgs_turbulent_diffusion, SgsFluxes, SgsNodeInput};
use crate::basis::Basis;
use crate::gas::{strain_norm, strain_rate};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicConfig {
    /// Relative threshold under which a coefficient denominator counts as
    /// degenerate and the component is switched off.
    pub eps_den: f64,
    /// Clipping bound on raw coefficient components.
    pub c_max: f64,
    /// Refresh coefficients at every Runge-Kutta stage (else once per step).
    pub update_every_stage: bool,
    /// Fraction of the element's explicit-diffusion budget the model
    /// viscosity may occupy; <= 0 disables the stability cap. The beta
    /// limiter bounds backscatter but nothing in the dynamic procedure
    /// bounds excess dissipation, and clipped outlier coefficients would
    /// otherwise force the global step far below the convective CFL.
    pub nu_cap_fraction: f64,
}

impl Default for AnisotropicConfig {
    fn default() -> Self {
        AnisotropicConfig {
            eps_den: 1e-10,
            c_max: 10.0,
            update_every_stage: true,
            nu_cap_fraction: 0.5,
        }
    }
}

/// Element-averaged dynamic coefficients.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElemCoeffs {
    /// Momentum coefficient tensor (symmetric, Cartesian frame).
    pub c: [[f64; 3]; 3],
    /// Temperature-flux coefficients.
    pub cq: [f64; 3],
    /// Kinetic-energy-flux coefficients.
    pub cj: [f64; 3],
    /// Number of components switched off by the degeneracy guard.
    pub zeroed: u32,
}

/// Node data of one element feeding the dynamic procedure.
#[derive(Debug, Clone, Copy)]
pub struct ElementNodeData<'a> {
    pub rho: &'a [f64],
    pub u: [&'a [f64]; 3],
    pub t: &'a [f64],
    /// grad_u[node][i][d] = d_d u_i.
    pub grad_u: &'a [[[f64; 3]; 3]],
    pub grad_t: &'a [[f64; 3]],
}

const SYM6: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Scratch buffers for one element's dynamic solve; reuse across elements.
#[derive(Debug, Default)]
pub struct DynWorkspace {
    pub s: Vec<[[f64; 3]; 3]>,
    pub s_norm: Vec<f64>,
    tmp: Vec<f64>,
    c_rho: Vec<f64>,
    c_rt: Vec<f64>,
    c_ru: [Vec<f64>; 3],
    c_rut: [Vec<f64>; 3],
    c_ruk: [Vec<f64>; 3],
    c_ruu: [Vec<f64>; 6],
    c_dm: [Vec<f64>; 6],
    c_dq: [Vec<f64>; 3],
    c_dj: [Vec<f64>; 3],
    rhat: Vec<f64>,
    rhat_g: Vec<[f64; 3]>,
    ruhat: [Vec<f64>; 3],
    ruhat_g: [Vec<[f64; 3]>; 3],
    pub u_brev: [Vec<f64>; 3],
    gub: Vec<[[f64; 3]; 3]>,
    sb: Vec<[[f64; 3]; 3]>,
    sb_norm: Vec<f64>,
    t_brev: Vec<f64>,
    rt_g: Vec<[f64; 3]>,
    tgb: Vec<[f64; 3]>,
    gkb: Vec<[f64; 3]>,
    eval_buf: Vec<f64>,
    /// Leonard stress tensor at nodes (kept for inspection).
    pub leo_m: Vec<[[f64; 3]; 3]>,
    pub den_m: Vec<[[f64; 3]; 3]>,
    pub leo_q: Vec<[f64; 3]>,
    pub den_q: Vec<[f64; 3]>,
    pub leo_j: Vec<[f64; 3]>,
    pub den_j: Vec<[f64; 3]>,
}

impl DynWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, nn: usize, n_hat: usize) {
        self.s.resize(nn, [[0.0; 3]; 3]);
        self.s_norm.resize(nn, 0.0);
        self.tmp.resize(nn, 0.0);
        self.c_rho.resize(n_hat, 0.0);
        self.c_rt.resize(n_hat, 0.0);
        for v in self.c_ru.iter_mut().chain(self.c_rut.iter_mut()).chain(self.c_ruk.iter_mut()) {
            v.resize(n_hat, 0.0);
        }
        for v in self.c_ruu.iter_mut().chain(self.c_dm.iter_mut()) {
            v.resize(n_hat, 0.0);
        }
        for v in self.c_dq.iter_mut().chain(self.c_dj.iter_mut()) {
            v.resize(n_hat, 0.0);
        }
        self.rhat.resize(nn, 0.0);
        self.rhat_g.resize(nn, [0.0; 3]);
        for v in self.ruhat.iter_mut().chain(self.u_brev.iter_mut()) {
            v.resize(nn, 0.0);
        }
        for v in self.ruhat_g.iter_mut() {
            v.resize(nn, [0.0; 3]);
        }
        self.gub.resize(nn, [[0.0; 3]; 3]);
        self.sb.resize(nn, [[0.0; 3]; 3]);
        self.sb_norm.resize(nn, 0.0);
        self.t_brev.resize(nn, 0.0);
        self.rt_g.resize(nn, [0.0; 3]);
        self.tgb.resize(nn, [0.0; 3]);
        self.gkb.resize(nn, [0.0; 3]);
        self.eval_buf.resize(nn, 0.0);
        self.leo_m.resize(nn, [[0.0; 3]; 3]);
        self.den_m.resize(nn, [[0.0; 3]; 3]);
        self.leo_q.resize(nn, [0.0; 3]);
        self.den_q.resize(nn, [0.0; 3]);
        self.leo_j.resize(nn, [0.0; 3]);
        self.den_j.resize(nn, [0.0; 3]);
    }
}

fn proj_prefix(basis: &Basis, n_hat: usize, vals: &[f64], out: &mut [f64]) {
    let nm = basis.n_modes;
    out[..n_hat].fill(0.0);
    for (n, (&f, &w)) in vals.iter().zip(&basis.quad.weights).enumerate() {
        let wf = w * f;
        let phi = &basis.phi[n * nm..n * nm + n_hat];
        for (c, p) in out[..n_hat].iter_mut().zip(phi) {
            *c += wf * p;
        }
    }
}

fn eval_prefix(basis: &Basis, n_hat: usize, coeffs: &[f64], out: &mut [f64]) {
    let nm = basis.n_modes;
    for (n, o) in out.iter_mut().enumerate() {
        let phi = &basis.phi[n * nm..n * nm + n_hat];
        *o = phi.iter().zip(&coeffs[..n_hat]).map(|(p, c)| p * c).sum();
    }
}

fn eval_prefix_grad_phys(
    basis: &Basis,
    n_hat: usize,
    coeffs: &[f64],
    ijt: &[[f64; 3]; 3],
    out: &mut [[f64; 3]],
) {
    let nm = basis.n_modes;
    for (n, o) in out.iter_mut().enumerate() {
        let mut rg = [0.0; 3];
        for (m, &c) in coeffs[..n_hat].iter().enumerate() {
            let g = &basis.grad_phi[(n * nm + m) * 3..(n * nm + m) * 3 + 3];
            rg[0] += c * g[0];
            rg[1] += c * g[1];
            rg[2] += c * g[2];
        }
        for r in 0..3 {
            o[r] = ijt[r][0] * rg[0] + ijt[r][1] * rg[1] + ijt[r][2] * rg[2];
        }
    }
}

/// Regularized coefficient: zero on a degenerate denominator, clipped to
/// +-c_max otherwise.
fn regularized(num: f64, den: f64, scale: f64, cfg: &AnisotropicConfig, zeroed: &mut u32) -> f64 {
    if den.abs() < scale || !den.is_finite() || !num.is_finite() {
        *zeroed += 1;
        0.0
    } else {
        (num / den).clamp(-cfg.c_max, cfg.c_max)
    }
}

/// Run the full dynamic procedure on one element and return the
/// element-averaged coefficients. The workspace keeps every intermediate node
/// field (Leonard tensors, denominators, test-level Favre fields).
///
/// `nu_cap` bounds the effective model diffusivity Delta^2 |S| C (pass
/// infinity to disable); the solver derives it from the element's convective
/// signal speed so the subgrid terms stay integrable at the convective CFL.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_element(
    basis: &Basis,
    qhat: usize,
    data: &ElementNodeData,
    inv_jac_t: &[[f64; 3]; 3],
    delta: f64,
    delta_hat: f64,
    cfg: &AnisotropicConfig,
    nu_cap: f64,
    element: usize,
    ws: &mut DynWorkspace,
) -> Result<ElemCoeffs> {
    let nn = basis.quad.nodes.len();
    let n_hat = basis.n_modes_up_to(qhat);
    ws.ensure(nn, n_hat);
    let d2 = delta * delta;
    let dh2 = delta_hat * delta_hat;

    for n in 0..nn {
        ws.s[n] = strain_rate(&data.grad_u[n]);
        ws.s_norm[n] = strain_norm(&ws.s[n]);
    }

    // Hat-level modal coefficients of all filtered products.
    proj_prefix(basis, n_hat, data.rho, &mut ws.c_rho);
    for i in 0..3 {
        for n in 0..nn {
            ws.tmp[n] = data.rho[n] * data.u[i][n];
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_ru[i]);
        for n in 0..nn {
            ws.tmp[n] = data.rho[n] * data.u[i][n] * data.t[n];
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_rut[i]);
        for n in 0..nn {
            let uk2 = (0..3).map(|k| data.u[k][n] * data.u[k][n]).sum::<f64>();
            ws.tmp[n] = data.rho[n] * data.u[i][n] * uk2;
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_ruk[i]);
    }
    for n in 0..nn {
        ws.tmp[n] = data.rho[n] * data.t[n];
    }
    proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_rt);
    for (k, (i, j)) in SYM6.iter().enumerate() {
        for n in 0..nn {
            ws.tmp[n] = data.rho[n] * data.u[*i][n] * data.u[*j][n];
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_ruu[k]);
        for n in 0..nn {
            ws.tmp[n] = data.rho[n] * ws.s_norm[n] * ws.s[n][*i][*j];
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_dm[k]);
    }
    for a in 0..3 {
        for n in 0..nn {
            ws.tmp[n] = data.rho[n] * ws.s_norm[n] * data.grad_t[n][a];
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_dq[a]);
        for n in 0..nn {
            let gk: f64 = (0..3).map(|k| data.u[k][n] * data.grad_u[n][k][a]).sum();
            ws.tmp[n] = data.rho[n] * ws.s_norm[n] * gk;
        }
        proj_prefix(basis, n_hat, &ws.tmp, &mut ws.c_dj[a]);
    }

    // Test-level Favre fields and their gradients (ratios of polynomials).
    eval_prefix(basis, n_hat, &ws.c_rho, &mut ws.rhat);
    eval_prefix_grad_phys(basis, n_hat, &ws.c_rho, inv_jac_t, &mut ws.rhat_g);
    for n in 0..nn {
        if !(ws.rhat[n] > 0.0) {
            return Err(Error::PositivityViolation {
                element,
                quantity: "test-filtered density",
                value: ws.rhat[n],
            });
        }
    }
    for i in 0..3 {
        eval_prefix(basis, n_hat, &ws.c_ru[i], &mut ws.ruhat[i]);
        eval_prefix_grad_phys(basis, n_hat, &ws.c_ru[i], inv_jac_t, &mut ws.ruhat_g[i]);
        for n in 0..nn {
            ws.u_brev[i][n] = ws.ruhat[i][n] / ws.rhat[n];
        }
    }
    for n in 0..nn {
        for i in 0..3 {
            for d in 0..3 {
                ws.gub[n][i][d] =
                    (ws.ruhat_g[i][n][d] - ws.u_brev[i][n] * ws.rhat_g[n][d]) / ws.rhat[n];
            }
        }
        ws.sb[n] = strain_rate(&ws.gub[n]);
        ws.sb_norm[n] = strain_norm(&ws.sb[n]);
        for d in 0..3 {
            ws.gkb[n][d] = (0..3).map(|k| ws.u_brev[k][n] * ws.gub[n][k][d]).sum();
        }
    }
    eval_prefix(basis, n_hat, &ws.c_rt, &mut ws.t_brev);
    eval_prefix_grad_phys(basis, n_hat, &ws.c_rt, inv_jac_t, &mut ws.rt_g);
    for n in 0..nn {
        let t = ws.t_brev[n] / ws.rhat[n];
        for d in 0..3 {
            ws.tgb[n][d] = (ws.rt_g[n][d] - t * ws.rhat_g[n][d]) / ws.rhat[n];
        }
        ws.t_brev[n] = t;
    }

    // Leonard tensors and dynamic denominators at nodes.
    for (k, (i, j)) in SYM6.iter().enumerate() {
        eval_prefix(basis, n_hat, &ws.c_ruu[k], &mut ws.tmp);
        for n in 0..nn {
            let l = ws.tmp[n] - ws.rhat[n] * ws.u_brev[*i][n] * ws.u_brev[*j][n];
            ws.leo_m[n][*i][*j] = l;
            ws.leo_m[n][*j][*i] = l;
        }
        eval_prefix(basis, n_hat, &ws.c_dm[k], &mut ws.tmp);
        for n in 0..nn {
            let d = d2 * ws.tmp[n] - dh2 * ws.rhat[n] * ws.sb_norm[n] * ws.sb[n][*i][*j];
            ws.den_m[n][*i][*j] = d;
            ws.den_m[n][*j][*i] = d;
        }
    }
    for a in 0..3 {
        eval_prefix(basis, n_hat, &ws.c_rut[a], &mut ws.tmp);
        for n in 0..nn {
            ws.leo_q[n][a] = ws.tmp[n] - ws.rhat[n] * ws.u_brev[a][n] * ws.t_brev[n];
        }
        eval_prefix(basis, n_hat, &ws.c_dq[a], &mut ws.tmp);
        for n in 0..nn {
            ws.den_q[n][a] = d2 * ws.tmp[n] - dh2 * ws.rhat[n] * ws.sb_norm[n] * ws.tgb[n][a];
        }
        eval_prefix(basis, n_hat, &ws.c_ruk[a], &mut ws.tmp);
        for n in 0..nn {
            let ub2: f64 = (0..3).map(|k| ws.u_brev[k][n] * ws.u_brev[k][n]).sum();
            ws.leo_j[n][a] = ws.tmp[n] - ws.rhat[n] * ws.u_brev[a][n] * ub2;
        }
        eval_prefix(basis, n_hat, &ws.c_dj[a], &mut ws.tmp);
        for n in 0..nn {
            ws.den_j[n][a] = d2 * ws.tmp[n] - dh2 * ws.rhat[n] * ws.sb_norm[n] * ws.gkb[n][a];
        }
    }

    // Element averages: numerator and denominator separately, one ratio.
    let wsum: f64 = basis.quad.weights.iter().sum();
    let avg = |f: &dyn Fn(usize) -> f64| -> f64 {
        basis
            .quad
            .weights
            .iter()
            .enumerate()
            .map(|(n, w)| w * f(n))
            .sum::<f64>()
            / wsum
    };
    let rho_avg = avg(&|n| data.rho[n]);
    let snorm_avg = avg(&|n| ws.s_norm[n]);
    // The test-level strain enters the floor so that strain-free states
    // (denominator pure roundoff) switch the model off instead of producing
    // clipped garbage coefficients.
    let sbnorm_avg = avg(&|n| ws.sb_norm[n]);
    let scale =
        cfg.eps_den * (rho_avg * (d2 * snorm_avg + dh2 * sbnorm_avg)) + f64::MIN_POSITIVE;
    // Tighten the clip so Delta^2 |S| |C| <= nu_cap.
    let c_bound = if nu_cap.is_finite() && snorm_avg > 0.0 {
        cfg.c_max.min(nu_cap / (d2 * snorm_avg))
    } else {
        cfg.c_max
    };
    let cfg_eff = AnisotropicConfig {
        c_max: c_bound,
        ..*cfg
    };

    let mut out = ElemCoeffs::default();
    for (i, j) in SYM6 {
        let num = avg(&|n| ws.leo_m[n][i][j]);
        let den = avg(&|n| ws.den_m[n][i][j]);
        let c = regularized(num, den, scale, &cfg_eff, &mut out.zeroed);
        out.c[i][j] = c;
        out.c[j][i] = c;
    }
    for a in 0..3 {
        out.cq[a] = regularized(
            avg(&|n| ws.leo_q[n][a]),
            avg(&|n| ws.den_q[n][a]),
            scale,
            &cfg_eff,
            &mut out.zeroed,
        );
        out.cj[a] = regularized(
            avg(&|n| ws.leo_j[n][a]),
            avg(&|n| ws.den_j[n][a]),
            scale,
            &cfg_eff,
            &mut out.zeroed,
        );
    }
    Ok(out)
}

/// Subgrid stress from the Cartesian-frame coefficient tensor:
/// tau_ij = -rho Delta^2 |S| C_ij S_ij (componentwise, isotropic part
/// included; the trace is modeled together with the deviator).
pub fn tau_anisotropic(
    c: &[[f64; 3]; 3],
    rho: f64,
    delta: f64,
    s_norm: f64,
    s: &[[f64; 3]; 3],
) -> [[f64; 3]; 3] {
    let k = -rho * delta * delta * s_norm;
    let mut tau = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            tau[i][j] = k * c[i][j] * s[i][j];
        }
    }
    tau
}

/// General rotated form: tau_ij = -rho Delta^2 |S| B_ijrs S_rs with
/// B_ijrs = sum_ab C_ab a_ia a_jb a_ra a_sb. Reduces to
/// [`tau_anisotropic`] when `a` is the identity.
pub fn tau_anisotropic_rotated(
    a: &[[f64; 3]; 3],
    c: &[[f64; 3]; 3],
    rho: f64,
    delta: f64,
    s_norm: f64,
    s: &[[f64; 3]; 3],
) -> [[f64; 3]; 3] {
    let m = rotate_to_frame(a, s);
    let mut nm = [[0.0; 3]; 3];
    for al in 0..3 {
        for be in 0..3 {
            nm[al][be] = c[al][be] * m[al][be];
        }
    }
    // back: a N a^T
    let k = -rho * delta * delta * s_norm;
    let mut tau = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut sum = 0.0;
            for al in 0..3 {
                for be in 0..3 {
                    sum += a[i][al] * nm[al][be] * a[j][be];
                }
            }
            tau[i][j] = k * sum;
        }
    }
    tau
}

/// a^T m a: express a symmetric tensor in the rotated frame.
pub fn rotate_to_frame(a: &[[f64; 3]; 3], m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for al in 0..3 {
        for be in 0..3 {
            let mut sum = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    sum += a[i][al] * m[i][j] * a[j][be];
                }
            }
            out[al][be] = sum;
        }
    }
    out
}

/// General-rotation dynamic solve for the momentum coefficients from node
/// tensors of the Leonard stress and the denominator, with quadrature
/// weights `w`. With `a` = identity this is the entrywise specialization.
pub fn dynamic_momentum_rotated(
    a: &[[f64; 3]; 3],
    leonard: &[[[f64; 3]; 3]],
    denom: &[[[f64; 3]; 3]],
    w: &[f64],
    scale: f64,
    cfg: &AnisotropicConfig,
) -> [[f64; 3]; 3] {
    let wsum: f64 = w.iter().sum();
    let mut num = [[0.0; 3]; 3];
    let mut den = [[0.0; 3]; 3];
    for (n, &wn) in w.iter().enumerate() {
        let ln = rotate_to_frame(a, &leonard[n]);
        let dn = rotate_to_frame(a, &denom[n]);
        for al in 0..3 {
            for be in 0..3 {
                num[al][be] += wn * ln[al][be];
                den[al][be] += wn * dn[al][be];
            }
        }
    }
    let mut zeroed = 0u32;
    let mut c = [[0.0; 3]; 3];
    for al in 0..3 {
        for be in 0..3 {
            c[al][be] = regularized(num[al][be] / wsum, den[al][be] / wsum, scale, cfg, &mut zeroed);
        }
    }
    c
}

/// Node evaluation of the anisotropic fluxes from precomputed element
/// coefficients: limited stress, heat flux, turbulent diffusion.
pub fn evaluate(input: &SgsNodeInput, coeffs: &ElemCoeffs, re: f64) -> SgsFluxes {
    let s = strain_rate(input.grad_u);
    let sn = strain_norm(&s);
    let tau_raw = tau_anisotropic(&coeffs.c, input.rho, input.delta, sn, &s);
    let (beta, tau) = backscatter_limiter(&tau_raw, input.sigma, &s, re);
    let tau_kk = tau[0][0] + tau[1][1] + tau[2][2];

    let kq = -input.rho * input.delta * input.delta * sn;
    let mut q = [0.0; 3];
    let mut j = [0.0; 3];
    for i in 0..3 {
        q[i] = kq * coeffs.cq[i] * input.grad_t[i];
        // d_i (u_k u_k / 2) = u_k d_i u_k
        let gk: f64 = (0..3).map(|k| input.u[k] * input.grad_u[k][i]).sum();
        j[i] = kq * coeffs.cj[i] * gk;
    }
    let jt = sgs_turbulent_diffusion(input.u, &tau, tau_kk);
    for i in 0..3 {
        j[i] += jt[i];
    }
    SgsFluxes {
        tau,
        q,
        j,
        tau_kk,
        beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Basis, REF_VERTS};
    use approx::assert_relative_eq;

    const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    struct Fields {
        rho: Vec<f64>,
        u: [Vec<f64>; 3],
        t: Vec<f64>,
        gu: Vec<[[f64; 3]; 3]>,
        gt: Vec<[f64; 3]>,
    }

    /// Sample fields on the identity-mapped reference element.
    fn sample(
        basis: &Basis,
        rho: impl Fn([f64; 3]) -> f64,
        u: [&dyn Fn([f64; 3]) -> (f64, [f64; 3]); 3],
        t: impl Fn([f64; 3]) -> (f64, [f64; 3]),
    ) -> Fields {
        let nn = basis.quad.nodes.len();
        let mut f = Fields {
            rho: vec![0.0; nn],
            u: [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]],
            t: vec![0.0; nn],
            gu: vec![[[0.0; 3]; 3]; nn],
            gt: vec![[0.0; 3]; nn],
        };
        for (n, &p) in basis.quad.nodes.iter().enumerate() {
            f.rho[n] = rho(p);
            for i in 0..3 {
                let (v, g) = u[i](p);
                f.u[i][n] = v;
                f.gu[n][i] = g;
            }
            let (tv, tg) = t(p);
            f.t[n] = tv;
            f.gt[n] = tg;
        }
        f
    }

    fn run(basis: &Basis, qhat: usize, f: &Fields, d: f64, dh: f64) -> (ElemCoeffs, DynWorkspace) {
        let mut ws = DynWorkspace::new();
        let data = ElementNodeData {
            rho: &f.rho,
            u: [&f.u[0], &f.u[1], &f.u[2]],
            t: &f.t,
            grad_u: &f.gu,
            grad_t: &f.gt,
        };
        let _ = REF_VERTS;
        let c = dynamic_element(
            basis,
            qhat,
            &data,
            &IDENTITY,
            d,
            dh,
            &AnisotropicConfig::default(),
            f64::INFINITY,
            0,
            &mut ws,
        )
        .unwrap();
        (c, ws)
    }

    #[test]
    fn uniform_flow_switches_off() {
        let basis = Basis::new(4).unwrap();
        let f = sample(
            &basis,
            |_| 1.3,
            [
                &|_| (0.8, [0.0; 3]),
                &|_| (-0.1, [0.0; 3]),
                &|_| (0.0, [0.0; 3]),
            ],
            |_| (1.0, [0.0; 3]),
        );
        let (c, ws) = run(&basis, 2, &f, 0.1, 0.2);
        for row in c.c {
            for v in row {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(c.cq, [0.0; 3]);
        assert_eq!(c.cj, [0.0; 3]);
        assert_eq!(c.zeroed, 12);
        for n in 0..basis.quad.nodes.len() {
            for i in 0..3 {
                for j in 0..3 {
                    assert!(ws.leo_m[n][i][j].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn leonard_vanishes_on_low_degree_products() {
        // rho constant, u and T linear: momentum and temperature products
        // have degree 2 <= qhat = 2, so both filters act as the identity.
        let basis = Basis::new(4).unwrap();
        let f = sample(
            &basis,
            |_| 2.0,
            [
                &|p| (0.3 + 0.5 * p[1], [0.0, 0.5, 0.0]),
                &|p| (0.1 * p[0] - 0.2 * p[2], [0.1, 0.0, -0.2]),
                &|p| (0.4 * p[2], [0.0, 0.0, 0.4]),
            ],
            |p| (1.0 + 0.2 * p[0], [0.2, 0.0, 0.0]),
        );
        let (_, ws) = run(&basis, 2, &f, 0.1, 0.2);
        for n in 0..basis.quad.nodes.len() {
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        ws.leo_m[n][i][j].abs() <= 1e-12,
                        "L[{i}][{j}] = {:.3e}",
                        ws.leo_m[n][i][j]
                    );
                }
            }
            for a in 0..3 {
                assert!(ws.leo_q[n][a].abs() <= 1e-12);
            }
        }
        // Cubic velocity products need qhat >= 3 to vanish.
        let (_, ws3) = run(&basis, 3, &f, 0.1, 0.2);
        for n in 0..basis.quad.nodes.len() {
            for a in 0..3 {
                assert!(
                    ws3.leo_j[n][a].abs() <= 1e-12,
                    "L^J[{a}] = {:.3e}",
                    ws3.leo_j[n][a]
                );
            }
        }
    }

    #[test]
    fn tau_formula_cases() {
        let s = {
            let mut m = [[0.0; 3]; 3];
            m[0][1] = 1.5;
            m[1][0] = 1.5;
            m[2][2] = -0.4;
            m
        };
        let zero = [[0.0; 3]; 3];
        assert_eq!(tau_anisotropic(&zero, 1.0, 0.1, 1.0, &s), [[0.0; 3]; 3]);
        assert_eq!(
            tau_anisotropic(&[[2.0; 3]; 3], 1.0, 0.1, 0.0, &zero),
            [[0.0; 3]; 3]
        );
        // Constant coefficient matrix of ones: tensor-Smagorinsky form.
        let ones = [[1.0; 3]; 3];
        let rho = 1.2;
        let delta = 0.3;
        let sn = strain_norm(&s);
        let tau = tau_anisotropic(&ones, rho, delta, sn, &s);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    tau[i][j],
                    -rho * delta * delta * sn * s[i][j],
                    max_relative = 1e-14,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn rotated_form_reduces_to_identity_frame() {
        let s = {
            let mut m = [[0.0; 3]; 3];
            m[0][1] = 0.7;
            m[1][0] = 0.7;
            m[0][0] = -0.2;
            m
        };
        let c = [[0.4, -0.1, 0.0], [-0.1, 0.9, 0.2], [0.0, 0.2, 0.5]];
        let t1 = tau_anisotropic(&c, 1.1, 0.2, strain_norm(&s), &s);
        let t2 = tau_anisotropic_rotated(&IDENTITY, &c, 1.1, 0.2, strain_norm(&s), &s);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(t1[i][j], t2[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rotated_solve_matches_cyclic_permutation() {
        // Cyclic rotation x->y->z->x; the coefficients in the rotated frame
        // are the permuted Cartesian ones.
        let a = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let mut leonard = Vec::new();
        let mut denom = Vec::new();
        let w = vec![0.25, 0.75];
        for k in 0..2 {
            let f = 1.0 + k as f64;
            leonard.push([
                [0.1 * f, 0.2 * f, 0.3 * f],
                [0.2 * f, 0.4 * f, 0.5 * f],
                [0.3 * f, 0.5 * f, 0.6 * f],
            ]);
            denom.push([[1.0, 2.0, 3.0], [2.0, 1.5, 2.5], [3.0, 2.5, 1.2]]);
        }
        let cfg = AnisotropicConfig::default();
        let c_id = dynamic_momentum_rotated(&IDENTITY, &leonard, &denom, &w, 1e-20, &cfg);
        let c_rot = dynamic_momentum_rotated(&a, &leonard, &denom, &w, 1e-20, &cfg);
        // (a^T M a)_ab picks M[p(a)][p(b)] where a[p(al)][al] = 1.
        let p = [1usize, 2, 0];
        for al in 0..3 {
            for be in 0..3 {
                assert_relative_eq!(c_rot[al][be], c_id[p[al]][p[be]], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn scaling_covariance_of_delta_squared_c() {
        // Rescaling (Delta, Delta_hat) by lambda leaves Delta^2 C invariant
        // when the Leonard tensor is held fixed.
        let basis = Basis::new(4).unwrap();
        let f = sample(
            &basis,
            |p| 1.0 + 0.1 * p[0] * p[1],
            [
                &|p| (0.5 * p[0] * p[0] + 0.1 * p[1], [p[0], 0.1, 0.0]),
                &|p| (0.2 * p[1] * p[2], [0.0, 0.2 * p[2], 0.2 * p[1]]),
                &|p| (0.3 * p[2] * p[0], [0.3 * p[2], 0.0, 0.3 * p[0]]),
            ],
            |p| (1.0 + 0.3 * p[1] * p[1], [0.0, 0.6 * p[1], 0.0]),
        );
        let (c1, _) = run(&basis, 2, &f, 0.1, 0.152);
        let lam = 1.7;
        let (c2, _) = run(&basis, 2, &f, 0.1 * lam, 0.152 * lam);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    0.1 * 0.1 * c1.c[i][j],
                    0.1 * lam * 0.1 * lam * c2.c[i][j],
                    max_relative = 1e-12,
                    epsilon = 1e-15
                );
            }
        }
        for a in 0..3 {
            assert_relative_eq!(
                0.01 * c1.cq[a],
                (0.1 * lam) * (0.1 * lam) * c2.cq[a],
                max_relative = 1e-12,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn evaluate_zero_cases() {
        let zero_g = [[0.0; 3]; 3];
        let sigma = [[0.0; 3]; 3];
        let input = SgsNodeInput {
            rho: 1.0,
            u: [0.0; 3],
            t: 1.0,
            grad_u: &zero_g,
            grad_t: &[0.0; 3],
            sigma: &sigma,
            y_plus: f64::INFINITY,
            delta: 0.1,
        };
        let f = evaluate(&input, &ElemCoeffs::default(), 100.0);
        assert_eq!(f.tau, [[0.0; 3]; 3]);
        assert_eq!(f.q, [0.0; 3]);
        assert_eq!(f.j, [0.0; 3]);
        assert_eq!(f.beta, 1.0);
    }

    #[test]
    fn evaluate_j_assembly_matches_termwise() {
        // J_i = tau(u_i,u_k,u_k) + 2 u_k tau_ik + u_i tau_kk, all terms from
        // an independent index-by-index evaluation.
        let g = [[0.1, 0.4, -0.2], [0.0, -0.3, 0.25], [0.15, 0.0, 0.2]];
        let gt = [0.3, -0.1, 0.2];
        let sigma_g = crate::gas::molecular_fluxes(&g, &gt, 1.0).0;
        let coeffs = ElemCoeffs {
            c: [[0.2, 0.05, -0.1], [0.05, 0.3, 0.0], [-0.1, 0.0, 0.15]],
            cq: [0.1, -0.2, 0.3],
            cj: [0.25, 0.1, -0.05],
            zeroed: 0,
        };
        let u = [0.9, -0.4, 0.3];
        let input = SgsNodeInput {
            rho: 1.3,
            u,
            t: 1.1,
            grad_u: &g,
            grad_t: &gt,
            sigma: &sigma_g,
            y_plus: f64::INFINITY,
            delta: 0.2,
        };
        let re = 1000.0;
        let f = evaluate(&input, &coeffs, re);

        let s = strain_rate(&g);
        let sn = strain_norm(&s);
        let (beta, tau) =
            backscatter_limiter(&tau_anisotropic(&coeffs.c, 1.3, 0.2, sn, &s), &sigma_g, &s, re);
        assert_relative_eq!(f.beta, beta);
        let tau_kk = tau[0][0] + tau[1][1] + tau[2][2];
        for i in 0..3 {
            let mut gk = 0.0;
            for k in 0..3 {
                gk += u[k] * g[k][i];
            }
            let tuuk = -1.3 * 0.2 * 0.2 * sn * coeffs.cj[i] * gk;
            let mut expect = tuuk + u[i] * tau_kk;
            for k in 0..3 {
                expect += 2.0 * u[k] * tau[i][k];
            }
            assert_relative_eq!(f.j[i], expect, max_relative = 1e-13, epsilon = 1e-15);
            let q_expect = -1.3 * 0.04 * sn * coeffs.cq[i] * gt[i];
            assert_relative_eq!(f.q[i], q_expect, max_relative = 1e-13, epsilon = 1e-15);
        }
    }
}

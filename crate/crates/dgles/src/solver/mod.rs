//! Semi-discrete LDG residual.
//!
//! One evaluation runs five phases, each data-parallel with race-free
//! writes: (1) face pass for the centered auxiliary trace integrals, (2)
//! per-element gather of the auxiliary gradient field G, (3) per-element
//! volume pass (primitives, subgrid coefficient refresh, volume flux and
//! source integrals), (4) face pass for the Rusanov total-flux integrals
//! with weak wall ghosts, (5) per-element residual gather. Faces write only
//! their own buffers; elements read them back in a fixed order, so results
//! are bitwise reproducible.

pub mod flux;

use crate::basis::Basis;
use crate::fields::{
    evaluate_nodes, favre_ratio, filter_scales, FilterScales, ModalField, N_CONS, N_GRAD,
};
use crate::gas::{
    molecular_fluxes, primitives_from_conserved, viscosity, GasParameters, PrimitiveState,
};
use crate::mesh::{ChannelMesh, FaceKind, FaceSide};
use crate::sgs::{
    anisotropic, smagorinsky, AnisotropicConfig, DynWorkspace, ElemCoeffs, SgsFluxes,
    SgsModelKind, SgsNodeInput, SmagorinskyConfig,
};
use crate::{Error, Result};
use flux::{max_signal_speed, total_flux, wall_ghost, FluxNode};
use rayon::prelude::*;

/// Subgrid model selection with both closure configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: SgsModelKind,
    pub smagorinsky: SmagorinskyConfig,
    pub anisotropic: AnisotropicConfig,
}

impl ModelConfig {
    pub fn none() -> Self {
        ModelConfig {
            kind: SgsModelKind::None,
            smagorinsky: SmagorinskyConfig::default(),
            anisotropic: AnisotropicConfig::default(),
        }
    }
}

/// Mutable model state carried across stages and steps.
#[derive(Debug, Clone)]
pub struct SgsRuntime {
    /// Element-averaged dynamic coefficients (anisotropic model).
    pub coeffs: Vec<ElemCoeffs>,
    /// One-stage-lagged element mean of the modeled tau_kk, used in every
    /// primitive recovery (volume nodes and face traces alike).
    pub tau_kk_mean: Vec<f64>,
    /// Effective subgrid kinematic diffusivity per element (time-step bound).
    pub sgs_diff: Vec<f64>,
    /// Friction-velocity estimate feeding the Van Driest damping.
    pub u_tau: f64,
    /// Fraction of volume nodes with beta < 1 in the last evaluation.
    pub beta_frac: f64,
    /// Fraction of dynamic coefficient components switched off.
    pub zeroed_frac: f64,
    /// Set when coefficients were refreshed at least once this step.
    pub coeffs_fresh: bool,
}

impl SgsRuntime {
    pub fn new(n_elems: usize) -> Self {
        SgsRuntime {
            coeffs: vec![ElemCoeffs::default(); n_elems],
            tau_kk_mean: vec![0.0; n_elems],
            sgs_diff: vec![0.0; n_elems],
            u_tau: 0.0,
            beta_frac: 0.0,
            zeroed_frac: 0.0,
            coeffs_fresh: false,
        }
    }
}

/// Immutable spatial discretization: mesh, basis, model and face metadata.
pub struct Discretization {
    pub basis: Basis,
    pub mesh: ChannelMesh,
    pub qhat: usize,
    pub params: GasParameters,
    pub model: ModelConfig,
    pub t_wall: f64,
    pub scales: FilterScales,
    /// Wall distance at volume nodes, `[e * nn + n]`.
    pub wall_dist: Vec<f64>,
    /// Wall distance at face nodes, `[face * nfn + fn]`.
    pub face_wall_dist: Vec<f64>,
    /// The four (face, side) slots of every element.
    pub elem_faces: Vec<[(u32, u8); 4]>,
    pub n_nodes: usize,
    pub n_fnodes: usize,
}

/// Reusable buffers for one residual evaluation.
#[derive(Debug, Default)]
pub struct Workspace {
    /// Auxiliary gradient field (12 vars).
    pub g: ModalField,
    /// Volume + source integrals per element, `[e][5][nm]`.
    vol_res: Vec<f64>,
    /// Auxiliary-trace face integrals, `[face][side][12][nm]`.
    g_face: Vec<f64>,
    /// Total-flux face integrals, `[face][side][5][nm]`.
    f_face: Vec<f64>,
}

struct ElemScratch {
    grad_phys: Vec<f64>,
    rho: Vec<f64>,
    u: [Vec<f64>; 3],
    t: Vec<f64>,
    p: Vec<f64>,
    rho_e: Vec<f64>,
    mu: Vec<f64>,
    gu: Vec<[[f64; 3]; 3]>,
    gt: Vec<[f64; 3]>,
    val: Vec<f64>,
    dyn_ws: DynWorkspace,
}

impl ElemScratch {
    fn new(nn: usize, nm: usize) -> Self {
        ElemScratch {
            grad_phys: vec![0.0; nn * nm * 3],
            rho: vec![0.0; nn],
            u: [vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]],
            t: vec![0.0; nn],
            p: vec![0.0; nn],
            rho_e: vec![0.0; nn],
            mu: vec![0.0; nn],
            gu: vec![[[0.0; 3]; 3]; nn],
            gt: vec![[0.0; 3]; nn],
            val: vec![0.0; nn],
            dyn_ws: DynWorkspace::new(),
        }
    }
}

struct FaceScratch {
    /// Conserved traces, `[side][5][fn]`.
    u_tr: Vec<f64>,
    /// Gradient traces, `[side][12][fn]`.
    g_tr: Vec<f64>,
}

impl FaceScratch {
    fn new(nfn: usize) -> Self {
        FaceScratch {
            u_tr: vec![0.0; 2 * N_CONS * nfn],
            g_tr: vec![0.0; 2 * N_GRAD * nfn],
        }
    }
}

/// Per-element outputs of the volume pass.
#[derive(Clone, Copy, Default)]
struct ElemOut {
    coeffs: ElemCoeffs,
    tau_kk_mean: f64,
    sgs_diff: f64,
    beta_nodes: u32,
}

impl Discretization {
    pub fn new(
        mesh: ChannelMesh,
        basis: Basis,
        qhat: usize,
        params: GasParameters,
        model: ModelConfig,
    ) -> Result<Self> {
        if qhat >= basis.q {
            return Err(Error::invalid(format!(
                "test-filter degree {} must be < q = {}",
                qhat, basis.q
            )));
        }
        params.validate()?;
        let scales = filter_scales(&mesh, basis.n_modes, basis.n_modes_up_to(qhat));
        let wall_dist = mesh.node_wall_distances(&basis);
        let n_nodes = basis.quad.nodes.len();
        let n_fnodes = basis.face_quad.nodes.len();

        let mut face_wall_dist = vec![0.0; mesh.faces.len() * n_fnodes];
        for (fi, f) in mesh.faces.iter().enumerate() {
            let pos = face_node_positions(&mesh, &basis, &f.left);
            for (k, p) in pos.iter().enumerate() {
                face_wall_dist[fi * n_fnodes + k] = if mesh.spec.periodic_y {
                    f64::INFINITY
                } else {
                    1.0 - p[1].abs()
                };
            }
        }

        let mut elem_faces = vec![[(u32::MAX, 0u8); 4]; mesh.tets.len()];
        let mut slot = vec![0usize; mesh.tets.len()];
        for (fi, f) in mesh.faces.iter().enumerate() {
            let mut push = |tet: usize, side: u8| {
                elem_faces[tet][slot[tet]] = (fi as u32, side);
                slot[tet] += 1;
            };
            push(f.left.tet, 0);
            if let Some(r) = f.right {
                push(r.tet, 1);
            }
        }
        debug_assert!(slot.iter().all(|&s| s == 4));

        Ok(Discretization {
            basis,
            mesh,
            qhat,
            params,
            model,
            t_wall: 1.0,
            scales,
            wall_dist,
            face_wall_dist,
            elem_faces,
            n_nodes,
            n_fnodes,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.tets.len()
    }

    pub(crate) fn side_table(&self, side: &FaceSide) -> usize {
        side.local_face as usize * 6 + side.perm as usize
    }

    /// Trace of one variable's modal coefficients on a face side.
    pub(crate) fn eval_trace(&self, table: usize, coeffs: &[f64], out: &mut [f64]) {
        let nm = self.basis.n_modes;
        let tb = &self.basis.face_tables[table];
        for (k, o) in out.iter_mut().enumerate() {
            *o = tb[k * nm..(k + 1) * nm]
                .iter()
                .zip(coeffs)
                .map(|(p, c)| p * c)
                .sum();
        }
    }

    /// Exact integrals of the conserved variables over the domain.
    pub fn integrals(&self, u: &ModalField) -> [f64; N_CONS] {
        // Only the constant mode contributes: int_K psi_0 dV = det * phi0/6.
        let phi0 = self.basis.phi[0];
        let vref = 1.0 / 6.0;
        let mut out = [0.0; N_CONS];
        for e in 0..self.n_elements() {
            let det = self.mesh.geom[e].det;
            for (v, o) in out.iter_mut().enumerate() {
                *o += det * u.coeffs(e, v)[0] * phi0 * vref;
            }
        }
        out
    }

    /// Instantaneous flow rate Q = int rho u_x dV / Lx.
    pub fn flow_rate(&self, u: &ModalField) -> f64 {
        self.integrals(u)[1] / self.mesh.spec.lx
    }

    /// Instantaneous wall-averaged shear stress and wall density from
    /// one-sided modal evaluation on the wall faces. The sign convention
    /// makes the returned stress positive for forward flow.
    pub fn wall_shear(&self, u: &ModalField) -> Result<(f64, f64)> {
        let nm = self.basis.n_modes;
        let nfn = self.n_fnodes;
        let mut tau_sum = 0.0;
        let mut rho_sum = 0.0;
        let mut area_sum = 0.0;
        let mut val = vec![0.0; nfn];
        let mut val_ru = vec![0.0; nfn];
        for f in &self.mesh.faces {
            let sign = match f.kind {
                FaceKind::WallBottom => 1.0,
                FaceKind::WallTop => -1.0,
                _ => continue,
            };
            let e = f.left.tet;
            let table = self.side_table(&f.left);
            let gtb = &self.basis.face_grad_tables[table];
            let ijt = &self.mesh.geom[e].inv_jac_t;
            self.eval_trace(table, u.coeffs(e, 0), &mut val);
            self.eval_trace(table, u.coeffs(e, 1), &mut val_ru);
            for k in 0..nfn {
                let rho = val[k];
                if !(rho > 0.0) {
                    return Err(Error::PositivityViolation {
                        element: e,
                        quantity: "wall density",
                        value: rho,
                    });
                }
                // y-derivatives of the modal polynomials rho and rho*u.
                let mut d_rho = 0.0;
                let mut d_ru = 0.0;
                for m in 0..nm {
                    let g = &gtb[(k * nm + m) * 3..(k * nm + m) * 3 + 3];
                    let gy = ijt[1][0] * g[0] + ijt[1][1] * g[1] + ijt[1][2] * g[2];
                    d_rho += u.coeffs(e, 0)[m] * gy;
                    d_ru += u.coeffs(e, 1)[m] * gy;
                }
                let u_x = val_ru[k] / rho;
                let dudy = (d_ru - u_x * d_rho) / rho;
                let mu_w = viscosity(self.t_wall, self.params.alpha);
                let w = self.basis.face_quad.weights[k] * 2.0 * f.area;
                tau_sum += w * mu_w * dudy * sign;
                rho_sum += w * rho;
                area_sum += w;
            }
        }
        if area_sum == 0.0 {
            return Err(Error::NotReady("mesh has no wall faces".into()));
        }
        Ok((tau_sum / area_sum, rho_sum / area_sum))
    }

    /// Solve the auxiliary LDG system for G = grad [u, T] into `ws.g`.
    pub fn solve_auxiliary_gradients(
        &self,
        u: &ModalField,
        rt: &SgsRuntime,
        ws: &mut Workspace,
    ) -> Result<()> {
        let nm = self.basis.n_modes;
        let nn = self.n_nodes;
        let nfn = self.n_fnodes;
        let ne = self.n_elements();
        if ws.g.n_elems != ne || ws.g.n_modes != nm {
            ws.g = ModalField::zeros(ne, N_GRAD, nm);
        }
        ws.g_face.resize(self.mesh.faces.len() * 2 * N_GRAD * nm, 0.0);
        ws.g_face.fill(0.0);

        let face_results: Vec<Result<()>> = ws
            .g_face
            .par_chunks_mut(2 * N_GRAD * nm)
            .enumerate()
            .map_init(
                || FaceScratch::new(nfn),
                |sc, (fi, out)| self.g_face_pass(u, rt, fi, sc, out),
            )
            .collect();
        for r in face_results {
            r?;
        }

        let g_face = std::mem::take(&mut ws.g_face);
        let results: Vec<Result<()>> = ws
            .g
            .data
            .par_chunks_mut(N_GRAD * nm)
            .enumerate()
            .map_init(
                || ElemScratch::new(nn, nm),
                |sc, (e, g_out)| self.g_volume_pass(u, rt, e, sc, &g_face, g_out),
            )
            .collect();
        ws.g_face = g_face;
        for r in results {
            r?;
        }
        Ok(())
    }

    /// Centered trace integrals of phi = [u1,u2,u3,T] for one face.
    fn g_face_pass(
        &self,
        u: &ModalField,
        rt: &SgsRuntime,
        fi: usize,
        sc: &mut FaceScratch,
        out: &mut [f64],
    ) -> Result<()> {
        let nm = self.basis.n_modes;
        let nfn = self.n_fnodes;
        let face = &self.mesh.faces[fi];
        let sides = [Some(face.left), face.right];
        // phi_hat values at face nodes, [4][fn].
        let mut phi_hat = [[0.0; 64]; 4];
        assert!(nfn <= 64);

        match face.kind {
            FaceKind::WallBottom | FaceKind::WallTop => {
                for k in 0..nfn {
                    phi_hat[3][k] = self.t_wall;
                }
            }
            _ => {
                for (s, side) in sides.iter().enumerate() {
                    let side = side.as_ref().expect("two-sided face");
                    let table = self.side_table(side);
                    for v in 0..N_CONS {
                        let off = (s * N_CONS + v) * nfn;
                        self.eval_trace(table, u.coeffs(side.tet, v), &mut sc.u_tr[off..off + nfn]);
                    }
                }
                for k in 0..nfn {
                    let mut avg = [0.0; 4];
                    for (s, side) in sides.iter().enumerate() {
                        let side = side.as_ref().unwrap();
                        let base = s * N_CONS * nfn;
                        let cons = [
                            sc.u_tr[base + k],
                            sc.u_tr[base + nfn + k],
                            sc.u_tr[base + 2 * nfn + k],
                            sc.u_tr[base + 3 * nfn + k],
                            sc.u_tr[base + 4 * nfn + k],
                        ];
                        let prim = primitives_from_conserved(
                            &cons,
                            rt.tau_kk_mean[side.tet],
                            &self.params,
                            side.tet,
                        )?;
                        for i in 0..3 {
                            avg[i] += 0.5 * prim.u[i];
                        }
                        avg[3] += 0.5 * prim.t;
                    }
                    for v in 0..4 {
                        phi_hat[v][k] = avg[v];
                    }
                }
            }
        }

        for (s, side) in sides.iter().enumerate() {
            let Some(side) = side else { continue };
            let table = &self.basis.face_tables[self.side_table(side)];
            let nsign = if s == 0 { 1.0 } else { -1.0 };
            for k in 0..nfn {
                let w = self.basis.face_quad.weights[k] * 2.0 * face.area;
                for v in 0..4 {
                    let ph = phi_hat[v][k] * w;
                    if ph == 0.0 {
                        continue;
                    }
                    for d in 0..3 {
                        let phnd = ph * nsign * face.normal[d];
                        let gv = v * 3 + d;
                        let dst = &mut out[(s * N_GRAD + gv) * nm..(s * N_GRAD + gv) * nm + nm];
                        for (m, o) in dst.iter_mut().enumerate() {
                            *o += phnd * table[k * nm + m];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn g_volume_pass(
        &self,
        u: &ModalField,
        rt: &SgsRuntime,
        e: usize,
        sc: &mut ElemScratch,
        g_face: &[f64],
        g_out: &mut [f64],
    ) -> Result<()> {
        let nm = self.basis.n_modes;
        let nn = self.n_nodes;
        let geo = &self.mesh.geom[e];
        self.fill_grad_phys(e, &mut sc.grad_phys);

        evaluate_nodes(&self.basis, u.coeffs(e, 0), nm, &mut sc.rho);
        for i in 0..3 {
            evaluate_nodes(&self.basis, u.coeffs(e, 1 + i), nm, &mut sc.val);
            favre_ratio(&sc.val, &sc.rho, &mut sc.u[i], e)?;
        }
        evaluate_nodes(&self.basis, u.coeffs(e, 4), nm, &mut sc.rho_e);
        let tau_kk = rt.tau_kk_mean[e];
        for n in 0..nn {
            let cons = [
                sc.rho[n],
                sc.rho[n] * sc.u[0][n],
                sc.rho[n] * sc.u[1][n],
                sc.rho[n] * sc.u[2][n],
                sc.rho_e[n],
            ];
            sc.t[n] = primitives_from_conserved(&cons, tau_kk, &self.params, e)?.t;
        }

        g_out.fill(0.0);
        for v in 0..4 {
            let phi_nodes: &[f64] = if v < 3 { &sc.u[v] } else { &sc.t };
            for n in 0..nn {
                let w = self.basis.quad.weights[n] * geo.det * phi_nodes[n];
                let gp = &sc.grad_phys[n * nm * 3..(n + 1) * nm * 3];
                for d in 0..3 {
                    let dst = &mut g_out[(v * 3 + d) * nm..(v * 3 + d) * nm + nm];
                    for (m, o) in dst.iter_mut().enumerate() {
                        *o -= w * gp[m * 3 + d];
                    }
                }
            }
        }
        for (fi, side) in self.elem_faces[e] {
            let base = ((fi as usize * 2) + side as usize) * N_GRAD * nm;
            for (o, f) in g_out.iter_mut().zip(&g_face[base..base + N_GRAD * nm]) {
                *o += f;
            }
        }
        for o in g_out.iter_mut() {
            *o /= geo.det;
        }
        Ok(())
    }

    /// Physical basis gradients at volume nodes for element `e`.
    fn fill_grad_phys(&self, e: usize, out: &mut [f64]) {
        let nm = self.basis.n_modes;
        let nn = self.n_nodes;
        let ijt = &self.mesh.geom[e].inv_jac_t;
        for n in 0..nn {
            for m in 0..nm {
                let g = &self.basis.grad_phi[(n * nm + m) * 3..(n * nm + m) * 3 + 3];
                let dst = &mut out[(n * nm + m) * 3..(n * nm + m) * 3 + 3];
                for r in 0..3 {
                    dst[r] = ijt[r][0] * g[0] + ijt[r][1] * g[1] + ijt[r][2] * g[2];
                }
            }
        }
    }

    pub(crate) fn eval_sgs(&self, coeffs: &ElemCoeffs, input: &SgsNodeInput) -> SgsFluxes {
        match self.model.kind {
            SgsModelKind::None => SgsFluxes::zero(),
            SgsModelKind::Smagorinsky => smagorinsky::evaluate(
                input,
                &self.model.smagorinsky,
                self.params.re,
                self.params.pr,
            ),
            SgsModelKind::Anisotropic => anisotropic::evaluate(input, coeffs, self.params.re),
        }
    }

    fn y_plus(&self, rt: &SgsRuntime, dist: f64) -> f64 {
        if dist.is_infinite() {
            f64::INFINITY
        } else {
            self.params.re * rt.u_tau * dist
        }
    }

    /// Semi-discrete right-hand side dU/dt. `forcing` is the streamwise body
    /// force (frozen within a step); subgrid coefficients are refreshed here
    /// according to the model's update policy.
    pub fn residual(
        &self,
        u: &ModalField,
        forcing: f64,
        rt: &mut SgsRuntime,
        ws: &mut Workspace,
        out: &mut ModalField,
    ) -> Result<()> {
        let nm = self.basis.n_modes;
        let nn = self.n_nodes;
        let ne = self.n_elements();
        let nfn = self.n_fnodes;
        assert_eq!(u.n_vars, N_CONS);
        if out.n_elems != ne || out.n_modes != nm || out.n_vars != N_CONS {
            *out = ModalField::zeros(ne, N_CONS, nm);
        }
        ws.vol_res.resize(ne * N_CONS * nm, 0.0);
        ws.f_face.resize(self.mesh.faces.len() * 2 * N_CONS * nm, 0.0);
        ws.f_face.fill(0.0);

        self.solve_auxiliary_gradients(u, rt, ws)?;

        let refresh = self.model.kind == SgsModelKind::Anisotropic
            && (self.model.anisotropic.update_every_stage || !rt.coeffs_fresh);

        // Volume pass: reads the lagged tau_kk means, produces the refreshed
        // coefficients and the next means.
        let g_field = std::mem::take(&mut ws.g);
        let rt_snapshot: &SgsRuntime = rt;
        let outs: Vec<Result<(ElemOut, ())>> = {
            let rt_read = &*rt_snapshot;
            ws.vol_res
                .par_chunks_mut(N_CONS * nm)
                .enumerate()
                .map_init(
                    || ElemScratch::new(nn, nm),
                    |sc, (e, vol)| {
                        let prev = if refresh { None } else { Some(rt_read.coeffs[e]) };
                        self.volume_pass(u, &g_field, rt_read, forcing, e, sc, vol, prev)
                            .map(|o| (o, ()))
                    },
                )
                .collect()
        };
        let mut beta_nodes = 0u64;
        let mut zeroed = 0u64;
        for (e, r) in outs.into_iter().enumerate() {
            let (o, _) = r?;
            rt.coeffs[e] = o.coeffs;
            rt.sgs_diff[e] = o.sgs_diff;
            rt.tau_kk_mean[e] = o.tau_kk_mean;
            beta_nodes += o.beta_nodes as u64;
            zeroed += o.coeffs.zeroed as u64;
        }
        rt.beta_frac = beta_nodes as f64 / (ne * nn) as f64;
        rt.zeroed_frac = zeroed as f64 / (ne * 12) as f64;
        rt.coeffs_fresh = true;

        // Face flux pass uses the refreshed coefficients and means.
        let rt_ref = &*rt;
        let face_results: Vec<Result<()>> = ws
            .f_face
            .par_chunks_mut(2 * N_CONS * nm)
            .enumerate()
            .map_init(
                || FaceScratch::new(nfn),
                |sc, (fi, fout)| self.flux_face_pass(u, &g_field, rt_ref, fi, sc, fout),
            )
            .collect();
        ws.g = g_field;
        for r in face_results {
            r?;
        }

        // Residual gather.
        let vol_res = &ws.vol_res;
        let f_face = &ws.f_face;
        let results: Vec<Result<()>> = out
            .data
            .par_chunks_mut(N_CONS * nm)
            .enumerate()
            .map(|(e, res)| {
                let det = self.mesh.geom[e].det;
                res.copy_from_slice(&vol_res[e * N_CONS * nm..(e + 1) * N_CONS * nm]);
                for (fi, side) in self.elem_faces[e] {
                    let base = ((fi as usize * 2) + side as usize) * N_CONS * nm;
                    for (o, f) in res.iter_mut().zip(&f_face[base..base + N_CONS * nm]) {
                        *o -= f;
                    }
                }
                for o in res.iter_mut() {
                    *o /= det;
                    if !o.is_finite() {
                        return Err(Error::NumericalBlowup { element: e });
                    }
                }
                Ok(())
            })
            .collect();
        for r in results {
            r?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn volume_pass(
        &self,
        u: &ModalField,
        g_field: &ModalField,
        rt: &SgsRuntime,
        forcing: f64,
        e: usize,
        sc: &mut ElemScratch,
        vol: &mut [f64],
        prev_coeffs: Option<ElemCoeffs>,
    ) -> Result<ElemOut> {
        let nm = self.basis.n_modes;
        let nn = self.n_nodes;
        let geo = &self.mesh.geom[e];
        let gm2 = self.params.gm2();
        self.fill_grad_phys(e, &mut sc.grad_phys);

        evaluate_nodes(&self.basis, u.coeffs(e, 0), nm, &mut sc.rho);
        for i in 0..3 {
            evaluate_nodes(&self.basis, u.coeffs(e, 1 + i), nm, &mut sc.val);
            favre_ratio(&sc.val, &sc.rho, &mut sc.u[i], e)?;
        }
        evaluate_nodes(&self.basis, u.coeffs(e, 4), nm, &mut sc.rho_e);
        let tau_kk_lag = rt.tau_kk_mean[e];
        let mut lambda_max: f64 = 0.0;
        for n in 0..nn {
            let cons = [
                sc.rho[n],
                sc.rho[n] * sc.u[0][n],
                sc.rho[n] * sc.u[1][n],
                sc.rho[n] * sc.u[2][n],
                sc.rho_e[n],
            ];
            let prim = primitives_from_conserved(&cons, tau_kk_lag, &self.params, e)?;
            sc.t[n] = prim.t;
            sc.p[n] = prim.p;
            sc.mu[n] = viscosity(prim.t, self.params.alpha);
            let umag =
                (prim.u[0] * prim.u[0] + prim.u[1] * prim.u[1] + prim.u[2] * prim.u[2]).sqrt();
            lambda_max = lambda_max.max(umag + prim.t.sqrt() / self.params.ma);
        }

        for i in 0..3 {
            for d in 0..3 {
                evaluate_nodes(&self.basis, g_field.coeffs(e, i * 3 + d), nm, &mut sc.val);
                for n in 0..nn {
                    sc.gu[n][i][d] = sc.val[n];
                }
            }
        }
        for d in 0..3 {
            evaluate_nodes(&self.basis, g_field.coeffs(e, 9 + d), nm, &mut sc.val);
            for n in 0..nn {
                sc.gt[n][d] = sc.val[n];
            }
        }

        let coeffs = if let Some(c) = prev_coeffs {
            c
        } else if self.model.kind == SgsModelKind::Anisotropic {
            let data = anisotropic::ElementNodeData {
                rho: &sc.rho,
                u: [&sc.u[0], &sc.u[1], &sc.u[2]],
                t: &sc.t,
                grad_u: &sc.gu,
                grad_t: &sc.gt,
            };
            // Explicit-diffusion budget of this element at the convective
            // CFL: nu <= h lambda / (2q+1).
            let frac = self.model.anisotropic.nu_cap_fraction;
            let nu_cap = if frac > 0.0 {
                frac * geo.h_min * lambda_max / (2.0 * self.basis.q as f64 + 1.0)
            } else {
                f64::INFINITY
            };
            anisotropic::dynamic_element(
                &self.basis,
                self.qhat,
                &data,
                &geo.inv_jac_t,
                self.scales.delta[e],
                self.scales.delta_hat[e],
                &self.model.anisotropic,
                nu_cap,
                e,
                &mut sc.dyn_ws,
            )?
        } else {
            ElemCoeffs::default()
        };

        vol.fill(0.0);
        let mut tau_kk_sum = 0.0;
        let mut w_sum = 0.0;
        let mut sgs_diff: f64 = 0.0;
        let mut beta_nodes = 0u32;
        let delta = self.scales.delta[e];
        let kappa = self.params.kappa();
        for n in 0..nn {
            let (sigma, q_mol) = molecular_fluxes(&sc.gu[n], &sc.gt[n], sc.mu[n]);
            let input = SgsNodeInput {
                rho: sc.rho[n],
                u: [sc.u[0][n], sc.u[1][n], sc.u[2][n]],
                t: sc.t[n],
                grad_u: &sc.gu[n],
                grad_t: &sc.gt[n],
                sigma: &sigma,
                y_plus: self.y_plus(rt, self.wall_dist[e * nn + n]),
                delta,
            };
            let sgs = self.eval_sgs(&coeffs, &input);
            if sgs.beta < 1.0 {
                beta_nodes += 1;
            }
            let w = self.basis.quad.weights[n];
            tau_kk_sum += w * sgs.tau_kk;
            w_sum += w;
            sgs_diff = sgs_diff.max(self.sgs_diffusivity(&coeffs, &input, &sgs));

            let prim = PrimitiveState {
                rho: sc.rho[n],
                u: input.u,
                t: sc.t[n],
                p: sc.p[n],
                e_i: (1.0 - kappa) / kappa * sc.t[n],
            };
            let node = FluxNode {
                prim,
                rho_e: sc.rho_e[n],
                mu: sc.mu[n],
                sigma: &sigma,
                q_mol: &q_mol,
                sgs: &sgs,
            };
            let f = total_flux(&node, &self.params);

            let wdet = w * geo.det;
            let gp = &sc.grad_phys[n * nm * 3..(n + 1) * nm * 3];
            for v in 0..N_CONS {
                let dst = &mut vol[v * nm..(v + 1) * nm];
                let (f0, f1, f2) = (f[v][0] * wdet, f[v][1] * wdet, f[v][2] * wdet);
                for (m, o) in dst.iter_mut().enumerate() {
                    *o += f0 * gp[m * 3] + f1 * gp[m * 3 + 1] + f2 * gp[m * 3 + 2];
                }
            }
            if forcing != 0.0 {
                let s1 = sc.rho[n] * forcing * wdet;
                let s4 = gm2 * sc.rho[n] * forcing * sc.u[0][n] * wdet;
                let phi = &self.basis.phi[n * nm..(n + 1) * nm];
                for m in 0..nm {
                    vol[nm + m] += s1 * phi[m];
                    vol[4 * nm + m] += s4 * phi[m];
                }
            }
        }

        Ok(ElemOut {
            coeffs,
            tau_kk_mean: tau_kk_sum / w_sum,
            sgs_diff,
            beta_nodes,
        })
    }

    /// Effective subgrid kinematic diffusivity entering the viscous
    /// time-step restriction.
    fn sgs_diffusivity(&self, coeffs: &ElemCoeffs, input: &SgsNodeInput, sgs: &SgsFluxes) -> f64 {
        match self.model.kind {
            SgsModelKind::None => 0.0,
            SgsModelKind::Smagorinsky => {
                let s = crate::gas::strain_rate(input.grad_u);
                let sn = crate::gas::strain_norm(&s);
                self.model.smagorinsky.c_s * self.model.smagorinsky.c_s
                    * input.delta
                    * input.delta
                    * sn
            }
            SgsModelKind::Anisotropic => {
                let s = crate::gas::strain_rate(input.grad_u);
                let sn = crate::gas::strain_norm(&s);
                let cmax = coeffs
                    .c
                    .iter()
                    .flatten()
                    .fold(0.0f64, |a, &b| a.max(b.abs()));
                sgs.beta * input.delta * input.delta * sn * cmax
            }
        }
    }

    /// Rusanov total-flux integrals for one face (both sides).
    fn flux_face_pass(
        &self,
        u: &ModalField,
        g_field: &ModalField,
        rt: &SgsRuntime,
        fi: usize,
        sc: &mut FaceScratch,
        out: &mut [f64],
    ) -> Result<()> {
        let nm = self.basis.n_modes;
        let nfn = self.n_fnodes;
        let face = &self.mesh.faces[fi];
        let wallish = matches!(face.kind, FaceKind::WallBottom | FaceKind::WallTop);
        let sides: [Option<FaceSide>; 2] = [Some(face.left), face.right];

        for (s, side) in sides.iter().enumerate() {
            let Some(side) = side else { continue };
            let table = self.side_table(side);
            for v in 0..N_CONS {
                let off = (s * N_CONS + v) * nfn;
                self.eval_trace(table, u.coeffs(side.tet, v), &mut sc.u_tr[off..off + nfn]);
            }
            for gv in 0..N_GRAD {
                let off = (s * N_GRAD + gv) * nfn;
                self.eval_trace(
                    table,
                    g_field.coeffs(side.tet, gv),
                    &mut sc.g_tr[off..off + nfn],
                );
            }
        }

        for k in 0..nfn {
            let le = face.left.tet;
            let get_cons = |s: usize| -> [f64; 5] {
                let base = s * N_CONS * nfn;
                [
                    sc.u_tr[base + k],
                    sc.u_tr[base + nfn + k],
                    sc.u_tr[base + 2 * nfn + k],
                    sc.u_tr[base + 3 * nfn + k],
                    sc.u_tr[base + 4 * nfn + k],
                ]
            };
            let get_grads = |s: usize| -> ([[f64; 3]; 3], [f64; 3]) {
                let base = s * N_GRAD * nfn;
                let mut gu = [[0.0; 3]; 3];
                for i in 0..3 {
                    for d in 0..3 {
                        gu[i][d] = sc.g_tr[base + (i * 3 + d) * nfn + k];
                    }
                }
                let gt = [
                    sc.g_tr[base + 9 * nfn + k],
                    sc.g_tr[base + 10 * nfn + k],
                    sc.g_tr[base + 11 * nfn + k],
                ];
                (gu, gt)
            };

            let cons_l = get_cons(0);
            let prim_l = primitives_from_conserved(&cons_l, rt.tau_kk_mean[le], &self.params, le)?;
            let (gu_l, gt_l) = get_grads(0);
            let mu_l = viscosity(prim_l.t, self.params.alpha);
            let (sigma_l, qm_l) = molecular_fluxes(&gu_l, &gt_l, mu_l);
            let dist = self.face_wall_dist[fi * nfn + k];
            let input_l = SgsNodeInput {
                rho: prim_l.rho,
                u: prim_l.u,
                t: prim_l.t,
                grad_u: &gu_l,
                grad_t: &gt_l,
                sigma: &sigma_l,
                y_plus: self.y_plus(rt, dist),
                delta: self.scales.delta[le],
            };
            let sgs_l = self.eval_sgs(&rt.coeffs[le], &input_l);
            let node_l = FluxNode {
                prim: prim_l,
                rho_e: cons_l[4],
                mu: mu_l,
                sigma: &sigma_l,
                q_mol: &qm_l,
                sgs: &sgs_l,
            };
            let f_l = total_flux(&node_l, &self.params);

            let (cons_r, prim_r, f_r) = if wallish {
                let (prim_g, cons_g) =
                    wall_ghost(&prim_l, rt.tau_kk_mean[le], self.t_wall, &self.params, le)?;
                let node_g = FluxNode {
                    prim: prim_g,
                    rho_e: cons_g[4],
                    mu: viscosity(prim_g.t, self.params.alpha),
                    sigma: &sigma_l,
                    q_mol: &qm_l,
                    sgs: &sgs_l,
                };
                (cons_g, prim_g, total_flux(&node_g, &self.params))
            } else {
                let side_r = face.right.as_ref().unwrap();
                let re_ = side_r.tet;
                let cons_r = get_cons(1);
                let prim_r =
                    primitives_from_conserved(&cons_r, rt.tau_kk_mean[re_], &self.params, re_)?;
                let (gu_r, gt_r) = get_grads(1);
                let mu_r = viscosity(prim_r.t, self.params.alpha);
                let (sigma_r, qm_r) = molecular_fluxes(&gu_r, &gt_r, mu_r);
                let input_r = SgsNodeInput {
                    rho: prim_r.rho,
                    u: prim_r.u,
                    t: prim_r.t,
                    grad_u: &gu_r,
                    grad_t: &gt_r,
                    sigma: &sigma_r,
                    y_plus: self.y_plus(rt, dist),
                    delta: self.scales.delta[re_],
                };
                let sgs_r = self.eval_sgs(&rt.coeffs[re_], &input_r);
                let node_r = FluxNode {
                    prim: prim_r,
                    rho_e: cons_r[4],
                    mu: mu_r,
                    sigma: &sigma_r,
                    q_mol: &qm_r,
                    sgs: &sgs_r,
                };
                (cons_r, prim_r, total_flux(&node_r, &self.params))
            };

            let n = face.normal;
            let lambda = max_signal_speed(&prim_l, &prim_r, &n, self.params.ma);
            let mut fhat = [0.0; N_CONS];
            for v in 0..N_CONS {
                let fln: f64 = (0..3).map(|d| f_l[v][d] * n[d]).sum();
                let frn: f64 = (0..3).map(|d| f_r[v][d] * n[d]).sum();
                fhat[v] = flux::rusanov(fln, frn, cons_l[v], cons_r[v], lambda);
            }

            let w = self.basis.face_quad.weights[k] * 2.0 * face.area;
            for (s, side) in sides.iter().enumerate() {
                let Some(side) = side else { continue };
                let table = &self.basis.face_tables[self.side_table(side)];
                let nsign = if s == 0 { 1.0 } else { -1.0 };
                for v in 0..N_CONS {
                    let c = w * nsign * fhat[v];
                    let dst = &mut out[(s * N_CONS + v) * nm..(s * N_CONS + v) * nm + nm];
                    for (m, o) in dst.iter_mut().enumerate() {
                        *o += c * table[k * nm + m];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Positions of the canonical face quadrature nodes, seen from one side.
pub fn face_node_positions(mesh: &ChannelMesh, basis: &Basis, side: &FaceSide) -> Vec<[f64; 3]> {
    use crate::basis::{FACE_VERTS, PERMS3};
    let t = &mesh.tets[side.tet];
    let perm = PERMS3[side.perm as usize];
    basis
        .face_quad
        .nodes
        .iter()
        .map(|st| {
            let bary = [1.0 - st[0] - st[1], st[0], st[1]];
            let mut p = [0.0; 3];
            for (pos, b) in bary.iter().enumerate() {
                let v = mesh.vertices[t.verts[FACE_VERTS[side.local_face as usize][perm[pos]]]];
                for d in 0..3 {
                    p[d] += b * v[d];
                }
            }
            p
        })
        .collect()
}

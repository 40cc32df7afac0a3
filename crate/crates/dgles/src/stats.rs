//! Running space-time statistics on wall-parallel planes.
//!
//! Averages live on the element-face y = const planes of the hex grid.
//! Each |y| station combines the plane at -|y| and its mirror at +|y|; odd
//! quantities (v, rho u v, tau_12, ...) enter the mirror sum with a sign so
//! that a snapshot and its y-reflection produce identical accumulators.

use crate::fields::{ModalField, N_CONS, N_GRAD};
use crate::gas::{molecular_fluxes, primitives_from_conserved, viscosity};
use crate::solver::{Discretization, SgsRuntime, Workspace};
use crate::sgs::SgsNodeInput;
use crate::{Error, Result};
use std::io::Write;

/// Station quantity slots.
const Q_RHO: usize = 0;
const Q_U: usize = 1; // 1..4: u, v, w
const Q_T: usize = 4;
const Q_RUU: usize = 5; // 5..11: sym6 of rho u_i u_j
const Q_TAU: usize = 11; // 11..17: sym6 of modeled tau_ij
const Q_TAUKK: usize = 17;
const Q_RU: usize = 18; // 18..21: rho u_i
const Q_DVDY: usize = 21;
const N_QUANT: usize = 22;

const SYM6: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Parity under y-reflection (u -> u, v -> -v, w -> w).
fn parity(q: usize) -> f64 {
    match q {
        Q_U if false => 1.0,
        _ if q == Q_U + 1 => -1.0,                  // v
        _ if q == Q_RUU + 3 || q == Q_RUU + 5 => -1.0, // rho u v, rho v w
        _ if q == Q_TAU + 3 || q == Q_TAU + 5 => -1.0, // tau_12, tau_23
        _ if q == Q_RU + 1 => -1.0,                 // rho v
        _ => 1.0,
    }
}

/// Accumulated wall-parallel statistics and wall quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    /// |y| of each station, ascending (0 or centerline first, wall last).
    pub stations: Vec<f64>,
    /// Plane pair (lo index, hi index) per station.
    pairs: Vec<(usize, usize)>,
    /// Time-weighted accumulators, `[station][quantity]`.
    acc: Vec<f64>,
    /// Total time weight.
    pub t_weight: f64,
    /// Wall accumulators: mu_w du/dy (stress), wall density.
    wall_tau: f64,
    wall_rho: f64,
    /// Bulk accumulators: flow rate Q and mean density.
    bulk_q: f64,
    bulk_rho: f64,
}

/// Mean-flow wall and centerline quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table2Record {
    pub tau_w: f64,
    pub re_tau: f64,
    pub u_tau_over_ub: f64,
    pub rho_w_over_rho_b: f64,
    pub u_c_over_ub: f64,
    pub rho_c_over_rho_b: f64,
    pub rho_c_over_rho_w: f64,
    pub t_c_over_t_w: f64,
    pub dx_plus: f64,
    pub dy_plus_min: f64,
    pub dy_plus_max: f64,
    pub dz_plus: f64,
}

/// Derived station profiles.
#[derive(Debug, Clone)]
pub struct Profiles {
    pub y_abs: Vec<f64>,
    pub mean_rho: Vec<f64>,
    pub mean_u: Vec<[f64; 3]>,
    pub mean_t: Vec<f64>,
    pub rms: Vec<[f64; 3]>,
    /// Resolved + modeled turbulent kinetic energy density.
    pub tke_total: Vec<f64>,
    pub tke_resolved: Vec<f64>,
    /// Resolved + modeled wall-normal shear stress.
    pub shear_total: Vec<f64>,
    pub tau_kk: Vec<f64>,
    pub dvdy: Vec<f64>,
}

impl ChannelStatistics {
    pub fn new(disc: &Discretization) -> Self {
        let ny = disc.mesh.spec.ny;
        let mut stations = Vec::new();
        let mut pairs = Vec::new();
        // Station s pairs planes (s, ny - s); iterate from the centerline.
        let mut s_list: Vec<usize> = (0..=ny / 2).collect();
        s_list.reverse();
        for s in s_list {
            stations.push(-disc.mesh.y_planes[s]);
            pairs.push((s, ny - s));
        }
        let n = stations.len();
        ChannelStatistics {
            stations,
            pairs,
            acc: vec![0.0; n * N_QUANT],
            t_weight: 0.0,
            wall_tau: 0.0,
            wall_rho: 0.0,
            bulk_q: 0.0,
            bulk_rho: 0.0,
        }
    }

    /// Raw accumulator access for checkpointing.
    pub fn raw(&self) -> (Vec<f64>, [f64; 5]) {
        (
            self.acc.clone(),
            [
                self.t_weight,
                self.wall_tau,
                self.wall_rho,
                self.bulk_q,
                self.bulk_rho,
            ],
        )
    }

    pub fn restore_raw(&mut self, acc: Vec<f64>, scalars: [f64; 5]) -> Result<()> {
        if acc.len() != self.acc.len() {
            return Err(Error::Checkpoint(format!(
                "statistics shape mismatch: {} vs {}",
                acc.len(),
                self.acc.len()
            )));
        }
        self.acc = acc;
        self.t_weight = scalars[0];
        self.wall_tau = scalars[1];
        self.wall_rho = scalars[2];
        self.bulk_q = scalars[3];
        self.bulk_rho = scalars[4];
        Ok(())
    }

    /// Accumulate one snapshot with time weight `dt`. Gradients are taken
    /// from a fresh auxiliary solve so the modeled stresses are evaluated
    /// with the same node data the solver would use.
    pub fn accumulate(
        &mut self,
        disc: &Discretization,
        u: &ModalField,
        rt: &SgsRuntime,
        ws: &mut Workspace,
        dt: f64,
    ) -> Result<()> {
        disc.solve_auxiliary_gradients(u, rt, ws)?;
        let nfn = disc.n_fnodes;
        let area_norm = disc.mesh.spec.lx * disc.mesh.spec.lz;

        // Plane averages of all quantities.
        let n_planes = disc.mesh.y_planes.len();
        let mut plane = vec![0.0; n_planes * N_QUANT];
        let mut tr_u = vec![0.0; N_CONS * nfn];
        let mut tr_g = vec![0.0; N_GRAD * nfn];
        let mut node_q = [0.0; N_QUANT];
        for (p, faces) in disc.mesh.plane_faces.iter().enumerate() {
            for &fi in faces {
                let face = &disc.mesh.faces[fi];
                let sides = [Some(face.left), face.right];
                let n_sides = if face.right.is_some() { 2.0 } else { 1.0 };
                for side in sides.iter().flatten() {
                    let table = disc.side_table(side);
                    let e = side.tet;
                    for v in 0..N_CONS {
                        disc.eval_trace(table, u.coeffs(e, v), &mut tr_u[v * nfn..(v + 1) * nfn]);
                    }
                    for gv in 0..N_GRAD {
                        disc.eval_trace(
                            table,
                            ws.g.coeffs(e, gv),
                            &mut tr_g[gv * nfn..(gv + 1) * nfn],
                        );
                    }
                    for k in 0..nfn {
                        let cons = [
                            tr_u[k],
                            tr_u[nfn + k],
                            tr_u[2 * nfn + k],
                            tr_u[3 * nfn + k],
                            tr_u[4 * nfn + k],
                        ];
                        let prim = primitives_from_conserved(
                            &cons,
                            rt.tau_kk_mean[e],
                            &disc.params,
                            e,
                        )?;
                        let mut gu = [[0.0; 3]; 3];
                        for i in 0..3 {
                            for d in 0..3 {
                                gu[i][d] = tr_g[(i * 3 + d) * nfn + k];
                            }
                        }
                        let gt = [
                            tr_g[9 * nfn + k],
                            tr_g[10 * nfn + k],
                            tr_g[11 * nfn + k],
                        ];
                        let mu = viscosity(prim.t, disc.params.alpha);
                        let (sigma, _) = molecular_fluxes(&gu, &gt, mu);
                        let input = SgsNodeInput {
                            rho: prim.rho,
                            u: prim.u,
                            t: prim.t,
                            grad_u: &gu,
                            grad_t: &gt,
                            sigma: &sigma,
                            y_plus: if disc.face_wall_dist[fi * nfn + k].is_infinite() {
                                f64::INFINITY
                            } else {
                                disc.params.re * rt.u_tau * disc.face_wall_dist[fi * nfn + k]
                            },
                            delta: disc.scales.delta[e],
                        };
                        let sgs = disc.eval_sgs(&rt.coeffs[e], &input);

                        node_q[Q_RHO] = prim.rho;
                        for i in 0..3 {
                            node_q[Q_U + i] = prim.u[i];
                            node_q[Q_RU + i] = prim.rho * prim.u[i];
                        }
                        node_q[Q_T] = prim.t;
                        for (c, (i, j)) in SYM6.iter().enumerate() {
                            node_q[Q_RUU + c] = prim.rho * prim.u[*i] * prim.u[*j];
                            node_q[Q_TAU + c] = sgs.tau[*i][*j];
                        }
                        node_q[Q_TAUKK] = sgs.tau_kk;
                        node_q[Q_DVDY] = gu[1][1];

                        let w = disc.basis.face_quad.weights[k] * 2.0 * face.area
                            / (n_sides * area_norm);
                        for (q, v) in node_q.iter().enumerate() {
                            plane[p * N_QUANT + q] += w * v;
                        }
                    }
                }
            }
        }

        // Mirror-symmetrized station accumulation.
        for (s, &(lo, hi)) in self.pairs.iter().enumerate() {
            for q in 0..N_QUANT {
                let val = 0.5
                    * (plane[lo * N_QUANT + q] + parity(q) * plane[hi * N_QUANT + q]);
                self.acc[s * N_QUANT + q] += dt * val;
            }
        }

        if !disc.mesh.spec.periodic_y {
            let (tau_w, rho_w) = disc.wall_shear(u)?;
            self.wall_tau += dt * tau_w;
            self.wall_rho += dt * rho_w;
        }
        let ints = disc.integrals(u);
        self.bulk_q += dt * ints[1] / disc.mesh.spec.lx;
        self.bulk_rho += dt * ints[0] / disc.mesh.box_volume();
        self.t_weight += dt;
        Ok(())
    }

    fn mean(&self, s: usize, q: usize) -> f64 {
        self.acc[s * N_QUANT + q] / self.t_weight
    }

    /// Station profiles of means, rms fluctuations, turbulent energy and
    /// shear. Fails until at least one snapshot has been accumulated.
    pub fn derived_profiles(&self) -> Result<Profiles> {
        if self.t_weight <= 0.0 {
            return Err(Error::NotReady(
                "no statistics accumulated yet (t < t_st?)".into(),
            ));
        }
        let n = self.stations.len();
        let mut out = Profiles {
            y_abs: self.stations.clone(),
            mean_rho: vec![0.0; n],
            mean_u: vec![[0.0; 3]; n],
            mean_t: vec![0.0; n],
            rms: vec![[0.0; 3]; n],
            tke_total: vec![0.0; n],
            tke_resolved: vec![0.0; n],
            shear_total: vec![0.0; n],
            tau_kk: vec![0.0; n],
            dvdy: vec![0.0; n],
        };
        for s in 0..n {
            let rho = self.mean(s, Q_RHO);
            out.mean_rho[s] = rho;
            out.mean_t[s] = self.mean(s, Q_T);
            for i in 0..3 {
                out.mean_u[s][i] = self.mean(s, Q_U + i);
            }
            // Density-weighted fluctuations of the resolved velocities.
            let mut tke_res = 0.0;
            for i in 0..3 {
                let ruu = self.mean(s, Q_RUU + i); // diagonal slots 0..3
                let ru = self.mean(s, Q_RU + i);
                let var = (ruu / rho - (ru / rho) * (ru / rho)).max(0.0);
                out.rms[s][i] = var.sqrt();
                tke_res += 0.5 * (ruu - ru * ru / rho);
            }
            out.tke_resolved[s] = tke_res;
            out.tau_kk[s] = self.mean(s, Q_TAUKK);
            out.tke_total[s] = tke_res + 0.5 * self.mean(s, Q_TAUKK);
            let ruv = self.mean(s, Q_RUU + 3);
            let resolved_shear =
                ruv - self.mean(s, Q_RU) * self.mean(s, Q_RU + 1) / rho;
            out.shear_total[s] = resolved_shear + self.mean(s, Q_TAU + 3);
            out.dvdy[s] = self.mean(s, Q_DVDY);
        }
        Ok(out)
    }

    /// Mean wall shear stress (mu_w d<u>/dy at the wall) and wall density.
    pub fn wall_state(&self) -> Result<(f64, f64)> {
        if self.t_weight <= 0.0 {
            return Err(Error::NotReady("no statistics accumulated yet".into()));
        }
        Ok((self.wall_tau / self.t_weight, self.wall_rho / self.t_weight))
    }

    /// Mean-flow quantities of the benchmark record.
    pub fn wall_quantities(&self, disc: &Discretization) -> Result<Table2Record> {
        let (tau_w, rho_w) = self.wall_state()?;
        let profiles = self.derived_profiles()?;
        let re_b = disc.params.re;
        let mu_w = viscosity(disc.t_wall, disc.params.alpha);
        let dudy_w = tau_w / mu_w;
        let re_tau = (rho_w * re_b * dudy_w).max(0.0).sqrt();
        let u_tau = re_tau / (re_b * rho_w);
        let rho_b = self.bulk_rho / self.t_weight;
        let u_b = self.bulk_q / self.t_weight / (2.0 * disc.mesh.spec.lz);

        // Centerline = smallest |y| station (index 0 by construction).
        let c = 0usize;
        let u_c = profiles.mean_u[c][0];
        let rho_c = profiles.mean_rho[c];
        let t_c = profiles.mean_t[c];

        // Grid spacing in wall units, per-direction dof spacing.
        let nq_dof = (6.0 * disc.basis.n_modes as f64).cbrt();
        let spec = &disc.mesh.spec;
        let dx = spec.lx / (spec.nx as f64 * nq_dof);
        let dz = spec.lz / (spec.nz as f64 * nq_dof);
        let mut dy_min = f64::INFINITY;
        let mut dy_max: f64 = 0.0;
        for j in 0..spec.ny {
            let dy = disc.mesh.y_planes[j + 1] - disc.mesh.y_planes[j];
            dy_min = dy_min.min(dy);
            dy_max = dy_max.max(dy);
        }
        Ok(Table2Record {
            tau_w,
            re_tau,
            u_tau_over_ub: u_tau / u_b,
            rho_w_over_rho_b: rho_w / rho_b,
            u_c_over_ub: u_c / u_b,
            rho_c_over_rho_b: rho_c / rho_b,
            rho_c_over_rho_w: rho_c / rho_w,
            t_c_over_t_w: t_c / disc.t_wall,
            dx_plus: dx * re_tau,
            dy_plus_min: dy_min / nq_dof * re_tau,
            dy_plus_max: dy_max / nq_dof * re_tau,
            dz_plus: dz * re_tau,
        })
    }

    /// CSV profile export: one row per station, documented columns, with the
    /// nondimensionalization echoed in header comments.
    pub fn write_csv<W: Write>(&self, disc: &Discretization, mut w: W) -> Result<()> {
        let p = self.derived_profiles()?;
        writeln!(w, "# nondimensional channel statistics")?;
        writeln!(
            w,
            "# Ma = {}, Re_b = {}, Pr = {}, gamma = {}, alpha = {}",
            disc.params.ma, disc.params.re, disc.params.pr, disc.params.gamma, disc.params.alpha
        )?;
        writeln!(
            w,
            "# reference scales: rho_b, channel half height, U_b, T_w; t_av = {}",
            self.t_weight
        )?;
        writeln!(
            w,
            "y_abs,mean_rho,mean_u,mean_v,mean_w,mean_t,rms_u,rms_v,rms_w,tke_resolved,tke_total,shear_total,tau_kk_mean,dvdy"
        )?;
        for s in 0..p.y_abs.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.y_abs[s],
                p.mean_rho[s],
                p.mean_u[s][0],
                p.mean_u[s][1],
                p.mean_u[s][2],
                p.mean_t[s],
                p.rms[s][0],
                p.rms[s][1],
                p.rms[s][2],
                p.tke_resolved[s],
                p.tke_total[s],
                p.shear_total[s],
                p.tau_kk[s],
                p.dvdy[s],
            )?;
        }
        Ok(())
    }
}

impl Table2Record {
    /// Flat key=value block.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau_w = {}", self.tau_w)?;
        writeln!(w, "re_tau = {}", self.re_tau)?;
        writeln!(w, "u_tau_over_ub = {}", self.u_tau_over_ub)?;
        writeln!(w, "rho_w_over_rho_b = {}", self.rho_w_over_rho_b)?;
        writeln!(w, "u_c_over_ub = {}", self.u_c_over_ub)?;
        writeln!(w, "rho_c_over_rho_b = {}", self.rho_c_over_rho_b)?;
        writeln!(w, "rho_c_over_rho_w = {}", self.rho_c_over_rho_w)?;
        writeln!(w, "t_c_over_t_w = {}", self.t_c_over_t_w)?;
        writeln!(w, "dx_plus = {}", self.dx_plus)?;
        writeln!(w, "dy_plus_min = {}", self.dy_plus_min)?;
        writeln!(w, "dy_plus_max = {}", self.dy_plus_max)?;
        writeln!(w, "dz_plus = {}", self.dz_plus)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Table2Record> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let val: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad value in record: {line}")))?;
                map.insert(k.trim().to_string(), val);
            }
        }
        let get = |k: &str| -> Result<f64> {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Checkpoint(format!("missing key {k} in record")))
        };
        Ok(Table2Record {
            tau_w: get("tau_w")?,
            re_tau: get("re_tau")?,
            u_tau_over_ub: get("u_tau_over_ub")?,
            rho_w_over_rho_b: get("rho_w_over_rho_b")?,
            u_c_over_ub: get("u_c_over_ub")?,
            rho_c_over_rho_b: get("rho_c_over_rho_b")?,
            rho_c_over_rho_w: get("rho_c_over_rho_w")?,
            t_c_over_t_w: get("t_c_over_t_w")?,
            dx_plus: get("dx_plus")?,
            dy_plus_min: get("dy_plus_min")?,
            dy_plus_max: get("dy_plus_max")?,
            dz_plus: get("dz_plus")?,
        })
    }
}

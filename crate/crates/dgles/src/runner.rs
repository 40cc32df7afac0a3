//! Batch run driver: initial condition or restart, the time loop with the
//! forcing controller, statistics collection, logging and output artifacts.

use crate::basis::Basis;
use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::fields::{evaluate_nodes, ModalField};
use crate::init;
use crate::mesh::build_mesh;
use crate::solver::{Discretization, SgsRuntime, Workspace};
use crate::stats::{ChannelStatistics, Table2Record};
use crate::timestep::{
    advance_forcing_integral, compute_forcing, ssprk54_step, stable_dt, ForcingState,
    SsprkBuffers,
};
use crate::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Relaxation time of the running wall-shear average feeding Van Driest.
const U_TAU_EMA_TIME: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: u64,
    pub t: f64,
    pub flow_rate: f64,
    pub flow_rate_error: f64,
    pub forcing: f64,
    pub table2: Option<Table2Record>,
    pub output_dir: PathBuf,
}

/// Output directory, honoring the DGLES_OUTPUT_DIR override.
pub fn resolve_output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os("DGLES_OUTPUT_DIR") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone(),
    }
}

/// Build the spatial discretization for a configuration.
pub fn build_discretization(cfg: &RunConfig) -> Result<Discretization> {
    let mesh = build_mesh(&cfg.mesh)?;
    let basis = Basis::new(cfg.q)?;
    Discretization::new(mesh, basis, cfg.qhat, cfg.gas, cfg.model)
}

fn state_extrema(disc: &Discretization, u: &ModalField) -> (f64, f64, f64) {
    let nm = disc.basis.n_modes;
    let nn = disc.n_nodes;
    let mut min_rho = f64::INFINITY;
    let mut max_speed: f64 = 0.0;
    let mut min_rho_e = f64::INFINITY;
    let mut buf = vec![0.0; nn];
    let mut rho = vec![0.0; nn];
    for e in 0..disc.n_elements() {
        evaluate_nodes(&disc.basis, u.coeffs(e, 0), nm, &mut rho);
        for &r in &rho {
            min_rho = min_rho.min(r);
        }
        let mut speed2 = vec![0.0; nn];
        for i in 0..3 {
            evaluate_nodes(&disc.basis, u.coeffs(e, 1 + i), nm, &mut buf);
            for n in 0..nn {
                let v = buf[n] / rho[n];
                speed2[n] += v * v;
            }
        }
        for s in &speed2 {
            max_speed = max_speed.max(s.sqrt());
        }
        evaluate_nodes(&disc.basis, u.coeffs(e, 4), nm, &mut buf);
        for &v in &buf {
            min_rho_e = min_rho_e.min(v);
        }
    }
    (min_rho, min_rho_e, max_speed)
}

/// Execute a full run. Artifacts land in the resolved output directory:
/// run.log, profiles.csv, table2.txt, checkpoint.bin and optionally
/// sgs_diag.csv and mesh.txt.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let out_dir = resolve_output_dir(cfg);
    std::fs::create_dir_all(&out_dir)?;
    let mut log = std::io::BufWriter::new(std::fs::File::create(out_dir.join("run.log"))?);
    writeln!(log, "# effective configuration")?;
    for line in cfg.to_text().lines() {
        writeln!(log, "# {line}")?;
    }

    let disc = build_discretization(cfg)?;
    writeln!(
        log,
        "# mesh: {} tets, {} faces, omega = {}",
        disc.n_elements(),
        disc.mesh.faces.len(),
        disc.mesh.omega
    )?;
    if cfg.dump_mesh {
        let f = std::fs::File::create(out_dir.join("mesh.txt"))?;
        disc.mesh.dump_text(std::io::BufWriter::new(f))?;
    }

    let mut rt = SgsRuntime::new(disc.n_elements());
    let mut stats = ChannelStatistics::new(&disc);
    let mut forcing = ForcingState::new(2.0 * disc.mesh.spec.lz, cfg.alpha1, cfg.alpha2);
    let mut t;
    let mut step;
    let mut state;

    if let Some(restart) = &cfg.restart_from {
        let ck = checkpoint::load(restart)?;
        if ck.u.n_elems != disc.n_elements() || ck.u.n_modes != disc.basis.n_modes {
            return Err(Error::Checkpoint(format!(
                "checkpoint shape ({} elems, {} modes) does not match configuration ({}, {})",
                ck.u.n_elems,
                ck.u.n_modes,
                disc.n_elements(),
                disc.basis.n_modes
            )));
        }
        t = ck.t;
        step = ck.step;
        forcing.integral = ck.forcing_integral;
        rt.u_tau = ck.u_tau;
        rt.tau_kk_mean = ck.tau_kk_mean;
        rt.sgs_diff = ck.sgs_diff;
        stats.restore_raw(ck.stats_acc, ck.stats_scalars)?;
        state = ck.u;
        writeln!(log, "# restarted from {} at t = {t}", restart.display())?;
    } else {
        t = 0.0;
        step = 0;
        state = init::initial_condition(&disc, &cfg.perturbation);
        if !disc.mesh.spec.periodic_y {
            let (tau_w, rho_w) = disc.wall_shear(&state)?;
            rt.u_tau = (tau_w.abs() / (rho_w * disc.params.re)).sqrt();
        }
    }

    let mut ws = Workspace::default();
    let mut bufs = SsprkBuffers::new(&state);
    let t_end = cfg.end_time();
    let mut next_checkpoint = if cfg.checkpoint_interval > 0.0 {
        t + cfg.checkpoint_interval
    } else {
        f64::INFINITY
    };
    let mut sgs_diag = if cfg.sgs_diagnostics {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sgs_diag.csv"))?);
        writeln!(f, "t,c_mean_abs,c_max_abs,cq_max_abs,cj_max_abs,beta_frac,zeroed_frac")?;
        Some(f)
    } else {
        None
    };

    writeln!(
        log,
        "# step t dt q f_x mass mom_x mom_y mom_z energy min_rho min_rho_e max_speed u_tau beta_frac zeroed_frac"
    )?;
    let mut last_q = disc.flow_rate(&state);
    let mut last_f = 0.0;

    let result: Result<()> = (|| {
        while t < t_end - 1e-12 && step < cfg.max_steps as u64 {
            let dt_stable = stable_dt(&disc, &state, &rt, cfg.cfl)?;
            let dt = dt_stable.min(t_end - t);
            let q = disc.flow_rate(&state);
            let ints = disc.integrals(&state);
            forcing.rho_b = ints[0] / disc.mesh.box_volume();
            let f_x = if cfg.forcing_enabled {
                compute_forcing(q, &forcing)
            } else {
                0.0
            };
            last_q = q;
            last_f = f_x;

            rt.coeffs_fresh = false;
            {
                let rt_ref = &mut rt;
                let ws_ref = &mut ws;
                ssprk54_step(
                    &mut state,
                    dt,
                    |s, k| disc.residual(s, f_x, rt_ref, ws_ref, k),
                    &mut bufs,
                )?;
            }
            advance_forcing_integral(&mut forcing, q, dt);
            t += dt;
            step += 1;

            if !disc.mesh.spec.periodic_y {
                let (tau_w, rho_w) = disc.wall_shear(&state)?;
                let inst = (tau_w.abs() / (rho_w * disc.params.re)).sqrt();
                let alpha = (dt / U_TAU_EMA_TIME).min(1.0);
                rt.u_tau += alpha * (inst - rt.u_tau);
            }
            if t >= cfg.t_st {
                stats.accumulate(&disc, &state, &rt, &mut ws, dt)?;
            }

            if step % cfg.log_interval as u64 == 0 || t >= t_end - 1e-12 {
                let (min_rho, min_rho_e, max_speed) = state_extrema(&disc, &state);
                writeln!(
                    log,
                    "{step} {t:.6e} {dt:.6e} {q:.10e} {f_x:.6e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {min_rho:.6e} {min_rho_e:.6e} {max_speed:.6e} {:.6e} {:.4} {:.4}",
                    ints[0], ints[1], ints[2], ints[3], ints[4], rt.u_tau, rt.beta_frac, rt.zeroed_frac
                )?;
                log.flush()?;
                if let Some(f) = sgs_diag.as_mut() {
                    let mut c_sum = 0.0;
                    let mut c_max: f64 = 0.0;
                    let mut cq_max: f64 = 0.0;
                    let mut cj_max: f64 = 0.0;
                    for c in &rt.coeffs {
                        for row in &c.c {
                            for v in row {
                                c_sum += v.abs();
                                c_max = c_max.max(v.abs());
                            }
                        }
                        for v in &c.cq {
                            cq_max = cq_max.max(v.abs());
                        }
                        for v in &c.cj {
                            cj_max = cj_max.max(v.abs());
                        }
                    }
                    let n = (rt.coeffs.len() * 9).max(1) as f64;
                    writeln!(
                        f,
                        "{t:.6e},{:.6e},{c_max:.6e},{cq_max:.6e},{cj_max:.6e},{:.4},{:.4}",
                        c_sum / n,
                        rt.beta_frac,
                        rt.zeroed_frac
                    )?;
                }
            }

            if t >= next_checkpoint {
                write_checkpoint(&out_dir.join("checkpoint.bin"), cfg, t, step, &forcing, &rt, &state, &stats)?;
                next_checkpoint += cfg.checkpoint_interval;
            }
        }
        Ok(())
    })();

    if let Err(e) = &result {
        writeln!(log, "# run aborted: {e}")?;
        log.flush()?;
        return result.map(|_| unreachable!());
    }

    write_checkpoint(&out_dir.join("checkpoint.bin"), cfg, t, step, &forcing, &rt, &state, &stats)?;

    let mut table2 = None;
    if stats.t_weight > 0.0 {
        let f = std::fs::File::create(out_dir.join("profiles.csv"))?;
        stats.write_csv(&disc, std::io::BufWriter::new(f))?;
        if !disc.mesh.spec.periodic_y {
            let rec = stats.wall_quantities(&disc)?;
            let f = std::fs::File::create(out_dir.join("table2.txt"))?;
            rec.write_text(std::io::BufWriter::new(f))?;
            table2 = Some(rec);
        }
    }
    writeln!(log, "# finished: {step} steps to t = {t:.6e}")?;
    log.flush()?;

    Ok(RunSummary {
        steps: step,
        t,
        flow_rate: last_q,
        flow_rate_error: (last_q - forcing.q0).abs() / forcing.q0,
        forcing: last_f,
        table2,
        output_dir: out_dir,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_checkpoint(
    path: &Path,
    cfg: &RunConfig,
    t: f64,
    step: u64,
    forcing: &ForcingState,
    rt: &SgsRuntime,
    state: &ModalField,
    stats: &ChannelStatistics,
) -> Result<()> {
    let (acc, scalars) = stats.raw();
    checkpoint::save(
        path,
        &Checkpoint {
            t,
            step,
            forcing_integral: forcing.integral,
            u_tau: rt.u_tau,
            u: state.clone(),
            tau_kk_mean: rt.tau_kk_mean.clone(),
            sgs_diff: rt.sgs_diff.clone(),
            stats_acc: acc,
            stats_scalars: scalars,
            config_echo: cfg.to_text(),
        },
    )
}

/// Rebuild profiles and the mean-flow record from a checkpoint alone.
pub fn postprocess(ck_path: &Path, out_dir: &Path) -> Result<()> {
    let ck = checkpoint::load(ck_path)?;
    let cfg = RunConfig::parse(&ck.config_echo)?;
    let disc = build_discretization(&cfg)?;
    let mut stats = ChannelStatistics::new(&disc);
    stats.restore_raw(ck.stats_acc, ck.stats_scalars)?;
    std::fs::create_dir_all(out_dir)?;
    let f = std::fs::File::create(out_dir.join("profiles.csv"))?;
    stats.write_csv(&disc, std::io::BufWriter::new(f))?;
    if !disc.mesh.spec.periodic_y {
        let rec = stats.wall_quantities(&disc)?;
        let f = std::fs::File::create(out_dir.join("table2.txt"))?;
        rec.write_text(std::io::BufWriter::new(f))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> RunConfig {
        let text = format!(
            "
            mesh.nx = 1
            mesh.ny = 2
            mesh.nz = 1
            mesh.lx = 2.0
            mesh.lz = 2.0
            mesh.omega = 0.5
            disc.q = 1
            disc.qhat = 0
            gas.ma = 0.5
            gas.re = 100
            model.kind = none
            time.cfl = 0.3
            time.t_st = 0.0
            time.t_av = 0.05
            ic.amplitude = 0.0
            output.log_interval = 5
            output.dir = {}
            ",
            dir.display()
        );
        RunConfig::parse(&text).unwrap()
    }

    #[test]
    fn run_produces_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let summary = run(&cfg).unwrap();
        assert!(summary.steps > 0);
        assert!(dir.path().join("run.log").exists());
        assert!(dir.path().join("checkpoint.bin").exists());
        assert!(dir.path().join("profiles.csv").exists());
        assert!(dir.path().join("table2.txt").exists());
        let log = std::fs::read_to_string(dir.path().join("run.log")).unwrap();
        assert!(log.contains("# disc.q = 1"));
        assert!(log.contains("# finished"));
    }

    #[test]
    fn restart_is_bitwise_for_next_step() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();

        // Run A: two legs of 3 + 2 steps with a checkpoint in between.
        let mut cfg = tiny_config(dir_a.path());
        cfg.t_av = 10.0;
        cfg.max_steps = 3;
        run(&cfg).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.restart_from = Some(dir_a.path().join("checkpoint.bin"));
        cfg2.max_steps = 5;
        run(&cfg2).unwrap();
        let ck_a = checkpoint::load(&dir_a.path().join("checkpoint.bin")).unwrap();

        // Run B: five uninterrupted steps.
        let mut cfg_b = tiny_config(dir_b.path());
        cfg_b.t_av = 10.0;
        cfg_b.max_steps = 5;
        run(&cfg_b).unwrap();
        let ck_b = checkpoint::load(&dir_b.path().join("checkpoint.bin")).unwrap();

        assert_eq!(ck_a.step, 5);
        assert_eq!(ck_b.step, 5);
        assert_eq!(ck_a.t.to_bits(), ck_b.t.to_bits());
        for (a, b) in ck_a.u.data.iter().zip(&ck_b.u.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in ck_a.stats_acc.iter().zip(&ck_b.stats_acc) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn postprocess_from_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        run(&cfg).unwrap();
        let out = dir.path().join("post");
        postprocess(&dir.path().join("checkpoint.bin"), &out).unwrap();
        assert!(out.join("profiles.csv").exists());
        assert!(out.join("table2.txt").exists());
    }
}

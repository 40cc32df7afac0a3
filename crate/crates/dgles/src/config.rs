//! Run configuration: flat key = value text with section prefixes.
//!
//! Unknown keys are rejected and all validation problems are reported in one
//! pass. `to_text` regenerates every effective parameter including defaults,
//! so the run log is sufficient to reproduce a run.

use crate::gas::GasParameters;
use crate::init::PerturbationSpec;
use crate::mesh::ChannelMeshSpec;
use crate::sgs::SgsModelKind;
use crate::solver::ModelConfig;
use crate::{Error, Result};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: ChannelMeshSpec,
    pub q: usize,
    pub qhat: usize,
    pub gas: GasParameters,
    pub model: ModelConfig,
    pub cfl: f64,
    /// Statistics window start and length; the run ends at t_st + t_av.
    pub t_st: f64,
    pub t_av: f64,
    pub forcing_enabled: bool,
    pub alpha1: f64,
    pub alpha2: f64,
    pub perturbation: PerturbationSpec,
    /// Log every N steps.
    pub log_interval: usize,
    /// Checkpoint every this many time units (0 disables periodic writes;
    /// a final checkpoint is always written).
    pub checkpoint_interval: f64,
    pub output_dir: PathBuf,
    pub sgs_diagnostics: bool,
    pub dump_mesh: bool,
    pub restart_from: Option<PathBuf>,
    /// Hard step-count guard.
    pub max_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: ChannelMeshSpec {
                nx: 4,
                ny: 4,
                nz: 4,
                lx: 4.0 * std::f64::consts::PI,
                lz: 4.0 * std::f64::consts::PI / 3.0,
                omega: 2.0,
                y1_target: None,
                periodic_y: false,
            },
            q: 4,
            qhat: 2,
            gas: GasParameters::new(0.7, 2795.0),
            model: ModelConfig::none(),
            cfl: 0.3,
            t_st: 0.0,
            t_av: 1.0,
            forcing_enabled: true,
            alpha1: 0.1,
            alpha2: 0.5,
            perturbation: PerturbationSpec::default(),
            log_interval: 50,
            checkpoint_interval: 0.0,
            output_dir: PathBuf::from("out"),
            sgs_diagnostics: false,
            dump_mesh: false,
            restart_from: None,
            max_steps: usize::MAX,
        }
    }
}

impl RunConfig {
    /// Parse the key = value text. All problems are collected and returned
    /// together; nothing is computed on a bad configuration.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut errors: Vec<String> = Vec::new();
        let mut seen: HashMap<String, String> = HashMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value", lineno + 1));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if seen.insert(key.clone(), value).is_some() {
                errors.push(format!("line {}: duplicate key {key}", lineno + 1));
            }
        }

        let mut take_f64 = |k: &str, errors: &mut Vec<String>, dst: &mut f64| {
            if let Some(v) = seen.remove(k) {
                match v.parse::<f64>() {
                    Ok(x) => *dst = x,
                    Err(_) => errors.push(format!("{k}: not a number: {v}")),
                }
            }
        };
        macro_rules! f64_key {
            ($k:expr, $dst:expr) => {
                take_f64($k, &mut errors, &mut $dst)
            };
        }
        f64_key!("mesh.lx", cfg.mesh.lx);
        f64_key!("mesh.lz", cfg.mesh.lz);
        f64_key!("mesh.omega", cfg.mesh.omega);
        f64_key!("gas.ma", cfg.gas.ma);
        f64_key!("gas.re", cfg.gas.re);
        f64_key!("gas.pr", cfg.gas.pr);
        f64_key!("gas.gamma", cfg.gas.gamma);
        f64_key!("gas.alpha", cfg.gas.alpha);
        f64_key!("smagorinsky.c_s", cfg.model.smagorinsky.c_s);
        f64_key!("smagorinsky.c_i", cfg.model.smagorinsky.c_i);
        f64_key!("smagorinsky.a", cfg.model.smagorinsky.a);
        f64_key!("smagorinsky.pr_sgs", cfg.model.smagorinsky.pr_sgs);
        f64_key!("anisotropic.eps_den", cfg.model.anisotropic.eps_den);
        f64_key!("anisotropic.c_max", cfg.model.anisotropic.c_max);
        f64_key!("anisotropic.nu_cap_fraction", cfg.model.anisotropic.nu_cap_fraction);
        f64_key!("time.cfl", cfg.cfl);
        f64_key!("time.t_st", cfg.t_st);
        f64_key!("time.t_av", cfg.t_av);
        f64_key!("forcing.alpha1", cfg.alpha1);
        f64_key!("forcing.alpha2", cfg.alpha2);
        f64_key!("ic.amplitude", cfg.perturbation.amplitude);
        f64_key!("ic.r", cfg.perturbation.r);
        f64_key!("output.checkpoint_interval", cfg.checkpoint_interval);

        let mut take_usize = |k: &str, errors: &mut Vec<String>, dst: &mut usize| {
            if let Some(v) = seen.remove(k) {
                match v.parse::<usize>() {
                    Ok(x) => *dst = x,
                    Err(_) => errors.push(format!("{k}: not a nonnegative integer: {v}")),
                }
            }
        };
        macro_rules! usize_key {
            ($k:expr, $dst:expr) => {
                take_usize($k, &mut errors, &mut $dst)
            };
        }
        usize_key!("mesh.nx", cfg.mesh.nx);
        usize_key!("mesh.ny", cfg.mesh.ny);
        usize_key!("mesh.nz", cfg.mesh.nz);
        usize_key!("disc.q", cfg.q);
        usize_key!("disc.qhat", cfg.qhat);
        usize_key!("ic.n_iter", cfg.perturbation.n_iter);
        usize_key!("output.log_interval", cfg.log_interval);
        usize_key!("time.max_steps", cfg.max_steps);

        let mut take_bool = |k: &str, errors: &mut Vec<String>, dst: &mut bool| {
            if let Some(v) = seen.remove(k) {
                match v.as_str() {
                    "true" | "1" | "yes" => *dst = true,
                    "false" | "0" | "no" => *dst = false,
                    _ => errors.push(format!("{k}: not a boolean: {v}")),
                }
            }
        };
        macro_rules! bool_key {
            ($k:expr, $dst:expr) => {
                take_bool($k, &mut errors, &mut $dst)
            };
        }
        bool_key!("mesh.periodic_y", cfg.mesh.periodic_y);
        bool_key!("smagorinsky.damping", cfg.model.smagorinsky.damping_enabled);
        bool_key!(
            "anisotropic.update_every_stage",
            cfg.model.anisotropic.update_every_stage
        );
        bool_key!("forcing.enabled", cfg.forcing_enabled);
        bool_key!("output.sgs_diagnostics", cfg.sgs_diagnostics);
        bool_key!("output.dump_mesh", cfg.dump_mesh);

        if let Some(v) = seen.remove("mesh.y1_target") {
            match v.parse::<f64>() {
                Ok(x) => cfg.mesh.y1_target = Some(x),
                Err(_) => errors.push(format!("mesh.y1_target: not a number: {v}")),
            }
        }
        if let Some(v) = seen.remove("model.kind") {
            cfg.model.kind = match v.as_str() {
                "none" => SgsModelKind::None,
                "smagorinsky" => SgsModelKind::Smagorinsky,
                "anisotropic" => SgsModelKind::Anisotropic,
                _ => {
                    errors.push(format!(
                        "model.kind: expected none|smagorinsky|anisotropic, got {v}"
                    ));
                    SgsModelKind::None
                }
            };
        }
        if let Some(v) = seen.remove("output.dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = seen.remove("restart_from") {
            cfg.restart_from = Some(PathBuf::from(v));
        }

        let mut unknown: Vec<String> = seen.keys().cloned().collect();
        unknown.sort();
        for k in unknown {
            errors.push(format!("unknown key: {k}"));
        }

        cfg.validate_into(&mut errors);
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    fn validate_into(&self, errors: &mut Vec<String>) {
        if let Err(e) = self.mesh.validate() {
            errors.push(e.to_string());
        }
        if let Err(e) = self.gas.validate() {
            errors.push(e.to_string());
        }
        if self.q > crate::basis::MAX_DEGREE {
            errors.push(format!(
                "disc.q = {} exceeds supported maximum {}",
                self.q,
                crate::basis::MAX_DEGREE
            ));
        }
        if self.qhat >= self.q {
            errors.push(format!(
                "disc.qhat = {} must be smaller than disc.q = {}",
                self.qhat, self.q
            ));
        }
        if !(self.cfl > 0.0) {
            errors.push("time.cfl must be positive".into());
        }
        if self.t_av < 0.0 || self.t_st < 0.0 {
            errors.push("time.t_st and time.t_av must be nonnegative".into());
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            errors.push("forcing gains must be nonnegative".into());
        }
        let p = &self.perturbation;
        if !(p.amplitude >= 0.0) || !(p.r > 0.0 && p.r <= 4.0) || p.n_iter < 1 {
            errors.push("ic: need amplitude >= 0, r in (0,4], n_iter >= 1".into());
        }
        let s = &self.model.smagorinsky;
        if !(s.c_s >= 0.0 && s.c_i >= 0.0 && s.a > 0.0 && s.pr_sgs > 0.0) {
            errors.push("smagorinsky: need c_s,c_i >= 0, a > 0, pr_sgs > 0".into());
        }
        let a = &self.model.anisotropic;
        if !(a.eps_den > 0.0 && a.c_max > 0.0) {
            errors.push("anisotropic: need eps_den > 0 and c_max > 0".into());
        }
    }

    pub fn end_time(&self) -> f64 {
        self.t_st + self.t_av
    }

    /// Full echo of every effective parameter.
    pub fn to_text(&self) -> String {
        let kind = match self.model.kind {
            SgsModelKind::None => "none",
            SgsModelKind::Smagorinsky => "smagorinsky",
            SgsModelKind::Anisotropic => "anisotropic",
        };
        let mut s = String::new();
        use std::fmt::Write;
        let _ = writeln!(s, "mesh.nx = {}", self.mesh.nx);
        let _ = writeln!(s, "mesh.ny = {}", self.mesh.ny);
        let _ = writeln!(s, "mesh.nz = {}", self.mesh.nz);
        let _ = writeln!(s, "mesh.lx = {}", self.mesh.lx);
        let _ = writeln!(s, "mesh.lz = {}", self.mesh.lz);
        let _ = writeln!(s, "mesh.omega = {}", self.mesh.omega);
        if let Some(y1) = self.mesh.y1_target {
            let _ = writeln!(s, "mesh.y1_target = {y1}");
        }
        let _ = writeln!(s, "mesh.periodic_y = {}", self.mesh.periodic_y);
        let _ = writeln!(s, "disc.q = {}", self.q);
        let _ = writeln!(s, "disc.qhat = {}", self.qhat);
        let _ = writeln!(s, "gas.ma = {}", self.gas.ma);
        let _ = writeln!(s, "gas.re = {}", self.gas.re);
        let _ = writeln!(s, "gas.pr = {}", self.gas.pr);
        let _ = writeln!(s, "gas.gamma = {}", self.gas.gamma);
        let _ = writeln!(s, "gas.alpha = {}", self.gas.alpha);
        let _ = writeln!(s, "model.kind = {kind}");
        let _ = writeln!(s, "smagorinsky.c_s = {}", self.model.smagorinsky.c_s);
        let _ = writeln!(s, "smagorinsky.c_i = {}", self.model.smagorinsky.c_i);
        let _ = writeln!(s, "smagorinsky.a = {}", self.model.smagorinsky.a);
        let _ = writeln!(s, "smagorinsky.pr_sgs = {}", self.model.smagorinsky.pr_sgs);
        let _ = writeln!(
            s,
            "smagorinsky.damping = {}",
            self.model.smagorinsky.damping_enabled
        );
        let _ = writeln!(s, "anisotropic.eps_den = {}", self.model.anisotropic.eps_den);
        let _ = writeln!(s, "anisotropic.c_max = {}", self.model.anisotropic.c_max);
        let _ = writeln!(
            s,
            "anisotropic.nu_cap_fraction = {}",
            self.model.anisotropic.nu_cap_fraction
        );
        let _ = writeln!(
            s,
            "anisotropic.update_every_stage = {}",
            self.model.anisotropic.update_every_stage
        );
        let _ = writeln!(s, "time.cfl = {}", self.cfl);
        let _ = writeln!(s, "time.t_st = {}", self.t_st);
        let _ = writeln!(s, "time.t_av = {}", self.t_av);
        if self.max_steps != usize::MAX {
            let _ = writeln!(s, "time.max_steps = {}", self.max_steps);
        }
        let _ = writeln!(s, "forcing.enabled = {}", self.forcing_enabled);
        let _ = writeln!(s, "forcing.alpha1 = {}", self.alpha1);
        let _ = writeln!(s, "forcing.alpha2 = {}", self.alpha2);
        let _ = writeln!(s, "ic.amplitude = {}", self.perturbation.amplitude);
        let _ = writeln!(s, "ic.r = {}", self.perturbation.r);
        let _ = writeln!(s, "ic.n_iter = {}", self.perturbation.n_iter);
        let _ = writeln!(s, "output.log_interval = {}", self.log_interval);
        let _ = writeln!(
            s,
            "output.checkpoint_interval = {}",
            self.checkpoint_interval
        );
        let _ = writeln!(s, "output.sgs_diagnostics = {}", self.sgs_diagnostics);
        let _ = writeln!(s, "output.dump_mesh = {}", self.dump_mesh);
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        if let Some(r) = &self.restart_from {
            let _ = writeln!(s, "restart_from = {}", r.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "
            mesh.nx = 8          # streamwise
            mesh.ny = 8
            mesh.nz = 6
            mesh.lx = 12.566370614359172
            mesh.lz = 4.188790204786391
            mesh.omega = 1.9
            disc.q = 2
            disc.qhat = 1
            gas.ma = 0.7
            gas.re = 2795
            model.kind = anisotropic
            time.cfl = 0.3
            time.t_st = 5
            time.t_av = 5
            output.dir = /tmp/run1
        ";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.mesh.nx, 8);
        assert_eq!(cfg.model.kind, SgsModelKind::Anisotropic);
        assert_eq!(cfg.end_time(), 10.0);
        // Echo re-parses to the same configuration.
        let echo = cfg.to_text();
        let cfg2 = RunConfig::parse(&echo).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn rejects_bad_configs_exhaustively() {
        let text = "
            mesh.nx = 0
            disc.q = 3
            disc.qhat = 3
            gas.ma = -1
            time.cfl = 0
            bogus.key = 1
        ";
        let err = RunConfig::parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("element counts"));
        assert!(msg.contains("qhat"));
        assert!(msg.contains("Ma, Re, Pr"));
        assert!(msg.contains("cfl"));
        assert!(msg.contains("unknown key: bogus.key"));
    }

    #[test]
    fn qhat_not_less_than_q_is_invalid() {
        let err = RunConfig::parse("disc.q = 2\ndisc.qhat = 2\n").unwrap_err();
        assert!(err.to_string().contains("qhat"));
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        let err = RunConfig::parse("disc.q = 2\ndisc.q = 3\nnonsense line\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate"));
        assert!(msg.contains("expected key = value"));
    }
}

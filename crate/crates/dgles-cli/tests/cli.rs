//! End-to-end tests of the command-line surface: exit codes, artifacts,
//! checkpoint restart and the reference comparison tool.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dgles"))
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let out = dir.join("out");
    let base = format!(
        "mesh.nx = 1
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
        time.t_av = 0.02
        ic.amplitude = 0.0
        output.dir = {}",
        out.display()
    );
    // Later keys override the template.
    let extra_keys: Vec<&str> = extra
        .lines()
        .filter_map(|l| l.split('=').next())
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .collect();
    let merged: String = base
        .lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("").trim();
            !extra_keys.contains(&key)
        })
        .map(|l| format!("{}\n", l.trim()))
        .chain(extra.lines().map(|l| format!("{}\n", l.trim())))
        .collect();
    let path = dir.join("run.cfg");
    std::fs::write(&path, merged).unwrap();
    path
}

#[test]
fn run_success_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("finished"));
    assert!(dir.path().join("out/run.log").exists());
    assert!(dir.path().join("out/table2.txt").exists());
}

#[test]
fn config_error_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "disc.qhat = 5");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("qhat"));

    // Missing file is also a configuration failure.
    let out2 = bin().arg("run").arg(dir.path().join("nope.cfg")).output().unwrap();
    assert_eq!(out2.status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_three() {
    // A wildly unstable configuration: enormous CFL forces a blowup or a
    // positivity violation within a few steps.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "time.cfl = 500.0\nic.amplitude = 0.1\ntime.max_steps = 50\ntime.t_av = 1000.0",
    );
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let override_dir = dir.path().join("elsewhere");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .env("DGLES_OUTPUT_DIR", &override_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(override_dir.join("run.log").exists());
    assert!(!dir.path().join("out/run.log").exists());
}

#[test]
fn postprocess_and_dump_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert!(bin().arg("run").arg(&cfg).output().unwrap().status.success());

    let post = dir.path().join("post");
    let out = bin()
        .arg("postprocess")
        .arg(dir.path().join("out/checkpoint.bin"))
        .arg("--out")
        .arg(&post)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(post.join("profiles.csv").exists());

    let mesh_file = dir.path().join("mesh.txt");
    let out = bin()
        .arg("dump-mesh")
        .arg(&cfg)
        .arg("--out")
        .arg(&mesh_file)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&mesh_file).unwrap();
    assert!(text.contains("# vertices"));
    assert!(text.lines().filter(|l| l.split_whitespace().count() == 5).count() >= 12);
}

#[test]
fn corrupt_checkpoint_refused() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let out = bin().arg("postprocess").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn verify_suite_passes() {
    let out = bin().arg("verify").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout: {stdout}");
    assert_eq!(stdout.matches("PASS").count(), 4);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn compare_against_reference_rows() {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().parent().unwrap();
    let reference = root.join("reference/table2_reference.csv");

    // A record within 10% of the Anis. Ma15 row.
    let good = dir.path().join("good.txt");
    std::fs::write(
        &good,
        "tau_w = 11.0\nre_tau = 201.0\nu_tau_over_ub = 0.0561\nrho_w_over_rho_b = 1.28\n\
         u_c_over_ub = 1.15\nrho_c_over_rho_b = 0.98\nrho_c_over_rho_w = 0.76\n\
         t_c_over_t_w = 1.33\ndx_plus = 28\ndy_plus_min = 0.8\ndy_plus_max = 9.4\ndz_plus = 12\n",
    )
    .unwrap();
    let out = bin()
        .arg("compare")
        .arg(&good)
        .arg("--reference")
        .arg(&reference)
        .arg("--row")
        .arg("Anis. Ma15")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.matches("PASS").count(), 2);

    // 30% off on Re_tau fails.
    let bad = dir.path().join("bad.txt");
    std::fs::write(
        &bad,
        "tau_w = 11.0\nre_tau = 140.0\nu_tau_over_ub = 0.054\nrho_w_over_rho_b = 1.28\n\
         u_c_over_ub = 1.15\nrho_c_over_rho_b = 0.98\nrho_c_over_rho_w = 0.76\n\
         t_c_over_t_w = 1.33\ndx_plus = 28\ndy_plus_min = 0.8\ndy_plus_max = 9.4\ndz_plus = 12\n",
    )
    .unwrap();
    let out = bin()
        .arg("compare")
        .arg(&bad)
        .arg("--reference")
        .arg(&reference)
        .arg("--row")
        .arg("Anis. Ma15")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    // Unknown row is a usage error.
    let out = bin()
        .arg("compare")
        .arg(&good)
        .arg("--reference")
        .arg(&reference)
        .arg("--row")
        .arg("No Such Row")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn restart_continues_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "time.max_steps = 3\ntime.t_av = 10.0");
    assert!(bin().arg("run").arg(&cfg).output().unwrap().status.success());
    let cfg2 = write_config(
        dir.path(),
        &format!(
            "time.max_steps = 6\ntime.t_av = 10.0\nrestart_from = {}",
            dir.path().join("out/checkpoint.bin").display()
        ),
    );
    let out = bin().arg("run").arg(&cfg2).output().unwrap();
    assert!(out.status.success());
    let log = std::fs::read_to_string(dir.path().join("out/run.log")).unwrap();
    assert!(log.contains("restarted from"));
}

//! Batch CLI: run a configuration, postprocess checkpoints, verify the
//! built-in property suites and compare mean-flow records against reference
//! rows.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure
//! (positivity violation or blowup), 1 anything else.

mod verify;

use clap::{Parser, Subcommand};
use dgles::config::RunConfig;
use dgles::stats::Table2Record;
use dgles::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dgles", version, about = "Modal DG channel-flow LES solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation from a key = value configuration file.
    Run { config: PathBuf },
    /// Rebuild profiles.csv and table2.txt from a checkpoint.
    Postprocess {
        checkpoint: PathBuf,
        #[arg(long, default_value = "post")]
        out: PathBuf,
    },
    /// Run the built-in property suites.
    Verify,
    /// Write the plain-text mesh listing for a configuration.
    DumpMesh {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a run's table2.txt against a reference row.
    Compare {
        record: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        row: String,
        #[arg(long, default_value_t = 0.10)]
        tolerance: f64,
    },
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => ExitCode::from(2),
        Error::PositivityViolation { .. } | Error::NumericalBlowup { .. } => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let cfg = match RunConfig::parse(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match dgles::runner::run(&cfg) {
                Ok(summary) => {
                    println!(
                        "finished {} steps to t = {:.6}; Q = {:.6} (rel. error {:.3e}), f_x = {:.6e}",
                        summary.steps,
                        summary.t,
                        summary.flow_rate,
                        summary.flow_rate_error,
                        summary.forcing
                    );
                    if let Some(rec) = summary.table2 {
                        println!(
                            "wall: tau_w = {:.5}, Re_tau = {:.2}, u_tau/U_b = {:.5}",
                            rec.tau_w, rec.re_tau, rec.u_tau_over_ub
                        );
                    }
                    println!("artifacts in {}", summary.output_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_for(&e)
                }
            }
        }
        Cmd::Postprocess { checkpoint, out } => {
            match dgles::runner::postprocess(&checkpoint, &out) {
                Ok(()) => {
                    println!("wrote profiles.csv and table2.txt to {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_for(&e)
                }
            }
        }
        Cmd::Verify => {
            if verify::run_all() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::DumpMesh { config, out } => {
            let run = || -> Result<(), Error> {
                let text = std::fs::read_to_string(&config)?;
                let cfg = RunConfig::parse(&text)?;
                let mesh = dgles::mesh::build_mesh(&cfg.mesh)?;
                match out {
                    Some(path) => {
                        let f = std::fs::File::create(&path)?;
                        mesh.dump_text(std::io::BufWriter::new(f))?;
                        println!("wrote {}", path.display());
                    }
                    None => {
                        let stdout = std::io::stdout();
                        mesh.dump_text(stdout.lock())?;
                    }
                }
                Ok(())
            };
            match run() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_for(&e)
                }
            }
        }
        Cmd::Compare {
            record,
            reference,
            row,
            tolerance,
        } => match compare(&record, &reference, &row, tolerance) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}

/// Reference row of the benchmark table (blank fields are unavailable).
struct RefRow {
    re_tau: Option<f64>,
    u_tau_over_ub: Option<f64>,
}

fn lookup_row(csv: &str, label: &str) -> Result<RefRow, String> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or("empty reference file")?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (c_re, c_ut) = (
        col("re_tau").ok_or("reference file lacks re_tau column")?,
        col("u_tau_over_ub").ok_or("reference file lacks u_tau_over_ub column")?,
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.first() == Some(&label) {
            let parse = |i: usize| -> Option<f64> {
                fields.get(i).and_then(|s| s.parse::<f64>().ok())
            };
            return Ok(RefRow {
                re_tau: parse(c_re),
                u_tau_over_ub: parse(c_ut),
            });
        }
    }
    Err(format!("row '{label}' not found in reference file"))
}

fn compare(
    record: &PathBuf,
    reference: &PathBuf,
    row: &str,
    tolerance: f64,
) -> Result<bool, String> {
    let rec_text = std::fs::read_to_string(record).map_err(|e| e.to_string())?;
    let rec = Table2Record::parse(&rec_text).map_err(|e| e.to_string())?;
    let ref_text = std::fs::read_to_string(reference).map_err(|e| e.to_string())?;
    let expect = lookup_row(&ref_text, row)?;

    let mut ok = true;
    let mut check = |name: &str, got: f64, want: Option<f64>| match want {
        Some(w) => {
            let rel = (got - w).abs() / w.abs();
            let pass = rel <= tolerance;
            ok &= pass;
            println!(
                "{}: {name} = {got:.5} vs reference {w:.5} (rel. dev {rel:.3}, tol {tolerance})",
                if pass { "PASS" } else { "FAIL" }
            );
        }
        None => println!("SKIP: {name} has no reference value in row '{row}'"),
    };
    check("re_tau", rec.re_tau, expect.re_tau);
    check("u_tau_over_ub", rec.u_tau_over_ub, expect.u_tau_over_ub);
    Ok(ok)
}

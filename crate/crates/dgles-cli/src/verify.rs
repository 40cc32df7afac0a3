//! Built-in property suites behind `dgles verify`: quick versions of the
//! filter algebra, quadrature exactness, limiter and solver consistency
//! checks, each printing one PASS/FAIL line.

use dgles::basis::{build_basis, space_dim};
use dgles::fields::{evaluate_nodes, favre_ratio, project_nodes, ModalField};
use dgles::gas::{conserved_from_primitives, molecular_fluxes, strain_rate, GasParameters};
use dgles::mesh::{build_mesh, ChannelMeshSpec};
use dgles::sgs::{backscatter_limiter, contract};
use dgles::solver::{Discretization, ModelConfig, SgsRuntime, Workspace};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn report(name: &str, result: Result<(), String>) -> bool {
    match result {
        Ok(()) => {
            println!("PASS {name}");
            true
        }
        Err(msg) => {
            println!("FAIL {name}: {msg}");
            false
        }
    }
}

pub fn run_all() -> bool {
    let mut ok = true;
    ok &= report("filter-algebra", filter_algebra());
    ok &= report("quadrature-basis", quadrature_basis());
    ok &= report("backscatter-limiter", limiter());
    ok &= report("freestream-preservation", freestream());
    ok
}

/// Exact monomial moment on the unit tetrahedron, a! b! c!/(a+b+c+3)!.
fn tet_moment(a: usize, b: usize, c: usize) -> f64 {
    let fact = |n: usize| -> u128 { (1..=n as u128).product::<u128>().max(1) };
    (fact(a) * fact(b) * fact(c)) as f64 / fact(a + b + c + 3) as f64
}

fn filter_algebra() -> Result<(), String> {
    let basis = build_basis(3).map_err(|e| e.to_string())?;
    let qhat = 1usize;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let nn = basis.quad.nodes.len();
    let keep = space_dim(qhat);
    for trial in 0..50 {
        let samples: Vec<f64> = (0..nn).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; basis.n_modes];
        project_nodes(&basis, &samples, &mut c);
        // Idempotence.
        let mut back = vec![0.0; nn];
        evaluate_nodes(&basis, &c, basis.n_modes, &mut back);
        let mut c2 = vec![0.0; basis.n_modes];
        project_nodes(&basis, &back, &mut c2);
        for (a, b) in c.iter().zip(&c2) {
            if (a - b).abs() > 1e-12 {
                return Err(format!("projection not idempotent (trial {trial})"));
            }
        }
        // Nestedness: truncating the projection equals truncating directly.
        let mut field = ModalField::zeros(1, 1, basis.n_modes);
        field.coeffs_mut(0, 0).copy_from_slice(&c2);
        let hat = field.test_filter(&basis, qhat).map_err(|e| e.to_string())?;
        for m in keep..basis.n_modes {
            if hat.coeffs(0, 0)[m] != 0.0 {
                return Err("test filter left high modes".into());
            }
        }
        // Bessel.
        let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        if n2(hat.coeffs(0, 0)) > n2(&c) + 1e-14 {
            return Err("Bessel inequality violated".into());
        }
        // Favre consistency.
        let rho: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mut phi = vec![0.0; nn];
        favre_ratio(&samples, &rho, &mut phi, 0).map_err(|e| e.to_string())?;
        let prod: Vec<f64> = rho.iter().zip(&phi).map(|(r, p)| r * p).collect();
        let mut ca = vec![0.0; basis.n_modes];
        let mut cb = vec![0.0; basis.n_modes];
        project_nodes(&basis, &samples, &mut ca);
        project_nodes(&basis, &prod, &mut cb);
        for (a, b) in ca.iter().zip(&cb) {
            if (a - b).abs() > 1e-12 {
                return Err("Favre consistency violated".into());
            }
        }
    }
    Ok(())
}

fn quadrature_basis() -> Result<(), String> {
    for q in 1..=4usize {
        let basis = build_basis(q).map_err(|e| e.to_string())?;
        let nn = basis.quad.nodes.len();
        // Gram diagonality.
        for m1 in 0..basis.n_modes {
            for m2 in 0..m1 {
                let g: f64 = (0..nn)
                    .map(|n| {
                        basis.quad.weights[n]
                            * basis.phi[n * basis.n_modes + m1]
                            * basis.phi[n * basis.n_modes + m2]
                    })
                    .sum();
                if g.abs() > 1e-12 {
                    return Err(format!("q={q}: off-diagonal Gram {g:.2e}"));
                }
            }
        }
        // Monomial exactness to 2q.
        for a in 0..=2 * q {
            for b in 0..=(2 * q - a) {
                for c in 0..=(2 * q - a - b) {
                    let num: f64 = basis
                        .quad
                        .nodes
                        .iter()
                        .zip(&basis.quad.weights)
                        .map(|(n, w)| {
                            w * n[0].powi(a as i32) * n[1].powi(b as i32) * n[2].powi(c as i32)
                        })
                        .sum();
                    let exact = tet_moment(a, b, c);
                    if (num - exact).abs() > 1e-12 * exact.max(1e-15) {
                        return Err(format!("q={q}: moment ({a},{b},{c}) off"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn limiter() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let mut g = [[0.0; 3]; 3];
        for row in g.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let s = strain_rate(&g);
        let (sigma, _) = molecular_fluxes(&g, &[0.0; 3], rng.gen_range(0.1..2.0));
        let re = rng.gen_range(1.0..1e4);
        let mut tau = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                tau[i][j] = rng.gen_range(-1.0..1.0);
                tau[j][i] = tau[i][j];
            }
        }
        let (beta, lim) = backscatter_limiter(&tau, &sigma, &s, re);
        if !(0.0..=1.0).contains(&beta) {
            return Err(format!("beta = {beta} outside [0,1]"));
        }
        if contract(&sigma, &s) / re - contract(&lim, &s) < -1e-14 {
            return Err("negative total dissipation after limiting".into());
        }
    }
    Ok(())
}

fn freestream() -> Result<(), String> {
    let spec = ChannelMeshSpec {
        nx: 2,
        ny: 2,
        nz: 2,
        lx: 2.0,
        lz: 2.0,
        omega: 1.0,
        y1_target: None,
        periodic_y: false,
    };
    let mesh = build_mesh(&spec).map_err(|e| e.to_string())?;
    let basis = build_basis(2).map_err(|e| e.to_string())?;
    let params = GasParameters::new(0.5, 100.0);
    let disc = Discretization::new(mesh, basis, 1, params, ModelConfig::none())
        .map_err(|e| e.to_string())?;
    let u = dgles::init::project_fields(&disc, |_e, _p| {
        conserved_from_primitives(1.0, [0.0; 3], 1.0, 0.0, &params)
    });
    let mut rt = SgsRuntime::new(disc.n_elements());
    let mut ws = Workspace::default();
    let mut res = ModalField::zeros(0, 0, 0);
    disc.residual(&u, 0.0, &mut rt, &mut ws, &mut res)
        .map_err(|e| e.to_string())?;
    let max = res.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max > 1e-12 {
        return Err(format!("rest-state residual {max:.3e}"));
    }
    Ok(())
}

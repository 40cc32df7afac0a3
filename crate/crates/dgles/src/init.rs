//! Initial conditions: laminar Poiseuille base state plus a deterministic
//! logistic-map velocity perturbation, projected onto the modal space.

use crate::fields::{project_nodes, ModalField, N_CONS};
use crate::gas::conserved_from_primitives;
use crate::solver::Discretization;

/// Deterministic velocity perturbation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    /// Logistic-map parameter.
    pub r: f64,
    pub n_iter: usize,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            amplitude: 0.1,
            r: 3.999,
            n_iter: 20,
        }
    }
}

/// Iterate the logistic map xi <- r xi (1 - xi).
pub fn logistic_chain(xi0: f64, r: f64, n_iter: usize) -> f64 {
    let mut xi = xi0;
    for _ in 0..n_iter {
        xi = r * xi * (1.0 - xi);
    }
    xi
}

/// Laminar Poiseuille base state: u_x = (3/4)(1 - y^2), rho = 1, T = 1.
pub fn base_state(p: [f64; 3], params: &crate::gas::GasParameters) -> [f64; N_CONS] {
    let ux = 0.75 * (1.0 - p[1] * p[1]);
    conserved_from_primitives(1.0, [ux, 0.0, 0.0], 1.0, 0.0, params)
}

/// Velocity increments at one node: the perturbation of velocity component
/// i+1 (cyclic) is seeded by coordinate i scaled into (0,1), run through the
/// logistic map, centered and scaled by the amplitude. No random number
/// generator is involved; identical inputs give bitwise identical outputs.
pub fn perturb_velocity(p: [f64; 3], lx: f64, lz: f64, spec: &PerturbationSpec) -> [f64; 3] {
    if spec.amplitude == 0.0 {
        return [0.0; 3];
    }
    let mut seeds = [p[0] / lx, 0.5 * (p[1] + 1.0), p[2] / lz];
    for s in seeds.iter_mut() {
        if *s <= 0.0 {
            *s = f64::EPSILON;
        }
        if *s >= 1.0 {
            *s = 1.0 - f64::EPSILON;
        }
    }
    let mut du = [0.0; 3];
    for (i, &seed) in seeds.iter().enumerate() {
        let xi = logistic_chain(seed, spec.r, spec.n_iter);
        // coordinate i perturbs velocity component i+1 (cyclic)
        du[(i + 1) % 3] = spec.amplitude * (2.0 * xi - 1.0);
    }
    du
}

/// Project node samples of the conserved variables onto the modal space.
pub fn project_fields(
    disc: &Discretization,
    f: impl Fn(usize, [f64; 3]) -> [f64; N_CONS] + Sync,
) -> ModalField {
    let nn = disc.n_nodes;
    let mut out = ModalField::zeros(disc.n_elements(), N_CONS, disc.basis.n_modes);
    let mut samples = vec![[0.0; N_CONS]; nn];
    let mut var_buf = vec![0.0; nn];
    for e in 0..disc.n_elements() {
        let geo = &disc.mesh.geom[e];
        for (n, s) in samples.iter_mut().enumerate() {
            *s = f(e, geo.to_physical(disc.basis.quad.nodes[n]));
        }
        for v in 0..N_CONS {
            for n in 0..nn {
                var_buf[n] = samples[n][v];
            }
            project_nodes(&disc.basis, &var_buf, out.coeffs_mut(e, v));
        }
    }
    out
}

/// Full initial condition: perturbed Poiseuille profile with rho and T left
/// untouched (the total energy absorbs the kinetic change).
pub fn initial_condition(disc: &Discretization, pert: &PerturbationSpec) -> ModalField {
    let (lx, lz) = (disc.mesh.spec.lx, disc.mesh.spec.lz);
    let params = disc.params;
    project_fields(disc, |_e, p| {
        let du = perturb_velocity(p, lx, lz, pert);
        let ux = 0.75 * (1.0 - p[1] * p[1]);
        conserved_from_primitives(1.0, [ux + du[0], du[1], du[2]], 1.0, 0.0, &params)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Basis;
    use crate::gas::GasParameters;
    use crate::mesh::{build_mesh, ChannelMeshSpec};
    use crate::solver::ModelConfig;
    use approx::assert_relative_eq;

    fn disc() -> Discretization {
        let spec = ChannelMeshSpec {
            nx: 2,
            ny: 2,
            nz: 1,
            lx: 4.0,
            lz: 2.0,
            omega: 1.0,
            y1_target: None,
            periodic_y: false,
        };
        Discretization::new(
            build_mesh(&spec).unwrap(),
            Basis::new(2).unwrap(),
            1,
            GasParameters::new(0.1, 100.0),
            ModelConfig::none(),
        )
        .unwrap()
    }

    #[test]
    fn base_profile_values() {
        let params = GasParameters::new(0.1, 100.0);
        assert_eq!(base_state([0.0, 1.0, 0.0], &params)[1], 0.0);
        assert_eq!(base_state([0.0, -1.0, 0.0], &params)[1], 0.0);
        assert_relative_eq!(base_state([0.3, 0.0, 0.1], &params)[1], 0.75);
        // Bulk mean of (3/4)(1-y^2) over y in [-1,1] is 1/2 (trapezoid).
        let n = 20000usize;
        let h = 2.0 / n as f64;
        let f = |y: f64| 0.75 * (1.0 - y * y);
        let mut integral = 0.5 * h * (f(-1.0) + f(1.0));
        for i in 1..n {
            integral += h * f(-1.0 + h * i as f64);
        }
        assert_relative_eq!(integral / 2.0, 0.5, max_relative = 1e-8);
    }

    #[test]
    fn logistic_iterates_match_composition() {
        let r = 3.999;
        let mut xi = 0.3;
        for _ in 0..20 {
            xi = r * xi * (1.0 - xi);
        }
        assert_eq!(logistic_chain(0.3, r, 20), xi);
    }

    #[test]
    fn perturbation_properties() {
        let spec = PerturbationSpec::default();
        let z = perturb_velocity(
            [0.2, 0.1, 0.3],
            4.0,
            2.0,
            &PerturbationSpec {
                amplitude: 0.0,
                ..spec
            },
        );
        assert_eq!(z, [0.0; 3]);
        for k in 0..50 {
            let p = [
                0.077 * k as f64 % 4.0,
                -1.0 + (0.13 * k as f64) % 2.0,
                (0.21 * k as f64) % 2.0,
            ];
            let du = perturb_velocity(p, 4.0, 2.0, &spec);
            for v in du {
                assert!(v.abs() <= spec.amplitude);
            }
        }
        // Boundary seeds are nudged off the fixed point at 0.
        let du = perturb_velocity([0.0, -1.0, 0.0], 4.0, 2.0, &spec);
        assert!(du.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn initial_condition_deterministic() {
        let d = disc();
        let a = initial_condition(&d, &PerturbationSpec::default());
        let b = initial_condition(&d, &PerturbationSpec::default());
        assert_eq!(a.data, b.data);
        // rho and T are unperturbed: density coefficients equal the
        // unperturbed projection.
        let c = initial_condition(
            &d,
            &PerturbationSpec {
                amplitude: 0.0,
                ..Default::default()
            },
        );
        for e in 0..d.n_elements() {
            for (x, y) in a.coeffs(e, 0).iter().zip(c.coeffs(e, 0)) {
                assert_relative_eq!(x, y, epsilon = 1e-14);
            }
        }
    }
}

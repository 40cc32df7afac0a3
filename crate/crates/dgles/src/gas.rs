//! Nondimensional gas relations: equation of state, primitive recovery,
//! temperature-dependent viscosity and molecular constitutive fluxes.
//!
//! All bulk quantities are nondimensional with the scalings of the reference
//! set (density, length, velocity, temperature); pressure and temperature are
//! related by p = rho T and the internal energy by e_i = (1-kappa)/kappa T.

use crate::{Error, Result};

/// Nondimensional gas and flow parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParameters {
    pub ma: f64,
    pub re: f64,
    pub pr: f64,
    pub gamma: f64,
    /// Viscosity power-law exponent, mu(T) = T^alpha.
    pub alpha: f64,
}

impl GasParameters {
    pub fn new(ma: f64, re: f64) -> Self {
        GasParameters {
            ma,
            re,
            pr: 0.7,
            gamma: 1.4,
            alpha: 0.7,
        }
    }

    /// kappa = R/c_p = (gamma - 1)/gamma.
    #[inline]
    pub fn kappa(&self) -> f64 {
        (self.gamma - 1.0) / self.gamma
    }

    /// Coefficient of the kinetic energy in the total energy, gamma Ma^2.
    #[inline]
    pub fn gm2(&self) -> f64 {
        self.gamma * self.ma * self.ma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ma > 0.0 && self.re > 0.0 && self.pr > 0.0) {
            return Err(Error::invalid("Ma, Re, Pr must be positive"));
        }
        if !(self.gamma > 1.0 && self.gamma <= 5.0 / 3.0) {
            return Err(Error::invalid("gamma must lie in (1, 5/3]"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("viscosity exponent must be positive"));
        }
        Ok(())
    }
}

/// Primitive quantities at one quadrature node.
#[derive(Debug, Clone, Copy)]
pub struct PrimitiveState {
    pub rho: f64,
    pub u: [f64; 3],
    pub t: f64,
    pub p: f64,
    pub e_i: f64,
}

/// Recover primitives from conserved node values.
///
/// `tau_kk` is the modeled subgrid kinetic energy entering the internal
/// energy split; closures that do not model it pass 0.
pub fn primitives_from_conserved(
    u: &[f64; 5],
    tau_kk: f64,
    params: &GasParameters,
    element: usize,
) -> Result<PrimitiveState> {
    let rho = u[0];
    if !(rho > 0.0) {
        return Err(Error::PositivityViolation {
            element,
            quantity: "density",
            value: rho,
        });
    }
    let vel = [u[1] / rho, u[2] / rho, u[3] / rho];
    let ke = rho * (vel[0] * vel[0] + vel[1] * vel[1] + vel[2] * vel[2]);
    let rho_ei = u[4] - 0.5 * params.gm2() * (ke + tau_kk);
    let kappa = params.kappa();
    let e_i = rho_ei / rho;
    let t = kappa / (1.0 - kappa) * e_i;
    if !(t > 0.0) {
        return Err(Error::PositivityViolation {
            element,
            quantity: "temperature",
            value: t,
        });
    }
    Ok(PrimitiveState {
        rho,
        u: vel,
        t,
        p: rho * t,
        e_i,
    })
}

/// Inverse of [`primitives_from_conserved`].
pub fn conserved_from_primitives(
    rho: f64,
    u: [f64; 3],
    t: f64,
    tau_kk: f64,
    params: &GasParameters,
) -> [f64; 5] {
    let kappa = params.kappa();
    let ke = rho * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let rho_e = (1.0 - kappa) / kappa * rho * t + 0.5 * params.gm2() * (ke + tau_kk);
    [rho, rho * u[0], rho * u[1], rho * u[2], rho_e]
}

/// Power-law dynamic viscosity, mu(T) = T^alpha.
#[inline]
pub fn viscosity(t: f64, alpha: f64) -> f64 {
    t.powf(alpha)
}

/// Strain rate with the doubled convention S_ij = d_j u_i + d_i u_j.
/// `grad_u[i][d]` holds d_d u_i.
#[inline]
pub fn strain_rate(grad_u: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = grad_u[i][j] + grad_u[j][i];
        }
    }
    s
}

/// Deviatoric part, S - (1/3) tr(S) I.
#[inline]
pub fn deviatoric(s: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let tr3 = (s[0][0] + s[1][1] + s[2][2]) / 3.0;
    let mut d = *s;
    for i in 0..3 {
        d[i][i] -= tr3;
    }
    d
}

/// |S| with the convention |S|^2 = (1/2) S_ij S_ij.
#[inline]
pub fn strain_norm(s: &[[f64; 3]; 3]) -> f64 {
    let mut sum = 0.0;
    for row in s {
        for v in row {
            sum += v * v;
        }
    }
    (0.5 * sum).sqrt()
}

/// Molecular momentum and heat fluxes: sigma = mu S^d, q = -mu grad T.
pub fn molecular_fluxes(
    grad_u: &[[f64; 3]; 3],
    grad_t: &[f64; 3],
    mu: f64,
) -> ([[f64; 3]; 3], [f64; 3]) {
    let sd = deviatoric(&strain_rate(grad_u));
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sigma[i][j] = mu * sd[i][j];
        }
    }
    let q = [-mu * grad_t[0], -mu * grad_t[1], -mu * grad_t[2]];
    (sigma, q)
}

/// Dimensional reference set defining the nondimensionalization.
#[derive(Debug, Clone, Copy)]
pub struct DimensionalReferences {
    pub rho_r: f64,
    pub l_r: f64,
    pub v_r: f64,
    pub t_r: f64,
    pub mu_r: f64,
    pub r_gas: f64,
    pub gamma: f64,
    pub pr: f64,
}

/// Reference value of every nondimensionalized quantity class.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceScales {
    pub density: f64,
    pub length: f64,
    pub velocity: f64,
    pub temperature: f64,
    pub time: f64,
    pub pressure: f64,
    pub stress: f64,
    pub force: f64,
    pub energy: f64,
    pub heat_flux: f64,
    pub viscosity: f64,
}

impl DimensionalReferences {
    pub fn scales(&self) -> ReferenceScales {
        let cp = self.gamma * self.r_gas / (self.gamma - 1.0);
        ReferenceScales {
            density: self.rho_r,
            length: self.l_r,
            velocity: self.v_r,
            temperature: self.t_r,
            time: self.l_r / self.v_r,
            pressure: self.rho_r * self.r_gas * self.t_r,
            stress: self.mu_r * self.v_r / self.l_r,
            force: self.v_r * self.v_r / self.l_r,
            energy: self.r_gas * self.t_r,
            heat_flux: self.mu_r * cp * self.t_r / (self.pr * self.l_r),
            viscosity: self.mu_r,
        }
    }

    /// Bulk Mach number, V_r / sqrt(gamma R T_r).
    pub fn mach(&self) -> f64 {
        self.v_r / (self.gamma * self.r_gas * self.t_r).sqrt()
    }

    /// Bulk Reynolds number, rho_r V_r L_r / mu_r.
    pub fn reynolds(&self) -> f64 {
        self.rho_r * self.v_r * self.l_r / self.mu_r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn params() -> GasParameters {
        GasParameters::new(0.7, 2795.0)
    }

    #[test]
    fn kappa_value() {
        assert_relative_eq!(params().kappa(), 2.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn rest_state() {
        let p = params();
        let kappa = p.kappa();
        let u = [1.0, 0.0, 0.0, 0.0, (1.0 - kappa) / kappa];
        let prim = primitives_from_conserved(&u, 0.0, &p, 0).unwrap();
        assert_relative_eq!(prim.t, 1.0, epsilon = 1e-14);
        assert_relative_eq!(prim.p, 1.0, epsilon = 1e-14);
        assert_relative_eq!(prim.e_i, (1.0 - kappa) / kappa, epsilon = 1e-14);
    }

    #[test]
    fn round_trip_identity() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let rho = rng.gen_range(0.2..3.0);
            let u = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let t = rng.gen_range(0.3..2.5);
            let tau_kk = rng.gen_range(-0.01..0.05);
            let cons = conserved_from_primitives(rho, u, t, tau_kk, &p);
            let prim = primitives_from_conserved(&cons, tau_kk, &p, 0).unwrap();
            assert_relative_eq!(prim.rho, rho, max_relative = 1e-13);
            assert_relative_eq!(prim.t, t, max_relative = 1e-13);
            for d in 0..3 {
                assert_relative_eq!(prim.u[d], u[d], max_relative = 1e-13, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn positivity_errors() {
        let p = params();
        let u = [-1.0, 0.0, 0.0, 0.0, 1.0];
        assert!(matches!(
            primitives_from_conserved(&u, 0.0, &p, 5),
            Err(Error::PositivityViolation { element: 5, .. })
        ));
        // Kinetic energy exceeding total energy drives T < 0.
        let bad = [1.0, 3.0, 0.0, 0.0, 0.1];
        assert!(primitives_from_conserved(&bad, 0.0, &p, 1).is_err());
    }

    #[test]
    fn viscosity_power_law() {
        assert_relative_eq!(viscosity(1.0, 0.7), 1.0, epsilon = 1e-15);
        assert_relative_eq!(viscosity(1.378, 0.7), 1.378f64.powf(0.7), epsilon = 1e-15);
        assert_relative_eq!(viscosity(4.0, 0.5), 2.0, epsilon = 1e-15);
        // Monotone in T for alpha > 0.
        assert!(viscosity(1.2, 0.7) > viscosity(1.1, 0.7));
    }

    #[test]
    fn rigid_rotation_has_no_stress() {
        // u = Omega x r: grad_u antisymmetric.
        let g = [[0.0, -1.0, 0.5], [1.0, 0.0, -0.2], [-0.5, 0.2, 0.0]];
        let (sigma, _) = molecular_fluxes(&g, &[0.0; 3], 1.3);
        for row in sigma {
            for v in row {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pure_shear_stress() {
        // u = (y, 0, 0): S_12 = S_21 = 1, trace-free already.
        let mut g = [[0.0; 3]; 3];
        g[0][1] = 1.0;
        let (sigma, _) = molecular_fluxes(&g, &[0.0; 3], 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if (i, j) == (0, 1) || (i, j) == (1, 0) { 1.0 } else { 0.0 };
                assert_relative_eq!(sigma[i][j], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn uniform_dilation_is_stress_free() {
        // u = (x, y, z): S = 2I, deviator vanishes.
        let g = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s = strain_rate(&g);
        assert_relative_eq!(s[0][0], 2.0, epsilon = 1e-15);
        let (sigma, _) = molecular_fluxes(&g, &[0.0; 3], 2.0);
        for row in sigma {
            for v in row {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sigma_symmetric_traceless_always() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut g = [[0.0; 3]; 3];
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-2.0..2.0);
                }
            }
            let (sigma, _) = molecular_fluxes(&g, &[0.1, -0.2, 0.3], 0.8);
            let trace = sigma[0][0] + sigma[1][1] + sigma[2][2];
            assert!(trace.abs() < 1e-13);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((sigma[i][j] - sigma[j][i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn heat_flux_sign() {
        let g = [[0.0; 3]; 3];
        let (_, q) = molecular_fluxes(&g, &[2.0, 0.0, -1.0], 0.5);
        assert_relative_eq!(q[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(q[2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unit_references_are_identity() {
        let r = DimensionalReferences {
            rho_r: 1.0,
            l_r: 1.0,
            v_r: 1.0,
            t_r: 1.0,
            mu_r: 1.0,
            r_gas: 1.0,
            gamma: 1.4,
            pr: 1.0,
        };
        let s = r.scales();
        for v in [
            s.density, s.length, s.velocity, s.temperature, s.time, s.pressure, s.force,
            s.stress, s.viscosity,
        ] {
            assert_relative_eq!(v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn channel_reference_numbers() {
        // rho_r = bulk density, L_r = half height, V_r = bulk velocity,
        // T_r = wall temperature.
        let r = DimensionalReferences {
            rho_r: 1.18,
            l_r: 0.02,
            v_r: 34.7,
            t_r: 293.0,
            mu_r: 1.85e-5,
            r_gas: 287.0,
            gamma: 1.4,
            pr: 0.7,
        };
        assert_relative_eq!(
            r.reynolds(),
            1.18 * 34.7 * 0.02 / 1.85e-5,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            r.mach(),
            34.7 / (1.4f64 * 287.0 * 293.0).sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn scaling_round_trip() {
        let r = DimensionalReferences {
            rho_r: 0.9,
            l_r: 0.31,
            v_r: 12.0,
            t_r: 281.5,
            mu_r: 1.7e-5,
            r_gas: 287.0,
            gamma: 1.4,
            pr: 0.72,
        };
        let s = r.scales();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for scale in [
            s.density, s.length, s.velocity, s.temperature, s.time, s.pressure, s.stress,
            s.force, s.energy, s.heat_flux, s.viscosity,
        ] {
            let v: f64 = rng.gen_range(0.1..10.0);
            let nd = v / scale;
            assert_relative_eq!(nd * scale, v, max_relative = 1e-13);
        }
    }
}

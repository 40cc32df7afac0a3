//! Modal field storage, projection filters and Favre pointwise operations.
//!
//! The grid filter is the L2 projection onto the local polynomial space and
//! coincides with the discretization itself; the test filter truncates the
//! graded modal expansion to degree qhat < q. Favre-weighted quantities are
//! ratios of two polynomials and are carried as quadrature-node values, never
//! re-projected before entering flux evaluations.

use crate::basis::Basis;
use crate::mesh::ChannelMesh;
use crate::{Error, Result};

/// Number of conserved variables: density, momentum, total energy.
pub const N_CONS: usize = 5;
/// Auxiliary gradient entries: grad of [u1, u2, u3, T], 4 x 3.
pub const N_GRAD: usize = 12;

/// Per-element modal coefficients for a set of variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalField {
    pub n_elems: usize,
    pub n_vars: usize,
    pub n_modes: usize,
    /// Layout: `[elem][var][mode]`.
    pub data: Vec<f64>,
}

impl ModalField {
    pub fn zeros(n_elems: usize, n_vars: usize, n_modes: usize) -> Self {
        ModalField {
            n_elems,
            n_vars,
            n_modes,
            data: vec![0.0; n_elems * n_vars * n_modes],
        }
    }

    #[inline]
    pub fn elem(&self, e: usize) -> &[f64] {
        let s = self.n_vars * self.n_modes;
        &self.data[e * s..(e + 1) * s]
    }

    #[inline]
    pub fn elem_mut(&mut self, e: usize) -> &mut [f64] {
        let s = self.n_vars * self.n_modes;
        &mut self.data[e * s..(e + 1) * s]
    }

    #[inline]
    pub fn coeffs(&self, e: usize, var: usize) -> &[f64] {
        let base = (e * self.n_vars + var) * self.n_modes;
        &self.data[base..base + self.n_modes]
    }

    #[inline]
    pub fn coeffs_mut(&mut self, e: usize, var: usize) -> &mut [f64] {
        let base = (e * self.n_vars + var) * self.n_modes;
        &mut self.data[base..base + self.n_modes]
    }

    /// Zero all coefficients of modes with total degree > qhat, every
    /// element and variable. Requires qhat < q of the paired basis.
    pub fn test_filter(&self, basis: &Basis, qhat: usize) -> Result<ModalField> {
        if qhat >= basis.q {
            return Err(Error::invalid(format!(
                "test filter degree {qhat} must be < basis degree {}",
                basis.q
            )));
        }
        let keep = basis.n_modes_up_to(qhat);
        let mut out = self.clone();
        for e in 0..self.n_elems {
            for v in 0..self.n_vars {
                for c in &mut out.coeffs_mut(e, v)[keep..] {
                    *c = 0.0;
                }
            }
        }
        Ok(out)
    }
}

/// L2-project node samples of one variable onto the modal basis of one
/// element: `c_m = sum_n w_n f_n phi_m(n)` (orthonormal reference basis, so
/// the affine Jacobian cancels).
pub fn project_nodes(basis: &Basis, node_vals: &[f64], coeffs: &mut [f64]) {
    let nm = basis.n_modes;
    coeffs[..nm].fill(0.0);
    for (n, (&f, &w)) in node_vals.iter().zip(&basis.quad.weights).enumerate() {
        let wf = w * f;
        let phi = &basis.phi[n * nm..(n + 1) * nm];
        for (c, p) in coeffs[..nm].iter_mut().zip(phi) {
            *c += wf * p;
        }
    }
}

/// Evaluate the first `n_use` modal coefficients at all volume nodes.
pub fn evaluate_nodes(basis: &Basis, coeffs: &[f64], n_use: usize, node_vals: &mut [f64]) {
    let nm = basis.n_modes;
    for (n, out) in node_vals.iter_mut().enumerate() {
        let phi = &basis.phi[n * nm..n * nm + n_use];
        *out = phi.iter().zip(&coeffs[..n_use]).map(|(p, c)| p * c).sum();
    }
}

/// Evaluate reference gradients of the first `n_use` coefficients at all
/// volume nodes; `out[node][d]`.
pub fn evaluate_ref_grad_nodes(basis: &Basis, coeffs: &[f64], n_use: usize, out: &mut [[f64; 3]]) {
    let nm = basis.n_modes;
    for (n, g) in out.iter_mut().enumerate() {
        let mut acc = [0.0; 3];
        for (m, &c) in coeffs[..n_use].iter().enumerate() {
            let gm = &basis.grad_phi[(n * nm + m) * 3..(n * nm + m) * 3 + 3];
            acc[0] += c * gm[0];
            acc[1] += c * gm[1];
            acc[2] += c * gm[2];
        }
        *g = acc;
    }
}

/// Pointwise Favre ratio at quadrature nodes. Fails on nonpositive density;
/// the caller supplies the element id for diagnostics.
pub fn favre_ratio(rho_phi: &[f64], rho: &[f64], out: &mut [f64], element: usize) -> Result<()> {
    for ((o, &num), &den) in out.iter_mut().zip(rho_phi).zip(rho) {
        if !(den > 0.0) {
            return Err(Error::PositivityViolation {
                element,
                quantity: "filtered density",
                value: den,
            });
        }
        *o = num / den;
    }
    Ok(())
}

/// Grid- and test-filter length scales per element.
#[derive(Debug, Clone)]
pub struct FilterScales {
    pub delta: Vec<f64>,
    pub delta_hat: Vec<f64>,
}

/// Anisotropic filter-width estimate: Delta(K) = (prod_i D_i / N_q)^(1/3) f,
/// with the mesh-anisotropy factor
/// f = cosh sqrt{(4/27)[(ln a_l)^2 - ln a_l ln a_k + (ln a_k)^2]},
/// where a_l, a_k are the ratios of the two non-maximal hexahedron dimensions
/// to the maximal one. The test scale uses N_qhat in place of N_q.
pub fn filter_scales(mesh: &ChannelMesh, n_q: usize, n_qhat: usize) -> FilterScales {
    let mut delta = Vec::with_capacity(mesh.tets.len());
    let mut delta_hat = Vec::with_capacity(mesh.tets.len());
    for t in &mesh.tets {
        let d = t.hex_dims;
        let f = lilly_factor(d);
        let prod = d[0] * d[1] * d[2];
        delta.push((prod / n_q as f64).cbrt() * f);
        delta_hat.push((prod / n_qhat as f64).cbrt() * f);
    }
    FilterScales { delta, delta_hat }
}

/// Mesh-anisotropy factor of the filter-width formula.
pub fn lilly_factor(dims: [f64; 3]) -> f64 {
    let mut imax = 0;
    for i in 1..3 {
        if dims[i] > dims[imax] {
            imax = i;
        }
    }
    let others: Vec<f64> = (0..3).filter(|&i| i != imax).map(|i| dims[i]).collect();
    let al = (others[0] / dims[imax]).ln();
    let ak = (others[1] / dims[imax]).ln();
    ((4.0 / 27.0) * (al * al - al * ak + ak * ak)).sqrt().cosh()
}

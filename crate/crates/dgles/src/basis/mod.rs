//! Orthonormal modal basis on the reference tetrahedron.
//!
//! The basis functions are Koornwinder-Dubiner polynomials evaluated through
//! Jacobi recurrences in the collapsed coordinates of the unit tetrahedron
//! {x,y,z >= 0, x+y+z <= 1} and rescaled to unit L2 norm using the paired
//! quadrature rule. Modes are stored in graded order (all modes of total
//! degree <= d precede any mode of degree d+1), which is what allows the test
//! filter to act by plain coefficient truncation.

mod jacobi;
pub mod quadrature;

pub use quadrature::{build_face_quadrature, build_quadrature, TetQuadrature, TriQuadrature, MAX_DEGREE};

use crate::{Error, Result};
use jacobi::{jacobi, jacobi_deriv};

/// Vertices of the reference tetrahedron.
pub const REF_VERTS: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

/// Local vertex triple of reference face `f` (face f is opposite vertex f).
pub const FACE_VERTS: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// The six assignments of canonical face-node positions to face vertex slots.
pub const PERMS3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Dimension of the polynomial space P^q on a tetrahedron.
pub fn space_dim(q: usize) -> usize {
    (q + 1) * (q + 2) * (q + 3) / 6
}

/// Orthonormal modal basis of degree `q` with its paired volume and face
/// quadrature rules and precomputed node tables.
#[derive(Debug, Clone)]
pub struct Basis {
    pub q: usize,
    pub n_modes: usize,
    /// Koornwinder index triple per mode, graded by total degree.
    pub mode_indices: Vec<[usize; 3]>,
    pub mode_degree: Vec<usize>,
    pub quad: TetQuadrature,
    pub face_quad: TriQuadrature,
    /// Basis values at volume quadrature nodes, `phi[node * n_modes + m]`.
    pub phi: Vec<f64>,
    /// Reference gradients at volume nodes, `grad_phi[(node * n_modes + m) * 3 + d]`.
    pub grad_phi: Vec<f64>,
    /// Trace tables: `face_tables[face * 6 + perm][fnode * n_modes + m]`.
    pub face_tables: Vec<Vec<f64>>,
    /// Reference-gradient trace tables,
    /// `face_grad_tables[face * 6 + perm][(fnode * n_modes + m) * 3 + d]`.
    pub face_grad_tables: Vec<Vec<f64>>,
    scale: Vec<f64>,
}

impl Basis {
    pub fn new(q: usize) -> Result<Self> {
        if q > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "basis degree {q} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let quad = build_quadrature(q)?;
        let face_quad = build_face_quadrature(q)?;

        let mut mode_indices = Vec::with_capacity(space_dim(q));
        for d in 0..=q {
            for i in 0..=d {
                for j in 0..=(d - i) {
                    mode_indices.push([i, j, d - i - j]);
                }
            }
        }
        let n_modes = mode_indices.len();
        debug_assert_eq!(n_modes, space_dim(q));
        let mode_degree: Vec<usize> = mode_indices.iter().map(|m| m[0] + m[1] + m[2]).collect();

        let mut basis = Basis {
            q,
            n_modes,
            mode_indices,
            mode_degree,
            quad,
            face_quad,
            phi: Vec::new(),
            grad_phi: Vec::new(),
            face_tables: Vec::new(),
            face_grad_tables: Vec::new(),
            scale: vec![1.0; n_modes],
        };

        // Raw tables, then rescale every mode to unit L2 norm on the
        // reference element (the product phi_m^2 has degree <= 2q, so the
        // paired rule integrates it exactly).
        let n_nodes = basis.quad.nodes.len();
        let mut phi = vec![0.0; n_nodes * n_modes];
        let mut grad = vec![0.0; n_nodes * n_modes * 3];
        let mut vals = vec![0.0; n_modes];
        let mut grads = vec![[0.0; 3]; n_modes];
        for (n, node) in basis.quad.nodes.iter().enumerate() {
            basis.eval_raw(*node, &mut vals, Some(&mut grads));
            for m in 0..n_modes {
                phi[n * n_modes + m] = vals[m];
                grad[(n * n_modes + m) * 3..(n * n_modes + m) * 3 + 3]
                    .copy_from_slice(&grads[m]);
            }
        }
        for m in 0..n_modes {
            let norm2: f64 = (0..n_nodes)
                .map(|n| basis.quad.weights[n] * phi[n * n_modes + m] * phi[n * n_modes + m])
                .sum();
            basis.scale[m] = 1.0 / norm2.sqrt();
        }
        for n in 0..n_nodes {
            for m in 0..n_modes {
                phi[n * n_modes + m] *= basis.scale[m];
                for d in 0..3 {
                    grad[(n * n_modes + m) * 3 + d] *= basis.scale[m];
                }
            }
        }
        basis.phi = phi;
        basis.grad_phi = grad;

        // Trace tables for every (local face, canonical-order permutation).
        let nf = basis.face_quad.nodes.len();
        let mut tables = Vec::with_capacity(24);
        let mut grad_tables = Vec::with_capacity(24);
        let mut gbuf = vec![[0.0; 3]; n_modes];
        for f in 0..4 {
            for perm in PERMS3 {
                let mut table = vec![0.0; nf * n_modes];
                let mut gtable = vec![0.0; nf * n_modes * 3];
                for (fnode, st) in basis.face_quad.nodes.iter().enumerate() {
                    let bary = [1.0 - st[0] - st[1], st[0], st[1]];
                    let mut p = [0.0; 3];
                    for (pos, b) in bary.iter().enumerate() {
                        let v = REF_VERTS[FACE_VERTS[f][perm[pos]]];
                        for d in 0..3 {
                            p[d] += b * v[d];
                        }
                    }
                    basis.eval_point_grad(
                        p,
                        &mut table[fnode * n_modes..(fnode + 1) * n_modes],
                        &mut gbuf,
                    );
                    for m in 0..n_modes {
                        gtable[(fnode * n_modes + m) * 3..(fnode * n_modes + m) * 3 + 3]
                            .copy_from_slice(&gbuf[m]);
                    }
                }
                tables.push(table);
                grad_tables.push(gtable);
            }
        }
        basis.face_tables = tables;
        basis.face_grad_tables = grad_tables;
        Ok(basis)
    }

    /// Number of modes of total degree <= qhat (prefix length in graded order).
    pub fn n_modes_up_to(&self, qhat: usize) -> usize {
        space_dim(qhat.min(self.q))
    }

    /// Scaled basis values at an arbitrary reference point.
    pub fn eval_point(&self, p: [f64; 3], out: &mut [f64]) {
        self.eval_raw(p, out, None);
        for (v, s) in out.iter_mut().zip(&self.scale) {
            *v *= s;
        }
    }

    /// Scaled basis values and reference gradients at an arbitrary interior
    /// reference point. Gradients are singular on the collapsed edges of the
    /// Duffy transform; callers only use quadrature nodes, which are interior.
    pub fn eval_point_grad(&self, p: [f64; 3], vals: &mut [f64], grads: &mut [[f64; 3]]) {
        self.eval_raw(p, vals, Some(grads));
        for m in 0..self.n_modes {
            vals[m] *= self.scale[m];
            for d in 0..3 {
                grads[m][d] *= self.scale[m];
            }
        }
    }

    fn eval_raw(&self, p: [f64; 3], vals: &mut [f64], mut grads: Option<&mut [[f64; 3]]>) {
        let [x, y, z] = p;
        // Collapsed coordinates; at a collapsed edge the limit value is used.
        let d1 = 1.0 - y - z;
        let d2 = 1.0 - z;
        let a = if d1.abs() > 1e-14 { 2.0 * x / d1 - 1.0 } else { -1.0 };
        let b = if d2.abs() > 1e-14 { 2.0 * y / d2 - 1.0 } else { -1.0 };
        let c = 2.0 * z - 1.0;
        let hb = 0.5 * (1.0 - b);
        let hc = 0.5 * (1.0 - c);

        for (m, &[i, j, k]) in self.mode_indices.iter().enumerate() {
            let fa = jacobi(i, 0, 0, a);
            let gb = jacobi(j, 2 * i + 1, 0, b);
            let hkc = jacobi(k, 2 * (i + j) + 2, 0, c);
            let pb_i = hb.powi(i as i32);
            let pc_ij = hc.powi((i + j) as i32);
            vals[m] = fa * pb_i * gb * pc_ij * hkc;

            if let Some(gr) = grads.as_deref_mut() {
                let dfa = jacobi_deriv(i, 0, 0, a);
                let dgb = jacobi_deriv(j, 2 * i + 1, 0, b);
                let dhc = jacobi_deriv(k, 2 * (i + j) + 2, 0, c);
                let pb_im1 = if i >= 1 { hb.powi(i as i32 - 1) } else { 0.0 };
                let pc_ijm1 = if i + j >= 1 { hc.powi((i + j) as i32 - 1) } else { 0.0 };

                // d/dx
                let gx = if i == 0 {
                    0.0
                } else {
                    2.0 * dfa * pb_im1 * gb * pc_ijm1 * hkc
                };
                // shared first term of d/dy and d/dz
                let t1 = if i == 0 {
                    0.0
                } else {
                    (1.0 + a) * dfa * pb_im1 * gb * pc_ijm1 * hkc
                };
                // g'(b) = hb^i * P_j' - (i/2) hb^(i-1) P_j
                let gpb = pb_i * dgb - 0.5 * i as f64 * pb_im1 * gb;
                let t2y = if i + j == 0 { 0.0 } else { 2.0 * fa * gpb * pc_ijm1 * hkc };
                let gy = t1 + t2y;

                let t2z = if i + j == 0 {
                    0.0
                } else {
                    fa * (1.0 + b) * gpb * pc_ijm1 * hkc
                };
                // h'(c) = hc^(i+j) * P_k' - ((i+j)/2) hc^(i+j-1) P_k
                let hpc = pc_ij * dhc
                    - if i + j == 0 { 0.0 } else { 0.5 * (i + j) as f64 * pc_ijm1 * hkc };
                let t3 = 2.0 * fa * pb_i * gb * hpc;
                let gz = t1 + t2z + t3;

                gr[m] = [gx, gy, gz];
            }
        }
    }
}

/// Affine geometry of one physical tetrahedron.
#[derive(Debug, Clone)]
pub struct TetGeometry {
    /// Columns are the edge vectors v1-v0, v2-v0, v3-v0.
    pub jac: [[f64; 3]; 3],
    /// Inverse-transpose of the Jacobian (maps reference to physical gradients).
    pub inv_jac_t: [[f64; 3]; 3],
    pub det: f64,
    pub volume: f64,
    /// Twice the inradius: diameter of the inscribed sphere.
    pub h_min: f64,
    pub v0: [f64; 3],
}

/// Affine reference-to-physical map data for a (positively oriented) tet.
pub fn map_to_physical(verts: &[[f64; 3]; 4], element: usize) -> Result<TetGeometry> {
    let mut jac = [[0.0; 3]; 3];
    for col in 0..3 {
        for row in 0..3 {
            jac[row][col] = verts[col + 1][row] - verts[0][row];
        }
    }
    let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
    if det <= 1e-300 {
        return Err(Error::DegenerateElement {
            element,
            reason: format!("non-positive Jacobian determinant {det:.3e}"),
        });
    }
    let inv = |r: usize, c: usize| -> f64 {
        let m = |i: usize, j: usize| jac[i][j];
        let cof = match (r, c) {
            (0, 0) => m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1),
            (0, 1) => -(m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)),
            (0, 2) => m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0),
            (1, 0) => -(m(0, 1) * m(2, 2) - m(0, 2) * m(2, 1)),
            (1, 1) => m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0),
            (1, 2) => -(m(0, 0) * m(2, 1) - m(0, 1) * m(2, 0)),
            (2, 0) => m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1),
            (2, 1) => -(m(0, 0) * m(1, 2) - m(0, 2) * m(1, 0)),
            (2, 2) => m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0),
            _ => unreachable!(),
        };
        cof / det
    };
    // inv_jac_t[r][c] = (J^-1)[c][r]; (J^-1)[c][r] = cof(r, c)/det already
    // transposed through the cofactor index order below.
    let mut inv_jac_t = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            // (J^-T)[r][c] = (J^-1)[c][r] = adj[c][r]/det = cof[r][c]/det
            inv_jac_t[r][c] = inv(r, c);
        }
    }

    let volume = det / 6.0;
    let area = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| -> f64 {
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cx = u[1] * v[2] - u[2] * v[1];
        let cy = u[2] * v[0] - u[0] * v[2];
        let cz = u[0] * v[1] - u[1] * v[0];
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    };
    let total_area: f64 = FACE_VERTS
        .iter()
        .map(|f| area(verts[f[0]], verts[f[1]], verts[f[2]]))
        .sum();
    let h_min = 2.0 * 3.0 * volume / total_area;

    Ok(TetGeometry {
        jac,
        inv_jac_t,
        det,
        volume,
        h_min,
        v0: verts[0],
    })
}

impl TetGeometry {
    /// Physical position of a reference point.
    pub fn to_physical(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = self.v0;
        for r in 0..3 {
            for c in 0..3 {
                out[r] += self.jac[r][c] * p[c];
            }
        }
        out
    }

    /// Physical gradient from a reference gradient.
    pub fn phys_grad(&self, g: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r] += self.inv_jac_t[r][c] * g[c];
            }
        }
        out
    }
}

/// Public entry point matching the library surface: build the basis of
/// degree q (0 <= q <= 8) together with its quadrature rules.
pub fn build_basis(q: usize) -> Result<Basis> {
    Basis::new(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimensions() {
        assert_eq!(space_dim(0), 1);
        assert_eq!(space_dim(2), 10);
        assert_eq!(space_dim(4), 35);
        let b = Basis::new(4).unwrap();
        assert_eq!(b.n_modes, 35);
        assert_eq!(b.n_modes_up_to(2), 10);
        assert!(Basis::new(9).is_err());
    }

    #[test]
    fn graded_ordering() {
        let b = Basis::new(5).unwrap();
        for m in 1..b.n_modes {
            assert!(b.mode_degree[m] >= b.mode_degree[m - 1]);
        }
        assert_eq!(b.mode_degree[0], 0);
    }

    #[test]
    fn orthonormality_all_degrees() {
        for q in 0..=MAX_DEGREE {
            let b = Basis::new(q).unwrap();
            let n = b.quad.nodes.len();
            for m1 in 0..b.n_modes {
                for m2 in 0..=m1 {
                    let g: f64 = (0..n)
                        .map(|nd| {
                            b.quad.weights[nd] * b.phi[nd * b.n_modes + m1] * b.phi[nd * b.n_modes + m2]
                        })
                        .sum();
                    let expect = if m1 == m2 { 1.0 } else { 0.0 };
                    assert!(
                        (g - expect).abs() < 1e-12,
                        "q={q} gram({m1},{m2}) = {g:.3e}"
                    );
                }
            }
        }
    }

    #[test]
    fn constant_mode() {
        let b = Basis::new(0).unwrap();
        // Normalized constant on a volume-1/6 element is sqrt(6).
        assert_relative_eq!(b.phi[0], 6.0f64.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let b = Basis::new(4).unwrap();
        let p = [0.21, 0.33, 0.17];
        let h = 1e-6;
        let mut vals = vec![0.0; b.n_modes];
        let mut grads = vec![[0.0; 3]; b.n_modes];
        b.eval_point_grad(p, &mut vals, &mut grads);
        for d in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += h;
            pm[d] -= h;
            let mut vp = vec![0.0; b.n_modes];
            let mut vm = vec![0.0; b.n_modes];
            b.eval_point(pp, &mut vp);
            b.eval_point(pm, &mut vm);
            for m in 0..b.n_modes {
                let fd = (vp[m] - vm[m]) / (2.0 * h);
                assert_relative_eq!(grads[m][d], fd, epsilon = 1e-5, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn affine_map_gradients() {
        // Identity-mapped reference tet: physical gradients equal reference ones.
        let geo = map_to_physical(&REF_VERTS, 0).unwrap();
        let g = geo.phys_grad([1.0, 2.0, 3.0]);
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(g[1], 2.0, epsilon = 1e-14);
        assert_relative_eq!(g[2], 3.0, epsilon = 1e-14);

        // Uniform scaling by 2: gradients halve, volume scales by 8.
        let scaled: [[f64; 3]; 4] = [
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 2.0],
        ];
        let geo2 = map_to_physical(&scaled, 0).unwrap();
        let g2 = geo2.phys_grad([1.0, 2.0, 3.0]);
        assert_relative_eq!(g2[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(geo2.volume, 8.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_map_rejected() {
        let flat: [[f64; 3]; 4] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ];
        assert!(map_to_physical(&flat, 7).is_err());
    }

    #[test]
    fn random_affine_gradient_of_linear_function() {
        // On any affine tet the gradient of a linear function is recovered
        // exactly by J^-T applied to the reference gradient.
        let verts: [[f64; 3]; 4] = [
            [0.3, -0.2, 0.1],
            [1.1, 0.2, -0.3],
            [0.4, 1.3, 0.2],
            [-0.1, 0.3, 0.9],
        ];
        let geo = map_to_physical(&verts, 0).unwrap();
        // f(x) = 2x - y + 3z sampled at vertices defines the reference-space
        // linear interpolant; its reference gradient is J^T [2,-1,3].
        let coeff = [2.0, -1.0, 3.0];
        let mut ref_grad = [0.0; 3];
        for c in 0..3 {
            for r in 0..3 {
                ref_grad[c] += geo.jac[r][c] * coeff[r];
            }
        }
        let g = geo.phys_grad(ref_grad);
        for d in 0..3 {
            assert_relative_eq!(g[d], coeff[d], epsilon = 1e-13);
        }
    }

    #[test]
    fn trace_tables_match_point_evaluation() {
        let b = Basis::new(3).unwrap();
        // face 2 (y = 0), permutation [1,2,0]
        let perm_idx = 3;
        let table = &b.face_tables[2 * 6 + perm_idx];
        let mut vals = vec![0.0; b.n_modes];
        for (fnode, st) in b.face_quad.nodes.iter().enumerate() {
            let bary = [1.0 - st[0] - st[1], st[0], st[1]];
            let mut p = [0.0; 3];
            for (pos, w) in bary.iter().enumerate() {
                let v = REF_VERTS[FACE_VERTS[2][PERMS3[perm_idx][pos]]];
                for d in 0..3 {
                    p[d] += w * v[d];
                }
            }
            b.eval_point(p, &mut vals);
            for m in 0..b.n_modes {
                assert_relative_eq!(table[fnode * b.n_modes + m], vals[m], epsilon = 1e-13);
            }
        }
    }
}

//! Quadrature rules on the reference tetrahedron and triangle.
//!
//! Both rules are conical products of Gauss-Jacobi lines in the collapsed
//! (Duffy) coordinates, so all weights are positive and the strength is
//! 2q+1 >= 2q by construction, matching the exactness class required by the
//! modal discretization.

use super::jacobi::gauss_jacobi;
use crate::{Error, Result};

/// Maximum supported polynomial degree for bases and quadratures.
pub const MAX_DEGREE: usize = 8;

/// Positive quadrature rule on the unit reference tetrahedron
/// {x,y,z >= 0, x+y+z <= 1}, exact for total degree <= 2q+1.
#[derive(Debug, Clone)]
pub struct TetQuadrature {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Guaranteed exactness degree.
    pub degree: usize,
}

/// Positive quadrature rule on the unit reference triangle
/// {s,t >= 0, s+t <= 1}, exact for total degree <= 2q+1.
#[derive(Debug, Clone)]
pub struct TriQuadrature {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Build the tetrahedron rule paired with degree-q bases.
pub fn build_quadrature(q: usize) -> Result<TetQuadrature> {
    if q > MAX_DEGREE {
        return Err(Error::invalid(format!(
            "polynomial degree {q} exceeds supported maximum {MAX_DEGREE}"
        )));
    }
    let n = q + 1;
    let (xa, wa) = gauss_jacobi(n, 0, 0);
    let (xb, wb) = gauss_jacobi(n, 1, 0);
    let (xc, wc) = gauss_jacobi(n, 2, 0);

    let mut nodes = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (c, wc) in xc.iter().zip(&wc) {
        for (b, wb) in xb.iter().zip(&wb) {
            for (a, wa) in xa.iter().zip(&wa) {
                let z = 0.5 * (1.0 + c);
                let y = 0.25 * (1.0 + b) * (1.0 - c);
                let x = 0.125 * (1.0 + a) * (1.0 - b) * (1.0 - c);
                nodes.push([x, y, z]);
                weights.push(wa * wb * wc / 64.0);
            }
        }
    }
    Ok(TetQuadrature {
        nodes,
        weights,
        degree: 2 * n - 1,
    })
}

/// Build the triangle rule paired with degree-q bases (used on element faces).
pub fn build_face_quadrature(q: usize) -> Result<TriQuadrature> {
    if q > MAX_DEGREE {
        return Err(Error::invalid(format!(
            "polynomial degree {q} exceeds supported maximum {MAX_DEGREE}"
        )));
    }
    let n = q + 1;
    let (xa, wa) = gauss_jacobi(n, 0, 0);
    let (xb, wb) = gauss_jacobi(n, 1, 0);

    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (b, wb) in xb.iter().zip(&wb) {
        for (a, wa) in xa.iter().zip(&wa) {
            let t = 0.5 * (1.0 + b);
            let s = 0.25 * (1.0 + a) * (1.0 - b);
            nodes.push([s, t]);
            weights.push(wa * wb / 8.0);
        }
    }
    Ok(TriQuadrature {
        nodes,
        weights,
        degree: 2 * n - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Exact monomial moment on the unit tetrahedron:
    /// int x^a y^b z^c dV = a! b! c! / (a+b+c+3)!
    pub fn tet_moment(a: usize, b: usize, c: usize) -> f64 {
        let fact = |n: usize| -> u128 { (1..=n as u128).product::<u128>().max(1) };
        (fact(a) * fact(b) * fact(c)) as f64 / fact(a + b + c + 3) as f64
    }

    fn tri_moment(a: usize, b: usize) -> f64 {
        let fact = |n: usize| -> u128 { (1..=n as u128).product::<u128>().max(1) };
        (fact(a) * fact(b)) as f64 / fact(a + b + 2) as f64
    }

    #[test]
    fn volume_and_first_moment() {
        let rule = build_quadrature(2).unwrap();
        let vol: f64 = rule.weights.iter().sum();
        assert_relative_eq!(vol, 1.0 / 6.0, epsilon = 1e-14);
        let mx: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(n, w)| w * n[0])
            .sum();
        assert_relative_eq!(mx, 1.0 / 24.0, epsilon = 1e-14);
    }

    #[test]
    fn moment_exactness_up_to_2q() {
        for q in 0..=MAX_DEGREE {
            let rule = build_quadrature(q).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=2 * q {
                for b in 0..=(2 * q - a) {
                    for c in 0..=(2 * q - a - b) {
                        let num: f64 = rule
                            .nodes
                            .iter()
                            .zip(&rule.weights)
                            .map(|(n, w)| {
                                w * n[0].powi(a as i32) * n[1].powi(b as i32) * n[2].powi(c as i32)
                            })
                            .sum();
                        let exact = tet_moment(a, b, c);
                        assert_relative_eq!(num, exact, max_relative = 1e-12, epsilon = 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn face_rule_exactness() {
        for q in 0..=4 {
            let rule = build_face_quadrature(q).unwrap();
            let area: f64 = rule.weights.iter().sum();
            assert_relative_eq!(area, 0.5, epsilon = 1e-14);
            for a in 0..=2 * q {
                for b in 0..=(2 * q - a) {
                    let num: f64 = rule
                        .nodes
                        .iter()
                        .zip(&rule.weights)
                        .map(|(n, w)| w * n[0].powi(a as i32) * n[1].powi(b as i32))
                        .sum();
                    assert_relative_eq!(num, tri_moment(a, b), max_relative = 1e-12, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn degree_guard() {
        assert!(build_quadrature(9).is_err());
        assert!(build_face_quadrature(9).is_err());
    }
}

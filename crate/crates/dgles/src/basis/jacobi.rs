//! Jacobi polynomials and Gauss-Jacobi quadrature on [-1, 1].
//!
//! Only nonnegative integer weight exponents are needed here: the collapsed
//! coordinate transform of the reference tetrahedron produces weights
//! (1-x)^alpha with alpha in {0, 1, 2}.

use nalgebra::{DMatrix, SymmetricEigen};

/// Value of the Jacobi polynomial P_n^(alpha,beta) at `x`.
pub fn jacobi(n: usize, alpha: usize, beta: usize, x: f64) -> f64 {
    let (a, b) = (alpha as f64, beta as f64);
    if n == 0 {
        return 1.0;
    }
    let mut pm1 = 1.0;
    let mut p = 0.5 * ((a + b + 2.0) * x + (a - b));
    for k in 2..=n {
        let kf = k as f64;
        let c0 = 2.0 * kf * (kf + a + b) * (2.0 * kf + a + b - 2.0);
        let c1 = (2.0 * kf + a + b - 1.0)
            * ((2.0 * kf + a + b) * (2.0 * kf + a + b - 2.0) * x + a * a - b * b);
        let c2 = 2.0 * (kf + a - 1.0) * (kf + b - 1.0) * (2.0 * kf + a + b);
        let next = (c1 * p - c2 * pm1) / c0;
        pm1 = p;
        p = next;
    }
    p
}

/// Derivative of P_n^(alpha,beta) at `x`.
pub fn jacobi_deriv(n: usize, alpha: usize, beta: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    0.5 * (n as f64 + alpha as f64 + beta as f64 + 1.0) * jacobi(n - 1, alpha + 1, beta + 1, x)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Zeroth moment of the weight (1-x)^alpha (1+x)^beta on [-1, 1].
fn weight_moment(alpha: usize, beta: usize) -> f64 {
    // 2^(a+b+1) * B(a+1, b+1) with integer arguments.
    2f64.powi((alpha + beta + 1) as i32) * factorial(alpha) * factorial(beta)
        / factorial(alpha + beta + 1)
}

/// `n`-point Gauss-Jacobi rule for the weight (1-x)^alpha (1+x)^beta on
/// [-1, 1], exact for polynomials of degree <= 2n-1 against the weight.
///
/// Nodes are returned in increasing order. Computed by the Golub-Welsch
/// eigenvalue method from the monic three-term recurrence.
pub fn gauss_jacobi(n: usize, alpha: usize, beta: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "empty quadrature rule");
    let (a, b) = (alpha as f64, beta as f64);
    let mu0 = weight_moment(alpha, beta);

    let diag = |k: usize| -> f64 {
        let kf = k as f64;
        if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + a + b) * (2.0 * kf + a + b + 2.0))
        }
    };
    let offdiag_sq = |k: usize| -> f64 {
        let kf = k as f64;
        4.0 * kf * (kf + a) * (kf + b) * (kf + a + b)
            / ((2.0 * kf + a + b).powi(2) * (2.0 * kf + a + b + 1.0) * (2.0 * kf + a + b - 1.0))
    };

    let mut jmat = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jmat[(k, k)] = diag(k);
        if k + 1 < n {
            let e = offdiag_sq(k + 1).sqrt();
            jmat[(k, k + 1)] = e;
            jmat[(k + 1, k)] = e;
        }
    }

    let eig = SymmetricEigen::new(jmat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &i in &order {
        nodes.push(eig.eigenvalues[i]);
        let v0 = eig.eigenvectors[(0, i)];
        weights.push(mu0 * v0 * v0);
    }
    (nodes, weights)
}

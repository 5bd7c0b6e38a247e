//! Coefficient tables of the continuous Galerkin time discretization.
//!
//! On the reference interval `[0, 1]` the trial space is spanned by Lagrange
//! polynomials `Lhat_0..Lhat_q` on the nodes `0, s_1, .., s_q` (the `q`
//! Gauss points) and the test space by Lagrange polynomials `L_1..L_q` on
//! the Gauss points. With `m_ij = int Lhat_j' L_i` and `W = diag(w_i)`,
//! the stage system couples all stages through `M^{-1} W`; diagonalizing
//! `Sigma M^{-1} W Sigma^{-1} = Gamma` decouples it into `q` independent
//! shifted solves.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat};
use num_complex::Complex64;

use crate::fem::gauss_legendre;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CgTables {
    pub q: usize,
    /// Gauss nodes `s_1..s_q` on `[0, 1]`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `2q` Gauss nodes used for the nonlinear term.
    pub quad_nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// `m[i][j] = int_0^1 Lhat_j'(s) L_i(s) ds`, `i = 1..q`, `j = 0..q`.
    pub m: Vec<Vec<f64>>,
    /// `M^{-1} W`.
    pub mw: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<Complex64>>,
    pub sigma_inv: Vec<Vec<Complex64>>,
    pub gamma: Vec<Complex64>,
    /// Row sums of `Sigma`.
    pub a: Vec<Complex64>,
    /// Nonlinear coupling `b[i][nu]`.
    pub b: Vec<Vec<Complex64>>,
    /// `Lhat_0` at the quadrature nodes.
    pub c0: Vec<f64>,
    /// Stage-to-quadrature-node evaluation `c[i][nu]`.
    pub c: Vec<Vec<Complex64>>,
    /// `Lhat_j(1)`, `j = 0..q`.
    pub end_values: Vec<f64>,
    /// `Lhat_j(1 + s_i)`: the trial polynomial of one step evaluated at the
    /// stage nodes of the next.
    pub extrapolation: Vec<Vec<f64>>,
}

/// Lagrange basis polynomial `j` on `nodes`, evaluated at `s`.
pub fn lagrange(nodes: &[f64], j: usize, s: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != j)
        .map(|(_, &sm)| (s - sm) / (nodes[j] - sm))
        .product()
}

/// Derivative of Lagrange basis polynomial `j` on `nodes` at `s`.
pub fn lagrange_derivative(nodes: &[f64], j: usize, s: f64) -> f64 {
    let mut total = 0.0;
    for r in 0..nodes.len() {
        if r == j {
            continue;
        }
        let mut term = 1.0 / (nodes[j] - nodes[r]);
        for m in 0..nodes.len() {
            if m != j && m != r {
                term *= (s - nodes[m]) / (nodes[j] - nodes[m]);
            }
        }
        total += term;
    }
    total
}

fn to_vecs(m: &Mat<c64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl CgTables {
    /// Tables for polynomial degree `q` in time (`q = 1..=4`).
    pub fn new(q: usize) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Config(format!("time degree must be in 1..=4, got {q}")));
        }
        let (nodes, weights) = gauss_legendre(q);
        let (quad_nodes, quad_weights) = gauss_legendre(2 * q);
        let mut hat_nodes = vec![0.0];
        hat_nodes.extend_from_slice(&nodes);

        let m: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                (0..=q)
                    .map(|j| {
                        quad_nodes
                            .iter()
                            .zip(&quad_weights)
                            .map(|(&s, &w)| w * lagrange_derivative(&hat_nodes, j, s) * lagrange(&nodes, i, s))
                            .sum()
                    })
                    .collect()
            })
            .collect();

        let mq = Mat::<f64>::from_fn(q, q, |i, j| m[i][j + 1]);
        let mq_inv = mq.partial_piv_lu().inverse();
        let mw_mat = Mat::<f64>::from_fn(q, q, |i, j| mq_inv[(i, j)] * weights[j]);
        let mw: Vec<Vec<f64>> = (0..q).map(|i| (0..q).map(|j| mw_mat[(i, j)]).collect()).collect();

        let eig = mw_mat.eigen().map_err(|e| Error::Config(format!("eigendecomposition failed: {e:?}")))?;
        let u = eig.U().to_owned();
        let gamma: Vec<Complex64> = (0..q).map(|i| eig.S()[i]).collect();
        // Sigma = U^{-1}, so that Sigma (M^{-1} W) Sigma^{-1} = Gamma
        let sigma_inv_mat = u.clone();
        let sigma_mat = u.partial_piv_lu().inverse();
        let sigma = to_vecs(&sigma_mat);
        let sigma_inv = to_vecs(&sigma_inv_mat);

        let a: Vec<Complex64> = sigma.iter().map(|row| row.iter().sum()).collect();
        // Sigma M^{-1}
        let sm: Vec<Vec<Complex64>> = (0..q)
            .map(|i| (0..q).map(|j| (0..q).map(|k| sigma[i][k] * mq_inv[(k, j)]).sum()).collect())
            .collect();
        let nq = quad_nodes.len();
        let b: Vec<Vec<Complex64>> = (0..q)
            .map(|i| {
                (0..nq)
                    .map(|nu| {
                        let s = quad_nodes[nu];
                        let acc: Complex64 = (0..q).map(|j| sm[i][j] * lagrange(&nodes, j, s)).sum();
                        acc * quad_weights[nu]
                    })
                    .collect()
            })
            .collect();
        let c0: Vec<f64> = quad_nodes.iter().map(|&s| lagrange(&hat_nodes, 0, s)).collect();
        let c: Vec<Vec<Complex64>> = (0..q)
            .map(|i| {
                (0..nq)
                    .map(|nu| (0..q).map(|j| sigma_inv[j][i] * lagrange(&hat_nodes, j + 1, quad_nodes[nu])).sum())
                    .collect()
            })
            .collect();
        let end_values: Vec<f64> = (0..=q).map(|j| lagrange(&hat_nodes, j, 1.0)).collect();
        let extrapolation: Vec<Vec<f64>> =
            nodes.iter().map(|&s| (0..=q).map(|j| lagrange(&hat_nodes, j, 1.0 + s)).collect()).collect();

        Ok(CgTables {
            q,
            nodes,
            weights,
            quad_nodes,
            quad_weights,
            m,
            mw,
            sigma,
            sigma_inv,
            gamma,
            a,
            b,
            c0,
            c,
            end_values,
            extrapolation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_one_is_implicit_midpoint() {
        let t = CgTables::new(1).unwrap();
        assert_eq!(t.nodes, vec![0.5]);
        assert!((t.m[0][0] + 2.0).abs() < 1e-14);
        assert!((t.m[0][1] - 2.0).abs() < 1e-14);
        assert!((t.mw[0][0] - 0.5).abs() < 1e-14);
        assert!((t.gamma[0] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn diagonalization_holds() {
        for q in 1..=4 {
            let t = CgTables::new(q).unwrap();
            for i in 0..q {
                for j in 0..q {
                    // (Sigma MW Sigma^{-1})_ij
                    let mut v = Complex64::new(0.0, 0.0);
                    for k in 0..q {
                        for l in 0..q {
                            v += t.sigma[i][k] * t.mw[k][l] * t.sigma_inv[l][j];
                        }
                    }
                    let expected = if i == j { t.gamma[i] } else { Complex64::new(0.0, 0.0) };
                    assert!((v - expected).norm() < 1e-12, "q {q}");
                }
            }
            // trial basis derivatives sum to zero
            for row in &t.m {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn higher_degrees_have_complex_spectrum() {
        for q in 2..=4 {
            let t = CgTables::new(q).unwrap();
            assert!(t.gamma.iter().any(|g| g.im.abs() > 1e-3));
            assert!(t.gamma.iter().all(|g| g.re > 0.0));
        }
    }

    /// Scalar problem `i y' = lambda y` with the decoupled stage solves.
    fn scalar_step(t: &CgTables, lambda: f64, tau: f64, y0: Complex64) -> Complex64 {
        let i = Complex64::i();
        let u: Vec<Complex64> =
            (0..t.q).map(|k| t.a[k] * y0 / (Complex64::new(1.0, 0.0) + i * tau * t.gamma[k] * lambda)).collect();
        let mut y = t.end_values[0] * y0;
        for j in 0..t.q {
            let xj: Complex64 = (0..t.q).map(|k| t.sigma_inv[j][k] * u[k]).sum();
            y += t.end_values[j + 1] * xj;
        }
        y
    }

    #[test]
    fn scalar_order_and_unitarity() {
        let lambda = 3.0;
        for q in 1..=4 {
            let t = CgTables::new(q).unwrap();
            let mut errs = Vec::new();
            for n in [8usize, 16] {
                let tau = 1.0 / n as f64;
                let mut y = Complex64::new(1.0, 0.0);
                for _ in 0..n {
                    y = scalar_step(&t, lambda, tau, y);
                }
                assert!((y.norm() - 1.0).abs() < 1e-13);
                errs.push((y - (-Complex64::i() * lambda).exp()).norm());
            }
            let order = (errs[0] / errs[1]).log2();
            assert!((order - 2.0 * q as f64).abs() < 0.3 || errs[1] < 1e-13, "q {q}: order {order}");
        }
    }

    #[test]
    fn rejects_unsupported_degree() {
        assert!(CgTables::new(0).is_err());
        assert!(CgTables::new(5).is_err());
    }
}

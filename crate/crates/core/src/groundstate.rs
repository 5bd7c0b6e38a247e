//! Ground states by energy-adaptive Riemannian gradient iteration.
//!
//! Each step solves with the linearized operator
//! `S_k = kinetic A + V + beta N(rho_k)`, moves along the resulting
//! direction and renormalizes; the step size comes from a golden-section
//! line search on the discrete energy.

use std::sync::Arc;

use num_complex::Complex64;

use crate::fem::{ScalarField, SparseMatrix};
use crate::linalg::SpdSolver;
use crate::lod::LodSpace;
use crate::tritensor::Coefficient;
use crate::{Error, Result};

/// Discrete Gross-Pitaevskii problem on an LOD space:
/// energy `kinetic (grad u, grad u) + (V u, u) + beta/2 (|u|^2, P|u|^2)`,
/// where `P` is the L2 projection onto the space.
#[derive(Debug, Clone)]
pub struct GpeProblem {
    pub lod: Arc<LodSpace>,
    pub kinetic: f64,
    pub beta: f64,
    /// `Phi V Phi^T`.
    pub vmass: SparseMatrix,
}

pub(crate) fn quadratic<T: Coefficient>(m: &SparseMatrix, x: &[T]) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let (c, v) = m.row(i);
        let mut y = T::zero();
        for (&j, &a) in c.iter().zip(v) {
            y = y.add(x[j].scale(a));
        }
        s += T::re_conj_mul(y, x[i]);
    }
    s
}

impl GpeProblem {
    /// Problem with kinetic factor 1/2, as in the standard scaling.
    pub fn new(lod: Arc<LodSpace>, potential: &ScalarField, beta: f64) -> Result<Self> {
        Self::with_kinetic(lod, 0.5, potential, beta)
    }

    pub fn with_kinetic(lod: Arc<LodSpace>, kinetic: f64, potential: &ScalarField, beta: f64) -> Result<Self> {
        if !(kinetic > 0.0) {
            return Err(Error::Config("kinetic coefficient must be positive".into()));
        }
        let vmass = lod.potential_matrix(potential)?;
        Ok(GpeProblem { lod, kinetic, beta, vmass })
    }

    pub fn dim(&self) -> usize {
        self.lod.dim()
    }

    /// Matrix of the linear part, `kinetic A + V`.
    pub fn linear_operator(&self) -> SparseMatrix {
        self.lod.a_lod.add_scaled(self.kinetic, &self.vmass, 1.0)
    }

    /// Load vector `b` of `|u|^2` and its L2 projection coefficients `rho = M^{-1} b`.
    pub fn density<T: Coefficient>(&self, alpha: &[T]) -> (Vec<f64>, Vec<f64>) {
        let b = self.lod.omega.density_rhs(alpha);
        let rho = self.lod.mass_solver().solve(&b);
        (b, rho)
    }

    /// Load vector of the nonlinearity `P(|u|^2) u`.
    pub fn nonlinearity<T: Coefficient>(&self, alpha: &[T]) -> Vec<T> {
        let (_, rho) = self.density(alpha);
        self.lod.omega.nonlinear_apply(&rho, alpha)
    }

    /// Discrete energy with the projected quartic term.
    pub fn energy<T: Coefficient>(&self, alpha: &[T]) -> f64 {
        let (b, rho) = self.density(alpha);
        let quartic: f64 = b.iter().zip(&rho).map(|(x, y)| x * y).sum();
        self.kinetic * quadratic(&self.lod.a_lod, alpha) + quadratic(&self.vmass, alpha) + 0.5 * self.beta * quartic
    }

    /// Energy with the quartic term integrated exactly on the fine mesh.
    pub fn energy_exact_quartic(&self, alpha: &[Complex64]) -> Result<f64> {
        let quartic = self.lod.quartic_integral(alpha)?;
        Ok(self.kinetic * quadratic(&self.lod.a_lod, alpha)
            + quadratic(&self.vmass, alpha)
            + 0.5 * self.beta * quartic)
    }

    /// Rayleigh-quotient eigenvalue of a normalized state.
    pub fn eigenvalue<T: Coefficient>(&self, alpha: &[T]) -> f64 {
        let (b, rho) = self.density(alpha);
        let quartic: f64 = b.iter().zip(&rho).map(|(x, y)| x * y).sum();
        self.kinetic * quadratic(&self.lod.a_lod, alpha) + quadratic(&self.vmass, alpha) + self.beta * quartic
    }

    /// Squared L2 norm.
    pub fn mass<T: Coefficient>(&self, alpha: &[T]) -> f64 {
        quadratic(&self.lod.m_lod, alpha)
    }

    /// Scale to unit L2 norm.
    pub fn normalize(&self, alpha: &[f64]) -> Vec<f64> {
        let n = self.mass(alpha).sqrt();
        alpha.iter().map(|a| a / n).collect()
    }

    /// Normalized nodal interpolant of a positive Gaussian centred in the domain.
    pub fn initial_guess(&self) -> Vec<f64> {
        let coarse = &self.lod.pair.coarse;
        let dom = coarse.domain();
        let alpha: Vec<f64> = (0..coarse.n_dofs())
            .map(|d| {
                let x = coarse.vertex(coarse.vertex_of_dof(d));
                let r2: f64 =
                    x.iter().enumerate().map(|(a, xi)| (xi - 0.5 * (dom.lower[a] + dom.upper[a])).powi(2)).sum();
                (-0.5_f64 * r2).exp()
            })
            .collect();
        self.normalize(&alpha)
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateOptions {
    /// Stop when consecutive energies differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Search interval for the step size.
    pub theta_range: (f64, f64),
    pub theta_tol: f64,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions { tol: 1e-10, max_iter: 500, theta_range: (1e-3, 2.0 - 1e-3), theta_tol: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub alpha: Vec<f64>,
    pub energy: f64,
    pub eigenvalue: f64,
    pub iterations: usize,
    /// Energy after each iteration, starting with the initial guess.
    pub energy_history: Vec<f64>,
    /// Largest deviation of the squared norm from one over all iterates.
    pub max_norm_defect: f64,
}

/// Outcome of one gradient step.
#[derive(Debug, Clone)]
pub struct Step {
    pub alpha: Vec<f64>,
    pub energy: f64,
    pub theta: f64,
    /// True if no step size lowered the energy.
    pub stagnated: bool,
}

/// Iteration state holding the symbolic factorization of `S_k`.
pub struct GroundStateSolver<'a> {
    problem: &'a GpeProblem,
    linear: SparseMatrix,
    symbolic: faer::sparse::linalg::solvers::SymbolicLlt<usize>,
    options: GroundStateOptions,
}

impl<'a> GroundStateSolver<'a> {
    pub fn new(problem: &'a GpeProblem, options: GroundStateOptions) -> Result<Self> {
        if problem.beta < 0.0 {
            return Err(Error::Config("ground states require a non-negative interaction".into()));
        }
        let linear = problem.linear_operator();
        let pattern = linear.add_scaled(1.0, &problem.lod.m_lod, 0.0);
        let symbolic = SpdSolver::analyze(&pattern)?;
        Ok(GroundStateSolver { problem, linear, symbolic, options })
    }

    /// `S_k` for the density of `alpha`.
    pub fn linearized_operator(&self, alpha: &[f64]) -> SparseMatrix {
        let (_, rho) = self.problem.density(alpha);
        let n = self.problem.lod.omega.weighted_matrix(&rho, &self.problem.lod.m_lod);
        self.linear.add_scaled(1.0, &n, self.problem.beta)
    }

    /// One energy-adaptive step from the normalized state `alpha`.
    pub fn step(&self, alpha: &[f64], energy: f64) -> Result<Step> {
        let p = self.problem;
        let s = self.linearized_operator(alpha);
        let solver = SpdSolver::with_symbolic(&s, &self.symbolic)?;
        let malpha = p.lod.m_lod.matvec(alpha);
        let d = solver.solve(&malpha);
        let gamma = 1.0 / d.iter().zip(&malpha).map(|(x, y)| x * y).sum::<f64>();
        let candidate = |theta: f64| -> (Vec<f64>, f64) {
            let z: Vec<f64> = alpha.iter().zip(&d).map(|(a, di)| (1.0 - theta) * a + theta * gamma * di).collect();
            let z = p.normalize(&z);
            let e = p.energy(&z);
            (z, e)
        };

        // golden-section search for the step size
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = self.options.theta_range;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = candidate(x1).1;
        let mut f2 = candidate(x2).1;
        while hi - lo > self.options.theta_tol {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = candidate(x1).1;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = candidate(x2).1;
            }
        }
        let theta_star = if f1 <= f2 { x1 } else { x2 };
        let (z_star, e_star) = candidate(theta_star);
        let (z_one, e_one) = candidate(1.0);
        let (z, e, theta) = if e_star < e_one { (z_star, e_star, theta_star) } else { (z_one, e_one, 1.0) };
        if e > energy + 1e-13 {
            return Ok(Step { alpha: alpha.to_vec(), energy, theta, stagnated: true });
        }
        Ok(Step { alpha: z, energy: e, theta, stagnated: false })
    }

    /// Iterate from `initial` (or the Gaussian guess) until the energy settles.
    pub fn solve(&self, initial: Option<Vec<f64>>) -> Result<GroundState> {
        let p = self.problem;
        let mut alpha = p.normalize(&initial.unwrap_or_else(|| p.initial_guess()));
        let mut energy = p.energy(&alpha);
        let mut history = vec![energy];
        let mut defect: f64 = (p.mass(&alpha) - 1.0).abs();
        let mut last_change = f64::INFINITY;
        for it in 1..=self.options.max_iter {
            let step = self.step(&alpha, energy)?;
            last_change = (energy - step.energy).abs();
            alpha = step.alpha;
            energy = step.energy;
            history.push(energy);
            defect = defect.max((p.mass(&alpha) - 1.0).abs());
            if step.stagnated || last_change < self.options.tol {
                if alpha.iter().sum::<f64>() < 0.0 {
                    alpha.iter_mut().for_each(|a| *a = -*a);
                }
                let eigenvalue = p.eigenvalue(&alpha);
                return Ok(GroundState {
                    alpha,
                    energy,
                    eigenvalue,
                    iterations: it,
                    energy_history: history,
                    max_norm_defect: defect,
                });
            }
        }
        Err(Error::NotConverged { iterations: self.options.max_iter, last_change })
    }
}

/// Ground state with default options.
pub fn solve_ground_state(problem: &GpeProblem, options: GroundStateOptions) -> Result<GroundState> {
    GroundStateSolver::new(problem, options)?.solve(None)
}

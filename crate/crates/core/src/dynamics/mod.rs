//! Energy-conserving continuous Galerkin time stepping.
//!
//! The discrete equation `i M x' = S x + beta G(x)` with `S = kinetic A + V`
//! and `G(x)` the load vector of `P(|u|^2) u` is integrated with the
//! continuous Galerkin method of polynomial degree `q`. The stage system is
//! decoupled by the transformation in [`CgTables`] and solved with a fixed
//! point iteration in the nonlinear term; each stage operator
//! `M + i tau gamma_i S` is factored once per run.

mod tables;

use std::time::Instant;

use num_complex::Complex64;

pub use tables::{lagrange, lagrange_derivative, CgTables};

use crate::fem::{ElementGeometry, QuadratureRule};
use crate::groundstate::GpeProblem;
use crate::linalg::ComplexSolver;
use crate::mesh::NO_DOF;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct DynamicsOptions {
    /// Relative tolerance on the largest stage increment.
    pub fp_tol: f64,
    pub fp_max: usize,
    /// Record the solution every `snapshot_every` steps (0 disables).
    pub snapshot_every: usize,
    /// Also evaluate the energy with the exact quartic term at each snapshot.
    pub exact_energy: bool,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions { fp_tol: 1e-12, fp_max: 200, snapshot_every: 0, exact_energy: false }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Discrete energy with the projected quartic term.
    pub energy: Vec<f64>,
    /// Energy with the quartic term integrated on the fine mesh, per snapshot (if requested).
    pub energy_exact: Vec<f64>,
    pub mass: Vec<f64>,
    /// Fixed-point iterations per step.
    pub fp_iterations: Vec<usize>,
    pub snapshots: Vec<(f64, Vec<Complex64>)>,
    pub final_state: Vec<Complex64>,
    pub online_seconds: f64,
}

/// Largest deviation from the first entry; NaN if any entry is NaN.
fn max_deviation(v: &[f64]) -> f64 {
    v.iter().map(|x| (x - v[0]).abs()).fold(0.0, |a: f64, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

impl Trajectory {
    pub fn max_energy_drift(&self) -> f64 {
        max_deviation(&self.energy)
    }

    pub fn max_mass_drift(&self) -> f64 {
        max_deviation(&self.mass)
    }

    pub fn mean_fp_iterations(&self) -> f64 {
        if self.fp_iterations.is_empty() {
            return 0.0;
        }
        self.fp_iterations.iter().sum::<usize>() as f64 / self.fp_iterations.len() as f64
    }
}

/// Stage data of one step, exposed for verification.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next: Vec<Complex64>,
    /// Untransformed stage values `x^1..x^q` at the Gauss nodes.
    pub stages: Vec<Vec<Complex64>>,
    pub iterations: usize,
}

/// Time stepper for a fixed problem, degree and step size.
pub struct CgIntegrator<'a> {
    problem: &'a GpeProblem,
    tables: CgTables,
    tau: f64,
    solvers: Vec<ComplexSolver>,
    options: DynamicsOptions,
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl<'a> CgIntegrator<'a> {
    pub fn new(problem: &'a GpeProblem, q: usize, tau: f64, options: DynamicsOptions) -> Result<Self> {
        if tau == 0.0 || !tau.is_finite() {
            return Err(Error::Config("time step must be finite and nonzero".into()));
        }
        let tables = CgTables::new(q)?;
        let s = problem.linear_operator();
        let m = &problem.lod.m_lod;
        let one = Complex64::new(1.0, 0.0);
        let solvers = tables
            .gamma
            .iter()
            .map(|&g| ComplexSolver::combination(m, one, &s, Complex64::i() * tau * g))
            .collect::<Result<Vec<_>>>()?;
        Ok(CgIntegrator { problem, tables, tau, solvers, options })
    }

    pub fn tables(&self) -> &CgTables {
        &self.tables
    }

    /// Advance `x0` by one step. `guess` holds transformed stage guesses (or is
    /// empty) and is overwritten with guesses for the following step.
    pub fn step(&self, x0: &[Complex64], guess: &mut Vec<Vec<Complex64>>) -> Result<StepResult> {
        let t = &self.tables;
        let (q, n) = (t.q, x0.len());
        let p = self.problem;
        let mx0 = p.lod.m_lod.matvec_complex(x0);
        if guess.len() != q {
            *guess = (0..q).map(|i| x0.iter().map(|&z| t.a[i] * z).collect()).collect();
        }
        let ib_tau = Complex64::i() * p.beta * self.tau;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let g: Vec<Vec<Complex64>> = if p.beta != 0.0 {
                (0..t.quad_nodes.len())
                    .map(|nu| {
                        let y: Vec<Complex64> = (0..n)
                            .map(|k| {
                                let mut v = x0[k] * t.c0[nu];
                                for (i, gi) in guess.iter().enumerate() {
                                    v += t.c[i][nu] * gi[k];
                                }
                                v
                            })
                            .collect();
                        p.nonlinearity(&y)
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let mut increment: f64 = 0.0;
            for i in 0..q {
                let rhs: Vec<Complex64> = (0..n)
                    .map(|k| {
                        let mut v = t.a[i] * mx0[k];
                        for (nu, gn) in g.iter().enumerate() {
                            v -= ib_tau * t.b[i][nu] * gn[k];
                        }
                        v
                    })
                    .collect();
                let u = self.solvers[i].solve(&rhs);
                let diff: Vec<Complex64> = u.iter().zip(&guess[i]).map(|(a, b)| a - b).collect();
                let nu = norm(&u);
                let rel = if nu > 0.0 { norm(&diff) / nu } else { norm(&diff) };
                // f64::max would swallow a NaN
                increment = if rel.is_nan() || increment.is_nan() { f64::NAN } else { increment.max(rel) };
                guess[i] = u;
            }
            if !increment.is_finite() || increment > 1e8 {
                return Err(Error::FixedPointDiverged { step: 0, increment });
            }
            if increment < self.options.fp_tol || p.beta == 0.0 {
                break;
            }
            if iterations >= self.options.fp_max {
                return Err(Error::FixedPointDiverged { step: 0, increment });
            }
        }
        let stages: Vec<Vec<Complex64>> = (0..q)
            .map(|j| (0..n).map(|k| (0..q).map(|i| t.sigma_inv[j][i] * guess[i][k]).sum()).collect())
            .collect();
        let next: Vec<Complex64> = (0..n)
            .map(|k| {
                let mut v = x0[k] * t.end_values[0];
                for j in 0..q {
                    v += stages[j][k] * t.end_values[j + 1];
                }
                v
            })
            .collect();
        // start the next step from this step's polynomial, extrapolated
        let ext: Vec<Vec<Complex64>> = t
            .extrapolation
            .iter()
            .map(|row| (0..n).map(|k| (0..q).fold(x0[k] * row[0], |v, j| v + stages[j][k] * row[j + 1])).collect())
            .collect();
        for (i, g) in guess.iter_mut().enumerate() {
            for k in 0..n {
                g[k] = (0..q).map(|j| t.sigma[i][j] * ext[j][k]).sum();
            }
        }
        Ok(StepResult { next, stages, iterations })
    }

    /// Integrate from `alpha0` over `n_steps` steps.
    pub fn run(&self, alpha0: &[Complex64], n_steps: usize) -> Result<Trajectory> {
        match self.run_partial(alpha0, n_steps) {
            (tr, None) => Ok(tr),
            (_, Some(e)) => Err(e),
        }
    }

    /// Like [`run`](Self::run), but on failure also returns the trajectory
    /// recorded up to the last completed step.
    pub fn run_partial(&self, alpha0: &[Complex64], n_steps: usize) -> (Trajectory, Option<Error>) {
        let p = self.problem;
        let start = Instant::now();
        let mut tr = Trajectory::default();
        let record = |tr: &mut Trajectory, time: f64, x: &[Complex64], snapshot: bool| -> Result<()> {
            tr.times.push(time);
            tr.energy.push(p.energy(x));
            tr.mass.push(p.mass(x));
            if snapshot {
                tr.snapshots.push((time, x.to_vec()));
                if self.options.exact_energy {
                    tr.energy_exact.push(p.energy_exact_quartic(x)?);
                }
            }
            Ok(())
        };
        let every = self.options.snapshot_every;
        let mut x = alpha0.to_vec();
        let mut failure = record(&mut tr, 0.0, &x, every > 0).err();
        let mut guess = Vec::new();
        for n in 1..=n_steps {
            if failure.is_some() {
                break;
            }
            match self.step(&x, &mut guess) {
                Ok(r) => {
                    x = r.next;
                    tr.fp_iterations.push(r.iterations);
                    failure = record(&mut tr, n as f64 * self.tau, &x, every > 0 && n % every == 0).err();
                }
                Err(Error::FixedPointDiverged { increment, .. }) => {
                    failure = Some(Error::FixedPointDiverged { step: n, increment });
                }
                Err(e) => failure = Some(e),
            }
        }
        tr.final_state = x;
        tr.online_seconds = start.elapsed().as_secs_f64();
        (tr, failure)
    }
}

/// Number of steps of size `tau` covering `[0, t_end]`; `t_end / tau` must be an integer.
pub fn step_count(tau: f64, t_end: f64) -> Result<usize> {
    let n = (t_end / tau).round();
    if n < 1.0 || ((n * tau - t_end).abs() > 1e-9 * t_end.abs().max(1.0)) {
        return Err(Error::Config(format!("final time {t_end} is not a multiple of the step {tau}")));
    }
    Ok(n as usize)
}

/// Integrate from LOD coefficients `alpha0` up to `t_end`.
pub fn integrate(
    problem: &GpeProblem,
    alpha0: &[Complex64],
    tau: f64,
    t_end: f64,
    q: usize,
    options: DynamicsOptions,
) -> Result<Trajectory> {
    let n = step_count(tau, t_end)?;
    CgIntegrator::new(problem, q, tau, options)?.run(alpha0, n)
}

/// LOD coefficients of the form-orthogonal projection of `u0`.
pub fn project_initial_value(problem: &GpeProblem, u0: impl Fn(&[f64]) -> Complex64) -> Result<Vec<Complex64>> {
    let fine = &problem.lod.pair.fine;
    let values: Vec<Complex64> = (0..fine.n_dofs()).map(|d| u0(fine.vertex(fine.vertex_of_dof(d)))).collect();
    problem.lod.project_a(&values)
}

/// Relative L2 error and relative gradient error of `alpha` against `exact`,
/// which returns the value and gradient at a point. Integrated on the fine mesh.
pub fn relative_errors(
    problem: &GpeProblem,
    alpha: &[Complex64],
    exact: impl Fn(&[f64]) -> (Complex64, [Complex64; 3]),
) -> Result<(f64, f64)> {
    let lod = &problem.lod;
    let fine = &lod.pair.fine;
    let d = fine.dim();
    let rule = QuadratureRule::new(d, 5)?;
    let u = lod.to_fine_complex(alpha);
    let (mut e0, mut e1, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..fine.n_simplices() {
        let geo = ElementGeometry::new(fine, t);
        let s = fine.simplex(t);
        let vals: Vec<Complex64> = s
            .iter()
            .map(|&v| if fine.dof(v) == NO_DOF { Complex64::new(0.0, 0.0) } else { u[fine.dof(v)] })
            .collect();
        let mut grad = [Complex64::new(0.0, 0.0); 3];
        for (a, &va) in vals.iter().enumerate() {
            for r in 0..d {
                grad[r] += va * geo.grads[a][r];
            }
        }
        for qp in 0..rule.n_points() {
            let l = rule.bary(qp);
            let x = geo.point(l);
            let w = rule.weights()[qp] * geo.volume;
            let uh: Complex64 = vals.iter().zip(l).map(|(a, &b)| a * b).sum();
            let (ue, ge) = exact(&x[..d]);
            e0 += w * (ue - uh).norm_sqr();
            n0 += w * ue.norm_sqr();
            for r in 0..d {
                e1 += w * (ge[r] - grad[r]).norm_sqr();
                n1 += w * ge[r].norm_sqr();
            }
        }
    }
    Ok(((e0 / n0).sqrt(), (e1 / n1).sqrt()))
}

/// Experimental orders of convergence between consecutive step sizes.
pub fn eoc(errors: &[f64], taus: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(taus.windows(2))
        .map(|(e, t)| (e[0] / e[1]).ln() / (t[0] / t[1]).ln())
        .collect()
}

/// Least-squares slope of `log(error)` against `log(tau)`.
pub fn fitted_order(errors: &[f64], taus: &[f64]) -> f64 {
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::ScalarField;
    use crate::lod::{BilinearForm, LodOptions, LodSpace};
    use crate::mesh::{build_box_mesh, refine_uniform, BoxDomain};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn problem(beta: f64) -> GpeProblem {
        let c = build_box_mesh(&BoxDomain::cube(1, -4.0, 4.0).unwrap(), &[16]).unwrap();
        let pair = refine_uniform(&c, 3).unwrap();
        let lod = Arc::new(LodSpace::build(pair, BilinearForm::canonical(), 3, LodOptions::default()).unwrap());
        let v = ScalarField::new("harmonic", true, |x| 0.5 * x[0] * x[0]);
        GpeProblem::new(lod, &v, beta).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn global_phase_commutes_with_integration(phase in 0.0f64..std::f64::consts::TAU, q in 1usize..4) {
            let p = problem(10.0);
            let x0 = initial(&p);
            let rot = Complex64::from_polar(1.0, phase);
            let x0r: Vec<Complex64> = x0.iter().map(|z| z * rot).collect();
            let a = integrate(&p, &x0, 0.1, 0.5, q, DynamicsOptions::default()).unwrap().final_state;
            let b = integrate(&p, &x0r, 0.1, 0.5, q, DynamicsOptions::default()).unwrap().final_state;
            let d: Vec<Complex64> = a.iter().zip(&b).map(|(u, v)| u * rot - v).collect();
            prop_assert!(norm(&d) < 1e-10 * norm(&a));
        }
    }

    fn initial(p: &GpeProblem) -> Vec<Complex64> {
        project_initial_value(p, |x| Complex64::new((-x[0] * x[0]).exp(), 0.3 * x[0] * (-x[0] * x[0]).exp()))
            .unwrap()
    }

    #[test]
    fn energy_and_mass_conserved() {
        for beta in [0.0, 10.0, -2.0] {
            let p = problem(beta);
            let x0 = initial(&p);
            for q in 1..=3 {
                let tr = integrate(&p, &x0, 0.05, 1.0, q, DynamicsOptions::default()).unwrap();
                let scale = 1.0 + tr.energy[0].abs();
                assert!(tr.max_energy_drift() < 1e-10 * scale, "q {q}: {:e}", tr.max_energy_drift());
                if beta == 0.0 {
                    assert!(tr.max_mass_drift() < 1e-12 * tr.mass[0], "q {q}");
                }
            }
        }
    }

    /// With interaction the mass defect comes from the time quadrature of the
    /// nonlinear term and shrinks like `tau^(2q)`.
    #[test]
    fn mass_defect_order() {
        let p = problem(10.0);
        let x0 = initial(&p);
        for q in 1..=3 {
            let drift = |tau: f64| integrate(&p, &x0, tau, 1.0, q, DynamicsOptions::default()).unwrap().max_mass_drift();
            let ratio = drift(0.1) / drift(0.05);
            let expected = 4f64.powi(q as i32);
            assert!(ratio > 0.6 * expected && ratio < 1.6 * expected, "q {q}: ratio {ratio}");
        }
    }

    /// Residual of the untransformed stage equations
    /// `sum_j m_ij M x^j + i tau w_i S x^i + i beta tau sum_nu w_nu L_i(s_nu) G(y_nu)`.
    #[test]
    fn stages_solve_the_coupled_system() {
        let p = problem(10.0);
        let x0 = initial(&p);
        for q in 1..=4 {
            let integ = CgIntegrator::new(&p, q, 0.05, DynamicsOptions::default()).unwrap();
            let t = integ.tables().clone();
            let r = integ.step(&x0, &mut Vec::new()).unwrap();
            let mut all = vec![x0.clone()];
            all.extend(r.stages.iter().cloned());
            let mut hat_nodes = vec![0.0];
            hat_nodes.extend_from_slice(&t.nodes);
            let s = p.linear_operator();
            let n = x0.len();
            let gs: Vec<Vec<Complex64>> = t
                .quad_nodes
                .iter()
                .map(|&sn| {
                    let y: Vec<Complex64> =
                        (0..n).map(|k| (0..=q).map(|j| all[j][k] * lagrange(&hat_nodes, j, sn)).sum()).collect();
                    p.nonlinearity(&y)
                })
                .collect();
            let scale = norm(&p.lod.m_lod.matvec_complex(&x0));
            for i in 0..q {
                let mut res = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..=q {
                    let mx = p.lod.m_lod.matvec_complex(&all[j]);
                    res.iter_mut().zip(&mx).for_each(|(a, b)| *a += t.m[i][j] * b);
                }
                let sx = s.matvec_complex(&r.stages[i]);
                res.iter_mut().zip(&sx).for_each(|(a, b)| *a += Complex64::i() * 0.05 * t.weights[i] * b);
                for (nu, g) in gs.iter().enumerate() {
                    let c = Complex64::i() * p.beta * 0.05 * t.quad_weights[nu] * lagrange(&t.nodes, i, t.quad_nodes[nu]);
                    res.iter_mut().zip(g).for_each(|(a, b)| *a += c * b);
                }
                assert!(norm(&res) < 1e-10 * scale, "q {q} stage {i}: {:e}", norm(&res) / scale);
            }
        }
    }

    #[test]
    fn temporal_convergence_orders() {
        let p = problem(5.0);
        let x0 = initial(&p);
        let reference = integrate(&p, &x0, 1.0 / 256.0, 0.5, 3, DynamicsOptions::default()).unwrap().final_state;
        for (q, expected) in [(1, 2.0), (2, 4.0)] {
            let taus = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
            let errs: Vec<f64> = taus
                .iter()
                .map(|&tau| {
                    let x = integrate(&p, &x0, tau, 0.5, q, DynamicsOptions::default()).unwrap().final_state;
                    let d: Vec<Complex64> = x.iter().zip(&reference).map(|(a, b)| a - b).collect();
                    p.mass(&d).sqrt()
                })
                .collect();
            let order = fitted_order(&errs, &taus);
            assert!((order - expected).abs() < 0.5, "q {q}: order {order}");
        }
    }

    /// Diagonal Pade approximant of `exp(z)`, the stability function of the
    /// q-stage Gauss collocation method.
    fn pade(q: usize, z: Complex64) -> Complex64 {
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let coef = |j: usize| fact(2 * q - j) * fact(q) / (fact(2 * q) * fact(j) * fact(q - j));
        let num: Complex64 = (0..=q).map(|j| coef(j) * z.powu(j as u32)).sum();
        let den: Complex64 = (0..=q).map(|j| coef(j) * (-z).powu(j as u32)).sum();
        num / den
    }

    #[test]
    fn single_dof_step_is_pade() {
        let c = build_box_mesh(&BoxDomain::cube(1, 0.0, 1.0).unwrap(), &[2]).unwrap();
        let pair = refine_uniform(&c, 1).unwrap();
        let lod = Arc::new(LodSpace::build(pair, BilinearForm::canonical(), 1, LodOptions::default()).unwrap());
        let p = GpeProblem::new(lod, &ScalarField::zero(), 0.0).unwrap();
        let lambda = 0.5 * p.lod.a_lod.get(0, 0) / p.lod.m_lod.get(0, 0);
        let tau = 0.1;
        for q in 1..=4 {
            let integ = CgIntegrator::new(&p, q, tau, DynamicsOptions::default()).unwrap();
            let x0 = [Complex64::new(0.3, -0.7)];
            let x1 = integ.step(&x0, &mut Vec::new()).unwrap().next;
            let expected = x0[0] * pade(q, -Complex64::i() * tau * lambda);
            assert!((x1[0] - expected).norm() < 1e-13, "q {q}");
        }
    }

    #[test]
    fn stepping_back_returns_to_start() {
        let p = problem(10.0);
        let x0 = initial(&p);
        for q in 1..=3 {
            let fwd = CgIntegrator::new(&p, q, 0.05, DynamicsOptions::default()).unwrap();
            let bwd = CgIntegrator::new(&p, q, -0.05, DynamicsOptions::default()).unwrap();
            let x1 = fwd.step(&x0, &mut Vec::new()).unwrap().next;
            let back = bwd.step(&x1, &mut Vec::new()).unwrap().next;
            let d: Vec<Complex64> = back.iter().zip(&x0).map(|(a, b)| a - b).collect();
            assert!(norm(&d) < 100.0 * 1e-12 * norm(&x0), "q {q}: {:e}", norm(&d));
        }
    }

    #[test]
    fn step_count_checks_divisibility() {
        assert_eq!(step_count(0.25, 1.0).unwrap(), 4);
        assert!(step_count(0.3, 1.0).is_err());
    }

    #[test]
    fn eoc_matches_hand_computation() {
        let r = eoc(&[0.03841, 0.03401], &[200.0 / 22500.0, 200.0 / 23000.0]);
        assert_eq!(format!("{:.2}", r[0]), "5.54");
    }

    #[test]
    fn eoc_of_exact_powers() {
        let taus = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = taus.iter().map(|t: &f64| 3.0 * t.powi(4)).collect();
        assert!(eoc(&errs, &taus).iter().all(|r| (r - 4.0).abs() < 1e-12));
        assert!((fitted_order(&errs, &taus) - 4.0).abs() < 1e-12);
    }
}

//! Experiment drivers: ground-state sweeps, step-size sweeps and the coupled run.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::bench::config::{ExperimentConfig, Level, Problem};
use crate::bench::problems::{exact_soliton_with_derivative, potential};
use crate::bench::report::{DynamicsRow, GroundStateRow, TraceRow};
use crate::dynamics::{
    eoc, project_initial_value, relative_errors, step_count, CgIntegrator, DynamicsOptions, Trajectory,
};
use crate::groundstate::{solve_ground_state, GpeProblem, GroundStateOptions};
use crate::lod::LodSpace;
use crate::{Error, Result};

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } => 2,
        Error::FixedPointDiverged { .. } => 3,
        Error::Config(_) | Error::DimensionMismatch(_) => 4,
        _ => 1,
    }
}

fn status_of(e: &Error) -> String {
    let tag = match e {
        Error::NotConverged { .. } => "not_converged",
        Error::FixedPointDiverged { .. } => "fixed_point_diverged",
        Error::Config(_) => "config",
        Error::IllPosedPatch(_) => "ill_posed_patch",
        Error::Factorization(_) => "factorization",
        Error::MissingTriple(..) => "missing_triple",
        Error::Cache(_) => "cache",
        _ => "error",
    };
    format!("{tag}: {e}")
}

pub fn build_space(cfg: &ExperimentConfig, level: &Level) -> Result<Arc<LodSpace>> {
    let pair = cfg.mesh_pair(level)?;
    Ok(Arc::new(LodSpace::build(pair, cfg.bilinear_form()?, level.ell, cfg.lod_options())?))
}

fn gs_options(cfg: &ExperimentConfig) -> GroundStateOptions {
    GroundStateOptions { tol: cfg.tol, max_iter: cfg.max_iters, ..GroundStateOptions::default() }
}

fn dyn_options(cfg: &ExperimentConfig) -> DynamicsOptions {
    DynamicsOptions {
        fp_tol: cfg.fp_tol,
        fp_max: cfg.fp_max,
        snapshot_every: cfg.snapshot_every,
        ..DynamicsOptions::default()
    }
}

fn groundstate_row(cfg: &ExperimentConfig, level: &Level) -> GroundStateRow {
    let factor = level.factor.unwrap_or(cfg.factor);
    let mut row = GroundStateRow {
        h: level.h,
        ell: level.ell,
        factor,
        form: format!("{:?}", cfg.form).to_lowercase(),
        e_lod: None,
        e_exactform: None,
        lambda: None,
        iters: None,
        err_vs_ref: None,
        t_basis_s: 0.0,
        t_omega_s: 0.0,
        t_online_s: 0.0,
        status: "ok".into(),
    };
    let result = (|| -> Result<()> {
        let lod = build_space(cfg, level)?;
        row.t_basis_s = lod.timings.basis;
        row.t_omega_s = lod.timings.omega;
        let problem = GpeProblem::with_kinetic(lod, cfg.kinetic, &cfg.trap()?, cfg.beta)?;
        let start = Instant::now();
        let gs = solve_ground_state(&problem, gs_options(cfg))?;
        row.t_online_s = start.elapsed().as_secs_f64();
        let alpha: Vec<Complex64> = gs.alpha.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        row.e_lod = Some(gs.energy);
        row.e_exactform = Some(problem.energy_exact_quartic(&alpha)?);
        row.lambda = Some(gs.eigenvalue);
        row.iters = Some(gs.iterations);
        row.err_vs_ref = cfg.reference_energy.map(|r| gs.energy - r);
        Ok(())
    })();
    if let Err(e) = result {
        row.status = status_of(&e);
    }
    row
}

/// Ground state for every level of the sweep. A failed level is kept as a
/// row with its error in `status`; the sweep continues.
pub fn run_groundstate(cfg: &ExperimentConfig) -> Result<Vec<GroundStateRow>> {
    cfg.validate()?;
    Ok(cfg.sweep().iter().map(|level| groundstate_row(cfg, level)).collect())
}

/// Initial data of an `evolve` run: the exact solution for the soliton,
/// otherwise the ground state in the initial trap (or the trap itself).
fn initial_state(cfg: &ExperimentConfig, lod: &Arc<LodSpace>) -> Result<Vec<Complex64>> {
    if cfg.problem == Problem::Soliton {
        let problem = GpeProblem::with_kinetic(lod.clone(), cfg.kinetic, &cfg.trap()?, cfg.beta)?;
        return project_initial_value(&problem, |x| exact_soliton_with_derivative(x[0], 0.0).0);
    }
    let v0 = potential(cfg.initial_potential.as_deref().unwrap_or(&cfg.potential))?;
    let beta = cfg.beta.max(0.0);
    let problem = GpeProblem::with_kinetic(lod.clone(), cfg.kinetic, &v0, beta)?;
    let gs = solve_ground_state(&problem, gs_options(cfg))?;
    Ok(gs.alpha.iter().map(|&a| Complex64::new(a, 0.0)).collect())
}

fn trajectory_row(tau: f64, q: usize, tr: &Trajectory) -> DynamicsRow {
    DynamicsRow {
        tau,
        q,
        rel_l2: None,
        rel_h1: None,
        eoc_l2: None,
        energy_drift: Some(tr.max_energy_drift()),
        mass_drift: Some(tr.max_mass_drift()),
        fp_iters_mean: Some(tr.mean_fp_iterations()),
        t_online_s: tr.online_seconds,
        status: "ok".into(),
    }
}

fn coefficient_error(a: &crate::fem::SparseMatrix, x: &[Complex64], reference: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    (a.hermitian_form(&d) / a.hermitian_form(reference)).sqrt()
}

/// Step-size sweep on one space. The soliton problem is measured against
/// the exact solution at `T`; other problems against the run with the
/// smallest step. EOC cells are empty where no predecessor has an error.
pub fn run_evolve(cfg: &ExperimentConfig) -> Result<Vec<DynamicsRow>> {
    cfg.validate()?;
    let level = cfg.sweep()[0];
    let lod = build_space(cfg, &level)?;
    let problem = GpeProblem::with_kinetic(lod.clone(), cfg.kinetic, &cfg.trap()?, cfg.beta)?;
    let alpha0 = initial_state(cfg, &lod)?;
    let taus = cfg.step_sizes();
    let mut rows = Vec::new();
    let mut finals: Vec<Option<Vec<Complex64>>> = Vec::new();
    for &tau in &taus {
        let n = step_count(tau, cfg.t_end)?;
        let integrator = CgIntegrator::new(&problem, cfg.q, tau, dyn_options(cfg))?;
        let (tr, failure) = integrator.run_partial(&alpha0, n);
        let mut row = trajectory_row(tau, cfg.q, &tr);
        match failure {
            Some(e) => {
                row.status = status_of(&e);
                finals.push(None);
            }
            None => {
                if cfg.problem == Problem::Soliton {
                    let t = cfg.t_end;
                    let (l2, h1) = relative_errors(&problem, &tr.final_state, |x| {
                        let (u, du) = exact_soliton_with_derivative(x[0], t);
                        (u, [du, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)])
                    })?;
                    row.rel_l2 = Some(l2);
                    row.rel_h1 = Some(h1);
                }
                finals.push(Some(tr.final_state));
            }
        }
        rows.push(row);
    }
    if cfg.problem != Problem::Soliton {
        let finest = (0..taus.len())
            .filter(|&i| finals[i].is_some())
            .min_by(|&a, &b| taus[a].abs().total_cmp(&taus[b].abs()));
        if let Some(r) = finest {
            let reference = finals[r].clone().unwrap_or_default();
            for (i, row) in rows.iter_mut().enumerate() {
                if let (Some(x), true) = (&finals[i], i != r) {
                    row.rel_l2 = Some(coefficient_error(&lod.m_lod, x, &reference));
                    row.rel_h1 = Some(coefficient_error(&lod.a_lod, x, &reference));
                }
            }
        }
    }
    for i in 1..rows.len() {
        if let (Some(a), Some(b)) = (rows[i - 1].rel_l2, rows[i].rel_l2) {
            rows[i].eoc_l2 = eoc(&[a, b], &[rows[i - 1].tau, rows[i].tau]).first().copied();
        }
    }
    Ok(rows)
}

/// Density of one snapshot at the fine vertices.
#[derive(Debug, Clone, Serialize)]
pub struct DensityRow {
    pub t: f64,
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub density: f64,
}

/// Result of a coupled run.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub ground_energy: f64,
    pub ground_iterations: usize,
    pub trace: Vec<TraceRow>,
    pub densities: Vec<DensityRow>,
    pub trajectory: Trajectory,
    /// Set when the evolution stopped early.
    pub failure: Option<String>,
}

/// Ground state in the initial trap, released into the evolution trap.
pub fn run_coupled(cfg: &ExperimentConfig) -> Result<CoupledRun> {
    cfg.validate()?;
    let level = cfg.sweep()[0];
    let lod = build_space(cfg, &level)?;
    let v0 = potential(cfg.initial_potential.as_deref().unwrap_or(&cfg.potential))?;
    let ground = GpeProblem::with_kinetic(lod.clone(), cfg.kinetic, &v0, cfg.beta)?;
    let gs = solve_ground_state(&ground, gs_options(cfg))?;
    let alpha0: Vec<Complex64> = gs.alpha.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    let problem = GpeProblem::with_kinetic(lod.clone(), cfg.kinetic, &cfg.trap()?, cfg.beta)?;
    let n = step_count(cfg.tau, cfg.t_end)?;
    let options = DynamicsOptions { exact_energy: true, ..dyn_options(cfg) };
    let (tr, failure) = CgIntegrator::new(&problem, cfg.q, cfg.tau, options)?.run_partial(&alpha0, n);
    let mut trace = Vec::new();
    let mut snap = tr.snapshots.iter().zip(&tr.energy_exact).peekable();
    for (i, &t) in tr.times.iter().enumerate() {
        let exact = match snap.peek() {
            Some(((ts, _), e)) if *ts == t => {
                let e = **e;
                snap.next();
                Some(e)
            }
            _ => None,
        };
        trace.push(TraceRow { t, e_lod: tr.energy[i], e_exactform: exact, mass: tr.mass[i] });
    }
    let fine = &lod.pair.fine;
    let mut densities = Vec::new();
    for (t, alpha) in &tr.snapshots {
        let u = lod.to_fine_complex(alpha);
        for (d, ud) in u.iter().enumerate() {
            let v = fine.vertex_of_dof(d);
            let x = fine.vertex(v);
            let c = |i: usize| x.get(i).copied().unwrap_or(0.0);
            densities.push(DensityRow { t: *t, vertex: v, x: c(0), y: c(1), z: c(2), density: ud.norm_sqr() });
        }
    }
    Ok(CoupledRun {
        ground_energy: gs.energy,
        ground_iterations: gs.iterations,
        trace,
        densities,
        trajectory: tr,
        failure: failure.map(|e| status_of(&e)),
    })
}

/// Sizes and build costs of one space.
#[derive(Debug, Clone, Serialize)]
pub struct LodInfo {
    #[serde(rename = "H")]
    pub h: f64,
    pub ell: usize,
    pub factor: usize,
    pub coarse_dofs: usize,
    pub fine_dofs: usize,
    pub basis_nnz: usize,
    pub matrix_nnz: usize,
    pub omega_nnz: usize,
    pub basis_mb: f64,
    pub omega_mb: f64,
    pub t_basis_s: f64,
    pub t_omega_s: f64,
    pub from_cache: bool,
}

/// Build every level and report its sizes.
pub fn lod_info(cfg: &ExperimentConfig) -> Result<Vec<LodInfo>> {
    cfg.validate()?;
    let mb = |bytes: usize| bytes as f64 / (1024.0 * 1024.0);
    cfg.sweep()
        .iter()
        .map(|level| {
            let lod = build_space(cfg, level)?;
            let word = std::mem::size_of::<f64>() + std::mem::size_of::<usize>();
            Ok(LodInfo {
                h: level.h,
                ell: level.ell,
                factor: lod.pair.factor,
                coarse_dofs: lod.dim(),
                fine_dofs: lod.pair.fine.n_dofs(),
                basis_nnz: lod.phi.nnz(),
                matrix_nnz: lod.m_lod.nnz(),
                omega_nnz: lod.omega.nnz(),
                basis_mb: mb(lod.phi.nnz() * word),
                omega_mb: mb(lod.omega.nnz() * word),
                t_basis_s: lod.timings.basis,
                t_omega_s: lod.timings.omega,
                from_cache: lod.timings.from_cache,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_soliton() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(Problem::Soliton);
        cfg.h = 40.0 / 128.0;
        cfg.factor = 4;
        cfg.ell = 4;
        cfg.t_end = 0.25;
        cfg.q = 1;
        cfg.taus = vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
        cfg
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::NotConverged { iterations: 1, last_change: 1.0 }), 2);
        assert_eq!(exit_code(&Error::FixedPointDiverged { step: 1, increment: 1e9 }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 4);
        assert_eq!(exit_code(&Error::IllPosedPatch(0)), 1);
    }

    #[test]
    fn evolve_sweep_reports_eoc_after_first_row() {
        let rows = run_evolve(&small_soliton()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].eoc_l2.is_none());
        for r in &rows {
            assert_eq!(r.status, "ok");
            assert!(r.rel_l2.unwrap() < 1.0);
            assert!(r.energy_drift.unwrap() < 1e-9);
        }
        let (e1, e2) = (rows[1].rel_l2.unwrap(), rows[2].rel_l2.unwrap());
        let expect = (e1 / e2).ln() / 2f64.ln();
        assert!(e2 < e1);
        assert_eq!(rows[2].eoc_l2.unwrap(), expect);
    }

    #[test]
    fn failed_level_is_kept() {
        let mut cfg = ExperimentConfig::preset(Problem::Harmonic);
        cfg.lower = vec![-4.0];
        cfg.upper = vec![4.0];
        cfg.factor = 2;
        cfg.levels = vec![Level { h: 1.0, ell: 0, factor: None }, Level { h: 1.0, ell: 2, factor: None }];
        cfg.max_iters = 3;
        cfg.tol = 1e-14;
        let rows = run_groundstate(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].status.starts_with("ill_posed_patch"), "{}", rows[0].status);
        assert!(rows[1].status.starts_with("not_converged"), "{}", rows[1].status);
        assert!(rows[1].e_lod.is_none() && rows[1].t_basis_s >= 0.0);
    }

    #[test]
    fn sweep_is_deterministic() {
        let mut cfg = ExperimentConfig::preset(Problem::Harmonic);
        cfg.lower = vec![-4.0, -4.0];
        cfg.upper = vec![4.0, 4.0];
        cfg.h = 2.0;
        cfg.factor = 4;
        let strip = |rows: Vec<GroundStateRow>| -> Vec<(Option<f64>, Option<f64>, Option<usize>)> {
            rows.into_iter().map(|r| (r.e_lod, r.e_exactform, r.iters)).collect()
        };
        let a = strip(run_groundstate(&cfg).unwrap());
        let b = strip(run_groundstate(&cfg).unwrap());
        assert_eq!(a, b);
        assert!(a[0].0.unwrap() > 0.0);
    }

    #[test]
    fn coupled_run_traces_energy() {
        let mut cfg = ExperimentConfig::preset(Problem::Coupled);
        cfg.lower = vec![-3.0, -3.0];
        cfg.upper = vec![3.0, 3.0];
        cfg.factor = 2;
        cfg.beta = 10.0;
        cfg.tau = 0.125;
        cfg.t_end = 0.5;
        cfg.snapshot_every = 2;
        let run = run_coupled(&cfg).unwrap();
        assert!(run.failure.is_none());
        assert_eq!(run.trace.len(), 5);
        assert_eq!(run.trace.iter().filter(|r| r.e_exactform.is_some()).count(), 3);
        let e0 = run.trace[0].e_lod;
        assert!(run.trace.iter().all(|r| (r.e_lod - e0).abs() < 1e-9));
        assert_eq!(run.densities.len(), 3 * (cfg.cells(1.0).unwrap()[0] * 2 - 1).pow(2));
    }
}

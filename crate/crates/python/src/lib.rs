//! Python bindings: build LOD spaces, compute ground states, run the
//! energy-conserving time stepper and evaluate the benchmark helpers.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lodgpe::bench::config::ExperimentConfig;
use lodgpe::bench::{problems, run};
use lodgpe::dynamics::{project_initial_value, CgIntegrator, CgTables, DynamicsOptions};
use lodgpe::fem::QuadratureRule;
use lodgpe::groundstate::{solve_ground_state, GpeProblem, GroundStateOptions};
use lodgpe::lod::{BilinearForm, LodOptions};
use lodgpe::mesh::{build_box_mesh, refine_uniform, BoxDomain};
use lodgpe::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::DimensionMismatch(_) | Error::InvalidMesh(_) | Error::UnsupportedQuadrature { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A multiscale finite element space on a box.
#[pyclass(frozen, name = "LodSpace")]
struct PyLodSpace {
    inner: Arc<lodgpe::lod::LodSpace>,
}

#[pymethods]
impl PyLodSpace {
    /// `form` is "canonical" or the name of a potential for the adapted form.
    #[new]
    #[pyo3(signature = (lower, upper, cells, factor, ell, form = "canonical", diffusion = 0.5, cache_dir = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
        factor: usize,
        ell: usize,
        form: &str,
        diffusion: f64,
        cache_dir: Option<String>,
    ) -> PyResult<Self> {
        let bilinear = if form == "canonical" {
            BilinearForm::canonical()
        } else {
            BilinearForm::with_diffusion(diffusion, problems::potential(form).map_err(py_err)?)
        };
        let options = LodOptions { cache_dir: cache_dir.map(Into::into), ..LodOptions::default() };
        let inner = py
            .detach(|| -> lodgpe::Result<_> {
                let domain = BoxDomain::new(lower, upper)?;
                let pair = refine_uniform(&build_box_mesh(&domain, &cells)?, factor)?;
                lodgpe::lod::LodSpace::build(pair, bilinear, ell, options)
            })
            .map_err(py_err)?;
        Ok(PyLodSpace { inner: Arc::new(inner) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn fine_dofs(&self) -> usize {
        self.inner.pair.fine.n_dofs()
    }

    #[getter]
    fn omega_nnz(&self) -> usize {
        self.inner.omega.nnz()
    }

    #[getter]
    fn basis_seconds(&self) -> f64 {
        self.inner.timings.basis
    }

    #[getter]
    fn omega_seconds(&self) -> f64 {
        self.inner.timings.omega
    }

    /// Coordinates of the fine interior vertices, in dof order.
    fn fine_points(&self) -> Vec<Vec<f64>> {
        let fine = &self.inner.pair.fine;
        (0..fine.n_dofs()).map(|d| fine.vertex(fine.vertex_of_dof(d)).to_vec()).collect()
    }

    /// Nodal values on the fine mesh of the function with these coefficients.
    fn to_fine(&self, coefficients: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        if coefficients.len() != self.inner.dim() {
            return Err(PyValueError::new_err("coefficient vector has the wrong length"));
        }
        Ok(self.inner.to_fine_complex(&coefficients))
    }

    /// Entries of the overlap matrix of the basis as (row, column, value).
    fn mass_triplets(&self) -> Vec<(usize, usize, f64)> {
        self.inner.m_lod.triplets()
    }

    /// Entry `int phi_i phi_j phi_k` of the nonlinearity tensor.
    fn omega(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let n = self.inner.dim();
        if i >= n || j >= n || k >= n {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.omega.get(i, j, k))
    }

    fn __repr__(&self) -> String {
        format!(
            "LodSpace(dim={}, fine_dofs={}, ell={}, form={})",
            self.inner.dim(),
            self.inner.pair.fine.n_dofs(),
            self.inner.ell,
            self.inner.form.label()
        )
    }
}

fn problem(space: &PyLodSpace, potential: &str, beta: f64, kinetic: f64) -> PyResult<GpeProblem> {
    let v = problems::potential(potential).map_err(py_err)?;
    GpeProblem::with_kinetic(space.inner.clone(), kinetic, &v, beta).map_err(py_err)
}

/// Ground state by the damped inverse iteration. Returns a dict with
/// energy, exact_form_energy, eigenvalue, iterations, energy_history and coefficients.
#[pyfunction]
#[pyo3(signature = (space, potential, beta, kinetic = 0.5, tol = 1e-10, max_iter = 500))]
fn ground_state<'py>(
    py: Python<'py>,
    space: &PyLodSpace,
    potential: &str,
    beta: f64,
    kinetic: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = problem(space, potential, beta, kinetic)?;
    let options = GroundStateOptions { tol, max_iter, ..GroundStateOptions::default() };
    let (gs, exact) = py
        .detach(|| -> lodgpe::Result<_> {
            let gs = solve_ground_state(&p, options)?;
            let alpha: Vec<Complex64> = gs.alpha.iter().map(|&a| Complex64::new(a, 0.0)).collect();
            let exact = p.energy_exact_quartic(&alpha)?;
            Ok((gs, exact))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("energy", gs.energy)?;
    d.set_item("exact_form_energy", exact)?;
    d.set_item("eigenvalue", gs.eigenvalue)?;
    d.set_item("iterations", gs.iterations)?;
    d.set_item("energy_history", gs.energy_history)?;
    d.set_item("coefficients", gs.alpha)?;
    Ok(d)
}

/// Coefficients of the two-soliton initial value, projected onto the space.
#[pyfunction]
fn soliton_initial_value(space: &PyLodSpace) -> PyResult<Vec<Complex64>> {
    let p = problem(space, "zero", -2.0, 1.0)?;
    project_initial_value(&p, |x| problems::exact_soliton(x[0], 0.0)).map_err(py_err)
}

/// Integrate from `coefficients` with the cG(q) scheme. Returns a dict with
/// times, energy, mass, fp_iterations and the final coefficients.
#[pyfunction]
#[pyo3(signature = (space, coefficients, potential, beta, q, tau, steps, kinetic = 0.5, fp_tol = 1e-12))]
#[allow(clippy::too_many_arguments)]
fn evolve<'py>(
    py: Python<'py>,
    space: &PyLodSpace,
    coefficients: Vec<Complex64>,
    potential: &str,
    beta: f64,
    q: usize,
    tau: f64,
    steps: usize,
    kinetic: f64,
    fp_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = problem(space, potential, beta, kinetic)?;
    if coefficients.len() != p.dim() {
        return Err(PyValueError::new_err("coefficient vector has the wrong length"));
    }
    let options = DynamicsOptions { fp_tol, ..DynamicsOptions::default() };
    let tr = py
        .detach(|| CgIntegrator::new(&p, q, tau, options)?.run(&coefficients, steps))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("times", tr.times)?;
    d.set_item("energy", tr.energy)?;
    d.set_item("mass", tr.mass)?;
    d.set_item("fp_iterations", tr.fp_iterations)?;
    d.set_item("final", tr.final_state)?;
    Ok(d)
}

/// Exact two-soliton solution of `i u_t = -u_xx - 2|u|^2 u`.
#[pyfunction]
fn exact_soliton(x: f64, t: f64) -> Complex64 {
    problems::exact_soliton(x, t)
}

/// Value of a named trapping potential at a point.
#[pyfunction]
fn potential(name: &str, x: Vec<f64>) -> PyResult<f64> {
    Ok(problems::potential(name).map_err(py_err)?.eval(&x))
}

/// Barycentric points and weights (summing to one) of a simplex rule.
#[pyfunction]
fn quadrature_rule(dim: usize, degree: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, usize)> {
    let r = QuadratureRule::new(dim, degree).map_err(py_err)?;
    let points = (0..r.n_points()).map(|q| r.bary(q).to_vec()).collect();
    Ok((points, r.weights().to_vec(), r.degree()))
}

/// Collocation nodes, quadrature and stage-decoupling data of cG(q).
#[pyfunction]
fn cg_tables<'py>(py: Python<'py>, q: usize) -> PyResult<Bound<'py, PyDict>> {
    let t = CgTables::new(q).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("q", t.q)?;
    d.set_item("nodes", t.nodes)?;
    d.set_item("weights", t.weights)?;
    d.set_item("quad_nodes", t.quad_nodes)?;
    d.set_item("quad_weights", t.quad_weights)?;
    d.set_item("gamma", t.gamma)?;
    d.set_item("end_values", t.end_values)?;
    Ok(d)
}

/// Run a ground-state sweep from TOML config text; one dict per level.
#[pyfunction]
fn run_groundstate<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_toml_str(config).map_err(py_err)?;
    let rows = py.detach(|| run::run_groundstate(&cfg)).map_err(py_err)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("H", r.h)?;
            d.set_item("ell", r.ell)?;
            d.set_item("factor", r.factor)?;
            d.set_item("form", r.form)?;
            d.set_item("E_lod", r.e_lod)?;
            d.set_item("E_exactform", r.e_exactform)?;
            d.set_item("lambda", r.lambda)?;
            d.set_item("iters", r.iters)?;
            d.set_item("err_vs_ref", r.err_vs_ref)?;
            d.set_item("status", r.status)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pylodgpe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLodSpace>()?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(soliton_initial_value, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(exact_soliton, m)?)?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    m.add_function(wrap_pyfunction!(quadrature_rule, m)?)?;
    m.add_function(wrap_pyfunction!(cg_tables, m)?)?;
    m.add_function(wrap_pyfunction!(run_groundstate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Localized orthogonal decomposition spaces.
//!
//! A coarse hat function `phi_j` is corrected by subtracting its localized
//! fine-scale correction `Q phi_j`, where `Q` sums element correctors solved
//! on element patches. The corrected basis is stored as the matrix `Phi`
//! (coarse dofs x fine dofs); the LOD Galerkin matrices are `Phi X Phi^T`.

mod cache;

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

pub use cache::{load_cache, save_cache, CACHE_VERSION};

use crate::fem::{
    assemble_mass, assemble_stiffness, assemble_weighted_mass, interpolation_matrix, ElementGeometry, LocalMatrix,
    QuadratureRule, ScalarField, SparseMatrix,
};
use crate::linalg::{dense_spd_solve, SpdSolver};
use crate::mesh::{MeshPair, NO_DOF};
use crate::tritensor::TriTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `(grad u, grad v)`
    Canonical,
    /// `diffusion (grad u, grad v) + (V u, v)`
    PotentialAdapted,
}

/// The symmetric coercive form defining the fine-scale decomposition.
#[derive(Debug, Clone)]
pub struct BilinearForm {
    pub kind: FormKind,
    pub diffusion: f64,
    pub potential: Option<ScalarField>,
}

impl BilinearForm {
    pub fn canonical() -> Self {
        BilinearForm { kind: FormKind::Canonical, diffusion: 1.0, potential: None }
    }

    /// `1/2 (grad u, grad v) + (V u, v)`.
    pub fn potential_adapted(potential: ScalarField) -> Self {
        Self::with_diffusion(0.5, potential)
    }

    pub fn with_diffusion(diffusion: f64, potential: ScalarField) -> Self {
        BilinearForm { kind: FormKind::PotentialAdapted, diffusion, potential: Some(potential) }
    }

    pub fn label(&self) -> String {
        match (&self.kind, &self.potential) {
            (FormKind::Canonical, _) => "canonical".into(),
            (_, Some(v)) => format!("potential:{}:{}", self.diffusion, v.name()),
            (_, None) => format!("potential:{}:none", self.diffusion),
        }
    }

    fn element_matrix(&self, geo: &ElementGeometry, rule: &QuadratureRule) -> LocalMatrix {
        let mut m = geo.stiffness();
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= self.diffusion;
            }
        }
        if let Some(v) = &self.potential {
            let w = geo.weighted_mass(v, rule);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w[a][b];
                }
            }
        }
        m
    }
}

/// Tunables for building a space.
#[derive(Debug, Clone)]
pub struct LodOptions {
    /// Quadrature degree on fine simplices for the three-tensor.
    pub tensor_degree: usize,
    /// Quadrature degree for potential-weighted mass matrices.
    pub potential_degree: usize,
    /// Directory holding cached bases and tensors.
    pub cache_dir: Option<PathBuf>,
}

impl Default for LodOptions {
    fn default() -> Self {
        LodOptions { tensor_degree: 3, potential_degree: 5, cache_dir: None }
    }
}

/// Wall-clock seconds spent on the offline stages.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildTimings {
    pub basis: f64,
    pub omega: f64,
    pub from_cache: bool,
}

/// A built LOD space with its Galerkin matrices and nonlinearity tensor.
#[derive(Debug)]
pub struct LodSpace {
    pub pair: MeshPair,
    pub form: BilinearForm,
    pub ell: usize,
    pub options: LodOptions,
    /// Coarse hat functions on the fine dofs.
    pub p: SparseMatrix,
    /// Corrected basis on the fine dofs.
    pub phi: SparseMatrix,
    pub fine_stiffness: SparseMatrix,
    pub fine_mass: SparseMatrix,
    pub fine_form: SparseMatrix,
    /// `Phi A Phi^T` with the plain stiffness matrix.
    pub a_lod: SparseMatrix,
    pub m_lod: SparseMatrix,
    /// `Phi A_form Phi^T`.
    pub form_lod: SparseMatrix,
    /// `Phi V Phi^T` for the potential of the form (zero for the canonical form).
    pub vmass_lod: SparseMatrix,
    pub omega: TriTensor,
    pub timings: BuildTimings,
    mass_solver: SpdSolver,
    form_solver: OnceLock<SpdSolver>,
}

struct CorrectorContext<'a> {
    pair: &'a MeshPair,
    form: &'a BilinearForm,
    ell: usize,
    fine_form: &'a SparseMatrix,
    p: &'a SparseMatrix,
    pm: &'a SparseMatrix,
    rule: &'a QuadratureRule,
}

type ElementCorrectors = Vec<(usize, Vec<(usize, f64)>)>;

impl CorrectorContext<'_> {
    /// Correctors of the coarse hats of element `k`, as (coarse dof, sparse fine vector).
    fn element(&self, k: usize) -> Result<ElementCorrectors> {
        let coarse = &self.pair.coarse;
        let fine = &self.pair.fine;
        let vertex_dofs: Vec<usize> =
            coarse.simplex(k).iter().map(|&v| coarse.dof(v)).filter(|&d| d != NO_DOF).collect();
        if vertex_dofs.is_empty() {
            return Ok(Vec::new());
        }
        let patch = coarse.patch(k, self.ell);

        let mut in_patch = vec![false; fine.n_simplices()];
        for &c in &patch {
            for &t in self.pair.children(c) {
                in_patch[t] = true;
            }
        }
        let v2s = fine.vertex_to_simplices();
        let mut dofs: Vec<usize> = Vec::new();
        for &c in &patch {
            for &t in self.pair.children(c) {
                for &v in fine.simplex(t) {
                    let d = fine.dof(v);
                    if d != NO_DOF && v2s.get(v).iter().all(|&s| in_patch[s]) {
                        dofs.push(d);
                    }
                }
            }
        }
        dofs.sort_unstable();
        dofs.dedup();
        let n = dofs.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut local = vec![usize::MAX; fine.n_dofs()];
        for (l, &d) in dofs.iter().enumerate() {
            local[d] = l;
        }

        // constraint functionals of coarse nodes touching the patch
        let mut constraints: Vec<usize> = patch
            .iter()
            .flat_map(|&c| coarse.simplex(c).iter().map(|&v| coarse.dof(v)))
            .filter(|&d| d != NO_DOF)
            .collect();
        constraints.sort_unstable();
        constraints.dedup();
        let b_rows: Vec<Vec<(usize, f64)>> = constraints
            .iter()
            .map(|&i| {
                let (c, v) = self.pm.row(i);
                c.iter().zip(v).filter(|(&j, _)| local[j] != usize::MAX).map(|(&j, &a)| (local[j], a)).collect()
            })
            .collect();
        let b_rows: Vec<Vec<(usize, f64)>> = b_rows.into_iter().filter(|r| !r.is_empty()).collect();
        let m = b_rows.len();

        // right-hand sides a_K(phi_j, .) integrated over element k only
        let nr = vertex_dofs.len();
        let mut rhs = Mat::<f64>::zeros(n, m + nr);
        for (r, row) in b_rows.iter().enumerate() {
            for &(l, a) in row {
                rhs[(l, r)] = a;
            }
        }
        for &t in self.pair.children(k) {
            let geo = ElementGeometry::new(fine, t);
            let at = self.form.element_matrix(&geo, self.rule);
            let s = fine.simplex(t);
            for (col, &j) in vertex_dofs.iter().enumerate() {
                let phi: Vec<f64> = s
                    .iter()
                    .map(|&v| {
                        let d = fine.dof(v);
                        if d == NO_DOF {
                            0.0
                        } else {
                            self.p.get(j, d)
                        }
                    })
                    .collect();
                for (b, &vb) in s.iter().enumerate() {
                    let db = fine.dof(vb);
                    if db == NO_DOF || local[db] == usize::MAX {
                        continue;
                    }
                    let val: f64 = (0..s.len()).map(|a| at[b][a] * phi[a]).sum();
                    rhs[(local[db], m + col)] += val;
                }
            }
        }

        let a_patch = self.fine_form.submatrix(&dofs, &local, n);
        let solver = SpdSolver::new(&a_patch).map_err(|_| Error::IllPosedPatch(k))?;
        let x = solver.solve_many(&rhs);

        // Schur complement on the constraint multipliers
        let mut w = Mat::<f64>::zeros(n, nr);
        for c in 0..nr {
            for l in 0..n {
                w[(l, c)] = x[(l, m + c)];
            }
        }
        if m > 0 {
            let mut s = Mat::<f64>::zeros(m, m);
            let mut g = Mat::<f64>::zeros(m, nr);
            for (r, row) in b_rows.iter().enumerate() {
                for c in 0..m {
                    s[(r, c)] = row.iter().map(|&(l, a)| a * x[(l, c)]).sum();
                }
                for c in 0..nr {
                    g[(r, c)] = row.iter().map(|&(l, a)| a * x[(l, m + c)]).sum();
                }
            }
            for r in 0..m {
                for c in 0..r {
                    let avg = 0.5 * (s[(r, c)] + s[(c, r)]);
                    s[(r, c)] = avg;
                    s[(c, r)] = avg;
                }
            }
            let mu = dense_spd_solve(&s, &g).ok_or(Error::IllPosedPatch(k))?;
            for c in 0..nr {
                for r in 0..m {
                    let f = mu[(r, c)];
                    if f != 0.0 {
                        for l in 0..n {
                            w[(l, c)] -= x[(l, r)] * f;
                        }
                    }
                }
            }
        }
        Ok(vertex_dofs
            .iter()
            .enumerate()
            .map(|(c, &j)| (j, dofs.iter().enumerate().map(|(l, &d)| (d, w[(l, c)])).collect()))
            .collect())
    }
}

fn merge_sorted(acc: &mut Vec<(usize, f64)>, add: &[(usize, f64)]) {
    if acc.is_empty() {
        acc.extend_from_slice(add);
        return;
    }
    let mut out = Vec::with_capacity(acc.len() + add.len());
    let (mut p, mut q) = (0, 0);
    while p < acc.len() || q < add.len() {
        if q == add.len() || (p < acc.len() && acc[p].0 < add[q].0) {
            out.push(acc[p]);
            p += 1;
        } else if p == acc.len() || add[q].0 < acc[p].0 {
            out.push(add[q]);
            q += 1;
        } else {
            out.push((acc[p].0, acc[p].1 + add[q].1));
            p += 1;
            q += 1;
        }
    }
    *acc = out;
}

/// Assemble the global correction matrix `Q` (coarse dofs x fine dofs).
pub fn corrector_matrix(
    pair: &MeshPair,
    form: &BilinearForm,
    ell: usize,
    fine_form: &SparseMatrix,
    fine_mass: &SparseMatrix,
    p: &SparseMatrix,
    rule: &QuadratureRule,
) -> Result<SparseMatrix> {
    let (nc, nf) = (pair.coarse.n_dofs(), pair.fine.n_dofs());
    if pair.factor == 1 {
        // the fine-scale space is trivial
        return Ok(SparseMatrix::zeros(nc, nf));
    }
    let pm = p.matmul(fine_mass);
    let ctx = CorrectorContext { pair, form, ell, fine_form, p, pm: &pm, rule };
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
    let ne = pair.coarse.n_simplices();
    let chunk = (4 * rayon::current_num_threads()).max(1);
    let mut start = 0;
    while start < ne {
        let end = (start + chunk).min(ne);
        let results: Vec<Result<ElementCorrectors>> = (start..end).into_par_iter().map(|k| ctx.element(k)).collect();
        for r in results {
            for (j, vals) in r? {
                merge_sorted(&mut rows[j], &vals);
            }
        }
        start = end;
    }
    let mut row_ptr = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for r in rows {
        for (c, v) in r {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    // exact-zero correctors come back as round-off
    let q = SparseMatrix::from_csr(nc, nf, row_ptr, cols, vals)?;
    let scale = q.max_abs();
    Ok(q.pruned(1e-14 * scale))
}

/// `|phi| m |phi|^T` for a nonnegative `m`: nonzero exactly where basis
/// supports overlap, free of the cancellations that orthogonality causes in
/// the mass matrix itself.
pub fn support_overlap(phi: &SparseMatrix, m: &SparseMatrix) -> SparseMatrix {
    let mut abs = phi.clone();
    abs.values_mut().iter_mut().for_each(|v| *v = v.abs());
    galerkin(&abs, &abs.transpose(), m)
}

/// `phi x phi^T`.
pub fn galerkin(phi: &SparseMatrix, phi_t: &SparseMatrix, x: &SparseMatrix) -> SparseMatrix {
    phi.matmul(x).matmul(phi_t)
}

impl LodSpace {
    /// Build the space of order `ell` on `pair` for `form`.
    pub fn build(pair: MeshPair, form: BilinearForm, ell: usize, options: LodOptions) -> Result<Self> {
        let fine = &pair.fine;
        let dim = fine.dim();
        let prule = QuadratureRule::new(dim, options.potential_degree)?;
        let trule = QuadratureRule::new(dim, options.tensor_degree)?;
        let fine_stiffness = assemble_stiffness(fine);
        let fine_mass = assemble_mass(fine);
        let vform = match &form.potential {
            Some(v) => assemble_weighted_mass(fine, v, &prule)?,
            None => SparseMatrix::zeros(fine.n_dofs(), fine.n_dofs()),
        };
        let fine_form = fine_stiffness.add_scaled(form.diffusion, &vform, 1.0);
        let p = interpolation_matrix(&pair);

        let key = cache_key(&pair, &form, ell, &options);
        let cached = match &options.cache_dir {
            Some(dir) => load_cache(&dir.join(cache_file_name(&key)), &key).ok(),
            None => None,
        };
        let mut timings = BuildTimings::default();
        let (phi, omega, m_lod, phi_t) = match cached {
            Some((phi, omega)) => {
                timings.from_cache = true;
                let phi_t = phi.transpose();
                let m_lod = galerkin(&phi, &phi_t, &fine_mass);
                (phi, omega, m_lod, phi_t)
            }
            None => {
                let t0 = Instant::now();
                let q = corrector_matrix(&pair, &form, ell, &fine_form, &fine_mass, &p, &prule)?;
                let phi = p.add_scaled(1.0, &q, -1.0);
                let phi_t = phi.transpose();
                let m_lod = galerkin(&phi, &phi_t, &fine_mass);
                timings.basis = t0.elapsed().as_secs_f64();
                let t1 = Instant::now();
                let mut omega = TriTensor::preallocate(&support_overlap(&phi, &fine_mass), 1e-16);
                omega.assemble_lod(&pair, &phi_t, &trule)?;
                timings.omega = t1.elapsed().as_secs_f64();
                if let Some(dir) = &options.cache_dir {
                    std::fs::create_dir_all(dir)?;
                    save_cache(&dir.join(cache_file_name(&key)), &key, &phi, &omega)?;
                }
                (phi, omega, m_lod, phi_t)
            }
        };
        let a_lod = galerkin(&phi, &phi_t, &fine_stiffness);
        let form_lod = galerkin(&phi, &phi_t, &fine_form);
        let vmass_lod = galerkin(&phi, &phi_t, &vform);
        let mass_solver = SpdSolver::new(&m_lod)?;
        Ok(LodSpace {
            pair,
            form,
            ell,
            options,
            p,
            phi,
            fine_stiffness,
            fine_mass,
            fine_form,
            a_lod,
            m_lod,
            form_lod,
            vmass_lod,
            omega,
            timings,
            mass_solver,
            form_solver: OnceLock::new(),
        })
    }

    /// Number of LOD basis functions.
    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    /// `Phi V Phi^T` for an arbitrary potential.
    pub fn potential_matrix(&self, v: &ScalarField) -> Result<SparseMatrix> {
        let rule = QuadratureRule::new(self.pair.fine.dim(), self.options.potential_degree)?;
        let vm = assemble_weighted_mass(&self.pair.fine, v, &rule)?;
        Ok(galerkin(&self.phi, &self.phi.transpose(), &vm))
    }

    pub fn mass_solver(&self) -> &SpdSolver {
        &self.mass_solver
    }

    /// Correction matrix `Q = P - Phi`.
    pub fn corrector(&self) -> SparseMatrix {
        self.p.add_scaled(1.0, &self.phi, -1.0).pruned(0.0)
    }

    /// Nodal values on the fine interior vertices of `sum_i alpha_i Phi_i`.
    pub fn to_fine(&self, alpha: &[f64]) -> Vec<f64> {
        self.phi.transpose().matvec(alpha)
    }

    pub fn to_fine_complex(&self, alpha: &[Complex64]) -> Vec<Complex64> {
        self.phi.transpose().matvec_complex(alpha)
    }

    /// Projection of a fine function onto the space, orthogonal in the form.
    pub fn project_a(&self, u_fine: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_fine(u_fine.len())?;
        let solver = match self.form_solver.get() {
            Some(s) => s,
            None => {
                let s = SpdSolver::new(&self.form_lod)?;
                self.form_solver.get_or_init(|| s)
            }
        };
        let rhs = self.phi.matvec_complex(&self.fine_form.matvec_complex(u_fine));
        Ok(solver.solve_complex(&rhs))
    }

    /// L2-orthogonal projection of a fine function onto the space.
    pub fn project_l2(&self, u_fine: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_fine(u_fine.len())?;
        let rhs = self.phi.matvec_complex(&self.fine_mass.matvec_complex(u_fine));
        Ok(self.mass_solver.solve_complex(&rhs))
    }

    fn check_fine(&self, n: usize) -> Result<()> {
        if n != self.pair.fine.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "fine vector of length {n}, expected {}",
                self.pair.fine.n_dofs()
            )));
        }
        Ok(())
    }

    /// `int |u|^4` for `u = sum_i alpha_i Phi_i`, by quadrature on the fine mesh.
    pub fn quartic_integral(&self, alpha: &[Complex64]) -> Result<f64> {
        let fine = &self.pair.fine;
        let rule = QuadratureRule::new(fine.dim(), 4)?;
        let u = self.to_fine_complex(alpha);
        let mut total = 0.0;
        for t in 0..fine.n_simplices() {
            let s = fine.simplex(t);
            let vals: Vec<Complex64> = s
                .iter()
                .map(|&v| {
                    let d = fine.dof(v);
                    if d == NO_DOF {
                        Complex64::new(0.0, 0.0)
                    } else {
                        u[d]
                    }
                })
                .collect();
            if vals.iter().all(|z| z.norm_sqr() == 0.0) {
                continue;
            }
            let vol = fine.simplex_volume(t);
            for q in 0..rule.n_points() {
                let l = rule.bary(q);
                let z: Complex64 = vals.iter().zip(l).map(|(a, &b)| a * b).sum();
                total += rule.weights()[q] * vol * z.norm_sqr() * z.norm_sqr();
            }
        }
        Ok(total)
    }
}

/// Identifier of a space for the on-disk cache.
pub fn cache_key(pair: &MeshPair, form: &BilinearForm, ell: usize, options: &LodOptions) -> String {
    let c = &pair.coarse;
    format!(
        "lo={:?};hi={:?};cells={:?};factor={};ell={};form={};tensor={};potential={}",
        c.domain().lower,
        c.domain().upper,
        c.cells(),
        pair.factor,
        ell,
        form.label(),
        options.tensor_degree,
        options.potential_degree
    )
}

fn cache_file_name(key: &str) -> String {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for b in key.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("lod-{h:016x}.bin")
}

//! Sparse symmetric three-tensor `omega_ijk = int Phi_i Phi_j Phi_k`.
//!
//! Only canonical triples `i <= j <= k` are stored, in a two-level
//! compressed layout: `iptr[i]..iptr[i+1]` indexes the second indices `j`
//! belonging to `i`, and for the entry at position `p` the third indices are
//! `kidx[jptr[p]..jptr[p+1]]`. Indices are sorted at every level, so lookups
//! are two binary searches.

use num_complex::Complex64;

use crate::fem::{ElementGeometry, QuadratureRule, SparseMatrix};
use crate::mesh::{MeshPair, NO_DOF};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TriTensor {
    n: usize,
    iptr: Vec<usize>,
    jidx: Vec<usize>,
    jptr: Vec<usize>,
    kidx: Vec<usize>,
    values: Vec<f64>,
}

/// Coefficient types the tensor contractions accept.
pub trait Coefficient: Copy + Send + Sync {
    fn zero() -> Self;
    /// `Re(a conj(b))`
    fn re_conj_mul(a: Self, b: Self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn add(self, o: Self) -> Self;
    /// Real components, one vector per component.
    fn split(v: &[Self]) -> Vec<Vec<f64>>;
    fn join(parts: Vec<Vec<f64>>) -> Vec<Self>;
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn re_conj_mul(a: Self, b: Self) -> f64 {
        a * b
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn split(v: &[Self]) -> Vec<Vec<f64>> {
        vec![v.to_vec()]
    }
    fn join(mut parts: Vec<Vec<f64>>) -> Vec<Self> {
        parts.swap_remove(0)
    }
}

impl Coefficient for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn re_conj_mul(a: Self, b: Self) -> f64 {
        a.re * b.re + a.im * b.im
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn split(v: &[Self]) -> Vec<Vec<f64>> {
        vec![v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect()]
    }
    fn join(parts: Vec<Vec<f64>>) -> Vec<Self> {
        parts[0].iter().zip(&parts[1]).map(|(&re, &im)| Complex64::new(re, im)).collect()
    }
}

impl TriTensor {
    /// Skeleton of all canonical triples whose three pairwise entries of the
    /// overlap matrix `mass` exceed `tol` in magnitude. Values start at zero.
    pub fn preallocate(mass: &SparseMatrix, tol: f64) -> Self {
        let n = mass.nrows();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let (c, v) = mass.row(i);
                c.iter().zip(v).filter(|(_, a)| a.abs() > tol).map(|(&j, _)| j).collect()
            })
            .collect();
        let mut iptr = vec![0usize];
        let mut jidx = Vec::new();
        let mut jptr = vec![0usize];
        let mut kidx = Vec::new();
        for i in 0..n {
            for &j in adj[i].iter().filter(|&&j| j >= i) {
                jidx.push(j);
                // k >= j adjacent to both i and j
                let (ai, aj) = (&adj[i], &adj[j]);
                let (mut p, mut q) = (ai.partition_point(|&k| k < j), aj.partition_point(|&k| k < j));
                while p < ai.len() && q < aj.len() {
                    match ai[p].cmp(&aj[q]) {
                        std::cmp::Ordering::Equal => {
                            kidx.push(ai[p]);
                            p += 1;
                            q += 1;
                        }
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                    }
                }
                jptr.push(kidx.len());
            }
            iptr.push(jidx.len());
        }
        let values = vec![0.0; kidx.len()];
        TriTensor { n, iptr, jidx, jptr, kidx, values }
    }

    pub fn from_raw_parts(
        n: usize,
        iptr: Vec<usize>,
        jidx: Vec<usize>,
        jptr: Vec<usize>,
        kidx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let ok = iptr.len() == n + 1
            && iptr.last() == Some(&jidx.len())
            && jptr.len() == jidx.len() + 1
            && jptr.last() == Some(&kidx.len())
            && kidx.len() == values.len();
        if !ok {
            return Err(Error::DimensionMismatch("inconsistent tensor arrays".into()));
        }
        Ok(TriTensor { n, iptr, jidx, jptr, kidx, values })
    }

    pub fn raw_parts(&self) -> (&[usize], &[usize], &[usize], &[usize], &[f64]) {
        (&self.iptr, &self.jidx, &self.jptr, &self.kidx, &self.values)
    }

    /// Dimension of each index.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored canonical triples.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn pair_position(&self, i: usize, j: usize) -> Option<usize> {
        let (s, e) = (self.iptr[i], self.iptr[i + 1]);
        self.jidx[s..e].binary_search(&j).ok().map(|p| s + p)
    }

    fn position(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let mut t = [i, j, k];
        t.sort_unstable();
        let p = self.pair_position(t[0], t[1])?;
        let (s, e) = (self.jptr[p], self.jptr[p + 1]);
        self.kidx[s..e].binary_search(&t[2]).ok().map(|q| s + q)
    }

    /// Entry for any index order; zero if the triple is not stored.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.position(i, j, k).map_or(0.0, |p| self.values[p])
    }

    /// Add `v` to the entry of the (unordered) triple; absent triples are an error.
    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) -> Result<()> {
        let p = self.position(i, j, k).ok_or(Error::MissingTriple(i, j, k))?;
        self.values[p] += v;
        Ok(())
    }

    /// Visit every stored canonical triple with its value.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize, f64)) {
        for i in 0..self.n {
            for p in self.iptr[i]..self.iptr[i + 1] {
                let j = self.jidx[p];
                for q in self.jptr[p]..self.jptr[p + 1] {
                    f(i, j, self.kidx[q], self.values[q]);
                }
            }
        }
    }

    /// Integrate products of the corrected basis over the fine simplices,
    /// one coarse element at a time. `phi_t` is the transposed basis matrix
    /// (fine dofs x coarse dofs).
    pub fn assemble_lod(&mut self, pair: &MeshPair, phi_t: &SparseMatrix, rule: &QuadratureRule) -> Result<()> {
        use rayon::prelude::*;
        let ne = pair.coarse.n_simplices();
        let chunk = (4 * rayon::current_num_threads()).max(1);
        let mut start = 0;
        while start < ne {
            let end = (start + chunk).min(ne);
            let parts: Vec<Result<Vec<(usize, f64)>>> =
                (start..end).into_par_iter().map(|k| self.element_contributions(pair, phi_t, rule, k)).collect();
            for part in parts {
                for (p, v) in part? {
                    self.values[p] += v;
                }
            }
            start = end;
        }
        Ok(())
    }

    fn element_contributions(
        &self,
        pair: &MeshPair,
        phi_t: &SparseMatrix,
        rule: &QuadratureRule,
        k: usize,
    ) -> Result<Vec<(usize, f64)>> {
        let fine = &pair.fine;
        let children = pair.children(k);
        let nq = rule.n_points();
        let npts = children.len() * nq;
        let mut active: Vec<usize> = Vec::new();
        for &t in children {
            for &v in fine.simplex(t) {
                let d = fine.dof(v);
                if d != NO_DOF {
                    active.extend_from_slice(phi_t.row(d).0);
                }
            }
        }
        active.sort_unstable();
        active.dedup();
        let na = active.len();
        if na == 0 {
            return Ok(Vec::new());
        }
        let mut f = vec![0.0; na * npts];
        let mut w = vec![0.0; npts];
        for (ci, &t) in children.iter().enumerate() {
            let vol = ElementGeometry::new(fine, t).volume;
            for q in 0..nq {
                w[ci * nq + q] = vol * rule.weights()[q];
            }
            for (a, &v) in fine.simplex(t).iter().enumerate() {
                let d = fine.dof(v);
                if d == NO_DOF {
                    continue;
                }
                let (cols, vals) = phi_t.row(d);
                for (&i, &val) in cols.iter().zip(vals) {
                    let li = active.binary_search(&i).expect("active index");
                    let row = &mut f[li * npts + ci * nq..li * npts + (ci + 1) * nq];
                    for (q, r) in row.iter_mut().enumerate() {
                        *r += val * rule.bary(q)[a];
                    }
                }
            }
        }

        let mut out = Vec::new();
        let mut g = vec![0.0; npts];
        for a in 0..na {
            let fa = &f[a * npts..(a + 1) * npts];
            for b in a..na {
                let fb = &f[b * npts..(b + 1) * npts];
                let mut any = false;
                for p in 0..npts {
                    g[p] = w[p] * fa[p] * fb[p];
                    any |= g[p] != 0.0;
                }
                if !any {
                    continue;
                }
                let pos = self.pair_position(active[a], active[b]);
                let (ks, ke) = pos.map_or((0, 0), |p| (self.jptr[p], self.jptr[p + 1]));
                let mut cursor = ks;
                for c in b..na {
                    let fc = &f[c * npts..(c + 1) * npts];
                    let val: f64 = g.iter().zip(fc).map(|(x, y)| x * y).sum();
                    if val == 0.0 {
                        continue;
                    }
                    let kk = active[c];
                    while cursor < ke && self.kidx[cursor] < kk {
                        cursor += 1;
                    }
                    if cursor == ke || self.kidx[cursor] != kk {
                        return Err(Error::MissingTriple(active[a], active[b], kk));
                    }
                    out.push((cursor, val));
                }
            }
        }
        Ok(out)
    }

    /// `b_i = sum_{k,j} Re(alpha_k conj(alpha_j)) omega_kji`, the load vector of `|u|^2`.
    pub fn density_rhs<T: Coefficient>(&self, alpha: &[T]) -> Vec<f64> {
        // Re(a conj(b)) sums the products of the real components
        let mut out = vec![0.0; self.n];
        for x in T::split(alpha) {
            for (o, v) in out.iter_mut().zip(self.apply_real(&x, &x)) {
                *o += v;
            }
        }
        out
    }

    /// `c_i = sum_{k,j} rho_k alpha_j omega_kji`, the load vector of `rho u`.
    pub fn nonlinear_apply<T: Coefficient>(&self, rho: &[f64], alpha: &[T]) -> Vec<T> {
        // linear in alpha, so complex input runs as two real passes
        T::join(T::split(alpha).iter().map(|x| self.apply_real(rho, x)).collect())
    }

    fn apply_real(&self, rho: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for a in 0..self.n {
            let (ra, ua) = (rho[a], u[a]);
            let mut acc_a = 0.0;
            for p in self.iptr[a]..self.iptr[a + 1] {
                let b = self.jidx[p];
                let (rb, ub) = (rho[b], u[b]);
                let mut q = self.jptr[p];
                let end = self.jptr[p + 1];
                // third indices are sorted and >= b, so only the first can equal b
                if q < end && self.kidx[q] == b {
                    let w = self.values[q];
                    if a == b {
                        acc_a += w * ra * ua;
                    } else {
                        out[b] += w * (ra * ub + rb * ua);
                        acc_a += w * rb * ub;
                    }
                    q += 1;
                }
                let (ks, ws) = (&self.kidx[q..end], &self.values[q..end]);
                if a == b {
                    let raua = ra * ua;
                    for (&c, &w) in ks.iter().zip(ws) {
                        out[c] += w * raua;
                        acc_a += w * (ra * u[c] + rho[c] * ua);
                    }
                } else {
                    let sym_ab = ra * ub + rb * ua;
                    let mut acc_b = 0.0;
                    for (&c, &w) in ks.iter().zip(ws) {
                        let (rc, uc) = (rho[c], u[c]);
                        out[c] += w * sym_ab;
                        acc_b += w * (ra * uc + rc * ua);
                        acc_a += w * (rb * uc + rc * ub);
                    }
                    out[b] += acc_b;
                }
            }
            out[a] += acc_a;
        }
        out
    }

    /// Matrix `N_ij = sum_k rho_k omega_kij` on the sparsity pattern of `pattern`,
    /// which must contain every pair of a stored triple.
    pub fn weighted_matrix(&self, rho: &[f64], pattern: &SparseMatrix) -> SparseMatrix {
        let mut n = pattern.clone();
        n.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let add = |i: usize, j: usize, v: f64, n: &mut SparseMatrix| {
            let p = pattern.position(i, j).expect("pair missing from pattern");
            n.values_mut()[p] += v;
        };
        self.for_each(|a, b, c, w| {
            // every distinct ordered (k, i, j) permutation of the triple
            let mut perms: Vec<[usize; 3]> = vec![[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]];
            perms.sort_unstable();
            perms.dedup();
            for [k, i, j] in perms {
                add(i, j, rho[k] * w, &mut n);
            }
        });
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::QuadratureRule;
    use crate::lod::{BilinearForm, LodOptions, LodSpace};
    use crate::mesh::{build_box_mesh, refine_uniform, BoxDomain};
    use proptest::prelude::*;

    fn space(dim: usize, cells: usize, factor: usize, ell: usize) -> LodSpace {
        let c = build_box_mesh(&BoxDomain::cube(dim, 0.0, 1.0).unwrap(), &vec![cells; dim]).unwrap();
        let pair = refine_uniform(&c, factor).unwrap();
        LodSpace::build(pair, BilinearForm::canonical(), ell, LodOptions::default()).unwrap()
    }

    /// Dense brute-force tensor from fine-mesh quadrature of the basis.
    fn brute_force(lod: &LodSpace) -> Vec<f64> {
        let n = lod.dim();
        let fine = &lod.pair.fine;
        let rule = QuadratureRule::new(fine.dim(), 3).unwrap();
        let phi = lod.phi.to_dense();
        let mut out = vec![0.0; n * n * n];
        for t in 0..fine.n_simplices() {
            let geo = ElementGeometry::new(fine, t);
            for q in 0..rule.n_points() {
                let l = rule.bary(q);
                let vals: Vec<f64> = (0..n)
                    .map(|i| {
                        fine.simplex(t)
                            .iter()
                            .enumerate()
                            .map(|(a, &v)| if fine.dof(v) == NO_DOF { 0.0 } else { phi[i][fine.dof(v)] * l[a] })
                            .sum()
                    })
                    .collect();
                let w = geo.volume * rule.weights()[q];
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            out[(i * n + j) * n + k] += w * vals[i] * vals[j] * vals[k];
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_element_value() {
        // factor 1, two cells on [0,1]: one hat, int phi^3 = 2 * (1/2) / 4
        let lod = space(1, 2, 1, 1);
        assert_eq!(lod.omega.nnz(), 1);
        assert!((lod.omega.get(0, 0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force() {
        for (dim, cells, factor, ell) in [(1, 8, 4, 8), (2, 3, 2, 3), (1, 6, 3, 2)] {
            let lod = space(dim, cells, factor, ell);
            let n = lod.dim();
            let dense = brute_force(&lod);
            let mut maxerr: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        maxerr = maxerr.max((lod.omega.get(i, j, k) - dense[(i * n + j) * n + k]).abs());
                    }
                }
            }
            assert!(maxerr < 1e-12, "dim {dim}: {maxerr:e}");
        }
    }

    #[test]
    fn missing_triple_is_an_error() {
        let m = SparseMatrix::identity(3);
        let mut t = TriTensor::preallocate(&m, 1e-16);
        assert_eq!(t.nnz(), 3);
        assert!(t.add(0, 0, 0, 1.0).is_ok());
        assert!(matches!(t.add(0, 1, 2, 1.0), Err(Error::MissingTriple(..))));
        assert_eq!(t.get(2, 0, 1), 0.0);
    }

    #[test]
    fn higher_degree_rule_changes_nothing() {
        // the integrand is a cubic on every fine simplex
        let c = build_box_mesh(&BoxDomain::cube(1, -2.0, 2.0).unwrap(), &[8]).unwrap();
        let pair = refine_uniform(&c, 4).unwrap();
        let mut opts = LodOptions { tensor_degree: 9, ..LodOptions::default() };
        let a = LodSpace::build(pair.clone(), BilinearForm::canonical(), 3, opts.clone()).unwrap();
        opts.tensor_degree = 12;
        let b = LodSpace::build(pair, BilinearForm::canonical(), 3, opts).unwrap();
        assert_eq!(a.omega.nnz(), b.omega.nnz());
        let diff = a.omega.values.iter().zip(&b.omega.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-13, "{diff:e}");
    }

    #[test]
    fn stored_triples_respect_memory_bound() {
        let lod = space(2, 4, 2, 1);
        let bound: usize = (0..lod.dim())
            .map(|i| {
                let (c, v) = lod.m_lod.row(i);
                let k = c.iter().zip(v).filter(|(&j, a)| j >= i && a.abs() > 1e-16).count();
                k * (k + 1) / 2
            })
            .sum();
        assert!(lod.omega.nnz() <= bound);
    }

    #[test]
    fn unit_vectors_collapse_contractions() {
        let lod = space(1, 8, 3, 2);
        let n = lod.dim();
        let e = |j: usize| (0..n).map(|k| if k == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        assert!(lod.omega.density_rhs(&vec![0.0; n]).iter().all(|&v| v == 0.0));
        assert!(lod.omega.nonlinear_apply(&vec![0.0; n], &e(2)).iter().all(|&v| v == 0.0));
        for j in [0, 3, n - 1] {
            let b = lod.omega.density_rhs(&e(j));
            for k in [1, 4] {
                let c = lod.omega.nonlinear_apply(&e(k), &e(j));
                for i in 0..n {
                    assert!((b[i] - lod.omega.get(j, j, i)).abs() < 1e-15);
                    assert!((c[i] - lod.omega.get(k, j, i)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn projected_density_pairing_is_nonnegative() {
        let lod = space(2, 3, 2, 2);
        let n = lod.dim();
        let u: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).sin(), (1.7 * i as f64).cos())).collect();
        let b = lod.omega.density_rhs(&u);
        let rho = lod.mass_solver().solve(&b);
        let c = lod.omega.nonlinear_apply(&rho, &u);
        let s: Complex64 = u.iter().zip(&c).map(|(a, b)| a.conj() * b).sum();
        assert!(s.im.abs() < 1e-12 && s.re >= -1e-12, "{s}");
    }

    fn tensor_with_values(n: usize, seed: u64) -> TriTensor {
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if (i as i64 - j as i64).abs() <= 2 {
                    trip.push((i, j, 1.0));
                }
            }
        }
        let m = SparseMatrix::from_triplets(n, n, &trip);
        let mut t = TriTensor::preallocate(&m, 1e-16);
        let mut s = seed;
        for v in t.values.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
        }
        t
    }

    fn dense_of(t: &TriTensor) -> Vec<f64> {
        let n = t.n();
        let mut d = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    d[(i * n + j) * n + k] = t.get(i, j, k);
                }
            }
        }
        d
    }

    proptest! {
        #[test]
        fn get_is_symmetric(seed in 0u64..1000, i in 0usize..7, j in 0usize..7, k in 0usize..7) {
            let t = tensor_with_values(7, seed);
            let v = t.get(i, j, k);
            for (a, b, c) in [(i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                prop_assert_eq!(t.get(a, b, c), v);
            }
        }

        #[test]
        fn contractions_match_dense(seed in 0u64..1000,
                                    re in proptest::collection::vec(-1.0f64..1.0, 7),
                                    im in proptest::collection::vec(-1.0f64..1.0, 7),
                                    rho in proptest::collection::vec(-1.0f64..1.0, 7)) {
            let n = 7;
            let t = tensor_with_values(n, seed);
            let d = dense_of(&t);
            let alpha: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            let b = t.density_rhs(&alpha);
            let c = t.nonlinear_apply(&rho, &alpha);
            let nmat = t.weighted_matrix(&rho, &SparseMatrix::from_triplets(n, n,
                &(0..n).flat_map(|i| (0..n).filter(move |&j| (i as i64 - j as i64).abs() <= 2).map(move |j| (i, j, 1.0))).collect::<Vec<_>>()));
            let cr = t.nonlinear_apply(&rho, &re);
            for i in 0..n {
                let mut bi = 0.0;
                let mut ci = Complex64::new(0.0, 0.0);
                for k in 0..n { for j in 0..n {
                    let w = d[(k * n + j) * n + i];
                    bi += (alpha[k] * alpha[j].conj()).re * w;
                    ci += rho[k] * alpha[j] * w;
                }}
                prop_assert!((b[i] - bi).abs() < 1e-12);
                prop_assert!((c[i] - ci).norm() < 1e-12);
                let ni: f64 = (0..n).map(|j| nmat.get(i, j) * re[j]).sum();
                prop_assert!((ni - cr[i]).abs() < 1e-12);
            }
        }
    }
}

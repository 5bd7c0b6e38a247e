//! Structured simplicial meshes of axis-aligned boxes.
//!
//! Every box cell is split into `dim!` Kuhn simplices that share the main
//! diagonal of the cell. Because the Kuhn split of a refined grid subdivides
//! the Kuhn split of the coarse grid, uniform refinement yields properly
//! nested mesh pairs. Vertices are numbered lexicographically with the first
//! axis running fastest.

use std::sync::OnceLock;

use crate::{Error, Result};

/// Compressed lists of indices, one list per entity.
#[derive(Debug, Clone, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        for l in lists {
            indices.extend_from_slice(l);
            offsets.push(indices.len());
        }
        Adjacency { offsets, indices }
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Axis-aligned box `[lower, upper]` in 1 to 3 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() > 3 || lower.len() != upper.len() {
            return Err(Error::InvalidMesh(format!(
                "box bounds must have matching length 1..=3, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidMesh("box has non-positive extent".into()));
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The cube `[a, b]^dim`.
    pub fn cube(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }
}

/// All permutations of `0..d` in lexicographic order.
pub(crate) fn kuhn_permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for a in 0..used.len() {
            if !used[a] {
                used[a] = true;
                prefix.push(a);
                rec(prefix, used, out);
                prefix.pop();
                used[a] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// Conforming simplicial mesh of a box with Kuhn-split cells.
#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    dim: usize,
    domain: BoxDomain,
    cells: Vec<usize>,
    coords: Vec<f64>,
    simplices: Vec<usize>,
    boundary: Vec<bool>,
    dof_of_vertex: Vec<usize>,
    vertex_of_dof: Vec<usize>,
    mesh_size: f64,
    vertex_to_simplices: OnceLock<Adjacency>,
    element_adjacency: OnceLock<Adjacency>,
}

/// Marker for vertices without a degree of freedom.
pub const NO_DOF: usize = usize::MAX;

/// Build the Kuhn triangulation of `domain` with `cells[a]` cells along axis `a`.
pub fn build_box_mesh(domain: &BoxDomain, cells: &[usize]) -> Result<SimplicialMesh> {
    let dim = domain.dim();
    if cells.len() != dim {
        return Err(Error::InvalidMesh(format!(
            "{} cell counts given for a {}-dimensional box",
            cells.len(),
            dim
        )));
    }
    if cells.iter().any(|&n| n == 0) {
        return Err(Error::InvalidMesh("cell count must be positive".into()));
    }
    let npts: Vec<usize> = cells.iter().map(|n| n + 1).collect();
    let n_vertices: usize = npts.iter().product();
    let mut coords = Vec::with_capacity(n_vertices * dim);
    let mut boundary = Vec::with_capacity(n_vertices);
    for v in 0..n_vertices {
        let mut rest = v;
        let mut on_bnd = false;
        for a in 0..dim {
            let i = rest % npts[a];
            rest /= npts[a];
            let t = i as f64 / cells[a] as f64;
            let x = if i == cells[a] {
                domain.upper[a]
            } else {
                domain.lower[a] + t * domain.extent(a)
            };
            coords.push(x);
            on_bnd |= i == 0 || i == cells[a];
        }
        boundary.push(on_bnd);
    }

    let perms = kuhn_permutations(dim);
    let n_cells: usize = cells.iter().product();
    let mut simplices = Vec::with_capacity(n_cells * perms.len() * (dim + 1));
    let mut stride = vec![1usize; dim];
    for a in 1..dim {
        stride[a] = stride[a - 1] * npts[a - 1];
    }
    for c in 0..n_cells {
        let mut rest = c;
        let mut corner = 0;
        for a in 0..dim {
            corner += (rest % cells[a]) * stride[a];
            rest /= cells[a];
        }
        for p in &perms {
            let mut v = corner;
            simplices.push(v);
            for &a in p {
                v += stride[a];
                simplices.push(v);
            }
        }
    }

    let mut dof_of_vertex = vec![NO_DOF; n_vertices];
    let mut vertex_of_dof = Vec::new();
    for v in 0..n_vertices {
        if !boundary[v] {
            dof_of_vertex[v] = vertex_of_dof.len();
            vertex_of_dof.push(v);
        }
    }

    let mut mesh = SimplicialMesh {
        dim,
        domain: domain.clone(),
        cells: cells.to_vec(),
        coords,
        simplices,
        boundary,
        dof_of_vertex,
        vertex_of_dof,
        mesh_size: 0.0,
        vertex_to_simplices: OnceLock::new(),
        element_adjacency: OnceLock::new(),
    };
    mesh.mesh_size = mesh.max_edge_length();
    Ok(mesh)
}

impl SimplicialMesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_simplices(&self) -> usize {
        self.simplices.len() / (self.dim + 1)
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn simplex(&self, k: usize) -> &[usize] {
        &self.simplices[k * (self.dim + 1)..(k + 1) * (self.dim + 1)]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Number of interior vertices, which carry the degrees of freedom.
    pub fn n_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    /// Degree of freedom of vertex `v`, or [`NO_DOF`] on the boundary.
    pub fn dof(&self, v: usize) -> usize {
        self.dof_of_vertex[v]
    }

    pub fn dof_map(&self) -> &[usize] {
        &self.dof_of_vertex
    }

    pub fn vertex_of_dof(&self, d: usize) -> usize {
        self.vertex_of_dof[d]
    }

    /// Largest edge length over all simplices.
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    /// Width of a grid cell along `axis`.
    pub fn cell_width(&self, axis: usize) -> f64 {
        self.domain.extent(axis) / self.cells[axis] as f64
    }

    /// Integer grid coordinates of vertex `v`.
    pub fn grid_index(&self, v: usize) -> [usize; 3] {
        let mut g = [0usize; 3];
        let mut rest = v;
        for (a, gi) in g.iter_mut().enumerate().take(self.dim) {
            *gi = rest % (self.cells[a] + 1);
            rest /= self.cells[a] + 1;
        }
        g
    }

    /// Vertex with the given integer grid coordinates.
    pub fn vertex_at(&self, g: &[usize]) -> usize {
        let mut v = 0;
        let mut stride = 1;
        for a in 0..self.dim {
            v += g[a] * stride;
            stride *= self.cells[a] + 1;
        }
        v
    }

    /// Volume of simplex `k`.
    pub fn simplex_volume(&self, k: usize) -> f64 {
        let s = self.simplex(k);
        let x0 = self.vertex(s[0]);
        let mut m = [[0.0; 3]; 3];
        for r in 0..self.dim {
            let xr = self.vertex(s[r + 1]);
            for c in 0..self.dim {
                m[r][c] = xr[c] - x0[c];
            }
        }
        let det = match self.dim {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        };
        let fact = [1.0, 1.0, 2.0, 6.0][self.dim];
        det.abs() / fact
    }

    fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for k in 0..self.n_simplices() {
            let s = self.simplex(k);
            for a in 0..s.len() {
                for b in a + 1..s.len() {
                    let (xa, xb) = (self.vertex(s[a]), self.vertex(s[b]));
                    let d2: f64 = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum();
                    h = h.max(d2.sqrt());
                }
            }
        }
        h
    }

    /// Simplices containing each vertex.
    pub fn vertex_to_simplices(&self) -> &Adjacency {
        self.vertex_to_simplices.get_or_init(|| {
            let mut lists = vec![Vec::new(); self.n_vertices()];
            for k in 0..self.n_simplices() {
                for &v in self.simplex(k) {
                    lists[v].push(k);
                }
            }
            Adjacency::from_lists(&lists)
        })
    }

    /// Simplices sharing at least one vertex with each simplex (itself excluded).
    pub fn element_adjacency(&self) -> &Adjacency {
        self.element_adjacency.get_or_init(|| {
            let v2s = self.vertex_to_simplices();
            let lists: Vec<Vec<usize>> = (0..self.n_simplices())
                .map(|k| {
                    let mut l: Vec<usize> = self
                        .simplex(k)
                        .iter()
                        .flat_map(|&v| v2s.get(v).iter().copied())
                        .filter(|&t| t != k)
                        .collect();
                    l.sort_unstable();
                    l.dedup();
                    l
                })
                .collect();
            Adjacency::from_lists(&lists)
        })
    }

    /// Element patch of order `ell` around simplex `k`: `ell` rounds of adding
    /// every simplex that shares a vertex with the current patch. Sorted.
    pub fn patch(&self, k: usize, ell: usize) -> Vec<usize> {
        let v2s = self.vertex_to_simplices();
        let mut in_patch = std::collections::HashSet::new();
        in_patch.insert(k);
        let mut frontier = vec![k];
        for _ in 0..ell {
            let mut next = Vec::new();
            for &s in &frontier {
                for &v in self.simplex(s) {
                    for &t in v2s.get(v) {
                        if in_patch.insert(t) {
                            next.push(t);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let mut out: Vec<usize> = in_patch.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Simplices forming the support of the hat function at interior vertex `v`.
    pub fn node_patch_support(&self, v: usize) -> Result<Vec<usize>> {
        if v >= self.n_vertices() {
            return Err(Error::InvalidMesh(format!("vertex {v} out of range")));
        }
        if self.boundary[v] {
            return Err(Error::BoundaryNode(v));
        }
        Ok(self.vertex_to_simplices().get(v).to_vec())
    }

    /// Index of the Kuhn simplex in `cell` (grid corner) with axis order `perm_index`.
    fn simplex_in_cell(&self, cell: &[usize], perm_index: usize) -> usize {
        let mut c = 0;
        let mut stride = 1;
        for a in 0..self.dim {
            c += cell[a] * stride;
            stride *= self.cells[a];
        }
        let nperm = [1, 1, 2, 6][self.dim];
        c * nperm + perm_index
    }

    /// Locate a point given in scaled integer grid units.
    ///
    /// `num[a] / denom` is the grid coordinate along axis `a`. Returns the
    /// containing simplex and the barycentric coordinates of the point with
    /// respect to its vertices, computed from exact integer offsets.
    pub fn locate_grid(&self, num: &[i64], denom: i64) -> (usize, Vec<f64>) {
        let d = self.dim;
        let mut cell = vec![0usize; d];
        let mut r = vec![0i64; d];
        for a in 0..d {
            let c = (num[a].div_euclid(denom)).clamp(0, self.cells[a] as i64 - 1);
            cell[a] = c as usize;
            r[a] = num[a] - c * denom;
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| r[b].cmp(&r[a]).then(a.cmp(&b)));
        let perms = kuhn_permutations(d);
        let p = perms.iter().position(|p| *p == order).expect("permutation");
        let mut lam = vec![0.0; d + 1];
        lam[0] = (denom - r[order[0]]) as f64 / denom as f64;
        for m in 1..d {
            lam[m] = (r[order[m - 1]] - r[order[m]]) as f64 / denom as f64;
        }
        lam[d] = r[order[d - 1]] as f64 / denom as f64;
        (self.simplex_in_cell(&cell, p), lam)
    }
}

/// Coarse mesh, its uniform refinement and the nesting relation.
#[derive(Debug, Clone)]
pub struct MeshPair {
    pub coarse: SimplicialMesh,
    pub fine: SimplicialMesh,
    pub factor: usize,
    parent: Vec<usize>,
    children: Adjacency,
}

/// Refine every grid cell of `coarse` into `factor^dim` cells.
pub fn refine_uniform(coarse: &SimplicialMesh, factor: usize) -> Result<MeshPair> {
    if factor == 0 {
        return Err(Error::InvalidMesh("refinement factor must be positive".into()));
    }
    let cells: Vec<usize> = coarse.cells.iter().map(|n| n * factor).collect();
    let fine = build_box_mesh(&coarse.domain, &cells)?;
    let d = coarse.dim;
    let denom = ((d + 1) * factor) as i64;
    let mut parent = Vec::with_capacity(fine.n_simplices());
    let mut lists = vec![Vec::new(); coarse.n_simplices()];
    for t in 0..fine.n_simplices() {
        let mut num = [0i64; 3];
        for &v in fine.simplex(t) {
            let g = fine.grid_index(v);
            for a in 0..d {
                num[a] += g[a] as i64;
            }
        }
        let (k, _) = coarse.locate_grid(&num[..d], denom);
        parent.push(k);
        lists[k].push(t);
    }
    Ok(MeshPair {
        coarse: coarse.clone(),
        fine,
        factor,
        parent,
        children: Adjacency::from_lists(&lists),
    })
}

impl MeshPair {
    /// Coarse simplex containing fine simplex `t`.
    pub fn parent(&self, t: usize) -> usize {
        self.parent[t]
    }

    pub fn parent_map(&self) -> &[usize] {
        &self.parent
    }

    /// Fine simplices inside coarse simplex `k`.
    pub fn children(&self, k: usize) -> &[usize] {
        self.children.get(k)
    }

    /// Coarse simplex containing fine vertex `v`, with barycentric coordinates.
    pub fn locate_fine_vertex(&self, v: usize) -> (usize, Vec<f64>) {
        let g = self.fine.grid_index(v);
        let num: Vec<i64> = g[..self.fine.dim].iter().map(|&x| x as i64).collect();
        self.coarse.locate_grid(&num, self.factor as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, n: usize) -> SimplicialMesh {
        build_box_mesh(&BoxDomain::cube(dim, 0.0, 1.0).unwrap(), &vec![n; dim]).unwrap()
    }

    #[test]
    fn counts_3d() {
        let m = unit(3, 2);
        assert_eq!(m.n_vertices(), 27);
        assert_eq!(m.n_simplices(), 48);
        assert_eq!(m.n_dofs(), 1);
        let vol: f64 = (0..m.n_simplices()).map(|k| m.simplex_volume(k)).sum();
        assert!((vol - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lexicographic_vertices() {
        let m = unit(2, 2);
        assert_eq!(m.vertex(1), &[0.5, 0.0]);
        assert_eq!(m.vertex(3), &[0.0, 0.5]);
        assert_eq!(m.vertex_at(&[2, 1]), 5);
    }

    #[test]
    fn mesh_size_is_longest_edge() {
        let m = unit(2, 4);
        assert!((m.mesh_size() - 0.25 * 2f64.sqrt()).abs() < 1e-15);
        let m = unit(3, 2);
        assert!((m.mesh_size() - 0.5 * 3f64.sqrt()).abs() < 1e-15);
        let m = unit(1, 10);
        assert!((m.mesh_size() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn refinement_2d() {
        let c = unit(2, 1);
        let pair = refine_uniform(&c, 3).unwrap();
        assert_eq!(pair.fine.n_simplices(), 18);
        assert_eq!(pair.children(0).len() + pair.children(1).len(), 18);
        for k in 0..2 {
            let v: f64 = pair.children(k).iter().map(|&t| pair.fine.simplex_volume(t)).sum();
            assert!((v - c.simplex_volume(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn children_lie_inside_parent() {
        for dim in 1..=3 {
            let c = unit(dim, 2);
            let pair = refine_uniform(&c, 3).unwrap();
            for t in 0..pair.fine.n_simplices() {
                let k = pair.parent(t);
                for &v in pair.fine.simplex(t) {
                    let g = pair.fine.grid_index(v);
                    let num: Vec<i64> = g[..dim].iter().map(|&x| x as i64).collect();
                    let (_, lam) = c.locate_grid(&num, 3);
                    // reconstruct the point from the parent's vertices
                    let x = pair.fine.vertex(v);
                    let bary = barycentric(&c, k, x);
                    assert!(bary.iter().all(|&l| l > -1e-12), "dim {dim} t {t}");
                    assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    fn barycentric(m: &SimplicialMesh, k: usize, x: &[f64]) -> Vec<f64> {
        // brute-force solve through Cramer's rule on the small system
        let s = m.simplex(k);
        let d = m.dim();
        let x0 = m.vertex(s[0]);
        let mut a = vec![vec![0.0; d]; d];
        for r in 0..d {
            for c in 0..d {
                a[r][c] = m.vertex(s[c + 1])[r] - x0[r];
            }
        }
        let rhs: Vec<f64> = (0..d).map(|r| x[r] - x0[r]).collect();
        let sol = gauss(a, rhs);
        let mut lam = vec![1.0 - sol.iter().sum::<f64>()];
        lam.extend(sol);
        lam
    }

    fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for i in 0..n {
            let p = (i..n).max_by(|&x, &y| a[x][i].abs().total_cmp(&a[y][i].abs())).unwrap();
            a.swap(i, p);
            b.swap(i, p);
            for r in i + 1..n {
                let f = a[r][i] / a[i][i];
                for c in i..n {
                    a[r][c] -= f * a[i][c];
                }
                b[r] -= f * b[i];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| a[i][c] * x[c]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn patch_1d() {
        let m = unit(1, 10);
        assert_eq!(m.patch(5, 1), vec![4, 5, 6]);
        assert_eq!(m.patch(5, 0), vec![5]);
        assert_eq!(m.patch(0, 2), vec![0, 1, 2]);
        assert_eq!(m.patch(5, 100).len(), 10);
    }

    #[test]
    fn node_support() {
        let m = unit(2, 4);
        let v = m.vertex_at(&[2, 2]);
        assert_eq!(m.node_patch_support(v).unwrap().len(), 6);
        assert!(matches!(m.node_patch_support(0), Err(Error::BoundaryNode(0))));
        let m3 = unit(3, 2);
        assert_eq!(m3.node_patch_support(13).unwrap().len(), 24);
    }

    #[test]
    fn patch_is_monotone_in_order() {
        let m = unit(2, 6);
        let mut prev = m.patch(30, 0);
        for ell in 1..5 {
            let p = m.patch(30, ell);
            assert!(prev.iter().all(|k| p.binary_search(k).is_ok()));
            prev = p;
        }
    }

    #[test]
    fn rejects_bad_input() {
        let d = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        assert!(build_box_mesh(&d, &[2]).is_err());
        assert!(build_box_mesh(&d, &[2, 0]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
    }
}

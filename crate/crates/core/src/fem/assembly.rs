//! P1 finite element assembly with Dirichlet vertices eliminated.
//!
//! Matrices are indexed by interior degrees of freedom (see
//! [`SimplicialMesh::dof`]) unless stated otherwise.

use num_complex::Complex64;

use super::{QuadratureRule, ScalarField, SparseMatrix};
use crate::mesh::{MeshPair, SimplicialMesh, NO_DOF};
use crate::{Error, Result};

/// Local element matrix, indexed by local vertex numbers.
pub type LocalMatrix = [[f64; 4]; 4];

/// Affine geometry of one simplex.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub volume: f64,
    /// Gradients of the barycentric coordinates.
    pub grads: [[f64; 3]; 4],
    pub vertices: [[f64; 3]; 4],
    pub dim: usize,
}

impl ElementGeometry {
    pub fn new(mesh: &SimplicialMesh, k: usize) -> Self {
        let d = mesh.dim();
        let s = mesh.simplex(k);
        let mut vertices = [[0.0; 3]; 4];
        for (a, &v) in s.iter().enumerate() {
            vertices[a][..d].copy_from_slice(mesh.vertex(v));
        }
        // Jacobian columns are edge vectors from vertex 0
        let mut jac = [[0.0; 3]; 3];
        for c in 0..d {
            for r in 0..d {
                jac[r][c] = vertices[c + 1][r] - vertices[0][r];
            }
        }
        let (det, inv) = invert(&jac, d);
        let mut grads = [[0.0; 3]; 4];
        for a in 0..d {
            // row a of J^{-1} is the gradient of barycentric coordinate a + 1
            for r in 0..d {
                grads[a + 1][r] = inv[a][r];
                grads[0][r] -= inv[a][r];
            }
        }
        let fact = [1.0, 1.0, 2.0, 6.0][d];
        ElementGeometry { volume: det.abs() / fact, grads, vertices, dim: d }
    }

    /// Physical point with barycentric coordinates `bary`.
    pub fn point(&self, bary: &[f64]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, &l) in bary.iter().enumerate() {
            for r in 0..self.dim {
                x[r] += l * self.vertices[a][r];
            }
        }
        x
    }

    pub fn stiffness(&self) -> LocalMatrix {
        let mut m = [[0.0; 4]; 4];
        for a in 0..=self.dim {
            for b in 0..=self.dim {
                let g: f64 = (0..self.dim).map(|r| self.grads[a][r] * self.grads[b][r]).sum();
                m[a][b] = self.volume * g;
            }
        }
        m
    }

    pub fn mass(&self) -> LocalMatrix {
        let d = self.dim as f64;
        let base = self.volume / ((d + 1.0) * (d + 2.0));
        let mut m = [[0.0; 4]; 4];
        for a in 0..=self.dim {
            for b in 0..=self.dim {
                m[a][b] = if a == b { 2.0 * base } else { base };
            }
        }
        m
    }

    /// Mass matrix weighted by `field`, integrated with `rule`.
    pub fn weighted_mass(&self, field: &ScalarField, rule: &QuadratureRule) -> LocalMatrix {
        let mut m = [[0.0; 4]; 4];
        for q in 0..rule.n_points() {
            let l = rule.bary(q);
            let x = self.point(l);
            let w = rule.weights()[q] * self.volume * field.eval(&x[..self.dim]);
            for a in 0..=self.dim {
                for b in 0..=self.dim {
                    m[a][b] += w * l[a] * l[b];
                }
            }
        }
        m
    }
}

fn invert(j: &[[f64; 3]; 3], d: usize) -> (f64, [[f64; 3]; 3]) {
    let mut inv = [[0.0; 3]; 3];
    match d {
        1 => {
            inv[0][0] = 1.0 / j[0][0];
            (j[0][0], inv)
        }
        2 => {
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            inv[0][0] = j[1][1] / det;
            inv[0][1] = -j[0][1] / det;
            inv[1][0] = -j[1][0] / det;
            inv[1][1] = j[0][0] / det;
            (det, inv)
        }
        _ => {
            let c = |r0: usize, r1: usize, c0: usize, c1: usize| j[r0][c0] * j[r1][c1] - j[r0][c1] * j[r1][c0];
            let cof = [
                [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
                [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
                [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
            ];
            let det = j[0][0] * cof[0][0] + j[0][1] * cof[0][1] + j[0][2] * cof[0][2];
            for r in 0..3 {
                for cc in 0..3 {
                    inv[r][cc] = cof[cc][r] / det;
                }
            }
            (det, inv)
        }
    }
}

/// Assemble `sum_k local(k)` into a matrix over `dofs` (a vertex-to-index map
/// with [`NO_DOF`] for skipped vertices).
pub fn assemble_with(
    mesh: &SimplicialMesh,
    dofs: &[usize],
    n: usize,
    local: impl Fn(usize) -> LocalMatrix,
) -> SparseMatrix {
    let d = mesh.dim();
    let mut triplets = Vec::with_capacity(mesh.n_simplices() * (d + 1) * (d + 1));
    for k in 0..mesh.n_simplices() {
        let s = mesh.simplex(k);
        let m = local(k);
        for a in 0..=d {
            let ia = dofs[s[a]];
            if ia == NO_DOF {
                continue;
            }
            for b in 0..=d {
                let ib = dofs[s[b]];
                if ib != NO_DOF {
                    triplets.push((ia, ib, m[a][b]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// Stiffness matrix `(grad u, grad v)`.
pub fn assemble_stiffness(mesh: &SimplicialMesh) -> SparseMatrix {
    assemble_with(mesh, mesh.dof_map(), mesh.n_dofs(), |k| ElementGeometry::new(mesh, k).stiffness())
}

/// Mass matrix `(u, v)`.
pub fn assemble_mass(mesh: &SimplicialMesh) -> SparseMatrix {
    assemble_with(mesh, mesh.dof_map(), mesh.n_dofs(), |k| ElementGeometry::new(mesh, k).mass())
}

/// Mass matrix over all vertices, boundary included.
pub fn assemble_mass_full(mesh: &SimplicialMesh) -> SparseMatrix {
    let all: Vec<usize> = (0..mesh.n_vertices()).collect();
    assemble_with(mesh, &all, mesh.n_vertices(), |k| ElementGeometry::new(mesh, k).mass())
}

/// Weighted mass matrix `(V u, v)`; the rule should be exact for degree
/// `2 + deg(V)` when `V` is polynomial.
pub fn assemble_weighted_mass(mesh: &SimplicialMesh, field: &ScalarField, rule: &QuadratureRule) -> Result<SparseMatrix> {
    if rule.dim() != mesh.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rule of dimension {} on a {}-dimensional mesh",
            rule.dim(),
            mesh.dim()
        )));
    }
    Ok(assemble_with(mesh, mesh.dof_map(), mesh.n_dofs(), |k| {
        ElementGeometry::new(mesh, k).weighted_mass(field, rule)
    }))
}

/// Prolongation of coarse hat functions to the fine space: row `i` holds the
/// nodal values of coarse hat `i` at the fine interior vertices.
pub fn interpolation_matrix(pair: &MeshPair) -> SparseMatrix {
    let (coarse, fine) = (&pair.coarse, &pair.fine);
    let mut triplets = Vec::new();
    for fd in 0..fine.n_dofs() {
        let v = fine.vertex_of_dof(fd);
        let (k, lam) = pair.locate_fine_vertex(v);
        for (a, &cv) in coarse.simplex(k).iter().enumerate() {
            let cd = coarse.dof(cv);
            if cd != NO_DOF && lam[a] != 0.0 {
                triplets.push((cd, fd, lam[a]));
            }
        }
    }
    SparseMatrix::from_triplets(coarse.n_dofs(), fine.n_dofs(), &triplets)
}

/// L2 inner product `(u, v) = sum_ij u_i M_ij conj(v_j)` of coefficient vectors.
pub fn l2_dot(mesh: &SimplicialMesh, u: &[Complex64], v: &[Complex64], mass: &SparseMatrix) -> Result<Complex64> {
    if u.len() != mass.nrows() || v.len() != mass.nrows() || mass.nrows() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch("vectors do not match the mass matrix".into()));
    }
    let mv: Vec<Complex64> = mass.matvec_complex(&v.iter().map(|z| z.conj()).collect::<Vec<_>>());
    Ok(u.iter().zip(&mv).map(|(a, b)| a * b).sum())
}

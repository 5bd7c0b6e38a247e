//! P1 finite elements: sparse matrices, quadrature and assembly.

mod assembly;
mod quadrature;
mod sparse;

use std::fmt;
use std::sync::Arc;

pub use assembly::{
    assemble_mass, assemble_mass_full, assemble_stiffness, assemble_weighted_mass, assemble_with,
    interpolation_matrix, l2_dot, ElementGeometry, LocalMatrix,
};
pub use quadrature::{gauss_legendre, QuadratureRule, KEAST_CENTROID_WEIGHT};
pub use sparse::SparseMatrix;

/// A real function of position, such as a trapping potential.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    smooth: bool,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl ScalarField {
    pub fn new(name: impl Into<String>, smooth: bool, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { name: name.into(), smooth, f: Arc::new(f) }
    }

    pub fn zero() -> Self {
        Self::new("zero", true, |_| 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// False for fields with jumps; those must be aligned with mesh faces.
    pub fn is_smooth(&self) -> bool {
        self.smooth
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("name", &self.name).field("smooth", &self.smooth).finish()
    }
}

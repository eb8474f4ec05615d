//! Assembly of interior-node systems and SPD solves.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Restricts vertex-indexed triplets to interior unknowns and assembles CSC.
pub(crate) fn assemble_interior(mesh: &Mesh, triplets: impl Iterator<Item = (usize, usize, f64)>) -> CscMatrix<f64> {
    let n = mesh.interior_vertices().len();
    let dof = mesh.dof_of_vertex();
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in triplets {
        if let (Some(a), Some(b)) = (dof[i], dof[j]) {
            coo.push(a, b, v);
        }
    }
    CscMatrix::from(&coo)
}

pub(crate) struct SpdSolver {
    chol: CscCholesky<f64>,
}

impl SpdSolver {
    pub(crate) fn factor(matrix: &CscMatrix<f64>) -> Result<Self> {
        CscCholesky::factor(matrix)
            .map(|chol| SpdSolver { chol })
            .map_err(|e| Error::Numerical(format!("Cholesky factorization failed: {e:?}")))
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        let x = self.chol.solve(&b);
        x.as_slice().to_vec()
    }
}

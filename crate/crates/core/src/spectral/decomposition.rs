use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, CsrMatrix, Mat};

/// Largest operator the dense eigensolver accepts by default.
pub const DEFAULT_DENSE_LIMIT: usize = 5000;

const SYMMETRY_TOL: f64 = 1e-10;

/// `L = U Λ Uᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: Mat,
}

pub fn eigendecompose(l: &CsrMatrix) -> Result<SpectralDecomposition> {
    eigendecompose_with_limit(l, DEFAULT_DENSE_LIMIT)
}

pub fn eigendecompose_with_limit(l: &CsrMatrix, limit: usize) -> Result<SpectralDecomposition> {
    let n = l.n_rows();
    if n > limit {
        return Err(Error::TooLargeForDense { n, limit });
    }
    let asymmetry = l.max_asymmetry();
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = symmetric_eigen(&l.to_dense())?;
    Ok(SpectralDecomposition {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    })
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Graph Fourier transform `x̂ = Uᵀx`.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len(), "signal length");
        let u = &self.eigenvectors;
        let mut out = vec![0.0; self.len()];
        for (i, &xi) in x.iter().enumerate() {
            crate::linalg::axpy(xi, u.row(i), &mut out);
        }
        out
    }

    /// `U · diag(g(λ)) · Uᵀ · X`
    pub fn apply_response(&self, g: impl Fn(f64) -> f64, x: &Mat) -> Mat {
        let u = &self.eigenvectors;
        let mut spec = u.matmul_tn(x);
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = g(lambda);
            spec.row_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        u.matmul(&spec)
    }

    pub fn reconstruct(&self) -> Mat {
        self.apply_response(|l| l, &Mat::identity(self.len()))
    }
}

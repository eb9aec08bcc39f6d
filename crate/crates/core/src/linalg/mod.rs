//! Dense and sparse matrix primitives used throughout the crate.

pub mod dense;
pub mod eigen;
pub mod sparse;

pub use dense::{axpy, dot, norm2, Mat};
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use sparse::CsrMatrix;

//! Sparse CSR kernels, direct and incomplete Cholesky factorizations, and
//! conjugate gradient solvers.

mod csr;
mod factor;
mod ic0;
mod krylov;

pub use csr::{dot, norm2, CsrMatrix};
pub use factor::{factorize, DenseCholesky, Factorization, SkylineCholesky, DENSE_CUTOFF};
pub use ic0::Ic0;
pub use krylov::{cg, pcg, Identity, Preconditioner, SolveReport};

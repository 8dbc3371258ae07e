//! One- and two-level Additive Schwarz preconditioners with exact local solves.
//!
//! ```text
//! M1⁻¹ = Σ_i R_iᵀ (R_i A R_iᵀ)⁻¹ R_i
//! M2⁻¹ = R_0ᵀ (R_0 A R_0ᵀ)⁻¹ R_0 + M1⁻¹
//! ```
//!
//! Plain `R_iᵀ` extension is used (no restricted weighting), so both operators
//! are symmetric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::sparse::{factorize, norm2, CsrMatrix, DenseCholesky, Factorization, Preconditioner, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    One,
    Two,
}

/// Local matrices `A_i = R_i A R_iᵀ` for every subdomain.
pub fn local_matrices(a: &CsrMatrix, dec: &Decomposition) -> Vec<CsrMatrix> {
    dec.subdomains.iter().map(|idx| a.submatrix(idx)).collect()
}

/// Exact coarse correction `R_0ᵀ (R_0 A R_0ᵀ)⁻¹ R_0`.
#[derive(Debug, Clone)]
pub struct CoarseSolver {
    r0: CsrMatrix,
    matrix: Vec<Vec<f64>>,
    factor: DenseCholesky,
}

impl CoarseSolver {
    pub fn new(a: &CsrMatrix, dec: &Decomposition) -> Result<Self> {
        let r0 = dec.r0.clone();
        let (k, n) = (r0.n_rows(), r0.n_cols());
        if n != a.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: a.n_rows(),
                actual: n,
            });
        }
        let gram = galerkin(&r0, None);
        DenseCholesky::factorize(&gram)
            .map_err(|_| Error::SingularCoarse("coarse basis R_0 is rank deficient".into()))?;

        let mut matrix = galerkin(&r0, Some(a));
        for i in 0..k {
            for j in 0..i {
                let avg = 0.5 * (matrix[i][j] + matrix[j][i]);
                matrix[i][j] = avg;
                matrix[j][i] = avg;
            }
        }
        let factor = DenseCholesky::factorize(&matrix).map_err(|e| Error::SingularCoarse(e.to_string()))?;
        Ok(CoarseSolver { r0, matrix, factor })
    }

    pub fn dim(&self) -> usize {
        self.r0.n_rows()
    }

    /// Dense `R_0 A R_0ᵀ`.
    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut y = self.r0.spmv(r);
        self.factor.solve_in_place(&mut y);
        self.r0.spmv_transpose(&y)
    }
}

/// `R M Rᵀ` with `M = A`, or `R Rᵀ` when `a` is `None`.
fn galerkin(r: &CsrMatrix, a: Option<&CsrMatrix>) -> Vec<Vec<f64>> {
    let (k, n) = (r.n_rows(), r.n_cols());
    let mut out = vec![vec![0.0; k]; k];
    let mut row = vec![0.0; n];
    for i in 0..k {
        row.iter_mut().for_each(|v| *v = 0.0);
        let (cols, vals) = r.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            row[j] = v;
        }
        let y = match a {
            Some(a) => a.spmv(&row),
            None => row.clone(),
        };
        let ry = r.spmv(&y);
        for (l, v) in ry.into_iter().enumerate() {
            out[l][i] = v;
        }
    }
    out
}

/// Additive Schwarz preconditioner with factorized local (and coarse) matrices.
#[derive(Debug, Clone)]
pub struct AsmPreconditioner {
    dec: Decomposition,
    local: Vec<Factorization>,
    coarse: Option<CoarseSolver>,
    level: Level,
}

/// Factorizes all local matrices and, for [`Level::Two`], the coarse matrix.
pub fn build_asm(a: &CsrMatrix, dec: &Decomposition, level: Level) -> Result<AsmPreconditioner> {
    if a.n_rows() != dec.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            actual: dec.n_dofs(),
        });
    }
    let local = local_matrices(a, dec)
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            factorize(m).map_err(|e| Error::SingularLocal {
                subdomain: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse = match level {
        Level::One => None,
        Level::Two => Some(CoarseSolver::new(a, dec)?),
    };
    Ok(AsmPreconditioner {
        dec: dec.clone(),
        local,
        coarse,
        level,
    })
}

impl AsmPreconditioner {
    pub fn level(&self) -> Level {
        self.level
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn coarse(&self) -> Option<&CoarseSolver> {
        self.coarse.as_ref()
    }

    /// `Σ_i R_iᵀ A_i⁻¹ R_i r`, summed in subdomain order.
    pub fn local_correction(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check(r)?;
        let solves: Vec<Vec<f64>> = self
            .local
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let mut v = self.dec.restrict(i, r).expect("dimension checked");
                f.solve_in_place(&mut v);
                v
            })
            .collect();
        let mut z = vec![0.0; r.len()];
        for (i, v) in solves.iter().enumerate() {
            self.dec.extend_add(i, v, 1.0, &mut z)?;
        }
        Ok(z)
    }

    pub fn coarse_correction(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check(r)?;
        Ok(match &self.coarse {
            Some(c) => c.apply(r),
            None => vec![0.0; r.len()],
        })
    }

    fn check(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.dec.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.dec.n_dofs(),
                actual: r.len(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.local_correction(r)?;
        if let Some(c) = &self.coarse {
            for (zi, ci) in z.iter_mut().zip(c.apply(r)) {
                *zi += ci;
            }
        }
        Ok(z)
    }
}

impl Preconditioner for AsmPreconditioner {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        AsmPreconditioner::apply(self, r)
    }
}

/// Relative residual beyond which the stationary iteration is abandoned.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Stationary iteration `u ← u + M⁻¹ (b - A u)` from `u = 0`.
///
/// Stops after `n_iter` steps, once the relative residual drops below `tol`, or
/// when it exceeds [`DIVERGENCE_LIMIT`].
pub fn asm_fixed_point<P: Preconditioner + ?Sized>(
    a: &CsrMatrix,
    b: &[f64],
    precond: &P,
    n_iter: usize,
    tol: f64,
) -> Result<(Vec<f64>, SolveReport)> {
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            actual: b.len(),
        });
    }
    let nb = match norm2(b) {
        v if v > 0.0 => v,
        _ => 1.0,
    };
    let mut u = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut history = vec![norm2(&r) / nb];
    for it in 0..n_iter {
        if history[it] < tol || history[it] > DIVERGENCE_LIMIT {
            break;
        }
        let z = precond.apply(&r)?;
        for (ui, zi) in u.iter_mut().zip(&z) {
            *ui += zi;
        }
        let au = a.spmv(&u);
        for ((ri, bi), ai) in r.iter_mut().zip(b).zip(&au) {
            *ri = bi - ai;
        }
        let relres = norm2(&r) / nb;
        if !relres.is_finite() {
            return Err(Error::NonFinite(it + 1));
        }
        history.push(relres);
    }
    Ok((u, SolveReport::from_history(history, tol)))
}

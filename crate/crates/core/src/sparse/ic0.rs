use super::csr::CsrMatrix;
use super::krylov::Preconditioner;
use crate::error::{Error, Result};

/// Zero fill-in incomplete Cholesky factor on the pattern of `lower(A)`.
///
/// No diagonal shift is applied: a non-positive pivot is reported as
/// [`Error::Ic0Breakdown`].
#[derive(Debug, Clone)]
pub struct Ic0 {
    /// Row-wise lower factor, diagonal stored last in each row.
    l: CsrMatrix,
}

impl Ic0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::InvalidArgument("IC(0) needs a square matrix".into()));
        }
        let n = a.n_rows();
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::with_capacity(a.nnz() / 2 + n);
        let mut values = Vec::with_capacity(a.nnz() / 2 + n);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let mut has_diag = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    col_idx.push(j);
                    values.push(v);
                    has_diag |= j == i;
                }
            }
            if !has_diag {
                return Err(Error::Ic0Breakdown { row: i, value: 0.0 });
            }
            row_ptr.push(col_idx.len());
        }

        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            for p in lo..hi {
                let j = col_idx[p];
                // sparse dot of row i and row j over columns < j
                let (jlo, jhi) = (row_ptr[j], row_ptr[j + 1]);
                let mut s = values[p];
                let (mut a_k, mut b_k) = (lo, jlo);
                while a_k < p && b_k < jhi - 1 {
                    let (ca, cb) = (col_idx[a_k], col_idx[b_k]);
                    if ca == cb {
                        s -= values[a_k] * values[b_k];
                        a_k += 1;
                        b_k += 1;
                    } else if ca < cb {
                        a_k += 1;
                    } else {
                        b_k += 1;
                    }
                }
                if j < i {
                    values[p] = s / values[jhi - 1];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::Ic0Breakdown { row: i, value: s });
                    }
                    values[p] = s.sqrt();
                }
            }
        }
        let l = CsrMatrix::new(n, n, row_ptr, col_idx, values)?;
        Ok(Ic0 { l })
    }

    pub fn factor(&self) -> &CsrMatrix {
        &self.l
    }

    /// `x ↦ L⁻ᵀ L⁻¹ x`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n_rows();
        let mut x = b.to_vec();
        for i in 0..n {
            let (cols, vals) = self.l.row(i);
            let last = cols.len() - 1;
            let mut s = x[i];
            for k in 0..last {
                s -= vals[k] * x[cols[k]];
            }
            x[i] = s / vals[last];
        }
        for i in (0..n).rev() {
            let (cols, vals) = self.l.row(i);
            let last = cols.len() - 1;
            x[i] /= vals[last];
            let xi = x[i];
            for k in 0..last {
                x[cols[k]] -= vals[k] * xi;
            }
        }
        x
    }
}

impl Preconditioner for Ic0 {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.l.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.l.n_rows(),
                actual: r.len(),
            });
        }
        Ok(self.solve(r))
    }
}

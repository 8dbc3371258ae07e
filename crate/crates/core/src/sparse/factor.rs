//! Direct Cholesky factorizations for the symmetric positive definite systems
//! arising from P1 discretizations.
//!
//! Small matrices use a dense factor; larger ones use a skyline (envelope)
//! factor, which stores each row of `L` from its first nonzero column to the
//! diagonal. Fill is confined to the envelope, so the natural ordering of the
//! generated meshes (ring by ring, or row by row) keeps the profile narrow.

use super::csr::CsrMatrix;
use crate::error::{Error, Result};

/// Matrices with fewer unknowns than this use the dense factor.
pub const DENSE_CUTOFF: usize = 200;

/// A Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub enum Factorization {
    Dense(DenseCholesky),
    Skyline(SkylineCholesky),
}

impl Factorization {
    pub fn dim(&self) -> usize {
        match self {
            Factorization::Dense(f) => f.n,
            Factorization::Skyline(f) => f.first.len(),
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "solve: right-hand side has wrong length");
        match self {
            Factorization::Dense(f) => f.solve_in_place(x),
            Factorization::Skyline(f) => f.solve_in_place(x),
        }
    }
}

/// Factorizes a symmetric positive definite matrix. Only the lower triangle is read.
pub fn factorize(a: &CsrMatrix) -> Result<Factorization> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "factorize needs a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if a.n_rows() < DENSE_CUTOFF {
        DenseCholesky::factorize(&a.to_dense()).map(Factorization::Dense)
    } else {
        SkylineCholesky::factorize(a).map(Factorization::Skyline)
    }
}

/// Dense lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn factorize(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, value: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(DenseCholesky { n, l })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.l[i * n + k] * xi;
            }
        }
    }
}

/// Envelope Cholesky factor: row `i` of `L` is stored densely for columns
/// `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let mut first = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            let f = a.row(i).0.first().copied().unwrap_or(i).min(i);
            first.push(f);
            offset.push(offset[i] + (i - f + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[offset[i] + j - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..=i {
                let start = fi.max(if j < i { first[j] } else { fi });
                let s = if j < i {
                    let row_j = &done[offset[j]..offset[j + 1]];
                    let fj = first[j];
                    let mut s = row_i[j - fi];
                    for k in start..j {
                        s -= row_i[k - fi] * row_j[k - fj];
                    }
                    s
                } else {
                    let mut s = row_i[i - fi];
                    for k in fi..i {
                        s -= row_i[k - fi] * row_i[k - fi];
                    }
                    s
                };
                if j < i {
                    let diag = done[offset[j + 1] - 1];
                    row_i[j - fi] = s / diag;
                } else {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, value: s });
                    }
                    row_i[i - fi] = s.sqrt();
                }
            }
        }
        Ok(SkylineCholesky {
            first,
            offset,
            data,
        })
    }

    /// Number of stored entries in the envelope.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.first.len();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = x[i];
            for k in fi..i {
                s -= row[k - fi] * x[k];
            }
            x[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for k in fi..i {
                x[k] -= row[k - fi] * xi;
            }
        }
    }
}

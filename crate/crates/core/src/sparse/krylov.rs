//! Conjugate gradient solvers.
//!
//! Residual norms are always reported relative to `‖b‖` (or to 1 when `b = 0`),
//! and the starting guess defaults to zero.

use serde::{Deserialize, Serialize};

use super::csr::{dot, norm2, CsrMatrix};
use super::factor::Factorization;
use crate::error::{Error, Result};

/// An operator approximating `A⁻¹`, applied to residual vectors.
///
/// Implementations need not be linear: the graph-network preconditioner is only
/// positively homogeneous.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>>;
}

impl<P: Preconditioner + ?Sized> Preconditioner for &P {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(r)
    }
}

impl<P: Preconditioner + ?Sized> Preconditioner for Box<P> {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(r)
    }
}

/// `z = r`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }
}

impl Preconditioner for Factorization {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: r.len(),
            });
        }
        Ok(self.solve(r))
    }
}

/// Convergence record of an iterative solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_relres: f64,
    /// `‖r_k‖ / ‖b‖` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
}

impl SolveReport {
    pub(crate) fn from_history(residual_history: Vec<f64>, tol: f64) -> Self {
        let final_relres = *residual_history.last().expect("history holds r_0");
        SolveReport {
            iterations: residual_history.len() - 1,
            converged: final_relres < tol,
            final_relres,
            residual_history,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Residual history as `iteration,relres` CSV.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,relres\n");
        for (k, r) in self.residual_history.iter().enumerate() {
            out.push_str(&format!("{k},{r:e}\n"));
        }
        out
    }
}

fn check_system(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            actual: b.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn reference_norm(b: &[f64]) -> f64 {
    let nb = norm2(b);
    if nb > 0.0 {
        nb
    } else {
        1.0
    }
}

/// Unpreconditioned conjugate gradient from `u = 0`.
pub fn cg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport)> {
    check_system(a, b, tol)?;
    let n = b.len();
    let nb = reference_norm(b);
    let mut u = vec![0.0; n];
    let mut r = b.to_vec();
    let mut history = vec![norm2(&r) / nb];
    if history[0] < tol {
        return Ok((u, SolveReport::from_history(history, tol)));
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        a.spmv_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() {
            return Err(Error::NonFinite(it + 1));
        }
        if pq <= 0.0 {
            return Err(Error::NotSpd(pq));
        }
        let alpha = rr / pq;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let relres = norm2(&r) / nb;
        if !relres.is_finite() {
            return Err(Error::NonFinite(it + 1));
        }
        history.push(relres);
        if relres < tol {
            break;
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    Ok((u, SolveReport::from_history(history, tol)))
}

/// Preconditioned conjugate gradient:
///
/// ```text
/// r0 = b - A u0,  z0 = M(r0),  p0 = z0
/// loop:
///   ρi = <ri, zi>,  qi = A pi,  αi = ρi / <pi, qi>
///   ui+1 = ui + αi pi,  ri+1 = ri - αi qi
///   stop if ‖ri+1‖ / ‖b‖ < tol
///   zi+1 = M(ri+1),  βi+1 = <ri+1, zi+1> / ρi,  pi+1 = zi+1 + βi+1 pi
/// ```
///
/// The preconditioner is used as given, even when it is nonlinear.
pub fn pcg<P: Preconditioner + ?Sized>(
    a: &CsrMatrix,
    b: &[f64],
    precond: &P,
    tol: f64,
    max_iter: usize,
    u0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    check_system(a, b, tol)?;
    let n = b.len();
    let nb = reference_norm(b);
    let mut u = match u0 {
        Some(u0) if u0.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: u0.len(),
            })
        }
        Some(u0) => u0.to_vec(),
        None => vec![0.0; n],
    };
    let au = a.spmv(&u);
    let mut r: Vec<f64> = b.iter().zip(&au).map(|(bi, ai)| bi - ai).collect();
    let mut history = vec![norm2(&r) / nb];
    if !history[0].is_finite() {
        return Err(Error::NonFinite(0));
    }
    if history[0] < tol {
        return Ok((u, SolveReport::from_history(history, tol)));
    }
    let mut z = precond.apply(&r)?;
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: z.len(),
        });
    }
    let mut p = z.clone();
    let mut rho = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 0..max_iter {
        a.spmv_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() || !rho.is_finite() {
            return Err(Error::NonFinite(it));
        }
        if pq <= 0.0 {
            return Err(Error::NotSpd(pq));
        }
        let alpha = rho / pq;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let relres = norm2(&r) / nb;
        if !relres.is_finite() {
            return Err(Error::NonFinite(it + 1));
        }
        history.push(relres);
        if relres < tol {
            break;
        }
        z = precond.apply(&r)?;
        let rho_next = dot(&r, &z);
        let beta = rho_next / rho;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rho = rho_next;
    }
    Ok((u, SolveReport::from_history(history, tol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::factorize;

    #[test]
    fn identity_matrix_one_iteration() {
        let b = vec![3.0, -1.0, 2.5, 0.25];
        let (u, rep) = cg(&CsrMatrix::identity(4), &b, 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(u, b);
    }

    #[test]
    fn diagonal_three_distinct_eigenvalues() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let (u, rep) = cg(&a, &[1.0, 1.0, 1.0], 1e-12, 10).unwrap();
        assert!(rep.converged && rep.iterations <= 3);
        for (x, e) in u.iter().zip([1.0, 0.5, 1.0 / 3.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn report_invariants_and_json_keys() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let (_, rep) = cg(&a, &[1.0; 4], 1e-8, 2).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert_eq!(rep.residual_history[rep.iterations], rep.final_relres);
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["converged", "final_relres", "iterations", "residual_history"]);
    }

    #[test]
    fn exact_preconditioner_one_iteration() {
        let a = CsrMatrix::from_dense(&[
            vec![4.0, -1.0, 0.0],
            vec![-1.0, 4.0, -1.0],
            vec![0.0, -1.0, 4.0],
        ]);
        let f = factorize(&a).unwrap();
        let (_, rep) = pcg(&a, &[1.0, 2.0, 3.0], &f, 1e-10, 10, None).unwrap();
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let a = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        let err = pcg(&a, &[0.0, 1.0], &Identity, 1e-8, 10, None).unwrap_err();
        assert!(matches!(err, Error::NotSpd(_)));
    }

    #[test]
    fn zero_rhs_converges_immediately() {
        let a = CsrMatrix::identity(3);
        let (u, rep) = pcg(&a, &[0.0; 3], &Identity, 1e-6, 10, None).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(u, vec![0.0; 3]);
    }
}

//! Two-level Schwarz preconditioner whose local solves are delegated to a
//! [`LocalSolver`], normally the trained message-passing network:
//!
//! ```text
//! z = R_0ᵀ (R_0 A R_0ᵀ)⁻¹ R_0 r + Σ_i R_iᵀ ‖R_i r‖ · DSS(G_i, R_i r / ‖R_i r‖)
//! ```
//!
//! The operator is positively homogeneous but not linear.

use std::ops::Range;

use rayon::prelude::*;

use crate::asm::{local_matrices, CoarseSolver};
use crate::decomp::Decomposition;
use crate::dss::{forward, infer_batch, DssModel, GraphTopology, LocalGraph};
use crate::error::{Error, Result};
use crate::sparse::{factorize, norm2, CsrMatrix, Factorization, Preconditioner};

/// Approximate solver for normalized local problems `A_i v = c`.
pub trait LocalSolver: Sync {
    /// One output per `(subdomain, c)` item, in the same order.
    fn solve_batch(&self, templates: &[LocalGraph], items: &[(usize, Vec<f64>)]) -> Result<Vec<Vec<f64>>>;
}

/// Network inference on the disjoint union of the batch.
#[derive(Debug, Clone)]
pub struct GnnLocalSolver {
    pub model: DssModel,
}

impl LocalSolver for GnnLocalSolver {
    fn solve_batch(&self, templates: &[LocalGraph], items: &[(usize, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        let parts: Vec<(&GraphTopology, &[f64])> = items
            .iter()
            .map(|(i, c)| (&templates[*i].topology, c.as_slice()))
            .collect();
        match infer_batch(&self.model, &parts) {
            Err(Error::ModelNaN(_)) => {
                // locate the offending subdomain
                for (i, c) in items {
                    let mut g = templates[*i].clone();
                    g.c.clone_from(c);
                    if forward(&self.model, &g).is_err() {
                        return Err(Error::SubdomainNaN(*i));
                    }
                }
                Err(Error::SubdomainNaN(items.first().map_or(0, |it| it.0)))
            }
            other => other,
        }
    }
}

/// Direct solves with the factorized local matrices.
#[derive(Debug, Clone)]
pub struct ExactLocalSolver {
    factors: Vec<Factorization>,
}

impl ExactLocalSolver {
    pub fn new(templates: &[LocalGraph]) -> Result<Self> {
        let factors = templates
            .iter()
            .enumerate()
            .map(|(i, g)| {
                factorize(&g.a_local).map_err(|e| Error::SingularLocal {
                    subdomain: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ExactLocalSolver { factors })
    }
}

impl LocalSolver for ExactLocalSolver {
    fn solve_batch(&self, _templates: &[LocalGraph], items: &[(usize, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        Ok(items.iter().map(|(i, c)| self.factors[*i].solve(c)).collect())
    }
}

/// Greedy contiguous batches: a batch is closed when the next graph would
/// push its node count past `cap`. A graph larger than `cap` gets its own batch.
pub fn plan_batches(sizes: &[usize], cap: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut nodes = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if i > start && nodes + s > cap {
            out.push(start..i);
            start = i;
            nodes = 0;
        }
        nodes += s;
    }
    if start < sizes.len() {
        out.push(start..sizes.len());
    }
    out
}

/// Additive two-level preconditioner with pluggable local solves.
#[derive(Debug, Clone)]
pub struct DdmGnnPreconditioner<S = GnnLocalSolver> {
    dec: Decomposition,
    coarse: CoarseSolver,
    templates: Vec<LocalGraph>,
    solver: S,
    batch_nodes_cap: usize,
}

fn templates(a: &CsrMatrix, dec: &Decomposition, coords: &[[f64; 2]]) -> Result<Vec<LocalGraph>> {
    if a.n_rows() != dec.n_dofs() || coords.len() != dec.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: dec.n_dofs(),
            actual: if a.n_rows() != dec.n_dofs() { a.n_rows() } else { coords.len() },
        });
    }
    dec.subdomains
        .iter()
        .zip(local_matrices(a, dec))
        .map(|(idx, ai)| LocalGraph::from_matrix(idx.iter().map(|&j| coords[j]).collect(), ai))
        .collect()
}

/// Precomputes the local graphs and factorizes the coarse matrix.
/// `coords` holds the position of every DOF.
pub fn build_ddm_gnn(
    a: &CsrMatrix,
    dec: &Decomposition,
    coords: &[[f64; 2]],
    model: DssModel,
    batch_nodes_cap: usize,
) -> Result<DdmGnnPreconditioner> {
    build_with(a, dec, coords, batch_nodes_cap, |_| Ok(GnnLocalSolver { model }))
}

/// Same operator with exact local solves; reproduces the two-level ASM.
pub fn build_ddm_exact(
    a: &CsrMatrix,
    dec: &Decomposition,
    coords: &[[f64; 2]],
    batch_nodes_cap: usize,
) -> Result<DdmGnnPreconditioner<ExactLocalSolver>> {
    build_with(a, dec, coords, batch_nodes_cap, ExactLocalSolver::new)
}

fn build_with<S>(
    a: &CsrMatrix,
    dec: &Decomposition,
    coords: &[[f64; 2]],
    batch_nodes_cap: usize,
    make: impl FnOnce(&[LocalGraph]) -> Result<S>,
) -> Result<DdmGnnPreconditioner<S>> {
    if batch_nodes_cap == 0 {
        return Err(Error::InvalidArgument("batch_nodes_cap must be positive".into()));
    }
    let templates = templates(a, dec, coords)?;
    let coarse = CoarseSolver::new(a, dec)?;
    let solver = make(&templates)?;
    Ok(DdmGnnPreconditioner {
        dec: dec.clone(),
        coarse,
        templates,
        solver,
        batch_nodes_cap,
    })
}

impl<S: LocalSolver> DdmGnnPreconditioner<S> {
    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn templates(&self) -> &[LocalGraph] {
        &self.templates
    }

    pub fn coarse(&self) -> &CoarseSolver {
        &self.coarse
    }

    pub fn solver(&self) -> &S {
        &self.solver
    }

    pub fn batch_nodes_cap(&self) -> usize {
        self.batch_nodes_cap
    }

    /// Inference batches used for a residual that is nonzero on every subdomain.
    pub fn full_batch_plan(&self) -> Vec<Range<usize>> {
        let sizes: Vec<usize> = self.templates.iter().map(LocalGraph::node_count).collect();
        plan_batches(&sizes, self.batch_nodes_cap)
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.dec.n_dofs();
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: r.len(),
            });
        }
        let mut items = Vec::new();
        let mut scales = Vec::new();
        for i in 0..self.dec.n_subdomains() {
            let mut ri = self.dec.restrict(i, r)?;
            let s = norm2(&ri);
            if s > 0.0 {
                ri.iter_mut().for_each(|v| *v /= s);
                items.push((i, ri));
                scales.push(s);
            }
        }
        let sizes: Vec<usize> = items.iter().map(|(i, _)| self.templates[*i].node_count()).collect();
        let plan = plan_batches(&sizes, self.batch_nodes_cap);
        let outputs = plan
            .par_iter()
            .map(|range| self.solver.solve_batch(&self.templates, &items[range.clone()]))
            .collect::<Result<Vec<_>>>()?;

        let mut z = self.coarse.apply(r);
        for (((i, _), s), v) in items.iter().zip(&scales).zip(outputs.iter().flatten()) {
            self.dec.extend_add(*i, v, *s, &mut z)?;
        }
        Ok(z)
    }
}

impl<S: LocalSolver> Preconditioner for DdmGnnPreconditioner<S> {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        DdmGnnPreconditioner::apply(self, r)
    }
}

//! Iteration-count benchmarks across solvers, subdomain sizes and overlaps.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asm::{build_asm, Level};
use crate::dataset::{random_problem, MeshConfig, Problem};
use crate::ddmgnn::build_ddm_gnn;
use crate::decomp::decompose;
use crate::dss::DssModel;
use crate::error::{Error, Result};
use crate::sparse::{cg, pcg, Ic0, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cg")]
    Cg,
    #[serde(rename = "ic0")]
    Ic0,
    #[serde(rename = "ddm-lu-1")]
    DdmLu1,
    #[serde(rename = "ddm-lu-2")]
    DdmLu2,
    #[serde(rename = "ddm-gnn")]
    DdmGnn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cg, Method::Ic0, Method::DdmLu1, Method::DdmLu2, Method::DdmGnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cg => "cg",
            Method::Ic0 => "ic0",
            Method::DdmLu1 => "ddm-lu-1",
            Method::DdmLu2 => "ddm-lu-2",
            Method::DdmGnn => "ddm-gnn",
        }
    }

    /// Whether the method needs a decomposition.
    pub fn is_ddm(self) -> bool {
        matches!(self, Method::DdmLu1 | Method::DdmLu2 | Method::DdmGnn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Subdomain settings for the decomposition-based methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdmSettings {
    pub subdomain_size: usize,
    pub overlap: usize,
    pub partition_seed: u64,
    pub batch_nodes_cap: usize,
}

/// Outcome of one solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: Vec<f64>,
    pub report: SolveReport,
    pub n_subdomains: usize,
    pub seconds: f64,
}

/// Solves `problem` with `method`. The clock covers preconditioner setup and iteration.
pub fn run_method(
    problem: &Problem,
    method: Method,
    ddm: DdmSettings,
    model: Option<&DssModel>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveOutcome> {
    let sys = &problem.system;
    let (a, b) = (&sys.a, &sys.b);
    let start = Instant::now();
    let dec = if method.is_ddm() {
        Some(decompose(a, ddm.subdomain_size, ddm.overlap, ddm.partition_seed)?)
    } else {
        None
    };
    let (solution, report) = match method {
        Method::Cg => cg(a, b, tol, max_iter)?,
        Method::Ic0 => pcg(a, b, &Ic0::new(a)?, tol, max_iter, None)?,
        Method::DdmLu1 | Method::DdmLu2 => {
            let level = if method == Method::DdmLu1 { Level::One } else { Level::Two };
            let p = build_asm(a, dec.as_ref().expect("ddm"), level)?;
            pcg(a, b, &p, tol, max_iter, None)?
        }
        Method::DdmGnn => {
            let model = model.ok_or_else(|| Error::InvalidArgument("ddm-gnn needs a model".into()))?;
            let coords = sys.dof_coords(&problem.mesh);
            let p = build_ddm_gnn(a, dec.as_ref().expect("ddm"), &coords, model.clone(), ddm.batch_nodes_cap)?;
            pcg(a, b, &p, tol, max_iter, None)?
        }
    };
    Ok(SolveOutcome {
        solution,
        report,
        n_subdomains: dec.map_or(1, |d| d.n_subdomains()),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One line of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_s")]
    pub n_s: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub overlap: usize,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub final_relres: f64,
    pub wall_time_seconds: f64,
}

pub const CSV_HEADER: &str = "N,N_s,K,overlap,method,iterations,converged,final_relres,wall_time_seconds";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{:e},{:.6}",
            r.n, r.n_s, r.k, r.overlap, r.method, r.iterations, r.converged, r.final_relres, r.wall_time_seconds
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Mesh family for each size in the sweep.
    pub meshes: Vec<MeshConfig>,
    pub problems_per_mesh: usize,
    pub subdomain_sizes: Vec<usize>,
    pub overlaps: Vec<usize>,
    pub methods: Vec<Method>,
    pub tol: f64,
    pub max_iter: usize,
    pub batch_nodes_cap: usize,
    pub seed: u64,
}

/// Runs the full sweep. Cells are evaluated concurrently and returned in
/// sweep order (mesh, problem, subdomain size, overlap, method); methods
/// without a decomposition run once per problem.
pub fn run_bench(config: &BenchConfig, model: Option<&DssModel>) -> Result<Vec<BenchRow>> {
    if config.methods.contains(&Method::DdmGnn) && model.is_none() {
        return Err(Error::InvalidArgument("method ddm-gnn requires a model".into()));
    }
    let mut cells = Vec::new();
    for (mi, mesh) in config.meshes.iter().enumerate() {
        for pid in 0..config.problems_per_mesh as u64 {
            for &method in &config.methods {
                if method.is_ddm() {
                    for &ns in &config.subdomain_sizes {
                        for &ov in &config.overlaps {
                            cells.push((mi, mesh, pid, method, ns, ov));
                        }
                    }
                } else {
                    cells.push((mi, mesh, pid, method, 0, 0));
                }
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|&(mi, mesh, pid, method, ns, ov)| {
            let problem = random_problem(mesh, config.seed, pid)?;
            let ddm = DdmSettings {
                subdomain_size: ns.max(1),
                overlap: ov,
                partition_seed: problem.partition_seed,
                batch_nodes_cap: config.batch_nodes_cap,
            };
            let out = run_method(&problem, method, ddm, model, config.tol, config.max_iter)?;
            let row = BenchRow {
                n: problem.mesh.node_count(),
                n_s: ns,
                k: out.n_subdomains,
                overlap: ov,
                method,
                iterations: out.report.iterations,
                converged: out.report.converged,
                final_relres: out.report.final_relres,
                wall_time_seconds: out.seconds,
            };
            Ok(((mi, pid, ns, ov, method), row))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|(key, _)| *key);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// What a bench CSV was produced from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchManifest {
    pub config: BenchConfig,
    pub model: Option<String>,
    pub csv: String,
}

//! Training corpus: normalized local problems harvested from PCG runs
//! preconditioned by the two-level Schwarz method with exact local solves.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asm::{build_asm, AsmPreconditioner, Level};
use crate::decomp::decompose;
use crate::dss::LocalGraph;
use crate::error::{Error, Result};
use crate::fem::{assemble, LinearSystem, PolyCoeffs};
use crate::mesh::{generate_blob_mesh, generate_rect_mesh, Hole, Mesh};
use crate::sparse::{norm2, pcg, CsrMatrix, Preconditioner};

/// How the mesh of each problem is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshConfig {
    /// Random smooth blob; the per-problem seed varies the shape.
    Blob { target_nodes: usize, perturbation: f64 },
    /// Fixed rectangle, optionally with holes.
    Rect {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        #[serde(default)]
        holes: Vec<Hole>,
    },
}

impl MeshConfig {
    pub fn build(&self, seed: u64) -> Result<Mesh> {
        match self {
            MeshConfig::Blob {
                target_nodes,
                perturbation,
            } => generate_blob_mesh(seed, *target_nodes, *perturbation),
            MeshConfig::Rect { nx, ny, lx, ly, holes } => generate_rect_mesh(*nx, *ny, *lx, *ly, holes),
        }
    }
}

/// A random global Poisson problem: mesh, coefficients and assembled system.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub coeffs: PolyCoeffs,
    pub system: LinearSystem,
    /// Seed used for the partitioner.
    pub partition_seed: u64,
}

/// Per-problem random draws: mesh seed, coefficients and partition seed.
pub fn problem_draws(seed: u64, pid: u64) -> (u64, PolyCoeffs, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pid);
    let mesh_seed: u64 = rng.gen();
    let coeffs = PolyCoeffs::random(&mut rng);
    let partition_seed: u64 = rng.gen();
    (mesh_seed, coeffs, partition_seed)
}

/// Deterministic problem `pid` of a family keyed by `seed`.
pub fn random_problem(mesh: &MeshConfig, seed: u64, pid: u64) -> Result<Problem> {
    let (mesh_seed, _, _) = problem_draws(seed, pid);
    problem_on_mesh(mesh.build(mesh_seed)?, seed, pid)
}

/// Problem `pid` on a given mesh, with the coefficients it would get in
/// [`random_problem`].
pub fn problem_on_mesh(mesh: Mesh, seed: u64, pid: u64) -> Result<Problem> {
    let (_, coeffs, partition_seed) = problem_draws(seed, pid);
    let system = assemble(&mesh, &coeffs)?;
    Ok(Problem {
        mesh,
        coeffs,
        system,
        partition_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_problems: usize,
    pub mesh: MeshConfig,
    pub target_subdomain_size: usize,
    pub overlap: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

/// One harvested local problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub pid: u64,
    /// Index of the preconditioner application within the PCG run.
    pub iter: usize,
    pub sub: usize,
    pub graph: LocalGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub pid: u64,
    pub n_dofs: usize,
    pub n_subdomains: usize,
    pub iterations: usize,
    pub converged: bool,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<DatasetSample>,
    pub problems: Vec<ProblemSummary>,
    /// Problems dropped because PCG did not converge.
    pub skipped: Vec<u64>,
}

/// Wraps a preconditioner and records the normalized local residuals it sees.
struct Recorder<'a> {
    inner: &'a AsmPreconditioner,
    seen: Mutex<Vec<(usize, usize, Vec<f64>, f64)>>,
    calls: Mutex<usize>,
}

impl Preconditioner for Recorder<'_> {
    fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut calls = self.calls.lock().expect("not poisoned");
        let dec = self.inner.decomposition();
        let mut seen = self.seen.lock().expect("not poisoned");
        for i in 0..dec.n_subdomains() {
            let mut ri = dec.restrict(i, r)?;
            let s = norm2(&ri);
            if s > 0.0 {
                ri.iter_mut().for_each(|v| *v /= s);
                seen.push((*calls, i, ri, s));
            }
        }
        *calls += 1;
        self.inner.apply(r)
    }
}

fn harvest(config: &DatasetConfig, pid: u64) -> Result<(ProblemSummary, Vec<DatasetSample>)> {
    let problem = random_problem(&config.mesh, config.seed, pid)?;
    let sys = &problem.system;
    let dec = decompose(&sys.a, config.target_subdomain_size, config.overlap, problem.partition_seed)?;
    let asm = build_asm(&sys.a, &dec, Level::Two)?;
    let rec = Recorder {
        inner: &asm,
        seen: Mutex::new(Vec::new()),
        calls: Mutex::new(0),
    };
    let (_, report) = pcg(&sys.a, &sys.b, &rec, config.tol, config.max_iter, None)?;
    let coords = sys.dof_coords(&problem.mesh);
    let locals: Vec<LocalGraph> = dec
        .subdomains
        .iter()
        .map(|idx| LocalGraph::from_matrix(idx.iter().map(|&j| coords[j]).collect(), sys.a.submatrix(idx)))
        .collect::<Result<_>>()?;
    let samples: Vec<DatasetSample> = rec
        .seen
        .into_inner()
        .expect("not poisoned")
        .into_iter()
        .map(|(iter, sub, c, scale)| {
            let mut graph = locals[sub].clone();
            graph.c = c;
            graph.scale = scale;
            DatasetSample { pid, iter, sub, graph }
        })
        .collect();
    let summary = ProblemSummary {
        pid,
        n_dofs: sys.dofs(),
        n_subdomains: dec.n_subdomains(),
        iterations: report.iterations,
        converged: report.converged,
        n_samples: samples.len(),
    };
    Ok((summary, samples))
}

/// Runs every problem, keeping samples only from converged solves. Problems
/// are processed concurrently and concatenated in problem-id order.
pub fn generate(config: &DatasetConfig) -> Result<Dataset> {
    if config.n_problems == 0 || config.target_subdomain_size == 0 || !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "n_problems and target_subdomain_size must be positive, tol > 0".into(),
        ));
    }
    let results = (0..config.n_problems as u64)
        .into_par_iter()
        .map(|pid| harvest(config, pid))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Dataset::default();
    for (summary, samples) in results {
        if summary.converged {
            out.samples.extend(samples);
            out.problems.push(summary);
        } else {
            eprintln!(
                "dataset: problem {} did not converge in {} iterations, skipped",
                summary.pid, summary.iterations
            );
            out.skipped.push(summary.pid);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CsrRecord {
    rp: Vec<usize>,
    ci: Vec<usize>,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    pid: u64,
    iter: usize,
    sub: usize,
    coords: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
    csr: CsrRecord,
    c: Vec<f64>,
    scale: f64,
}

impl DatasetSample {
    pub fn to_json_line(&self) -> String {
        let g = &self.graph;
        let rec = SampleRecord {
            pid: self.pid,
            iter: self.iter,
            sub: self.sub,
            coords: g.coords.clone(),
            edges: g.topology.undirected_edges(),
            csr: CsrRecord {
                rp: g.a_local.row_ptr().to_vec(),
                ci: g.a_local.col_idx().to_vec(),
                v: g.a_local.values().to_vec(),
            },
            c: g.c.clone(),
            scale: g.scale,
        };
        serde_json::to_string(&rec).expect("sample serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: SampleRecord = serde_json::from_str(line)?;
        let n = rec.coords.len();
        let a = CsrMatrix::new(n, n, rec.csr.rp, rec.csr.ci, rec.csr.v)?;
        let graph = LocalGraph::new(rec.coords, &rec.edges, a, rec.c, rec.scale)?;
        Ok(DatasetSample {
            pid: rec.pid,
            iter: rec.iter,
            sub: rec.sub,
            graph,
        })
    }
}

pub fn write_jsonl(samples: &[DatasetSample], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for s in samples {
        writeln!(w, "{}", s.to_json_line())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<DatasetSample>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(DatasetSample::from_json_line(&line).map_err(|e| {
            Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// Train / validation / test partition of a sample list.
#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<DatasetSample>,
    pub val: Vec<DatasetSample>,
    pub test: Vec<DatasetSample>,
}

impl Splits {
    pub fn problem_ids(samples: &[DatasetSample]) -> BTreeSet<u64> {
        samples.iter().map(|s| s.pid).collect()
    }
}

/// Splits by problem id. The ids are shuffled with `seed`; the first
/// `round(r_train · P)` go to train, the next `round(r_val · P)` to validation,
/// the rest to test. A split with a positive ratio that receives no problem is
/// an error.
pub fn split(samples: Vec<DatasetSample>, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be nonnegative and sum to 1, got {ratios:?}"
        )));
    }
    let mut ids: Vec<u64> = Splits::problem_ids(&samples).into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let p = ids.len();
    let n_train = ((ratios[0] * p as f64).round() as usize).min(p);
    let n_val = ((ratios[1] * p as f64).round() as usize).min(p - n_train);
    let counts = [n_train, n_val, p - n_train - n_val];
    for (k, name) in ["train", "validation", "test"].iter().enumerate() {
        if ratios[k] > 0.0 && counts[k] == 0 {
            return Err(Error::Dataset(format!("{name} split is empty ({p} problems)")));
        }
    }
    let which = |pid: u64| {
        let pos = ids.iter().position(|&x| x == pid).expect("id present");
        if pos < n_train {
            0
        } else if pos < n_train + n_val {
            1
        } else {
            2
        }
    };
    let mut out = Splits::default();
    for s in samples {
        match which(s.pid) {
            0 => out.train.push(s),
            1 => out.val.push(s),
            _ => out.test.push(s),
        }
    }
    Ok(out)
}

/// Configuration, seed and per-problem statistics of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub ratios: [f64; 3],
    pub split_seed: u64,
    pub problems: Vec<ProblemSummary>,
    pub skipped: Vec<u64>,
    pub counts: [usize; 3],
    pub files: [String; 3],
}

/// Generates, splits and writes `train.jsonl`, `val.jsonl`, `test.jsonl` and
/// `manifest.json` into `dir`.
pub fn generate_to_dir(config: &DatasetConfig, ratios: [f64; 3], dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let data = generate(config)?;
    let splits = split(data.samples, ratios, config.seed)?;
    let files = ["train.jsonl", "val.jsonl", "test.jsonl"].map(String::from);
    write_jsonl(&splits.train, dir.join(&files[0]))?;
    write_jsonl(&splits.val, dir.join(&files[1]))?;
    write_jsonl(&splits.test, dir.join(&files[2]))?;
    let manifest = Manifest {
        config: config.clone(),
        ratios,
        split_seed: config.seed,
        problems: data.problems,
        skipped: data.skipped,
        counts: [splits.train.len(), splits.val.len(), splits.test.len()],
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

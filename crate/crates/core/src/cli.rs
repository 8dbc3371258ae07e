//! Command-line front end.
//!
//! Every subcommand accepts `--config <file.json>`: a JSON object whose keys
//! are flag names (`subdomain_size` or `subdomain-size`). Its entries are
//! applied first, so flags given on the command line win. Exit codes: 0 on
//! success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::bench::{rows_to_csv, run_bench, run_method, BenchConfig, BenchManifest, DdmSettings, Method};
use crate::dataset::{generate_to_dir, problem_on_mesh, random_problem, read_jsonl, DatasetConfig, MeshConfig, Problem};
use crate::decomp::decompose;
use crate::dss::{init_model, load_model, save_model, train, LocalGraph, SchedulerConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::mesh::{export_mesh, import_mesh, Hole};
use crate::sparse::factorize;

#[derive(Debug, Parser)]
#[command(name = "ddm-gnn", version, about = "Schwarz-preconditioned Poisson solvers with graph-network local solves")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a mesh and write it in mesh2d format.
    MeshGen(MeshGenArgs),
    /// Assemble a random problem and check symmetry, definiteness and a direct solve.
    AssembleCheck(AssembleArgs),
    /// Decompose the DOF graph of a problem into overlapping subdomains.
    Partition(PartitionArgs),
    /// Harvest local problems from PCG runs into JSON-lines splits.
    Dataset(DatasetArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Solve one problem and print the solve report.
    Solve(SolveArgs),
    /// Sweep methods, subdomain sizes and overlaps and write a CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file with default values for any flag of this subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct MeshArgs {
    /// Read the mesh from a mesh2d file instead of generating one.
    #[arg(long)]
    pub mesh_file: Option<PathBuf>,
    /// Generated mesh kind: blob or rect.
    #[arg(long, default_value = "blob")]
    pub kind: String,
    #[arg(long, default_value_t = 2600)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub perturbation: f64,
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 32)]
    pub ny: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lx: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ly: f64,
    /// Rectangular hole `x0,y0,x1,y1`; repeatable.
    #[arg(long, value_parser = parse_hole)]
    pub hole: Vec<Hole>,
}

fn parse_hole(s: &str) -> std::result::Result<Hole, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x0, y0, x1, y1] => Ok(Hole::new(x0, y0, x1, y1)),
        _ => Err(format!("expected x0,y0,x1,y1, got {s:?}")),
    }
}

impl MeshArgs {
    fn config(&self) -> Result<MeshConfig> {
        match self.kind.as_str() {
            "blob" => Ok(MeshConfig::Blob {
                target_nodes: self.nodes,
                perturbation: self.perturbation,
            }),
            "rect" => Ok(MeshConfig::Rect {
                nx: self.nx,
                ny: self.ny,
                lx: self.lx,
                ly: self.ly,
                holes: self.hole.clone(),
            }),
            other => Err(Error::InvalidArgument(format!("unknown mesh kind {other:?} (blob or rect)"))),
        }
    }

    /// Problem `pid` of the family keyed by `seed`, or the file mesh with
    /// coefficients drawn from the same stream.
    fn problem(&self, seed: u64, pid: u64) -> Result<Problem> {
        match &self.mesh_file {
            None => random_problem(&self.config()?, seed, pid),
            Some(path) => problem_on_mesh(import_mesh(path)?, seed, pid),
        }
    }
}

#[derive(Debug, Args)]
pub struct MeshGenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, default_value_t = 1000)]
    pub subdomain_size: usize,
    #[arg(long, default_value_t = 2)]
    pub overlap: usize,
    /// Write the decomposition JSON here instead of printing a summary only.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, default_value_t = 20)]
    pub problems: usize,
    #[arg(long, default_value_t = 150)]
    pub subdomain_size: usize,
    #[arg(long, default_value_t = 2)]
    pub overlap: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.2, 0.2])]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory written by the dataset subcommand.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k_bar: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0.1)]
    pub factor: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub min_lr: f64,
    /// Continue from an existing model instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, default_value = "ddm-lu-2")]
    pub method: Method,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1000)]
    pub subdomain_size: usize,
    #[arg(long, default_value_t = 2)]
    pub overlap: usize,
    /// Model file, required by ddm-gnn.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 20000)]
    pub batch_nodes_cap: usize,
    /// Write the residual history CSV here.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Target node counts of the blob meshes in the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [2600])]
    pub nodes: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub perturbation: f64,
    #[arg(long, default_value_t = 1)]
    pub problems: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1000])]
    pub subdomain_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [2])]
    pub overlaps: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [Method::Cg, Method::DdmLu2])]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 20000)]
    pub batch_nodes_cap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Expands `--config file.json` into flags placed before the user's own, so
/// that later occurrences override earlier ones.
fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let pos = args.iter().position(|a| a == "--config");
    let path = match pos {
        Some(i) => args.get(i + 1).ok_or("--config needs a path")?.clone(),
        None => match args.iter().find_map(|a| a.to_str().and_then(|s| s.strip_prefix("--config="))) {
            Some(p) => p.into(),
            None => return Ok(args),
        },
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path:?}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {path:?} is not valid JSON: {e}"))?;
    let obj = value.as_object().ok_or("config must be a JSON object")?;
    let mut injected = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            continue;
        }
        match v {
            Value::Bool(true) => injected.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar).collect::<std::result::Result<_, _>>()?;
                injected.push(flag.into());
                injected.push(joined.join(",").into());
            }
            other => {
                injected.push(flag.into());
                injected.push(scalar(other)?.into());
            }
        }
    }
    // program name and subcommand come first
    let split = 2.min(args.len());
    let mut out: Vec<OsString> = args[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[split..]);
    Ok(out)
}

fn scalar(v: &Value) -> std::result::Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(format!("unsupported config value {other}")),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Error::InvalidArgument(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::MeshGen(a) => {
            let mesh = a.mesh.config()?.build(a.common.seed)?;
            export_mesh(&mesh, &a.out)?;
            println!(
                "{}",
                serde_json::json!({
                    "nodes": mesh.node_count(),
                    "triangles": mesh.triangle_count(),
                    "interior": mesh.interior_count(),
                    "area": mesh.area(),
                    "out": a.out,
                })
            );
        }
        Command::AssembleCheck(a) => {
            let p = a.mesh.problem(a.common.seed, 0)?;
            let sys = &p.system;
            let symmetric = sys.a.is_symmetric();
            let (spd, relres) = match factorize(&sys.a) {
                Ok(f) => {
                    let u = f.solve(&sys.b);
                    let r = sys.residual(&u)?;
                    let nb = crate::sparse::norm2(&sys.b).max(f64::MIN_POSITIVE);
                    (true, crate::sparse::norm2(&r) / nb)
                }
                Err(_) => (false, f64::NAN),
            };
            println!(
                "{}",
                serde_json::json!({
                    "nodes": p.mesh.node_count(),
                    "dofs": sys.dofs(),
                    "nnz": sys.a.nnz(),
                    "symmetric": symmetric,
                    "spd": spd,
                    "direct_relres": relres,
                    "coeffs": { "f": p.coeffs.f, "g": p.coeffs.g },
                })
            );
            if !(symmetric && spd) {
                return Err(Error::NotSpd(relres));
            }
        }
        Command::Partition(a) => {
            let p = a.mesh.problem(a.common.seed, 0)?;
            let dec = decompose(&p.system.a, a.subdomain_size, a.overlap, a.common.seed)?;
            if let Some(out) = &a.out {
                write_file(out, &dec.to_json())?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "dofs": dec.n_dofs(),
                    "subdomains": dec.n_subdomains(),
                    "overlap": dec.overlap,
                    "sizes": dec.subdomain_sizes(),
                })
            );
        }
        Command::Dataset(a) => {
            let config = DatasetConfig {
                n_problems: a.problems,
                mesh: a.mesh.config()?,
                target_subdomain_size: a.subdomain_size,
                overlap: a.overlap,
                tol: a.tol,
                max_iter: a.max_iter,
                seed: a.common.seed,
            };
            let ratios = [a.ratios[0], a.ratios[1], a.ratios[2]];
            let manifest = generate_to_dir(&config, ratios, &a.out)?;
            println!(
                "{}",
                serde_json::json!({
                    "problems": manifest.problems.len(),
                    "skipped": manifest.skipped,
                    "train": manifest.counts[0],
                    "val": manifest.counts[1],
                    "test": manifest.counts[2],
                    "out": a.out,
                })
            );
        }
        Command::Train(a) => {
            let graphs = |name: &str| -> Result<Vec<LocalGraph>> {
                let path = a.data.join(name);
                if !path.exists() {
                    return Ok(Vec::new());
                }
                Ok(read_jsonl(path)?.into_iter().map(|s| s.graph).collect())
            };
            let train_set = graphs("train.jsonl")?;
            let val_set = graphs("val.jsonl")?;
            let mut model = match &a.init {
                Some(path) => load_model(path)?,
                None => init_model(a.k_bar, a.d, a.alpha, a.common.seed)?,
            };
            let config = TrainConfig {
                epochs: a.epochs,
                lr: a.lr,
                batch_size: a.batch_size,
                clip_norm: a.clip_norm,
                scheduler: SchedulerConfig {
                    factor: a.factor,
                    patience: a.patience,
                    min_lr: a.min_lr,
                },
                seed: a.common.seed,
            };
            let log = train(&mut model, &train_set, &val_set, &config)?;
            save_model(&model, &a.out)?;
            if let Some(path) = &a.log {
                write_file(path, &log.to_csv())?;
            }
            let last = log.epochs.last().expect("epoch 0 logged");
            println!(
                "{}",
                serde_json::json!({
                    "parameters": model.param_count(),
                    "train_samples": train_set.len(),
                    "val_samples": val_set.len(),
                    "initial_train_loss": log.epochs[0].train_loss,
                    "final_train_loss": last.train_loss,
                    "final_val_loss": last.val_loss,
                    "final_lr": last.lr,
                    "out": a.out,
                })
            );
        }
        Command::Solve(a) => {
            let p = a.mesh.problem(a.common.seed, 0)?;
            let model = match (&a.model, a.method) {
                (Some(path), _) => Some(load_model(path)?),
                (None, Method::DdmGnn) => {
                    return Err(Error::InvalidArgument("--method ddm-gnn requires --model".into()))
                }
                (None, _) => None,
            };
            let ddm = DdmSettings {
                subdomain_size: a.subdomain_size,
                overlap: a.overlap,
                partition_seed: p.partition_seed,
                batch_nodes_cap: a.batch_nodes_cap,
            };
            let out = run_method(&p, a.method, ddm, model.as_ref(), a.tol, a.max_iter)?;
            if let Some(path) = &a.history {
                write_file(path, &out.report.history_csv())?;
            }
            println!("{}", out.report.to_json());
        }
        Command::Bench(a) => {
            let model = a.model.as_ref().map(load_model).transpose()?;
            let config = BenchConfig {
                meshes: a
                    .nodes
                    .iter()
                    .map(|&n| MeshConfig::Blob {
                        target_nodes: n,
                        perturbation: a.perturbation,
                    })
                    .collect(),
                problems_per_mesh: a.problems,
                subdomain_sizes: a.subdomain_sizes.clone(),
                overlaps: a.overlaps.clone(),
                methods: a.methods.clone(),
                tol: a.tol,
                max_iter: a.max_iter,
                batch_nodes_cap: a.batch_nodes_cap,
                seed: a.common.seed,
            };
            let rows = run_bench(&config, model.as_ref())?;
            let csv = rows_to_csv(&rows);
            write_file(&a.out, &csv)?;
            let manifest = BenchManifest {
                config,
                model: a.model.as_ref().map(|p| p.display().to_string()),
                csv: a.out.display().to_string(),
            };
            write_file(&a.out.with_extension("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
            print!("{csv}");
        }
    }
    Ok(())
}

//! PCG with the hybrid preconditioner: exact coarse solve plus network local solves.
//!
//! Pass a model written by `train_dss` (or `ddm-gnn train`); without one a
//! model is trained briefly first.
//!
//! cargo run --release --example ddm_gnn_solve -- [model_path]

use ddm_gnn::dataset::{generate, random_problem, DatasetConfig, MeshConfig};
use ddm_gnn::ddmgnn::{build_ddm_exact, build_ddm_gnn};
use ddm_gnn::decomp::decompose;
use ddm_gnn::dss::{init_model, load_model, train, DssModel, TrainConfig};
use ddm_gnn::sparse::{cg, pcg};

const NODES: usize = 1000;
const SUBDOMAIN: usize = 150;

fn family() -> MeshConfig {
    MeshConfig::Blob {
        target_nodes: NODES,
        perturbation: 0.2,
    }
}

fn quick_model() -> ddm_gnn::Result<DssModel> {
    let data = generate(&DatasetConfig {
        n_problems: 4,
        mesh: family(),
        target_subdomain_size: SUBDOMAIN,
        overlap: 2,
        tol: 1e-6,
        max_iter: 500,
        seed: 1,
    })?;
    let graphs: Vec<_> = data.samples.into_iter().map(|s| s.graph).collect();
    let mut model = init_model(10, 10, 1e-3, 0)?;
    let config = TrainConfig {
        epochs: 15,
        batch_size: 10,
        ..TrainConfig::default()
    };
    train(&mut model, &graphs, &[], &config)?;
    Ok(model)
}

fn main() -> ddm_gnn::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => load_model(path)?,
        None => quick_model()?,
    };
    let p = random_problem(&family(), 1, 500)?;
    let sys = &p.system;
    let dec = decompose(&sys.a, SUBDOMAIN, 2, p.partition_seed)?;
    let coords = sys.dof_coords(&p.mesh);

    let (_, plain) = cg(&sys.a, &sys.b, 1e-6, 5000)?;
    let exact = build_ddm_exact(&sys.a, &dec, &coords, 20_000)?;
    let (_, lu) = pcg(&sys.a, &sys.b, &exact, 1e-6, 500, None)?;
    let hybrid = build_ddm_gnn(&sys.a, &dec, &coords, model, 20_000)?;
    let (_, gnn) = pcg(&sys.a, &sys.b, &hybrid, 1e-6, 500, None)?;

    println!("N = {}, K = {}", p.mesh.node_count(), dec.n_subdomains());
    println!("cg        {:4} iterations", plain.iterations);
    println!("ddm-lu    {:4} iterations", lu.iterations);
    println!("ddm-gnn   {:4} iterations (converged {})", gnn.iterations, gnn.converged);
    print!("{}", gnn.history_csv());
    Ok(())
}

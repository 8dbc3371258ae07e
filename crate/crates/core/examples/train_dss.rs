//! Trains a small message-passing solver on harvested local problems and saves it.
//!
//! cargo run --release --example train_dss -- [model_path]

use ddm_gnn::dataset::{generate, split, DatasetConfig, MeshConfig};
use ddm_gnn::dss::{init_model, save_model, train, LocalGraph, TrainConfig};

fn main() -> ddm_gnn::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("dss.model"), Into::into);
    let data = generate(&DatasetConfig {
        n_problems: 8,
        mesh: MeshConfig::Blob {
            target_nodes: 600,
            perturbation: 0.2,
        },
        target_subdomain_size: 100,
        overlap: 2,
        tol: 1e-6,
        max_iter: 500,
        seed: 2,
    })?;
    let splits = split(data.samples, [0.75, 0.25, 0.0], 2)?;
    let graphs = |s: Vec<ddm_gnn::dataset::DatasetSample>| -> Vec<LocalGraph> { s.into_iter().map(|s| s.graph).collect() };
    let (tr, va) = (graphs(splits.train), graphs(splits.val));

    let mut model = init_model(10, 10, 1e-3, 0)?;
    println!("{} parameters, {} train / {} val graphs", model.param_count(), tr.len(), va.len());
    let config = TrainConfig {
        epochs: 20,
        batch_size: 20,
        ..TrainConfig::default()
    };
    let log = train(&mut model, &tr, &va, &config)?;
    for e in log.epochs.iter().step_by(5) {
        println!("epoch {:3}  train {:.3e}  val {:.3e}  lr {:.0e}", e.epoch, e.train_loss, e.val_loss, e.lr);
    }
    save_model(&model, &path)?;
    println!("saved {}", path.display());
    Ok(())
}

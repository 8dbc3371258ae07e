//! Harvests normalized local problems from two-level Schwarz PCG runs and
//! writes train/val/test splits.
//!
//! cargo run --release --example dataset_generation -- [out_dir]

use ddm_gnn::dataset::{generate_to_dir, DatasetConfig, MeshConfig};

fn main() -> ddm_gnn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("ddm-gnn-dataset"), Into::into);
    let config = DatasetConfig {
        n_problems: 10,
        mesh: MeshConfig::Blob {
            target_nodes: 1000,
            perturbation: 0.2,
        },
        target_subdomain_size: 150,
        overlap: 2,
        tol: 1e-6,
        max_iter: 500,
        seed: 1,
    };
    let manifest = generate_to_dir(&config, [0.6, 0.2, 0.2], &out)?;
    for p in &manifest.problems {
        println!(
            "problem {:2}: {} dofs, K = {}, {} iterations, {} samples",
            p.pid, p.n_dofs, p.n_subdomains, p.iterations, p.n_samples
        );
    }
    println!("train/val/test samples {:?} in {}", manifest.counts, out.display());
    Ok(())
}

//! Iteration counts over subdomain sizes and overlaps, printed as CSV.

use ddm_gnn::bench::{rows_to_csv, run_bench, BenchConfig, Method};
use ddm_gnn::dataset::MeshConfig;

fn main() -> ddm_gnn::Result<()> {
    let config = BenchConfig {
        meshes: vec![MeshConfig::Blob {
            target_nodes: 2600,
            perturbation: 0.2,
        }],
        problems_per_mesh: 3,
        subdomain_sizes: vec![1000, 300],
        overlaps: vec![2, 4],
        methods: vec![Method::Cg, Method::Ic0, Method::DdmLu1, Method::DdmLu2],
        tol: 1e-6,
        max_iter: 2000,
        batch_nodes_cap: 20_000,
        seed: 0,
    };
    print!("{}", rows_to_csv(&run_bench(&config, None)?));
    Ok(())
}

//! Splits the DOF graph of a desk problem into overlapping subdomains.

use ddm_gnn::dataset::{random_problem, MeshConfig};
use ddm_gnn::decomp::decompose;

fn main() -> ddm_gnn::Result<()> {
    let mesh = MeshConfig::Blob {
        target_nodes: 2600,
        perturbation: 0.2,
    };
    let p = random_problem(&mesh, 0, 0)?;
    println!("{} nodes, {} dofs", p.mesh.node_count(), p.system.dofs());
    for (target, overlap) in [(1000, 0), (1000, 2), (300, 2), (300, 4)] {
        let dec = decompose(&p.system.a, target, overlap, p.partition_seed)?;
        let sizes = dec.subdomain_sizes();
        println!(
            "target {target:4}, overlap {overlap}: K = {:2}, sizes {}..{}, coarse {}x{}",
            dec.n_subdomains(),
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap(),
            dec.r0.n_rows(),
            dec.r0.n_cols()
        );
    }
    Ok(())
}

//! CG, IC(0) and one- and two-level additive Schwarz on the same problem.

use ddm_gnn::bench::{run_method, DdmSettings, Method};
use ddm_gnn::dataset::{random_problem, MeshConfig};

fn main() -> ddm_gnn::Result<()> {
    let mesh = MeshConfig::Blob {
        target_nodes: 2600,
        perturbation: 0.2,
    };
    let p = random_problem(&mesh, 0, 1)?;
    println!("N = {}", p.mesh.node_count());
    for ns in [1000, 300] {
        for method in [Method::Cg, Method::Ic0, Method::DdmLu1, Method::DdmLu2] {
            let ddm = DdmSettings {
                subdomain_size: ns,
                overlap: 2,
                partition_seed: p.partition_seed,
                batch_nodes_cap: 20_000,
            };
            let out = run_method(&p, method, ddm, None, 1e-6, 2000)?;
            println!(
                "N_s {ns:4}  {method:9} K {:2}  iterations {:4}  relres {:.2e}",
                out.n_subdomains, out.report.iterations, out.report.final_relres
            );
        }
    }
    Ok(())
}

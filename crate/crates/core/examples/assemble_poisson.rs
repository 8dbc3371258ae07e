//! Assembles P1 Poisson systems and checks them against known solutions.

use ddm_gnn::fem::{assemble, assemble_with, PolyCoeffs};
use ddm_gnn::mesh::generate_blob_mesh;
use ddm_gnn::sparse::{factorize, norm2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ddm_gnn::Result<()> {
    let mesh = generate_blob_mesh(3, 2000, 0.25)?;

    // affine data is reproduced exactly
    let exact = |x: f64, y: f64| 2.0 - x + 3.0 * y;
    let sys = assemble_with(&mesh, |_, _| 0.0, exact)?;
    let u = factorize(&sys.a)?.solve(&sys.b);
    let err = sys
        .node_of_interior
        .iter()
        .zip(&u)
        .map(|(&n, v)| (v - exact(mesh.coords[n][0], mesh.coords[n][1])).abs())
        .fold(0.0, f64::max);
    println!("affine solution: {} dofs, max nodal error {err:.2e}", sys.dofs());

    // random quadratic source and boundary data, as in the training problems
    let coeffs = PolyCoeffs::random(&mut ChaCha8Rng::seed_from_u64(11));
    let sys = assemble(&mesh, &coeffs)?;
    let u = factorize(&sys.a)?.solve(&sys.b);
    let relres = norm2(&sys.residual(&u)?) / norm2(&sys.b);
    println!(
        "random problem: nnz {}, symmetric {}, direct relres {relres:.2e}",
        sys.a.nnz(),
        sys.a.is_symmetric()
    );
    Ok(())
}

//! Generates a random blob and a rectangle with holes, then writes both as mesh2d files.
//!
//! cargo run --example mesh_generation -- [out_dir]

use ddm_gnn::mesh::{export_mesh, generate_blob_mesh, generate_rect_mesh, import_mesh, Hole};

fn main() -> ddm_gnn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string());
    let blob = generate_blob_mesh(7, 2600, 0.2)?;
    let holes = [Hole::new(0.25, 0.25, 0.5, 0.5), Hole::new(0.625, 0.5, 0.875, 0.75)];
    let rect = generate_rect_mesh(32, 32, 1.0, 1.0, &holes)?;

    for (name, mesh) in [("blob", &blob), ("holes", &rect)] {
        let path = std::path::Path::new(&out).join(format!("{name}.mesh"));
        export_mesh(mesh, &path)?;
        let back = import_mesh(&path)?;
        println!(
            "{name}: {} nodes, {} triangles, {} interior, area {:.4} -> {}",
            back.node_count(),
            back.triangle_count(),
            back.interior_count(),
            back.area(),
            path.display()
        );
    }
    Ok(())
}

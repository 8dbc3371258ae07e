//! P1 Galerkin assembly of `-Δu = f` in `Ω`, `u = g` on `∂Ω`.
//!
//! Dirichlet nodes are eliminated symmetrically, leaving an SPD system over the
//! interior nodes: `A_II u_I = F_I - A_IB g_B`. The load vector uses vertex
//! quadrature, `∫ f φ_i ≈ Σ_T |T|/3 · f(x_i)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{signed_area, Mesh};
use crate::sparse::CsrMatrix;

/// Coefficients of the quadratic source and boundary polynomials
///
/// ```text
/// f(x, y) = r1 (x - 1)² + r2 y² + r3
/// g(x, y) = r4 x² + r5 y² + r6 xy + r7 x + r8 y + r9
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub f: [f64; 3],
    pub g: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyKind {
    Source,
    Boundary,
}

impl PolyCoeffs {
    /// All nine coefficients uniform in `[-10, 10]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut f = [0.0; 3];
        let mut g = [0.0; 6];
        for v in f.iter_mut().chain(g.iter_mut()) {
            *v = rng.gen_range(-10.0..=10.0);
        }
        PolyCoeffs { f, g }
    }

    pub fn source(&self, x: f64, y: f64) -> f64 {
        let [r1, r2, r3] = self.f;
        r1 * (x - 1.0) * (x - 1.0) + r2 * y * y + r3
    }

    pub fn boundary(&self, x: f64, y: f64) -> f64 {
        let [r4, r5, r6, r7, r8, r9] = self.g;
        r4 * x * x + r5 * y * y + r6 * x * y + r7 * x + r8 * y + r9
    }
}

pub fn eval_poly(p: &PolyCoeffs, which: PolyKind, x: f64, y: f64) -> f64 {
    match which {
        PolyKind::Source => p.source(x, y),
        PolyKind::Boundary => p.boundary(x, y),
    }
}

/// Local P1 stiffness matrix `K_ab = |T| ∇φ_a · ∇φ_b`.
pub fn element_stiffness(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> Result<[[f64; 3]; 3]> {
    let area = signed_area(p0, p1, p2);
    if !(area > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "degenerate or clockwise triangle (signed area {area:e})"
        )));
    }
    let p = [p0, p1, p2];
    // 2|T| ∇φ_a, rotated edge opposite to vertex a
    let d: [[f64; 2]; 3] = std::array::from_fn(|a| {
        let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
        [b[1] - c[1], c[0] - b[0]]
    });
    let scale = 4.0 * area;
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = (d[a][0] * d[b][0] + d[a][1] * d[b][1]) / scale;
        }
    }
    Ok(k)
}

/// Reduced interior system of a Dirichlet Poisson problem.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    /// Interior DOF index of every mesh node, `None` on the boundary.
    pub interior_of_node: Vec<Option<usize>>,
    pub node_of_interior: Vec<usize>,
    /// Boundary nodes in increasing order.
    pub boundary_nodes: Vec<usize>,
    /// Dirichlet data, aligned with `boundary_nodes`.
    pub g_values: Vec<f64>,
}

impl LinearSystem {
    pub fn dofs(&self) -> usize {
        self.b.len()
    }

    /// `b - A u`.
    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        residual(self, u)
    }

    /// Full nodal vector: `u` on interior nodes, `g` on the boundary.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.interior_of_node.len()];
        for (k, &node) in self.node_of_interior.iter().enumerate() {
            full[node] = u[k];
        }
        for (&node, &g) in self.boundary_nodes.iter().zip(&self.g_values) {
            full[node] = g;
        }
        full
    }

    /// Coordinates of the interior DOFs.
    pub fn dof_coords(&self, mesh: &Mesh) -> Vec<[f64; 2]> {
        self.node_of_interior.iter().map(|&v| mesh.coords[v]).collect()
    }
}

/// Assembles the problem with the quadratic data `p`.
pub fn assemble(mesh: &Mesh, p: &PolyCoeffs) -> Result<LinearSystem> {
    assemble_with(mesh, |x, y| p.source(x, y), |x, y| p.boundary(x, y))
}

/// Assembles the problem for arbitrary source `f` and boundary data `g`.
pub fn assemble_with(
    mesh: &Mesh,
    f: impl Fn(f64, f64) -> f64,
    g: impl Fn(f64, f64) -> f64,
) -> Result<LinearSystem> {
    let n_nodes = mesh.node_count();
    let mut interior_of_node = vec![None; n_nodes];
    let mut node_of_interior = Vec::new();
    let mut boundary_nodes = Vec::new();
    for v in 0..n_nodes {
        if mesh.boundary[v] {
            boundary_nodes.push(v);
        } else {
            interior_of_node[v] = Some(node_of_interior.len());
            node_of_interior.push(v);
        }
    }
    if node_of_interior.is_empty() {
        return Err(Error::InvalidMesh("mesh has no interior nodes".into()));
    }
    let mut g_full = vec![0.0; n_nodes];
    let g_values: Vec<f64> = boundary_nodes
        .iter()
        .map(|&v| {
            let [x, y] = mesh.coords[v];
            g_full[v] = g(x, y);
            g_full[v]
        })
        .collect();

    let n = node_of_interior.len();
    let mut load = vec![0.0; n];
    let mut triplets = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let pts = tri.map(|v| mesh.coords[v]);
        let k = element_stiffness(pts[0], pts[1], pts[2]).map_err(|_| Error::DegenerateTriangle(t))?;
        let third = signed_area(pts[0], pts[1], pts[2]) / 3.0;
        for a in 0..3 {
            let Some(i) = interior_of_node[tri[a]] else { continue };
            load[i] += third * f(pts[a][0], pts[a][1]);
            for b in 0..3 {
                match interior_of_node[tri[b]] {
                    Some(j) => triplets.push((i, j, k[a][b])),
                    None => load[i] -= k[a][b] * g_full[tri[b]],
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &triplets);
    Ok(LinearSystem {
        a,
        b: load,
        interior_of_node,
        node_of_interior,
        boundary_nodes,
        g_values,
    })
}

/// `b - A u`.
pub fn residual(sys: &LinearSystem, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != sys.dofs() {
        return Err(Error::DimensionMismatch {
            expected: sys.dofs(),
            actual: u.len(),
        });
    }
    let au = sys.a.spmv(u);
    Ok(sys.b.iter().zip(&au).map(|(b, a)| b - a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect_mesh;

    #[test]
    fn polynomial_values() {
        let p = PolyCoeffs {
            f: [1.0, 1.0, 1.0],
            g: [0.0, 0.0, 0.0, 0.0, 0.0, 5.0],
        };
        assert_eq!(eval_poly(&p, PolyKind::Source, 0.0, 0.0), 2.0);
        assert_eq!(eval_poly(&p, PolyKind::Boundary, 0.3, -7.0), 5.0);
        let q = PolyCoeffs {
            f: [2.0, 3.0, -1.0],
            g: [0.0; 6],
        };
        assert_eq!(eval_poly(&q, PolyKind::Source, 2.0, 1.0), 4.0);
    }

    #[test]
    fn unit_right_triangle_stiffness() {
        let k = element_stiffness([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]).unwrap();
        assert_eq!(k, [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]);
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_scale_invariant() {
        let (p0, p1, p2) = ([0.1, 0.2], [1.3, -0.4], [0.7, 0.9]);
        let k = element_stiffness(p0, p1, p2).unwrap();
        for row in &k {
            let s: f64 = row.iter().sum();
            let m = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(s.abs() <= 1e-15 * m);
        }
        let s = 3.0;
        let ks = element_stiffness([s * p0[0], s * p0[1]], [s * p1[0], s * p1[1]], [s * p2[0], s * p2[1]])
            .unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - ks[a][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        assert!(element_stiffness([0.0, 0.0], [1.0, 1.0], [2.0, 2.0]).is_err());
        assert!(element_stiffness([0.0, 0.0], [0.0, 1.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn homogeneous_problem_is_zero() {
        let mesh = generate_rect_mesh(6, 6, 1.0, 1.0, &[]).unwrap();
        let sys = assemble(&mesh, &PolyCoeffs { f: [0.0; 3], g: [0.0; 6] }).unwrap();
        assert!(sys.b.iter().all(|&v| v == 0.0));
        assert_eq!(sys.dofs(), 25);
        assert!(sys.a.is_symmetric());
    }

    #[test]
    fn no_interior_nodes_is_an_error() {
        let mesh = generate_rect_mesh(2, 2, 1.0, 1.0, &[]).unwrap();
        assert!(assemble(&mesh, &PolyCoeffs { f: [0.0; 3], g: [0.0; 6] }).is_ok());
        let ring = crate::mesh::generate_rect_mesh(
            6,
            6,
            6.0,
            6.0,
            &[crate::mesh::Hole::new(1.0, 1.0, 5.0, 5.0)],
        )
        .unwrap();
        assert!(matches!(
            assemble(&ring, &PolyCoeffs { f: [0.0; 3], g: [0.0; 6] }),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn residual_dimension_mismatch() {
        let mesh = generate_rect_mesh(3, 3, 1.0, 1.0, &[]).unwrap();
        let sys = assemble(&mesh, &PolyCoeffs { f: [1.0; 3], g: [0.0; 6] }).unwrap();
        assert!(residual(&sys, &[0.0]).is_err());
        assert_eq!(residual(&sys, &vec![0.0; sys.dofs()]).unwrap(), sys.b);
    }
}

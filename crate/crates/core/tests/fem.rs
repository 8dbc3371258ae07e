use std::f64::consts::PI;

use ddm_gnn::fem::{assemble, assemble_with, PolyCoeffs};
use ddm_gnn::mesh::{generate_blob_mesh, generate_rect_mesh, Mesh};
use ddm_gnn::sparse::{dot, factorize, CsrMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    factorize(a).unwrap().solve(b)
}

#[test]
fn affine_solution_is_exact() {
    let exact = |x: f64, _y: f64| 1.0 + x;
    for mesh in [generate_blob_mesh(4, 600, 0.25).unwrap(), generate_rect_mesh(9, 7, 2.0, 1.0, &[]).unwrap()] {
        let sys = assemble_with(&mesh, |_, _| 0.0, exact).unwrap();
        let u = solve(&sys.a, &sys.b);
        for (k, &node) in sys.node_of_interior.iter().enumerate() {
            let [x, y] = mesh.coords[node];
            assert!((u[k] - exact(x, y)).abs() < 1e-10, "node {node}: {} vs {}", u[k], exact(x, y));
        }
    }
}

/// Seven-point degree-5 rule on the reference triangle: (barycentric a, b, weight).
const DUNAVANT7: [(f64, f64, f64); 7] = [
    (1.0 / 3.0, 1.0 / 3.0, 0.225),
    (0.059_715_871_789_770, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.470_142_064_105_115, 0.059_715_871_789_770, 0.132_394_152_788_506),
    (0.470_142_064_105_115, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827),
    (0.101_286_507_323_456, 0.797_426_985_353_087, 0.125_939_180_544_827),
    (0.101_286_507_323_456, 0.101_286_507_323_456, 0.125_939_180_544_827),
];

fn l2_error(mesh: &Mesh, nodal: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for t in 0..mesh.triangle_count() {
        let [i, j, k] = mesh.triangles[t];
        let (p, q, r) = (mesh.coords[i], mesh.coords[j], mesh.coords[k]);
        let area = mesh.signed_area(t);
        for &(a, b, w) in &DUNAVANT7 {
            let c = 1.0 - a - b;
            let x = a * p[0] + b * q[0] + c * r[0];
            let y = a * p[1] + b * q[1] + c * r[1];
            let uh = a * nodal[i] + b * nodal[j] + c * nodal[k];
            sum += w * area * (uh - exact(x, y)).powi(2);
        }
    }
    sum.sqrt()
}

#[test]
fn second_order_convergence_for_sine_product() {
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let source = |x: f64, y: f64| 2.0 * PI * PI * exact(x, y);
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let mesh = generate_rect_mesh(n, n, 1.0, 1.0, &[]).unwrap();
            let sys = assemble_with(&mesh, source, |_, _| 0.0).unwrap();
            let u = solve(&sys.a, &sys.b);
            l2_error(&mesh, &sys.expand(&u), exact)
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "errors {errors:?}, ratio {ratio}");
    }
}

#[test]
fn constant_boundary_data_gives_constant_solution() {
    let mesh = generate_rect_mesh(10, 10, 1.0, 1.0, &[ddm_gnn::mesh::Hole::new(0.3, 0.3, 0.6, 0.5)]).unwrap();
    let sys = assemble_with(&mesh, |_, _| 0.0, |_, _| 3.5).unwrap();
    let u = solve(&sys.a, &sys.b);
    assert!(u.iter().all(|v| (v - 3.5).abs() < 1e-10));
}

#[test]
fn residual_matches_dense_oracle() {
    let mesh = generate_blob_mesh(8, 200, 0.2).unwrap();
    let sys = assemble(&mesh, &PolyCoeffs::random(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u: Vec<f64> = (0..sys.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dense = sys.a.to_dense();
    let r = sys.residual(&u).unwrap();
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..sys.dofs() {
        let oracle = sys.b[i] - dense[i].iter().zip(&u).map(|(a, x)| a * x).sum::<f64>();
        assert!((r[i] - oracle).abs() <= 1e-14 * scale);
    }
    assert_eq!(sys.residual(&vec![0.0; sys.dofs()]).unwrap(), sys.b);
}

#[test]
fn pattern_is_interior_adjacency() {
    let mesh = generate_blob_mesh(2, 300, 0.15).unwrap();
    let sys = assemble(&mesh, &PolyCoeffs::random(&mut ChaCha8Rng::seed_from_u64(0))).unwrap();
    let mut expected = std::collections::BTreeSet::new();
    for (i, j) in mesh.edges() {
        if let (Some(a), Some(b)) = (sys.interior_of_node[i], sys.interior_of_node[j]) {
            expected.insert((a.min(b), a.max(b)));
        }
    }
    let mut found = std::collections::BTreeSet::new();
    for (i, nbrs) in sys.a.adjacency().iter().enumerate() {
        for &j in nbrs {
            found.insert((i.min(j), i.max(j)));
        }
    }
    assert_eq!(found, expected);
    assert!(sys.a.is_symmetric());
}

/// Relabels nodes: new index of old node `v` is `perm[v]`.
fn permute_mesh(mesh: &Mesh, perm: &[usize]) -> Mesh {
    let n = mesh.node_count();
    let mut coords = vec![[0.0; 2]; n];
    for v in 0..n {
        coords[perm[v]] = mesh.coords[v];
    }
    let tris = mesh.triangles.iter().map(|t| t.map(|v| perm[v])).collect();
    Mesh::from_parts(coords, tris).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assembled_matrix_is_positive_definite(seed in 0u64..1000, nodes in 40usize..400, pert in 0.0f64..0.3) {
        let mesh = generate_blob_mesh(seed, nodes, pert).unwrap();
        let sys = assemble(&mesh, &PolyCoeffs::random(&mut ChaCha8Rng::seed_from_u64(seed))).unwrap();
        prop_assert!(sys.a.is_symmetric());
        prop_assert!(factorize(&sys.a).is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for _ in 0..100 {
            let v: Vec<f64> = (0..sys.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!(dot(&sys.a.spmv(&v), &v) > 0.0);
        }
    }

    #[test]
    fn assembly_commutes_with_relabeling(seed in 0u64..1000) {
        let mesh = generate_blob_mesh(seed, 120, 0.2).unwrap();
        let p = PolyCoeffs::random(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = mesh.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut ChaCha8Rng::seed_from_u64(seed + 7));
        let sys = assemble(&mesh, &p).unwrap();
        let sys2 = assemble(&permute_mesh(&mesh, &perm), &p).unwrap();
        prop_assert_eq!(sys.dofs(), sys2.dofs());
        // interior index in the permuted system of each original interior DOF
        let map: Vec<usize> = sys.node_of_interior.iter().map(|&v| sys2.interior_of_node[perm[v]].unwrap()).collect();
        let scale = sys.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..sys.dofs() {
            prop_assert!((sys.b[i] - sys2.b[map[i]]).abs() <= 1e-12 * scale);
            let (cols, vals) = sys.a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                prop_assert!((v - sys2.a.get(map[i], map[j])).abs() <= 1e-12);
            }
        }
    }
}

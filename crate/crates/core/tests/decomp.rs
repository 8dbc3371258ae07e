use ddm_gnn::decomp::{add_overlap, decompose, partition, Decomposition};
use ddm_gnn::fem::{assemble, PolyCoeffs};
use ddm_gnn::mesh::generate_blob_mesh;
use ddm_gnn::sparse::{dot, CsrMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(seed: u64, nodes: usize) -> CsrMatrix {
    let mesh = generate_blob_mesh(seed, nodes, 0.2).unwrap();
    assemble(&mesh, &PolyCoeffs::random(&mut ChaCha8Rng::seed_from_u64(seed))).unwrap().a
}

fn connected(adj: &[Vec<usize>], nodes: &[usize]) -> bool {
    let inside: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    let mut seen = std::collections::HashSet::from([nodes[0]]);
    let mut stack = vec![nodes[0]];
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if inside.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == nodes.len()
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn desk_mesh_with_target_1000_gives_three_parts() {
    // about 2600 interior DOFs
    let a = system(11, 2790);
    assert!((2500..=2700).contains(&a.n_rows()), "{}", a.n_rows());
    let owner = partition(&a.adjacency(), 1000, 0).unwrap();
    let k = owner.iter().max().unwrap() + 1;
    assert_eq!(k, (a.n_rows() as f64 / 1000.0).round() as usize);
    assert_eq!(k, 3);
}

#[test]
fn frontier_dofs_are_shared() {
    let a = system(3, 900);
    let adj = a.adjacency();
    let dec = decompose(&a, 150, 1, 0).unwrap();
    let mut count = vec![0; a.n_rows()];
    for s in &dec.subdomains {
        for &j in s {
            count[j] += 1;
        }
    }
    for (j, nbrs) in adj.iter().enumerate() {
        if nbrs.iter().any(|&l| dec.base_owner[l] != dec.base_owner[j]) {
            assert!(count[j] >= 2, "frontier DOF {j} in {} subdomains", count[j]);
        }
    }
}

#[test]
fn deterministic_for_a_fixed_seed() {
    let a = system(5, 700);
    assert_eq!(decompose(&a, 100, 2, 9).unwrap(), decompose(&a, 100, 2, 9).unwrap());
}

fn check_decomposition(a: &CsrMatrix, dec: &Decomposition, target: usize) -> Result<(), TestCaseError> {
    let n = a.n_rows();
    let adj = a.adjacency();
    let k = dec.n_subdomains();
    prop_assert_eq!(k, ((n as f64 / target as f64).round() as usize).max(1));

    let mut sizes = vec![0usize; k];
    for &o in &dec.base_owner {
        sizes[o] += 1;
    }
    let (min, max) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
    prop_assert!(max <= 2 * min, "sizes {:?}", sizes);
    for p in 0..k {
        let part: Vec<usize> = (0..n).filter(|&j| dec.base_owner[j] == p).collect();
        prop_assert!(connected(&adj, &part));
    }

    let mut covered = vec![false; n];
    for (i, s) in dec.subdomains.iter().enumerate() {
        prop_assert!(connected(&adj, s));
        for &j in s {
            covered[j] = true;
        }
        let (cols, _) = dec.r0.row(i);
        prop_assert!(cols.iter().all(|c| s.binary_search(c).is_ok()));
    }
    prop_assert!(covered.iter().all(|&c| c));

    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    for _ in 0..20 {
        let x = random_vec(n, &mut rng);
        let mut y = vec![0.0; n];
        for i in 0..k {
            let weighted: Vec<f64> = dec.restrict(i, &x).unwrap().iter().zip(&dec.pou_weights[i]).map(|(a, w)| a * w).collect();
            dec.extend_add(i, &weighted, 1.0, &mut y).unwrap();
        }
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        for i in 0..k {
            let v = random_vec(dec.subdomains[i].len(), &mut rng);
            prop_assert_eq!(dec.restrict(i, &dec.extend(i, &v).unwrap()).unwrap(), v.clone());
            let lhs = dot(&dec.extend(i, &v).unwrap(), &x);
            let rhs = dot(&v, &dec.restrict(i, &x).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-15 * lhs.abs().max(1.0) * 4.0);
        }
    }
    let ones = dec.r0.spmv_transpose(&vec![1.0; k]);
    prop_assert!(ones.iter().all(|v| (v - 1.0).abs() <= 1e-15));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn decompositions_are_valid(seed in 0u64..500, nodes in 300usize..1500, target in 60usize..300, overlap in 0usize..4) {
        let a = system(seed, nodes);
        let target = target.min(a.n_rows());
        let dec = decompose(&a, target, overlap, seed).unwrap();
        check_decomposition(&a, &dec, target)?;
    }
}

#[test]
fn zero_overlap_has_unit_weights() {
    let a = system(1, 500);
    let owner = partition(&a.adjacency(), 100, 0).unwrap();
    let dec = add_overlap(&owner, &a.adjacency(), 0).unwrap();
    assert!(dec.pou_weights.iter().flatten().all(|&w| w == 1.0));
    for (i, s) in dec.subdomains.iter().enumerate() {
        assert!(s.iter().all(|&j| owner[j] == i));
    }
}

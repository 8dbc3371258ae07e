use ddm_gnn::dataset::{generate, DatasetConfig, MeshConfig};
use ddm_gnn::dss::{
    backward, batch_gradient, forward, init_model, load_model, residual_loss, save_model, train, training_loss, DssModel,
    LocalGraph, TrainConfig,
};
use ddm_gnn::sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Six nodes on a perturbed 3×2 grid with a diagonally dominant random SPD matrix.
fn random_graph(seed: u64) -> LocalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<[f64; 2]> = (0..6)
        .map(|i| {
            [
                (i % 3) as f64 * 0.5 + rng.gen_range(-0.1..0.1),
                (i / 3) as f64 * 0.5 + rng.gen_range(-0.1..0.1),
            ]
        })
        .collect();
    let edges = [[0, 1], [1, 2], [3, 4], [4, 5], [0, 3], [1, 4], [2, 5], [0, 4], [1, 5]];
    let mut t = Vec::new();
    let mut diag = [0.0; 6];
    for &[j, l] in &edges {
        let w = rng.gen_range(0.2..1.5);
        t.push((j, l, -w));
        t.push((l, j, -w));
        diag[j] += w;
        diag[l] += w;
    }
    for (j, d) in diag.iter().enumerate() {
        t.push((j, j, d + rng.gen_range(0.1..0.5)));
    }
    let a = CsrMatrix::from_triplets(6, 6, &t);
    let mut g = LocalGraph::new(coords, &edges, a, vec![], 0.0).unwrap();
    let r: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    g.set_residual(&r).unwrap();
    g
}

fn randomize_biases(model: &mut DssModel, seed: u64) {
    // Xavier init leaves biases at zero; perturb everything so every parameter is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
}

fn loss(model: &DssModel, g: &LocalGraph) -> f64 {
    training_loss(&forward(model, g).unwrap(), g).unwrap()
}

const TOL: f64 = 1e-6;

#[test]
fn backward_matches_central_differences() {
    let h = 1e-6;
    for seed in 0..5 {
        let g = random_graph(seed);
        let mut model = init_model(2, 3, 0.5, seed).unwrap();
        randomize_biases(&mut model, 100 + seed);
        let trace = forward(&model, &g).unwrap();
        let grad = backward(&model, &g, &trace).unwrap();
        // components smaller than the oracle's roundoff resolution (ε·L/h) divided by
        // the target cannot be checked relatively; they are compared against that floor
        let l0 = training_loss(&trace, &g).unwrap();
        let floor = f64::EPSILON * l0 / h / TOL;
        let mut worst = 0.0f64;
        for i in 0..model.param_count() {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus, &g) - loss(&minus, &g)) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(floor);
            worst = worst.max(rel);
        }
        println!("seed {seed}: max relative error {worst:.3e}");
        assert!(worst < TOL, "seed {seed}: {worst}");
    }
}

#[test]
fn duplicated_batch_doubles_gradient() {
    let g = random_graph(9);
    let model = init_model(3, 4, 0.2, 1).unwrap();
    let (l1, g1) = batch_gradient(&model, &[&g]).unwrap();
    let (l2, g2) = batch_gradient(&model, &[&g, &g]).unwrap();
    assert_eq!(l2, 2.0 * l1);
    for (a, b) in g1.iter().zip(&g2) {
        assert_eq!(*b, 2.0 * a);
    }
}

#[test]
fn backward_is_deterministic() {
    let g = random_graph(3);
    let model = init_model(2, 5, 0.1, 4).unwrap();
    let tr = forward(&model, &g).unwrap();
    assert_eq!(backward(&model, &g, &tr).unwrap(), backward(&model, &g, &tr).unwrap());
}

#[test]
fn parameter_counts() {
    let table = [
        (5, 5, 1755),
        (5, 10, 6255),
        (5, 20, 23505),
        (10, 5, 3510),
        (10, 10, 12510),
        (10, 20, 47010),
        (20, 5, 7020),
        (20, 10, 25020),
        (20, 20, 94020),
        (30, 10, 37530),
    ];
    for (k, d, n) in table {
        assert_eq!(init_model(k, d, 1e-3, 0).unwrap().param_count(), n, "k={k}, d={d}");
    }
}

#[test]
fn residual_loss_against_dense_oracle() {
    let g = random_graph(17);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let a = g.a_local.to_dense();
    let oracle: f64 = (0..6)
        .map(|j| (a[j].iter().zip(&u).map(|(x, y)| x * y).sum::<f64>() - g.c[j]).powi(2))
        .sum::<f64>()
        / 6.0;
    assert!((residual_loss(&u, &g).unwrap() - oracle).abs() <= 1e-14);
    let exact = ddm_gnn::sparse::factorize(&g.a_local).unwrap().solve(&g.c);
    assert!(residual_loss(&exact, &g).unwrap() < 1e-20);
}

#[test]
fn single_iteration_loss_is_the_residual_loss() {
    let g = random_graph(2);
    let m = init_model(1, 4, 0.3, 3).unwrap();
    let tr = forward(&m, &g).unwrap();
    assert_eq!(training_loss(&tr, &g).unwrap(), residual_loss(&tr.outputs[0], &g).unwrap());
}

#[test]
fn forward_is_permutation_equivariant() {
    let g = random_graph(5);
    let mut model = init_model(4, 6, 0.4, 2).unwrap();
    randomize_biases(&mut model, 3);
    let perm = [3, 0, 5, 1, 4, 2];
    let pg = g.permuted(&perm).unwrap();
    let out = forward(&model, &g).unwrap();
    let pout = forward(&model, &pg).unwrap();
    for (k, (o, po)) in out.outputs.iter().zip(&pout.outputs).enumerate() {
        for j in 0..6 {
            assert!((o[j] - po[perm[j]]).abs() <= 1e-12, "iteration {k}, node {j}");
        }
    }
}

#[test]
fn forward_is_translation_invariant_bitwise() {
    // dyadic coordinates so that shifted differences are exact
    let coords: Vec<[f64; 2]> = (0..6).map(|i| [(i % 3) as f64 / 64.0 * 5.0, (i / 3) as f64 * 0.375]).collect();
    let g = random_graph(8);
    let g = LocalGraph::new(coords.clone(), &g.topology.undirected_edges(), g.a_local.clone(), g.c.clone(), g.scale).unwrap();
    let shifted: Vec<[f64; 2]> = coords.iter().map(|[x, y]| [x + 8.0, y - 4.0]).collect();
    let h = LocalGraph::new(shifted, &g.topology.undirected_edges(), g.a_local.clone(), g.c.clone(), g.scale).unwrap();
    let model = init_model(3, 5, 0.5, 1).unwrap();
    assert_eq!(forward(&model, &g).unwrap().outputs, forward(&model, &h).unwrap().outputs);
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dss");
    let mut model = init_model(3, 4, 1e-3, 21).unwrap();
    randomize_biases(&mut model, 1);
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let path2 = dir.path().join("m2.dss");
    save_model(&back, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    let g = random_graph(0);
    assert_eq!(forward(&model, &g).unwrap().outputs, forward(&back, &g).unwrap().outputs);
}

fn desk_samples(n_problems: usize, target_nodes: usize, target_subdomain_size: usize) -> Vec<LocalGraph> {
    let cfg = DatasetConfig {
        n_problems,
        mesh: MeshConfig::Blob {
            target_nodes,
            perturbation: 0.2,
        },
        target_subdomain_size,
        overlap: 2,
        tol: 1e-6,
        max_iter: 300,
        seed: 3,
    };
    generate(&cfg).unwrap().samples.into_iter().map(|s| s.graph).collect()
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let data: Vec<LocalGraph> = desk_samples(1, 500, 80).into_iter().take(20).collect();
    let mut model = init_model(2, 4, 1e-3, 0).unwrap();
    let before = model.clone();
    let cfg = TrainConfig {
        epochs: 3,
        lr: 0.0,
        batch_size: 5,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &[], &cfg).unwrap();
    assert_eq!(model, before);
}

#[test]
fn training_reduces_loss_five_fold() {
    let data: Vec<LocalGraph> = desk_samples(1, 2600, 300).into_iter().take(200).collect();
    assert_eq!(data.len(), 200);
    let mut model = init_model(10, 10, 1e-3, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 10,
        ..TrainConfig::default()
    };
    let log = train(&mut model, &data, &[], &cfg).unwrap();
    let (first, last) = (log.epochs[0].train_loss, log.epochs.last().unwrap().train_loss);
    println!("train loss {first:.4e} -> {last:.4e} (ratio {:.3})", last / first);
    assert!(last <= 0.2 * first);
    // deterministic for a fixed seed
    let mut again = init_model(10, 10, 1e-3, 0).unwrap();
    let cfg2 = TrainConfig { epochs: 2, ..cfg };
    let mut once = init_model(10, 10, 1e-3, 0).unwrap();
    train(&mut again, &data, &[], &cfg2).unwrap();
    train(&mut once, &data, &[], &cfg2).unwrap();
    assert_eq!(again, once);
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let data: Vec<LocalGraph> = desk_samples(1, 500, 80).into_iter().take(4).collect();
    let mut model = init_model(2, 3, 1e-3, 0).unwrap();
    let n = model.param_count();
    model.params_mut()[n - 1] = f64::INFINITY;
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        ..TrainConfig::default()
    };
    match train(&mut model, &data, &[], &cfg) {
        Err(ddm_gnn::Error::NonFiniteLoss { .. }) | Err(ddm_gnn::Error::ModelNaN(_)) => {}
        other => panic!("{other:?}"),
    }
}

mod support;

use demand_gbt::{grad_hess, train, BoostParams, LossKind, Matrix, Tree, TreeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle::{compare, oracle_tree};

fn random_matrix(rng: &mut ChaCha8Rng) -> Matrix {
    let n = rng.random_range(2..=64);
    let p = rng.random_range(1..=4);
    let mut values = Vec::with_capacity(n * p);
    let kinds: Vec<u8> = (0..p).map(|_| rng.random_range(0..3)).collect();
    for _ in 0..n {
        for &kind in &kinds {
            let v = match kind {
                0 => rng.random_range(0..4) as f64,
                1 => rng.random_range(-2.0..2.0),
                _ => {
                    if rng.random_bool(0.2) {
                        f64::NAN
                    } else {
                        rng.random_range(0..10) as f64 * 0.5
                    }
                }
            };
            values.push(v);
        }
    }
    let names = (0..p).map(|i| format!("f{i}")).collect();
    Matrix::new(names, n, values).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng) -> TreeParams {
    TreeParams {
        max_depth: rng.random_range(1..=6),
        lambda: [0.0, 0.5, 1.0][rng.random_range(0..3)],
        min_split_loss: [0.0, 0.01, 0.2][rng.random_range(0..3)],
        min_child_weight: [0.0, 1.0][rng.random_range(0..2)],
        max_delta_step: [0.0, 0.7][rng.random_range(0..2)],
    }
}

#[test]
fn single_trees_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let m = random_matrix(&mut rng);
        let params = random_params(&mut rng);
        let loss = if rng.random_bool(0.5) {
            LossKind::PoissonLogLink
        } else {
            LossKind::Squared
        };
        let (g, h): (Vec<f64>, Vec<f64>) = (0..m.n_rows())
            .map(|_| {
                let y = rng.random_range(0..20) as f64;
                let f = rng.random_range(-1.0..2.5);
                grad_hess(loss, y, f).unwrap()
            })
            .unzip();
        let tree = Tree::fit(&m, &g, &h, &params).unwrap();
        let oracle = oracle_tree(&m, &g, &h, &params);
        if let Err(diff) = compare(&tree, &oracle) {
            panic!("case {case}: {diff}");
        }
    }
}

#[test]
fn boosted_rounds_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..40 {
        let m = random_matrix(&mut rng);
        let y: Vec<f64> = (0..m.n_rows())
            .map(|_| rng.random_range(0..15) as f64)
            .collect();
        let mut params = BoostParams::new(LossKind::PoissonLogLink);
        params.rounds = 3;
        params.tree = random_params(&mut rng);
        let model = train(&m, &y, None, &params).unwrap();

        let mut raw = vec![model.base_score(); m.n_rows()];
        for (round, tree) in model.trees().iter().enumerate() {
            let (g, h): (Vec<f64>, Vec<f64>) = y
                .iter()
                .zip(&raw)
                .map(|(&t, &f)| grad_hess(LossKind::PoissonLogLink, t, f).unwrap())
                .unzip();
            let oracle = oracle_tree(&m, &g, &h, &params.tree);
            if let Err(diff) = compare(tree, &oracle) {
                panic!("case {case} round {round}: {diff}");
            }
            for (i, r) in raw.iter_mut().enumerate() {
                *r += params.learning_rate * tree.predict_row(m.row(i));
            }
        }
    }
}

//! Bagged regression forest.
//!
//! Each tree is grown on a bootstrap resample with squared loss, so leaves
//! hold the mean target of their rows and split gains equal the reduction in
//! squared error. A fresh subset of `ceil(sqrt(p))` features is drawn at every
//! split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GbtError, Result};
use crate::matrix::Matrix;
use crate::tree::{ColumnSampler, Grower, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub feature_subsample: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 32,
            min_samples_leaf: 3,
            bootstrap: true,
            feature_subsample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    feature_names: Vec<String>,
    trees: Vec<Tree>,
}

pub fn train_forest(
    m: &Matrix,
    targets: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let n = m.n_rows();
    if n == 0 {
        return Err(GbtError::EmptyMatrix);
    }
    if targets.len() != n {
        return Err(GbtError::TargetLength {
            rows: n,
            targets: targets.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(GbtError::NonFinite("targets"));
    }
    if params.n_trees == 0 {
        return Err(GbtError::InvalidParam("n_trees must be positive".into()));
    }

    // Squared loss at a zero raw score: the Newton leaf weight is the row mean.
    let grad: Vec<f64> = targets.iter().map(|y| -y).collect();
    let hess = vec![1.0; n];
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        lambda: 0.0,
        min_split_loss: 0.0,
        min_child_weight: params.min_samples_leaf as f64,
        max_delta_step: 0.0,
    };
    let per_split = if params.feature_subsample {
        (m.n_cols() as f64).sqrt().ceil() as usize
    } else {
        m.n_cols()
    };

    let sorted = m.sorted_columns();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let (rows, cols) = if params.bootstrap {
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let expand = |src: &[u32]| -> Vec<u32> {
                src.iter()
                    .flat_map(|&r| std::iter::repeat_n(r, counts[r as usize] as usize))
                    .collect()
            };
            let all: Vec<u32> = (0..n as u32).collect();
            (expand(&all), sorted.iter().map(|c| expand(c)).collect())
        } else {
            ((0..n as u32).collect(), sorted.clone())
        };
        let sampler = ColumnSampler {
            per_split,
            rng: &mut rng,
        };
        let mut grower = Grower::new(m, &grad, &hess, &tree_params, Some(sampler));
        grower.grow(rows, cols, 0)?;
        trees.push(grower.into_tree());
    }

    Ok(ForestModel {
        feature_names: m.names().to_vec(),
        trees,
    })
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, m: &Matrix) -> Result<Vec<f64>> {
        if m.names() != self.feature_names.as_slice() {
            return Err(GbtError::Schema {
                expected: self.feature_names.clone(),
                got: m.names().to_vec(),
            });
        }
        Ok((0..m.n_rows())
            .map(|i| self.predict_row(m.row(i)))
            .collect())
    }
}

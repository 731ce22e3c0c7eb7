use serde::{Deserialize, Serialize};

use crate::error::{GbtError, Result};
use crate::loss::{grad_hess, LossKind};
use crate::matrix::Matrix;
use crate::tree::{Grower, Tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT_NAME: &str = "demand-gbt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub loss: LossKind,
    pub learning_rate: f64,
    /// Upper bound on boosting rounds.
    pub rounds: usize,
    /// Rounds without validation improvement before training stops.
    pub early_stop_patience: usize,
    pub tree: TreeParams,
}

impl BoostParams {
    /// Defaults for `loss`. Poisson leaves are bounded at 0.7 in log space so
    /// that a Newton step cannot overshoot when a leaf's counts far exceed the
    /// current fit.
    pub fn new(loss: LossKind) -> Self {
        Self {
            loss,
            learning_rate: 0.1,
            rounds: 1000,
            early_stop_patience: 50,
            tree: TreeParams {
                max_depth: 6,
                lambda: 1.0,
                min_split_loss: 0.05,
                min_child_weight: 1.0,
                max_delta_step: match loss {
                    LossKind::PoissonLogLink => 0.7,
                    LossKind::Squared => 0.0,
                },
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(GbtError::InvalidParam(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.tree.lambda < 0.0 || self.tree.min_split_loss < 0.0 {
            return Err(GbtError::InvalidParam(
                "lambda and min_split_loss must be non-negative".into(),
            ));
        }
        if self.tree.min_child_weight < 0.0 || self.tree.max_delta_step < 0.0 {
            return Err(GbtError::InvalidParam(
                "min_child_weight and max_delta_step must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Mean loss after each round; index 0 is the base score alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    base_score: f64,
    learning_rate: f64,
    loss: LossKind,
    /// Number of leading trees used at prediction time.
    best_round: usize,
    feature_names: Vec<String>,
    trees: Vec<Tree>,
    history: TrainingHistory,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: BoostedModel,
}

fn check_targets(loss: LossKind, m: &Matrix, targets: &[f64]) -> Result<()> {
    if targets.len() != m.n_rows() {
        return Err(GbtError::TargetLength {
            rows: m.n_rows(),
            targets: targets.len(),
        });
    }
    for (row, &value) in targets.iter().enumerate() {
        if !value.is_finite() {
            return Err(GbtError::NonFinite("targets"));
        }
        if loss == LossKind::PoissonLogLink && value < 0.0 {
            return Err(GbtError::NegativeTarget { row, value });
        }
    }
    Ok(())
}

/// Fits a boosted ensemble. With a validation set, training stops once the
/// validation loss has not improved for `early_stop_patience` rounds and the
/// model keeps the best round.
pub fn train(
    train: &Matrix,
    targets: &[f64],
    valid: Option<(&Matrix, &[f64])>,
    params: &BoostParams,
) -> Result<BoostedModel> {
    params.validate()?;
    if train.n_rows() == 0 {
        return Err(GbtError::EmptyMatrix);
    }
    check_targets(params.loss, train, targets)?;
    if let Some((vm, vt)) = valid {
        if vm.names() != train.names() {
            return Err(GbtError::Schema {
                expected: train.names().to_vec(),
                got: vm.names().to_vec(),
            });
        }
        check_targets(params.loss, vm, vt)?;
    }

    let loss = params.loss;
    let eta = params.learning_rate;
    let base_score = loss.base_score(targets);
    let n = train.n_rows();
    let mut raw = vec![base_score; n];
    let mut valid_raw = valid.map(|(vm, _)| vec![base_score; vm.n_rows()]);

    let mut history = TrainingHistory {
        train_loss: vec![loss.mean_loss(targets, &raw)],
        valid_loss: Vec::new(),
    };
    if let (Some((_, vt)), Some(vr)) = (valid, valid_raw.as_ref()) {
        history.valid_loss.push(loss.mean_loss(vt, vr));
    }

    let sorted = train.sorted_columns();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::new();
    let mut best_round = 0;

    for round in 1..=params.rounds {
        for i in 0..n {
            let (g, h) = grad_hess(loss, targets[i], raw[i])?;
            grad[i] = g;
            hess[i] = h;
        }
        let mut grower = Grower::new(train, &grad, &hess, &params.tree, None);
        grower.grow((0..n as u32).collect(), sorted.clone(), 0)?;
        let leaves = std::mem::take(&mut grower.leaves);
        for (node, rows) in &leaves {
            let step = eta * grower.leaf_weight_of(*node);
            for &r in rows {
                raw[r as usize] += step;
            }
        }
        let tree = grower.into_tree();
        history.train_loss.push(loss.mean_loss(targets, &raw));

        if let (Some((vm, vt)), Some(vr)) = (valid, valid_raw.as_mut()) {
            for (i, score) in vr.iter_mut().enumerate() {
                *score += eta * tree.predict_row(vm.row(i));
            }
            let current = loss.mean_loss(vt, vr);
            if current < history.valid_loss[best_round] {
                best_round = round;
            }
            history.valid_loss.push(current);
            trees.push(tree);
            if round - best_round >= params.early_stop_patience {
                break;
            }
        } else {
            trees.push(tree);
            best_round = round;
        }
    }

    Ok(BoostedModel {
        base_score,
        learning_rate: eta,
        loss,
        best_round,
        feature_names: train.names().to_vec(),
        trees,
        history,
    })
}

impl BoostedModel {
    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn best_round(&self) -> usize {
        self.best_round
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn history(&self) -> &TrainingHistory {
        &self.history
    }

    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees[..self.best_round]
            .iter()
            .map(|t| t.predict_row(row))
            .sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.loss.transform(self.predict_raw_row(row))
    }

    /// Forecasts on the prediction scale; rows must carry the training schema.
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

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: MODEL_FORMAT_NAME.to_string(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| GbtError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| GbtError::Format(e.to_string()))?;
        if doc.format != MODEL_FORMAT_NAME || doc.version != MODEL_FORMAT_VERSION {
            return Err(GbtError::Format(format!(
                "unsupported document {} v{}",
                doc.format, doc.version
            )));
        }
        let model = doc.model;
        if model.best_round > model.trees.len() {
            return Err(GbtError::Format("best_round exceeds tree count".into()));
        }
        for tree in &model.trees {
            tree.validate(model.feature_names.len())?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_col(xs: &[f64]) -> Matrix {
        Matrix::new(vec!["x".into()], xs.len(), xs.to_vec()).unwrap()
    }

    #[test]
    fn stump_predicts_training_mean() {
        let m = one_col(&[0.0, 1.0, 2.0, 3.0]);
        let y = [1.0, 2.0, 3.0, 6.0];
        let mut params = BoostParams::new(LossKind::Squared);
        params.rounds = 1;
        params.learning_rate = 1.0;
        params.tree.max_depth = 0;
        params.tree.lambda = 0.0;
        let model = train(&m, &y, None, &params).unwrap();
        for p in model.predict(&m).unwrap() {
            assert!((p - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trees_poisson_predicts_mean() {
        let m = one_col(&[0.0, 1.0, 2.0]);
        let y = [1.0, 2.0, 6.0];
        let mut params = BoostParams::new(LossKind::PoissonLogLink);
        params.rounds = 0;
        let model = train(&m, &y, None, &params).unwrap();
        for p in model.predict(&m).unwrap() {
            assert!((p - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exact_fit_toy() {
        let m = one_col(&[0.0, 0.0, 1.0, 1.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let mut params = BoostParams::new(LossKind::Squared);
        params.rounds = 1;
        params.learning_rate = 1.0;
        params.tree = TreeParams {
            max_depth: 1,
            lambda: 0.0,
            min_split_loss: 0.0,
            min_child_weight: 0.0,
            max_delta_step: 0.0,
        };
        let model = train(&m, &y, None, &params).unwrap();
        let p = model.predict(&m).unwrap();
        for (a, b) in p.iter().zip(y) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn constant_poisson_target_first_tree_is_noop() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let m = one_col(&xs);
        let y = vec![4.0; 40];
        let mut params = BoostParams::new(LossKind::PoissonLogLink);
        params.rounds = 1;
        let model = train(&m, &y, None, &params).unwrap();
        assert!((model.base_score() - 4f64.ln()).abs() < 1e-8);
        let tree = &model.trees()[0];
        assert_eq!(tree.n_leaves(), 1);
        assert!(tree.predict_row(&[0.0]).abs() < 1e-6);
    }

    #[test]
    fn rejects_negative_poisson_target() {
        let m = one_col(&[0.0, 1.0]);
        let err = train(
            &m,
            &[1.0, -1.0],
            None,
            &BoostParams::new(LossKind::PoissonLogLink),
        )
        .unwrap_err();
        assert!(matches!(err, GbtError::NegativeTarget { row: 1, .. }));
    }

    #[test]
    fn rejects_empty_matrix() {
        let m = one_col(&[]);
        assert!(matches!(
            train(&m, &[], None, &BoostParams::new(LossKind::Squared)),
            Err(GbtError::EmptyMatrix)
        ));
    }

    #[test]
    fn schema_mismatch_on_predict() {
        let m = one_col(&[0.0, 1.0, 2.0]);
        let model = train(
            &m,
            &[1.0, 2.0, 3.0],
            None,
            &BoostParams::new(LossKind::Squared),
        )
        .unwrap();
        let other = Matrix::new(vec!["z".into()], 1, vec![0.0]).unwrap();
        assert!(matches!(
            model.predict(&other),
            Err(GbtError::Schema { .. })
        ));
    }

    #[test]
    fn missing_values_follow_default_direction() {
        let m = one_col(&[0.0, 1.0, f64::NAN, 2.0, 3.0, f64::NAN]);
        let y = [1.0, 1.0, 9.0, 9.0, 9.0, 9.0];
        let mut params = BoostParams::new(LossKind::Squared);
        params.rounds = 1;
        params.learning_rate = 1.0;
        params.tree.lambda = 0.0;
        params.tree.min_child_weight = 0.0;
        params.tree.min_split_loss = 0.0;
        let model = train(&m, &y, None, &params).unwrap();
        let a = model.predict_row(&[f64::NAN]);
        let b = model.predict_row(&[f64::NAN]);
        assert_eq!(a, b);
        assert!((a - 9.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = xs.iter().map(|x| (3.0 * x).exp().round()).collect();
        let m = one_col(&xs);
        let mut params = BoostParams::new(LossKind::PoissonLogLink);
        params.rounds = 5;
        let model = train(&m, &y, None, &params).unwrap();
        let text = model.to_json().unwrap();
        let back = BoostedModel::from_json(&text).unwrap();
        assert_eq!(model, back);
        assert_eq!(text, back.to_json().unwrap());
    }

    #[test]
    fn rejects_foreign_document() {
        let err = BoostedModel::from_json(r#"{"format":"other","version":1,"model":null}"#);
        assert!(err.is_err());
    }
}

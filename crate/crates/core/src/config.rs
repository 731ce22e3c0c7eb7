//! Run configuration: a flat `key = value` document with `#` comments.
//!
//! Unset keys take their defaults. Booster hyperparameters are checked
//! against the validated search ranges unless `override_ranges = true`.

use std::str::FromStr;

use demand_gbt::{BoostParams, ForestParams, LossKind, TreeParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated search ranges for the booster, as (min, max).
pub const LEARNING_RATE_RANGE: (f64, f64) = (0.01, 0.3);
pub const MIN_SPLIT_LOSS_RANGE: (f64, f64) = (0.01, 0.2);
pub const MAX_DEPTH_RANGE: (usize, usize) = (5, 8);
pub const ROUNDS_RANGE: (usize, usize) = (1000, 5000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Ordinal,
    Hashing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Boosted trees.
    Gbt,
    /// Bagged random forest.
    Forest,
    /// Per-series exponential smoothing.
    Es,
}

impl FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordinal" => Ok(Encoding::Ordinal),
            "hashing" => Ok(Encoding::Hashing),
            _ => Err(Error::Config(format!(
                "encoding must be `ordinal` or `hashing`, got `{s}`"
            ))),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt" => Ok(ModelKind::Gbt),
            "forest" => Ok(ModelKind::Forest),
            "es" => Ok(ModelKind::Es),
            _ => Err(Error::Config(format!(
                "model must be `gbt`, `forest` or `es`, got `{s}`"
            ))),
        }
    }
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Ordinal => "ordinal",
            Encoding::Hashing => "hashing",
        }
    }
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Forest => "forest",
            ModelKind::Es => "es",
        }
    }
}

fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "poisson" => Ok(LossKind::PoissonLogLink),
        "squared" => Ok(LossKind::Squared),
        _ => Err(Error::Config(format!(
            "loss must be `poisson` or `squared`, got `{s}`"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Forecast horizon `h` in weeks.
    pub horizon: usize,
    /// Smoothing window `M`.
    pub window: usize,
    /// Spike cap multiplier `gamma`.
    pub gamma: f64,
    /// Season period `tau`.
    pub tau: usize,
    pub clusters: usize,
    pub hash_buckets: usize,
    pub encoding: Encoding,
    pub with_seasonality: bool,
    pub model: ModelKind,
    pub loss: LossKind,

    pub learning_rate: f64,
    pub min_split_loss: f64,
    pub max_depth: usize,
    pub rounds: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub max_delta_step: f64,
    pub early_stop_patience: usize,
    pub override_ranges: bool,

    pub forest_trees: usize,
    pub forest_max_depth: usize,
    pub forest_min_samples_leaf: usize,

    pub train_len: usize,
    pub valid_len: usize,
    pub test_len: usize,
    pub cold_start_filter: usize,
    pub segment_a: f64,
    pub segment_b: f64,
    /// Smoothing constant of the fake-zero repair fit.
    pub repair_alpha: f64,

    pub synth_products: usize,
    pub synth_categories: usize,
    pub synth_weeks: usize,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 6,
            window: 8,
            gamma: 3.0,
            tau: 52,
            clusters: 8,
            hash_buckets: 64,
            encoding: Encoding::Ordinal,
            with_seasonality: true,
            model: ModelKind::Gbt,
            loss: LossKind::PoissonLogLink,
            learning_rate: 0.1,
            min_split_loss: 0.05,
            max_depth: 6,
            rounds: 1000,
            lambda: 1.0,
            min_child_weight: 1.0,
            max_delta_step: 0.7,
            early_stop_patience: 50,
            override_ranges: false,
            forest_trees: 100,
            forest_max_depth: 32,
            forest_min_samples_leaf: 3,
            train_len: 170,
            valid_len: 10,
            test_len: 19,
            cold_start_filter: 6,
            segment_a: 0.1,
            segment_b: 0.4,
            repair_alpha: 0.3,
            synth_products: 500,
            synth_categories: 20,
            synth_weeks: 200,
            seed: 0,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

impl RunConfig {
    /// Parses a config document; unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`",
                    n + 1
                )));
            };
            c.set(key.trim(), value.trim().trim_matches('"'))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "horizon" => self.horizon = num(key, v)?,
            "window" => self.window = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "tau" => self.tau = num(key, v)?,
            "clusters" => self.clusters = num(key, v)?,
            "hash_buckets" => self.hash_buckets = num(key, v)?,
            "encoding" => self.encoding = v.parse()?,
            "with_seasonality" => self.with_seasonality = boolean(key, v)?,
            "model" => self.model = v.parse()?,
            "loss" => self.loss = parse_loss(v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "min_split_loss" => self.min_split_loss = num(key, v)?,
            "max_depth" => self.max_depth = num(key, v)?,
            "rounds" => self.rounds = num(key, v)?,
            "lambda" => self.lambda = num(key, v)?,
            "min_child_weight" => self.min_child_weight = num(key, v)?,
            "max_delta_step" => self.max_delta_step = num(key, v)?,
            "early_stop_patience" => self.early_stop_patience = num(key, v)?,
            "override_ranges" => self.override_ranges = boolean(key, v)?,
            "forest_trees" => self.forest_trees = num(key, v)?,
            "forest_max_depth" => self.forest_max_depth = num(key, v)?,
            "forest_min_samples_leaf" => self.forest_min_samples_leaf = num(key, v)?,
            "train_len" => self.train_len = num(key, v)?,
            "valid_len" => self.valid_len = num(key, v)?,
            "test_len" => self.test_len = num(key, v)?,
            "cold_start_filter" => self.cold_start_filter = num(key, v)?,
            "segment_a" => self.segment_a = num(key, v)?,
            "segment_b" => self.segment_b = num(key, v)?,
            "repair_alpha" => self.repair_alpha = num(key, v)?,
            "synth_products" => self.synth_products = num(key, v)?,
            "synth_categories" => self.synth_categories = num(key, v)?,
            "synth_weeks" => self.synth_weeks = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if self.tau < 2 {
            return fail("tau must be at least 2".into());
        }
        if self.hash_buckets < 2 {
            return fail("hash_buckets must be at least 2".into());
        }
        if self.window < 2 {
            return fail("window must be at least 2".into());
        }
        if !(self.gamma > 0.0) {
            return fail("gamma must be positive".into());
        }
        if self.clusters < 1 {
            return fail("clusters must be at least 1".into());
        }
        if self.train_len < 1 || self.valid_len < 1 || self.test_len < 1 {
            return fail("split lengths must be at least 1".into());
        }
        if !(0.0 < self.segment_a && self.segment_a < self.segment_b && self.segment_b < 1.0) {
            return fail("segment quantiles must satisfy 0 < a < b < 1".into());
        }
        if !(self.repair_alpha > 0.0 && self.repair_alpha <= 1.0) {
            return fail("repair_alpha must lie in (0, 1]".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail("learning_rate must lie in (0, 1]".into());
        }
        if self.lambda < 0.0 || self.min_split_loss < 0.0 || self.max_delta_step < 0.0 {
            return fail("lambda, min_split_loss and max_delta_step must be non-negative".into());
        }
        if self.override_ranges {
            return Ok(());
        }
        let ranged = |key: &str, v: f64, (lo, hi): (f64, f64)| {
            if v < lo || v > hi {
                Err(Error::Config(format!(
                    "{key} = {v} outside the validated search range [{lo}, {hi}]; \
                     set override_ranges = true to allow it"
                )))
            } else {
                Ok(())
            }
        };
        ranged("learning_rate", self.learning_rate, LEARNING_RATE_RANGE)?;
        ranged("min_split_loss", self.min_split_loss, MIN_SPLIT_LOSS_RANGE)?;
        let widen = |(a, b): (usize, usize)| (a as f64, b as f64);
        ranged("max_depth", self.max_depth as f64, widen(MAX_DEPTH_RANGE))?;
        ranged("rounds", self.rounds as f64, widen(ROUNDS_RANGE))?;
        Ok(())
    }

    pub fn boost_params(&self) -> BoostParams {
        BoostParams {
            loss: self.loss,
            learning_rate: self.learning_rate,
            rounds: self.rounds,
            early_stop_patience: self.early_stop_patience,
            tree: TreeParams {
                max_depth: self.max_depth,
                lambda: self.lambda,
                min_split_loss: self.min_split_loss,
                min_child_weight: self.min_child_weight,
                max_delta_step: match self.loss {
                    LossKind::PoissonLogLink => self.max_delta_step,
                    LossKind::Squared => 0.0,
                },
            },
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.forest_trees,
            max_depth: self.forest_max_depth,
            min_samples_leaf: self.forest_min_samples_leaf,
            bootstrap: true,
            feature_subsample: true,
        }
    }
}

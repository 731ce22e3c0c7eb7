//! End-to-end run: split, repair and smooth, seasonality, features, model,
//! forecasts, baseline and evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use demand_gbt::{train, train_forest, BoostedModel, ForestModel};
use serde::{Deserialize, Serialize};

use crate::baselines::{EsBaseline, EsForecast};
use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{
    cold_start_filter, evaluate, segment_products, temporal_split, write_report_csv, EvalRow,
    LabelledReport, MaeNormalization, Segment, Split, SplitSpec,
};
use crate::features::{CategoricalEncoder, FeatureContext, FeatureMatrix, Mode};
use crate::ingest::CovariateTable;
use crate::panel::{Catalog, ProductId, SalesPanel, WeekIndex};
use crate::preprocess::{preprocess, SmoothedPanel};
use crate::seasonal::SeasonalityModel;

pub const MODEL_FORMAT: &str = "demandcast-model";
pub const MODEL_VERSION: u32 = 1;

/// Raw inputs of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub panel: SalesPanel,
    pub catalog: Catalog,
    pub covariates: CovariateTable,
}

/// Everything fitted before the model: cleaned series, seasonality, encoder.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub repaired: SalesPanel,
    pub smoothed: SmoothedPanel,
    pub seasonality: Option<SeasonalityModel>,
    pub encoder: CategoricalEncoder,
}

impl Prepared {
    /// Repairs and smooths the whole panel; seasonality sees weeks before `fit_end` only.
    pub fn fit(inputs: &Inputs, config: &RunConfig, fit_end: WeekIndex) -> Result<Self> {
        inputs.catalog.check_covers(&inputs.panel)?;
        inputs.covariates.check_against(&inputs.panel)?;
        let (repaired, smoothed) = preprocess(
            &inputs.panel,
            config.repair_alpha,
            config.window,
            config.gamma,
        )
        .map_err(|e| e.in_stage("preprocess"))?;
        let seasonality = if config.with_seasonality {
            Some(
                SeasonalityModel::fit(
                    &smoothed,
                    &repaired,
                    &inputs.catalog,
                    config.tau,
                    config.clusters,
                    config.seed,
                    fit_end,
                )
                .map_err(|e| e.in_stage("seasonal"))?,
            )
        } else {
            None
        };
        let encoder =
            CategoricalEncoder::fit(&inputs.catalog, config.encoding, config.hash_buckets)
                .map_err(|e| e.in_stage("features"))?;
        Ok(Self {
            repaired,
            smoothed,
            seasonality,
            encoder,
        })
    }

    pub fn context<'a>(&'a self, inputs: &'a Inputs, config: &RunConfig) -> FeatureContext<'a> {
        FeatureContext {
            panel: &self.repaired,
            smoothed: &self.smoothed,
            catalog: &inputs.catalog,
            seasonality: self.seasonality.as_ref(),
            covariates: &inputs.covariates,
            encoder: &self.encoder,
            horizon: config.horizon,
            tau: config.tau,
        }
    }
}

/// A fitted forecaster.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Gbt(BoostedModel),
    Forest(ForestModel),
    /// Per-series exponential smoothing; needs no fitting.
    Es,
}

impl Predictor {
    pub fn fit(
        train_m: &FeatureMatrix,
        valid_m: &FeatureMatrix,
        config: &RunConfig,
    ) -> Result<Self> {
        let targets = train_m
            .targets
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("training rows carry no targets".into()))?;
        if train_m.is_empty() {
            return Err(Error::Data("no eligible training rows".into()));
        }
        match config.model {
            ModelKind::Gbt => {
                let valid = match (&valid_m.targets, valid_m.is_empty()) {
                    (Some(t), false) => Some((&valid_m.matrix, t.as_slice())),
                    _ => None,
                };
                Ok(Predictor::Gbt(train(
                    &train_m.matrix,
                    targets,
                    valid,
                    &config.boost_params(),
                )?))
            }
            ModelKind::Forest => Ok(Predictor::Forest(train_forest(
                &train_m.matrix,
                targets,
                &config.forest_params(),
                config.seed,
            )?)),
            ModelKind::Es => Ok(Predictor::Es),
        }
    }

    /// Forecasts for every row; the ES predictor reads `baseline` at each row's origin.
    pub fn forecast(&self, m: &FeatureMatrix, baseline: &EsBaseline) -> Result<Vec<f64>> {
        match self {
            Predictor::Gbt(b) => Ok(b.predict(&m.matrix)?),
            Predictor::Forest(f) => Ok(f.predict(&m.matrix)?),
            Predictor::Es => m
                .keys
                .iter()
                .map(|k| baseline.forecast(k.product, k.origin).map(|f| f.value))
                .collect(),
        }
    }

    pub fn best_round(&self) -> Option<usize> {
        match self {
            Predictor::Gbt(b) => Some(b.best_round()),
            _ => None,
        }
    }
}

/// On-disk model: predictor plus everything needed to rebuild features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub feature_names: Vec<String>,
    pub encoder: CategoricalEncoder,
    pub seasonality: Option<SeasonalityModel>,
    pub predictor: StoredPredictor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredPredictor {
    /// The booster's own versioned JSON document.
    Gbt {
        booster: serde_json::Value,
    },
    Forest {
        forest: ForestModel,
    },
    Es,
}

impl ModelDocument {
    pub fn new(
        config: &RunConfig,
        prepared: &Prepared,
        feature_names: Vec<String>,
        predictor: &Predictor,
    ) -> Result<Self> {
        let predictor = match predictor {
            Predictor::Gbt(b) => StoredPredictor::Gbt {
                booster: serde_json::from_str(&b.to_json()?)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            },
            Predictor::Forest(f) => StoredPredictor::Forest { forest: f.clone() },
            Predictor::Es => StoredPredictor::Es,
        };
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: config.clone(),
            feature_names,
            encoder: prepared.encoder.clone(),
            seasonality: prepared.seasonality.clone(),
            predictor,
        })
    }

    pub fn predictor(&self) -> Result<Predictor> {
        Ok(match &self.predictor {
            StoredPredictor::Gbt { booster } => Predictor::Gbt(BoostedModel::from_json(
                &serde_json::to_string(booster)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            )?),
            StoredPredictor::Forest { forest } => Predictor::Forest(forest.clone()),
            StoredPredictor::Es => Predictor::Es,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!(
                    "expected a {MODEL_FORMAT} v{MODEL_VERSION} document, got {} v{}",
                    doc.format, doc.version
                ),
            });
        }
        Ok(doc)
    }
}

/// One forecast on the test range.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub product: ProductId,
    pub origin: WeekIndex,
    pub target: WeekIndex,
    pub actual: f64,
    pub forecast: f64,
    pub baseline: EsForecast,
    pub price: f64,
    pub segment: Segment,
    pub life_at_target: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub model: String,
    pub configuration: String,
    pub config: RunConfig,
    pub feature_names: Vec<String>,
    pub train_rows: usize,
    pub valid_rows: usize,
    pub test_rows: usize,
    pub evaluated_rows: usize,
    pub best_round: Option<usize>,
    pub trees: Option<usize>,
    pub seasonal_patterns: usize,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub split: Split,
    pub prepared: Prepared,
    pub predictor: Predictor,
    pub feature_names: Vec<String>,
    pub test_rows: Vec<TestRow>,
    /// The model's report, then the ES baseline's (unless the model is ES).
    pub reports: Vec<LabelledReport>,
    pub manifest: Manifest,
}

pub fn configuration_label(config: &RunConfig) -> &'static str {
    if config.with_seasonality {
        "seasonality"
    } else {
        "no_seasonality"
    }
}

fn rows_for(
    ctx: &FeatureContext,
    targets: std::ops::Range<WeekIndex>,
    h: usize,
) -> Result<FeatureMatrix> {
    let start = targets.start.saturating_sub(h);
    let end = targets.end.saturating_sub(h).max(start);
    ctx.build_rows(start..end, Mode::Train)
}

/// Full run on in-memory inputs.
pub fn run(inputs: &Inputs, config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let h = config.horizon;
    let split = temporal_split(
        inputs.panel.weeks(),
        &SplitSpec {
            train_end: config.train_len,
            valid_len: config.valid_len,
            test_len: config.test_len,
            horizon: h,
        },
    )
    .map_err(|e| e.in_stage("split"))?;
    let prepared = Prepared::fit(inputs, config, split.train.end)?;
    let ctx = prepared.context(inputs, config);

    let feature_stage = |e: Error| e.in_stage("features");
    let train_m = rows_for(&ctx, split.train.clone(), h).map_err(feature_stage)?;
    let valid_m = rows_for(&ctx, split.valid.clone(), h).map_err(feature_stage)?;
    let test_m = rows_for(&ctx, split.test.clone(), h).map_err(feature_stage)?;

    let predictor = Predictor::fit(&train_m, &valid_m, config).map_err(|e| e.in_stage("train"))?;
    let baseline =
        EsBaseline::new(&prepared.repaired, &inputs.catalog).map_err(|e| e.in_stage("predict"))?;
    let forecasts = predictor
        .forecast(&test_m, &baseline)
        .map_err(|e| e.in_stage("predict"))?;

    let segments = segment_products(
        &prepared.repaired,
        &inputs.catalog,
        split.train.clone(),
        config.segment_a,
        config.segment_b,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    let actuals = test_m.targets.as_deref().unwrap_or_default();
    let mut test_rows = Vec::with_capacity(test_m.len());
    for (r, key) in test_m.keys.iter().enumerate() {
        let product = prepared.repaired.products()[key.product].clone();
        test_rows.push(TestRow {
            price: inputs.catalog.price_of(&product)?,
            segment: segments[&product],
            baseline: baseline
                .forecast(key.product, key.origin)
                .map_err(|e| e.in_stage("predict"))?,
            product,
            origin: key.origin,
            target: key.target,
            actual: actuals[r],
            forecast: forecasts[r],
            life_at_target: test_m.life_at_target[r],
        });
    }

    let kept = cold_start_filter(&test_m.life_at_target, config.cold_start_filter);
    let eval_rows = |baseline: bool| -> Vec<EvalRow> {
        kept.iter()
            .map(|&r| {
                let t = &test_rows[r];
                EvalRow {
                    product: t.product.clone(),
                    week: t.target,
                    actual: t.actual,
                    forecast: if baseline {
                        t.baseline.value
                    } else {
                        t.forecast
                    },
                    price: t.price,
                    segment: t.segment,
                    life_at_target: t.life_at_target,
                }
            })
            .collect()
    };
    let configuration = configuration_label(config);
    let mut reports = vec![LabelledReport {
        model: config.model.name().into(),
        configuration: configuration.into(),
        encoding: config.encoding.name().into(),
        report: evaluate(&eval_rows(false), MaeNormalization::Forecast)
            .map_err(|e| e.in_stage("evaluate"))?,
    }];
    if config.model != ModelKind::Es {
        reports.push(LabelledReport {
            model: "es".into(),
            configuration: "baseline".into(),
            encoding: "none".into(),
            report: evaluate(&eval_rows(true), MaeNormalization::Forecast)
                .map_err(|e| e.in_stage("evaluate"))?,
        });
    }

    let feature_names = ctx.column_names();
    let manifest = Manifest {
        model: config.model.name().into(),
        configuration: configuration.into(),
        config: config.clone(),
        feature_names: feature_names.clone(),
        train_rows: train_m.len(),
        valid_rows: valid_m.len(),
        test_rows: test_m.len(),
        evaluated_rows: kept.len(),
        best_round: predictor.best_round(),
        trees: match &predictor {
            Predictor::Gbt(b) => Some(b.trees().len()),
            Predictor::Forest(f) => Some(f.trees().len()),
            Predictor::Es => None,
        },
        seasonal_patterns: prepared
            .seasonality
            .as_ref()
            .map_or(0, |s| s.patterns.len()),
    };
    Ok(RunOutput {
        split,
        prepared,
        predictor,
        feature_names,
        test_rows,
        reports,
        manifest,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `product_id,week,forecast` rows.
pub fn write_predictions(
    rows: impl IntoIterator<Item = (ProductId, WeekIndex, f64)>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(["product_id", "week", "forecast"])
        .map_err(to_err)?;
    for (p, week, f) in rows {
        w.write_record([p.0, week.to_string(), f.to_string()])
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a predictions file written by [`write_predictions`].
pub fn read_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<(ProductId, WeekIndex), f64>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let parse = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| parse(1, e.to_string()))?;
    if header != vec!["product_id", "week", "forecast"] {
        return Err(parse(
            1,
            "expected header `product_id,week,forecast`".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let week: WeekIndex = rec[1]
            .parse()
            .map_err(|_| parse(line, format!("invalid week `{}`", &rec[1])))?;
        let f: f64 = rec[2]
            .parse()
            .map_err(|_| parse(line, format!("invalid forecast `{}`", &rec[2])))?;
        if out
            .insert((ProductId(rec[0].to_string()), week), f)
            .is_some()
        {
            return Err(parse(line, "duplicate forecast key".into()));
        }
    }
    Ok(out)
}

impl RunOutput {
    /// Writes `model.json`, `predictions.csv`, `report.csv`, `manifest.json`
    /// and, with seasonality, `seasonality.csv`.
    pub fn write(&self, config: &RunConfig, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let doc = ModelDocument::new(
            config,
            &self.prepared,
            self.feature_names.clone(),
            &self.predictor,
        )?;
        write_text(&dir.join("model.json"), &doc.to_json()?)?;
        write_predictions(
            self.test_rows
                .iter()
                .map(|r| (r.product.clone(), r.target, r.forecast)),
            dir.join("predictions.csv"),
        )?;
        write_report_csv(&self.reports, dir.join("report.csv"))?;
        write_text(&dir.join("manifest.json"), &self.manifest.to_json()?)?;
        if let Some(s) = &self.prepared.seasonality {
            s.write_csv(dir.join("seasonality.csv"))?;
        }
        Ok(())
    }
}

/// Forecasts from a saved model for every product listed at `origin`.
pub fn predict_with(
    doc: &ModelDocument,
    inputs: &Inputs,
    origin: WeekIndex,
) -> Result<Vec<(ProductId, WeekIndex, f64)>> {
    let config = &doc.config;
    let (repaired, smoothed) = preprocess(
        &inputs.panel,
        config.repair_alpha,
        config.window,
        config.gamma,
    )
    .map_err(|e| e.in_stage("preprocess"))?;
    let prepared = Prepared {
        repaired,
        smoothed,
        seasonality: doc.seasonality.clone(),
        encoder: doc.encoder.clone(),
    };
    let ctx = prepared.context(inputs, config);
    if ctx.column_names() != doc.feature_names {
        return Err(Error::Data(
            "inputs produce a different feature schema than the saved model".into(),
        )
        .in_stage("features"));
    }
    let m = ctx
        .build_matrix(origin, Mode::Predict)
        .map_err(|e| e.in_stage("features"))?;
    let baseline =
        EsBaseline::new(&prepared.repaired, &inputs.catalog).map_err(|e| e.in_stage("predict"))?;
    let forecasts = doc
        .predictor()?
        .forecast(&m, &baseline)
        .map_err(|e| e.in_stage("predict"))?;
    Ok(m.keys
        .iter()
        .zip(forecasts)
        .map(|(k, f)| (prepared.repaired.products()[k.product].clone(), k.target, f))
        .collect())
}

/// Scores saved forecasts against the repaired panel, alongside the ES
/// baseline made `horizon` weeks before each target.
pub fn evaluate_predictions(
    forecasts: &BTreeMap<(ProductId, WeekIndex), f64>,
    inputs: &Inputs,
    config: &RunConfig,
) -> Result<Vec<LabelledReport>> {
    let (repaired, _) = preprocess(
        &inputs.panel,
        config.repair_alpha,
        config.window,
        config.gamma,
    )
    .map_err(|e| e.in_stage("preprocess"))?;
    let weeks = repaired.weeks();
    let mut actuals = BTreeMap::new();
    for (p, w) in forecasts.keys() {
        if let (Ok(i), true) = (repaired.index_of(p), *w < weeks) {
            actuals.insert((p.clone(), *w), f64::from(repaired.series(i).units[*w]));
        }
    }
    let joined =
        crate::eval::join_actuals(forecasts, &actuals).map_err(|e| e.in_stage("evaluate"))?;
    let train_end = config.train_len.min(weeks);
    let segments = segment_products(
        &repaired,
        &inputs.catalog,
        0..train_end,
        config.segment_a,
        config.segment_b,
    )
    .map_err(|e| e.in_stage("evaluate"))?;
    let baseline =
        EsBaseline::new(&repaired, &inputs.catalog).map_err(|e| e.in_stage("evaluate"))?;
    let mut model_rows = Vec::new();
    let mut es_rows = Vec::new();
    for (p, week, actual, forecast) in joined {
        let i = repaired.index_of(&p)?;
        let s = repaired.series(i);
        let life = s.on_sale_weeks_before(week + 1);
        if life < config.cold_start_filter {
            continue;
        }
        let row = EvalRow {
            price: inputs.catalog.price_of(&p)?,
            segment: segments[&p],
            product: p,
            week,
            actual,
            forecast,
            life_at_target: life,
        };
        if let Some(origin) = week.checked_sub(config.horizon) {
            es_rows.push(EvalRow {
                forecast: baseline.forecast(i, origin)?.value,
                ..row.clone()
            });
        }
        model_rows.push(row);
    }
    let stage = |e: Error| e.in_stage("evaluate");
    let mut reports = vec![LabelledReport {
        model: "predictions".into(),
        configuration: "-".into(),
        encoding: "-".into(),
        report: evaluate(&model_rows, MaeNormalization::Forecast).map_err(stage)?,
    }];
    if es_rows.len() == model_rows.len() && !es_rows.is_empty() {
        reports.push(LabelledReport {
            model: "es".into(),
            configuration: "baseline".into(),
            encoding: "none".into(),
            report: evaluate(&es_rows, MaeNormalization::Forecast).map_err(stage)?,
        });
    }
    Ok(reports)
}

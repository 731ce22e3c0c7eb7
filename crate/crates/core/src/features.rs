//! Categorical encodings, covariate imputation and assembly of the global
//! feature matrix.
//!
//! One row describes a product at an origin week `t` and is labelled with the
//! repaired sales at `t + h`. Features only look at data up to `t`, except
//! covariates tagged as known in advance, which are read at `t + h`.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use demand_gbt::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::Encoding;
use crate::error::{Error, Result};
use crate::ingest::{CovariateTable, Predictability};
use crate::panel::{Catalog, CatalogEntry, ProductId, SalesPanel, WeekIndex};
use crate::preprocess::SmoothedPanel;
use crate::seasonal::{trend_features, SeasonalityModel};

/// Number of lagged smoothed values per row.
pub const LAGS: usize = 8;

/// Distinct values mapped to `0..n` in lexicographic order; unseen values get `n`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalMap {
    ids: BTreeMap<String, u32>,
}

impl OrdinalMap {
    pub fn encode(&self, value: &str) -> u32 {
        self.ids
            .get(value)
            .copied()
            .unwrap_or(self.ids.len() as u32)
    }

    pub fn get(&self, value: &str) -> Option<u32> {
        self.ids.get(value).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn ordinal_encode<'a>(values: impl IntoIterator<Item = &'a str>) -> OrdinalMap {
    let mut distinct: Vec<&str> = values.into_iter().collect();
    distinct.sort_unstable();
    distinct.dedup();
    OrdinalMap {
        ids: distinct
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v.to_string(), i as u32))
            .collect(),
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn hash_encode(value: &str, buckets: usize) -> Result<u64> {
    if buckets < 2 {
        return Err(Error::InvalidArgument(format!(
            "hash encoding needs at least 2 buckets, got {buckets}"
        )));
    }
    Ok(fnv1a64(value.as_bytes()) % buckets as u64)
}

/// Encodes the category and every catalog attribute into one numeric column each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CategoricalEncoder {
    Ordinal {
        columns: BTreeMap<String, OrdinalMap>,
        attributes: Vec<String>,
    },
    Hashing {
        buckets: usize,
        attributes: Vec<String>,
    },
}

impl CategoricalEncoder {
    pub fn fit(catalog: &Catalog, encoding: Encoding, buckets: usize) -> Result<Self> {
        let attributes = catalog.attribute_names().to_vec();
        match encoding {
            Encoding::Hashing => {
                hash_encode("", buckets)?;
                Ok(CategoricalEncoder::Hashing {
                    buckets,
                    attributes,
                })
            }
            Encoding::Ordinal => {
                let mut columns = BTreeMap::new();
                columns.insert(
                    "category".to_string(),
                    ordinal_encode(catalog.entries().values().map(|e| e.category.0.as_str())),
                );
                for name in &attributes {
                    columns.insert(
                        name.clone(),
                        ordinal_encode(
                            catalog
                                .entries()
                                .values()
                                .map(|e| e.attributes.get(name).map_or("", String::as_str)),
                        ),
                    );
                }
                Ok(CategoricalEncoder::Ordinal {
                    columns,
                    attributes,
                })
            }
        }
    }

    fn attributes(&self) -> &[String] {
        match self {
            CategoricalEncoder::Ordinal { attributes, .. }
            | CategoricalEncoder::Hashing { attributes, .. } => attributes,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        std::iter::once("category".to_string())
            .chain(self.attributes().iter().map(|a| format!("attr_{a}")))
            .collect()
    }

    fn encode_one(&self, column: &str, value: &str) -> f64 {
        match self {
            CategoricalEncoder::Ordinal { columns, .. } => columns
                .get(column)
                .map_or(0.0, |m| f64::from(m.encode(value))),
            CategoricalEncoder::Hashing { buckets, .. } => {
                (fnv1a64(value.as_bytes()) % *buckets as u64) as f64
            }
        }
    }

    pub fn encode(&self, entry: &CatalogEntry) -> Vec<f64> {
        let mut out = vec![self.encode_one("category", &entry.category.0)];
        for name in self.attributes() {
            let v = entry.attributes.get(name).map_or("", String::as_str);
            out.push(self.encode_one(name, v));
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Covariate values for `product` at `target`, known at `origin`, in
/// [`CovariateTable::feature_names`] order.
///
/// Known-future covariates pass through. Unpredictable week-level covariates
/// take the mean of earlier observations at the same week of year;
/// unpredictable product-level ones take the mean of the product's past
/// values. NaN when nothing is available.
pub fn impute_future_covariates(
    table: &CovariateTable,
    product: &ProductId,
    origin: WeekIndex,
    target: WeekIndex,
    tau: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(table.temporal.len() + table.mixed.len());
    for cov in table.temporal.values() {
        out.push(match cov.predictability {
            Predictability::KnownFuture => cov.values.get(&target).copied().unwrap_or(f64::NAN),
            Predictability::Unpredictable => {
                let pos = target % tau;
                mean(
                    (pos..=origin)
                        .step_by(tau)
                        .filter_map(|w| cov.values.get(&w).copied()),
                )
            }
        });
    }
    for cov in table.mixed.values() {
        let Some(weeks) = cov.values.get(product) else {
            out.push(f64::NAN);
            continue;
        };
        out.push(match cov.predictability {
            Predictability::KnownFuture => weeks.get(&target).copied().unwrap_or(f64::NAN),
            Predictability::Unpredictable => mean(weeks.range(..=origin).map(|(_, &v)| v)),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Labelled rows whose target week lies inside the panel and is listed.
    Train,
    /// Unlabelled rows for every product listed at the origin.
    Predict,
}

/// Everything a row is built from.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    /// Repaired sales; targets come from here.
    pub panel: &'a SalesPanel,
    pub smoothed: &'a SmoothedPanel,
    pub catalog: &'a Catalog,
    /// `None` drops the seasonal columns.
    pub seasonality: Option<&'a SeasonalityModel>,
    pub covariates: &'a CovariateTable,
    pub encoder: &'a CategoricalEncoder,
    pub horizon: usize,
    pub tau: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RowKey {
    /// Index into the panel's product list.
    pub product: usize,
    pub origin: WeekIndex,
    pub target: WeekIndex,
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub keys: Vec<RowKey>,
    pub matrix: Matrix,
    /// Repaired sales at the target week; `None` in predict mode.
    pub targets: Option<Vec<f64>>,
    /// Listed weeks from launch up to and including the target week.
    pub life_at_target: Vec<usize>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Writes the row keys and every named column; missing cells are empty.
    pub fn write_csv(&self, panel: &SalesPanel, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(to_err)?;
        let mut header = vec![
            "product_id".to_string(),
            "origin".into(),
            "target_week".into(),
        ];
        header.extend(self.matrix.names().iter().cloned());
        header.push("target".into());
        w.write_record(&header).map_err(to_err)?;
        for (r, key) in self.keys.iter().enumerate() {
            let mut rec = vec![
                panel.products()[key.product].0.clone(),
                key.origin.to_string(),
                key.target.to_string(),
            ];
            rec.extend(self.matrix.row(r).iter().map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    v.to_string()
                }
            }));
            rec.push(
                self.targets
                    .as_ref()
                    .map_or(String::new(), |t| t[r].to_string()),
            );
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl FeatureContext<'_> {
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..LAGS).map(|k| format!("lag_{k}")).collect();
        names.extend(
            ["x_mean_4", "x_mean_8", "annual_slope", "local_slope"]
                .iter()
                .map(|s| s.to_string()),
        );
        if self.seasonality.is_some() {
            names.extend(
                ["season_target", "season_origin", "season_ratio"]
                    .iter()
                    .map(|s| s.to_string()),
            );
        }
        names.extend(self.encoder.column_names());
        names.extend(
            self.covariates
                .feature_names()
                .into_iter()
                .map(|k| format!("cov_{k}")),
        );
        names.push("weeks_since_launch".into());
        names.push("price".into());
        names
    }

    fn row(&self, i: usize, origin: WeekIndex, out: &mut Vec<f64>) -> Result<()> {
        let s = self.panel.series(i);
        let x = &self.smoothed.x[i];
        let first = s.first_on_sale().unwrap_or(origin);
        let lags: Vec<f64> = (0..LAGS)
            .map(|k| match origin.checked_sub(k) {
                Some(w) if w >= first => x[w],
                _ => f64::NAN,
            })
            .collect();
        out.extend_from_slice(&lags);
        out.push(mean(lags[..4].iter().copied().filter(|v| !v.is_nan())));
        out.push(mean(lags.iter().copied().filter(|v| !v.is_nan())));
        let (annual, local) = trend_features(x, &s.on_sale, origin);
        out.push(annual);
        out.push(local);

        let id = &self.panel.products()[i];
        let entry = self.catalog.get(id)?;
        let target = origin + self.horizon;
        if let Some(model) = self.seasonality {
            let pattern = model.pattern_for_category(&entry.category);
            let at = |w: usize| pattern[w % pattern.len()];
            let (st, so) = (at(target), at(origin));
            out.push(st);
            out.push(so);
            out.push(if so > 0.0 { st / so } else { f64::NAN });
        }
        out.extend(self.encoder.encode(entry));
        out.extend(impute_future_covariates(
            self.covariates,
            id,
            origin,
            target,
            self.tau,
        ));
        out.push((origin - first) as f64);
        out.push(entry.price);
        Ok(())
    }

    /// Rows for every origin in `origins` that passes the mode's eligibility rule.
    pub fn build_rows(&self, origins: Range<WeekIndex>, mode: Mode) -> Result<FeatureMatrix> {
        let weeks = self.panel.weeks();
        if origins.end > weeks {
            return Err(Error::WeekOutOfRange {
                week: origins.end.saturating_sub(1),
                weeks,
            });
        }
        let names = self.column_names();
        let mut values = Vec::new();
        let mut keys = Vec::new();
        let mut targets = Vec::new();
        let mut life = Vec::new();
        for (i, s) in self.panel.all_series().iter().enumerate() {
            for origin in origins.clone() {
                let target = origin + self.horizon;
                let eligible = s.on_sale[origin]
                    && match mode {
                        Mode::Train => target < weeks && s.on_sale[target],
                        Mode::Predict => true,
                    };
                if !eligible {
                    continue;
                }
                self.row(i, origin, &mut values)?;
                keys.push(RowKey {
                    product: i,
                    origin,
                    target,
                });
                if mode == Mode::Train {
                    targets.push(f64::from(s.units[target]));
                }
                let upto = (target + 1).min(weeks);
                // Weeks past the panel end count as listed.
                life.push(s.on_sale_weeks_before(upto) + target.saturating_sub(weeks - 1));
            }
        }
        let n = keys.len();
        Ok(FeatureMatrix {
            keys,
            matrix: Matrix::new(names, n, values)?,
            targets: (mode == Mode::Train).then_some(targets),
            life_at_target: life,
        })
    }

    /// Train mode: origins `0..=t_end`, requiring `t_end + h < T`.
    /// Predict mode: products listed at `t_end`.
    pub fn build_matrix(&self, t_end: WeekIndex, mode: Mode) -> Result<FeatureMatrix> {
        let weeks = self.panel.weeks();
        match mode {
            Mode::Train => {
                if t_end + self.horizon >= weeks {
                    return Err(Error::WeekOutOfRange {
                        week: t_end + self.horizon,
                        weeks,
                    });
                }
                self.build_rows(0..t_end + 1, mode)
            }
            Mode::Predict => {
                if t_end >= weeks {
                    return Err(Error::WeekOutOfRange { week: t_end, weeks });
                }
                self.build_rows(t_end..t_end + 1, mode)
            }
        }
    }
}

//! Price-weighted error metrics, temporal splits, sales segments and the
//! evaluation report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{Catalog, ProductId, SalesPanel, WeekIndex};

fn check_lengths(y: &[f64], yhat: &[f64], prices: &[f64]) -> Result<()> {
    if y.len() != yhat.len() || y.len() != prices.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} actuals, {} forecasts, {} prices",
            y.len(),
            yhat.len(),
            prices.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("no rows to score".into()));
    }
    Ok(())
}

/// `sqrt(mean(p^2 (y - yhat)^2))`.
pub fn weighted_rmse(y: &[f64], yhat: &[f64], prices: &[f64]) -> Result<f64> {
    check_lengths(y, yhat, prices)?;
    let sse: f64 = y
        .iter()
        .zip(yhat)
        .zip(prices)
        .map(|((a, f), p)| (p * (a - f)).powi(2))
        .sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// What the absolute error is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaeNormalization {
    /// `sum(p * yhat)`.
    #[default]
    Forecast,
    /// `sum(p * y)`.
    Actual,
}

/// `sum(p |y - yhat|) / sum(p yhat)`.
pub fn weighted_mae(y: &[f64], yhat: &[f64], prices: &[f64]) -> Result<f64> {
    weighted_mae_with(y, yhat, prices, MaeNormalization::Forecast)
}

pub fn weighted_mae_with(
    y: &[f64],
    yhat: &[f64],
    prices: &[f64],
    norm: MaeNormalization,
) -> Result<f64> {
    check_lengths(y, yhat, prices)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, f), p) in y.iter().zip(yhat).zip(prices) {
        num += p * (a - f).abs();
        den += p * match norm {
            MaeNormalization::Forecast => f,
            MaeNormalization::Actual => a,
        };
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument(
            "weighted volume in the MAE denominator is zero".into(),
        ));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_end: WeekIndex,
    pub valid_len: usize,
    pub test_len: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<WeekIndex>,
    pub valid: Range<WeekIndex>,
    pub test: Range<WeekIndex>,
}

/// Contiguous `[0, train_end)`, then `valid_len`, then `test_len` weeks.
pub fn temporal_split(weeks: usize, spec: &SplitSpec) -> Result<Split> {
    if spec.train_end == 0 || spec.valid_len == 0 || spec.test_len == 0 || spec.horizon == 0 {
        return Err(Error::InvalidArgument(
            "split lengths and horizon must be at least 1".into(),
        ));
    }
    let end = spec.train_end + spec.valid_len + spec.test_len;
    if end > weeks {
        return Err(Error::InvalidArgument(format!(
            "split of {} + {} + {} weeks exceeds the {weeks}-week panel",
            spec.train_end, spec.valid_len, spec.test_len
        )));
    }
    let valid_end = spec.train_end + spec.valid_len;
    Ok(Split {
        train: 0..spec.train_end,
        valid: spec.train_end..valid_end,
        test: valid_end..end,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Segment {
    A,
    B,
    C,
}

impl Segment {
    pub fn name(self) -> &'static str {
        match self {
            Segment::A => "A",
            Segment::B => "B",
            Segment::C => "C",
        }
    }
}

/// Ranks products by price times sales over `weeks`, highest first, ties by
/// id. The top `qa` share goes to A, up to `qb` to B, the rest to C; with at
/// least three products every segment is non-empty.
pub fn segment_products(
    panel: &SalesPanel,
    catalog: &Catalog,
    weeks: Range<WeekIndex>,
    qa: f64,
    qb: f64,
) -> Result<BTreeMap<ProductId, Segment>> {
    let n = panel.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "segmenting needs at least 3 products, got {n}"
        )));
    }
    if !(0.0 < qa && qa < qb && qb < 1.0) {
        return Err(Error::InvalidArgument(
            "segment quantiles must satisfy 0 < a < b < 1".into(),
        ));
    }
    let end = weeks.end.min(panel.weeks());
    let mut ranked: Vec<(f64, &ProductId)> = panel
        .products()
        .iter()
        .zip(panel.all_series())
        .map(|(id, s)| {
            let volume: f64 = s.units[weeks.start.min(end)..end]
                .iter()
                .map(|&u| f64::from(u))
                .sum();
            Ok((catalog.price_of(id)? * volume, id))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let n_a = ((qa * n as f64).round() as usize).clamp(1, n - 2);
    let n_ab = ((qb * n as f64).round() as usize).clamp(n_a + 1, n - 1);
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (_, id))| {
            let seg = if rank < n_a {
                Segment::A
            } else if rank < n_ab {
                Segment::B
            } else {
                Segment::C
            };
            (id.clone(), seg)
        })
        .collect())
}

/// Indices of rows whose product had at least `min_life` listed weeks by the
/// target week.
pub fn cold_start_filter(life_at_target: &[usize], min_life: usize) -> Vec<usize> {
    (0..life_at_target.len())
        .filter(|&r| life_at_target[r] >= min_life)
        .collect()
}

/// Label of the life-length bucket: `life_lt8`, `life_8` .. `life_12`, `life_ge13`.
pub fn life_bucket(life: usize) -> String {
    match life {
        0..=7 => "life_lt8".into(),
        8..=12 => format!("life_{life}"),
        _ => "life_ge13".into(),
    }
}

/// One scored forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub product: ProductId,
    pub week: WeekIndex,
    pub actual: f64,
    pub forecast: f64,
    pub price: f64,
    pub segment: Segment,
    pub life_at_target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMetrics {
    pub group: String,
    pub rows: usize,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `all`, then segments, then life buckets; empty groups are omitted.
    pub groups: Vec<GroupMetrics>,
}

impl EvalReport {
    pub fn group(&self, name: &str) -> Option<&GroupMetrics> {
        self.groups.iter().find(|g| g.group == name)
    }
}

fn metrics(group: String, rows: &[&EvalRow], norm: MaeNormalization) -> Result<GroupMetrics> {
    let y: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    let f: Vec<f64> = rows.iter().map(|r| r.forecast).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.price).collect();
    Ok(GroupMetrics {
        rows: rows.len(),
        rmse: weighted_rmse(&y, &f, &p)?,
        mae: weighted_mae_with(&y, &f, &p, norm)?,
        group,
    })
}

pub fn evaluate(rows: &[EvalRow], norm: MaeNormalization) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows to evaluate".into()));
    }
    let all: Vec<&EvalRow> = rows.iter().collect();
    let mut groups = vec![metrics("all".into(), &all, norm)?];
    for seg in [Segment::A, Segment::B, Segment::C] {
        let sub: Vec<&EvalRow> = rows.iter().filter(|r| r.segment == seg).collect();
        if !sub.is_empty() {
            groups.push(metrics(seg.name().into(), &sub, norm)?);
        }
    }
    let mut buckets: BTreeMap<usize, Vec<&EvalRow>> = BTreeMap::new();
    for r in rows {
        buckets
            .entry(r.life_at_target.clamp(7, 13))
            .or_default()
            .push(r);
    }
    for (life, sub) in buckets {
        groups.push(metrics(life_bucket(life), &sub, norm)?);
    }
    Ok(EvalReport { groups })
}

/// Pairs forecasts keyed by `(product, week)` with actuals; every forecast
/// key must have an actual and vice versa.
pub fn join_actuals(
    forecasts: &BTreeMap<(ProductId, WeekIndex), f64>,
    actuals: &BTreeMap<(ProductId, WeekIndex), f64>,
) -> Result<Vec<(ProductId, WeekIndex, f64, f64)>> {
    if let Some(k) = forecasts.keys().find(|k| !actuals.contains_key(k)) {
        return Err(Error::Data(format!(
            "forecast for `{}` week {} has no actual",
            k.0, k.1
        )));
    }
    if let Some(k) = actuals.keys().find(|k| !forecasts.contains_key(k)) {
        return Err(Error::Data(format!(
            "actual for `{}` week {} has no forecast",
            k.0, k.1
        )));
    }
    Ok(forecasts
        .iter()
        .map(|((p, w), f)| (p.clone(), *w, actuals[&(p.clone(), *w)], *f))
        .collect())
}

/// A report with the labels it is filed under.
#[derive(Debug, Clone)]
pub struct LabelledReport {
    pub model: String,
    pub configuration: String,
    pub encoding: String,
    pub report: EvalReport,
}

pub fn write_report_csv(reports: &[LabelledReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record([
        "model",
        "configuration",
        "encoding",
        "group",
        "rows",
        "rmse",
        "mae",
    ])
    .map_err(to_err)?;
    for r in reports {
        for g in &r.report.groups {
            w.write_record([
                r.model.as_str(),
                r.configuration.as_str(),
                r.encoding.as_str(),
                g.group.as_str(),
                &g.rows.to_string(),
                &g.rmse.to_string(),
                &g.mae.to_string(),
            ])
            .map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Model by group table with RMSE and MAE columns.
pub fn format_table(reports: &[LabelledReport]) -> String {
    let mut groups: Vec<&str> = Vec::new();
    for r in reports {
        for g in &r.report.groups {
            if !groups.contains(&g.group.as_str()) {
                groups.push(&g.group);
            }
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<32}", "model");
    for g in &groups {
        let _ = write!(out, " {:>12} {:>8}", format!("{g}.rmse"), "mae");
    }
    out.push('\n');
    for r in reports {
        let label = format!("{} {} {}", r.model, r.configuration, r.encoding);
        let _ = write!(out, "{label:<32}");
        for g in &groups {
            match r.report.group(g) {
                Some(m) => {
                    let _ = write!(out, " {:>12.4} {:>8.4}", m.rmse, m.mae);
                }
                None => {
                    let _ = write!(out, " {:>12} {:>8}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

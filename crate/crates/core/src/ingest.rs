//! File loaders and writers for sales, catalog, covariates and configuration.
//!
//! Schemas:
//!
//! - `sales.csv`: `product_id,week,units,on_sale,in_stock`
//! - `catalog.csv`: `product_id,category_id,price` plus any attribute columns
//! - `covariates.csv`: `scope,key,week,product_id,value,predictable`
//!
//! A `(product, week)` pair absent from the sales file is an unlisted,
//! in-stock week with zero sales.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::panel::{Catalog, CatalogEntry, CategoryId, ProductId, ProductSeries, SalesPanel};

pub const SALES_HEADER: [&str; 5] = ["product_id", "week", "units", "on_sale", "in_stock"];
pub const CATALOG_HEADER: [&str; 3] = ["product_id", "category_id", "price"];
pub const COVARIATES_HEADER: [&str; 6] =
    ["scope", "key", "week", "product_id", "value", "predictable"];

/// Whether a covariate's value at the target week is available at forecast time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictability {
    KnownFuture,
    Unpredictable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCovariate {
    pub predictability: Predictability,
    pub values: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedCovariate {
    pub predictability: Predictability,
    pub values: BTreeMap<ProductId, BTreeMap<usize, f64>>,
}

/// Week-level (temporal) and product-week (mixed) covariates by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTable {
    pub temporal: BTreeMap<String, TemporalCovariate>,
    pub mixed: BTreeMap<String, MixedCovariate>,
}

impl CovariateTable {
    pub fn insert_temporal(
        &mut self,
        key: &str,
        predictability: Predictability,
        week: usize,
        value: f64,
    ) -> Result<()> {
        let entry = self
            .temporal
            .entry(key.to_string())
            .or_insert_with(|| TemporalCovariate {
                predictability,
                values: BTreeMap::new(),
            });
        if entry.predictability != predictability {
            return Err(Error::Data(format!(
                "covariate `{key}` mixes predictability tags"
            )));
        }
        if entry.values.insert(week, value).is_some() {
            return Err(Error::Data(format!(
                "duplicate temporal covariate `{key}` at week {week}"
            )));
        }
        Ok(())
    }

    pub fn insert_mixed(
        &mut self,
        key: &str,
        predictability: Predictability,
        product: ProductId,
        week: usize,
        value: f64,
    ) -> Result<()> {
        let entry = self
            .mixed
            .entry(key.to_string())
            .or_insert_with(|| MixedCovariate {
                predictability,
                values: BTreeMap::new(),
            });
        if entry.predictability != predictability {
            return Err(Error::Data(format!(
                "covariate `{key}` mixes predictability tags"
            )));
        }
        if entry
            .values
            .entry(product.clone())
            .or_default()
            .insert(week, value)
            .is_some()
        {
            return Err(Error::Data(format!(
                "duplicate mixed covariate `{key}` for `{product}` at week {week}"
            )));
        }
        Ok(())
    }

    /// Every mixed entry must reference a panel product. Only known-future
    /// covariates may extend past the last panel week.
    pub fn check_against(&self, panel: &SalesPanel) -> Result<()> {
        for (key, cov) in &self.mixed {
            for (product, weeks) in &cov.values {
                panel.index_of(product)?;
                if cov.predictability == Predictability::KnownFuture {
                    continue;
                }
                if let Some((&w, _)) = weeks.range(panel.weeks()..).next() {
                    return Err(Error::Data(format!(
                        "covariate `{key}` for `{product}` at week {w} beyond the panel"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Column names in feature order: temporal keys, then mixed keys.
    pub fn feature_names(&self) -> Vec<String> {
        self.temporal
            .keys()
            .chain(self.mixed.keys())
            .cloned()
            .collect()
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn records(
    path: &Path,
    expected: &[&str],
    exact: bool,
) -> Result<(Vec<String>, Vec<(u64, StringRecord)>)> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let prefix_ok = header.len() >= expected.len()
        && header.iter().zip(expected).all(|(a, b)| a == b)
        && (!exact || header.len() == expected.len());
    if !prefix_ok {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok((header, out))
}

fn flag(path: &Path, line: u64, field: &str, value: &str) -> Result<bool> {
    match value {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(parse_err(
            path,
            line,
            format!("`{field}` must be 0 or 1, got `{value}`"),
        )),
    }
}

fn week(path: &Path, line: u64, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid week `{value}`")))
}

pub fn load_sales(path: impl AsRef<Path>) -> Result<SalesPanel> {
    let path = path.as_ref();
    let (_, rows) = records(path, &SALES_HEADER, true)?;
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no sales rows"));
    }
    struct Row {
        week: usize,
        units: u32,
        on_sale: bool,
        in_stock: bool,
    }
    let mut by_product: BTreeMap<ProductId, BTreeMap<usize, Row>> = BTreeMap::new();
    let mut weeks = 0;
    for (line, rec) in rows {
        let product = ProductId(rec[0].to_string());
        if product.0.is_empty() {
            return Err(parse_err(path, line, "empty product_id"));
        }
        let w = week(path, line, &rec[1])?;
        let units: i64 = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid units `{}`", &rec[2])))?;
        if units < 0 {
            return Err(parse_err(path, line, format!("negative units {units}")));
        }
        let units = u32::try_from(units)
            .map_err(|_| parse_err(path, line, format!("units {units} too large")))?;
        let on_sale = flag(path, line, "on_sale", &rec[3])?;
        let in_stock = flag(path, line, "in_stock", &rec[4])?;
        if units > 0 && !on_sale {
            return Err(parse_err(path, line, "positive units on an unlisted week"));
        }
        weeks = weeks.max(w + 1);
        let row = Row {
            week: w,
            units,
            on_sale,
            in_stock,
        };
        if by_product
            .entry(product.clone())
            .or_default()
            .insert(w, row)
            .is_some()
        {
            return Err(parse_err(
                path,
                line,
                format!("duplicate row for `{product}` week {w}"),
            ));
        }
    }
    let entries = by_product
        .into_iter()
        .map(|(id, rows)| {
            let mut s = ProductSeries::unlisted(weeks);
            for r in rows.values() {
                s.units[r.week] = r.units;
                s.on_sale[r.week] = r.on_sale;
                s.in_stock[r.week] = r.in_stock;
            }
            (id, s)
        })
        .collect();
    SalesPanel::new(weeks, entries)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let (header, rows) = records(path, &CATALOG_HEADER, false)?;
    let attribute_names: Vec<String> = header[CATALOG_HEADER.len()..].to_vec();
    let mut entries = BTreeMap::new();
    for (line, rec) in rows {
        let product = ProductId(rec[0].to_string());
        let category = rec[1].to_string();
        if category.is_empty() {
            return Err(parse_err(
                path,
                line,
                format!("`{product}` has no category"),
            ));
        }
        let price: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid price `{}`", &rec[2])))?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(parse_err(path, line, format!("non-positive price {price}")));
        }
        let attributes = attribute_names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                (
                    name.clone(),
                    rec.get(CATALOG_HEADER.len() + k).unwrap_or("").to_string(),
                )
            })
            .collect();
        let entry = CatalogEntry {
            category: CategoryId(category),
            price,
            attributes,
        };
        if entries.insert(product.clone(), entry).is_some() {
            return Err(parse_err(
                path,
                line,
                format!("duplicate product `{product}`"),
            ));
        }
    }
    Catalog::new(entries, attribute_names)
}

pub fn load_covariates(path: impl AsRef<Path>) -> Result<CovariateTable> {
    let path = path.as_ref();
    let (_, rows) = records(path, &COVARIATES_HEADER, true)?;
    let mut table = CovariateTable::default();
    for (line, rec) in rows {
        let key = &rec[1];
        if key.is_empty() {
            return Err(parse_err(path, line, "empty covariate key"));
        }
        let w = week(path, line, &rec[2])?;
        let value: f64 = rec[4]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid value `{}`", &rec[4])))?;
        let predictability = if flag(path, line, "predictable", &rec[5])? {
            Predictability::KnownFuture
        } else {
            Predictability::Unpredictable
        };
        let result = match &rec[0] {
            "temporal" => {
                if !rec[3].is_empty() {
                    return Err(parse_err(path, line, "temporal row with a product_id"));
                }
                table.insert_temporal(key, predictability, w, value)
            }
            "mixed" => {
                if rec[3].is_empty() {
                    return Err(parse_err(path, line, "mixed row without product_id"));
                }
                table.insert_mixed(key, predictability, ProductId(rec[3].to_string()), w, value)
            }
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("scope must be `temporal` or `mixed`, got `{other}`"),
                ))
            }
        };
        result.map_err(|e| parse_err(path, line, e.to_string()))?;
    }
    Ok(table)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(WriterBuilder::new().from_writer(file))
}

fn write_all<W: Write>(
    path: &Path,
    wtr: &mut csv::Writer<W>,
    rows: Vec<Vec<String>>,
) -> Result<()> {
    for row in rows {
        wtr.write_record(&row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

fn b(v: bool) -> String {
    if v { "1" } else { "0" }.to_string()
}

/// Writes every product-week so that reloading reproduces the panel.
pub fn write_sales(panel: &SalesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut rows = vec![SALES_HEADER.iter().map(|s| s.to_string()).collect()];
    for (id, s) in panel.products().iter().zip(panel.all_series()) {
        for t in 0..panel.weeks() {
            rows.push(vec![
                id.0.clone(),
                t.to_string(),
                s.units[t].to_string(),
                b(s.on_sale[t]),
                b(s.in_stock[t]),
            ]);
        }
    }
    write_all(path, &mut csv_writer(path)?, rows)
}

pub fn write_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut header: Vec<String> = CATALOG_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(catalog.attribute_names().iter().cloned());
    let mut rows = vec![header];
    for (id, e) in catalog.entries() {
        let mut row = vec![id.0.clone(), e.category.0.clone(), e.price.to_string()];
        for name in catalog.attribute_names() {
            row.push(e.attributes.get(name).cloned().unwrap_or_default());
        }
        rows.push(row);
    }
    write_all(path, &mut csv_writer(path)?, rows)
}

pub fn write_covariates(table: &CovariateTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tag = |p: Predictability| b(p == Predictability::KnownFuture);
    let mut rows = vec![COVARIATES_HEADER.iter().map(|s| s.to_string()).collect()];
    for (key, cov) in &table.temporal {
        for (w, v) in &cov.values {
            rows.push(vec![
                "temporal".into(),
                key.clone(),
                w.to_string(),
                String::new(),
                v.to_string(),
                tag(cov.predictability),
            ]);
        }
    }
    for (key, cov) in &table.mixed {
        for (product, weeks) in &cov.values {
            for (w, v) in weeks {
                rows.push(vec![
                    "mixed".into(),
                    key.clone(),
                    w.to_string(),
                    product.0.clone(),
                    v.to_string(),
                    tag(cov.predictability),
                ]);
            }
        }
    }
    write_all(path, &mut csv_writer(path)?, rows)
}

//! Products, weekly sales panels and the product catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-based week offset from the panel origin.
pub type WeekIndex = usize;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProductId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryId(pub String);

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProductId {
    fn from(s: &str) -> Self {
        ProductId(s.to_string())
    }
}

impl From<&str> for CategoryId {
    fn from(s: &str) -> Self {
        CategoryId(s.to_string())
    }
}

/// Weekly record of one product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSeries {
    pub units: Vec<u32>,
    /// Product is listed that week.
    pub on_sale: Vec<bool>,
    /// Product is in stock that week.
    pub in_stock: Vec<bool>,
}

impl ProductSeries {
    /// Unlisted, in stock, zero sales for `weeks` weeks.
    pub fn unlisted(weeks: usize) -> Self {
        Self {
            units: vec![0; weeks],
            on_sale: vec![false; weeks],
            in_stock: vec![true; weeks],
        }
    }

    pub fn first_on_sale(&self) -> Option<WeekIndex> {
        self.on_sale.iter().position(|&s| s)
    }

    pub fn last_on_sale(&self) -> Option<WeekIndex> {
        self.on_sale.iter().rposition(|&s| s)
    }

    /// Inclusive span between the first and last listed week.
    pub fn life_length(&self) -> usize {
        match (self.first_on_sale(), self.last_on_sale()) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }

    /// Listed weeks strictly before `week`.
    pub fn on_sale_weeks_before(&self, week: WeekIndex) -> usize {
        self.on_sale[..week.min(self.on_sale.len())]
            .iter()
            .filter(|&&s| s)
            .count()
    }
}

/// Weekly unit sales for a set of products over a shared horizon of `weeks`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SalesPanel {
    weeks: usize,
    products: Vec<ProductId>,
    index: BTreeMap<ProductId, usize>,
    series: Vec<ProductSeries>,
}

impl SalesPanel {
    /// Builds a panel; products are stored in id order.
    pub fn new(weeks: usize, entries: Vec<(ProductId, ProductSeries)>) -> Result<Self> {
        let mut sorted: BTreeMap<ProductId, ProductSeries> = BTreeMap::new();
        for (id, series) in entries {
            if series.units.len() != weeks
                || series.on_sale.len() != weeks
                || series.in_stock.len() != weeks
            {
                return Err(Error::Data(format!(
                    "series for `{id}` does not span {weeks} weeks"
                )));
            }
            if let Some(t) = (0..weeks).find(|&t| series.units[t] > 0 && !series.on_sale[t]) {
                return Err(Error::Data(format!(
                    "`{id}` sells {} units in week {t} while not listed",
                    series.units[t]
                )));
            }
            if sorted.insert(id.clone(), series).is_some() {
                return Err(Error::Data(format!("duplicate product `{id}`")));
            }
        }
        let products: Vec<ProductId> = sorted.keys().cloned().collect();
        let index = products
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Ok(Self {
            weeks,
            products,
            index,
            series: sorted.into_values().collect(),
        })
    }

    pub fn weeks(&self) -> usize {
        self.weeks
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn products(&self) -> &[ProductId] {
        &self.products
    }

    pub fn series(&self, i: usize) -> &ProductSeries {
        &self.series[i]
    }

    pub fn all_series(&self) -> &[ProductSeries] {
        &self.series
    }

    pub fn index_of(&self, id: &ProductId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownProduct(id.0.clone()))
    }

    pub fn series_of(&self, id: &ProductId) -> Result<&ProductSeries> {
        Ok(&self.series[self.index_of(id)?])
    }

    /// Weeks between the first and last listed week, inclusive; 0 if never listed.
    pub fn life_length(&self, id: &ProductId) -> Result<usize> {
        Ok(self.series_of(id)?.life_length())
    }

    /// Sales `y[0..=t]`.
    pub fn slice_history(&self, id: &ProductId, t: WeekIndex) -> Result<&[u32]> {
        if t >= self.weeks {
            return Err(Error::WeekOutOfRange {
                week: t,
                weeks: self.weeks,
            });
        }
        Ok(&self.series_of(id)?.units[..=t])
    }

    /// Copy with the unit counts of product `i` replaced.
    pub(crate) fn with_units(&self, replacements: Vec<(usize, Vec<u32>)>) -> Self {
        let mut out = self.clone();
        for (i, units) in replacements {
            out.series[i].units = units;
        }
        out
    }

    /// Copy restricted to weeks `0..weeks`.
    pub fn truncated(&self, weeks: usize) -> Result<Self> {
        if weeks == 0 || weeks > self.weeks {
            return Err(Error::WeekOutOfRange {
                week: weeks,
                weeks: self.weeks,
            });
        }
        let entries = self
            .products
            .iter()
            .zip(&self.series)
            .map(|(p, s)| {
                (
                    p.clone(),
                    ProductSeries {
                        units: s.units[..weeks].to_vec(),
                        on_sale: s.on_sale[..weeks].to_vec(),
                        in_stock: s.in_stock[..weeks].to_vec(),
                    },
                )
            })
            .collect();
        Self::new(weeks, entries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub category: CategoryId,
    pub price: f64,
    /// Longitudinal categorical attributes by column name.
    pub attributes: BTreeMap<String, String>,
}

/// Product → category, price and attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    entries: BTreeMap<ProductId, CatalogEntry>,
    attribute_names: Vec<String>,
}

impl Catalog {
    pub fn new(
        entries: BTreeMap<ProductId, CatalogEntry>,
        attribute_names: Vec<String>,
    ) -> Result<Self> {
        for (id, e) in &entries {
            if e.category.0.is_empty() {
                return Err(Error::Data(format!("`{id}` has no category")));
            }
            if !(e.price > 0.0 && e.price.is_finite()) {
                return Err(Error::Data(format!(
                    "`{id}` has non-positive price {}",
                    e.price
                )));
            }
        }
        Ok(Self {
            entries,
            attribute_names,
        })
    }

    pub fn get(&self, id: &ProductId) -> Result<&CatalogEntry> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::UnknownProduct(id.0.clone()))
    }

    pub fn category_of(&self, id: &ProductId) -> Result<&CategoryId> {
        Ok(&self.get(id)?.category)
    }

    pub fn price_of(&self, id: &ProductId) -> Result<f64> {
        Ok(self.get(id)?.price)
    }

    pub fn entries(&self) -> &BTreeMap<ProductId, CatalogEntry> {
        &self.entries
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn categories(&self) -> BTreeSet<CategoryId> {
        self.entries.values().map(|e| e.category.clone()).collect()
    }

    /// Number of distinct categories, `K`.
    pub fn n_categories(&self) -> usize {
        self.categories().len()
    }

    pub fn members(&self, category: &CategoryId) -> Vec<&ProductId> {
        self.entries
            .iter()
            .filter(|(_, e)| &e.category == category)
            .map(|(p, _)| p)
            .collect()
    }

    /// Every panel product must have a catalog entry.
    pub fn check_covers(&self, panel: &SalesPanel) -> Result<()> {
        match panel
            .products()
            .iter()
            .find(|p| !self.entries.contains_key(p))
        {
            Some(p) => Err(Error::Data(format!("`{p}` missing from catalog"))),
            None => Ok(()),
        }
    }
}

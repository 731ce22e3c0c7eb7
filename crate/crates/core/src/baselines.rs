//! Simple exponential smoothing, used both as the per-series benchmark and as
//! the fitter behind fake-zero repair.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::panel::{Catalog, CategoryId, SalesPanel, WeekIndex};

pub const DEFAULT_ALPHAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_HOLDOUT: usize = 4;
/// Used when a series is too short for grid selection.
pub const FALLBACK_ALPHA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsState {
    alpha: f64,
    level: f64,
}

impl EsState {
    pub fn new(alpha: f64, first: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            alpha,
            level: first,
        })
    }

    pub fn update(&mut self, y: f64) {
        self.level = self.alpha * y + (1.0 - self.alpha) * self.level;
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn level(&self) -> f64 {
        self.level
    }
}

/// Final smoothed level; the forecast is flat, so `_h` does not enter.
pub fn es_fit_forecast(series: &[f64], alpha: f64, _h: usize) -> Result<f64> {
    let (&first, rest) = series
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    let mut state = EsState::new(alpha, first)?;
    for &y in rest {
        state.update(y);
    }
    Ok(state.level())
}

/// Alpha with the lowest squared one-step error over the trailing `holdout`
/// points; ties go to the smaller alpha.
pub fn es_grid_select(series: &[f64], alphas: &[f64], holdout: usize) -> f64 {
    let n = series.len();
    if n <= holdout || holdout == 0 || alphas.is_empty() {
        return FALLBACK_ALPHA;
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, FALLBACK_ALPHA);
    for alpha in sorted {
        let Ok(mut state) = EsState::new(alpha, series[0]) else {
            continue;
        };
        let mut sse = 0.0;
        for (t, &y) in series.iter().enumerate().skip(1) {
            if t >= n - holdout {
                sse += (y - state.level()).powi(2);
            }
            state.update(y);
        }
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    best.1
}

/// Where an ES baseline forecast came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastSource {
    Series,
    /// Fewer than two observations: mean sales of the product's category.
    CategoryMean,
    /// Category has no history either.
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsForecast {
    pub value: f64,
    pub source: ForecastSource,
}

/// Per-product ES benchmark over a (repaired) panel with category fallbacks.
#[derive(Debug)]
pub struct EsBaseline<'a> {
    panel: &'a SalesPanel,
    categories: Vec<CategoryId>,
    /// Per category: cumulative (sum, count) over listed product-weeks up to each week.
    cumulative: BTreeMap<CategoryId, Vec<(f64, f64)>>,
    global: Vec<(f64, f64)>,
}

impl<'a> EsBaseline<'a> {
    pub fn new(panel: &'a SalesPanel, catalog: &Catalog) -> Result<Self> {
        catalog.check_covers(panel)?;
        let weeks = panel.weeks();
        let categories: Vec<CategoryId> = panel
            .products()
            .iter()
            .map(|p| catalog.category_of(p).cloned())
            .collect::<Result<_>>()?;
        let mut per_week: BTreeMap<CategoryId, Vec<(f64, f64)>> = BTreeMap::new();
        let mut global = vec![(0.0, 0.0); weeks];
        for (s, c) in panel.all_series().iter().zip(&categories) {
            let acc = per_week
                .entry(c.clone())
                .or_insert_with(|| vec![(0.0, 0.0); weeks]);
            for t in (0..weeks).filter(|&t| s.on_sale[t]) {
                acc[t].0 += f64::from(s.units[t]);
                acc[t].1 += 1.0;
                global[t].0 += f64::from(s.units[t]);
                global[t].1 += 1.0;
            }
        }
        let prefix = |v: &mut Vec<(f64, f64)>| {
            for t in 1..v.len() {
                v[t].0 += v[t - 1].0;
                v[t].1 += v[t - 1].1;
            }
        };
        per_week.values_mut().for_each(prefix);
        prefix(&mut global);
        Ok(Self {
            panel,
            categories,
            cumulative: per_week,
            global,
        })
    }

    /// Forecast for product index `i` made at week `origin`.
    pub fn forecast(&self, i: usize, origin: WeekIndex) -> Result<EsForecast> {
        if origin >= self.panel.weeks() {
            return Err(Error::WeekOutOfRange {
                week: origin,
                weeks: self.panel.weeks(),
            });
        }
        let s = self.panel.series(i);
        let history: Vec<f64> = (0..=origin)
            .filter(|&t| s.on_sale[t])
            .map(|t| f64::from(s.units[t]))
            .collect();
        if history.len() >= 2 {
            let alpha = es_grid_select(&history, &DEFAULT_ALPHAS, DEFAULT_HOLDOUT);
            return Ok(EsForecast {
                value: es_fit_forecast(&history, alpha, 0)?,
                source: ForecastSource::Series,
            });
        }
        let (sum, count) = self.cumulative[&self.categories[i]][origin];
        if count > 0.0 {
            return Ok(EsForecast {
                value: sum / count,
                source: ForecastSource::CategoryMean,
            });
        }
        let (sum, count) = self.global[origin];
        Ok(EsForecast {
            value: if count > 0.0 { sum / count } else { 0.0 },
            source: ForecastSource::GlobalMean,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CatalogEntry, ProductId, ProductSeries};

    #[test]
    fn fit_forecast_examples() {
        assert_eq!(es_fit_forecast(&[3.0, 7.0, 2.0], 1.0, 1).unwrap(), 2.0);
        assert_eq!(es_fit_forecast(&[5.0; 6], 0.37, 4).unwrap(), 5.0);
        assert_eq!(es_fit_forecast(&[0.0, 4.0], 0.5, 1).unwrap(), 2.0);
        assert!(es_fit_forecast(&[], 0.5, 1).is_err());
        assert!(es_fit_forecast(&[1.0], 0.0, 1).is_err());
    }

    #[test]
    fn grid_select_examples() {
        assert_eq!(es_grid_select(&[4.0; 12], &DEFAULT_ALPHAS, 4), 0.1);
        let shift: Vec<f64> = (0..16).map(|t| if t < 10 { 2.0 } else { 20.0 }).collect();
        assert_eq!(es_grid_select(&shift, &DEFAULT_ALPHAS, 4), 0.9);
        assert_eq!(
            es_grid_select(&[1.0, 2.0, 3.0, 4.0], &DEFAULT_ALPHAS, 4),
            0.3
        );
    }

    #[test]
    fn grid_select_matches_exhaustive_scan() {
        let series = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0];
        let mut scores = Vec::new();
        for &a in &DEFAULT_ALPHAS {
            let mut sse = 0.0;
            for t in series.len() - 4..series.len() {
                let f = es_fit_forecast(&series[..t], a, 1).unwrap();
                sse += (series[t] - f).powi(2);
            }
            scores.push((sse, a));
        }
        let best = scores
            .iter()
            .fold((f64::INFINITY, 0.0), |b, &s| if s.0 < b.0 { s } else { b });
        assert_eq!(es_grid_select(&series, &DEFAULT_ALPHAS, 4), best.1);
    }

    fn panel() -> (SalesPanel, Catalog) {
        let mk = |units: Vec<u32>, on: Vec<bool>| ProductSeries {
            in_stock: vec![true; units.len()],
            units,
            on_sale: on,
        };
        let panel = SalesPanel::new(
            4,
            vec![
                ("a".into(), mk(vec![2, 4, 6, 8], vec![true; 4])),
                (
                    "b".into(),
                    mk(vec![0, 0, 0, 3], vec![false, false, false, true]),
                ),
                (
                    "c".into(),
                    mk(vec![0, 0, 1, 1], vec![false, false, true, true]),
                ),
            ],
        )
        .unwrap();
        let entry = |c: &str| CatalogEntry {
            category: c.into(),
            price: 1.0,
            attributes: Default::default(),
        };
        let catalog = Catalog::new(
            [
                (ProductId::from("a"), entry("x")),
                (ProductId::from("b"), entry("x")),
                (ProductId::from("c"), entry("y")),
            ]
            .into_iter()
            .collect(),
            vec![],
        )
        .unwrap();
        (panel, catalog)
    }

    #[test]
    fn short_history_falls_back_to_category_mean() {
        let (panel, catalog) = panel();
        let es = EsBaseline::new(&panel, &catalog).unwrap();
        // b has one observation at week 3; category x has a's 2,4,6,8 and b's 3.
        let f = es.forecast(1, 3).unwrap();
        assert_eq!(f.source, ForecastSource::CategoryMean);
        assert_eq!(f.value, 23.0 / 5.0);
        // c at week 2 has one observation and category y only has itself.
        let f = es.forecast(2, 2).unwrap();
        assert_eq!((f.source, f.value), (ForecastSource::CategoryMean, 1.0));
        assert_eq!(es.forecast(0, 3).unwrap().source, ForecastSource::Series);
        assert!(es.forecast(0, 4).is_err());
    }

    #[test]
    fn empty_category_uses_global_mean() {
        let (panel, catalog) = panel();
        let es = EsBaseline::new(&panel, &catalog).unwrap();
        // Category y has nothing listed at week 0; globally only a sold (2 units).
        let f = es.forecast(2, 0).unwrap();
        assert_eq!((f.source, f.value), (ForecastSource::GlobalMean, 2.0));
    }
}

//! Synthetic e-commerce panels with known ground truth.
//!
//! Weekly sales of a listed product are Poisson with intensity
//!
//! ```text
//! lambda = level * season_c((t + phase) mod tau) * lifecycle(t) * promo * event
//! ```
//!
//! Category curves are perturbed copies of a few shared families, so
//! categories cluster. Stockouts force zero sales and clear the stock flag.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{self, CovariateTable, Predictability};
use crate::panel::{Catalog, CatalogEntry, CategoryId, ProductId, ProductSeries, SalesPanel};
use crate::preprocess::WeekMask;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_products: usize,
    pub n_categories: usize,
    pub weeks: usize,
    pub tau: usize,
    /// Distinct seasonal shapes the categories are drawn from.
    pub n_families: usize,
    /// Replace every seasonal curve by a constant.
    pub flat_seasonality: bool,
    /// Range of the relative standard deviation of each family curve.
    pub season_strength: (f64, f64),
    /// Calendar offset of week 0 within the year.
    pub phase: usize,
    /// Median weekly level and log-scale spread across products.
    pub level_median: f64,
    pub level_log_sd: f64,
    /// Log-scale spread of the per-category level effect.
    pub category_log_sd: f64,
    pub n_brands: usize,
    pub price_median: f64,
    pub price_log_sd: f64,
    pub lifetime_median: f64,
    pub lifetime_log_sd: f64,
    pub min_lifetime: usize,
    /// Strength of the launch ramp and the drift over a product's life; 0 disables both.
    pub lifecycle: f64,
    pub promo_prob: f64,
    pub promo_multiplier: (f64, f64),
    pub stockout_prob: f64,
    pub stockout_max_run: usize,
    /// Week of year with a known sales event, and its multiplier.
    pub event_week: usize,
    pub event_multiplier: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_products: 500,
            n_categories: 20,
            weeks: 200,
            tau: 52,
            n_families: 4,
            flat_seasonality: false,
            season_strength: (0.4, 0.7),
            phase: 0,
            level_median: 20.0,
            level_log_sd: 0.6,
            category_log_sd: 0.3,
            n_brands: 6,
            price_median: 20.0,
            price_log_sd: 0.6,
            lifetime_median: 30.0,
            lifetime_log_sd: 0.5,
            min_lifetime: 8,
            lifecycle: 1.0,
            promo_prob: 0.06,
            promo_multiplier: (1.5, 3.0),
            stockout_prob: 0.03,
            stockout_max_run: 3,
            event_week: 47,
            event_multiplier: 1.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn from_config(c: &RunConfig) -> Self {
        Self {
            n_products: c.synth_products,
            n_categories: c.synth_categories,
            weeks: c.synth_weeks,
            tau: c.tau,
            seed: c.seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.n_products == 0 || self.n_categories == 0 || self.n_families == 0 {
            return fail("product, category and family counts must be positive");
        }
        if self.n_brands == 0 {
            return fail("at least one brand is needed");
        }
        if self.weeks < 8 || self.tau < 2 {
            return fail("needs at least 8 weeks and tau >= 2");
        }
        if self.min_lifetime == 0 || self.stockout_max_run == 0 {
            return fail("minimum lifetime and stockout run must be positive");
        }
        for p in [self.promo_prob, self.stockout_prob] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        let (lo, hi) = self.season_strength;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return fail("seasonal strength range must satisfy 0 < lo <= hi");
        }
        let (lo, hi) = self.promo_multiplier;
        if !(lo >= 1.0 && hi >= lo) {
            return fail("promotion multiplier range must satisfy 1 <= lo <= hi");
        }
        let positive = [
            self.level_median,
            self.price_median,
            self.lifetime_median,
            self.event_multiplier,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return fail("medians and multipliers must be positive");
        }
        let spreads = [
            self.level_log_sd,
            self.category_log_sd,
            self.price_log_sd,
            self.lifetime_log_sd,
            self.lifecycle,
        ];
        if spreads.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return fail("spreads must be non-negative");
        }
        Ok(())
    }
}

/// What the generator actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Poisson intensity; 0 on unlisted weeks.
    pub lambda: Vec<Vec<f64>>,
    /// Seasonal multiplier per category indexed by `t mod tau`, mean 1.
    pub category_curves: BTreeMap<CategoryId, Vec<f64>>,
    pub family_of: BTreeMap<CategoryId, usize>,
    pub promo: WeekMask,
    pub stockout: WeekMask,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub panel: SalesPanel,
    pub catalog: Catalog,
    pub covariates: CovariateTable,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    center: f64,
    concentration: f64,
    amplitude: f64,
}

fn curve_from(bumps: &[Bump], tau: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (0..tau)
        .map(|w| {
            1.0 + bumps
                .iter()
                .map(|b| {
                    let angle = TAU * (w as f64 - b.center) / tau as f64;
                    b.amplitude * (b.concentration * (angle.cos() - 1.0)).exp()
                })
                .sum::<f64>()
        })
        .collect();
    normalize(&mut c);
    c
}

fn normalize(c: &mut [f64]) {
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    c.iter_mut().for_each(|v| *v /= mean);
}

/// Rescales deviations from 1 so the relative standard deviation is
/// `strength`, with a floor that keeps every week positive.
fn with_strength(mut c: Vec<f64>, strength: f64) -> Vec<f64> {
    let sd = (c.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
    if sd > 0.0 {
        c.iter_mut()
            .for_each(|v| *v = (1.0 + (*v - 1.0) * strength / sd).max(0.15));
        normalize(&mut c);
    }
    c
}

fn dist_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("synthetic spec: {e}"))
}

pub fn generate_panel(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t_len, tau) = (spec.weeks, spec.tau);

    let families: Vec<(Vec<Bump>, f64)> = (0..spec.n_families)
        .map(|_| {
            let n = rng.random_range(1..=3);
            let bumps = (0..n)
                .map(|_| Bump {
                    center: rng.random_range(0.0..tau as f64),
                    concentration: rng.random_range(1.0..6.0),
                    amplitude: rng.random_range(0.5..2.0),
                })
                .collect();
            let (lo, hi) = spec.season_strength;
            let strength = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            (bumps, strength)
        })
        .collect();

    let category_ids: Vec<CategoryId> = (0..spec.n_categories)
        .map(|c| CategoryId(format!("c{:02}", c + 1)))
        .collect();
    let cat_effect = Normal::new(0.0, spec.category_log_sd).map_err(dist_err)?;
    let mut category_curves = BTreeMap::new();
    let mut family_of = BTreeMap::new();
    let mut category_level = Vec::new();
    for (c, id) in category_ids.iter().enumerate() {
        let fam = c % spec.n_families;
        let curve = if spec.flat_seasonality {
            vec![1.0; tau]
        } else {
            let (bumps, strength) = &families[fam];
            let jittered: Vec<Bump> = bumps
                .iter()
                .map(|b| Bump {
                    center: b.center + rng.random_range(-1.0..1.0),
                    concentration: b.concentration,
                    amplitude: b.amplitude * rng.random_range(0.9..1.1),
                })
                .collect();
            let base = with_strength(curve_from(&jittered, tau), *strength);
            (0..tau).map(|w| base[(w + spec.phase) % tau]).collect()
        };
        category_curves.insert(id.clone(), curve);
        family_of.insert(id.clone(), fam);
        category_level.push(cat_effect.sample(&mut rng).exp());
    }

    let brand_effect: Vec<f64> = (0..spec.n_brands)
        .map(|_| rng.random_range(0.7..1.4))
        .collect();
    let level_dist = LogNormal::new(spec.level_median.ln(), spec.level_log_sd).map_err(dist_err)?;
    let price_dist = LogNormal::new(spec.price_median.ln(), spec.price_log_sd).map_err(dist_err)?;
    let life_dist =
        LogNormal::new(spec.lifetime_median.ln(), spec.lifetime_log_sd).map_err(dist_err)?;

    let mut covariates = CovariateTable::default();
    for t in 0..t_len {
        let event = f64::from(u8::from(t % tau == spec.event_week % tau));
        covariates.insert_temporal("event", Predictability::KnownFuture, t, event)?;
        let temperature =
            12.0 + 10.0 * (TAU * t as f64 / tau as f64).sin() + rng.random_range(-2.0..2.0);
        covariates.insert_temporal(
            "temperature",
            Predictability::Unpredictable,
            t,
            (temperature * 10.0).round() / 10.0,
        )?;
    }

    let mut entries = Vec::with_capacity(spec.n_products);
    let mut catalog_entries = BTreeMap::new();
    let mut lambda_all = Vec::with_capacity(spec.n_products);
    let mut promo_all = Vec::with_capacity(spec.n_products);
    let mut stockout_all = Vec::with_capacity(spec.n_products);
    let width = spec.n_products.to_string().len().max(4);

    for i in 0..spec.n_products {
        let id = ProductId(format!("p{:0width$}", i + 1));
        let c = i % spec.n_categories;
        let brand = rng.random_range(0..spec.n_brands);
        let price = (price_dist.sample(&mut rng) * 100.0).round().max(1.0) / 100.0;
        let level = level_dist.sample(&mut rng)
            * category_level[c]
            * brand_effect[brand]
            * (price / spec.price_median).powf(-0.3);
        let launch = rng.random_range(0..=t_len - 8);
        let life = (life_dist.sample(&mut rng).round() as usize).max(spec.min_lifetime);
        let end = (launch + life).min(t_len);
        let drift = spec.lifecycle * rng.random_range(-0.3..0.3);
        let curve = &category_curves[&category_ids[c]];

        let mut s = ProductSeries::unlisted(t_len);
        let mut lambda = vec![0.0; t_len];
        let mut promo = vec![false; t_len];
        let mut stockout = vec![false; t_len];
        let mut sold = false;
        let mut run_left = 0usize;
        for t in launch..end {
            s.on_sale[t] = true;
            let age = (t - launch) as f64;
            let lifecycle = (1.0 - 0.5 * spec.lifecycle * (-age / 2.0).exp())
                * (1.0 + drift * (age / life as f64 - 0.5));
            let mut lam = level * curve[t % tau] * lifecycle.max(0.05);
            if t % tau == spec.event_week % tau {
                lam *= spec.event_multiplier;
            }
            if rng.random_bool(spec.promo_prob) {
                promo[t] = true;
                let (lo, hi) = spec.promo_multiplier;
                lam *= if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                };
            }
            lambda[t] = lam;
            if run_left == 0 && sold && rng.random_bool(spec.stockout_prob) {
                run_left = rng.random_range(1..=spec.stockout_max_run);
            }
            let draw = Poisson::new(lam).map_err(dist_err)?.sample(&mut rng) as u32;
            if run_left > 0 {
                run_left -= 1;
                stockout[t] = true;
                s.in_stock[t] = false;
            } else {
                s.units[t] = draw;
                sold |= draw > 0;
            }
            covariates.insert_mixed(
                "promo",
                Predictability::KnownFuture,
                id.clone(),
                t,
                f64::from(u8::from(promo[t])),
            )?;
            let paid = if promo[t] { price * 0.8 } else { price };
            covariates.insert_mixed(
                "price_paid",
                Predictability::Unpredictable,
                id.clone(),
                t,
                (paid * 100.0).round() / 100.0,
            )?;
        }
        catalog_entries.insert(
            id.clone(),
            CatalogEntry {
                category: category_ids[c].clone(),
                price,
                attributes: [("brand".to_string(), format!("b{}", brand + 1))]
                    .into_iter()
                    .collect(),
            },
        );
        entries.push((id, s));
        lambda_all.push(lambda);
        promo_all.push(promo);
        stockout_all.push(stockout);
    }

    Ok(SynthData {
        panel: SalesPanel::new(t_len, entries)?,
        catalog: Catalog::new(catalog_entries, vec!["brand".to_string()])?,
        covariates,
        truth: GroundTruth {
            lambda: lambda_all,
            category_curves,
            family_of,
            promo: promo_all,
            stockout: stockout_all,
        },
    })
}

impl SynthData {
    /// Writes `sales.csv`, `catalog.csv`, `covariates.csv` and `ground_truth.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ingest::write_sales(&self.panel, dir.join("sales.csv"))?;
        ingest::write_catalog(&self.catalog, dir.join("catalog.csv"))?;
        ingest::write_covariates(&self.covariates, dir.join("covariates.csv"))?;
        let path = dir.join("ground_truth.csv");
        let to_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(&path).map_err(to_err)?;
        w.write_record(["product_id", "week", "lambda", "promo", "stockout"])
            .map_err(to_err)?;
        for (i, id) in self.panel.products().iter().enumerate() {
            for t in 0..self.panel.weeks() {
                w.write_record([
                    id.0.clone(),
                    t.to_string(),
                    self.truth.lambda[i][t].to_string(),
                    u8::from(self.truth.promo[i][t]).to_string(),
                    u8::from(self.truth.stockout[i][t]).to_string(),
                ])
                .map_err(to_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

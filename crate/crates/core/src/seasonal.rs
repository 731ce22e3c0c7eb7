//! Standardized yearly curves, category seasonality, weighted k-means
//! clustering of the category curves, and trend features.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Catalog, CategoryId, ProductId, SalesPanel};
use crate::preprocess::SmoothedPanel;

/// Product-years with fewer listed weeks are not used for curves.
pub const MIN_YEAR_WEEKS: usize = 4;
const MAX_LLOYD_ITERATIONS: usize = 100;
const KMEANS_RESTARTS: usize = 10;

/// Rescales a year so its listed weeks sum to `listed / tau`.
/// Unlisted weeks are `None`.
pub fn standardize_year(x: &[f64], on_sale: &[bool]) -> Result<Vec<Option<f64>>> {
    if x.len() != on_sale.len() || x.is_empty() {
        return Err(Error::InvalidArgument(
            "year values and listing flags must have the same non-zero length".into(),
        ));
    }
    let tau = x.len() as f64;
    let listed = on_sale.iter().filter(|&&s| s).count() as f64;
    let total: f64 = x
        .iter()
        .zip(on_sale)
        .filter(|(_, &s)| s)
        .map(|(v, _)| v)
        .sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Data(
            "cannot standardize a year without sales".into(),
        ));
    }
    Ok(x.iter()
        .zip(on_sale)
        .map(|(&v, &s)| s.then(|| listed / tau * (v / total)))
        .collect())
}

/// Mean and sample variance of standardized values per week of year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCurve {
    pub curve: Vec<f64>,
    pub variance: Vec<f64>,
    pub product_years: usize,
}

/// Curves per category from product-years (`[k*tau, (k+1)*tau)`) that lie
/// before `fit_end`. Positions nobody observed are interpolated circularly.
pub fn category_seasonality(
    smoothed: &SmoothedPanel,
    panel: &SalesPanel,
    catalog: &Catalog,
    tau: usize,
    fit_end: usize,
) -> Result<BTreeMap<CategoryId, CategoryCurve>> {
    if tau < 2 {
        return Err(Error::InvalidArgument("tau must be at least 2".into()));
    }
    let fit_end = fit_end.min(panel.weeks());
    let mut obs: BTreeMap<CategoryId, (Vec<Vec<f64>>, usize)> = BTreeMap::new();
    for (i, (id, s)) in panel.products().iter().zip(panel.all_series()).enumerate() {
        let category = catalog.category_of(id)?;
        let Some(launch) = s.first_on_sale().filter(|&w| w < fit_end) else {
            continue;
        };
        for start in (launch..fit_end).step_by(tau) {
            let end = (start + tau).min(fit_end);
            let mut x = vec![0.0; tau];
            let mut listed = vec![false; tau];
            for t in start..end {
                x[t % tau] = smoothed.x[i][t];
                listed[t % tau] = s.on_sale[t];
            }
            if listed.iter().filter(|&&l| l).count() < MIN_YEAR_WEEKS {
                continue;
            }
            let Ok(std) = standardize_year(&x, &listed) else {
                continue;
            };
            let entry = obs
                .entry(category.clone())
                .or_insert_with(|| (vec![Vec::new(); tau], 0));
            entry.1 += 1;
            for (pos, v) in std.into_iter().enumerate() {
                if let Some(v) = v {
                    entry.0[pos].push(v);
                }
            }
        }
    }
    Ok(obs
        .into_iter()
        .map(|(c, (per_pos, years))| {
            let mut curve = vec![f64::NAN; tau];
            let mut variance = vec![f64::NAN; tau];
            for (pos, values) in per_pos.iter().enumerate() {
                if values.is_empty() {
                    continue;
                }
                let n = values.len() as f64;
                let m = values.iter().sum::<f64>() / n;
                curve[pos] = m;
                variance[pos] = if values.len() > 1 {
                    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
            }
            interpolate_circular(&mut curve);
            interpolate_circular(&mut variance);
            (
                c,
                CategoryCurve {
                    curve,
                    variance,
                    product_years: years,
                },
            )
        })
        .collect())
}

/// Fills NaN entries linearly between the nearest known neighbours, wrapping
/// around the ends. Needs at least one known entry.
fn interpolate_circular(v: &mut [f64]) {
    let n = v.len();
    let known: Vec<usize> = (0..n).filter(|&i| !v[i].is_nan()).collect();
    if known.is_empty() || known.len() == n {
        return;
    }
    for (k, &a) in known.iter().enumerate() {
        let b = known[(k + 1) % known.len()];
        let gap = (b + n - a) % n;
        let gap = if gap == 0 { n } else { gap };
        for step in 1..gap {
            let frac = step as f64 / gap as f64;
            v[(a + step) % n] = v[a] + (v[b] - v[a]) * frac;
        }
    }
}

fn normalize_mean(v: &mut [f64]) {
    let tau = v.len() as f64;
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / tau);
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(
    points: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = points.len();
    let tau = points[0].len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if r < di {
                    chosen = i;
                    break;
                }
                r -= di;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
        for (j, centroid) in centroids.iter_mut().enumerate() {
            let mut acc = vec![0.0; tau];
            let mut w = 0.0;
            for (i, p) in points
                .iter()
                .enumerate()
                .filter(|(i, _)| assignment[*i] == j)
            {
                w += weights[i];
                acc.iter_mut()
                    .zip(p)
                    .for_each(|(a, v)| *a += weights[i] * v);
            }
            if w > 0.0 {
                *centroid = acc.into_iter().map(|a| a / w).collect();
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        for j in 0..k {
            if assignment.contains(&j) {
                continue;
            }
            let (far, d) = (0..n)
                .map(|i| (i, dist2(&points[i], &centroids[assignment[i]])))
                .fold((0, 0.0), |b, c| if c.1 > b.1 { c } else { b });
            if d > 0.0 {
                centroids[j] = points[far].clone();
                assignment[far] = j;
            }
        }
    }
    (centroids, assignment)
}

/// Weighted k-means with k-means++ seeding, best of several restarts by
/// weighted inertia. Each curve is normalized to mean
/// `1/tau` first and weighted by `1 / (1 + mean variance)`. Returns the
/// centroids (mean `1/tau`) and the cluster of each curve.
pub fn cluster_seasonalities(
    curves: &[Vec<f64>],
    variances: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let n = curves.len();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "cluster count must be positive".into(),
        ));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {n} category curves"
        )));
    }
    if variances.len() != n {
        return Err(Error::InvalidArgument(
            "one variance vector per curve".into(),
        ));
    }
    let tau = curves[0].len();
    if curves.iter().chain(variances).any(|c| c.len() != tau) {
        return Err(Error::InvalidArgument("curves differ in length".into()));
    }
    let points: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| {
            let mut c = c.clone();
            normalize_mean(&mut c);
            c
        })
        .collect();
    let weights: Vec<f64> = variances
        .iter()
        .map(|v| 1.0 / (1.0 + v.iter().sum::<f64>() / tau as f64))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (centroids, assignment) = lloyd(&points, &weights, k, &mut rng);
        let inertia: f64 = points
            .iter()
            .zip(&assignment)
            .zip(&weights)
            .map(|((p, &j), w)| w * dist2(p, &centroids[j]))
            .sum();
        // Strict improvement keeps the earliest run on ties.
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, centroids, assignment));
        }
    }
    let (_, mut centroids, assignment) = best.expect("at least one restart");
    for c in &mut centroids {
        normalize_mean(c);
    }
    Ok((centroids, assignment))
}

/// Category curves, their clustering, and the fallback pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityModel {
    pub tau: usize,
    pub categories: BTreeMap<CategoryId, CategoryCurve>,
    pub patterns: Vec<Vec<f64>>,
    pub assignment: BTreeMap<CategoryId, usize>,
    /// Weighted mean of all category curves; used for unseen categories.
    pub global: Vec<f64>,
}

impl SeasonalityModel {
    /// Fits curves on weeks before `fit_end` and clusters them into
    /// `min(k, categories)` patterns.
    pub fn fit(
        smoothed: &SmoothedPanel,
        panel: &SalesPanel,
        catalog: &Catalog,
        tau: usize,
        k: usize,
        seed: u64,
        fit_end: usize,
    ) -> Result<Self> {
        let categories = category_seasonality(smoothed, panel, catalog, tau, fit_end)?;
        if categories.is_empty() {
            return Ok(Self {
                tau,
                categories,
                patterns: Vec::new(),
                assignment: BTreeMap::new(),
                global: vec![1.0 / tau as f64; tau],
            });
        }
        let curves: Vec<Vec<f64>> = categories.values().map(|c| c.curve.clone()).collect();
        let variances: Vec<Vec<f64>> = categories.values().map(|c| c.variance.clone()).collect();
        let (patterns, labels) =
            cluster_seasonalities(&curves, &variances, k.min(curves.len()), seed)?;
        let (global, _) = cluster_seasonalities(&curves, &variances, 1, seed)?;
        Ok(Self {
            tau,
            assignment: categories.keys().cloned().zip(labels).collect(),
            categories,
            patterns,
            global: global.into_iter().next().unwrap_or_default(),
        })
    }

    pub fn pattern_for_category(&self, category: &CategoryId) -> &[f64] {
        match self.assignment.get(category) {
            Some(&j) => &self.patterns[j],
            None => &self.global,
        }
    }

    /// Pattern of the product's category; the global pattern when the product
    /// or its category is unknown.
    pub fn product_seasonality(&self, product: &ProductId, catalog: &Catalog) -> &[f64] {
        match catalog.category_of(product) {
            Ok(c) => self.pattern_for_category(c),
            Err(_) => &self.global,
        }
    }

    /// Writes `category_id,pattern_index,week_of_year,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(to_err)?;
        w.write_record(["category_id", "pattern_index", "week_of_year", "value"])
            .map_err(to_err)?;
        for (c, &j) in &self.assignment {
            for (pos, v) in self.patterns[j].iter().enumerate() {
                w.write_record([c.0.clone(), j.to_string(), pos.to_string(), v.to_string()])
                    .map_err(to_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Ordinary least squares slope of `v` against `0..v.len()`, divided by the
/// mean of `v`. Zero for a zero mean.
fn relative_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    if mv == 0.0 {
        return 0.0;
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in points {
        sxy += (t - mt) * (v - mv);
        sxx += (t - mt) * (t - mt);
    }
    if sxx == 0.0 {
        return 0.0;
    }
    sxy / sxx / mv
}

/// `(annual, local)` relative slopes at week `t`, fit on listed weeks in
/// `max(0, t-52)..=t` (needs 8 points) and `max(0, t-8)..=t` (needs 3).
pub fn trend_features(x: &[f64], on_sale: &[bool], t: usize) -> (f64, f64) {
    let window = |back: usize, min_points: usize| {
        let pts: Vec<(f64, f64)> = (t.saturating_sub(back)..=t)
            .filter(|&s| on_sale[s])
            .map(|s| (s as f64, x[s]))
            .collect();
        if pts.len() < min_points {
            0.0
        } else {
            relative_slope(&pts)
        }
    };
    (window(52, 8), window(8, 3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_examples() {
        let s = standardize_year(&[3.0; 52], &[true; 52]).unwrap();
        assert!(s.iter().all(|v| (v.unwrap() - 1.0 / 52.0).abs() < 1e-15));

        let on: Vec<bool> = (0..52).map(|t| t < 26).collect();
        let s = standardize_year(&[7.0; 52], &on).unwrap();
        assert!((s[0].unwrap() - 0.019231).abs() < 1e-6);
        assert!(s[30].is_none());
        assert!(standardize_year(&[0.0; 52], &[true; 52]).is_err());
    }

    #[test]
    fn circular_interpolation() {
        let mut v = [f64::NAN, 2.0, f64::NAN, 4.0, f64::NAN, f64::NAN];
        interpolate_circular(&mut v);
        // Gap 3 -> 1 wraps over positions 4, 5, 0 from 4 down to 2.
        assert_eq!(v, [2.5, 2.0, 3.0, 4.0, 3.5, 3.0]);
        let mut one = [f64::NAN, 5.0, f64::NAN];
        interpolate_circular(&mut one);
        assert_eq!(one, [5.0, 5.0, 5.0]);
    }

    #[test]
    fn single_cluster_is_weighted_mean() {
        let a = vec![2.0, 1.0, 1.0, 0.0];
        let b = vec![0.0, 1.0, 1.0, 2.0];
        let va = vec![0.0; 4];
        let vb = vec![1.0; 4];
        let (p, labels) = cluster_seasonalities(&[a, b], &[va, vb], 1, 9).unwrap();
        assert_eq!(labels, [0, 0]);
        // Normalized: a/4, b/4; weights 1 and 1/2.
        let expect: Vec<f64> = [2.0, 1.5, 1.5, 1.0].iter().map(|v| v / 6.0).collect();
        for (x, e) in p[0].iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let c = vec![vec![1.0; 4]];
        assert!(cluster_seasonalities(&c, &c, 2, 0).is_err());
    }

    #[test]
    fn identical_curves_share_a_pattern() {
        let c = vec![vec![1.0, 2.0, 3.0, 2.0]; 5];
        let v = vec![vec![0.0; 4]; 5];
        let (p, labels) = cluster_seasonalities(&c, &v, 3, 4).unwrap();
        assert!(labels.iter().all(|&l| l == labels[0]));
        for pattern in &p {
            assert_eq!(pattern, &p[labels[0]]);
        }
    }

    #[test]
    fn trend_examples() {
        let x: Vec<f64> = (0..52).map(f64::from).collect();
        let (annual, local) = trend_features(&x, &[true; 52], 51);
        assert!((annual - 1.0 / 25.5).abs() < 1e-12);
        assert!((local - 1.0 / 47.0).abs() < 1e-12);

        let flat = vec![4.0; 20];
        assert_eq!(trend_features(&flat, &[true; 20], 19), (0.0, 0.0));

        let on: Vec<bool> = (0..20).map(|t| t >= 15).collect();
        let (annual, local) = trend_features(&x[..20], &on, 19);
        assert_eq!(annual, 0.0);
        assert!((local - 1.0 / 17.0).abs() < 1e-12);
    }
}

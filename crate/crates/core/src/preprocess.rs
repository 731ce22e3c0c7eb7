//! Fake-zero repair and spike smoothing.
//!
//! A fake zero is a listed, out-of-stock week with no sales after the product
//! has already sold something. Flagged weeks are replaced by a running
//! exponential-smoothing level over the product's listed weeks. The repaired
//! series is then capped at `mean + gamma * std` of a trailing window that
//! excludes the current week.

use std::path::Path;

use crate::baselines::EsState;
use crate::error::{Error, Result};
use crate::panel::SalesPanel;

/// Per product, per week flags.
pub type WeekMask = Vec<Vec<bool>>;

/// Flags `y = 0`, listed, out of stock, with positive sales earlier on.
///
/// Only data up to the flagged week is consulted, so the mask of a truncated
/// panel is the truncation of the full mask.
pub fn detect_fake_zeros(panel: &SalesPanel) -> WeekMask {
    panel
        .all_series()
        .iter()
        .map(|s| {
            let mut sold = false;
            (0..panel.weeks())
                .map(|t| {
                    let flag = sold && s.units[t] == 0 && s.on_sale[t] && !s.in_stock[t];
                    sold |= s.units[t] > 0;
                    flag
                })
                .collect()
        })
        .collect()
}

/// Replaces flagged weeks with the rounded smoothing level of the listed weeks
/// before them. Repaired values feed the level like observed ones, so
/// repairing twice changes nothing. A flagged week with no listed history is
/// filled with the next positive unflagged sale, or 0.
pub fn repair_fake_zeros(panel: &SalesPanel, mask: &WeekMask, alpha: f64) -> Result<SalesPanel> {
    check_mask(panel, mask)?;
    let mut replacements = Vec::new();
    for (i, s) in panel.all_series().iter().enumerate() {
        let flags = &mask[i];
        if !flags.iter().any(|&f| f) {
            continue;
        }
        let mut units = s.units.clone();
        let mut state: Option<EsState> = None;
        for t in 0..panel.weeks() {
            if flags[t] {
                units[t] = match &state {
                    Some(st) => st.level().round().max(0.0) as u32,
                    None => (t + 1..panel.weeks())
                        .find(|&u| !flags[u] && s.units[u] > 0)
                        .map_or(0, |u| s.units[u]),
                };
            }
            if !s.on_sale[t] && !flags[t] {
                continue;
            }
            let y = f64::from(units[t]);
            match &mut state {
                Some(st) => st.update(y),
                None => state = Some(EsState::new(alpha, y)?),
            }
        }
        replacements.push((i, units));
    }
    Ok(panel.with_units(replacements))
}

fn check_mask(panel: &SalesPanel, mask: &WeekMask) -> Result<()> {
    if mask.len() != panel.len() || mask.iter().any(|m| m.len() != panel.weeks()) {
        return Err(Error::InvalidArgument(format!(
            "mask shape does not match a panel of {} products x {} weeks",
            panel.len(),
            panel.weeks()
        )));
    }
    Ok(())
}

/// Spike-capped series with the statistics used for the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPanel {
    pub weeks: usize,
    /// Input sales, already repaired.
    pub y: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    /// NaN where fewer than two reference weeks exist.
    pub rolling_mean: Vec<Vec<f64>>,
    pub rolling_std: Vec<Vec<f64>>,
    pub repaired_mask: WeekMask,
    pub capped_mask: WeekMask,
}

impl SmoothedPanel {
    /// `y - x`, the part of sales the cap removed.
    pub fn residual(&self, i: usize, t: usize) -> f64 {
        self.y[i][t] - self.x[i][t]
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Writes `product_id,week,y,x,rolling_mean,rolling_std,repaired,capped`.
    pub fn write_csv(&self, panel: &SalesPanel, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(to_err)?;
        w.write_record([
            "product_id",
            "week",
            "y",
            "x",
            "rolling_mean",
            "rolling_std",
            "repaired",
            "capped",
        ])
        .map_err(to_err)?;
        let num = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            }
        };
        for (i, id) in panel.products().iter().enumerate() {
            for t in 0..self.weeks {
                w.write_record([
                    id.0.clone(),
                    t.to_string(),
                    num(self.y[i][t]),
                    num(self.x[i][t]),
                    num(self.rolling_mean[i][t]),
                    num(self.rolling_std[i][t]),
                    u8::from(self.repaired_mask[i][t]).to_string(),
                    u8::from(self.capped_mask[i][t]).to_string(),
                ])
                .map_err(to_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Caps each week at the mean plus `gamma` population standard deviations of
/// the up to `window` weeks before it that fall inside the product's listed
/// span. Weeks with fewer than two reference weeks are left alone.
pub fn smooth_panel(panel: &SalesPanel, window: usize, gamma: f64) -> Result<SmoothedPanel> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!(
            "smoothing window must be at least 2, got {window}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cap multiplier must be positive, got {gamma}"
        )));
    }
    let weeks = panel.weeks();
    let n = panel.len();
    let mut out = SmoothedPanel {
        weeks,
        y: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        rolling_mean: Vec::with_capacity(n),
        rolling_std: Vec::with_capacity(n),
        repaired_mask: vec![vec![false; weeks]; n],
        capped_mask: Vec::with_capacity(n),
    };
    for s in panel.all_series() {
        let y: Vec<f64> = s.units.iter().map(|&u| f64::from(u)).collect();
        let mut x = y.clone();
        let mut mean = vec![f64::NAN; weeks];
        let mut std = vec![f64::NAN; weeks];
        let mut capped = vec![false; weeks];
        if let (Some(first), Some(last)) = (s.first_on_sale(), s.last_on_sale()) {
            for t in first..=last {
                let lo = t.saturating_sub(window).max(first);
                let ref_weeks = &y[lo..t];
                if ref_weeks.len() < 2 {
                    continue;
                }
                let len = ref_weeks.len() as f64;
                let m = ref_weeks.iter().sum::<f64>() / len;
                let var = ref_weeks.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / len;
                let sd = var.sqrt();
                mean[t] = m;
                std[t] = sd;
                let cap = m + gamma * sd;
                if y[t] > cap {
                    x[t] = cap;
                    capped[t] = true;
                }
            }
        }
        out.y.push(y);
        out.x.push(x);
        out.rolling_mean.push(mean);
        out.rolling_std.push(std);
        out.capped_mask.push(capped);
    }
    Ok(out)
}

/// Detect, repair and smooth in one pass. Returns the repaired panel and its
/// smoothed version.
pub fn preprocess(
    panel: &SalesPanel,
    alpha: f64,
    window: usize,
    gamma: f64,
) -> Result<(SalesPanel, SmoothedPanel)> {
    let mask = detect_fake_zeros(panel);
    let repaired = repair_fake_zeros(panel, &mask, alpha)?;
    let mut smoothed = smooth_panel(&repaired, window, gamma)?;
    smoothed.repaired_mask = mask;
    Ok((repaired, smoothed))
}

//! Regression tree structure and the exact-greedy grower.
//!
//! Every node scans each candidate feature over its rows in ascending value
//! order. Thresholds are midpoints between consecutive distinct values, a row
//! goes left when `value < threshold`, and rows with a missing value follow
//! the node's default direction. Both directions are tried for the missing
//! rows; when the node has none the default is left.
//!
//! Candidates are visited in (feature, threshold, missing-left, missing-right)
//! order and only a strictly better gain replaces the incumbent, so ties go
//! to the lowest feature index, then the lowest threshold, then left.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GbtError, Result};
use crate::matrix::Matrix;

/// Relative slack under which two gains count as tied. Prefix sums and
/// from-scratch sums disagree in the last few bits.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum loss reduction a split must achieve.
    pub min_split_loss: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    /// Bound on the absolute leaf weight; `0` disables it.
    pub max_delta_step: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            lambda: 1.0,
            min_split_loss: 0.0,
            min_child_weight: 0.0,
            max_delta_step: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
        /// Loss reduction before the `min_split_loss` penalty.
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Loss reduction minus `min_split_loss`; always positive.
    pub gain: f64,
    pub default_left: bool,
}

/// Newton step `-G / (H + lambda)`.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64) -> Result<f64> {
    let denom = hess_sum + lambda;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(GbtError::NonPositiveCurvature(denom));
    }
    Ok(-grad_sum / denom)
}

#[inline]
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

#[inline]
pub(crate) fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + GAIN_TIE_TOLERANCE * incumbent.abs().max(1.0)
}

/// Threshold strictly above `lo` and at most `hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Best split of a single feature. `values` may be unsorted and may contain
/// `NaN` for missing entries.
pub fn best_split(
    values: &[f64],
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    min_split_loss: f64,
) -> Option<SplitCandidate> {
    let n = values.len();
    if n < 2 || grad.len() != n || hess.len() != n {
        return None;
    }
    let m = Matrix::new(vec!["x".to_string()], n, values.to_vec()).ok()?;
    let params = TreeParams {
        max_depth: 1,
        lambda,
        min_split_loss,
        ..TreeParams::default()
    };
    let rows: Vec<u32> = (0..n as u32).collect();
    let grower = Grower::new(&m, grad, hess, &params, None);
    let (g, h) = grower.totals(&rows);
    let sorted = m.sorted_columns();
    let mut best = None;
    grower.scan_feature(0, &sorted[0], n, g, h, &mut best);
    best
}

impl Tree {
    /// Fits a single tree to per-row gradients and hessians.
    pub fn fit(m: &Matrix, grad: &[f64], hess: &[f64], params: &TreeParams) -> Result<Tree> {
        if m.n_rows() == 0 {
            return Err(GbtError::EmptyMatrix);
        }
        if grad.len() != m.n_rows() || hess.len() != m.n_rows() {
            return Err(GbtError::TargetLength {
                rows: m.n_rows(),
                targets: grad.len().min(hess.len()),
            });
        }
        let mut grower = Grower::new(m, grad, hess, params, None);
        let rows = (0..m.n_rows() as u32).collect();
        grower.grow(rows, m.sorted_columns(), 0)?;
        Ok(grower.into_tree())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let x = row[feature];
                    let go_left = if x.is_nan() {
                        default_left
                    } else {
                        x < threshold
                    };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(GbtError::Format("tree without nodes".into()));
        }
        for node in &self.nodes {
            match *node {
                Node::Leaf { weight } if !weight.is_finite() => {
                    return Err(GbtError::Format("non-finite leaf weight".into()))
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature >= n_features
                        || left >= self.nodes.len()
                        || right >= self.nodes.len()
                        || threshold.is_nan()
                    {
                        return Err(GbtError::Format("dangling split node".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Per-split feature subsampling for the forest.
pub(crate) struct ColumnSampler<'r> {
    pub per_split: usize,
    pub rng: &'r mut ChaCha8Rng,
}

pub(crate) struct Grower<'a, 'r> {
    m: &'a Matrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TreeParams,
    sampler: Option<ColumnSampler<'r>>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    /// Rows that ended in each leaf, as (node index, rows).
    pub leaves: Vec<(usize, Vec<u32>)>,
}

impl<'a, 'r> Grower<'a, 'r> {
    pub fn new(
        m: &'a Matrix,
        grad: &'a [f64],
        hess: &'a [f64],
        params: &'a TreeParams,
        sampler: Option<ColumnSampler<'r>>,
    ) -> Self {
        Self {
            m,
            grad,
            hess,
            params,
            sampler,
            nodes: Vec::new(),
            goes_left: vec![false; m.n_rows()],
            leaves: Vec::new(),
        }
    }

    pub fn into_tree(self) -> Tree {
        Tree { nodes: self.nodes }
    }

    pub fn leaf_weight_of(&self, node: usize) -> f64 {
        match self.nodes[node] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf index points at a split"),
        }
    }

    fn totals(&self, rows: &[u32]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        })
    }

    fn clamp(&self, w: f64) -> f64 {
        let step = self.params.max_delta_step;
        if step > 0.0 {
            w.clamp(-step, step)
        } else {
            w
        }
    }

    /// Grows the subtree for `rows`; `cols[f]` holds the node's non-missing
    /// rows for feature `f` in ascending value order.
    pub fn grow(&mut self, rows: Vec<u32>, cols: Vec<Vec<u32>>, depth: usize) -> Result<usize> {
        let (g, h) = self.totals(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: self.clamp(leaf_weight(g, h, self.params.lambda)?),
        });

        let split = if depth < self.params.max_depth && rows.len() >= 2 {
            self.find_split(&cols, rows.len(), g, h)
        } else {
            None
        };
        let Some(split) = split else {
            self.leaves.push((id, rows));
            return Ok(id);
        };

        for &r in &rows {
            let x = self.m.get(r as usize, split.feature);
            self.goes_left[r as usize] = if x.is_nan() {
                split.default_left
            } else {
                x < split.threshold
            };
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.into_iter().partition(|&r| self.goes_left[r as usize]);
        let mut left_cols = Vec::with_capacity(cols.len());
        let mut right_cols = Vec::with_capacity(cols.len());
        for col in cols {
            let (l, r): (Vec<u32>, Vec<u32>) =
                col.into_iter().partition(|&r| self.goes_left[r as usize]);
            left_cols.push(l);
            right_cols.push(r);
        }

        let left = self.grow(left_rows, left_cols, depth + 1)?;
        let right = self.grow(right_rows, right_cols, depth + 1)?;
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            default_left: split.default_left,
            left,
            right,
            gain: split.gain + self.params.min_split_loss,
        };
        Ok(id)
    }

    fn find_split(
        &mut self,
        cols: &[Vec<u32>],
        node_len: usize,
        g: f64,
        h: f64,
    ) -> Option<SplitCandidate> {
        let p = cols.len();
        let features: Vec<usize> = match self.sampler.as_mut() {
            Some(s) if s.per_split < p => {
                let mut f = sample(s.rng, p, s.per_split).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let mut best = None;
        for f in features {
            self.scan_feature(f, &cols[f], node_len, g, h, &mut best);
        }
        best
    }

    fn scan_feature(
        &self,
        feature: usize,
        sorted: &[u32],
        node_len: usize,
        g_total: f64,
        h_total: f64,
        best: &mut Option<SplitCandidate>,
    ) {
        if sorted.len() < 2 {
            return;
        }
        let TreeParams {
            lambda,
            min_split_loss,
            min_child_weight,
            ..
        } = *self.params;
        let (g_present, h_present) = self.totals(sorted);
        let g_missing = g_total - g_present;
        let h_missing = h_total - h_present;
        let has_missing = sorted.len() < node_len;
        let parent = score(g_total, h_total, lambda);

        let mut gl = 0.0;
        let mut hl = 0.0;
        for k in 0..sorted.len() - 1 {
            let r = sorted[k] as usize;
            gl += self.grad[r];
            hl += self.hess[r];
            let lo = self.m.get(r, feature);
            let hi = self.m.get(sorted[k + 1] as usize, feature);
            if lo == hi {
                continue;
            }
            let threshold = midpoint(lo, hi);
            for default_left in [true, false] {
                if !default_left && !has_missing {
                    break;
                }
                let (lg, lh) = if default_left {
                    (gl + g_missing, hl + h_missing)
                } else {
                    (gl, hl)
                };
                let (rg, rh) = (g_total - lg, h_total - lh);
                if lh < min_child_weight || rh < min_child_weight {
                    continue;
                }
                let gain =
                    0.5 * (score(lg, lh, lambda) + score(rg, rh, lambda) - parent) - min_split_loss;
                let incumbent = best.map_or(0.0, |b| b.gain);
                if improves(gain, incumbent) {
                    *best = Some(SplitCandidate {
                        feature,
                        threshold,
                        gain,
                        default_left,
                    });
                }
            }
        }
    }
}

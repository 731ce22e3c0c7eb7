//! Brute-force regression tree used as a reference for the grower.
//!
//! Every candidate partition is re-evaluated from scratch: for each feature,
//! each midpoint between distinct node values, and each missing-value
//! direction, the left and right gradient sums are recomputed by walking the
//! node's rows. No sorting, prefix sums or column bookkeeping is shared with
//! the implementation; only the conventions are (midpoint rule, `<` goes
//! left, visiting order and the tie tolerance).

#![allow(dead_code)]

use demand_gbt::{Matrix, Node, Tree, TreeParams, GAIN_TIE_TOLERANCE};

#[derive(Debug, Clone)]
pub enum OracleNode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
    Leaf {
        weight: f64,
    },
}

fn sums(rows: &[usize], g: &[f64], h: &[f64]) -> (f64, f64) {
    let mut gs = 0.0;
    let mut hs = 0.0;
    for &r in rows {
        gs += g[r];
        hs += h[r];
    }
    (gs, hs)
}

fn threshold_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

pub fn oracle_tree(m: &Matrix, g: &[f64], h: &[f64], params: &TreeParams) -> OracleNode {
    let rows: Vec<usize> = (0..m.n_rows()).collect();
    grow(m, g, h, params, &rows, 0)
}

fn grow(
    m: &Matrix,
    g: &[f64],
    h: &[f64],
    p: &TreeParams,
    rows: &[usize],
    depth: usize,
) -> OracleNode {
    let (gs, hs) = sums(rows, g, h);
    let mut weight = -gs / (hs + p.lambda);
    if p.max_delta_step > 0.0 {
        weight = weight.max(-p.max_delta_step).min(p.max_delta_step);
    }
    let leaf = OracleNode::Leaf { weight };
    if depth >= p.max_depth || rows.len() < 2 {
        return leaf;
    }

    let parent = gs * gs / (hs + p.lambda);
    let mut best: Option<(f64, usize, f64, bool)> = None;
    for f in 0..m.n_cols() {
        let mut values: Vec<f64> = rows
            .iter()
            .map(|&r| m.get(r, f))
            .filter(|v| !v.is_nan())
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        let any_missing = rows.iter().any(|&r| m.get(r, f).is_nan());
        for pair in values.windows(2) {
            let thr = threshold_between(pair[0], pair[1]);
            for missing_left in [true, false] {
                if !missing_left && !any_missing {
                    continue;
                }
                let goes_left = |r: usize| {
                    let x = m.get(r, f);
                    if x.is_nan() {
                        missing_left
                    } else {
                        x < thr
                    }
                };
                let left: Vec<usize> = rows.iter().copied().filter(|&r| goes_left(r)).collect();
                let right: Vec<usize> = rows.iter().copied().filter(|&r| !goes_left(r)).collect();
                let (gl, hl) = sums(&left, g, h);
                let (gr, hr) = sums(&right, g, h);
                if hl < p.min_child_weight || hr < p.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - parent)
                    - p.min_split_loss;
                let incumbent = best.map_or(0.0, |b| b.0);
                if gain > incumbent + GAIN_TIE_TOLERANCE * incumbent.abs().max(1.0) {
                    best = Some((gain, f, thr, missing_left));
                }
            }
        }
    }

    let Some((_, feature, threshold, default_left)) = best else {
        return leaf;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
        let x = m.get(r, feature);
        if x.is_nan() {
            default_left
        } else {
            x < threshold
        }
    });
    OracleNode::Split {
        feature,
        threshold,
        default_left,
        left: Box::new(grow(m, g, h, p, &l, depth + 1)),
        right: Box::new(grow(m, g, h, p, &r, depth + 1)),
    }
}

/// Describes the first disagreement between `tree` and `oracle`, if any.
pub fn compare(tree: &Tree, oracle: &OracleNode) -> Result<(), String> {
    fn walk(nodes: &[Node], i: usize, o: &OracleNode, path: &str) -> Result<(), String> {
        match (&nodes[i], o) {
            (Node::Leaf { weight }, OracleNode::Leaf { weight: w }) => {
                if (weight - w).abs() <= 1e-9 * w.abs().max(1.0) {
                    Ok(())
                } else {
                    Err(format!("{path}: leaf {weight} vs oracle {w}"))
                }
            }
            (
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                },
                OracleNode::Split {
                    feature: of,
                    threshold: ot,
                    default_left: od,
                    left: ol,
                    right: or,
                },
            ) => {
                if feature != of || threshold.to_bits() != ot.to_bits() || default_left != od {
                    return Err(format!(
                        "{path}: split ({feature}, {threshold}, {default_left}) vs oracle ({of}, {ot}, {od})"
                    ));
                }
                walk(nodes, *left, ol, &format!("{path}L"))?;
                walk(nodes, *right, or, &format!("{path}R"))
            }
            (a, b) => Err(format!("{path}: node kind differs: {a:?} vs {b:?}")),
        }
    }
    walk(tree.nodes(), 0, oracle, "root")
}

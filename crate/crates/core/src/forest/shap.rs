//! Path-dependent TreeSHAP (polynomial-time exact Shapley values for the
//! cover-weighted conditional expectation).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Forest, TreeNode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub base: f64,
    pub contributions: Vec<f64>,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / denom;
    }
}

fn unwind(path: &mut Vec<PathElem>, index: usize) {
    let depth = path.len() - 1;
    let PathElem { zero, one, .. } = path[index];
    let denom = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * denom / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / denom;
        } else {
            path[i].weight = path[i].weight * denom / (zero * (depth - i) as f64);
        }
    }
    // weights stay in place; only the feature data shifts down
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElem], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElem { zero, one, .. } = path[index];
    let denom = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * denom / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64 / denom;
        } else if zero != 0.0 {
            total += path[i].weight * denom / (zero * (depth - i) as f64);
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    x: &[f64],
    phi: &mut [f64],
    parent: &[PathElem],
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero, one, feature);
    match node {
        TreeNode::Leaf { distribution, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one - el.zero) * distribution[1];
                }
            }
        }
        TreeNode::Split {
            feature: split,
            threshold,
            cover,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if x[*split] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|e| e.feature == Some(*split)) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(hot, x, phi, &path, hot.cover() / cover * in_zero, in_one, Some(*split));
            recurse(cold, x, phi, &path, cold.cover() / cover * in_zero, 0.0, Some(*split));
        }
    }
}

/// Shapley values of one tree's `P(OOD)` for input `x`.
pub fn tree_shap_single(tree: &TreeNode, x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, x, &mut phi, &[], 1.0, 1.0, None);
    phi
}

/// Forest explanation: per-tree values and base values averaged over trees.
pub fn tree_shap(forest: &Forest, x: &[f64]) -> Result<ShapExplanation> {
    if x.len() != forest.n_features {
        return Err(Error::DimensionMismatch {
            expected: forest.n_features,
            actual: x.len(),
        });
    }
    let n = forest.trees.len() as f64;
    let per_tree: Vec<(f64, Vec<f64>)> = forest
        .trees
        .par_iter()
        .map(|t| (t.expected_value(), tree_shap_single(t, x, forest.n_features)))
        .collect();
    let mut base = 0.0;
    let mut contributions = vec![0.0; forest.n_features];
    for (b, phi) in &per_tree {
        base += b;
        for (c, p) in contributions.iter_mut().zip(phi) {
            *c += p;
        }
    }
    for c in &mut contributions {
        *c /= n;
    }
    Ok(ShapExplanation {
        base: base / n,
        contributions,
        prediction: forest.predict_ood(x)?,
    })
}

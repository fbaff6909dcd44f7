use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_forest, Forest, Hyperparams, Matrix};
use crate::error::{Error, Result};
use crate::metrics::auroc;
use crate::rng::{derive_seed, SplitMix64};

/// Mean decrease in impurity: per-feature sum of split decreases, averaged
/// over trees and normalized to sum 1. Stays all-zero when no split exists.
pub fn mdi_importance(forest: &Forest) -> Vec<f64> {
    let mut imp = vec![0.0; forest.n_features];
    for tree in &forest.trees {
        tree.for_each_split(&mut |f, _, dec| imp[f] += dec);
    }
    let n = forest.trees.len().max(1) as f64;
    for v in &mut imp {
        *v /= n;
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        for v in &mut imp {
            *v /= total;
        }
    }
    imp
}

/// Drop in AUROC when a column is shuffled, averaged over `n_repeats`
/// shuffles. Repeat `r` of column `j` uses the stream
/// `(seed, "permute", j·n_repeats + r)`.
pub fn permutation_importance(
    forest: &Forest,
    x: &Matrix,
    y: &[usize],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_repeats == 0 {
        return Err(Error::invalid("n_repeats must be at least 1"));
    }
    let positive: Vec<bool> = y.iter().map(|&c| c == 1).collect();
    let baseline = auroc(&forest.predict_rows(x)?, &positive)?;
    (0..x.n_cols)
        .into_par_iter()
        .map(|j| {
            let original = x.column(j);
            let mut permuted = x.clone();
            let mut drop = 0.0;
            for r in 0..n_repeats {
                let mut col = original.clone();
                SplitMix64::for_role(seed, "permute", (j * n_repeats + r) as u64).shuffle(&mut col);
                permuted.set_column(j, &col);
                drop += baseline - auroc(&forest.predict_rows(&permuted)?, &positive)?;
            }
            Ok(drop / n_repeats as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfeConfig {
    pub target_count: usize,
    /// `None` means `max(1, d/10)` of the starting width.
    pub step: Option<usize>,
}

impl Default for RfeConfig {
    fn default() -> Self {
        Self {
            target_count: 16,
            step: None,
        }
    }
}

/// Recursive feature elimination by MDI. Returns the surviving column
/// indices in ascending order. Round `i` fits with seed
/// `derive_seed(seed, "rfe", i)`.
pub fn rfe(x: &Matrix, y: &[usize], hp: &Hyperparams, cfg: &RfeConfig, seed: u64) -> Result<Vec<usize>> {
    let d = x.n_cols;
    if cfg.target_count == 0 {
        return Err(Error::invalid("RFE target_count must be at least 1"));
    }
    if cfg.target_count > d {
        return Err(Error::invalid(format!(
            "RFE target_count {} exceeds {d} features",
            cfg.target_count
        )));
    }
    let step = cfg.step.unwrap_or((d / 10).max(1));
    if step == 0 {
        return Err(Error::invalid("RFE step must be at least 1"));
    }
    let mut selected: Vec<usize> = (0..d).collect();
    let mut round = 0u64;
    while selected.len() > cfg.target_count {
        let sub = x.select_columns(&selected);
        let names = selected.iter().map(|i| i.to_string()).collect();
        let forest = fit_forest(&sub, y, hp, names, derive_seed(seed, "rfe", round))?;
        let imp = mdi_importance(&forest);
        let mut order: Vec<usize> = (0..selected.len()).collect();
        // lowest importance first; among ties the higher original index goes first
        order.sort_by(|&a, &b| imp[a].total_cmp(&imp[b]).then(selected[b].cmp(&selected[a])));
        let n_drop = step.min(selected.len() - cfg.target_count);
        let mut dropped: Vec<usize> = order[..n_drop].to_vec();
        dropped.sort_unstable();
        for pos in dropped.into_iter().rev() {
            selected.remove(pos);
        }
        round += 1;
    }
    Ok(selected)
}

//! Balanced random forest for ID/OOD classification, with impurity and
//! permutation importances, recursive feature elimination and exact
//! path-dependent tree Shapley values.

mod importance;
mod shap;
mod tree;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use importance::{mdi_importance, permutation_importance, rfe, RfeConfig};
pub use shap::{tree_shap, tree_shap_single, ShapExplanation};
pub use tree::{balanced_weights, fit_tree, weighted_gini, TreeNode};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scores::OodScore;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::invalid("rows have different lengths"));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, &v) in values.iter().enumerate() {
            self.data[r * self.n_cols + c] = v;
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let data = (0..self.n_rows)
            .flat_map(|r| cols.iter().map(move |&c| self.get(r, c)))
            .collect();
        Matrix {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            data,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let data = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Matrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    Balanced,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// `None` means `floor(√d)`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub class_weighting: ClassWeighting,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 20,
            max_features: None,
            min_samples_split: 2,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

impl Hyperparams {
    pub fn resolved_max_features(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub hyperparams: Hyperparams,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub class_weights: [f64; 2],
    pub trees: Vec<TreeNode>,
}

/// Bootstrap multiplicities for tree `t`: `n` draws with replacement from the
/// stream `(seed, "bootstrap", t)`.
pub fn bootstrap_counts(n: usize, seed: u64, tree: usize) -> Vec<u32> {
    let mut rng = crate::rng::SplitMix64::for_role(seed, "bootstrap", tree as u64);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.below(n as u64) as usize] += 1;
    }
    counts
}

/// Seed of the per-tree feature-subset stream.
pub fn tree_seed(seed: u64, tree: usize) -> u64 {
    derive_seed(seed, "features", tree as u64)
}

/// Fit `n_trees` bootstrapped trees. Class weights are computed once on the
/// full training set and multiplied by each row's bootstrap multiplicity.
pub fn fit_forest(
    x: &Matrix,
    y: &[usize],
    hp: &Hyperparams,
    feature_names: Vec<String>,
    seed: u64,
) -> Result<Forest> {
    hp.validate()?;
    if y.len() != x.n_rows {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows,
            actual: y.len(),
        });
    }
    if feature_names.len() != x.n_cols {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols,
            actual: feature_names.len(),
        });
    }
    let balanced = balanced_weights(y)?;
    let class_weights = match hp.class_weighting {
        ClassWeighting::Balanced => balanced,
        ClassWeighting::None => [1.0, 1.0],
    };
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let counts = bootstrap_counts(x.n_rows, seed, t);
            let w: Vec<f64> = counts
                .iter()
                .zip(y)
                .map(|(&c, &label)| class_weights[label] * f64::from(c))
                .collect();
            fit_tree(x, y, &w, hp, tree_seed(seed, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        format_version: MODEL_FORMAT_VERSION,
        hyperparams: hp.clone(),
        n_features: x.n_cols,
        feature_names,
        seed,
        class_weights,
        trees,
    })
}

impl Forest {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Unweighted mean of the leaf distributions over trees.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.check_dim(x)?;
        let p1 = self.trees.iter().map(|t| t.predict(x)[1]).sum::<f64>() / self.trees.len() as f64;
        Ok([1.0 - p1, p1])
    }

    pub fn predict_ood(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_proba(x)?[1])
    }

    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        (0..x.n_rows).map(|r| self.predict_ood(x.row(r))).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: Forest = serde_json::from_str(text)?;
        if forest.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                forest.format_version
            )));
        }
        let mut bad = false;
        for t in &forest.trees {
            t.for_each_split(&mut |f, thr, _| bad |= f >= forest.n_features || !thr.is_finite());
        }
        if bad || forest.trees.is_empty() {
            return Err(Error::invalid("model references invalid features or has no trees"));
        }
        Ok(forest)
    }
}

/// Scan-level OOD score: mean `P(OOD)` across the scan's crop vectors.
pub fn predict_scan(forest: &Forest, scan_id: &str, crops: &[Vec<f64>]) -> Result<OodScore> {
    if crops.is_empty() {
        return Err(Error::invalid(format!("scan `{scan_id}` has no crop vectors")));
    }
    let mut sum = 0.0;
    for c in crops {
        sum += forest.predict_ood(c)?;
    }
    Ok(OodScore {
        scan_id: scan_id.to_string(),
        method: "RF".to_string(),
        value: sum / crops.len() as f64,
        fallback_used: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn leaf(p1: f64) -> TreeNode {
        TreeNode::Leaf {
            distribution: [1.0 - p1, p1],
            cover: 1.0,
        }
    }

    fn forest_of(trees: Vec<TreeNode>) -> Forest {
        Forest {
            format_version: MODEL_FORMAT_VERSION,
            hyperparams: Hyperparams::default(),
            n_features: 1,
            feature_names: vec!["f".into()],
            seed: 0,
            class_weights: [1.0, 1.0],
            trees,
        }
    }

    pub(crate) fn blobs(n: usize, sep: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = SplitMix64::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let shift = if c == 1 { sep } else { 0.0 };
            rows.push(vec![rng.normal() + shift, rng.normal()]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn constant_leaves_average() {
        let f = forest_of(vec![leaf(0.7), leaf(0.7)]);
        let p = f.predict_proba(&[0.0]).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && p[1] == 0.7);
        let f = forest_of(vec![leaf(0.0), leaf(1.0)]);
        assert_eq!(f.predict_proba(&[0.0]).unwrap(), [0.5, 0.5]);
        assert!(f.predict_proba(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn scan_prediction_averages_crops() {
        let f = forest_of(vec![TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            cover: 2.0,
            impurity_decrease: 0.0,
            left: Box::new(leaf(0.2)),
            right: Box::new(leaf(0.6)),
        }]);
        let s = predict_scan(&f, "s", &[vec![0.0], vec![1.0]]).unwrap();
        assert!((s.value - 0.4).abs() < 1e-15);
        let r = predict_scan(&f, "s", &[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(s.value, r.value);
        let same = predict_scan(&f, "s", &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(same.value, 0.6);
        assert!(predict_scan(&f, "s", &[]).is_err());
    }

    #[test]
    fn single_tree_forest_is_a_bootstrap_tree() {
        let (x, y) = blobs(60, 1.0, 4);
        let hp = Hyperparams { n_trees: 1, ..Hyperparams::default() };
        let names = vec!["a".into(), "b".into()];
        let f = fit_forest(&x, &y, &hp, names, 9).unwrap();
        let cw = balanced_weights(&y).unwrap();
        let w: Vec<f64> = bootstrap_counts(60, 9, 0)
            .iter()
            .zip(&y)
            .map(|(&c, &l)| cw[l] * f64::from(c))
            .collect();
        let t = fit_tree(&x, &y, &w, &hp, tree_seed(9, 0)).unwrap();
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = blobs(80, 1.5, 5);
        let hp = Hyperparams { n_trees: 20, ..Hyperparams::default() };
        let names = vec!["a".into(), "b".into()];
        let a = fit_forest(&x, &y, &hp, names.clone(), 3).unwrap();
        let b = fit_forest(&x, &y, &hp, names, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_blobs_fit_training_data() {
        let (x, y) = blobs(200, 6.0, 11);
        let hp = Hyperparams { n_trees: 50, ..Hyperparams::default() };
        let f = fit_forest(&x, &y, &hp, vec!["a".into(), "b".into()], 1).unwrap();
        let p = f.predict_rows(&x).unwrap();
        let correct = p.iter().zip(&y).filter(|(&p, &l)| usize::from(p >= 0.5) == l).count();
        assert!(correct as f64 / 200.0 >= 0.99);
        for row in 0..x.n_rows {
            let pr = f.predict_proba(x.row(row)).unwrap();
            assert!((pr[0] + pr[1] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_class_input_errors() {
        let (x, _) = blobs(10, 1.0, 1);
        let hp = Hyperparams { n_trees: 2, ..Hyperparams::default() };
        assert!(fit_forest(&x, &[0; 10], &hp, vec!["a".into(), "b".into()], 0).is_err());
    }

    #[test]
    fn json_roundtrip_preserves_predictions() {
        let (x, y) = blobs(80, 1.0, 8);
        let hp = Hyperparams { n_trees: 10, ..Hyperparams::default() };
        let f = fit_forest(&x, &y, &hp, vec!["a".into(), "b".into()], 2).unwrap();
        let back = Forest::from_json(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        for r in 0..x.n_rows {
            assert_eq!(
                back.predict_ood(x.row(r)).unwrap().to_bits(),
                f.predict_ood(x.row(r)).unwrap().to_bits()
            );
        }
    }
}

//! Weighted CART trees for two classes.

use serde::{Deserialize, Serialize};

use super::{Hyperparams, Matrix};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        /// Weighted class proportions `[P(ID), P(OOD)]`.
        distribution: [f64; 2],
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        cover: f64,
        /// `W·gini − W_l·gini_l − W_r·gini_r`.
        impurity_decrease: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }

    /// Leaf reached by `x` (`x[feature] <= threshold` goes left).
    pub fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }

    pub fn predict(&self, x: &[f64]) -> [f64; 2] {
        match self.leaf_for(x) {
            TreeNode::Leaf { distribution, .. } => *distribution,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Visit every split node in preorder.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64, f64)) {
        if let TreeNode::Split {
            feature,
            threshold,
            impurity_decrease,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *threshold, *impurity_decrease);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }

    /// Expected leaf `P(OOD)` when every split is followed in proportion to
    /// child cover.
    pub fn expected_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { distribution, .. } => distribution[1],
            TreeNode::Split {
                cover, left, right, ..
            } => (left.cover() * left.expected_value() + right.cover() * right.expected_value()) / cover,
        }
    }
}

/// Class weights `n / (2·n_c)`.
pub fn balanced_weights(labels: &[usize]) -> Result<[f64; 2]> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}

/// `1 − Σ (W_c / W)²`.
pub fn weighted_gini(w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = w[0] / total;
    let p1 = w[1] / total;
    1.0 - (p0 * p0 + p1 * p1)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    // Guard adjacent floats where rounding lands on the upper value.
    if m < b {
        m
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.gain > other.gain
            || (self.gain == other.gain
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    w: &'a [f64],
    hp: &'a Hyperparams,
    max_features: usize,
    rng: SplitMix64,
}

impl Builder<'_> {
    fn class_sums(&self, rows: &[usize]) -> [f64; 2] {
        let mut s = [0.0; 2];
        for &r in rows {
            s[self.y[r]] += self.w[r];
        }
        s
    }

    fn leaf(sums: [f64; 2]) -> TreeNode {
        let cover = sums[0] + sums[1];
        let p1 = sums[1] / cover;
        TreeNode::Leaf {
            distribution: [1.0 - p1, p1],
            cover,
        }
    }

    fn best_split(&mut self, rows: &[usize], sums: [f64; 2]) -> Option<Candidate> {
        let cover = sums[0] + sums[1];
        let parent = cover * weighted_gini(sums);
        let features = self.rng.sample_without_replacement(self.x.n_cols, self.max_features);
        let mut best: Option<Candidate> = None;
        for f in features {
            let mut sorted = rows.to_vec();
            sorted.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let mut left = [0.0; 2];
            for i in 0..sorted.len() - 1 {
                let r = sorted[i];
                left[self.y[r]] += self.w[r];
                let (lo, hi) = (self.x.get(r, f), self.x.get(sorted[i + 1], f));
                if lo == hi {
                    continue;
                }
                let right = [sums[0] - left[0], sums[1] - left[1]];
                let wl = left[0] + left[1];
                let wr = right[0] + right[1];
                let gain = parent - wl * weighted_gini(left) - wr * weighted_gini(right);
                let cand = Candidate {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    gain,
                };
                if best.as_ref().is_none_or(|b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let sums = self.class_sums(&rows);
        if depth >= self.hp.max_depth
            || rows.len() < self.hp.min_samples_split
            || weighted_gini(sums) <= 0.0
        {
            return Self::leaf(sums);
        }
        let Some(cand) = self.best_split(&rows, sums) else {
            return Self::leaf(sums);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.x.get(row, cand.feature) <= cand.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        TreeNode::Split {
            feature: cand.feature,
            threshold: cand.threshold,
            cover: sums[0] + sums[1],
            impurity_decrease: cand.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Grow one tree. Rows with zero weight are ignored; the feature subsets
/// come from `SplitMix64::new(seed)`, drawn at each split attempt in preorder.
pub fn fit_tree(
    x: &Matrix,
    y: &[usize],
    weights: &[f64],
    hp: &Hyperparams,
    seed: u64,
) -> Result<TreeNode> {
    if x.n_rows == 0 || x.n_cols == 0 {
        return Err(Error::invalid("empty training matrix"));
    }
    if y.len() != x.n_rows || weights.len() != x.n_rows {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows,
            actual: y.len().min(weights.len()),
        });
    }
    if y.iter().any(|&c| c > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let rows: Vec<usize> = (0..x.n_rows).filter(|&r| weights[r] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::invalid("all sample weights are zero"));
    }
    let mut builder = Builder {
        x,
        y,
        w: weights,
        hp,
        max_features: hp.resolved_max_features(x.n_cols),
        rng: SplitMix64::new(seed),
    };
    Ok(builder.build(rows, 0))
}

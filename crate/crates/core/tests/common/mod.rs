//! Independent reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

use rfdeep_core::forest::{
    bootstrap_counts, fit_forest, mdi_importance, ClassWeighting, Forest, Hyperparams, Matrix, TreeNode,
};
use rfdeep_core::rng::SplitMix64;

/// `(#{s₊ > s₋} + ½·#{s₊ = s₋}) / (n₊·n₋)` by explicit pair counting.
pub fn pairwise_auroc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut ties, mut np, mut nn) = (0u64, 0u64, 0u64, 0u64);
    for (i, &pi) in positive.iter().enumerate() {
        if pi {
            np += 1;
        } else {
            nn += 1;
        }
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / (np * nn) as f64
}

/// Scan every observed score as a threshold (`score >= t` → positive).
pub fn exhaustive_fpr(scores: &[f64], positive: &[bool], target: f64) -> f64 {
    let np = positive.iter().filter(|&&p| p).count();
    let nn = positive.len() - np;
    let mut best = f64::INFINITY;
    for &t in scores {
        let tp = scores.iter().zip(positive).filter(|(&s, &p)| p && s >= t).count();
        let fp = scores.iter().zip(positive).filter(|(&s, &p)| !p && s >= t).count();
        if tp as f64 / np as f64 >= target {
            best = best.min(fp as f64 / nn as f64);
        }
    }
    best
}

/// Random labeled score set of size `2..=max_n` with both labels and
/// deliberate ties (scores drawn from a small grid half of the time).
pub fn random_labeled_set(rng: &mut SplitMix64, max_n: usize) -> (Vec<f64>, Vec<bool>) {
    let n = 2 + rng.below((max_n - 1) as u64) as usize;
    let coarse = rng.next_f64() < 0.5;
    let levels = 1 + rng.below(10) as i64;
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let s = if coarse {
            rng.range_inclusive(0, levels) as f64 / 4.0
        } else {
            rng.normal()
        };
        scores.push(s);
        labels.push(match i {
            0 => true,
            1 => false,
            _ => rng.next_f64() < 0.4,
        });
    }
    (scores, labels)
}

// ---------------------------------------------------------------------------
// Double-double arithmetic for the energy reference.

#[derive(Debug, Clone, Copy)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, a.mul_add(b, -p))
}

impl Dd {
    pub fn from(a: f64) -> Self {
        Dd(a, 0.0)
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let hi = two_sum(s.0, s.1 + t.0);
        two_sum(hi.0, hi.1 + t.1)
    }

    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.0, o.0);
        two_sum(p.0, p.1 + (self.0 * o.1 + self.1 * o.0))
    }

    pub fn mul_f(self, f: f64) -> Dd {
        self.mul(Dd::from(f))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.0 / o.0;
        two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.0 + self.1
    }
}

const LN2_DD: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

/// `exp(x)` for `x <= 0` in double-double.
pub fn dd_exp(x: Dd) -> Dd {
    if x.0 < -745.0 {
        return Dd::from(0.0);
    }
    let k = (x.0 / std::f64::consts::LN_2).round();
    let r = x.sub(LN2_DD.mul_f(k));
    // exp(r) = exp(r/1024)^1024
    let s = r.mul_f(1.0 / 1024.0);
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for i in 1..=20 {
        term = term.mul(s).mul(Dd::from(1.0).div(Dd::from(i as f64)));
        sum = sum.add(term);
    }
    for _ in 0..10 {
        sum = sum.mul(sum);
    }
    let scale = 2f64.powi(k as i32);
    if scale == 0.0 {
        // split the scaling to stay in the normal range
        let half = 2f64.powi((k / 2.0) as i32);
        let rest = 2f64.powi((k - (k / 2.0).trunc()) as i32);
        return Dd(sum.0 * half * rest, sum.1 * half * rest);
    }
    Dd(sum.0 * scale, sum.1 * scale)
}

/// `ln(1 + t)` for `t` in `[0, 1]` via one Newton step on `exp`.
pub fn dd_log1p(t: Dd) -> Dd {
    let y0 = t.to_f64().ln_1p();
    let one_plus = Dd::from(1.0).add(t);
    let e = dd_exp(Dd::from(-y0));
    Dd::from(y0).add(one_plus.mul(e).sub(Dd::from(1.0)))
}

/// Reference `−T·logsumexp(l/T)` at `T = 1` for a logit pair.
pub fn energy_reference(l: [f64; 2]) -> f64 {
    let (hi, lo) = if l[0] >= l[1] { (l[0], l[1]) } else { (l[1], l[0]) };
    let d = Dd::from(lo).sub(Dd::from(hi));
    let lse = Dd::from(hi).add(dd_log1p(dd_exp(d)));
    -lse.to_f64()
}

// ---------------------------------------------------------------------------
// Brute-force Shapley values for a single tree.

/// Cover-weighted conditional expectation given the features in `set`.
pub fn conditional_expectation(node: &TreeNode, x: &[f64], set: u32) -> f64 {
    match node {
        TreeNode::Leaf { distribution, .. } => distribution[1],
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left,
            right,
            ..
        } => {
            if set & (1 << feature) != 0 {
                let child = if x[*feature] <= *threshold { left } else { right };
                conditional_expectation(child, x, set)
            } else {
                (left.cover() * conditional_expectation(left, x, set)
                    + right.cover() * conditional_expectation(right, x, set))
                    / cover
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by enumerating all `2^d` coalitions.
pub fn brute_force_shap(tree: &TreeNode, x: &[f64], d: usize) -> Vec<f64> {
    let mut phi = vec![0.0; d];
    let full = factorial(d);
    for (i, p) in phi.iter_mut().enumerate() {
        for set in 0u32..(1 << d) {
            if set & (1 << i) != 0 {
                continue;
            }
            let s = set.count_ones() as usize;
            let w = factorial(s) * factorial(d - s - 1) / full;
            *p += w
                * (conditional_expectation(tree, x, set | (1 << i)) - conditional_expectation(tree, x, set));
        }
    }
    phi
}

/// Random tree with at most `max_leaves` leaves over `d` features. Covers
/// are random positive weights; internal covers are child sums.
pub fn random_tree(rng: &mut SplitMix64, d: usize, max_leaves: usize) -> TreeNode {
    let leaves = 1 + rng.below(max_leaves as u64) as usize;
    grow(rng, d, leaves)
}

fn grow(rng: &mut SplitMix64, d: usize, leaves: usize) -> TreeNode {
    if leaves == 1 {
        let p = if rng.next_f64() < 0.2 { rng.below(2) as f64 } else { rng.next_f64() };
        return TreeNode::Leaf {
            distribution: [1.0 - p, p],
            cover: 1.0 + rng.below(20) as f64,
        };
    }
    let left_leaves = 1 + rng.below((leaves - 1) as u64) as usize;
    let left = grow(rng, d, left_leaves);
    let right = grow(rng, d, leaves - left_leaves);
    TreeNode::Split {
        feature: rng.below(d as u64) as usize,
        threshold: rng.range_inclusive(-2, 2) as f64 / 2.0,
        cover: left.cover() + right.cover(),
        impurity_decrease: 0.0,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Random probe on a grid that hits split thresholds exactly now and then.
pub fn random_point(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.range_inclusive(-6, 6) as f64 / 4.0).collect()
}

// ---------------------------------------------------------------------------
// Forest datasets and properties.

pub fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

pub fn random_dataset(rng: &mut SplitMix64, n: usize, d: usize) -> (Matrix, Vec<usize>) {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, r)| match i {
            0 => 0,
            1 => 1,
            _ => usize::from(r[0] + 0.7 * rng.normal() > 0.0),
        })
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// Same shape and same split features; thresholds may differ.
pub fn same_structure(a: &TreeNode, b: &TreeNode) -> bool {
    match (a, b) {
        (TreeNode::Leaf { distribution: da, cover: ca }, TreeNode::Leaf { distribution: db, cover: cb }) => {
            da == db && ca == cb
        }
        (
            TreeNode::Split { feature: fa, left: la, right: ra, .. },
            TreeNode::Split { feature: fb, left: lb, right: rb, .. },
        ) => fa == fb && same_structure(la, lb) && same_structure(ra, rb),
        _ => false,
    }
}

pub fn ranking(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

/// One randomized monotone-invariance case; panics with the case number on
/// any difference.
pub fn monotone_invariance_case(case: usize) {
    let transforms: [fn(f64) -> f64; 3] = [f64::exp, |v| v * v * v + v, |v| 4.0 * v - 3.0];
    let mut rng = SplitMix64::for_role(2718, "monotone", case as u64);
    let d = 2 + rng.below(4) as usize;
    let n = 40 + rng.below(40) as usize;
    let (x, y) = random_dataset(&mut rng, n, d);
    let col = rng.below(d as u64) as usize;
    let f = transforms[case % transforms.len()];
    let mut xt = x.clone();
    xt.set_column(col, &x.column(col).iter().map(|&v| f(v)).collect::<Vec<_>>());
    let hp = Hyperparams { n_trees: 15, max_depth: 6, ..Hyperparams::default() };
    let a = fit_forest(&x, &y, &hp, names(d), case as u64).unwrap();
    let b = fit_forest(&xt, &y, &hp, names(d), case as u64).unwrap();
    for (ta, tb) in a.trees.iter().zip(&b.trees) {
        assert!(same_structure(ta, tb), "case {case}");
    }
    // midpoints move, so only points each tree was fitted on are comparable
    for (t, (ta, tb)) in a.trees.iter().zip(&b.trees).enumerate() {
        let counts = bootstrap_counts(x.n_rows, case as u64, t);
        for r in (0..x.n_rows).filter(|&r| counts[r] > 0) {
            assert_eq!(ta.predict(x.row(r)), tb.predict(xt.row(r)));
        }
    }
    assert_eq!(ranking(&mdi_importance(&a)), ranking(&mdi_importance(&b)));
}

pub fn imbalanced(rng: &mut SplitMix64, n: usize) -> (Matrix, Vec<usize>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = usize::from(i % 10 == 0);
        let shift = if c == 1 { 1.0 } else { 0.0 };
        rows.push(vec![rng.normal() + shift, rng.normal() + shift, rng.normal()]);
        y.push(c);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

pub fn minority_recall(f: &Forest, x: &Matrix, y: &[usize]) -> f64 {
    let p = f.predict_rows(x).unwrap();
    let hits = p.iter().zip(y).filter(|(&p, &c)| c == 1 && p >= 0.5).count();
    hits as f64 / y.iter().filter(|&&c| c == 1).count() as f64
}

pub fn balanced_vs_unweighted_recall(seeds: u64) -> (f64, f64) {
    let (mut bal, mut unw) = (0.0, 0.0);
    for s in 0..seeds {
        let mut rng = SplitMix64::for_role(s, "imbalanced", 0);
        let (x, y) = imbalanced(&mut rng, 300);
        let (xt, yt) = imbalanced(&mut rng, 300);
        let hp = Hyperparams { n_trees: 50, max_depth: 4, ..Hyperparams::default() };
        let plain = Hyperparams { class_weighting: ClassWeighting::None, ..hp.clone() };
        bal += minority_recall(&fit_forest(&x, &y, &hp, names(3), s).unwrap(), &xt, &yt);
        unw += minority_recall(&fit_forest(&x, &y, &plain, names(3), s).unwrap(), &xt, &yt);
    }
    (bal / seeds as f64, unw / seeds as f64)
}


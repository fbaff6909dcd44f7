mod common;

use common::{balanced_vs_unweighted_recall, monotone_invariance_case, names, random_dataset};
use proptest::prelude::*;
use rfdeep_core::forest::{fit_forest, fit_tree, Hyperparams, TreeNode};
use rfdeep_core::rng::SplitMix64;

#[test]
fn monotone_transform_of_one_column_changes_no_decision() {
    for case in 0..50 {
        monotone_invariance_case(case);
    }
}

#[test]
fn balanced_weights_raise_minority_recall() {
    let (bal, unw) = balanced_vs_unweighted_recall(20);
    assert!(bal >= unw, "balanced {bal} < unweighted {unw}");
}

#[test]
fn thread_count_does_not_change_the_forest() {
    let mut rng = SplitMix64::new(4);
    let (x, y) = random_dataset(&mut rng, 120, 6);
    let hp = Hyperparams { n_trees: 32, ..Hyperparams::default() };
    let fit = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_forest(&x, &y, &hp, names(6), 17).unwrap())
    };
    assert_eq!(fit(1), fit(8));
}

proptest! {
    #[test]
    fn predictions_are_distributions(seed in any::<u64>(), probe in prop::collection::vec(-5.0f64..5.0, 4)) {
        let mut rng = SplitMix64::new(seed);
        let (x, y) = random_dataset(&mut rng, 30, 4);
        let hp = Hyperparams { n_trees: 5, max_depth: 3, ..Hyperparams::default() };
        let f = fit_forest(&x, &y, &hp, names(4), seed).unwrap();
        let p = f.predict_proba(&probe).unwrap();
        prop_assert!(p[0] >= 0.0 && p[1] >= 0.0 && (p[0] + p[1] - 1.0).abs() <= 1e-12);
        for t in &f.trees {
            prop_assert!(t.depth() <= 3);
            let mut ok = true;
            t.for_each_split(&mut |feat, thr, _| ok &= feat < 4 && thr.is_finite());
            prop_assert!(ok);
        }
    }

    #[test]
    fn single_tree_leaves_are_valid(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let (x, y) = random_dataset(&mut rng, 25, 3);
        let w: Vec<f64> = (0..25).map(|_| rng.below(3) as f64).collect();
        let hp = Hyperparams { max_depth: 20, ..Hyperparams::default() };
        if let Ok(t) = fit_tree(&x, &y, &w, &hp, seed) {
            fn check(n: &TreeNode) -> bool {
                match n {
                    TreeNode::Leaf { distribution, cover } => {
                        *cover > 0.0 && distribution.iter().all(|&p| p >= 0.0)
                            && (distribution[0] + distribution[1] - 1.0).abs() <= 1e-12
                    }
                    TreeNode::Split { left, right, .. } => check(left) && check(right),
                }
            }
            prop_assert!(check(&t));
        }
    }
}

mod common;

use common::energy_reference;
use proptest::prelude::*;
use rfdeep_core::rng::SplitMix64;
use rfdeep_core::scores::{voxel_score, voxel_softmax, ScoreConfig, ScoreMethod};

fn energy(l: [f64; 2]) -> f64 {
    voxel_score(l, &ScoreConfig::new(ScoreMethod::Energy))
}

/// Half the pairs are close together so the `log1p` term matters.
fn random_pair(rng: &mut SplitMix64) -> [f64; 2] {
    let a = rng.uniform(-1e4, 1e4);
    let b = if rng.next_f64() < 0.5 { a + rng.uniform(-40.0, 40.0) } else { rng.uniform(-1e4, 1e4) };
    [a, b]
}

#[test]
fn energy_matches_double_double_reference() {
    let mut rng = SplitMix64::new(99);
    for _ in 0..10_000 {
        let l = random_pair(&mut rng);
        let r = energy_reference(l);
        let e = energy(l);
        assert!((e - r).abs() <= 1e-12 * r.abs().max(1.0), "{l:?}: {e} vs {r}");
    }
    for l in [[0.0, 0.0], [1.0, 2.0], [-3.5, 0.25], [30.0, -30.0]] {
        assert!((energy(l) - energy_reference(l)).abs() <= 1e-15);
    }
}

proptest! {
    #[test]
    fn extreme_logits_stay_finite(a in -1e4f64..1e4, b in -1e4f64..1e4) {
        let p = voxel_softmax([a, b]);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
        for m in ScoreMethod::ALL {
            prop_assert!(voxel_score([a, b], &ScoreConfig::new(m)).is_finite());
        }
    }
}

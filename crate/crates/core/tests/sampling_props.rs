use std::collections::BTreeSet;

use curricula::clip_pipeline::TrainingSample;
use curricula::sampling::{combine_pools, oversample_balance, split_balanced_subset, SamplePool};
use proptest::prelude::*;

fn pool(counts: &[usize], seed: u64, tag: &str) -> SamplePool {
    let samples = counts
        .iter()
        .enumerate()
        .flat_map(|(label, &n)| {
            (0..n).map(move |i| TrainingSample {
                clip_id: format!("{tag}{label:02}_{i:04}"),
                start_frame: 64 * (i % 3),
                frame_indices: vec![0],
                label,
                features: vec![label as f64, i as f64],
            })
        })
        .collect();
    SamplePool::with_classes(samples, counts.len(), seed, "test")
}

fn ids(p: &SamplePool) -> BTreeSet<(String, usize)> {
    p.entries()
        .iter()
        .map(|e| (e.sample.clip_id.clone(), e.sample.start_frame))
        .collect()
}

proptest! {
    #[test]
    fn oversampling_hits_target_exactly(counts in prop::collection::vec(0usize..20, 12), target in 0usize..40, seed in any::<u64>()) {
        let p = pool(&counts, seed, "x");
        let out = oversample_balance(&p, target);
        for (c, (&before, after)) in counts.iter().zip(out.class_counts()).enumerate() {
            let want = if before == 0 { 0 } else { before.max(target) };
            prop_assert_eq!(after, want, "class {}", c);
        }
        // no new identities; duplicates spread evenly inside a class
        prop_assert_eq!(ids(&out), ids(&p));
        for c in 0..12 {
            let mults: Vec<usize> = out.entries().iter().filter(|e| e.sample.label == c).map(|e| e.multiplicity).collect();
            if let (Some(lo), Some(hi)) = (mults.iter().min(), mults.iter().max()) {
                prop_assert!(hi - lo <= 1);
            }
        }
    }

    #[test]
    fn oversampling_is_deterministic(counts in prop::collection::vec(1usize..10, 4), seed in any::<u64>()) {
        let p = pool(&counts, seed, "x");
        prop_assert_eq!(oversample_balance(&p, 15).multiset(), oversample_balance(&p, 15).multiset());
    }

    #[test]
    fn combining_adds_multisets(a in prop::collection::vec(0usize..6, 3), b in prop::collection::vec(0usize..6, 3)) {
        let (pa, pb) = (pool(&a, 1, "a"), pool(&b, 2, "b"));
        let both = combine_pools(&[&pa, &pb]).unwrap();
        prop_assert_eq!(both.len(), pa.len() + pb.len());
        let sum: Vec<usize> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert_eq!(both.class_counts(), sum);
    }
}

#[test]
fn balanced_split_is_disjoint_and_exhaustive_over_100_seeds() {
    let counts = [7, 10, 3, 1, 0, 12, 5, 8, 9, 2, 6, 11];
    let p = pool(&counts, 0, "s");
    for seed in 0..100u64 {
        for fraction in [0.1, 0.5, 0.75] {
            let (sub, rest) = split_balanced_subset(&p, fraction, seed).unwrap();
            let (a, b) = (ids(&sub), ids(&rest));
            assert!(a.is_disjoint(&b), "seed {seed}");
            assert_eq!(a.union(&b).cloned().collect::<BTreeSet<_>>(), ids(&p), "seed {seed}");
            for (c, &n) in counts.iter().enumerate() {
                let exact = fraction * n as f64;
                let got = sub.class_counts()[c];
                assert!(got == exact.floor() as usize || got == exact.ceil() as usize, "seed {seed} class {c}: {got} vs {exact}");
            }
            let again = split_balanced_subset(&p, fraction, seed).unwrap();
            assert_eq!(again.0.multiset(), sub.multiset());
        }
    }
}

#[test]
fn split_rejects_degenerate_fractions() {
    let p = pool(&[4, 4], 0, "d");
    for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
        assert!(split_balanced_subset(&p, f, 0).is_err(), "{f}");
    }
}

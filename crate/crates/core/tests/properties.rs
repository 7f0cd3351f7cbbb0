use bcprior::clustering::kmeans_ovl;
use bcprior::densities::{
    read_datasets_csv, write_datasets_csv, Component, DatasetSummary, MixturePrior,
    PosteriorDensity, Provenance, Repr, WeightedComponent,
};
use bcprior::evidence::{scale_profile, select_k};
use bcprior::overlap::ovl;
use bcprior::posterior::update;
use bcprior::simkit::{calibrate_from_probabilities, rmse_with_trim, ETA_STEP};
use proptest::prelude::*;

fn normal() -> impl Strategy<Value = Component> {
    (-2.0..2.0f64, 0.05..2.0f64).prop_map(|(mean, sd)| Component::Normal { mean, sd })
}

fn beta() -> impl Strategy<Value = Component> {
    (0.5..50.0f64, 0.5..50.0f64).prop_map(|(a, b)| Component::Beta { a, b })
}

fn mixture(c: impl Strategy<Value = Component>) -> impl Strategy<Value = MixturePrior> {
    prop::collection::vec((c, 0.05..1.0f64), 1..4).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        let comps = parts
            .into_iter()
            .map(|(component, w)| WeightedComponent {
                component,
                weight: w / total,
            })
            .collect();
        MixturePrior::new(comps, Provenance::Map).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ovl_symmetric_and_bounded(f in normal(), g in normal()) {
        let a = ovl(&f, &g);
        let b = ovl(&g, &f);
        prop_assert!((a - b).abs() < 1e-3);
        prop_assert!((-1e-9..=1.0 + 1e-3).contains(&a));
        prop_assert!((ovl(&f, &f) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn beta_ovl_bounded(f in beta(), g in beta()) {
        let a = ovl(&f, &g);
        prop_assert!((-1e-9..=1.0 + 1e-3).contains(&a));
    }

    #[test]
    fn beta_update_adds_counts(prior in mixture(beta()), n in 1u64..200, frac in 0.0..=1.0f64) {
        let r = (n as f64 * frac).floor() as u64;
        let post = update(&prior, &DatasetSummary::binary("x", r, n).unwrap()).unwrap();
        let wsum: f64 = post.weights().iter().sum();
        prop_assert!((wsum - 1.0).abs() < 1e-12);
        for (p, q) in prior.components().iter().zip(post.components()) {
            match (p.component, q.component) {
                (Component::Beta { a, b }, Component::Beta { a: a1, b: b1 }) => {
                    prop_assert!((a1 - a - r as f64).abs() < 1e-9);
                    prop_assert!((b1 - b - (n - r) as f64).abs() < 1e-9);
                }
                _ => prop_assert!(false),
            }
        }
    }

    #[test]
    fn normal_update_shrinks(prior in mixture(normal()), n in 2u64..200, ybar in -2.0..2.0f64, s in 0.1..3.0f64) {
        let post = update(&prior, &DatasetSummary::continuous("x", n, ybar, s).unwrap()).unwrap();
        for (p, q) in prior.components().iter().zip(post.components()) {
            match (p.component, q.component) {
                (Component::Normal { mean, sd }, Component::Normal { mean: m1, sd: s1 }) => {
                    prop_assert!(s1 < sd);
                    prop_assert!(m1 >= mean.min(ybar) - 1e-12 && m1 <= mean.max(ybar) + 1e-12);
                }
                _ => prop_assert!(false),
            }
        }
    }

    #[test]
    fn trimming_never_raises_rmse(biases in prop::collection::vec(-1.0..1.0f64, 1..200)) {
        let (full, trimmed) = rmse_with_trim(&biases, &[0.0, 0.05, 0.15]);
        prop_assert!((trimmed[0].rmse - full).abs() < 1e-12);
        prop_assert!(trimmed[1].rmse <= trimmed[0].rmse + 1e-12);
        prop_assert!(trimmed[2].rmse <= trimmed[1].rmse + 1e-12);
    }

    #[test]
    fn soei_profile_monotone(oei in prop::collection::vec(0.01..1.0f64, 1..20), t in 0.05..1.0f64) {
        let (soei, _) = scale_profile(&oei);
        prop_assert!(soei.windows(2).all(|w| w[0] <= w[1]));
        let k = select_k(&soei, t);
        prop_assert!((1..=oei.len()).contains(&k));
        prop_assert!(soei[..k - 1].iter().all(|&s| s < t));
        if k < oei.len() {
            prop_assert!(soei[k - 1] >= t);
        }
    }

    #[test]
    fn calibration_is_minimal(probs in prop::collection::vec(0.0..1.0f64, 20..200), target in 0.01..0.2f64) {
        let c = calibrate_from_probabilities(&probs, target);
        let rate = |eta: f64| probs.iter().filter(|&&p| p > eta).count() as f64 / probs.len() as f64;
        if c.attained {
            prop_assert!(c.achieved_alpha <= target);
            if c.eta > 0.5 {
                prop_assert!(rate(c.eta - ETA_STEP) > target);
            }
        }
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((1u64..500, -5.0..5.0f64, 0.01..5.0f64), 1..10)) {
        let data: Vec<DatasetSummary> = rows
            .iter()
            .enumerate()
            .map(|(i, &(n, m, s))| DatasetSummary::continuous(format!("S{i}"), n, m, s).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_datasets_csv(&data, &mut buf).unwrap();
        prop_assert_eq!(read_datasets_csv(&buf[..]).unwrap(), data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kmeans_partition_is_complete(means in prop::collection::vec(0.0..1.0f64, 3..7), k in 1usize..3, seed in 0u64..1000) {
        let posts: Vec<PosteriorDensity> = means
            .iter()
            .enumerate()
            .map(|(i, &m)| PosteriorDensity::new(format!("s{i}"), 10, Repr::Parametric(Component::Normal { mean: m, sd: 0.1 })).unwrap())
            .collect();
        let p = kmeans_ovl(&posts, k, seed, 3, 50).unwrap();
        prop_assert_eq!(p.assignment.len(), posts.len());
        let ids = p.member_ids();
        prop_assert_eq!(ids.len(), k);
        prop_assert!(ids.iter().all(|c| !c.is_empty()));
        prop_assert!(p.centroids.windows(2).all(|w| w[0].mu <= w[1].mu));
        prop_assert!(p.oci > 0.0 && p.oci <= posts.len() as f64 + 1e-6);
    }
}

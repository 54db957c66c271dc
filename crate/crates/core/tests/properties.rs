//! Randomized invariants across the library: graph/trace identities, CMC
//! rank statistics, kernel alignment scaling, and storage round trips.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use mkssl_core::data::{
    load_feature_set, save_feature_set, FeatureSet, FileFormat, Ratio, SplitTag,
};
use mkssl_core::dense;
use mkssl_core::eval::{image_cmc, person_cmc};
use mkssl_core::graph::{laplacian, knn_cross_view_weights, GraphRole, WeightMatrix};
use mkssl_core::kernels::{alignment_score, ideal_kernel};
use mkssl_core::learner::objective;

fn features_strategy(d: usize, n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0f64..1.0, d * n)
        .prop_map(move |v| DMatrix::from_vec(d, n, v))
}

fn graph_strategy(n: usize, role: GraphRole) -> impl Strategy<Value = WeightMatrix> {
    proptest::collection::vec(proptest::bool::ANY, n * (n - 1) / 2).prop_map(move |bits| {
        let mut w = DMatrix::<f64>::zeros(n, n);
        let mut idx = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if bits[idx] {
                    w[(i, j)] = 1.0;
                    w[(j, i)] = 1.0;
                }
                idx += 1;
            }
        }
        if role == GraphRole::Labeled {
            for i in 0..n {
                w[(i, i)] = 1.0;
            }
        }
        WeightMatrix::new(w, role).expect("constructed valid")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// tr(U^T X L X^T U) equals the half pairwise sum for any 0/1 graph.
    #[test]
    fn trace_equals_pairwise_half_sum(
        x in features_strategy(5, 9),
        u in features_strategy(5, 3),
        w in graph_strategy(9, GraphRole::Pseudo),
    ) {
        let lap = laplacian(&w);
        let trace = dense::frob_inner(&(&x * &lap.laplacian * x.transpose() * &u), &u);
        let z = u.transpose() * &x;
        let mut pairwise = 0.0;
        for i in 0..9 {
            for j in 0..9 {
                pairwise += 0.5 * w.matrix()[(i, j)] * (z.column(i) - z.column(j)).norm_squared();
            }
        }
        let tol = 1e-8 * pairwise.abs().max(1.0);
        prop_assert!((trace - pairwise).abs() <= tol, "trace {trace} vs pairwise {pairwise}");
    }

    /// The objective helper agrees with the same identity end to end.
    #[test]
    fn objective_total_matches_manual_sum(
        x_l in features_strategy(4, 6),
        x_u in features_strategy(4, 5),
        u in features_strategy(4, 2),
        w_u in graph_strategy(5, GraphRole::Pseudo),
        eta in 0.0f64..3.0,
    ) {
        let ids = [1i64, 1, 2, 2, 3, 3];
        let w_l = mkssl_core::graph::label_weights(&ids);
        let terms = objective(&x_l, Some(&x_u), &u, &w_l, Some(&w_u), eta).unwrap();
        prop_assert!(terms.labeled >= -1e-9);
        prop_assert!(terms.unlabeled >= -1e-9);
        let total = terms.labeled + eta * terms.unlabeled;
        prop_assert!((terms.total() - total).abs() <= 1e-12 * total.abs().max(1.0));
    }

    /// Cross-view KNN graphs never link samples that share a view, are
    /// symmetric 0/1 with an empty diagonal, and give every node a neighbor.
    #[test]
    fn knn_graph_structure(
        z in features_strategy(3, 10),
        k in 1usize..3,
    ) {
        let views: Vec<u32> = (0..10).map(|i| (i % 2) as u32).collect();
        let w = knn_cross_view_weights(&z, &views, k).unwrap();
        let m = w.matrix();
        for i in 0..10 {
            prop_assert_eq!(m[(i, i)], 0.0);
            let mut degree = 0.0;
            for j in 0..10 {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                prop_assert!(m[(i, j)] == 0.0 || m[(i, j)] == 1.0);
                if views[i] == views[j] {
                    prop_assert_eq!(m[(i, j)], 0.0);
                }
                degree += m[(i, j)];
            }
            prop_assert!(degree >= k as f64, "node {i} has degree {degree} < k");
        }
    }

    /// Rank statistics ignore any strictly increasing distance transform.
    #[test]
    fn cmc_invariant_under_increasing_transform(
        d in features_strategy(6, 8),
    ) {
        let dists = d.map(|v| v.abs());
        let probes: Vec<i64> = (0..6).collect();
        let gallery: Vec<Option<i64>> = (0..8)
            .map(|j| if j < 6 { Some(j as i64) } else { None })
            .collect();
        let base = image_cmc(&dists, &probes, &gallery).unwrap();
        let affine = image_cmc(&dists.map(|v| 3.0 * v + 0.7), &probes, &gallery).unwrap();
        let cubed = image_cmc(&dists.map(|v| v.powi(3)), &probes, &gallery).unwrap();
        prop_assert_eq!(&base, &affine);
        prop_assert_eq!(&base, &cubed);
    }

    /// Collapsing gallery images to per-person minima can only improve a
    /// probe's rank, so the person-level curve dominates pointwise.
    #[test]
    fn person_curve_dominates_image_curve(
        d in features_strategy(7, 12),
    ) {
        let dists = d.map(|v| v.abs());
        let gallery: Vec<Option<i64>> = (0..12)
            .map(|j| if j % 4 == 3 { None } else { Some((j % 4) as i64) })
            .collect();
        let probes: Vec<i64> = vec![0, 1, 2, 0, 1, 2, 0];
        let img = image_cmc(&dists, &probes, &gallery).unwrap();
        let per = person_cmc(&dists, &probes, &gallery).unwrap();
        for k in 1..=per.rates.len() {
            prop_assert!(per.rate_at(k) + 1e-12 >= img.rate_at(k));
        }
    }

    /// Alignment is scale invariant in either argument.
    #[test]
    fn alignment_ignores_positive_scaling(
        x in features_strategy(4, 7),
        scale in 0.01f64..100.0,
    ) {
        let k = x.transpose() * &x;
        let ideal = ideal_kernel(&[1, 1, 2, 2, 3, 3, 3]);
        let base = alignment_score(&k, &ideal).unwrap();
        let scaled = alignment_score(&(&k * scale), &ideal).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.abs().max(1.0));
        let self_aligned = alignment_score(&ideal, &ideal).unwrap();
        prop_assert!((self_aligned - 1.0).abs() <= 1e-12);
    }

    /// Storage round trips preserve features to full precision and all
    /// metadata, in both formats.
    #[test]
    fn feature_storage_round_trips_are_exact(
        x in features_strategy(3, 5),
        ids in proptest::collection::vec(0i64..4, 5),
        tag_bits in proptest::collection::vec(proptest::bool::ANY, 5),
    ) {
        let person_ids: Vec<Option<i64>> = ids.iter().map(|&i| Some(i)).collect();
        let view_ids: Vec<u32> = (0..5).map(|i| (i % 2) as u32).collect();
        let tags: Vec<SplitTag> = tag_bits
            .iter()
            .map(|&b| if b { SplitTag::Labeled } else { SplitTag::Unlabeled })
            .collect();
        let fs = FeatureSet::new(x, person_ids, view_ids, tags).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("rt.csv", FileFormat::Csv), ("rt.bin", FileFormat::Binary)] {
            let path = dir.path().join(name);
            save_feature_set(&fs, &path, format).unwrap();
            let back = load_feature_set(&path, format).unwrap();
            prop_assert_eq!(fs.features(), back.features());
            prop_assert_eq!(fs.person_ids(), back.person_ids());
            prop_assert_eq!(fs.view_ids(), back.view_ids());
            prop_assert_eq!(fs.split_tags(), back.split_tags());
        }
    }

    /// Ratio parsing round trips through display.
    #[test]
    fn ratio_display_parse_round_trip(num in 1u64..30, den in 1u64..30) {
        let r = Ratio::new(num, den.max(num)).unwrap();
        let back = Ratio::parse(&r.to_string()).unwrap();
        prop_assert_eq!(r, back);
    }
}

/// Monte Carlo chance level: under random distances the rank-1 rate sits
/// near 1/G.
#[test]
fn random_distance_rank1_matches_chance_level() {
    let g = 50usize;
    let probes_n = 200usize;
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut uniform = move || {
        state = mkssl_core::util::splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut rank1_sum = 0.0;
    let rounds = 40;
    for _ in 0..rounds {
        let d = DMatrix::from_fn(probes_n, g, |_, _| uniform());
        let probes: Vec<i64> = (0..probes_n as i64).map(|i| i % g as i64).collect();
        let gallery: Vec<Option<i64>> = (0..g as i64).map(Some).collect();
        let curve = image_cmc(&d, &probes, &gallery).unwrap();
        rank1_sum += curve.rate_at(1);
    }
    let mean = rank1_sum / rounds as f64;
    let p = 1.0 / g as f64;
    // Standard error of the mean over rounds * probes Bernoulli draws.
    let sigma = (p * (1.0 - p) / (rounds * probes_n) as f64).sqrt();
    assert!(
        (mean - p).abs() < 3.0 * sigma + 1e-12,
        "chance level violated: mean {mean} vs {p} (sigma {sigma})"
    );
}

/// Degree vector of the Laplacian pair matches row sums, and the quadratic
/// form is PSD on random graphs.
#[test]
fn laplacian_degrees_and_psd() {
    let mut state = 7u64;
    let mut uniform = move || {
        state = mkssl_core::util::splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let n = 8;
        let mut w = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if uniform() < 0.4 {
                    w[(i, j)] = 1.0;
                    w[(j, i)] = 1.0;
                }
            }
        }
        let wm = WeightMatrix::new(w, GraphRole::Pseudo).unwrap();
        let lap = laplacian(&wm);
        for i in 0..n {
            assert_eq!(lap.degrees[i], wm.matrix().row(i).sum());
        }
        let v = DVector::from_fn(n, |i, _| uniform() - 0.5 + i as f64 * 0.01);
        let q = (&lap.laplacian * &v).dot(&v);
        assert!(q >= -1e-10, "Laplacian form went negative: {q}");
    }
}

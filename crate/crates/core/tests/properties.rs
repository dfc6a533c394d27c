use disentaforge::eval::{roc_auc, video_auc};
use disentaforge::iacc::{gaussian_stats, info_loss, kl_diag_gauss, purify, BranchFeatures, NoiseMode};
use disentaforge_autograd::{Graph, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Scores on a coarse grid (so ties occur) with both labels present.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..60).prop_flat_map(|n| {
        (prop::collection::vec(0u32..12, n), prop::collection::vec(0u8..2, n - 2)).prop_map(|(s, mut l)| {
            l.extend([0, 1]);
            (s.into_iter().map(|v| v as f64 / 11.0).collect(), l)
        })
    })
}

fn feature(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn auc_depends_only_on_ranks((scores, labels) in scored_labels()) {
        let warped: Vec<f64> = scores.iter().map(|s| s * s * s + 2.0 * s - 7.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&warped, &labels).unwrap());
    }

    #[test]
    fn flipping_labels_complements_auc(perm in Just((0..30).collect::<Vec<usize>>()).prop_shuffle(), labels in prop::collection::vec(0u8..2, 28)) {
        let scores: Vec<f64> = perm.iter().map(|&i| i as f64).collect();
        let mut labels = labels;
        labels.extend([0, 1]);
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn video_auc_with_single_frame_groups_is_frame_auc((scores, labels) in scored_labels()) {
        let groups: Vec<String> = (0..scores.len()).map(|i| format!("g{i}")).collect();
        prop_assert_eq!(video_auc(&scores, &groups, &labels).unwrap(), roc_auc(&scores, &labels).unwrap());
    }

    #[test]
    fn purify_interpolates_linearly(data in prop::collection::vec(-5.0f64..5.0, 36), w in 0.0f64..1.0, seed in any::<u64>()) {
        let g = Graph::new();
        let shape = [2, 2, 3, 3];
        let x = g.constant(feature(&shape, &data));
        let out = purify(x, g.full(&shape, w), NoiseMode::Sample(seed)).unwrap().value();
        let eps = purify(x, g.full(&shape, 1.0), NoiseMode::Sample(seed)).unwrap().value();
        for ((o, f), e) in out.data().iter().zip(&data).zip(eps.data()) {
            prop_assert!((o - ((1.0 - w) * f + w * e)).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_ignores_spatial_order(
        a in prop::collection::vec(-3.0f64..3.0, 32),
        b in prop::collection::vec(-3.0f64..3.0, 32),
        perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        // Same permutation of the 8 spatial positions in every (sample, channel) block.
        let shape = [2, 2, 2, 4];
        let shuffle = |v: &[f64]| -> Vec<f64> {
            let mut out = v.to_vec();
            for block in 0..4 {
                for (k, &src) in perm.iter().enumerate() {
                    out[block * 8 + k] = v[block * 8 + src];
                }
            }
            out
        };
        let g = Graph::new();
        let kl = |x: &[f64], y: &[f64]| {
            let p = gaussian_stats(g.constant(feature(&shape, x))).unwrap();
            let q = gaussian_stats(g.constant(feature(&shape, y))).unwrap();
            kl_diag_gauss(&p, &q).unwrap().item()
        };
        let base = kl(&a, &b);
        prop_assert!(base >= 0.0);
        let moved = kl(&shuffle(&a), &shuffle(&b));
        prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn separating_identity_from_artifact_lowers_info_loss(shift in 0.0f64..1.5, extra in 0.05f64..1.0) {
        let g = Graph::new();
        let shape = [2, 3, 2, 2];
        let base: Vec<f64> = (0..24).map(|i| (i as f64 * 0.9).sin()).collect();
        let art = g.constant(feature(&shape, &base));
        let total = |s: f64| {
            let id = g.constant(feature(&shape, &base.iter().map(|v| v + s).collect::<Vec<_>>()));
            let b = BranchFeatures { id_raw: id, art_raw: art, art_pure: art };
            info_loss(&[b, b]).unwrap().total.item()
        };
        prop_assert!(total(shift + extra) < total(shift));
    }
}

#[test]
fn gaussian_stats_of_standard_normal_samples() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let g = Graph::new();
    let stats = gaussian_stats(g.constant(feature(&[n, 1, 1, 1], &data))).unwrap();
    let (mean, var) = (stats.mean_values()[0], stats.var_values()[0]);
    let nf = n as f64;
    assert!(mean.abs() < 3.0 / nf.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 3.0 * (2.0 / nf).sqrt(), "var {var}");
}

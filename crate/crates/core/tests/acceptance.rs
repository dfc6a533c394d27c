//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test --test acceptance` runs all nine; `-- 1 4 8` runs a subset.
//! Training runs are cached under `target/acceptance/`; delete it to retrain.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use disentaforge::eval::{
    evaluate, roc_auc, run_ablation_matrix, separation_silhouette, split_positions, train_or_reuse, video_auc,
    AblationTable, EmbeddingDump, EmbeddingKind,
};
use disentaforge::iacc::{self, BranchFeatures, GaussianStats, NoiseMode};
use disentaforge::losses::{self, LossWeights};
use disentaforge::net::{Ablation, Bundle, ModelConfig, Phase};
use disentaforge::synth::{build_corpus, CorpusManifest, GeneratorConfig, SPLIT_TEST_IN};
use disentaforge::trainer::{
    checkpoint_path, load_checkpoint, loss_terms, save_checkpoint, train, Checkpoint, ImageSet, PairBatch, TrainConfig,
};
use disentaforge_autograd::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Feature width of every training run here (the library default is 64).
const RUN_D: usize = 32;
const RUN_STEPS: u64 = 3000;
const SEEDS: [u64; 3] = [0, 1, 2];
/// Identities of the corpus for the cross-method ablation (criteria 7 and 9).
const TREND_IDENTITIES: usize = 48;

type Verdict = (bool, String);

fn run_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance")
}

fn run_model() -> ModelConfig {
    ModelConfig { d: RUN_D, classifier_hidden: RUN_D, ..ModelConfig::default() }
}

fn corpus(config: &GeneratorConfig) -> (CorpusManifest, ImageSet) {
    let (manifest, images) = build_corpus(config).unwrap();
    let records: Vec<_> = manifest.records.iter().collect();
    let imgs: Vec<_> = images.iter().collect();
    let set = ImageSet::from_images(config.image_size, &records, &imgs).unwrap();
    (manifest, set)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// 1 ------------------------------------------------------------------------

fn gradient_integrity() -> Verdict {
    let model = micro_model(Ablation::Full);
    let store = model.init_params::<f64>();
    let hw = model.config.feature_hw();
    let d = model.config.d;
    let fmap = |phase: f64| wave(&[2, d, hw, hw], phase);
    let fmap2 = |phase: f64| wave(&[2, 2 * d, hw, hw], phase);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut record = |name: &'static str, r: disentaforge_autograd::GradCheckReport| {
        worst.insert(name, r.max_rel_error());
    };

    for (name, prefix) in [("encoder1", "enc1."), ("encoder2", "enc2.")] {
        record(
            name,
            check_with_params(&store, &[prefix], &[images(2, 16, 0.2)], |g, p, x| {
                let (a, b) = model.encode_identities(p, x[0]).unwrap();
                project(g, if prefix == "enc1." { a } else { b })
            }),
        );
    }
    record(
        "separator",
        check_with_params(&store, &["sep."], &[fmap(0.1), fmap(0.9)], |g, p, x| {
            let ((a, b), (c, e)) = model.separate_artifacts(p, x[0], x[1]).unwrap();
            project(g, Var::concat(&[a, b, c, e], 1))
        }),
    );
    for (name, branch, prefix) in [("dcam_gate1", 0, "dcam1."), ("dcam_gate2", 1, "dcam2.")] {
        record(
            name,
            check_with_params(&store, &[prefix], &[fmap(0.3), fmap(1.3)], |g, p, x| {
                project(g, model.dcam_gate(p, branch, x[0], x[1]).unwrap())
            }),
        );
    }
    let gate = fmap(2.0).map(|v| 0.5 + 0.4 * v);
    for (name, mode) in [("purify_sample", NoiseMode::Sample(11)), ("purify_mean", NoiseMode::Mean)] {
        let r = disentaforge_autograd::check_gradients(&[fmap(0.4), gate.clone()], FD_STEP, FD_ENTRIES, |g, x| {
            project(g, iacc::purify(x[0], x[1], mode).unwrap())
        });
        record(name, r);
    }
    record(
        "decoder",
        check_with_params(&store, &["dec."], &[fmap2(0.5), fmap2(1.5)], |g, p, x| {
            project(g, model.decode_face(p, x[0], x[1]).unwrap())
        }),
    );
    record(
        "classifier",
        check_with_params(&store, &["cls."], &[fmap2(0.7)], |g, p, x| project(g, model.classify(p, x[0]).unwrap())),
    );

    let probs = Tensor::from_f64(&[2], &[0.3, 0.8]).unwrap();
    record(
        "bce_loss",
        disentaforge_autograd::check_gradients(&[probs], FD_STEP, FD_ENTRIES, |g, x| {
            let labels = g.constant(Tensor::from_f64(&[2], &[0.0, 1.0]).unwrap());
            losses::bce_loss(x[0], labels).unwrap()
        }),
    );
    // Reconstructions sit well away from the originals so |a - b| stays differentiable.
    let imgs: Vec<Tensor<f64>> = (0..6).map(|k| images(1, 16, 0.05 * k as f64).map(|v| v + 0.3 * k as f64)).collect();
    record(
        "reconstruction_loss",
        disentaforge_autograd::check_gradients(&imgs, FD_STEP, FD_ENTRIES, |_, x| {
            let (s, c) = losses::reconstruction_loss((x[0], x[1]), (x[2], x[3]), (x[4], x[5])).unwrap();
            s.scale(0.7) + c
        }),
    );
    let maps: Vec<Tensor<f64>> = (0..4).map(|k| wave(&[2, d, hw, hw], 0.5 * k as f64)).collect();
    record(
        "separation_contrastive_loss",
        disentaforge_autograd::check_gradients(&maps, FD_STEP, FD_ENTRIES, |_, x| {
            let bundle = Bundle { id_raw: [x[0], x[1]], art_raw: [x[2], x[3]], id_pure: [x[0], x[1]], art_pure: [x[2], x[3]], gate: None };
            let (r, f) = losses::separation_contrastive_loss(&bundle.narrow_batch(0, 1), &bundle.narrow_batch(1, 1)).unwrap();
            r.scale(0.6) + f
        }),
    );
    let feats: Vec<Tensor<f64>> =
        (0..6).map(|k| wave(&[2, d, hw, hw], 0.9 * k as f64).map(|v| v * (0.5 + 0.2 * k as f64) + 0.1 * k as f64)).collect();
    record(
        "info_loss",
        disentaforge_autograd::check_gradients(&feats, FD_STEP, FD_ENTRIES, |_, x| {
            let b = [
                BranchFeatures { id_raw: x[0], art_raw: x[1], art_pure: x[2] },
                BranchFeatures { id_raw: x[3], art_raw: x[4], art_pure: x[5] },
            ];
            iacc::info_loss(&b).unwrap().total
        }),
    );
    // The whole weighted objective of one (real, fake) pair, w.r.t. every weight.
    // The composed objective shows third-order truncation error at the block step.
    let batch = PairBatch { images: images(2, 16, 0.6), labels: Tensor::from_f64(&[2], &[0.0, 1.0]).unwrap(), pairs: 1 };
    let trainable: Vec<&str> = vec!["enc1.", "enc2.", "sep.", "dcam1.", "dcam2.", "dec.", "cls."];
    record(
        "full_objective",
        check_with_params_at(FD_STEP_FINE, &store, &trainable, &[], |g, p, _| {
            let (terms, _) = loss_terms(&model, g, p, &batch, Phase::Train { noise_seed: 3 }).unwrap();
            terms.total(&LossWeights::default(), 0).unwrap().0
        }),
    );

    let failing: Vec<String> =
        worst.iter().filter(|(_, e)| !(**e < FD_TOL)).map(|(n, e)| format!("{n} {e:.2e}")).collect();
    let max = worst.values().copied().fold(0.0, f64::max);
    if failing.is_empty() {
        (true, format!("{} checks, worst relative error {max:.2e} (< {FD_TOL:.0e})", worst.len()))
    } else {
        (false, format!("over tolerance: {}", failing.join(", ")))
    }
}

// 2 ------------------------------------------------------------------------

fn gaussian<'g>(g: &'g Graph<f64>, mean: &[f64], var: &[f64]) -> GaussianStats<'g, f64> {
    GaussianStats {
        mean: g.constant(Tensor::from_f64(&[mean.len()], mean).unwrap()),
        var: g.constant(Tensor::from_f64(&[var.len()], var).unwrap()),
    }
}

/// Channel-mean KL(p || q) estimated from `n` samples of p.
fn monte_carlo_kl(pm: &[f64], pv: &[f64], qm: &[f64], qv: &[f64], n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let c = pm.len();
    let mut total = 0.0;
    for _ in 0..n {
        let mut log_ratio = 0.0;
        for k in 0..c {
            let z: f64 = StandardNormal.sample(rng);
            let x = pm[k] + pv[k].sqrt() * z;
            let lp = -0.5 * (pv[k].ln() + (x - pm[k]).powi(2) / pv[k]);
            let lq = -0.5 * (qv[k].ln() + (x - qm[k]).powi(2) / qv[k]);
            log_ratio += lp - lq;
        }
        total += log_ratio;
    }
    total / n as f64 / c as f64
}

fn kl_oracle() -> Verdict {
    let g = Graph::new();
    let half = iacc::kl_diag_gauss(&gaussian(&g, &[0.0], &[1.0]), &gaussian(&g, &[1.0], &[1.0])).unwrap().item();
    let same = iacc::kl_diag_gauss(&gaussian(&g, &[0.3, -1.0], &[0.5, 2.0]), &gaussian(&g, &[0.3, -1.0], &[0.5, 2.0]))
        .unwrap()
        .item();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let c = 3;
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..c).map(|_| rng.gen_range(lo..hi)).collect() };
        let (pm, qm) = (draw(-1.5, 1.5), draw(-1.5, 1.5));
        let (pv, qv): (Vec<f64>, Vec<f64>) = (draw(-1.0, 1.0), draw(-1.0, 1.0));
        let (pv, qv): (Vec<f64>, Vec<f64>) = (pv.iter().map(|v| v.exp()).collect(), qv.iter().map(|v| v.exp()).collect());
        let closed = iacc::kl_diag_gauss(&gaussian(&g, &pm, &pv), &gaussian(&g, &qm, &qv)).unwrap().item();
        let mc = monte_carlo_kl(&pm, &pv, &qm, &qv, 1_000_000, &mut rng);
        worst = worst.max(rel(mc, closed));
    }
    let pass = half == 0.5 && same == 0.0 && worst < 0.02;
    (pass, format!("KL(N(0,1)||N(1,1)) = {half}, KL(p||p) = {same}, worst Monte-Carlo deviation {:.3}% over 20 pairs", worst * 100.0))
}

// 3 ------------------------------------------------------------------------

fn iacc_limits() -> Verdict {
    let g = Graph::new();
    let shape = [512, 3, 2, 2];
    let feat_t = Tensor::from_fn(&shape, |i| {
        let ch = (i / 4) % 3;
        (1.0 + ch as f64) * (1.0 + 0.5 * ((i as f64) * 0.7548776).sin())
    });
    let feat = g.constant(feat_t.clone());
    let zero = g.constant(Tensor::zeros(&shape));
    let one = g.constant(Tensor::full(&shape, 1.0));
    let kept = iacc::purify(feat, zero, NoiseMode::Sample(1)).unwrap().value();
    let exact = kept.data() == feat_t.data();

    let stats = iacc::gaussian_stats(feat).unwrap();
    let replaced = iacc::purify(feat, one, NoiseMode::Sample(9)).unwrap();
    let out = iacc::gaussian_stats(replaced).unwrap();
    let mut worst = 0.0f64;
    for (a, b) in out.mean_values().iter().zip(stats.mean_values()) {
        worst = worst.max(rel(*a, b));
    }
    for (a, b) in out.var_values().iter().zip(stats.var_values()) {
        worst = worst.max(rel(*a, b));
    }

    let f = g.constant(wave(&[2, 3, 2, 2], 0.2));
    let branch = BranchFeatures { id_raw: f, art_raw: f, art_pure: f };
    let info = iacc::info_loss(&[branch, branch]).unwrap().total.item();
    let pass = exact && worst < 0.10 && info == 1.5;
    (pass, format!("W=0 bit-exact: {exact}; W=1 moment deviation {:.2}%; info loss at equal distributions {info}", worst * 100.0))
}

// 4 ------------------------------------------------------------------------

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut twice = 0u128;
    let (mut p, mut n) = (0u128, 0u128);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                twice += if scores[i] > scores[j] {
                    2
                } else if scores[i] == scores[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

fn auc_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = 0;
    for k in 0..100 {
        let n = rng.gen_range(2..120);
        let levels = if k % 2 == 0 { 7 } else { 100_000 };
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        if roc_auc(&scores, &labels).unwrap() != brute_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    let mut video_bad = 0;
    for _ in 0..20 {
        let groups = rng.gen_range(2..12);
        let mut ids = Vec::new();
        let mut frame_labels = Vec::new();
        let mut scores = Vec::new();
        let mut means = Vec::new();
        let mut group_labels = Vec::new();
        for gi in 0..groups {
            let label = if gi < 2 { gi as u8 } else { rng.gen_range(0..2) };
            let frames = rng.gen_range(1..6);
            let s: Vec<f64> = (0..frames).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            means.push(s.iter().sum::<f64>() / frames as f64);
            group_labels.push(label);
            for v in s {
                ids.push(format!("g{gi:03}"));
                frame_labels.push(label);
                scores.push(v);
            }
        }
        if video_auc(&scores, &ids, &frame_labels).unwrap() != roc_auc(&means, &group_labels).unwrap() {
            video_bad += 1;
        }
    }
    (mismatches == 0 && video_bad == 0, format!("{mismatches}/100 frame mismatches vs pair counting, {video_bad}/20 video mismatches"))
}

// 5 ------------------------------------------------------------------------

fn classifier_blindness() -> Verdict {
    let model = micro_model(Ablation::Full);
    let store = model.init_params::<f64>();
    let g = Graph::new();
    let p = model.bind(&store, &g);
    let x = g.constant(images(4, 16, 1.1));
    let out = model.forward(&p, x, Phase::Infer).unwrap();
    let bundle = out.bundle.unwrap();
    let id = out.id.unwrap();

    let shape = bundle.id_pure[0].shape();
    let noise = |k: f64| g.constant(wave(&shape, k).map(|v| 3.0 * v));
    let perturbed = Bundle { id_pure: [bundle.id_pure[0] + noise(0.1), bundle.id_pure[1] + noise(2.0)], ..bundle };
    let (id_p, art_p) = model.aggregate(&perturbed).unwrap();
    let probs_p = model.classify(&p, art_p).unwrap().value();
    let identical = probs_p.data() == out.probs.value().data();
    let id_changed = id_p.value().data() != id.value().data();

    // Re-enter the pure features as leaves: only the artifact ones may receive gradient.
    let h = Graph::new();
    let q = model.bind(&store, &h);
    let leaf = |v: Var<'_, f64>| h.leaf(v.value().as_ref().clone());
    let detached = Bundle {
        id_raw: bundle.id_raw.map(leaf),
        art_raw: bundle.art_raw.map(leaf),
        id_pure: bundle.id_pure.map(leaf),
        art_pure: bundle.art_pure.map(leaf),
        gate: None,
    };
    let (_, art) = model.aggregate(&detached).unwrap();
    let grads = h.backward(model.classify(&q, art).unwrap().sum_all());
    let id_isolated = detached.id_pure.iter().chain(&detached.id_raw).all(|v| grads.get(*v).is_none());
    let art_reached = detached.art_pure.iter().all(|v| grads.get(*v).is_some());
    (
        identical && id_changed && id_isolated && art_reached,
        format!("probabilities bit-identical after perturbing ID: {identical}; no gradient path from ID to probabilities: {id_isolated}"),
    )
}

// 6 ------------------------------------------------------------------------

fn trainability() -> Verdict {
    let gen = GeneratorConfig::default();
    let (manifest, images) = corpus(&gen);
    let mut first = Vec::new();
    let mut last = Vec::new();
    let mut aucs = Vec::new();
    for seed in SEEDS {
        let config = TrainConfig { seed, steps: RUN_STEPS, ablation: Ablation::Full, ..TrainConfig::default() };
        let dir = run_root().join("trainability").join(format!("seed-{seed}"));
        let ckpt = train_or_reuse::<f32>(&manifest, &images, &run_model(), &config, &dir).unwrap();
        let h = &ckpt.state.history;
        first.push(h[0].bce);
        last.push(h[h.len() - 1].bce);
        let report = evaluate(&ckpt, "trainability", &manifest, &images, &[SPLIT_TEST_IN]).unwrap();
        aucs.push(report.splits[SPLIT_TEST_IN].frame_auc);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ratio = mean(&last) / mean(&first);
    let auc = mean(&aucs);
    (
        ratio < 0.5 && auc > 0.85,
        format!(
            "final/step-0 bce {:.3} (< 0.5), test_in frame AUC {auc:.3} (> 0.85); per seed bce {:?} auc {:?}",
            ratio,
            last.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            aucs.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        ),
    )
}

// 7 and 9 share one ablation matrix --------------------------------------

fn trend_corpus() -> GeneratorConfig {
    GeneratorConfig { identities: TREND_IDENTITIES, ..GeneratorConfig::default() }
}

fn ablation_table(manifest: &CorpusManifest, images: &ImageSet) -> AblationTable {
    let base = TrainConfig { steps: RUN_STEPS, ..TrainConfig::default() };
    run_ablation_matrix::<f32>(manifest, images, &run_model(), &base, &SEEDS, &run_root().join("ablation")).unwrap()
}

fn trend() -> Verdict {
    let (manifest, images) = corpus(&trend_corpus());
    let table = ablation_table(&manifest, &images);
    let m = |a: Ablation| table.row(a).unwrap().test_cross.mean;
    let (efn, pd, pd_iacc, full) = (m(Ablation::Efn), m(Ablation::Pd), m(Ablation::PdIacc), m(Ablation::Full));
    let strict = full >= pd_iacc && pd_iacc >= pd && full - efn >= 0.02;
    let relaxed = full - efn >= 0.02 && pd_iacc > pd;
    let summary = table
        .rows
        .iter()
        .map(|r| format!("{} {:.3}±{:.3}", r.ablation, r.test_cross.mean, r.test_cross.std))
        .collect::<Vec<_>>()
        .join(", ");
    (
        strict || relaxed,
        format!(
            "test_cross mean: {summary}; full ≥ pd_iacc ≥ pd and full − efn ≥ 0.02: {strict}; relaxed (full − efn ≥ 0.02, pd_iacc > pd): {relaxed}"
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn determinism_and_resume() -> Verdict {
    let gen = GeneratorConfig { image_size: 32, groups: 4, test_groups: 2, ..GeneratorConfig::default() };
    let (manifest, images) = corpus(&gen);
    let model = ModelConfig { d: 8, classifier_hidden: 8, image_size: 32, ..ModelConfig::default() };
    let config = TrainConfig { steps: 6, seed: 4, ..TrainConfig::default() };
    let tmp = tempfile::tempdir().unwrap();
    let a = train::<f64>(&manifest, &images, model.clone(), &config, &tmp.path().join("a"), None).unwrap();
    let b = train::<f64>(&manifest, &images, model.clone(), &config, &tmp.path().join("b"), None).unwrap();
    let same_history = a.checkpoint.state.history == b.checkpoint.state.history;

    let short = TrainConfig { steps: 5, ..config.clone() };
    let part = train::<f64>(&manifest, &images, model.clone(), &short, &tmp.path().join("c"), None).unwrap();
    let path = checkpoint_path(&tmp.path().join("c"), 5);
    save_checkpoint(&part.checkpoint, &path).unwrap();
    let loaded: Checkpoint<f64> = load_checkpoint(&path).unwrap();
    let roundtrip = loaded.state == part.checkpoint.state;
    let resumed = train::<f64>(&manifest, &images, model, &config, &tmp.path().join("c"), Some(loaded)).unwrap();
    let params_equal = resumed.checkpoint.state.params == a.checkpoint.state.params;
    let history_equal = resumed.checkpoint.state.history == a.checkpoint.state.history;
    (
        same_history && roundtrip && params_equal && history_equal,
        format!(
            "repeat run identical history: {same_history}; checkpoint round-trip exact: {roundtrip}; resumed step equals uninterrupted (params {params_equal}, losses {history_equal})"
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn embedding_separation() -> Verdict {
    let (manifest, images) = corpus(&trend_corpus());
    let base = TrainConfig { steps: RUN_STEPS, seed: SEEDS[0], ..TrainConfig::default() };
    let kinds = EmbeddingKind::ALL;
    let tmp = tempfile::tempdir().unwrap();
    let mut scores = Vec::new();
    for ablation in [Ablation::Full, Ablation::Pd] {
        let config = TrainConfig { ablation, ..base.clone() };
        let dir = run_root().join("ablation").join(format!("seed-{}", config.seed)).join(ablation.as_str());
        let ckpt = train_or_reuse::<f32>(&manifest, &images, &run_model(), &config, &dir).unwrap();
        let out = tmp.path().join(format!("{ablation}.csv"));
        disentaforge::eval::export_embeddings(&ckpt, &manifest, &images, SPLIT_TEST_IN, &kinds, &out).unwrap();
        let dump = EmbeddingDump::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let n = split_positions(&manifest, &images, SPLIT_TEST_IN).unwrap().len();
        assert_eq!(dump.rows.len(), n * kinds.len());
        assert_eq!(dump.width(), RUN_D);
        scores.push(separation_silhouette(&dump).unwrap());
    }
    let (full, pd) = (scores[0], scores[1]);
    (full > pd, format!("id_pure vs art_pure silhouette on test_in: full {full:.4}, pd {pd:.4}"))
}

// --------------------------------------------------------------------------

fn main() {
    let criteria: [(u8, &str, fn() -> Verdict); 9] = [
        (1, "gradient integrity", gradient_integrity),
        (2, "KL oracle", kl_oracle),
        (3, "IACC limits", iacc_limits),
        (4, "AUC oracle", auc_oracle),
        (5, "classifier blindness", classifier_blindness),
        (6, "trainability", trainability),
        (7, "ablation trend on test_cross", trend),
        (8, "determinism and resume", determinism_and_resume),
        (9, "embedding separation", embedding_separation),
    ];
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} ({name}): {} [{:.1}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use disentaforge::seed;
use disentaforge::synth::{
    build_corpus, forge, generate_corpus, render_frame, render_identity, FaceRegion, ForgeryMethod, FrameJitter,
    CorpusManifest, GeneratorConfig, IdentitySpec, Label, SPLIT_TEST_CROSS, SPLIT_TEST_IN, SPLIT_TRAIN,
};
use disentaforge::Error;

fn small_config() -> GeneratorConfig {
    GeneratorConfig { groups: 2, test_groups: 1, image_size: 32, ..GeneratorConfig::default() }
}

#[test]
fn boundary_splice_stays_inside_the_dilated_face_region() {
    for (s, t) in [(1, 2), (7, 8), (11, 40), (100, 3)] {
        let (src, tgt) = (IdentitySpec::from_seed(s), IdentitySpec::from_seed(t));
        let fake = forge(&src, &tgt, ForgeryMethod::BoundarySplice, 64, 0).unwrap();
        let real = render_identity(&tgt, 64).unwrap();
        let region = FaceRegion::of(&tgt, 64, &FrameJitter::NONE);
        let mask = fake.diff_mask(&real, 1e-6);
        assert!(mask.iter().any(|&d| d), "forgery changed nothing");
        for (p, _) in mask.iter().enumerate().filter(|(_, d)| **d) {
            let (x, y) = (p % 64, p / 64);
            assert!(region.sd(x, y) <= 4.0, "pixel ({x}, {y}) changed {:.2} px outside the face", region.sd(x, y));
        }
    }
}

#[test]
fn nearest_centroid_separates_two_identities() {
    let ids = [IdentitySpec::from_seed(21), IdentitySpec::from_seed(22)];
    let frames = |spec: &IdentitySpec, stream: &str| -> Vec<Vec<f32>> {
        (0..20)
            .map(|k| {
                let jitter = FrameJitter::sample(&mut seed::rng(5, stream, k));
                render_frame(spec, 32, &jitter).unwrap().data().to_vec()
            })
            .collect()
    };
    let centroid = |xs: &[Vec<f32>]| -> Vec<f32> {
        (0..xs[0].len()).map(|i| xs.iter().map(|x| x[i]).sum::<f32>() / xs.len() as f32).collect()
    };
    let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f32>();
    let centroids: Vec<Vec<f32>> = ids.iter().map(|s| centroid(&frames(s, "fit"))).collect();
    let mut correct = 0;
    for (label, spec) in ids.iter().enumerate() {
        for x in frames(spec, "held-out") {
            let guess = if dist(&x, &centroids[0]) <= dist(&x, &centroids[1]) { 0 } else { 1 };
            correct += usize::from(guess == label);
        }
    }
    assert_eq!(correct, 40);
}

#[test]
fn corpus_is_a_pure_function_of_its_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = small_config();
    let ma = generate_corpus(&config, a.path()).unwrap();
    let mb = generate_corpus(&config, b.path()).unwrap();
    assert_eq!(ma, mb);
    let read = |root: &std::path::Path, rel: &str| fs::read(root.join(rel)).unwrap();
    assert_eq!(read(a.path(), "manifest.json"), read(b.path(), "manifest.json"));
    for r in ma.records.iter().step_by(7) {
        assert_eq!(read(a.path(), &r.image_path), read(b.path(), &r.image_path), "{}", r.sample_id);
    }

    let other = build_corpus(&GeneratorConfig { seed: 1, ..config }).unwrap().0;
    assert_ne!(other.records, ma.records);
}

#[test]
fn leave_one_method_out_splits() {
    let config = small_config();
    let (manifest, images) = build_corpus(&config).unwrap();
    assert_eq!(images.len(), manifest.records.len());
    let split = |name: &str| manifest.split_records(name).unwrap();

    assert!(split(SPLIT_TRAIN).iter().all(|r| r.method != ForgeryMethod::WarpLowfreq));
    assert!(split(SPLIT_TEST_IN).iter().all(|r| r.method != ForgeryMethod::WarpLowfreq));
    assert!(split(SPLIT_TEST_CROSS).iter().all(|r| matches!(r.method, ForgeryMethod::WarpLowfreq | ForgeryMethod::None)));
    for name in [SPLIT_TRAIN, SPLIT_TEST_IN, SPLIT_TEST_CROSS] {
        let labels: BTreeSet<_> = split(name).iter().map(|r| r.label).collect();
        assert_eq!(labels.len(), 2, "{name} lacks a label");
    }

    let identities = |name: &str| -> BTreeSet<u64> {
        split(name)
            .iter()
            .flat_map(|r| r.source_identity.iter().chain([&r.target_identity]).map(|s| s.seed))
            .collect()
    };
    assert!(identities(SPLIT_TRAIN).is_disjoint(&identities(SPLIT_TEST_CROSS)));
    assert!(identities(SPLIT_TEST_IN).is_disjoint(&identities(SPLIT_TEST_CROSS)));

    let all: Vec<&String> = manifest.splits.values().flatten().collect();
    assert_eq!(all.len(), all.iter().collect::<BTreeSet<_>>().len(), "splits overlap");
    assert_eq!(all.len(), manifest.records.len());
}

#[test]
fn groups_are_homogeneous_and_full_length() {
    let config = GeneratorConfig { frames_per_group: 4, groups: 10, test_groups: 1, image_size: 16, ..GeneratorConfig::default() };
    let (manifest, _) = build_corpus(&config).unwrap();
    let mut groups: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in &manifest.records {
        groups.entry(r.group_id.as_str()).or_default().push(r);
        let real = r.label == Label::Real;
        assert_eq!(real, r.method == ForgeryMethod::None);
        assert_eq!(real, r.source_identity.is_none());
    }
    for (id, rs) in groups {
        assert_eq!(rs.len(), 4, "group {id}");
        assert!(rs.iter().all(|r| r.label == rs[0].label && r.method == rs[0].method), "group {id} is mixed");
    }
}

#[test]
fn generator_rejects_bad_configs() {
    let invalid = |c: GeneratorConfig| matches!(build_corpus(&c), Err(Error::InvalidArgument(_)));
    let base = small_config();
    assert!(invalid(GeneratorConfig { methods: vec![ForgeryMethod::BlendHue], holdout: ForgeryMethod::BlendHue, ..base.clone() }));
    assert!(invalid(GeneratorConfig { identities: 7, ..base.clone() }));
    assert!(invalid(GeneratorConfig { frames_per_group: 3, ..base.clone() }));
    assert!(invalid(GeneratorConfig { holdout: ForgeryMethod::None, ..base.clone() }));
    assert!(invalid(GeneratorConfig { image_size: 8, ..base.clone() }));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "").unwrap();
    assert!(matches!(generate_corpus(&base, &file.join("corpus")), Err(Error::Io { .. })));
}

#[test]
fn manifest_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let written = generate_corpus(&small_config(), dir.path()).unwrap();
    let loaded = CorpusManifest::load(dir.path()).unwrap();
    assert_eq!(written, loaded);

    fs::remove_file(dir.path().join(&written.records[3].image_path)).unwrap();
    assert!(matches!(CorpusManifest::load(dir.path()), Err(Error::Io { .. })));
}

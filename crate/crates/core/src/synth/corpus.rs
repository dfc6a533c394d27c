use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forge::{forge_frame, ForgeryMethod};
use super::identity::{render_frame, FrameJitter, IdentitySpec, MIN_IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

pub const SPLIT_TRAIN: &str = "train";
pub const SPLIT_TEST_IN: &str = "test_in";
pub const SPLIT_TEST_CROSS: &str = "test_cross";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// 1 for fake, 0 for real.
    pub fn as_target(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeryRecord {
    pub sample_id: String,
    pub label: Label,
    pub source_identity: Option<IdentitySpec>,
    pub target_identity: IdentitySpec,
    pub method: ForgeryMethod,
    pub group_id: String,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub identities: usize,
    pub methods: Vec<ForgeryMethod>,
    /// Method left out of training and used for `test_cross`.
    pub holdout: ForgeryMethod,
    pub frames_per_group: usize,
    /// Fake groups per seen method in `train` (matched by as many real groups).
    pub groups: usize,
    /// Fake groups per seen method in `test_in`; `test_cross` gets the same total.
    pub test_groups: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            identities: 8,
            methods: ForgeryMethod::FORGERIES.to_vec(),
            holdout: ForgeryMethod::WarpLowfreq,
            frames_per_group: 4,
            groups: 32,
            test_groups: 10,
            image_size: 64,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let distinct: BTreeSet<_> = self.methods.iter().collect();
        if distinct.len() != self.methods.len() {
            return Err(Error::invalid("duplicate forgery methods"));
        }
        if self.methods.contains(&ForgeryMethod::None) {
            return Err(Error::invalid("`none` is not a forgery method"));
        }
        if self.methods.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 forgery methods, got {}", self.methods.len())));
        }
        if !self.methods.contains(&self.holdout) {
            return Err(Error::invalid(format!("holdout method {} is not among the methods", self.holdout)));
        }
        if self.identities < 8 {
            return Err(Error::invalid(format!("need at least 8 identities, got {}", self.identities)));
        }
        if self.frames_per_group < 4 {
            return Err(Error::invalid(format!("need at least 4 frames per group, got {}", self.frames_per_group)));
        }
        if self.groups == 0 || self.test_groups == 0 {
            return Err(Error::invalid("group counts must be positive"));
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(Error::invalid(format!("image size must be >= {MIN_IMAGE_SIZE}")));
        }
        Ok(())
    }

    pub fn seen_methods(&self) -> Vec<ForgeryMethod> {
        self.methods.iter().copied().filter(|m| *m != self.holdout).collect()
    }

    /// Identity pools `(train/test_in, test_cross)`; disjoint.
    pub fn identity_pools(&self) -> (Vec<IdentitySpec>, Vec<IdentitySpec>) {
        let all: Vec<IdentitySpec> = (0..self.identities as u64)
            .map(|k| IdentitySpec::from_seed(seed::derive(self.seed, seed::CORPUS_IDENTITY, k)))
            .collect();
        let cross = (self.identities * 3 / 8).max(2);
        let split = self.identities - cross;
        (all[..split].to_vec(), all[split..].to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub generator_seed: u64,
    pub image_size: usize,
    pub config: GeneratorConfig,
    pub records: Vec<ForgeryRecord>,
    pub splits: BTreeMap<String, Vec<String>>,
}

/// One pseudo-video before rendering.
struct GroupPlan {
    split: &'static str,
    method: ForgeryMethod,
    source: Option<IdentitySpec>,
    target: IdentitySpec,
}

fn plan_split(
    split: &'static str,
    methods: &[(ForgeryMethod, usize)],
    ids: &[IdentitySpec],
    rng: &mut impl Rng,
    plans: &mut Vec<GroupPlan>,
) {
    let mut fakes = 0;
    for &(method, count) in methods {
        for _ in 0..count {
            let t = rng.gen_range(0..ids.len());
            let mut s = rng.gen_range(0..ids.len() - 1);
            if s >= t {
                s += 1;
            }
            plans.push(GroupPlan { split, method, source: Some(ids[s].clone()), target: ids[t].clone() });
            fakes += 1;
        }
    }
    // As many real groups as fake ones, cycling through the pool.
    let offset = rng.gen_range(0..ids.len());
    for k in 0..fakes {
        let target = ids[(k + offset) % ids.len()].clone();
        plans.push(GroupPlan { split, method: ForgeryMethod::None, source: None, target });
    }
}

fn plan_groups(config: &GeneratorConfig) -> Vec<GroupPlan> {
    let (pool, cross_pool) = config.identity_pools();
    let mut rng = seed::rng(config.seed, seed::CORPUS_PAIRING, 0);
    let seen = config.seen_methods();
    let mut plans = Vec::new();

    let train: Vec<_> = seen.iter().map(|&m| (m, config.groups)).collect();
    plan_split(SPLIT_TRAIN, &train, &pool, &mut rng, &mut plans);
    let test_in: Vec<_> = seen.iter().map(|&m| (m, config.test_groups)).collect();
    plan_split(SPLIT_TEST_IN, &test_in, &pool, &mut rng, &mut plans);
    let cross = [(config.holdout, config.test_groups * seen.len())];
    plan_split(SPLIT_TEST_CROSS, &cross, &cross_pool, &mut rng, &mut plans);
    plans
}

/// Render one frame of a group plan.
fn render_record(plan: &GroupPlan, size: usize, forge_seed: u64, jitter: &FrameJitter) -> Result<Image> {
    match &plan.source {
        None => render_frame(&plan.target, size, jitter),
        Some(source) => forge_frame(source, &plan.target, plan.method, size, forge_seed, jitter),
    }
}

/// Build the corpus in memory: records, split map and rendered images (same order as records).
pub fn build_corpus(config: &GeneratorConfig) -> Result<(CorpusManifest, Vec<Image>)> {
    config.validate()?;
    let plans = plan_groups(config);
    let mut records = Vec::new();
    let mut images = Vec::new();
    let mut splits: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut frame_counter = 0u64;
    for (gi, plan) in plans.iter().enumerate() {
        let group_id = format!("g{gi:04}");
        let forge_seed = seed::derive(config.seed, "corpus.forge", gi as u64);
        for f in 0..config.frames_per_group {
            let mut frame_rng = seed::rng(config.seed, seed::CORPUS_FRAME, frame_counter);
            frame_counter += 1;
            let jitter = FrameJitter::sample(&mut frame_rng);
            let sample_id = format!("{group_id}_f{f:02}");
            images.push(render_record(plan, config.image_size, forge_seed, &jitter)?);
            records.push(ForgeryRecord {
                sample_id: sample_id.clone(),
                label: if plan.source.is_some() { Label::Fake } else { Label::Real },
                source_identity: plan.source.clone(),
                target_identity: plan.target.clone(),
                method: plan.method,
                group_id: group_id.clone(),
                image_path: format!("{IMAGE_DIR}/{sample_id}.png"),
            });
            splits.entry(plan.split.to_string()).or_default().push(sample_id);
        }
    }
    let manifest = CorpusManifest {
        generator_seed: config.seed,
        image_size: config.image_size,
        config: config.clone(),
        records,
        splits,
    };
    manifest.check_consistency()?;
    Ok((manifest, images))
}

/// Render the corpus and write `images/*.png` plus `manifest.json` under `root`.
pub fn generate_corpus(config: &GeneratorConfig, root: &Path) -> Result<CorpusManifest> {
    let (manifest, images) = build_corpus(config)?;
    let image_dir = root.join(IMAGE_DIR);
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    for (record, image) in manifest.records.iter().zip(&images) {
        image.save_png(&root.join(&record.image_path))?;
    }
    manifest.save(root)?;
    Ok(manifest)
}

impl CorpusManifest {
    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::io(&path, e))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Load and validate `root/manifest.json`, including that every image exists.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| Error::io(&path, format!("malformed manifest: {e}")))?;
        manifest.check_consistency()?;
        for r in &manifest.records {
            let p = root.join(&r.image_path);
            if !p.is_file() {
                return Err(Error::io(&p, "image referenced by manifest is missing"));
            }
        }
        Ok(manifest)
    }

    pub fn record(&self, sample_id: &str) -> Option<&ForgeryRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.records.iter().enumerate().map(|(i, r)| (r.sample_id.as_str(), i)).collect()
    }

    /// Records of a split, in split order.
    pub fn split_records(&self, split: &str) -> Result<Vec<&ForgeryRecord>> {
        let ids = self.splits.get(split).ok_or_else(|| Error::invalid(format!("unknown split `{split}`")))?;
        let index = self.index();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| &self.records[i])
                    .ok_or_else(|| Error::invalid(format!("split `{split}` references unknown sample {id}")))
            })
            .collect()
    }

    pub fn image_path(&self, root: &Path, record: &ForgeryRecord) -> PathBuf {
        root.join(&record.image_path)
    }

    /// Label/method/source consistency, group homogeneity, split disjointness
    /// and label coverage.
    pub fn check_consistency(&self) -> Result<()> {
        let mut groups: HashMap<&str, (Label, ForgeryMethod)> = HashMap::new();
        let mut ids = BTreeSet::new();
        for r in &self.records {
            let real = r.label == Label::Real;
            if real != (r.method == ForgeryMethod::None) || real != r.source_identity.is_none() {
                return Err(Error::invalid(format!("record {} mixes label, method and source", r.sample_id)));
            }
            if !ids.insert(r.sample_id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {}", r.sample_id)));
            }
            let entry = groups.entry(r.group_id.as_str()).or_insert((r.label, r.method));
            if *entry != (r.label, r.method) {
                return Err(Error::invalid(format!("group {} mixes labels or methods", r.group_id)));
            }
        }
        let mut seen = BTreeSet::new();
        for (name, members) in &self.splits {
            let mut labels = BTreeSet::new();
            for id in members {
                if !seen.insert(id.as_str()) {
                    return Err(Error::invalid(format!("sample {id} appears in more than one split")));
                }
                let r = self
                    .record(id)
                    .ok_or_else(|| Error::invalid(format!("split `{name}` references unknown sample {id}")))?;
                labels.insert(r.label);
            }
            if labels.len() != 2 {
                return Err(Error::invalid(format!("split `{name}` does not contain both labels")));
            }
        }
        Ok(())
    }
}

//! Network blocks and the assembled detector.
//!
//! Data flow for one image batch `x`:
//! two encoders give blended identities `id~1, id~2`; the separator splits
//! them into non-pure identities and blended artifacts; per branch a
//! correlation gate purifies both maps; pure maps are concatenated into
//! `ID` and `ART`; the classifier sees only `ART`; the decoder rebuilds a
//! face from any `(ID, ART)` pair.

pub mod blocks;
pub mod layers;

use std::fmt;
use std::str::FromStr;

use disentaforge_autograd::{Bound, ParamStore, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iacc::{self, Dcam, GaussianStats, NoiseMode, StatsValues};
use crate::seed;
use blocks::{Classifier, Decoder, Encoder, Separator};

/// Prefix of non-trainable running statistics kept alongside the weights.
pub const RUNNING_PREFIX: &str = "running.";
pub const ENCODER_PREFIXES: [&str; 2] = ["enc1.", "enc2."];
/// Initial bias of the gate projection. Negative values start the gate
/// mostly open (little noise) so early training sees the features.
pub const GATE_BIAS_INIT: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    pub image_size: usize,
    pub classifier_hidden: usize,
    pub seed: u64,
    /// Exclude encoder weights from optimisation.
    pub freeze_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d: 64, encoder_depth: 4, decoder_depth: 1, image_size: 64, classifier_hidden: 64, seed: 0, freeze_encoder: false }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("decoder_depth", self.decoder_depth),
            ("image_size", self.image_size),
            ("classifier_hidden", self.classifier_hidden),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("model.{name} must be positive")));
            }
        }
        if self.encoder_depth < 3 {
            return Err(Error::invalid(format!("model.encoder_depth must be >= 3, got {}", self.encoder_depth)));
        }
        if self.image_size % 8 != 0 || self.image_size < 16 {
            return Err(Error::invalid(format!(
                "model.image_size must be a multiple of 8 and >= 16, got {}",
                self.image_size
            )));
        }
        Ok(())
    }

    pub fn feature_hw(&self) -> usize {
        self.image_size / 8
    }
}

/// Which components are built and trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Encoders and classifier only.
    Efn,
    /// Adds separator, decoder and reconstruction.
    Pd,
    /// Adds correlation gating, purification and the information loss.
    PdIacc,
    /// Adds the separation contrastive loss.
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Efn, Ablation::Pd, Ablation::PdIacc, Ablation::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Efn => "efn",
            Ablation::Pd => "pd",
            Ablation::PdIacc => "pd_iacc",
            Ablation::Full => "full",
        }
    }

    pub fn separates(self) -> bool {
        self != Ablation::Efn
    }

    pub fn purifies(self) -> bool {
        matches!(self, Ablation::PdIacc | Ablation::Full)
    }

    pub fn contrasts(self) -> bool {
        self == Ablation::Full
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown ablation `{s}` (expected efn, pd, pd_iacc or full)")))
    }
}

/// Per-image disentangled features of both branches.
#[derive(Debug, Clone, Copy)]
pub struct Bundle<'g, T: Scalar> {
    pub id_raw: [Var<'g, T>; 2],
    pub art_raw: [Var<'g, T>; 2],
    pub id_pure: [Var<'g, T>; 2],
    pub art_pure: [Var<'g, T>; 2],
    /// Absent when purification is disabled (pure maps equal raw maps).
    pub gate: Option<[Var<'g, T>; 2]>,
}

impl<'g, T: Scalar> Bundle<'g, T> {
    /// Rows `[start, start + len)` of every map.
    pub fn narrow_batch(&self, start: usize, len: usize) -> Self {
        let n = |v: [Var<'g, T>; 2]| v.map(|x| x.narrow(0, start, len));
        Bundle {
            id_raw: n(self.id_raw),
            art_raw: n(self.art_raw),
            id_pure: n(self.id_pure),
            art_pure: n(self.art_pure),
            gate: self.gate.map(n),
        }
    }

    pub fn branches(&self) -> [iacc::BranchFeatures<'g, T>; 2] {
        std::array::from_fn(|i| iacc::BranchFeatures {
            id_raw: self.id_raw[i],
            art_raw: self.art_raw[i],
            art_pure: self.art_pure[i],
        })
    }
}

/// How purification draws its noise moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Batch statistics and sampled noise.
    Train { noise_seed: u64 },
    /// Running statistics and the noise mean; each sample is scored independently.
    Infer,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<'g, T: Scalar> {
    pub id_blend: [Var<'g, T>; 2],
    pub bundle: Option<Bundle<'g, T>>,
    /// Aggregated identity (`2d` channels); absent for `efn`.
    pub id: Option<Var<'g, T>>,
    /// Classifier input (`2d` channels).
    pub art: Var<'g, T>,
    pub probs: Var<'g, T>,
    /// Batch statistics of `id_raw1, art_raw1, id_raw2, art_raw2` in training.
    pub batch_stats: Vec<StatsValues>,
}

const STAT_SLOTS: [&str; 4] = ["id1", "art1", "id2", "art2"];

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub ablation: Ablation,
    encoders: [Encoder; 2],
    separator: Option<Separator>,
    dcam: Option<[Dcam; 2]>,
    decoder: Option<Decoder>,
    classifier: Classifier,
}

impl Model {
    pub fn new(config: ModelConfig, ablation: Ablation) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        Ok(Self {
            encoders: [Encoder::new("enc1", config.encoder_depth, d), Encoder::new("enc2", config.encoder_depth, d)],
            separator: ablation.separates().then(|| Separator::new("sep", d)),
            dcam: ablation.purifies().then(|| [Dcam::new("dcam1", d), Dcam::new("dcam2", d)]),
            decoder: ablation.separates().then(|| Decoder::new("dec", d, config.decoder_depth)),
            classifier: Classifier::new("cls", 2 * d, config.classifier_hidden),
            config,
            ablation,
        })
    }

    /// Freshly initialised parameters. Each tensor is seeded by its name,
    /// so shared components start identical across ablations.
    pub fn init_params<T: Scalar>(&self) -> ParamStore<T> {
        let root = self.config.seed;
        let mut store = ParamStore::new();
        for e in &self.encoders {
            e.init_params(&mut store, root);
        }
        if let Some(s) = &self.separator {
            s.init_params(&mut store, root);
        }
        if let Some(dcams) = &self.dcam {
            for (i, g) in dcams.iter().enumerate() {
                g.init_params(&mut store, root);
                let bias = format!("dcam{}.proj.bias", i + 1);
                store.insert(&bias, Tensor::full(&[self.config.d], T::from_f64_lossy(GATE_BIAS_INIT)));
            }
            for slot in STAT_SLOTS {
                store.insert(format!("{RUNNING_PREFIX}{slot}.mean"), Tensor::zeros(&[self.config.d]));
                store.insert(format!("{RUNNING_PREFIX}{slot}.var"), Tensor::full(&[self.config.d], T::one()));
            }
        }
        if let Some(dec) = &self.decoder {
            dec.init_params(&mut store, root);
        }
        self.classifier.init_params(&mut store, root);
        store
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        !name.starts_with(RUNNING_PREFIX)
            && !(self.config.freeze_encoder && ENCODER_PREFIXES.iter().any(|p| name.starts_with(p)))
    }

    /// Scalar count of learnable weights (running statistics excluded).
    pub fn weight_count<T: Scalar>(store: &ParamStore<T>) -> usize {
        store.count() - store.count_prefix(RUNNING_PREFIX)
    }

    /// Parameter names this model reads; a checkpoint must provide exactly these.
    pub fn param_names(&self) -> Vec<String> {
        self.init_params::<f32>().names().map(str::to_string).collect()
    }

    pub fn bind<'g, T: Scalar>(&self, store: &ParamStore<T>, graph: &'g disentaforge_autograd::Graph<T>) -> Bound<'g, T> {
        store.bind(graph, |n| self.is_trainable(n))
    }

    fn check_features<T: Scalar>(&self, what: &str, maps: &[Var<'_, T>], channels: usize) -> Result<()> {
        let first = maps[0].shape();
        let hw = self.config.feature_hw();
        for m in maps {
            let s = m.shape();
            if s.len() != 4 || s[1] != channels || s[2] != hw || s[3] != hw || s != first {
                return Err(Error::invalid(format!(
                    "{what}: expected feature maps [n, {channels}, {hw}, {hw}], got {s:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn encode_identities<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Result<(Var<'g, T>, Var<'g, T>)> {
        let s = x.shape();
        let size = self.config.image_size;
        if s.len() != 4 || s[0] == 0 || s[1] != 3 || s[2] != size || s[3] != size {
            return Err(Error::invalid(format!("encode_identities: expected images [n, 3, {size}, {size}], got {s:?}")));
        }
        Ok((self.encoders[0].forward(p, x), self.encoders[1].forward(p, x)))
    }

    /// Returns `((id_raw1, art_raw1), (id_raw2, art_raw2))`.
    #[allow(clippy::type_complexity)]
    pub fn separate_artifacts<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        id1: Var<'g, T>,
        id2: Var<'g, T>,
    ) -> Result<((Var<'g, T>, Var<'g, T>), (Var<'g, T>, Var<'g, T>))> {
        let sep = self.separator.as_ref().ok_or_else(|| self.missing("separator"))?;
        self.check_features("separate_artifacts", &[id1, id2], self.config.d)?;
        let [i1, a1, i2, a2] = sep.forward(p, id1, id2);
        Ok(((i1, a1), (i2, a2)))
    }

    pub fn dcam_gate<'g, T: Scalar>(&self, p: &Bound<'g, T>, branch: usize, id_raw: Var<'g, T>, art_raw: Var<'g, T>) -> Result<Var<'g, T>> {
        let dcams = self.dcam.as_ref().ok_or_else(|| self.missing("correlation gate"))?;
        let g = dcams.get(branch).ok_or_else(|| Error::invalid(format!("branch index {branch} out of range")))?;
        g.gate(p, id_raw, art_raw)
    }

    /// Gate and purify both branches. Returns the bundle and, in training, the
    /// batch statistics used for the noise.
    pub fn compress<'g, T: Scalar>(
        &self,
        p: &Bound<'g, T>,
        raw: [(Var<'g, T>, Var<'g, T>); 2],
        phase: Phase,
    ) -> Result<(Bundle<'g, T>, Vec<StatsValues>)> {
        let id_raw = [raw[0].0, raw[1].0];
        let art_raw = [raw[0].1, raw[1].1];
        if !self.ablation.purifies() {
            let bundle = Bundle { id_raw, art_raw, id_pure: id_raw, art_pure: art_raw, gate: None };
            return Ok((bundle, Vec::new()));
        }
        let mut stats_out = Vec::new();
        let mut id_pure = id_raw;
        let mut art_pure = art_raw;
        let mut gates = id_raw;
        for b in 0..2 {
            let w = self.dcam_gate(p, b, id_raw[b], art_raw[b])?;
            gates[b] = w;
            for (k, (feat, out)) in [(id_raw[b], &mut id_pure[b]), (art_raw[b], &mut art_pure[b])].into_iter().enumerate() {
                let slot = 2 * b + k;
                *out = match phase {
                    Phase::Train { noise_seed } => {
                        let stats = iacc::gaussian_stats(feat)?;
                        stats_out.push(StatsValues::of(&stats));
                        let seed = seed::derive(noise_seed, STAT_SLOTS[slot], 0);
                        iacc::purify_with_stats(feat, w, &stats, NoiseMode::Sample(seed))?
                    }
                    Phase::Infer => {
                        let stats = self.running_stats(p, slot)?;
                        iacc::purify_with_stats(feat, w, &stats, NoiseMode::Mean)?
                    }
                };
            }
        }
        Ok((Bundle { id_raw, art_raw, id_pure, art_pure, gate: Some(gates) }, stats_out))
    }

    fn running_stats<'g, T: Scalar>(&self, p: &Bound<'g, T>, slot: usize) -> Result<GaussianStats<'g, T>> {
        let name = |k: &str| format!("{RUNNING_PREFIX}{}.{k}", STAT_SLOTS[slot]);
        let get = |k: &str| p.get(&name(k)).map_err(|e| Error::invalid(e.to_string()));
        Ok(GaussianStats { mean: get("mean")?, var: get("var")? })
    }

    /// Blend batch statistics into the running estimates:
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running_stats<T: Scalar>(&self, store: &mut ParamStore<T>, batch: &[StatsValues], momentum: f64) {
        if batch.is_empty() {
            return;
        }
        for (slot, stats) in STAT_SLOTS.iter().zip(batch) {
            for (k, values) in [("mean", &stats.mean), ("var", &stats.var)] {
                let t = store.get_mut(&format!("{RUNNING_PREFIX}{slot}.{k}")).expect("running statistics present");
                for (r, &b) in t.data_mut().iter_mut().zip(values.iter()) {
                    *r = T::from_f64_lossy((1.0 - momentum) * r.to_f64_lossy() + momentum * b);
                }
            }
        }
    }

    /// Channel concatenation `(id_pure1 || id_pure2, art_pure1 || art_pure2)`.
    pub fn aggregate<'g, T: Scalar>(&self, bundle: &Bundle<'g, T>) -> Result<(Var<'g, T>, Var<'g, T>)> {
        let maps = [bundle.id_pure[0], bundle.id_pure[1], bundle.art_pure[0], bundle.art_pure[1]];
        self.check_features("aggregate", &maps, self.config.d)?;
        Ok((Var::concat(&bundle.id_pure, 1), Var::concat(&bundle.art_pure, 1)))
    }

    pub fn decode_face<'g, T: Scalar>(&self, p: &Bound<'g, T>, id: Var<'g, T>, art: Var<'g, T>) -> Result<Var<'g, T>> {
        let dec = self.decoder.as_ref().ok_or_else(|| self.missing("decoder"))?;
        self.check_features("decode_face", &[id, art], 2 * self.config.d)?;
        Ok(dec.forward(p, id, art))
    }

    pub fn classify<'g, T: Scalar>(&self, p: &Bound<'g, T>, art: Var<'g, T>) -> Result<Var<'g, T>> {
        self.check_features("classify", &[art], self.classifier.in_channels())?;
        Ok(self.classifier.forward(p, art))
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>, phase: Phase) -> Result<ForwardOutput<'g, T>> {
        let (b1, b2) = self.encode_identities(p, x)?;
        if !self.ablation.separates() {
            let art = Var::concat(&[b1, b2], 1);
            let probs = self.classify(p, art)?;
            return Ok(ForwardOutput { id_blend: [b1, b2], bundle: None, id: None, art, probs, batch_stats: Vec::new() });
        }
        let (r1, r2) = self.separate_artifacts(p, b1, b2)?;
        let (bundle, batch_stats) = self.compress(p, [r1, r2], phase)?;
        let (id, art) = self.aggregate(&bundle)?;
        let probs = self.classify(p, art)?;
        Ok(ForwardOutput { id_blend: [b1, b2], bundle: Some(bundle), id: Some(id), art, probs, batch_stats })
    }

    fn missing(&self, what: &str) -> Error {
        Error::invalid(format!("ablation `{}` has no {what}", self.ablation))
    }

    /// Shape of one branch feature map for a batch of `n`.
    pub fn feature_shape(&self, n: usize) -> [usize; 4] {
        let hw = self.config.feature_hw();
        [n, self.config.d, hw, hw]
    }
}

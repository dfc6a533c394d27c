//! Paired real/fake training.

mod checkpoint;
mod data;
mod run;

pub use checkpoint::{checkpoint_path, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use data::{sample_pairs, ImagePair, ImageSet, PairBatch};
pub use run::{train, LogRecord, TrainOutcome, LOG_FILE};

use disentaforge_autograd::{Adam, Bound, Graph, ParamStore, Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iacc;
use crate::losses::{self, LossBreakdown, LossTerms, LossWeights};
use crate::net::{Ablation, Model, ModelConfig, Phase};
use crate::seed;

/// Env var that switches training and evaluation to 64-bit math.
pub const DETERMINISTIC_ENV: &str = "DISENTAFORGE_DETERMINISTIC";
/// Weight of the current batch in the running noise statistics.
pub const RUNNING_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Images per step; half real, half fake.
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub ablation: Ablation,
    /// Save a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 8,
            steps: 3000,
            seed: 0,
            weights: LossWeights::default(),
            ablation: Ablation::Full,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("train.lr must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::invalid(format!("train.batch_size must be even and >= 2, got {}", self.batch_size)));
        }
        self.weights.validate()
    }

    pub fn pairs_per_step(&self) -> usize {
        self.batch_size / 2
    }
}

/// Arithmetic width used for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    /// `F64` when [`DETERMINISTIC_ENV`] is set to `1`.
    pub fn from_env() -> Self {
        match std::env::var(DETERMINISTIC_ENV) {
            Ok(v) if v == "1" => Precision::F64,
            _ => Precision::F32,
        }
    }
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T: Scalar> {
    pub step: u64,
    pub params: ParamStore<T>,
    pub optimizer: Adam<T>,
    /// Root of every per-step random stream; together with `step` this is the rng state.
    pub seed: u64,
    pub history: Vec<LossBreakdown>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: &Model, config: &TrainConfig) -> Self {
        Self {
            step: 0,
            params: model.init_params(),
            optimizer: Adam::new(config.lr),
            seed: config.seed,
            history: Vec::new(),
        }
    }

    pub fn noise_seed(&self) -> u64 {
        seed::derive(self.seed, seed::TRAIN_NOISE, self.step)
    }
}

/// Model plus training state.
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar> {
    pub model: Model,
    pub config: TrainConfig,
    pub state: TrainState<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(mut model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model_config.seed = config.seed;
        let model = Model::new(model_config, config.ablation)?;
        let state = TrainState::new(&model, &config);
        Ok(Self { model, config, state })
    }

    pub fn step(&mut self, batch: &PairBatch<T>) -> Result<LossBreakdown> {
        train_step(&self.model, &mut self.state, batch, &self.config)
    }
}

/// Differentiable loss terms of one paired batch (`P` reals followed by `P` fakes).
pub fn loss_terms<'g, T: Scalar>(
    model: &Model,
    graph: &'g Graph<T>,
    p: &Bound<'g, T>,
    batch: &PairBatch<T>,
    phase: Phase,
) -> Result<(LossTerms<'g, T>, Vec<iacc::StatsValues>)> {
    let x = graph.constant(batch.images.clone());
    let labels = graph.constant(batch.labels.clone());
    let out = model.forward(p, x, phase)?;
    let bce = losses::bce_loss(out.probs, labels)?;
    let mut terms = LossTerms { bce, rec: None, con: None, info: None };
    if let (Some(bundle), Some(id)) = (out.bundle, out.id) {
        let n = batch.pairs;
        let art = out.art;
        // Cross reconstruction pairs each image's identity with its partner's artifacts.
        let art_swapped = Var::concat(&[art.narrow(0, n, n), art.narrow(0, 0, n)], 0);
        let selfrec = model.decode_face(p, id, art)?;
        let crossrec = model.decode_face(p, id, art_swapped)?;
        let halves = |v: Var<'g, T>| (v.narrow(0, 0, n), v.narrow(0, n, n));
        terms.rec = Some(losses::reconstruction_loss(halves(x), halves(selfrec), halves(crossrec))?);
        if model.ablation.purifies() {
            terms.info = Some(iacc::info_loss(&bundle.branches())?.total);
        }
        if model.ablation.contrasts() {
            let real = bundle.narrow_batch(0, n);
            let fake = bundle.narrow_batch(n, n);
            terms.con = Some(losses::separation_contrastive_loss(&real, &fake)?);
        }
    }
    Ok((terms, out.batch_stats))
}

/// Forward, backward and one optimiser update.
pub fn train_step<T: Scalar>(
    model: &Model,
    state: &mut TrainState<T>,
    batch: &PairBatch<T>,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    if model.ablation != config.ablation {
        return Err(Error::invalid(format!(
            "model built for `{}` but config asks for `{}`",
            model.ablation, config.ablation
        )));
    }
    let (breakdown, grads, stats) = {
        let graph = Graph::new();
        let p = model.bind(&state.params, &graph);
        let phase = Phase::Train { noise_seed: state.noise_seed() };
        let (terms, stats) = loss_terms(model, &graph, &p, batch, phase)?;
        let (total, breakdown) = terms.total(&config.weights, state.step)?;
        let grads = p.grads(&graph.backward(total));
        (breakdown, grads, stats)
    };
    for (name, g) in &grads {
        if !g.all_finite() {
            return Err(Error::TrainingFault { component: format!("gradient of {name}"), step: state.step });
        }
    }
    state.optimizer.step(&mut state.params, &grads);
    model.update_running_stats(&mut state.params, &stats, RUNNING_MOMENTUM);
    state.step += 1;
    state.history.push(breakdown);
    Ok(breakdown)
}

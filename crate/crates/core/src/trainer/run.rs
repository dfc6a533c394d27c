use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use disentaforge_autograd::Scalar;
use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_path, save_checkpoint, Checkpoint};
use super::data::{sample_pairs, ImageSet};
use super::{train_step, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::net::{Model, ModelConfig};
use crate::seed;
use crate::synth::{CorpusManifest, SPLIT_TRAIN};

pub const LOG_FILE: &str = "log.jsonl";

/// One line of `log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub checkpoint: Checkpoint<T>,
    pub checkpoint_path: PathBuf,
    pub seconds: f64,
}

/// Train until `config.steps`, starting fresh or from `resume`.
///
/// Writes `log.jsonl` (appended when resuming) and `ckpt-<step>` files into `out_dir`.
pub fn train<T: Scalar>(
    manifest: &CorpusManifest,
    images: &ImageSet,
    mut model_config: ModelConfig,
    config: &TrainConfig,
    out_dir: &Path,
    resume: Option<Checkpoint<T>>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    model_config.seed = config.seed;
    if model_config.image_size != manifest.image_size {
        return Err(Error::invalid(format!(
            "model image_size {} does not match corpus image_size {}",
            model_config.image_size, manifest.image_size
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let model = Model::new(model_config.clone(), config.ablation)?;
    let mut state = match resume {
        Some(ckpt) => {
            ckpt.build_model(config.ablation)?;
            if ckpt.model != model_config {
                return Err(Error::invalid("checkpoint model configuration differs from the requested one"));
            }
            ckpt.state
        }
        None => TrainState::new(&model, config),
    };

    let log_path = out_dir.join(LOG_FILE);
    let log_file = if state.step == 0 {
        File::create(&log_path)
    } else {
        OpenOptions::new().create(true).append(true).open(&log_path)
    }
    .map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);

    let start = Instant::now();
    let mut last_path = None;
    while state.step < config.steps {
        let step = state.step;
        let mut rng = seed::rng(config.seed, seed::TRAIN_PAIRS, step);
        let pairs = sample_pairs(manifest, SPLIT_TRAIN, config.batch_size, &mut rng)?;
        let batch = images.pair_batch::<T>(&pairs)?;
        let loss = train_step(&model, &mut state, &batch, config)?;
        let line = serde_json::to_string(&LogRecord { step, loss }).map_err(|e| Error::io(&log_path, e))?;
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        if step % 100 == 0 || state.step == config.steps {
            log::info!(
                "{} step {step}: total {:.4} bce {:.4} rec {:.4} con {:.4} info {:.4} ({:.1}s)",
                config.ablation,
                loss.total,
                loss.bce,
                loss.rec_self + loss.rec_cross,
                loss.con_real + loss.con_fake,
                loss.info,
                start.elapsed().as_secs_f64()
            );
        }
        let periodic = config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0;
        if periodic && state.step < config.steps {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            let path = checkpoint_path(out_dir, state.step);
            let ckpt = Checkpoint { model: model_config.clone(), train: config.clone(), state: state.clone() };
            save_checkpoint(&ckpt, &path)?;
            last_path = Some(path);
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;

    let checkpoint = Checkpoint { model: model_config, train: config.clone(), state };
    let path = checkpoint_path(out_dir, checkpoint.state.step);
    if last_path.as_deref() != Some(path.as_path()) {
        save_checkpoint(&checkpoint, &path)?;
    }
    Ok(TrainOutcome { checkpoint, checkpoint_path: path, seconds: start.elapsed().as_secs_f64() })
}

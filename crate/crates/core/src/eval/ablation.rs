use std::fs;
use std::path::Path;

use disentaforge_autograd::Scalar;
use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport};
use crate::error::{Error, Result};
use crate::net::{Ablation, ModelConfig};
use crate::synth::{CorpusManifest, SPLIT_TEST_CROSS, SPLIT_TEST_IN};
use crate::trainer::{checkpoint_path, load_checkpoint, train, Checkpoint, ImageSet, TrainConfig};

/// Mean and sample standard deviation of one metric over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl AblationCell {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub test_in: AblationCell,
    pub test_cross: AblationCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub steps: u64,
    pub rows: Vec<AblationRow>,
    pub reports: Vec<EvalReport>,
}

impl AblationTable {
    pub fn row(&self, ablation: Ablation) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.ablation == ablation)
    }

    /// Frame-level AUC table, one row per ablation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ablation,test_in_mean,test_in_std,test_cross_mean,test_cross_std,n_seeds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.ablation,
                r.test_in.mean,
                r.test_in.std,
                r.test_cross.mean,
                r.test_cross.std,
                r.test_in.values.len()
            ));
        }
        out
    }
}

/// Train (or reuse a finished run of) `ablation` with `seed` under `root/seed-<seed>/<ablation>`.
pub fn train_or_reuse<T: Scalar>(
    manifest: &CorpusManifest,
    images: &ImageSet,
    model: &ModelConfig,
    config: &TrainConfig,
    dir: &Path,
) -> Result<Checkpoint<T>> {
    let done = checkpoint_path(dir, config.steps);
    if done.is_file() {
        let ckpt = load_checkpoint::<T>(&done)?;
        let mut expected = model.clone();
        expected.seed = config.seed;
        if ckpt.train == *config && ckpt.model == expected {
            log::info!("reusing finished run {}", done.display());
            return Ok(ckpt);
        }
        log::warn!("{} was trained with a different configuration; retraining", done.display());
    }
    Ok(train::<T>(manifest, images, model.clone(), config, dir, None)?.checkpoint)
}

/// Train every ablation for every seed, evaluate on `test_in` and `test_cross`,
/// and tabulate frame AUC mean and spread. Run directories under `out` double as a cache.
pub fn run_ablation_matrix<T: Scalar>(
    manifest: &CorpusManifest,
    images: &ImageSet,
    model: &ModelConfig,
    base: &TrainConfig,
    seeds: &[u64],
    out: &Path,
) -> Result<AblationTable> {
    if seeds.len() < 2 {
        return Err(Error::invalid("the ablation matrix needs at least two seeds"));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for ablation in Ablation::ALL {
        let (mut tin, mut tcross) = (Vec::new(), Vec::new());
        for &seed in seeds {
            let config = TrainConfig { seed, ablation, ..base.clone() };
            let dir = out.join(format!("seed-{seed}")).join(ablation.as_str());
            let ckpt = train_or_reuse::<T>(manifest, images, model, &config, &dir)?;
            let id = checkpoint_path(&dir, config.steps).display().to_string();
            let report = evaluate(&ckpt, &id, manifest, images, &[SPLIT_TEST_IN, SPLIT_TEST_CROSS])?;
            tin.push(report.splits[SPLIT_TEST_IN].frame_auc);
            tcross.push(report.splits[SPLIT_TEST_CROSS].frame_auc);
            log::info!(
                "{ablation} seed {seed}: test_in {:.4} test_cross {:.4}",
                tin.last().unwrap(),
                tcross.last().unwrap()
            );
            reports.push(report);
        }
        rows.push(AblationRow { ablation, test_in: AblationCell::of(tin), test_cross: AblationCell::of(tcross) });
    }
    Ok(AblationTable { seeds: seeds.to_vec(), steps: base.steps, rows, reports })
}

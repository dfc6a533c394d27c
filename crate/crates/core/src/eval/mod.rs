//! Scoring, AUC reports, embedding export and the ablation matrix.

mod ablation;
mod embed;
mod metrics;

pub use ablation::{run_ablation_matrix, train_or_reuse, AblationCell, AblationRow, AblationTable};
pub use embed::{embed, export_embeddings, separation_silhouette, EmbeddingDump, EmbeddingKind, EmbeddingRow};
pub use metrics::{group_means, roc_auc, silhouette, video_auc};

use std::collections::BTreeMap;
use std::path::Path;

use disentaforge_autograd::{Graph, ParamStore, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Ablation, Model, Phase};
use crate::synth::CorpusManifest;
use crate::trainer::{Checkpoint, ImageSet};

/// Images per inference batch.
pub const EVAL_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub frame_auc: f64,
    pub video_auc: f64,
    pub n_frames: usize,
    pub n_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ablation: Ablation,
    pub seed: u64,
    pub checkpoint: String,
    pub splits: BTreeMap<String, SplitReport>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Fake-probability of each image at `positions`, with deterministic inference.
pub fn score<T: Scalar>(model: &Model, params: &ParamStore<T>, images: &ImageSet, positions: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(positions.len());
    for chunk in positions.chunks(EVAL_BATCH) {
        let graph = Graph::new();
        let p = params.bind(&graph, |_| false);
        let x = graph.constant(images.batch::<T>(chunk));
        let fwd = model.forward(&p, x, Phase::Infer)?;
        out.extend(fwd.probs.value().to_f64_vec());
    }
    Ok(out)
}

/// Positions in `images` of every record of `split`.
pub fn split_positions(manifest: &CorpusManifest, images: &ImageSet, split: &str) -> Result<Vec<usize>> {
    manifest.split_records(split)?.iter().map(|r| images.position(&r.sample_id)).collect()
}

fn check_image_size<T: Scalar>(ckpt: &Checkpoint<T>, manifest: &CorpusManifest) -> Result<()> {
    if ckpt.model.image_size != manifest.image_size {
        return Err(Error::invalid(format!(
            "checkpoint expects {}px images, corpus has {}px",
            ckpt.model.image_size, manifest.image_size
        )));
    }
    Ok(())
}

/// Frame- and video-level AUC of a checkpoint on each split.
pub fn evaluate<T: Scalar>(
    ckpt: &Checkpoint<T>,
    checkpoint_id: &str,
    manifest: &CorpusManifest,
    images: &ImageSet,
    splits: &[&str],
) -> Result<EvalReport> {
    check_image_size(ckpt, manifest)?;
    let model = ckpt.build_model(ckpt.ablation())?;
    let mut reports = BTreeMap::new();
    for &split in splits {
        let pos = split_positions(manifest, images, split)?;
        let scores = score(&model, &ckpt.state.params, images, &pos)?;
        let labels: Vec<u8> = pos.iter().map(|&i| images.labels[i].as_target()).collect();
        let groups: Vec<String> = pos.iter().map(|&i| images.groups[i].clone()).collect();
        let (group_scores, _) = group_means(&scores, &groups, &labels)?;
        reports.insert(
            split.to_string(),
            SplitReport {
                frame_auc: roc_auc(&scores, &labels)?,
                video_auc: video_auc(&scores, &groups, &labels)?,
                n_frames: pos.len(),
                n_groups: group_scores.len(),
            },
        );
    }
    Ok(EvalReport { ablation: ckpt.ablation(), seed: ckpt.train.seed, checkpoint: checkpoint_id.to_string(), splits: reports })
}

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use disentaforge_autograd::{Graph, ParamStore, Scalar};

use super::{check_image_size, silhouette, split_positions, EVAL_BATCH};
use crate::error::{Error, Result};
use crate::net::{layers::global_avg_pool, Bundle, Model, Phase};
use crate::synth::{CorpusManifest, ForgeryMethod, Label};
use crate::trainer::{Checkpoint, ImageSet};

/// Pooled feature exported per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmbeddingKind {
    IdPure1,
    IdPure2,
    ArtPure1,
    ArtPure2,
    IdRaw1,
    IdRaw2,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 6] = [
        EmbeddingKind::IdPure1,
        EmbeddingKind::IdPure2,
        EmbeddingKind::ArtPure1,
        EmbeddingKind::ArtPure2,
        EmbeddingKind::IdRaw1,
        EmbeddingKind::IdRaw2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::IdPure1 => "id_pure1",
            EmbeddingKind::IdPure2 => "id_pure2",
            EmbeddingKind::ArtPure1 => "art_pure1",
            EmbeddingKind::ArtPure2 => "art_pure2",
            EmbeddingKind::IdRaw1 => "id_raw1",
            EmbeddingKind::IdRaw2 => "id_raw2",
        }
    }

    /// Parse a comma-separated list such as `id_pure1,art_pure[2]`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').map(str::trim).filter(|k| !k.is_empty()).map(str::parse).collect()
    }

    fn select<'g, T: Scalar>(self, b: &Bundle<'g, T>) -> disentaforge_autograd::Var<'g, T> {
        match self {
            EmbeddingKind::IdPure1 => b.id_pure[0],
            EmbeddingKind::IdPure2 => b.id_pure[1],
            EmbeddingKind::ArtPure1 => b.art_pure[0],
            EmbeddingKind::ArtPure2 => b.art_pure[1],
            EmbeddingKind::IdRaw1 => b.id_raw[0],
            EmbeddingKind::IdRaw2 => b.id_raw[1],
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| *c != '[' && *c != ']').collect();
        EmbeddingKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown embedding kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub sample_id: String,
    pub label: Label,
    pub method: ForgeryMethod,
    pub kind: EmbeddingKind,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingDump {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingDump {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.vector.len())
    }

    pub fn to_csv(&self) -> String {
        let d = self.width();
        let mut out = String::from("sample_id,label,method,kind");
        for i in 0..d {
            out.push_str(&format!(",v{i}"));
        }
        out.push('\n');
        for r in &self.rows {
            let label = match r.label {
                Label::Real => "real",
                Label::Fake => "fake",
            };
            out.push_str(&format!("{},{label},{},{}", r.sample_id, r.method, r.kind));
            for v in &r.vector {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parse and validate a dump written by [`EmbeddingDump::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::invalid("empty embedding CSV"))?.split(',').collect();
        if header.len() < 4 || header[..4] != ["sample_id", "label", "method", "kind"] {
            return Err(Error::invalid("embedding CSV header must start with sample_id,label,method,kind"));
        }
        for (i, h) in header[4..].iter().enumerate() {
            if *h != format!("v{i}") {
                return Err(Error::invalid(format!("embedding CSV column {} should be v{i}, got {h}", i + 4)));
            }
        }
        let width = header.len() - 4;
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != header.len() {
                return Err(Error::invalid(format!("embedding CSV row {} has {} fields", n + 1, f.len())));
            }
            let label = match f[1] {
                "real" => Label::Real,
                "fake" => Label::Fake,
                other => return Err(Error::invalid(format!("bad label `{other}`"))),
            };
            let vector = f[4..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| Error::invalid(format!("row {}: {e}", n + 1))))
                .collect::<Result<Vec<_>>>()?;
            debug_assert_eq!(vector.len(), width);
            rows.push(EmbeddingRow {
                sample_id: f[0].to_string(),
                label,
                method: f[2].parse()?,
                kind: f[3].parse()?,
                vector,
            });
        }
        Ok(Self { rows })
    }
}

/// Pooled features of the requested kinds for each image (rows ordered by sample, then kind).
pub fn embed<T: Scalar>(
    model: &Model,
    params: &ParamStore<T>,
    images: &ImageSet,
    positions: &[usize],
    kinds: &[EmbeddingKind],
) -> Result<EmbeddingDump> {
    if !model.ablation.separates() {
        return Err(Error::invalid(format!("ablation `{}` produces no disentangled features", model.ablation)));
    }
    let mut rows = Vec::with_capacity(positions.len() * kinds.len());
    for chunk in positions.chunks(EVAL_BATCH) {
        let graph = Graph::new();
        let p = params.bind(&graph, |_| false);
        let x = graph.constant(images.batch::<T>(chunk));
        let fwd = model.forward(&p, x, Phase::Infer)?;
        let bundle = fwd.bundle.expect("separating ablation yields a bundle");
        let pooled: Vec<Vec<f64>> = kinds.iter().map(|k| global_avg_pool(k.select(&bundle)).value().to_f64_vec()).collect();
        let d = model.config.d;
        for (row, &i) in chunk.iter().enumerate() {
            for (k, kind) in kinds.iter().enumerate() {
                rows.push(EmbeddingRow {
                    sample_id: images.ids[i].clone(),
                    label: images.labels[i],
                    method: images.methods[i],
                    kind: *kind,
                    vector: pooled[k][row * d..(row + 1) * d].to_vec(),
                });
            }
        }
    }
    Ok(EmbeddingDump { rows })
}

/// Embed one split of the corpus and write the CSV to `out`.
pub fn export_embeddings<T: Scalar>(
    ckpt: &Checkpoint<T>,
    manifest: &CorpusManifest,
    images: &ImageSet,
    split: &str,
    kinds: &[EmbeddingKind],
    out: &Path,
) -> Result<EmbeddingDump> {
    check_image_size(ckpt, manifest)?;
    if kinds.is_empty() {
        return Err(Error::invalid("no embedding kinds requested"));
    }
    let model = ckpt.build_model(ckpt.ablation())?;
    let positions = split_positions(manifest, images, split)?;
    let dump = embed(&model, &ckpt.state.params, images, &positions, kinds)?;
    fs::write(out, dump.to_csv()).map_err(|e| Error::io(out, e))?;
    Ok(dump)
}

/// Silhouette of pure identity vs pure artifact vectors, averaged over the two branches.
pub fn separation_silhouette(dump: &EmbeddingDump) -> Result<f64> {
    let pairs = [
        (EmbeddingKind::IdPure1, EmbeddingKind::ArtPure1),
        (EmbeddingKind::IdPure2, EmbeddingKind::ArtPure2),
    ];
    let mut total = 0.0;
    for (id, art) in pairs {
        let (points, cluster): (Vec<Vec<f64>>, Vec<usize>) = dump
            .rows
            .iter()
            .filter_map(|r| {
                (r.kind == id).then_some(0).or((r.kind == art).then_some(1)).map(|c| (r.vector.clone(), c))
            })
            .unzip();
        total += silhouette(&points, &cluster)?;
    }
    Ok(total / 2.0)
}

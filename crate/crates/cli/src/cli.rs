use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use disentaforge::net::Ablation;
use disentaforge::synth::ForgeryMethod;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "disentaforge", version, about = "Identity/artifact disentanglement for face-forgery detection on synthetic data")]
pub struct Cli {
    /// JSON run configuration; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log more (-v info, -vv debug). `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic corpus (PNG images plus manifest.json).
    GenData(GenDataArgs),
    /// Train one model on the `train` split.
    Train(TrainArgs),
    /// Frame- and video-level AUC of a checkpoint.
    Eval(EvalArgs),
    /// Pooled identity/artifact features of one split as CSV.
    ExportEmb(ExportArgs),
    /// Train and evaluate every ablation over several seeds.
    Ablate(AblateArgs),
    /// t-SNE scatter of an embedding CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub holdout: Option<ForgeryMethod>,
    #[arg(long)]
    pub frames_per_group: Option<usize>,
    /// Fake groups per seen method in `train`.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Fake groups per seen method in `test_in`.
    #[arg(long)]
    pub test_groups: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    /// Feature channels.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub encoder_depth: Option<usize>,
    #[arg(long)]
    pub decoder_depth: Option<usize>,
    #[arg(long)]
    pub classifier_hidden: Option<usize>,
    #[arg(long)]
    pub freeze_encoder: Option<bool>,
}

#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda4: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "test_in,test_cross")]
    pub splits: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated feature kinds, e.g. `id_pure1,art_pure1`.
    #[arg(long, default_value = "id_pure1,id_pure2,art_pure1,art_pure2")]
    pub kinds: String,
    #[arg(long, default_value = "test_in")]
    pub split: String,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output table (CSV); run directories go to `runs/` beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Embedding CSV written by `export-emb`.
    #[arg(long)]
    pub emb: PathBuf,
    /// Output SVG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only plot these kinds.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn push<T: serde::Serialize>(out: &mut Vec<(String, Value)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), json!(v)));
    }
}

impl ModelFlags {
    pub fn overrides(&self, out: &mut Vec<(String, Value)>) {
        push(out, "model.d", &self.d);
        push(out, "model.encoder_depth", &self.encoder_depth);
        push(out, "model.decoder_depth", &self.decoder_depth);
        push(out, "model.classifier_hidden", &self.classifier_hidden);
        push(out, "model.freeze_encoder", &self.freeze_encoder);
    }
}

impl TrainFlags {
    pub fn overrides(&self, out: &mut Vec<(String, Value)>) {
        push(out, "train.lr", &self.lr);
        push(out, "train.steps", &self.steps);
        push(out, "train.batch_size", &self.batch_size);
        push(out, "train.weights.lambda1", &self.lambda1);
        push(out, "train.weights.lambda2", &self.lambda2);
        push(out, "train.weights.lambda3", &self.lambda3);
        push(out, "train.weights.lambda4", &self.lambda4);
        push(out, "train.checkpoint_every", &self.checkpoint_every);
    }
}

impl Command {
    /// Flag values that override the config file, as dotted keys.
    pub fn overrides(&self) -> Vec<(String, Value)> {
        let mut o = Vec::new();
        match self {
            Command::GenData(a) => {
                push(&mut o, "paths.out", &a.out);
                push(&mut o, "generator.seed", &a.seed);
                push(&mut o, "generator.identities", &a.identities);
                push(&mut o, "generator.holdout", &a.holdout.map(|m| m.as_str()));
                push(&mut o, "generator.frames_per_group", &a.frames_per_group);
                push(&mut o, "generator.groups", &a.groups);
                push(&mut o, "generator.test_groups", &a.test_groups);
                push(&mut o, "generator.image_size", &a.image_size);
            }
            Command::Train(a) => {
                push(&mut o, "paths.data", &a.data);
                push(&mut o, "paths.out", &a.out);
                push(&mut o, "paths.ckpt", &a.resume);
                push(&mut o, "train.seed", &a.seed);
                push(&mut o, "train.ablation", &a.ablation.map(|x| x.as_str()));
                a.train.overrides(&mut o);
                a.model.overrides(&mut o);
            }
            Command::Eval(a) => {
                push(&mut o, "paths.ckpt", &a.ckpt);
                push(&mut o, "paths.data", &a.data);
                push(&mut o, "paths.out", &a.out);
            }
            Command::ExportEmb(a) => {
                push(&mut o, "paths.ckpt", &a.ckpt);
                push(&mut o, "paths.data", &a.data);
                push(&mut o, "paths.out", &a.out);
            }
            Command::Ablate(a) => {
                push(&mut o, "paths.data", &a.data);
                push(&mut o, "paths.out", &a.out);
                push(&mut o, "seeds", &a.seeds);
                a.train.overrides(&mut o);
                a.model.overrides(&mut o);
            }
            Command::Plot(a) => {
                push(&mut o, "paths.out", &a.out);
            }
        }
        o
    }
}

//! `disentaforge` command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use disentaforge::eval::{evaluate, export_embeddings, run_ablation_matrix, EmbeddingDump, EmbeddingKind};
use disentaforge::synth::{generate_corpus, CorpusManifest, SPLIT_TEST_CROSS, SPLIT_TEST_IN, SPLIT_TRAIN};
use disentaforge::trainer::{load_checkpoint, train, ImageSet, Precision};
use disentaforge_autograd::Scalar;

pub use cli::{Cli, Command};
pub use config::{config_echo_path, resolve_config, RunConfig, CONFIG_FILE};
pub use error::CliError;

/// Parse `argv`, run the subcommand and return the process exit code.
/// Errors are printed to stderr as one JSON line.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).to_line());
            return 2;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(cli.config.as_deref(), &cli.command.overrides())?;
    match Precision::from_env() {
        Precision::F32 => execute::<f32>(&cli.command, config),
        Precision::F64 => execute::<f64>(&cli.command, config),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::usage(format!("--{flag} is required (or set paths.{flag} in the config)")))
}

fn load_manifest(data: &Path) -> Result<CorpusManifest, CliError> {
    Ok(CorpusManifest::load(data)?)
}

fn execute<T: Scalar>(command: &Command, mut config: RunConfig) -> Result<(), CliError> {
    match command {
        Command::GenData(_) => {
            let out = required(&config.paths.out, "out")?.to_path_buf();
            config.save(&config_echo_path(&out, true))?;
            let manifest = generate_corpus(&config.generator, &out)?;
            log::info!("wrote {} images to {}", manifest.records.len(), out.display());
        }
        Command::Train(_) => {
            let data = required(&config.paths.data, "data")?.to_path_buf();
            let out = required(&config.paths.out, "out")?.to_path_buf();
            let manifest = load_manifest(&data)?;
            if config.model.image_size != manifest.image_size {
                log::info!("using the corpus image size {}", manifest.image_size);
                config.model.image_size = manifest.image_size;
            }
            config.model.seed = config.train.seed;
            let resume = config.paths.ckpt.as_deref().map(load_checkpoint::<T>).transpose()?;
            config.save(&config_echo_path(&out, true))?;
            let images = ImageSet::load(&manifest, &data, &[SPLIT_TRAIN])?;
            let outcome = train::<T>(&manifest, &images, config.model.clone(), &config.train, &out, resume)?;
            println!("{}", outcome.checkpoint_path.display());
        }
        Command::Eval(args) => {
            let ckpt_path = required(&config.paths.ckpt, "ckpt")?.to_path_buf();
            let data = required(&config.paths.data, "data")?.to_path_buf();
            let out = required(&config.paths.out, "out")?.to_path_buf();
            let manifest = load_manifest(&data)?;
            let splits: Vec<&str> = args.splits.iter().map(String::as_str).collect();
            for s in &splits {
                if !manifest.splits.contains_key(*s) {
                    return Err(CliError::usage(format!("unknown split `{s}`")));
                }
            }
            let ckpt = load_checkpoint::<T>(&ckpt_path)?;
            config.save(&config_echo_path(&out, false))?;
            let images = ImageSet::load(&manifest, &data, &splits)?;
            let report = evaluate(&ckpt, &ckpt_path.display().to_string(), &manifest, &images, &splits)?;
            report.save(&out)?;
            for (split, r) in &report.splits {
                println!("{split}: frame_auc {:.4} video_auc {:.4} ({} frames)", r.frame_auc, r.video_auc, r.n_frames);
            }
        }
        Command::ExportEmb(args) => {
            let ckpt_path = required(&config.paths.ckpt, "ckpt")?.to_path_buf();
            let data = required(&config.paths.data, "data")?.to_path_buf();
            let out = required(&config.paths.out, "out")?.to_path_buf();
            let kinds = EmbeddingKind::parse_list(&args.kinds).map_err(|e| CliError::usage(e.to_string()))?;
            let manifest = load_manifest(&data)?;
            if !manifest.splits.contains_key(&args.split) {
                return Err(CliError::usage(format!("unknown split `{}`", args.split)));
            }
            let ckpt = load_checkpoint::<T>(&ckpt_path)?;
            config.save(&config_echo_path(&out, false))?;
            let images = ImageSet::load(&manifest, &data, &[args.split.as_str()])?;
            let dump = export_embeddings(&ckpt, &manifest, &images, &args.split, &kinds, &out)?;
            log::info!("wrote {} rows to {}", dump.rows.len(), out.display());
        }
        Command::Ablate(_) => {
            let data = required(&config.paths.data, "data")?.to_path_buf();
            let out = required(&config.paths.out, "out")?.to_path_buf();
            if config.seeds.len() < 2 {
                return Err(CliError::usage("ablate needs at least two seeds"));
            }
            let manifest = load_manifest(&data)?;
            config.model.image_size = manifest.image_size;
            config.save(&config_echo_path(&out, false))?;
            let images = ImageSet::load(&manifest, &data, &[SPLIT_TRAIN, SPLIT_TEST_IN, SPLIT_TEST_CROSS])?;
            let runs = out.parent().unwrap_or(Path::new(".")).join("runs");
            let table = run_ablation_matrix::<T>(&manifest, &images, &config.model, &config.train, &config.seeds, &runs)?;
            write(&out, &table.to_csv())?;
            let json = serde_json::to_string_pretty(&table).map_err(|e| CliError::runtime(e.to_string()))?;
            write(&out.with_extension("json"), &(json + "\n"))?;
            print!("{}", table.to_csv());
        }
        Command::Plot(args) => {
            let out = required(&config.paths.out, "out")?.to_path_buf();
            let text = fs::read_to_string(&args.emb)
                .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", args.emb.display())))?;
            let mut dump = EmbeddingDump::from_csv(&text).map_err(|e| CliError::usage(e.to_string()))?;
            if let Some(list) = &args.kinds {
                let keep = EmbeddingKind::parse_list(list).map_err(|e| CliError::usage(e.to_string()))?;
                dump.rows.retain(|r| keep.contains(&r.kind));
            }
            if dump.rows.len() < 2 {
                return Err(CliError::usage("need at least two embedding rows to plot"));
            }
            if !(args.perplexity > 0.0) || args.epochs == 0 {
                return Err(CliError::usage("perplexity and epochs must be positive"));
            }
            config.save(&config_echo_path(&out, false))?;
            let opts = plot::TsneOptions { perplexity: args.perplexity, epochs: args.epochs, seed: args.seed };
            let points = plot::project(&dump, &opts);
            let title = format!("t-SNE of {} ({} points)", args.emb.display(), dump.rows.len());
            write(&out, &plot::render_svg(&dump, &points, &title))?;
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

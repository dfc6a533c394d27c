//! Run configuration: built-in defaults, then an optional JSON file, then
//! command-line flags. The resolved value is written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use disentaforge::net::ModelConfig;
use disentaforge::synth::GeneratorConfig;
use disentaforge::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seeds of the ablation matrix.
    pub seeds: Vec<u64>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: disentaforge::Error| CliError::usage(e.to_string());
        self.generator.validate().map_err(usage)?;
        self.model.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        if self.seeds.is_empty() {
            return Err(CliError::usage("seeds must not be empty"));
        }
        Ok(())
    }

    /// Pretty JSON, newline-terminated.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
        }
        fs::write(path, self.to_json()).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    }
}

/// Where the resolved config of a run goes: `config.json` inside an output
/// directory, or `<stem>.config.json` beside an output file.
pub fn config_echo_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        return out.join(CONFIG_FILE);
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.{CONFIG_FILE}"))
}

/// Merge `file` (if any) over the defaults, then apply dotted-key `overrides`
/// such as `("train.lr", 0.001)`, and validate.
pub fn resolve_config(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let parsed: Value = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::usage(format!("config {} key `{}`: {}", path.display(), e.path(), e.inner())))?;
        if !parsed.is_object() {
            return Err(CliError::usage(format!("config {} must hold a JSON object", path.display())));
        }
        merge(&mut tree, parsed);
    }
    for (key, value) in overrides {
        set_path(&mut tree, key, value.clone());
    }
    let config: RunConfig = serde_path_to_error::deserialize(tree)
        .map_err(|e| CliError::usage(format!("config key `{}`: {}", e.path(), e.inner())))?;
    config.validate()?;
    Ok(config)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(tree: &mut Value, key: &str, value: Value) {
    let mut node = tree;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        let map = node.as_object_mut().expect("object");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return;
        }
        node = map.entry(part).or_insert_with(|| Value::Object(Map::new()));
    }
}

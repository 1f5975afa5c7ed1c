//! Experiment configuration: TOML documents with dotted-path overrides,
//! named presets, and the four-variant wiring.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stab_core::model::{ModelConfig, TaskKind};
use stab_core::train::TrainConfig;
use stab_core::{Result, StabError};

/// Ablation variants. Each implies consistent wiring of the stochastic and
/// architectural elements across the whole model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain transformer encoder: linear embeddings (J = 1), rectifier FFN,
    /// no parallel branch, no attention bias.
    Vanilla,
    /// Stochastic competition only: LWTA FFN, mixture embeddings, sampling.
    Stochastic,
    /// Architectural elements only, deterministic: parallel branch and
    /// attention bias with rectifier FFN and linear embeddings.
    Hybrid,
    /// Everything on.
    Full,
}

pub const ALL_VARIANTS: [Variant; 4] = [Variant::Vanilla, Variant::Stochastic, Variant::Hybrid, Variant::Full];

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Stochastic => "stochastic",
            Variant::Hybrid => "hybrid",
            Variant::Full => "full",
        }
    }

    fn stochastic_elements(&self) -> bool {
        matches!(self, Variant::Stochastic | Variant::Full)
    }

    fn architectural_elements(&self) -> bool {
        matches!(self, Variant::Hybrid | Variant::Full)
    }
}

impl FromStr for Variant {
    type Err = StabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "stochastic" => Ok(Variant::Stochastic),
            "hybrid" => Ok(Variant::Hybrid),
            "full" => Ok(Variant::Full),
            other => Err(StabError::Config(format!(
                "unknown variant {other}; expected one of vanilla, stochastic, hybrid, full"
            ))),
        }
    }
}

/// Architecture knobs before task and variant wiring are applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSettings {
    pub d: usize,
    pub depth: usize,
    pub heads: usize,
    pub dropout: f64,
    pub u: usize,
    pub j: usize,
    pub t_train: f64,
    pub t_infer: f64,
    pub n_train: usize,
    pub n_infer: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            d: 32,
            depth: 2,
            heads: 8,
            dropout: 0.1,
            u: 2,
            j: 16,
            t_train: 0.69,
            t_infer: 0.01,
            n_train: 1,
            n_infer: 64,
        }
    }
}

impl ModelSettings {
    /// Wire a concrete model configuration for a task under a variant.
    pub fn wire(&self, task: TaskKind, variant: Variant) -> ModelConfig {
        ModelConfig {
            d: self.d,
            depth: self.depth,
            heads: self.heads,
            dropout: self.dropout,
            u: self.u,
            j: if variant.stochastic_elements() { self.j } else { 1 },
            t_train: self.t_train,
            t_infer: self.t_infer,
            n_train: self.n_train,
            n_infer: self.n_infer,
            task,
            stochastic: variant.stochastic_elements(),
            parallel: variant.architectural_elements(),
            attn_bias: variant.architectural_elements(),
        }
    }
}

/// Where the data comes from: a CSV/schema pair, or a named synthetic task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<String>,
    pub rows: usize,
    pub split_seed: u64,
    pub no_scaling: bool,
    pub label_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

/// A fully resolved experiment: defaults, preset and explicit keys folded
/// together, with variant wiring still symbolic (applied per run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub preset: Option<String>,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Effective KL scale: deterministic variants train on the plain task
    /// objective.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if !self.variant.stochastic_elements() {
            t.kl_scale = Some(0.0);
        }
        t
    }
}

// ── raw file shape ──────────────────────────────────────────────────

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    variant: Option<String>,
    preset: Option<String>,
    #[serde(default)]
    model: ModelFile,
    #[serde(default)]
    train: TrainFile,
    data: DataFile,
    #[serde(default)]
    output: OutputFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    d: Option<usize>,
    depth: Option<usize>,
    heads: Option<usize>,
    dropout: Option<f64>,
    u: Option<usize>,
    j: Option<usize>,
    t_train: Option<f64>,
    t_infer: Option<f64>,
    n_train: Option<usize>,
    n_infer: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    lr_base: Option<f64>,
    weight_decay: Option<f64>,
    warmup_steps: Option<usize>,
    plateau_patience: Option<usize>,
    plateau_factor: Option<f64>,
    min_lr: Option<f64>,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    kl_scale: Option<f64>,
    early_stop_patience: Option<usize>,
    seed: Option<u64>,
    val_samples: Option<usize>,
    plateau_min_delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataFile {
    csv: Option<PathBuf>,
    schema: Option<PathBuf>,
    synthetic: Option<String>,
    rows: Option<usize>,
    split_seed: Option<u64>,
    no_scaling: Option<bool>,
    label_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    checkpoint: Option<PathBuf>,
    history: Option<PathBuf>,
}

/// Dropout / embedding size / depth suggestions per benchmark dataset.
fn preset(name: &str) -> Result<(f64, usize, usize)> {
    Ok(match name {
        "HI" => (0.25, 256, 4),
        "AD" => (0.1, 16, 3),
        "OT" => (0.25, 192, 5),
        "HE" => (0.25, 96, 7),
        "JA" => (0.25, 192, 4),
        "YE" => (0.25, 128, 6),
        "DI" => (0.1, 96, 4),
        "HO" => (0.125, 128, 4),
        other => {
            return Err(StabError::Config(format!(
                "unknown preset {other}; expected one of HI, AD, OT, HE, JA, YE, DI, HO"
            )))
        }
    })
}

/// Parse `key=value`, coercing the value to integer, float or boolean when
/// it reads as one.
fn parse_override(arg: &str) -> Result<(Vec<String>, toml::Value)> {
    let (path, raw) = arg
        .split_once('=')
        .ok_or_else(|| StabError::Config(format!("override {arg} is not of the form key=value")))?;
    let path: Vec<String> = path.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(StabError::Config(format!("override key {} has an empty segment", arg)));
    }
    let value = if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(raw.to_string())
    };
    Ok((path, value))
}

fn apply_override(root: &mut toml::Value, path: &[String], value: toml::Value) -> Result<()> {
    let mut node = root;
    for segment in &path[..path.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| StabError::Config(format!("override path {} crosses a non-table", segment)))?
            .entry(segment.clone())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| StabError::Config("override path ends inside a non-table".into()))?
        .insert(path.last().unwrap().clone(), value);
    Ok(())
}

/// Load, override and resolve an experiment configuration.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| StabError::Config(format!("{}: {e}", path.display())))?;
    resolve_config(&text, overrides)
}

pub fn resolve_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| StabError::Config(format!("config parse: {e}")))?;
    for arg in overrides {
        let (path, v) = parse_override(arg)?;
        apply_override(&mut value, &path, v)?;
    }
    let file: ConfigFile = value
        .try_into()
        .map_err(|e| StabError::Config(format!("config: {e}")))?;

    let variant = match &file.variant {
        Some(v) => v.parse()?,
        None => Variant::Full,
    };
    let mut model = ModelSettings::default();
    if let Some(name) = &file.preset {
        let (dropout, d, depth) = preset(name)?;
        model.dropout = dropout;
        model.d = d;
        model.depth = depth;
    }
    let m = &file.model;
    if let Some(v) = m.d { model.d = v; }
    if let Some(v) = m.depth { model.depth = v; }
    if let Some(v) = m.heads { model.heads = v; }
    if let Some(v) = m.dropout { model.dropout = v; }
    if let Some(v) = m.u { model.u = v; }
    if let Some(v) = m.j { model.j = v; }
    if let Some(v) = m.t_train { model.t_train = v; }
    if let Some(v) = m.t_infer { model.t_infer = v; }
    if let Some(v) = m.n_train { model.n_train = v; }
    if let Some(v) = m.n_infer { model.n_infer = v; }

    let mut train = TrainConfig::default();
    let t = &file.train;
    if let Some(v) = t.lr_base { train.lr_base = v; }
    if let Some(v) = t.weight_decay { train.weight_decay = v; }
    if t.warmup_steps.is_some() { train.warmup_steps = t.warmup_steps; }
    if let Some(v) = t.plateau_patience { train.plateau_patience = v; }
    if let Some(v) = t.plateau_factor { train.plateau_factor = v; }
    if let Some(v) = t.min_lr { train.min_lr = v; }
    if let Some(v) = t.max_epochs { train.max_epochs = v; }
    if let Some(v) = t.batch_size { train.batch_size = v; }
    if t.kl_scale.is_some() { train.kl_scale = t.kl_scale; }
    if let Some(v) = t.early_stop_patience { train.early_stop_patience = v; }
    if let Some(v) = t.seed { train.seed = v; }
    if let Some(v) = t.val_samples { train.val_samples = v; }
    if t.plateau_min_delta.is_some() { train.plateau_min_delta = t.plateau_min_delta; }
    train.validate()?;

    let d = file.data;
    match (&d.csv, &d.synthetic) {
        (Some(_), Some(_)) => {
            return Err(StabError::Config("data: csv and synthetic are mutually exclusive".into()))
        }
        (None, None) => {
            return Err(StabError::Config("data: one of csv or synthetic is required".into()))
        }
        (Some(_), None) if d.schema.is_none() => {
            return Err(StabError::Config("data: csv input needs a schema path".into()))
        }
        _ => {}
    }
    if let Some(kind) = &d.synthetic {
        kind.parse::<stab_core::data::SyntheticKind>()?;
    }
    let data = DataConfig {
        csv: d.csv,
        schema: d.schema,
        synthetic: d.synthetic,
        rows: d.rows.unwrap_or(2000),
        split_seed: d.split_seed.unwrap_or(0),
        no_scaling: d.no_scaling.unwrap_or(false),
        label_scale: d.label_scale.unwrap_or(1.0),
    };

    let output = OutputConfig {
        checkpoint: file.output.checkpoint.unwrap_or_else(|| PathBuf::from("model.stab")),
        history: file.output.history.unwrap_or_else(|| PathBuf::from("history.jsonl")),
    };

    Ok(ExperimentConfig { variant, preset: file.preset, model, train, data, output })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        synthetic = "linear_separable"
    "#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = resolve_config(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.variant, Variant::Full);
        assert_eq!(cfg.model.d, 32);
        assert_eq!(cfg.data.rows, 2000);
        assert_eq!(cfg.output.checkpoint, PathBuf::from("model.stab"));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = resolve_config(
            MINIMAL,
            &["model.d=64".into(), "train.seed=9".into(), "variant=vanilla".into()],
        )
        .unwrap();
        assert_eq!(cfg.model.d, 64);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.variant, Variant::Vanilla);
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = resolve_config(MINIMAL, &["model.width=64".into()]).unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
        let err = resolve_config("[data]\nsynthetic = \"xor_numeric\"\nbogus = 1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn unknown_variant_names_the_allowed_set() {
        let err = resolve_config(MINIMAL, &["variant=mega".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vanilla") && msg.contains("full"), "{msg}");
    }

    #[test]
    fn presets_overlay_then_explicit_keys_win() {
        let text = r#"
            preset = "HI"
            [data]
            synthetic = "xor_numeric"
        "#;
        let cfg = resolve_config(text, &[]).unwrap();
        assert_eq!((cfg.model.dropout, cfg.model.d, cfg.model.depth), (0.25, 256, 4));
        let cfg = resolve_config(text, &["model.d=32".into()]).unwrap();
        assert_eq!(cfg.model.d, 32);
        assert_eq!(cfg.model.depth, 4);
    }

    #[test]
    fn variant_wiring_matches_the_ablation_table() {
        use stab_core::model::TaskKind;
        let settings = ModelSettings::default();
        let task = TaskKind::Regression;
        let vanilla = settings.wire(task, Variant::Vanilla);
        assert!(!vanilla.stochastic && !vanilla.parallel && !vanilla.attn_bias);
        assert_eq!(vanilla.j, 1);
        let stoch = settings.wire(task, Variant::Stochastic);
        assert!(stoch.stochastic && !stoch.parallel && !stoch.attn_bias);
        assert_eq!(stoch.j, 16);
        let hybrid = settings.wire(task, Variant::Hybrid);
        assert!(!hybrid.stochastic && hybrid.parallel && hybrid.attn_bias);
        assert_eq!(hybrid.j, 1);
        let full = settings.wire(task, Variant::Full);
        assert!(full.stochastic && full.parallel && full.attn_bias);
    }

    #[test]
    fn data_source_validation() {
        assert!(resolve_config("[data]\n", &[]).is_err());
        assert!(resolve_config("[data]\ncsv = \"x.csv\"\n", &[]).is_err());
        assert!(resolve_config(
            "[data]\ncsv = \"x.csv\"\nsynthetic = \"xor_numeric\"\nschema = \"s.toml\"\n",
            &[]
        )
        .is_err());
        assert!(resolve_config("[data]\nsynthetic = \"nope\"\n", &[]).is_err());
    }
}

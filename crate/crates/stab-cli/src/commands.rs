//! The train / eval / predict / ablate commands.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stab_core::data::{
    evaluate, load_csv, load_csv_features, make_synthetic, Dataset, DatasetSchema, EvalData,
    EvalReport, PreprocessOptions, Preprocessor, SchemaTask, Split, SyntheticKind, TargetColumn,
};
use stab_core::model::{DataProfile, Predictions, StabModel, TaskKind};
use stab_core::train::{train, TrainHistory};
use stab_core::{ParamStore, Result, StabError};

use crate::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::config::{ExperimentConfig, Variant, ALL_VARIANTS};

/// Which rows of a dataset an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for SplitChoice {
    type Err = StabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "val" => Ok(SplitChoice::Val),
            "test" => Ok(SplitChoice::Test),
            "all" => Ok(SplitChoice::All),
            other => Err(StabError::Config(format!(
                "unknown split {other}; expected one of train, val, test, all"
            ))),
        }
    }
}

impl SplitChoice {
    fn rows(&self, ds: &Dataset) -> Vec<usize> {
        match self {
            SplitChoice::Train => ds.split_rows(Split::Train),
            SplitChoice::Val => ds.split_rows(Split::Val),
            SplitChoice::Test => ds.split_rows(Split::Test),
            SplitChoice::All => (0..ds.rows()).collect(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::Test => "test",
            SplitChoice::All => "all",
        }
    }
}

/// Load the dataset an experiment names: a CSV/schema pair or a synthetic
/// generator.
pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<(Dataset, DatasetSchema)> {
    if let Some(kind) = &cfg.data.synthetic {
        let kind: SyntheticKind = kind.parse()?;
        return make_synthetic(kind, cfg.data.rows, cfg.data.split_seed);
    }
    let schema_path = cfg.data.schema.as_ref().expect("validated at resolution");
    let schema = DatasetSchema::load(schema_path)?;
    let csv_path = cfg.data.csv.as_ref().expect("validated at resolution");
    let ds = load_csv(csv_path, &schema, cfg.data.split_seed)?;
    Ok((ds, schema))
}

fn task_of(schema: &DatasetSchema, prep: &Preprocessor) -> TaskKind {
    match schema.task {
        SchemaTask::Classification => TaskKind::Classification {
            classes: prep.n_classes().expect("classification preprocessor"),
        },
        SchemaTask::Regression => TaskKind::Regression,
    }
}

#[derive(Debug, Serialize)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_metric: Option<f64>,
    pub parameters: usize,
}

/// Wire the requested variant, train, and persist the best-validation
/// checkpoint plus the epoch history.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    checkpoint_path: Option<&Path>,
    history_path: Option<&Path>,
) -> Result<TrainOutcome> {
    let (dataset, schema) = load_experiment_data(cfg)?;
    let prep = Preprocessor::fit(
        &dataset,
        PreprocessOptions { no_scaling: cfg.data.no_scaling, label_scale: cfg.data.label_scale },
    )?;
    let sets = prep.prepare_splits(&dataset)?;
    let task = task_of(&schema, &prep);
    let model_cfg = cfg.model.wire(task, cfg.variant);
    let profile =
        DataProfile { numeric_count: schema.numeric.len(), categorical_cards: prep.cardinalities() };
    let mut model = StabModel::new(model_cfg.clone(), profile.clone(), cfg.train.seed)?;

    let train_cfg = cfg.effective_train();
    let history = train(&mut model, &sets, &train_cfg)?;

    let ckpt_path = checkpoint_path.unwrap_or(&cfg.output.checkpoint);
    let hist_path = history_path.unwrap_or(&cfg.output.history);
    let meta = CheckpointMeta {
        experiment: cfg.clone(),
        model: model_cfg,
        profile,
        preprocessor: prep,
        schema,
        seed: cfg.train.seed,
        epoch: history.best_epoch,
    };
    checkpoint::save(ckpt_path, &meta, &model)?;
    write_history(hist_path, &history)?;

    Ok(TrainOutcome {
        checkpoint: ckpt_path.to_path_buf(),
        history: hist_path.to_path_buf(),
        epochs: history.epochs.len(),
        best_epoch: history.best_epoch,
        best_val_metric: history.best_metric(),
        parameters: model.param_count(),
    })
}

fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for record in &history.epochs {
        let line = serde_json::to_string(record)
            .map_err(|e| StabError::Io(std::io::Error::other(e)))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalOutcome {
    pub split: &'static str,
    pub metric: stab_core::data::MetricKind,
    pub value: f64,
    pub count: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Bayesian-averaged evaluation of a checkpoint on one split. Regression
/// metrics are reported in original label units.
pub fn cmd_eval(
    checkpoint_path: &Path,
    data_path: Option<&Path>,
    split: SplitChoice,
    samples_override: Option<usize>,
    seed_override: Option<u64>,
) -> Result<EvalOutcome> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let model = checkpoint::restore_model(&ckpt)?;
    let dataset = eval_dataset(&ckpt, data_path)?;
    let rows = split.rows(&dataset);
    if rows.is_empty() {
        return Err(StabError::Contract(format!("split {} holds no rows", split.name())));
    }
    let samples = samples_override.unwrap_or(model.config.n_infer);
    let seed = seed_override.unwrap_or(ckpt.meta.seed);
    let report = evaluate_rows(&model, &ckpt.meta.preprocessor, &dataset, &rows, samples, seed)?;
    Ok(EvalOutcome {
        split: split.name(),
        metric: report.metric,
        value: report.value,
        count: report.count,
        samples,
        seed,
    })
}

fn eval_dataset(ckpt: &Checkpoint, data_path: Option<&Path>) -> Result<Dataset> {
    match data_path {
        Some(path) => load_csv(path, &ckpt.meta.schema, ckpt.meta.experiment.data.split_seed),
        None => {
            let (ds, _) = load_experiment_data(&ckpt.meta.experiment)?;
            Ok(ds)
        }
    }
}

/// Evaluate specific dataset rows in original label units.
pub fn evaluate_rows(
    model: &StabModel,
    prep: &Preprocessor,
    dataset: &Dataset,
    rows: &[usize],
    samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    let prepared = prep.prepare(dataset, rows)?;
    let pred = model.predict_bayesian(&prepared.batch_all(), samples, seed)?;
    let data = match (&pred, &dataset.targets) {
        (Predictions::Classification { .. }, TargetColumn::Classes(labels)) => {
            let actual = rows
                .iter()
                .map(|&r| prep.class_index(&labels[r]))
                .collect::<Result<Vec<_>>>()?;
            EvalData::Classes { predicted: pred.labels(), actual }
        }
        (Predictions::Regression(values), TargetColumn::Values(actual)) => EvalData::Values {
            predicted: values.iter().map(|&z| prep.invert_label(z)).collect(),
            actual: rows.iter().map(|&r| actual[r]).collect(),
        },
        _ => return Err(StabError::Contract("prediction kind does not match targets".into())),
    };
    evaluate(&data)
}

/// Write Bayesian-averaged predictions for a target-less CSV, one value per
/// input row under a "prediction" header.
pub fn cmd_predict(
    checkpoint_path: &Path,
    input: &Path,
    output: &Path,
    samples_override: Option<usize>,
    seed_override: Option<u64>,
) -> Result<usize> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let model = checkpoint::restore_model(&ckpt)?;
    let prep = &ckpt.meta.preprocessor;
    let features = load_csv_features(input, &ckpt.meta.schema)?;
    let batch = prep.prepare_features(&features);
    let samples = samples_override.unwrap_or(model.config.n_infer);
    let seed = seed_override.unwrap_or(ckpt.meta.seed);
    let pred = model.predict_bayesian(&batch, samples, seed)?;

    let mut writer = csv::Writer::from_path(output)
        .map_err(|e| StabError::Io(std::io::Error::other(e)))?;
    writer
        .write_record(["prediction"])
        .map_err(|e| StabError::Io(std::io::Error::other(e)))?;
    match &pred {
        Predictions::Classification { .. } => {
            for label in pred.labels() {
                writer
                    .write_record([prep.class_label(label)])
                    .map_err(|e| StabError::Io(std::io::Error::other(e)))?;
            }
        }
        Predictions::Regression(values) => {
            for z in values {
                writer
                    .write_record([prep.invert_label(*z).to_string()])
                    .map_err(|e| StabError::Io(std::io::Error::other(e)))?;
            }
        }
    }
    writer.flush()?;
    Ok(batch.rows)
}

#[derive(Debug, Serialize)]
pub struct AblateRow {
    pub variant: &'static str,
    pub metric: Option<stab_core::data::MetricKind>,
    pub value: Option<f64>,
    pub parameters: usize,
    pub parallel_parameters: usize,
    pub hybrid_overhead: Option<f64>,
    pub error: Option<String>,
}

/// Train all four variants under a shared seed and budget, then evaluate
/// each on the test split. A failing variant is reported in its row while
/// the others still run.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Vec<AblateRow>> {
    let (dataset, schema) = load_experiment_data(cfg)?;
    let prep = Preprocessor::fit(
        &dataset,
        PreprocessOptions { no_scaling: cfg.data.no_scaling, label_scale: cfg.data.label_scale },
    )?;
    let sets = prep.prepare_splits(&dataset)?;
    let task = task_of(&schema, &prep);
    let profile =
        DataProfile { numeric_count: schema.numeric.len(), categorical_cards: prep.cardinalities() };
    let test_rows = dataset.split_rows(Split::Test);

    let mut rows = Vec::with_capacity(ALL_VARIANTS.len());
    for variant in ALL_VARIANTS {
        rows.push(run_variant(cfg, variant, &dataset, &prep, &sets, task, &profile, &test_rows));
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_variant(
    cfg: &ExperimentConfig,
    variant: Variant,
    dataset: &Dataset,
    prep: &Preprocessor,
    sets: &stab_core::data::SplitSets,
    task: TaskKind,
    profile: &DataProfile,
    test_rows: &[usize],
) -> AblateRow {
    let mut sub = cfg.clone();
    sub.variant = variant;
    let model_cfg = sub.model.wire(task, variant);
    let attempt = || -> Result<(StabModel, f64)> {
        let mut model = StabModel::new(model_cfg.clone(), profile.clone(), sub.train.seed)?;
        train(&mut model, sets, &sub.effective_train())?;
        let report = evaluate_rows(
            &model,
            prep,
            dataset,
            test_rows,
            model.config.n_infer,
            sub.train.seed,
        )?;
        Ok((model, report.value))
    };
    match attempt() {
        Ok((model, value)) => {
            let counts = model.count_parameters();
            AblateRow {
                variant: variant.name(),
                metric: Some(if task.is_classification() {
                    stab_core::data::MetricKind::Accuracy
                } else {
                    stab_core::data::MetricKind::Mse
                }),
                value: Some(value),
                parameters: counts.total(),
                parallel_parameters: counts.parallel,
                hybrid_overhead: (counts.parallel > 0).then(|| counts.hybrid_overhead()),
                error: None,
            }
        }
        Err(e) => {
            // still report the would-be parameter counts when the model builds
            let counts = StabModel::new(model_cfg.clone(), profile.clone(), sub.train.seed)
                .map(|m| m.count_parameters());
            AblateRow {
                variant: variant.name(),
                metric: None,
                value: None,
                parameters: counts.as_ref().map(|c| c.total()).unwrap_or(0),
                parallel_parameters: counts.as_ref().map(|c| c.parallel).unwrap_or(0),
                hybrid_overhead: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Render the ablation table with aligned columns.
pub fn format_ablation_table(rows: &[AblateRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<10} {:>12} {:>12} {:>10} {:>10}\n",
        "variant", "metric", "value", "params", "parallel", "overhead"
    ));
    for r in rows {
        let metric = r.metric.map(|m| format!("{m:?}").to_lowercase()).unwrap_or_else(|| "-".into());
        let value = match (&r.error, r.value) {
            (Some(e), _) => format!("failed: {e}"),
            (None, Some(v)) => format!("{v:.4}"),
            _ => "-".into(),
        };
        let overhead = r
            .hybrid_overhead
            .map(|o| format!("{:.1}%", o * 100.0))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<12} {:<10} {:>12} {:>12} {:>10} {:>10}\n",
            r.variant, metric, value, r.parameters, r.parallel_parameters, overhead
        ));
    }
    out
}

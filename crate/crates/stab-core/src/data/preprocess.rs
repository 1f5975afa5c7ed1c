//! Normalization, vocabularies and label scaling, fitted exclusively on the
//! training split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};
use crate::model::Batch;

use super::schema::SchemaTask;
use super::{Dataset, Split, TargetColumn};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericStat {
    pub mean: f64,
    pub std: f64,
    /// Train column was constant: the transform maps every value to 0.
    pub constant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetTransform {
    Classification { classes: Vec<String> },
    Regression { mean: f64, std: f64, scale: f64 },
}

/// Options that alter the fitting protocol per dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Keep the original numeric scaling (no z-scoring).
    pub no_scaling: bool,
    /// Fixed factor applied to regression labels before standardization.
    pub label_scale: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { no_scaling: false, label_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessor {
    pub numeric_stats: Vec<NumericStat>,
    /// Per-categorical-feature vocabulary; unseen values map to the index
    /// one past the largest.
    pub vocabs: Vec<BTreeMap<String, usize>>,
    pub target: TargetTransform,
    pub options: PreprocessOptions,
}

const STD_FLOOR: f64 = 1e-8;

impl Preprocessor {
    /// Fit statistics, vocabularies and the label transform on the
    /// training split of `dataset`.
    pub fn fit(dataset: &Dataset, options: PreprocessOptions) -> Result<Self> {
        let train: Vec<usize> = (0..dataset.rows())
            .filter(|&r| dataset.split[r] == Split::Train)
            .collect();
        if train.is_empty() {
            return Err(StabError::Contract("preprocessor fit needs a non-empty train split".into()));
        }

        let mut numeric_stats = Vec::with_capacity(dataset.numeric.len());
        for col in &dataset.numeric {
            let n = train.len() as f64;
            let mean = train.iter().map(|&r| col[r]).sum::<f64>() / n;
            let var = train.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            numeric_stats.push(NumericStat {
                mean,
                std: std.max(STD_FLOOR),
                constant: std < 1e-12,
            });
        }

        let mut vocabs = Vec::with_capacity(dataset.categorical.len());
        for col in &dataset.categorical {
            let mut values: Vec<&String> = train.iter().map(|&r| &col[r]).collect();
            values.sort();
            values.dedup();
            let vocab: BTreeMap<String, usize> =
                values.into_iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
            vocabs.push(vocab);
        }

        let target = match (&dataset.targets, dataset.schema.task) {
            (TargetColumn::Classes(labels), SchemaTask::Classification) => {
                let mut classes: Vec<String> = train.iter().map(|&r| labels[r].clone()).collect();
                classes.sort();
                classes.dedup();
                if classes.len() < 2 {
                    return Err(StabError::Contract(
                        "training split holds fewer than two classes".into(),
                    ));
                }
                TargetTransform::Classification { classes }
            }
            (TargetColumn::Values(values), SchemaTask::Regression) => {
                let scale = options.label_scale;
                let n = train.len() as f64;
                let mean = train.iter().map(|&r| values[r] * scale).sum::<f64>() / n;
                let var = train.iter().map(|&r| (values[r] * scale - mean).powi(2)).sum::<f64>() / n;
                TargetTransform::Regression { mean, std: var.sqrt().max(STD_FLOOR), scale }
            }
            _ => {
                return Err(StabError::Schema(
                    "target column type does not match the declared task".into(),
                ))
            }
        };

        Ok(Preprocessor { numeric_stats, vocabs, target, options })
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.target {
            TargetTransform::Classification { classes } => Some(classes.len()),
            TargetTransform::Regression { .. } => None,
        }
    }

    /// Cardinalities of the categorical vocabularies (unseen row excluded).
    pub fn cardinalities(&self) -> Vec<usize> {
        self.vocabs.iter().map(|v| v.len()).collect()
    }

    fn transform_numeric(&self, feature: usize, value: f64) -> f64 {
        let stat = &self.numeric_stats[feature];
        if stat.constant {
            return 0.0;
        }
        if self.options.no_scaling {
            return value;
        }
        (value - stat.mean) / stat.std
    }

    fn transform_categorical(&self, feature: usize, value: &str) -> usize {
        let vocab = &self.vocabs[feature];
        vocab.get(value).copied().unwrap_or(vocab.len())
    }

    /// Standardize a regression label into model space.
    pub fn transform_label(&self, y: f64) -> f64 {
        match &self.target {
            TargetTransform::Regression { mean, std, scale } => (y * scale - mean) / std,
            TargetTransform::Classification { .. } => y,
        }
    }

    /// Invert [`Self::transform_label`], back to original label units.
    pub fn invert_label(&self, z: f64) -> f64 {
        match &self.target {
            TargetTransform::Regression { mean, std, scale } => (z * std + mean) / scale,
            TargetTransform::Classification { .. } => z,
        }
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        match &self.target {
            TargetTransform::Classification { classes } => classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| StabError::Contract(format!("class label {label} not seen in training"))),
            TargetTransform::Regression { .. } => {
                Err(StabError::Contract("class lookup on a regression target".into()))
            }
        }
    }

    pub fn class_label(&self, index: usize) -> &str {
        match &self.target {
            TargetTransform::Classification { classes } => &classes[index],
            TargetTransform::Regression { .. } => "",
        }
    }

    /// Produce model-ready rows for the given dataset rows.
    pub fn prepare(&self, dataset: &Dataset, rows: &[usize]) -> Result<Prepared> {
        let numeric_cols = dataset
            .numeric
            .iter()
            .enumerate()
            .map(|(f, col)| rows.iter().map(|&r| self.transform_numeric(f, col[r])).collect())
            .collect();
        let cat_cols = dataset
            .categorical
            .iter()
            .enumerate()
            .map(|(f, col)| rows.iter().map(|&r| self.transform_categorical(f, &col[r])).collect())
            .collect();
        let targets = match &dataset.targets {
            TargetColumn::Classes(labels) => PreparedTargets::Classes(
                rows.iter().map(|&r| self.class_index(&labels[r])).collect::<Result<_>>()?,
            ),
            TargetColumn::Values(values) => PreparedTargets::Values(
                rows.iter().map(|&r| self.transform_label(values[r])).collect(),
            ),
        };
        Ok(Prepared { rows: rows.len(), numeric_cols, cat_cols, targets })
    }

    /// Model-ready batch from target-less feature rows.
    pub fn prepare_features(&self, features: &super::FeatureRows) -> Batch {
        let numeric = features
            .numeric
            .iter()
            .enumerate()
            .map(|(f, col)| col.iter().map(|&v| self.transform_numeric(f, v)).collect())
            .collect();
        let cats = features
            .categorical
            .iter()
            .enumerate()
            .map(|(f, col)| col.iter().map(|v| self.transform_categorical(f, v)).collect())
            .collect();
        Batch::new(features.rows, numeric, cats)
    }

    /// Prepare all three splits.
    pub fn prepare_splits(&self, dataset: &Dataset) -> Result<SplitSets> {
        let rows_of = |s: Split| -> Vec<usize> {
            (0..dataset.rows()).filter(|&r| dataset.split[r] == s).collect()
        };
        Ok(SplitSets {
            train: self.prepare(dataset, &rows_of(Split::Train))?,
            val: self.prepare(dataset, &rows_of(Split::Val))?,
            test: self.prepare(dataset, &rows_of(Split::Test))?,
        })
    }
}

/// Targets in model space: class indices, or standardized values.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedTargets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl PreparedTargets {
    pub fn len(&self) -> usize {
        match self {
            PreparedTargets::Classes(v) => v.len(),
            PreparedTargets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> PreparedTargets {
        match self {
            PreparedTargets::Classes(v) => {
                PreparedTargets::Classes(indices.iter().map(|&i| v[i]).collect())
            }
            PreparedTargets::Values(v) => {
                PreparedTargets::Values(indices.iter().map(|&i| v[i]).collect())
            }
        }
    }
}

/// A model-ready set of rows with aligned targets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub rows: usize,
    pub numeric_cols: Vec<Vec<f64>>,
    pub cat_cols: Vec<Vec<usize>>,
    pub targets: PreparedTargets,
}

impl Prepared {
    pub fn batch_all(&self) -> Batch {
        Batch::new(self.rows, self.numeric_cols.clone(), self.cat_cols.clone())
    }

    pub fn batch_of(&self, indices: &[usize]) -> (Batch, PreparedTargets) {
        let numeric = self
            .numeric_cols
            .iter()
            .map(|c| indices.iter().map(|&i| c[i]).collect())
            .collect();
        let cats = self
            .cat_cols
            .iter()
            .map(|c| indices.iter().map(|&i| c[i]).collect())
            .collect();
        (Batch::new(indices.len(), numeric, cats), self.targets.select(indices))
    }
}

#[derive(Debug, Clone)]
pub struct SplitSets {
    pub train: Prepared,
    pub val: Prepared,
    pub test: Prepared,
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use crate::data::{make_synthetic, SyntheticKind};

    use super::*;

    fn tiny_dataset() -> Dataset {
        let schema = super::super::DatasetSchema {
            numeric: vec!["a".into()],
            categorical: vec!["c".into()],
            target: "y".into(),
            task: SchemaTask::Classification,
            split_column: None,
        };
        Dataset {
            schema,
            numeric: vec![vec![0.0, 2.0, 5.0]],
            categorical: vec![vec!["x".into(), "y".into(), "z".into()]],
            targets: TargetColumn::Classes(vec!["0".into(), "1".into(), "1".into()]),
            split: vec![Split::Train, Split::Train, Split::Test],
        }
    }

    #[test]
    fn train_statistics_give_hand_computed_z_scores() {
        let ds = tiny_dataset();
        let prep = Preprocessor::fit(&ds, PreprocessOptions::default()).unwrap();
        // train values (0, 2): mean 1, std 1
        assert_abs_diff_eq!(prep.numeric_stats[0].mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prep.numeric_stats[0].std, 1.0, epsilon = 1e-12);
        let p = prep.prepare(&ds, &[0, 1]).unwrap();
        assert_eq!(p.numeric_cols[0], vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_columns_map_everything_to_zero() {
        let mut ds = tiny_dataset();
        ds.numeric[0] = vec![4.0, 4.0, 9.0];
        let prep = Preprocessor::fit(&ds, PreprocessOptions::default()).unwrap();
        assert!(prep.numeric_stats[0].constant);
        let p = prep.prepare(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(p.numeric_cols[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn unseen_categories_map_to_the_extra_index() {
        let ds = tiny_dataset();
        let prep = Preprocessor::fit(&ds, PreprocessOptions::default()).unwrap();
        // train vocab is {x, y}: z is unseen
        assert_eq!(prep.cardinalities(), vec![2]);
        let p = prep.prepare(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(p.cat_cols[0], vec![0, 1, 2]);
    }

    #[test]
    fn label_scale_round_trips() {
        let (ds, _) = make_synthetic(SyntheticKind::NoisyRegression, 50, 3).unwrap();
        let prep = Preprocessor::fit(
            &ds,
            PreprocessOptions { no_scaling: false, label_scale: 1e-4 },
        )
        .unwrap();
        for y in [-3.0, 0.0, 0.5, 1234.5] {
            let z = prep.transform_label(y);
            let back = prep.invert_label(z);
            assert!((back - y).abs() <= 1e-9 * y.abs().max(1.0), "{y} -> {back}");
        }
    }

    #[test]
    fn train_split_is_standardized_after_apply() {
        let (ds, _) = make_synthetic(SyntheticKind::NoisyRegression, 400, 9).unwrap();
        let prep = Preprocessor::fit(&ds, PreprocessOptions::default()).unwrap();
        let sets = prep.prepare_splits(&ds).unwrap();
        for col in &sets.train.numeric_cols {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
        }
    }

    #[test]
    fn no_scaling_keeps_original_values() {
        let ds = tiny_dataset();
        let prep =
            Preprocessor::fit(&ds, PreprocessOptions { no_scaling: true, label_scale: 1.0 }).unwrap();
        let p = prep.prepare(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(p.numeric_cols[0], vec![0.0, 2.0, 5.0]);
    }
}

//! Dataset ingestion, splits, preprocessing, synthetic tasks and metrics.

mod metrics;
mod preprocess;
mod schema;
mod synthetic;

pub use metrics::{evaluate, EvalData, EvalReport, MetricKind};
pub use preprocess::{
    NumericStat, PreparedTargets, Prepared, PreprocessOptions, Preprocessor, SplitSets,
    TargetTransform,
};
pub use schema::{DatasetSchema, SchemaTask};
pub use synthetic::{make_synthetic, SyntheticKind, REGRESSION_W};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Result, StabError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Raw target column: class labels stay strings until the vocabulary is
/// fitted; regression labels are parsed immediately.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetColumn {
    Classes(Vec<String>),
    Values(Vec<f64>),
}

/// Typed columns plus split assignments, immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: DatasetSchema,
    /// Column-major numeric features, schema order.
    pub numeric: Vec<Vec<f64>>,
    /// Column-major categorical features (raw strings), schema order.
    pub categorical: Vec<Vec<String>>,
    pub targets: TargetColumn,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.split.len()
    }

    pub fn split_rows(&self, which: Split) -> Vec<usize> {
        (0..self.rows()).filter(|&r| self.split[r] == which).collect()
    }
}

/// Seeded 70/15/15 split assignment.
pub(crate) fn seeded_split(rows: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train_end = (rows as f64 * 0.70).round() as usize;
    let val_end = train_end + (rows as f64 * 0.15).round() as usize;
    let mut split = vec![Split::Train; rows];
    for (rank, &row) in order.iter().enumerate() {
        split[row] = if rank < train_end {
            Split::Train
        } else if rank < val_end.min(rows) {
            Split::Val
        } else {
            Split::Test
        };
    }
    split
}

/// Load a CSV file against a schema. Header must contain every schema
/// column; numerics must parse as decimals (offending data-row numbers are
/// reported); a missing split column triggers a seeded 70/15/15 split.
pub fn load_csv(path: &Path, schema: &DatasetSchema, split_seed: u64) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| StabError::Ingestion(format!("{}: {e}", path.display())))?;

    let headers: Vec<String> =
        reader.headers().map_err(|e| StabError::Ingestion(e.to_string()))?.iter().map(String::from).collect();
    {
        let mut sorted = headers.clone();
        sorted.sort();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(StabError::Schema(format!("duplicate header column {}", pair[0])));
            }
        }
    }
    let col = |name: &String| headers.iter().position(|h| h == name);
    let mut missing: Vec<String> = Vec::new();
    let numeric_idx: Vec<Option<usize>> = schema.numeric.iter().map(col).collect();
    let cat_idx: Vec<Option<usize>> = schema.categorical.iter().map(col).collect();
    let target_idx = col(&schema.target);
    for (name, idx) in schema
        .numeric
        .iter()
        .zip(&numeric_idx)
        .chain(schema.categorical.iter().zip(&cat_idx))
        .chain(std::iter::once((&schema.target, &target_idx)))
    {
        if idx.is_none() {
            missing.push(name.clone());
        }
    }
    let split_idx = match &schema.split_column {
        Some(name) => match col(name) {
            Some(i) => Some(i),
            None => {
                missing.push(name.clone());
                None
            }
        },
        None => None,
    };
    if !missing.is_empty() {
        return Err(StabError::Schema(format!(
            "missing columns: {} (file has: {})",
            missing.join(", "),
            headers.join(", ")
        )));
    }
    let numeric_idx: Vec<usize> = numeric_idx.into_iter().flatten().collect();
    let cat_idx: Vec<usize> = cat_idx.into_iter().flatten().collect();
    let target_idx = target_idx.unwrap();

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); numeric_idx.len()];
    let mut categorical: Vec<Vec<String>> = vec![Vec::new(); cat_idx.len()];
    let mut class_labels: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut splits: Vec<Split> = Vec::new();
    let mut bad_rows: Vec<usize> = Vec::new();

    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| StabError::Ingestion(format!("row {}: {e}", row_no + 1)))?;
        let mut row_ok = true;
        let mut parsed = Vec::with_capacity(numeric_idx.len());
        for &i in &numeric_idx {
            match record.get(i).map(str::trim).filter(|v| !v.is_empty()).and_then(|v| v.parse::<f64>().ok()) {
                Some(v) => parsed.push(v),
                None => {
                    row_ok = false;
                    break;
                }
            }
        }
        let target_value = record.get(target_idx).unwrap_or("").trim().to_string();
        let parsed_target = match schema.task {
            SchemaTask::Regression => match target_value.parse::<f64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    row_ok = false;
                    None
                }
            },
            SchemaTask::Classification => None,
        };
        if !row_ok {
            bad_rows.push(row_no + 1);
            continue;
        }
        for (c, v) in numeric.iter_mut().zip(parsed) {
            c.push(v);
        }
        for (c, &i) in categorical.iter_mut().zip(&cat_idx) {
            c.push(record.get(i).unwrap_or("").trim().to_string());
        }
        match schema.task {
            SchemaTask::Classification => class_labels.push(target_value),
            SchemaTask::Regression => values.push(parsed_target.unwrap()),
        }
        if let Some(i) = split_idx {
            splits.push(match record.get(i).map(str::trim) {
                Some("train") => Split::Train,
                Some("val") => Split::Val,
                Some("test") => Split::Test,
                other => {
                    return Err(StabError::Ingestion(format!(
                        "row {}: split value {:?} is not one of train/val/test",
                        row_no + 1,
                        other.unwrap_or("")
                    )))
                }
            });
        }
    }

    if !bad_rows.is_empty() {
        return Err(StabError::Ingestion(format!(
            "rows with unparseable numeric values (not imputed, load rejected): {}",
            bad_rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    let rows = match schema.task {
        SchemaTask::Classification => class_labels.len(),
        SchemaTask::Regression => values.len(),
    };
    if rows == 0 {
        return Err(StabError::Ingestion(format!("{}: no data rows", path.display())));
    }
    let split = if split_idx.is_some() { splits } else { seeded_split(rows, split_seed) };

    Ok(Dataset {
        schema: schema.clone(),
        numeric,
        categorical,
        targets: match schema.task {
            SchemaTask::Classification => TargetColumn::Classes(class_labels),
            SchemaTask::Regression => TargetColumn::Values(values),
        },
        split,
    })
}

/// Feature columns of a CSV that carries no target (prediction input).
#[derive(Debug, Clone)]
pub struct FeatureRows {
    pub numeric: Vec<Vec<f64>>,
    pub categorical: Vec<Vec<String>>,
    pub rows: usize,
}

/// Load feature columns only; the schema's target (and split column) need
/// not be present.
pub fn load_csv_features(path: &Path, schema: &DatasetSchema) -> Result<FeatureRows> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| StabError::Ingestion(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| StabError::Ingestion(e.to_string()))?.iter().map(String::from).collect();
    let col = |name: &String| headers.iter().position(|h| h == name);
    let mut missing = Vec::new();
    let numeric_idx: Vec<Option<usize>> = schema.numeric.iter().map(col).collect();
    let cat_idx: Vec<Option<usize>> = schema.categorical.iter().map(col).collect();
    for (name, idx) in schema
        .numeric
        .iter()
        .zip(&numeric_idx)
        .chain(schema.categorical.iter().zip(&cat_idx))
    {
        if idx.is_none() {
            missing.push(name.clone());
        }
    }
    if !missing.is_empty() {
        return Err(StabError::Schema(format!(
            "missing columns: {} (file has: {})",
            missing.join(", "),
            headers.join(", ")
        )));
    }
    let numeric_idx: Vec<usize> = numeric_idx.into_iter().flatten().collect();
    let cat_idx: Vec<usize> = cat_idx.into_iter().flatten().collect();

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); numeric_idx.len()];
    let mut categorical: Vec<Vec<String>> = vec![Vec::new(); cat_idx.len()];
    let mut bad_rows = Vec::new();
    let mut rows = 0usize;
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| StabError::Ingestion(format!("row {}: {e}", row_no + 1)))?;
        let mut parsed = Vec::with_capacity(numeric_idx.len());
        let mut ok = true;
        for &i in &numeric_idx {
            match record.get(i).map(str::trim).filter(|v| !v.is_empty()).and_then(|v| v.parse::<f64>().ok()) {
                Some(v) => parsed.push(v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            bad_rows.push(row_no + 1);
            continue;
        }
        for (c, v) in numeric.iter_mut().zip(parsed) {
            c.push(v);
        }
        for (c, &i) in categorical.iter_mut().zip(&cat_idx) {
            c.push(record.get(i).unwrap_or("").trim().to_string());
        }
        rows += 1;
    }
    if !bad_rows.is_empty() {
        return Err(StabError::Ingestion(format!(
            "rows with unparseable numeric values (not imputed, load rejected): {}",
            bad_rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    if rows == 0 {
        return Err(StabError::Ingestion(format!("{}: no data rows", path.display())));
    }
    Ok(FeatureRows { numeric, categorical, rows })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write_csv(content: &str) -> tempfile_path::TempCsv {
        tempfile_path::TempCsv::new(content)
    }

    // minimal scoped temp-file helper so tests need no extra dependency
    mod tempfile_path {
        use std::path::PathBuf;

        pub struct TempCsv {
            pub path: PathBuf,
        }

        impl TempCsv {
            pub fn new(content: &str) -> Self {
                let mut path = std::env::temp_dir();
                let unique = format!(
                    "stab-test-{}-{}.csv",
                    std::process::id(),
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .unwrap()
                        .as_nanos()
                );
                path.push(unique);
                std::fs::write(&path, content).unwrap();
                TempCsv { path }
            }
        }

        impl Drop for TempCsv {
            fn drop(&mut self) {
                let _ = std::fs::remove_file(&self.path);
            }
        }
    }

    fn schema() -> DatasetSchema {
        DatasetSchema {
            numeric: vec!["a".into()],
            categorical: vec!["c".into()],
            target: "y".into(),
            task: SchemaTask::Classification,
            split_column: None,
        }
    }

    #[test]
    fn loads_typed_columns() {
        let f = write_csv("a,c,y\n1.5,red,0\n1e3,blue,1\n-2,red,1\n");
        let ds = load_csv(&f.path, &schema(), 0).unwrap();
        assert_eq!(ds.rows(), 3);
        assert_eq!(ds.numeric[0], vec![1.5, 1000.0, -2.0]);
        assert_eq!(ds.categorical[0], vec!["red", "blue", "red"]);
    }

    #[test]
    fn missing_column_is_a_schema_error_naming_it() {
        let f = write_csv("a,y\n1,0\n");
        let err = load_csv(&f.path, &schema(), 0).unwrap_err();
        assert!(err.to_string().contains("c"), "{err}");
    }

    #[test]
    fn duplicate_header_is_a_schema_error() {
        let f = write_csv("a,a,c,y\n1,2,red,0\n");
        assert!(matches!(load_csv(&f.path, &schema(), 0), Err(StabError::Schema(_))));
    }

    #[test]
    fn empty_file_is_an_ingestion_error() {
        let f = write_csv("a,c,y\n");
        assert!(matches!(load_csv(&f.path, &schema(), 0), Err(StabError::Ingestion(_))));
    }

    #[test]
    fn unparseable_numerics_report_row_numbers() {
        let f = write_csv("a,c,y\n1,red,0\nnope,blue,1\n3,red,0\n,blue,1\n");
        let err = load_csv(&f.path, &schema(), 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn split_column_values_are_honoured() {
        let mut s = schema();
        s.split_column = Some("split".into());
        let f = write_csv("a,c,y,split\n1,r,0,train\n2,b,1,val\n3,r,0,test\n");
        let ds = load_csv(&f.path, &s, 0).unwrap();
        assert_eq!(ds.split, vec![Split::Train, Split::Val, Split::Test]);
        let f = write_csv("a,c,y,split\n1,r,0,TRAIN\n");
        assert!(load_csv(&f.path, &s, 0).is_err());
    }

    #[test]
    fn generated_split_is_deterministic_and_exhaustive() {
        let mut content = String::from("a,c,y\n");
        for i in 0..100 {
            content.push_str(&format!("{i},v,{}\n", i % 2));
        }
        let f = write_csv(&content);
        let a = load_csv(&f.path, &schema(), 42).unwrap();
        let b = load_csv(&f.path, &schema(), 42).unwrap();
        assert_eq!(a.split, b.split);
        let c = load_csv(&f.path, &schema(), 43).unwrap();
        assert_ne!(a.split, c.split);
        assert_eq!(a.split_rows(Split::Train).len(), 70);
        assert_eq!(a.split_rows(Split::Val).len(), 15);
        assert_eq!(a.split_rows(Split::Test).len(), 15);
    }

    #[test]
    fn vocab_indices_are_dense() {
        let f = write_csv("a,c,y\n1,r,0\n2,g,1\n3,b,0\n4,r,1\n5,g,0\n6,b,1\n7,r,0\n8,g,1\n9,b,0\n10,r,1\n");
        let ds = load_csv(&f.path, &schema(), 1).unwrap();
        let prep = Preprocessor::fit(&ds, PreprocessOptions::default()).unwrap();
        let vocab = &prep.vocabs[0];
        let mut indices: Vec<usize> = vocab.values().copied().collect();
        indices.sort();
        assert_eq!(indices, (0..vocab.len()).collect::<Vec<_>>());
    }

    #[test]
    fn writer_helper_writes_valid_csv() {
        // guards the helper itself; quoted fields per RFC 4180
        let f = write_csv("a,c,y\n1,\"say, hello\",0\n2,plain,1\n");
        let ds = load_csv(&f.path, &schema(), 0).unwrap();
        assert_eq!(ds.categorical[0][0], "say, hello");
        let _ = Write::flush(&mut std::io::sink());
    }
}

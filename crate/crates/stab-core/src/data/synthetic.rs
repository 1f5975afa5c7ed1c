//! Seeded synthetic tasks for tests and desk-scale training runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, StabError};

use super::schema::{DatasetSchema, SchemaTask};
use super::{seeded_split, Dataset, TargetColumn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Two numerics; label is the side of a fixed hyperplane, points within
    /// margin 0.1 of it are resampled. Bayes accuracy 1.
    LinearSeparable,
    /// Two numerics; label is the XOR of the sign bits. No linear rule does
    /// better than chance.
    XorNumeric,
    /// Four numerics; y = w.x + 0.01 * standard normal noise.
    NoisyRegression,
}

impl std::str::FromStr for SyntheticKind {
    type Err = StabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_separable" => Ok(SyntheticKind::LinearSeparable),
            "xor_numeric" => Ok(SyntheticKind::XorNumeric),
            "noisy_regression" => Ok(SyntheticKind::NoisyRegression),
            other => Err(StabError::Config(format!(
                "unknown synthetic kind {other}; expected one of linear_separable, xor_numeric, noisy_regression"
            ))),
        }
    }
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::LinearSeparable => "linear_separable",
            SyntheticKind::XorNumeric => "xor_numeric",
            SyntheticKind::NoisyRegression => "noisy_regression",
        }
    }
}

const SEPARABLE_W: [f64; 2] = [0.8, -0.6];
const SEPARABLE_MARGIN: f64 = 0.1;
const XOR_BAND: f64 = 0.05;
pub const REGRESSION_W: [f64; 4] = [0.5, -1.0, 0.25, 0.75];
const REGRESSION_NOISE: f64 = 0.01;

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller over clamped uniforms
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic generator; the split assignment is seeded from the same
/// seed.
pub fn make_synthetic(kind: SyntheticKind, n_rows: usize, seed: u64) -> Result<(Dataset, DatasetSchema)> {
    if n_rows < 10 {
        return Err(StabError::Contract(format!("synthetic datasets need >= 10 rows, got {n_rows}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (schema, numeric, targets) = match kind {
        SyntheticKind::LinearSeparable => {
            let mut cols: Vec<Vec<f64>> = (0..2).map(|_| Vec::with_capacity(n_rows)).collect();
            let mut labels = Vec::with_capacity(n_rows);
            for _ in 0..n_rows {
                let (x0, x1) = loop {
                    let x0 = rng.gen_range(-1.0..1.0);
                    let x1 = rng.gen_range(-1.0..1.0);
                    if (SEPARABLE_W[0] * x0 + SEPARABLE_W[1] * x1).abs() >= SEPARABLE_MARGIN {
                        break (x0, x1);
                    }
                };
                cols[0].push(x0);
                cols[1].push(x1);
                labels.push(if SEPARABLE_W[0] * x0 + SEPARABLE_W[1] * x1 > 0.0 { "1" } else { "0" }.to_string());
            }
            (
                classification_schema(2),
                cols,
                TargetColumn::Classes(labels),
            )
        }
        SyntheticKind::XorNumeric => {
            let mut cols: Vec<Vec<f64>> = (0..2).map(|_| Vec::with_capacity(n_rows)).collect();
            let mut labels = Vec::with_capacity(n_rows);
            for _ in 0..n_rows {
                let draw = |rng: &mut ChaCha8Rng| loop {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if v.abs() >= XOR_BAND {
                        break v;
                    }
                };
                let x0 = draw(&mut rng);
                let x1 = draw(&mut rng);
                cols[0].push(x0);
                cols[1].push(x1);
                labels.push(if (x0 > 0.0) ^ (x1 > 0.0) { "1" } else { "0" }.to_string());
            }
            (
                classification_schema(2),
                cols,
                TargetColumn::Classes(labels),
            )
        }
        SyntheticKind::NoisyRegression => {
            let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n_rows)).collect();
            let mut ys = Vec::with_capacity(n_rows);
            for _ in 0..n_rows {
                let mut y = REGRESSION_NOISE * standard_normal(&mut rng);
                for (col, w) in cols.iter_mut().zip(REGRESSION_W) {
                    let x = rng.gen_range(-1.0..1.0);
                    y += w * x;
                    col.push(x);
                }
                ys.push(y);
            }
            (regression_schema(4), cols, TargetColumn::Values(ys))
        }
    };
    let split = seeded_split(n_rows, seed);
    Ok((
        Dataset { schema: schema.clone(), numeric, categorical: Vec::new(), targets, split },
        schema,
    ))
}

fn classification_schema(features: usize) -> DatasetSchema {
    DatasetSchema {
        numeric: (1..=features).map(|i| format!("x{i}")).collect(),
        categorical: Vec::new(),
        target: "y".into(),
        task: SchemaTask::Classification,
        split_column: None,
    }
}

fn regression_schema(features: usize) -> DatasetSchema {
    DatasetSchema {
        numeric: (1..=features).map(|i| format!("x{i}")).collect(),
        categorical: Vec::new(),
        target: "y".into(),
        task: SchemaTask::Regression,
        split_column: None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::Split;
    use super::*;

    #[test]
    fn linearly_separable_by_construction() {
        let (ds, _) = make_synthetic(SyntheticKind::LinearSeparable, 500, 7).unwrap();
        let labels = match &ds.targets {
            TargetColumn::Classes(l) => l,
            _ => unreachable!(),
        };
        for r in 0..500 {
            let margin = SEPARABLE_W[0] * ds.numeric[0][r] + SEPARABLE_W[1] * ds.numeric[1][r];
            assert!(margin.abs() >= SEPARABLE_MARGIN);
            assert_eq!(labels[r] == "1", margin > 0.0);
        }
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let (a, _) = make_synthetic(SyntheticKind::XorNumeric, 100, 3).unwrap();
        let (b, _) = make_synthetic(SyntheticKind::XorNumeric, 100, 3).unwrap();
        assert_eq!(a.numeric, b.numeric);
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let (ds, _) = make_synthetic(SyntheticKind::NoisyRegression, 200, 5).unwrap();
        let train = ds.split.iter().filter(|&&s| s == Split::Train).count();
        let val = ds.split.iter().filter(|&&s| s == Split::Val).count();
        let test = ds.split.iter().filter(|&&s| s == Split::Test).count();
        assert_eq!(train + val + test, 200);
        assert_eq!(train, 140);
        assert_eq!(val, 30);
    }

    #[test]
    fn too_few_rows_is_a_contract_error() {
        assert!(make_synthetic(SyntheticKind::XorNumeric, 5, 0).is_err());
    }
}

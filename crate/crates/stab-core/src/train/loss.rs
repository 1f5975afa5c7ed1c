//! The training objective: task loss plus the scaled KL regularizer.

use crate::error::{Result, StabError};
use crate::tensor::{Graph, TensorId};

/// Ground truth for one batch, in model space.
#[derive(Debug, Clone)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// Build the scalar objective in-graph: mean cross-entropy from logits
/// (classification) or mean squared error (regression), plus
/// `beta * kl_total`. The KL enters with a positive sign because the
/// objective is minimized.
pub fn loss(
    graph: &mut Graph,
    outputs: TensorId,
    targets: &Targets,
    kl_total: Option<TensorId>,
    beta: f64,
) -> Result<TensorId> {
    let task = match targets {
        Targets::Classes(classes) => cross_entropy(graph, outputs, classes)?,
        Targets::Values(values) => mean_squared_error(graph, outputs, values)?,
    };
    match kl_total {
        Some(kl) if beta != 0.0 => {
            let scaled = graph.scalar_mul(kl, beta)?;
            graph.add(task, scaled)
        }
        _ => Ok(task),
    }
}

/// Mean cross-entropy from raw logits with class-index targets.
///
/// Uses the standard detached max shift: per row,
/// loss = log(sum exp(z - max)) - (z_target - max), which is exact because
/// the shift cancels, and keeps every log argument >= 1.
fn cross_entropy(graph: &mut Graph, logits: TensorId, classes: &[usize]) -> Result<TensorId> {
    let shape = graph.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != classes.len() {
        return Err(StabError::Contract(format!(
            "cross entropy: logits {:?} vs {} targets",
            shape,
            classes.len()
        )));
    }
    let (rows, width) = (shape[0], shape[1]);
    if let Some(&bad) = classes.iter().find(|&&c| c >= width) {
        return Err(StabError::Contract(format!(
            "class index {bad} out of range for {width} classes"
        )));
    }
    let data = graph.data(logits);
    let mut maxes = vec![0.0; rows * width];
    let mut onehot = vec![0.0; rows * width];
    for r in 0..rows {
        let row = &data[r * width..(r + 1) * width];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        maxes[r * width..(r + 1) * width].fill(m);
        onehot[r * width + classes[r]] = 1.0;
    }
    let maxes = graph.constant(maxes, &[rows, width])?;
    let onehot = graph.constant(onehot, &[rows, width])?;
    let ones_col = graph.constant(vec![1.0; width], &[width, 1])?;

    let shifted = graph.sub(logits, maxes)?;
    let exp = graph.exp(shifted)?;
    let norm = graph.matmul(exp, ones_col)?;
    let lse = graph.log(norm)?;
    let picked = graph.mul(shifted, onehot)?;
    let picked = graph.matmul(picked, ones_col)?;
    let per_row = graph.sub(lse, picked)?;
    graph.mean(per_row)
}

fn mean_squared_error(graph: &mut Graph, outputs: TensorId, values: &[f64]) -> Result<TensorId> {
    let shape = graph.shape(outputs).to_vec();
    let numel: usize = shape.iter().product();
    if numel != values.len() {
        return Err(StabError::Contract(format!(
            "mse: outputs {:?} vs {} targets",
            shape,
            values.len()
        )));
    }
    let target = graph.constant(values.to_vec(), &shape)?;
    let diff = graph.sub(outputs, target)?;
    let sq = graph.mul(diff, diff)?;
    graph.mean(sq)
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Model;
use crate::train::Dataset;

/// Group-level saliency: mean absolute input gradient of the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Saliency {
    /// One value per atlas edge.
    pub edges: Vec<f64>,
    /// One value per node; the per-sample value sums `|∂y/∂x|` over time.
    pub nodes: Vec<f64>,
}

/// Sum that does not depend on the order of `values`.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub fn saliency_map(model: &Model, data: &Dataset) -> Result<Saliency> {
    if !model.is_finite() {
        return Err(Error::InvalidModel("model has non-finite parameters".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidParameter("saliency needs at least one sample".into()));
    }
    let (n, m, count) = (model.n_nodes, model.n_edges, data.len());
    // Column-major so each simplex's per-sample values are contiguous.
    let mut edge_cols = vec![0.0; m * count];
    let mut node_cols = vec![0.0; n * count];
    for (s, input) in data.samples.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, tape) = model.forward(input, &mut rng, false)?;
        let back = model.backward(&tape, 1.0)?;
        for (e, g) in back.edge_features.iter().enumerate() {
            edge_cols[e * count + s] = g.abs();
        }
        if !back.node_series.is_empty() {
            for (node, row) in back.node_series.chunks(input.time_len).enumerate() {
                node_cols[node * count + s] = row.iter().map(|g| g.abs()).sum();
            }
        }
    }
    let inv = 1.0 / count as f64;
    let edges = edge_cols.chunks_mut(count).map(|c| ordered_sum(c) * inv).collect();
    let nodes = node_cols.chunks_mut(count).map(|c| ordered_sum(c) * inv).collect();
    Ok(Saliency { edges, nodes })
}

use ndarray::Array2;

use super::ModelWeights;

/// Temporal projection matrices of every block with their Toeplitz scores.
#[derive(Debug, Clone)]
pub struct TemporalWeights {
    pub matrices: Vec<Array2<f64>>,
    pub scores: Vec<f64>,
}

pub fn export_temporal_weights(weights: &ModelWeights) -> TemporalWeights {
    let matrices: Vec<_> = weights.blocks.iter().map(|b| b.spatial.weight.clone()).collect();
    let scores = matrices.iter().map(toeplitzness).collect();
    TemporalWeights { matrices, scores }
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

/// `1 - mean(per-diagonal variance) / total variance`. Diagonals are
/// weighted equally; a matrix with zero total variance scores 1.
pub fn toeplitzness(m: &Array2<f64>) -> f64 {
    let total = population_variance(m.iter().copied());
    if total == 0.0 {
        return 1.0;
    }
    let (rows, cols) = m.dim();
    let offsets = -(rows as isize - 1)..=(cols as isize - 1);
    let n_diag = rows + cols - 1;
    let diag_var: f64 = offsets
        .map(|o| {
            let r0 = (-o).max(0) as usize;
            let c0 = o.max(0) as usize;
            let len = (rows - r0).min(cols - c0);
            population_variance((0..len).map(move |i| m[[r0 + i, c0 + i]]))
        })
        .sum();
    1.0 - diag_var / n_diag as f64 / total
}

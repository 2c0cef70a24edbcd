//! Reduction of variable-length timestamp embeddings to a fixed-size scene
//! embedding.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::encoder::TimestampEmbeddings;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("target length must be at least 1")]
    ZeroTarget,
    #[error("input has no time steps")]
    EmptyInput,
    #[error("group mean needs at least {target} time steps, got {got}")]
    TooShort { target: usize, got: usize },
    #[error("unknown scene algorithm {0:?}")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneAlgorithm {
    Iterative,
    Single,
    Mean,
}

impl SceneAlgorithm {
    pub const ALL: [SceneAlgorithm; 3] = [SceneAlgorithm::Mean, SceneAlgorithm::Single, SceneAlgorithm::Iterative];

    pub fn name(self) -> &'static str {
        match self {
            SceneAlgorithm::Iterative => "iterative",
            SceneAlgorithm::Single => "single",
            SceneAlgorithm::Mean => "mean",
        }
    }
}

impl fmt::Display for SceneAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneAlgorithm {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iterative" => Ok(Self::Iterative),
            "single" => Ok(Self::Single),
            "mean" => Ok(Self::Mean),
            other => Err(SceneError::UnknownAlgorithm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    /// Time steps kept before flattening.
    pub target_steps: usize,
    pub algorithm: SceneAlgorithm,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { target_steps: 16, algorithm: SceneAlgorithm::Iterative }
    }
}

/// Flattened, time-major scene vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEmbedding {
    pub values: Array1<f64>,
}

/// Linear resampling along axis 0 with half-pixel centers and edge
/// clamping: output row `j` reads input coordinate `(j + 0.5) * N / M - 0.5`.
pub fn linear_interp_time(x: ArrayView2<f64>, target: usize) -> Result<Array2<f64>, SceneError> {
    let n = x.nrows();
    if target == 0 {
        return Err(SceneError::ZeroTarget);
    }
    if n == 0 {
        return Err(SceneError::EmptyInput);
    }
    if n == target {
        return Ok(x.to_owned());
    }
    let ratio = n as f64 / target as f64;
    let mut out = Array2::zeros((target, x.ncols()));
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let c = ((j as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = c.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let t = c - lo as f64;
        row.assign(&(&x.row(lo) * (1.0 - t) + &x.row(hi) * t));
    }
    Ok(out)
}

/// `ceil(log2(n_t / n_s))`, or 0 when `n_t <= n_s`.
pub fn num_interp_steps(n_t: usize, n_s: usize) -> usize {
    if n_t <= n_s {
        return 0;
    }
    // smallest k with n_s * 2^k >= n_t, in exact integer arithmetic
    let mut k = 0;
    let mut reach = n_s as u128;
    while reach < n_t as u128 {
        reach *= 2;
        k += 1;
    }
    k
}

/// Sizes visited by the iterative schedule, excluding the input size.
pub fn halving_schedule(n_t: usize, n_s: usize) -> Vec<usize> {
    let steps = num_interp_steps(n_t, n_s);
    let mut sizes = Vec::with_capacity(steps);
    let mut cur = n_t;
    for i in 0..steps {
        cur = if i + 1 == steps { n_s } else { n_s.max(cur.div_ceil(2)) };
        sizes.push(cur);
    }
    sizes
}

fn flatten(x: Array2<f64>) -> SceneEmbedding {
    let len = x.len();
    SceneEmbedding { values: x.into_shape_with_order(len).expect("standard layout") }
}

fn check(x: &TimestampEmbeddings, config: &SceneConfig) -> Result<(), SceneError> {
    if config.target_steps == 0 {
        return Err(SceneError::ZeroTarget);
    }
    if x.n_frames() == 0 {
        return Err(SceneError::EmptyInput);
    }
    Ok(())
}

/// Repeated ~2x downsampling until `target_steps`; a shorter input is
/// upsampled in one pass.
pub fn scene_iterative(x: &TimestampEmbeddings, config: &SceneConfig) -> Result<SceneEmbedding, SceneError> {
    check(x, config)?;
    let n_s = config.target_steps;
    if x.n_frames() < n_s {
        return scene_single(x, config);
    }
    let mut cur = x.values.clone();
    for size in halving_schedule(x.n_frames(), n_s) {
        cur = linear_interp_time(cur.view(), size)?;
    }
    Ok(flatten(cur))
}

/// One interpolation pass straight to `target_steps`.
pub fn scene_single(x: &TimestampEmbeddings, config: &SceneConfig) -> Result<SceneEmbedding, SceneError> {
    check(x, config)?;
    Ok(flatten(linear_interp_time(x.values.view(), config.target_steps)?))
}

/// Averages `target_steps` contiguous groups; group `g` covers rows
/// `[floor(g N / S), floor((g + 1) N / S))`.
pub fn scene_mean(x: &TimestampEmbeddings, config: &SceneConfig) -> Result<SceneEmbedding, SceneError> {
    check(x, config)?;
    let (n, n_s) = (x.n_frames(), config.target_steps);
    if n < n_s {
        return Err(SceneError::TooShort { target: n_s, got: n });
    }
    let mut out = Array2::zeros((n_s, x.dim()));
    for (g, mut row) in out.rows_mut().into_iter().enumerate() {
        let (lo, hi) = group_bounds(g, n, n_s);
        row.assign(&x.values.slice(s![lo..hi, ..]).mean_axis(Axis(0)).expect("non-empty group"));
    }
    Ok(flatten(out))
}

pub fn group_bounds(g: usize, n: usize, groups: usize) -> (usize, usize) {
    (g * n / groups, (g + 1) * n / groups)
}

pub fn scene_embedding(x: &TimestampEmbeddings, config: &SceneConfig) -> Result<SceneEmbedding, SceneError> {
    match config.algorithm {
        SceneAlgorithm::Iterative => scene_iterative(x, config),
        SceneAlgorithm::Single => scene_single(x, config),
        SceneAlgorithm::Mean => scene_mean(x, config),
    }
}

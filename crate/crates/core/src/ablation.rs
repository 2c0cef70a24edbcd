//! Scene-algorithm x encoder-depth grid on a labelled clip set, scored with
//! a linear probe.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::dsp::{AudioBuffer, MfccConfig};
use crate::encoder::{encode_audio, encode_audio_depths, EncoderError, ModelWeights};
use crate::probe::{fit_probe, ProbeConfig, ProbeError};
use crate::scene::{scene_embedding, SceneAlgorithm, SceneConfig, SceneError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AblationError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

/// One JSON result line.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ProbeResult {
    pub task: String,
    pub algorithm: String,
    pub depth: Option<usize>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub task: String,
    pub n_clips: usize,
    pub algorithms: Vec<String>,
    pub depths: Vec<usize>,
    pub results: Vec<ProbeResult>,
    /// `table[algorithm][depth] = accuracy`.
    pub table: BTreeMap<String, BTreeMap<String, f64>>,
}

fn stack(rows: Vec<Array1<f64>>) -> Array2<f64> {
    let width = rows.first().map_or(0, |r| r.len());
    let flat: Vec<f64> = rows.into_iter().flat_map(|r| r.to_vec()).collect();
    Array2::from_shape_vec((flat.len() / width.max(1), width), flat).expect("equal widths")
}

/// Scene embeddings (one row per clip) at a given depth.
pub fn scene_matrix(
    clips: &[AudioBuffer],
    weights: &ModelWeights,
    depth: usize,
    scene: &SceneConfig,
    mfcc: &MfccConfig,
) -> Result<Array2<f64>, AblationError> {
    let rows = crate::parallel::map_slice(clips, |clip| -> Result<_, AblationError> {
        let ts = encode_audio(clip, weights, depth, mfcc)?;
        Ok(scene_embedding(&ts, scene)?.values)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(stack(rows))
}

/// Probes every algorithm x depth cell. Each clip is encoded once, at the
/// deepest requested depth, and shallower embeddings are read off the way.
pub fn run_ablation(
    task: &str,
    clips: &[(AudioBuffer, usize)],
    weights: &ModelWeights,
    algorithms: &[SceneAlgorithm],
    depths: &[usize],
    probe: &ProbeConfig,
) -> Result<AblationReport, AblationError> {
    let labels: Vec<usize> = clips.iter().map(|(_, l)| *l).collect();
    let mfcc = MfccConfig::default();
    // per clip, per depth
    let embedded = crate::parallel::map_slice(clips, |(audio, _)| encode_audio_depths(audio, weights, depths, &mfcc))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for &alg in algorithms {
        let scene = SceneConfig { algorithm: alg, ..Default::default() };
        for (k, &depth) in depths.iter().enumerate() {
            let rows = embedded
                .iter()
                .map(|per_depth| scene_embedding(&per_depth[k], &scene).map(|e| e.values))
                .collect::<Result<Vec<_>, _>>()?;
            let (_, accuracy) = fit_probe(&stack(rows), &labels, probe)?;
            table.entry(alg.name().to_string()).or_default().insert(depth.to_string(), accuracy);
            results.push(ProbeResult {
                task: task.to_string(),
                algorithm: alg.name().to_string(),
                depth: Some(depth),
                accuracy,
            });
        }
    }
    Ok(AblationReport {
        task: task.to_string(),
        n_clips: clips.len(),
        algorithms: algorithms.iter().map(|a| a.name().to_string()).collect(),
        depths: depths.to_vec(),
        results,
        table,
    })
}

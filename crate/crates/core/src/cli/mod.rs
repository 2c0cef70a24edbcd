//! The `kwmlp` command line.
//!
//! Exit codes: 0 success, 1 bad flags or output failure, 2 bad weights,
//! 3 bad audio or missing input file, 4 bad manifest, 5 probe shape or
//! label mismatch.

pub mod demo;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use thiserror::Error;

use crate::ablation::{run_ablation, ProbeResult};
use crate::dsp::{audio_to_mfccs, decode_wav, encode_wav_pcm16, Mfcc, MfccConfig};
use crate::emb::{self, EmbFormat};
use crate::encoder::{
    encode_audio, export_temporal_weights, init_weights, load_weights, save_weights, EncoderConfig, ModelWeights,
};
use crate::manifest::{format_manifest, read_manifest, ManifestError};
use crate::probe::{fit_probe, ProbeConfig};
use crate::scene::{scene_embedding, SceneAlgorithm, SceneConfig};
use crate::trainer::{save_optimizer, train, TrainConfig};
use demo::{circle_image, downsample_image, nonzero_count, to_pgm, DownsampleMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Flags(String),
    #[error("bad weights: {0}")]
    Weights(String),
    #[error("bad audio: {0}")]
    Audio(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("probe input mismatch: {0}")]
    Probe(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Flags(_) | CliError::Output(_) => 1,
            CliError::Weights(_) => 2,
            CliError::Audio(_) => 3,
            CliError::Manifest(_) => 4,
            CliError::Probe(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kwmlp", version, about = "All-MLP audio embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedMode {
    Timestamp,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneAlg {
    Iterative,
    Single,
    Mean,
}

impl From<SceneAlg> for SceneAlgorithm {
    fn from(a: SceneAlg) -> Self {
        match a {
            SceneAlg::Iterative => SceneAlgorithm::Iterative,
            SceneAlg::Single => SceneAlgorithm::Single,
            SceneAlg::Mean => SceneAlgorithm::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Bin,
}

#[derive(Debug, clap::Args)]
pub struct ModelDims {
    /// Number of gMLP blocks.
    #[arg(long, default_value_t = 12)]
    pub depth: usize,
    #[arg(long, default_value_t = 35)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 256)]
    pub proj_dim: usize,
}

impl ModelDims {
    fn config(&self) -> Result<EncoderConfig, CliError> {
        let c = EncoderConfig {
            blocks: self.depth,
            n_classes: self.classes,
            dim: self.dim,
            proj_dim: self.proj_dim,
            ..Default::default()
        };
        c.validate().map_err(|e| CliError::Flags(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute timestamp or scene embeddings for a WAV file.
    Embed {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = EmbedMode::Scene)]
        mode: EmbedMode,
        #[arg(long = "scene-alg", value_enum, default_value_t = SceneAlg::Iterative)]
        scene_alg: SceneAlg,
        /// Blocks to run (defaults to all).
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        format: OutFormat,
        #[arg(long)]
        output: PathBuf,
        /// key=value MFCC settings file.
        #[arg(long)]
        mfcc_config: Option<PathBuf>,
    },
    /// Train an encoder on a manifest of labelled WAV files.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dims: ModelDims,
        #[arg(long, default_value_t = 140)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 0.1)]
        weight_decay: f64,
        #[arg(long, default_value_t = 0.1)]
        label_smoothing: f64,
        #[arg(long, default_value_t = 0.9)]
        survival: f64,
        /// Optimizer state path (default: OUT with extension .opt1).
        #[arg(long)]
        opt_out: Option<PathBuf>,
        /// Training log path (default: OUT with extension .csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fit a shallow probe on an embedding matrix; prints one JSON line.
    Probe {
        /// EMB1 or CSV matrix, one row per manifest entry.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value = "probe")]
        task: String,
        #[arg(long, default_value = "unknown")]
        algorithm: String,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Export every block's temporal matrix as CSV plus Toeplitz scores.
    Inspect {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Downsample a thin circle directly or by repeated halving.
    InterpDemo {
        #[arg(long, default_value_t = 1024)]
        size: usize,
        #[arg(long, default_value_t = 32)]
        target: usize,
        #[arg(long, value_enum, default_value_t = DownsampleMode::Iterative)]
        mode: DownsampleMode,
        #[arg(long)]
        out: PathBuf,
        /// Pixels above this value count as nonzero in the summary.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Write freshly initialized weights.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        dims: ModelDims,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic tone-vs-noise WAV dataset and manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Scene-algorithm x depth probe grid on the synthetic task; writes JSON.
    Ablate {
        /// Weights to evaluate (default: random init, 12 blocks).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 8, 12])]
        depths: Vec<usize>,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Messages go to stdout/stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_weights(path: &Path) -> Result<ModelWeights, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Weights(format!("{}: {e}", path.display())))?;
    load_weights(&bytes).map_err(|e| CliError::Weights(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn read_audio(path: &Path) -> Result<crate::dsp::AudioBuffer, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Audio(format!("{}: {e}", path.display())))?;
    decode_wav(&bytes).map_err(|e| CliError::Audio(format!("{}: {e}", path.display())))
}

fn manifest_err(e: ManifestError) -> CliError {
    CliError::Manifest(e.to_string())
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Embed { weights, input, mode, scene_alg, depth, format, output, mfcc_config } => {
            let mfcc = match &mfcc_config {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(p).map_err(|e| CliError::Flags(format!("{}: {e}", p.display())))?;
                    MfccConfig::from_kv(&text).map_err(|e| CliError::Flags(e.to_string()))?
                }
                None => MfccConfig::default(),
            };
            let w = read_weights(&weights)?;
            let max = w.blocks.len();
            let depth = depth.unwrap_or(max);
            if depth == 0 || depth > max {
                return Err(CliError::Flags(format!("--depth {depth} out of range 1..={max}")));
            }
            if mfcc.n_mfcc != w.config.freq_bins || mfcc.frames_for(mfcc.sample_rate as usize) != w.config.time_steps {
                return Err(CliError::Flags("MFCC config does not produce the model's input shape".into()));
            }
            let audio = read_audio(&input)?;
            let ts = encode_audio(&audio, &w, depth, &mfcc).map_err(|e| CliError::Audio(e.to_string()))?;
            let matrix = match mode {
                EmbedMode::Timestamp => ts.values,
                EmbedMode::Scene => {
                    let cfg = SceneConfig { algorithm: scene_alg.into(), ..Default::default() };
                    let v = scene_embedding(&ts, &cfg).map_err(|e| CliError::Audio(e.to_string()))?.values;
                    let n = v.len();
                    v.into_shape_with_order((1, n)).expect("vector to row")
                }
            };
            let fmt = match format {
                OutFormat::Csv => EmbFormat::Csv,
                OutFormat::Bin => EmbFormat::Bin,
            };
            write_file(&output, &emb::write(&matrix, fmt))?;
            let what = match mode {
                EmbedMode::Timestamp => "timestamp embeddings",
                EmbedMode::Scene => "scene embedding",
            };
            println!("{what}: {} x {} -> {}", matrix.nrows(), matrix.ncols(), output.display());
            Ok(())
        }
        Command::Train {
            manifest,
            out,
            dims,
            epochs,
            seed,
            batch_size,
            lr,
            warmup,
            weight_decay,
            label_smoothing,
            survival,
            opt_out,
            log,
        } => {
            let enc = dims.config()?;
            let cfg = TrainConfig {
                epochs,
                batch_size,
                peak_lr: lr,
                warmup_epochs: warmup,
                weight_decay,
                label_smoothing,
                survival_prob: survival,
                seed,
                ..Default::default()
            };
            cfg.validate().map_err(|e| CliError::Flags(e.to_string()))?;
            let entries = read_manifest(&manifest).map_err(manifest_err)?;
            if let Some(e) = entries.iter().find(|e| e.label >= enc.n_classes) {
                return Err(CliError::Manifest(format!("label {} not below --classes {}", e.label, enc.n_classes)));
            }
            let mfcc = MfccConfig::default();
            let mut dataset: Vec<(Mfcc, usize)> = Vec::new();
            for entry in &entries {
                let audio = read_audio(&entry.path)?;
                let mfccs = audio_to_mfccs(&audio, &mfcc).map_err(|e| CliError::Audio(e.to_string()))?;
                dataset.extend(mfccs.into_iter().map(|m| (m, entry.label)));
            }
            let outcome = train(&dataset, enc, &cfg).map_err(|e| CliError::Flags(format!("training failed: {e}")))?;
            let opt_path = opt_out.unwrap_or_else(|| out.with_extension("opt1"));
            let log_path = log.unwrap_or_else(|| out.with_extension("csv"));
            write_file(&out, &save_weights(&outcome.weights))?;
            write_file(&opt_path, &save_optimizer(&outcome.optimizer, &outcome.weights))?;
            write_file(&log_path, outcome.log_csv().as_bytes())?;
            println!(
                "trained {} blocks on {} segments for {} steps; final epoch loss {:.4} -> {}",
                enc.blocks,
                dataset.len(),
                outcome.steps.len(),
                outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
            Ok(())
        }
        Command::Probe { embeddings, manifest, hidden, seed, epochs, lr, task, algorithm, depth } => {
            let bytes =
                std::fs::read(&embeddings).map_err(|e| CliError::Audio(format!("{}: {e}", embeddings.display())))?;
            let x: Array2<f64> = emb::read_any(&bytes).map_err(|e| CliError::Probe(e.to_string()))?;
            let entries = read_manifest(&manifest).map_err(manifest_err)?;
            let labels: Vec<usize> = entries.iter().map(|e| e.label).collect();
            let cfg = ProbeConfig { hidden_units: hidden, epochs, lr, seed, ..Default::default() };
            let (_, accuracy) = fit_probe(&x, &labels, &cfg).map_err(|e| CliError::Probe(e.to_string()))?;
            let line = ProbeResult { task, algorithm, depth, accuracy };
            println!("{}", serde_json::to_string(&line).expect("serializable"));
            Ok(())
        }
        Command::Inspect { weights, out } => {
            let w = read_weights(&weights)?;
            std::fs::create_dir_all(&out).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
            let t = export_temporal_weights(&w);
            for (i, m) in t.matrices.iter().enumerate() {
                write_file(&out.join(format!("block_{:02}_G.csv", i + 1)), emb::write_csv(m).as_bytes())?;
            }
            let scores: Vec<_> = t
                .scores
                .iter()
                .enumerate()
                .map(|(i, s)| serde_json::json!({"block": i + 1, "toeplitzness": s}))
                .collect();
            let json = serde_json::to_string_pretty(&serde_json::json!({ "blocks": scores })).expect("serializable");
            write_file(&out.join("toeplitz.json"), json.as_bytes())?;
            println!("exported {} temporal matrices to {}", t.matrices.len(), out.display());
            Ok(())
        }
        Command::InterpDemo { size, target, mode, out, threshold } => {
            if size == 0 || target == 0 || target > size {
                return Err(CliError::Flags("need 0 < --target <= --size".into()));
            }
            let img =
                downsample_image(&circle_image(size), target, mode).map_err(|e| CliError::Flags(e.to_string()))?;
            write_file(&out, &to_pgm(&img))?;
            println!(
                "{:?} {size}->{target}: {} pixels above {threshold}, max {:.4} -> {}",
                mode,
                nonzero_count(&img, threshold),
                img.fold(0.0f64, |m, &v| m.max(v)),
                out.display()
            );
            Ok(())
        }
        Command::Init { out, dims, seed } => {
            let w = init_weights(dims.config()?, seed).map_err(|e| CliError::Flags(e.to_string()))?;
            write_file(&out, &save_weights(&w))?;
            println!("{} parameters -> {}", crate::encoder::parameter_count(&w), out.display());
            Ok(())
        }
        Command::Synth { out, per_class, seed } => {
            if per_class == 0 {
                return Err(CliError::Flags("--per-class must be positive".into()));
            }
            std::fs::create_dir_all(&out).map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
            let mut lines = Vec::new();
            for (i, (clip, label)) in crate::synth::sine_vs_noise(per_class, seed).iter().enumerate() {
                let name = format!("{}_{i:04}.wav", if *label == crate::synth::SINE_LABEL { "sine" } else { "noise" });
                write_file(&out.join(&name), &encode_wav_pcm16(clip))?;
                lines.push((name, *label));
            }
            write_file(&out.join("manifest.tsv"), format_manifest(&lines).as_bytes())?;
            println!("wrote {} clips and manifest.tsv to {}", lines.len(), out.display());
            Ok(())
        }
        Command::Ablate { weights, per_class, seed, depths, output } => {
            if per_class == 0 {
                return Err(CliError::Flags("--per-class must be positive".into()));
            }
            let w = match &weights {
                Some(p) => read_weights(p)?,
                None => init_weights(EncoderConfig::default(), seed).expect("default config is valid"),
            };
            if let Some(d) = depths.iter().find(|&&d| d == 0 || d > w.blocks.len()) {
                return Err(CliError::Flags(format!("depth {d} out of range 1..={}", w.blocks.len())));
            }
            let clips = crate::synth::sine_vs_noise(per_class, seed);
            let report = run_ablation(
                "synthetic_sine_vs_noise",
                &clips,
                &w,
                &SceneAlgorithm::ALL,
                &depths,
                &ProbeConfig::default(),
            )
            .map_err(|e| CliError::Probe(e.to_string()))?;
            let json = serde_json::to_string_pretty(&report).expect("serializable");
            write_file(&output, json.as_bytes())?;
            for r in &report.results {
                println!("{}", serde_json::to_string(r).expect("serializable"));
            }
            Ok(())
        }
    }
}

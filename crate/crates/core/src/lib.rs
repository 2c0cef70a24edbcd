//! All-MLP audio embeddings.
//!
//! The pipeline runs raw audio through an MFCC front end ([`dsp`]), a stack of
//! gated-MLP blocks ([`encoder`]) producing per-frame timestamp embeddings, and
//! a temporal reduction ([`scene`]) to a fixed-size scene embedding. The
//! [`trainer`] pretrains the encoder with analytic gradients and AdamW, and the
//! [`probe`] fits shallow classifiers on frozen embeddings.

pub mod ablation;
pub mod cli;
pub mod dsp;
pub mod emb;
pub mod encoder;
pub mod manifest;
pub mod parallel;
pub mod params;
pub mod probe;
pub mod scene;
pub mod synth;
pub mod trainer;

pub use dsp::{AudioBuffer, Mfcc, MfccConfig};
pub use encoder::{EncoderConfig, ModelWeights, TimestampEmbeddings};
pub use scene::{SceneAlgorithm, SceneConfig, SceneEmbedding};

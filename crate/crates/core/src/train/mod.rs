//! Training/evaluation harness: experiment configuration, metrics, score
//! fusion, the SGD loop, and checkpoint files.

mod metrics;
mod runner;

pub use metrics::{fuse_score_maps, fuse_scores, metrics_from_scores, EpochRecord, Metrics, ScoreMap};
pub use runner::{
    build_model, dataset_labels, evaluate, load_checkpoint, load_dataset, prepare_inputs,
    scores_from_json, scores_to_json, train, BuiltModel, CheckpointFile, ModelKind, PreparedInput,
    TrainReport, CHECKPOINT_FORMAT,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::synth::SynthSpec;
use crate::data::voxel::VoxelConfig;
use crate::error::{Error, Result};
use crate::spa::SpaVariant;

/// Which derived signal a SEM stream consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stream {
    #[default]
    Joint,
    Bone,
}

fn default_heads() -> usize {
    4
}

fn default_c_e() -> usize {
    16
}

fn default_kernel_t() -> usize {
    3
}

fn default_branches() -> usize {
    4
}

fn default_dilations() -> Vec<usize> {
    vec![1, 3, 5, 7]
}

fn default_sem_channels() -> Vec<usize> {
    vec![32, 64, 64]
}

fn default_sem_strides() -> Vec<usize> {
    vec![1, 2, 1]
}

fn default_spa_channels() -> Vec<usize> {
    vec![16, 32, 64]
}

fn default_spa_strides() -> Vec<usize> {
    vec![2, 2, 2]
}

fn default_spatial_k() -> usize {
    5
}

/// SEM architecture as written in experiment configs; data-dependent sizes
/// (joint count, classes) are resolved against the dataset at build time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SemModelCfg {
    #[serde(default)]
    pub stream: Stream,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_c_e")]
    pub c_e: usize,
    #[serde(default = "default_sem_channels")]
    pub channels: Vec<usize>,
    #[serde(default = "default_sem_strides")]
    pub strides: Vec<usize>,
    #[serde(default = "default_kernel_t")]
    pub kernel_t: usize,
    #[serde(default = "default_branches")]
    pub branches: usize,
    #[serde(default = "default_dilations")]
    pub dilations: Vec<usize>,
    #[serde(default)]
    pub normalize: bool,
    /// Resample sequences to this many frames before the net (native length
    /// when absent).
    #[serde(default)]
    pub t_max: Option<usize>,
}

/// SPA architecture as written in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SpaModelCfg {
    pub variant: SpaVariant,
    #[serde(default = "default_spa_channels")]
    pub channels: Vec<usize>,
    #[serde(default = "default_spa_strides")]
    pub strides: Vec<usize>,
    #[serde(default = "default_spatial_k")]
    pub k: usize,
    #[serde(default = "default_kernel_t")]
    pub kernel_t: usize,
    #[serde(default = "default_branches")]
    pub branches: usize,
    #[serde(default = "default_dilations")]
    pub dilations: Vec<usize>,
    #[serde(default)]
    pub voxel: VoxelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelConfig {
    Sem(SemModelCfg),
    Spa(SpaModelCfg),
}

/// Data source: a canonical dataset directory or an inline synthetic spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataConfig {
    Path { path: PathBuf },
    Synth { synth: SynthSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Stop once full training accuracy reaches this value.
    #[serde(default)]
    pub early_stop_acc: Option<f64>,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch() -> usize {
    8
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid("optimizer", "lr must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("optimizer", "momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("optimizer", "batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// One experiment: data, exactly one model section, optimizer, seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Checkpoint/metrics are written here when present.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Seed derivation: every randomness consumer gets its own splitmix-derived
/// stream from the one experiment seed.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

//! Model building, the SGD training loop, and evaluation.
//!
//! All randomness (init, epoch shuffling, synthetic data) derives from the
//! experiment seed through fixed splitmix streams, and every numeric path is
//! single-threaded, so a repeated run is bit-identical.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, Graph, Params};
use crate::data::voxel::voxelize;
use crate::data::{canonical, compute_bones, resample_temporal, synth, Dataset};
use crate::error::{Error, Result};
use crate::sem::{sem_input, SemBlockConfig, SemNet, SemNetConfig};
use crate::spa::{PlanCache, SpaBlockConfig, SpaNet, SpaNetConfig};
use crate::sparse::SparseTensor4D;
use crate::tensor::DenseTensor;

use super::{
    derive_seed, DataConfig, EpochRecord, ExperimentConfig, Metrics, ModelConfig, ScoreMap,
    SemModelCfg, SpaModelCfg, Stream,
};

pub const CHECKPOINT_FORMAT: &str = "semspa-checkpoint-v1";

/// A built network plus its parameter store.
pub struct BuiltModel {
    pub kind: ModelKind,
    pub params: Params,
    pub model_cfg: ModelConfig,
}

pub enum ModelKind {
    Sem(SemNet),
    Spa(SpaNet),
}

/// Per-sample network input, precomputed once per dataset.
pub enum PreparedInput {
    Dense(DenseTensor),
    Sparse(SparseTensor4D),
}

/// Checkpoint file: the model section it was trained with plus the flat
/// parameter map.
#[derive(Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format: String,
    pub model: ModelConfig,
    pub params: BTreeMap<String, DenseTensor>,
}

pub fn load_dataset(data: &DataConfig) -> Result<Dataset> {
    match data {
        DataConfig::Path { path } => canonical::load_canonical(path),
        DataConfig::Synth { synth: spec } => synth::generate(spec),
    }
}

fn sem_net_config(ds: &Dataset, cfg: &SemModelCfg) -> Result<SemNetConfig> {
    if cfg.channels.len() != cfg.strides.len() || cfg.channels.is_empty() {
        return Err(Error::invalid("sem", "channels and strides must align and be nonempty"));
    }
    let joints_per_person = match cfg.stream {
        Stream::Joint => ds.topology.num_joints,
        Stream::Bone => {
            if ds.topology.edges.is_empty() {
                return Err(Error::data("sem: bone stream needs topology edges"));
            }
            ds.topology.edges.len()
        }
    };
    let blocks = cfg
        .channels
        .iter()
        .zip(&cfg.strides)
        .map(|(&c_out, &stride)| SemBlockConfig {
            heads: cfg.heads,
            c_e: cfg.c_e,
            c_out,
            kernel_t: cfg.kernel_t,
            branches: cfg.branches,
            dilations: cfg.dilations.clone(),
            stride,
            normalize: cfg.normalize,
        })
        .collect();
    Ok(SemNetConfig {
        n_total: ds.max_persons * joints_per_person,
        c_in: 3,
        classes: ds.num_classes(),
        blocks,
    })
}

fn spa_net_config(ds: &Dataset, cfg: &SpaModelCfg) -> Result<SpaNetConfig> {
    if cfg.channels.len() != cfg.strides.len() || cfg.channels.is_empty() {
        return Err(Error::invalid("spa", "channels and strides must align and be nonempty"));
    }
    let blocks = cfg
        .channels
        .iter()
        .zip(&cfg.strides)
        .map(|(&c_out, &stride)| SpaBlockConfig {
            variant: cfg.variant,
            c_out,
            k: cfg.k,
            kernel_t: cfg.kernel_t,
            stride,
            branches: cfg.branches,
            dilations: cfg.dilations.clone(),
        })
        .collect();
    Ok(SpaNetConfig {
        c_in: ds.topology.num_joints,
        classes: ds.num_classes(),
        voxel: cfg.voxel,
        blocks,
    })
}

/// Build a model for a dataset; parameter names and init order are fixed, so
/// the same (dataset, config, seed) builds bit-identical parameters.
pub fn build_model(ds: &Dataset, model: &ModelConfig, init_seed: u64) -> Result<BuiltModel> {
    let mut ps = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let kind = match model {
        ModelConfig::Sem(cfg) => {
            ModelKind::Sem(SemNet::new(&mut ps, sem_net_config(ds, cfg)?, &mut rng)?)
        }
        ModelConfig::Spa(cfg) => {
            ModelKind::Spa(SpaNet::new(&mut ps, spa_net_config(ds, cfg)?, &mut rng)?)
        }
    };
    Ok(BuiltModel { kind, params: ps, model_cfg: model.clone() })
}

/// Precompute per-sample inputs (dense joint/bone tensors for SEM, voxelized
/// sparse tensors for SPA).
pub fn prepare_inputs(ds: &Dataset, model: &ModelConfig) -> Result<Vec<PreparedInput>> {
    let mut out = Vec::with_capacity(ds.samples.len());
    match model {
        ModelConfig::Sem(cfg) => {
            for s in &ds.samples {
                let seq = match cfg.t_max {
                    Some(t) => resample_temporal(s, t)?,
                    None => s.clone(),
                };
                let seq = match cfg.stream {
                    Stream::Joint => seq,
                    Stream::Bone => compute_bones(&seq, &ds.topology)?,
                };
                out.push(PreparedInput::Dense(sem_input(&seq, ds.max_persons)?));
            }
        }
        ModelConfig::Spa(cfg) => {
            for s in &ds.samples {
                let seq = resample_temporal(s, cfg.voxel.temporal_len)?;
                out.push(PreparedInput::Sparse(voxelize(&seq, &cfg.voxel, &ds.topology)?));
            }
        }
    }
    Ok(out)
}

fn forward_logits(
    kind: &ModelKind,
    g: &mut Graph,
    ps: &Params,
    input: &PreparedInput,
    cache: &mut PlanCache,
) -> Result<crate::autodiff::Value> {
    match (kind, input) {
        (ModelKind::Sem(net), PreparedInput::Dense(x)) => {
            let xv = g.input(x.clone())?;
            net.forward(g, ps, xv)
        }
        (ModelKind::Spa(net), PreparedInput::Sparse(x)) => net.forward(g, ps, x, cache),
        _ => Err(Error::Graph("model kind and prepared input disagree".into())),
    }
}

/// Training outcome: history, final full-pass training metrics, and the
/// serialized checkpoint.
pub struct TrainReport {
    pub model: BuiltModel,
    pub history: Vec<EpochRecord>,
    pub final_metrics: Metrics,
    pub epochs_run: usize,
    pub checkpoint_json: String,
}

fn checkpoint_json(model: &BuiltModel) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        model: model.model_cfg.clone(),
        params: checkpoint::to_map(&model.params),
    };
    Ok(serde_json::to_string(&file)?)
}

/// Parse a checkpoint and rebuild its model against a dataset.
pub fn load_checkpoint(json: &str, ds: &Dataset) -> Result<BuiltModel> {
    let file: CheckpointFile = serde_json::from_str(json)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::data(format!("unknown checkpoint format {:?}", file.format)));
    }
    let mut built = build_model(ds, &file.model, 0)?;
    checkpoint::load_map_into(&mut built.params, file.params)?;
    Ok(built)
}

struct Sgd {
    velocity: Vec<DenseTensor>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    fn new(ps: &Params, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        let velocity = ps.iter().map(|(_, p)| DenseTensor::zeros(p.value.shape())).collect();
        Self { velocity, lr, momentum, weight_decay }
    }

    /// One step over gradients scaled by `grad_scale` (1/batch size). Errors
    /// when the update drives any parameter non-finite (divergence).
    fn step(&mut self, ps: &mut Params, grad_scale: f64) -> Result<()> {
        for ((_, p), v) in ps.iter_mut().zip(&mut self.velocity) {
            let vals = p.value.data_mut();
            let vel = v.data_mut();
            for i in 0..vals.len() {
                let g = p.grad.data()[i] * grad_scale + self.weight_decay * vals[i];
                let vi = self.momentum * vel[i] + g;
                vel[i] = vi;
                vals[i] -= self.lr * vi;
            }
            if !p.value.all_finite() {
                return Err(Error::NonFinite { op: "sgd_step" });
            }
        }
        Ok(())
    }
}

/// Run one experiment. Deterministic for a fixed seed; on divergence
/// (non-finite loss) the last good checkpoint is written before erroring.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.optimizer.validate()?;
    let ds = load_dataset(&cfg.data)?;
    if ds.samples.is_empty() {
        return Err(Error::data("train: dataset has no samples"));
    }
    let mut built = build_model(&ds, &cfg.model, derive_seed(cfg.seed, 1))?;
    let inputs = prepare_inputs(&ds, &cfg.model)?;
    let labels: Vec<usize> = ds.samples.iter().map(|s| s.label).collect();
    let mut caches: Vec<PlanCache> = (0..inputs.len()).map(|_| PlanCache::new()).collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut sgd = Sgd::new(
        &built.params,
        cfg.optimizer.lr,
        cfg.optimizer.momentum,
        cfg.optimizer.weight_decay,
    );

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut history = Vec::new();
    let mut last_good: Option<String> = None;
    let mut epochs_run = 0;
    for epoch in 0..cfg.optimizer.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.optimizer.batch_size) {
            built.params.zero_grad();
            let batch_result = (|| -> Result<()> {
                for &i in batch {
                    let mut g = Graph::new();
                    let logits =
                        forward_logits(&built.kind, &mut g, &built.params, &inputs[i], &mut caches[i])?;
                    let pred = argmax(g.value(logits).data());
                    let loss = g.cross_entropy(logits, labels[i])?;
                    epoch_loss += g.value(loss).item()?;
                    g.backward(loss, &mut built.params)?;
                    if pred == labels[i] {
                        correct += 1;
                    }
                }
                sgd.step(&mut built.params, 1.0 / batch.len() as f64)
            })();
            if let Err(e) = batch_result {
                if matches!(e, Error::NonFinite { .. }) {
                    // divergence: keep the last epoch that finished
                    if let (Some(dir), Some(json)) = (&cfg.out_dir, &last_good) {
                        std::fs::write(dir.join("checkpoint.json"), json)?;
                    }
                }
                return Err(e);
            }
        }
        let track_acc = correct as f64 / inputs.len() as f64;
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss / inputs.len() as f64,
            accuracy: track_acc,
        });
        if std::env::var_os("SEMSPA_TRACE").is_some() {
            eprintln!("epoch {epoch}: loss {:.6} acc {:.3}", epoch_loss / inputs.len() as f64, track_acc);
        }
        last_good = Some(checkpoint_json(&built)?);
        epochs_run = epoch + 1;
        if let Some(threshold) = cfg.optimizer.early_stop_acc {
            if track_acc >= threshold {
                let (m, _) = evaluate(&built, &ds, &inputs)?;
                if m.accuracy >= threshold {
                    break;
                }
            }
        }
    }

    let (mut final_metrics, _) = evaluate(&built, &ds, &inputs)?;
    final_metrics.mean_loss = history.last().map(|r| r.loss);
    let checkpoint_json = checkpoint_json(&built)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::write(dir.join("checkpoint.json"), &checkpoint_json)?;
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&final_metrics)?)?;
        std::fs::write(dir.join("history.json"), serde_json::to_string_pretty(&history)?)?;
        std::fs::write(dir.join("confusion.csv"), final_metrics.confusion_csv())?;
    }
    Ok(TrainReport { model: built, history, final_metrics, epochs_run, checkpoint_json })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Evaluate a model on a dataset: metrics plus per-sample softmax scores.
/// Pure: repeated calls agree bitwise.
pub fn evaluate(model: &BuiltModel, ds: &Dataset, inputs: &[PreparedInput]) -> Result<(Metrics, ScoreMap)> {
    if inputs.len() != ds.samples.len() {
        return Err(Error::data("evaluate: inputs and samples disagree"));
    }
    if matches!(
        (&model.kind, &model.model_cfg),
        (ModelKind::Sem(_), ModelConfig::Spa(_)) | (ModelKind::Spa(_), ModelConfig::Sem(_))
    ) {
        return Err(Error::Graph("evaluate: model kind and config disagree".into()));
    }
    let classes = ds.num_classes();
    let mut pairs = Vec::with_capacity(inputs.len());
    let mut scores = ScoreMap::new();
    for (i, input) in inputs.iter().enumerate() {
        let mut g = Graph::new();
        // plans are keyed per sample's coordinates, so each sample gets a
        // fresh cache here
        let mut cache = PlanCache::new();
        let logits = forward_logits(&model.kind, &mut g, &model.params, input, &mut cache)?;
        if g.value(logits).len() != classes {
            return Err(Error::ShapeMismatch {
                op: "evaluate",
                lhs: vec![classes],
                rhs: g.value(logits).shape().to_vec(),
            });
        }
        let probs = g.softmax_last(logits)?;
        let p = g.value(probs).data().to_vec();
        pairs.push((ds.samples[i].label, argmax(&p)));
        scores.insert(ds.samples[i].id.clone(), p);
    }
    let metrics = Metrics::from_predictions(&pairs, classes)?;
    Ok((metrics, scores))
}

/// Load a score map from its JSON file form ({"sample_id": [p0..pK-1]}).
pub fn scores_from_json(json: &str) -> Result<ScoreMap> {
    Ok(serde_json::from_str(json)?)
}

pub fn scores_to_json(scores: &ScoreMap) -> Result<String> {
    Ok(serde_json::to_string_pretty(scores)?)
}

/// Ground-truth labels by sample id.
pub fn dataset_labels(ds: &Dataset) -> BTreeMap<String, usize> {
    ds.samples.iter().map(|s| (s.id.clone(), s.label)).collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

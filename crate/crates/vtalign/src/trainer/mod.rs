//! Optimization loop: Adam with bias correction, coarse-weight schedules,
//! epoch orchestration, checkpoint/resume, and per-epoch reporting.
//!
//! A run is a bit-deterministic function of (config, corpus): batch
//! shuffling, warp offsets, and random-strategy draws come from three
//! independent streams split off the run seed, and their states ride along
//! in every checkpoint so a resumed run replays the exact remainder of the
//! uninterrupted one. Serialized artifacts (checkpoints, CSV, JSON summary)
//! contain no timing, so identical runs produce identical bytes; wall time
//! stays in the in-memory report for display.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::diffmath::{GradTape, Tensor};
use crate::encoders::checkpoint::{
    read_checkpoint, verify_config_hash, write_checkpoint, CheckpointError, Manifest,
    FORMAT_VERSION,
};
use crate::encoders::{init_params, register_params, ModelParams};
use crate::objectives::{encode_batch, total_loss, LossBreakdown, ObjectiveError};
use crate::rng::{self, Rng};

pub use config::{parse_config, ConfigError, ScheduleMode, TrainConfig, LR_DECAY_FACTOR};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug)]
pub enum TrainError {
    Config(ConfigError),
    Objective(ObjectiveError),
    Checkpoint(CheckpointError),
    Io(std::io::Error),
    /// Loss or gradient left the finite range; carries epoch and batch.
    NonFinite { epoch: usize, batch: usize, what: String },
    /// Gradient map and parameter set disagree.
    GradientMismatch(String),
    EmptyCorpus,
}

impl std::fmt::Display for TrainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Config(e) => write!(f, "{e}"),
            TrainError::Objective(e) => write!(f, "objective: {e}"),
            TrainError::Checkpoint(e) => write!(f, "{e}"),
            TrainError::Io(e) => write!(f, "trainer i/o: {e}"),
            TrainError::NonFinite { epoch, batch, what } => {
                write!(f, "non-finite {what} at epoch {epoch}, batch {batch}")
            }
            TrainError::GradientMismatch(msg) => write!(f, "gradient mismatch: {msg}"),
            TrainError::EmptyCorpus => write!(f, "corpus has no videos"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<ConfigError> for TrainError {
    fn from(e: ConfigError) -> Self {
        TrainError::Config(e)
    }
}
impl From<ObjectiveError> for TrainError {
    fn from(e: ObjectiveError) -> Self {
        TrainError::Objective(e)
    }
}
impl From<CheckpointError> for TrainError {
    fn from(e: CheckpointError) -> Self {
        TrainError::Checkpoint(e)
    }
}
impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

/// First/second Adam moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = |p: &ModelParams| -> BTreeMap<String, Tensor> {
            p.named()
                .into_iter()
                .map(|(n, t)| (n, Tensor::zeros(t.shape().to_vec())))
                .collect()
        };
        AdamState {
            m: zeros(params),
            v: zeros(params),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, applied in canonical parameter order.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for (name, tensor) in params.named_mut() {
        let grad = grads
            .get(&name)
            .ok_or_else(|| TrainError::GradientMismatch(format!("no gradient for {name}")))?;
        if grad.shape() != tensor.shape() {
            return Err(TrainError::GradientMismatch(format!(
                "gradient for {name} has shape {:?}, parameter {:?}",
                grad.shape(),
                tensor.shape()
            )));
        }
        if !grad.all_finite() {
            return Err(TrainError::GradientMismatch(format!(
                "non-finite gradient for {name}"
            )));
        }
        let m = state.m.get_mut(&name).expect("moment for parameter");
        let v = state.v.get_mut(&name).expect("moment for parameter");
        for ((p, g), (mi, vi)) in tensor
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Per-epoch (lambda_c, lambda_f, lambda_t) under the given schedule.
pub fn lambda_schedule(cfg: &TrainConfig, epoch: usize) -> (f64, f64, f64) {
    match cfg.schedule {
        ScheduleMode::Weighted => (cfg.lambda_coarse, cfg.lambda_fine, cfg.lambda_temporal),
        ScheduleMode::Warmup => {
            let gamma = (100.0f64).ln() / cfg.epochs as f64;
            let lc = (-gamma * epoch as f64).exp();
            let lc = if lc < 0.01 { 0.0 } else { lc };
            (lc, cfg.lambda_fine, cfg.lambda_temporal)
        }
        ScheduleMode::Multistage => {
            let boundary = cfg.epochs.div_ceil(2);
            if epoch < boundary {
                (1.0, 0.0, 0.0)
            } else {
                (0.0, cfg.lambda_fine, cfg.lambda_temporal)
            }
        }
    }
}

/// lr decayed by [`LR_DECAY_FACTOR`] at each passed milestone.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let passed = cfg
        .lr_decay_milestones
        .iter()
        .filter(|&&frac| epoch >= (frac * cfg.epochs as f64).floor() as usize)
        .count();
    cfg.lr * LR_DECAY_FACTOR.powi(passed as i32)
}

/// One epoch row of the report. Wall time is display-only and never
/// serialized, keeping artifacts bit-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
    pub lambda_temporal: f64,
    pub loss_coarse: Option<f64>,
    pub loss_fine: Option<f64>,
    pub loss_temporal: Option<f64>,
    pub loss_total: f64,
    pub batches: usize,
    #[serde(skip)]
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub final_loss: Option<f64>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,lr,lambda_c,lambda_f,lambda_t,loss_c,loss_f,loss_t,loss_total,batches\n",
        );
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.lr,
                r.lambda_coarse,
                r.lambda_fine,
                r.lambda_temporal,
                opt(&r.loss_coarse),
                opt(&r.loss_fine),
                opt(&r.loss_temporal),
                r.loss_total,
                r.batches
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| TrainError::Io(std::io::Error::other(e)))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}

/// Trained parameters with everything needed to continue or evaluate.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub report: TrainReport,
    /// Path of the final checkpoint when an output directory was given.
    pub final_checkpoint: Option<PathBuf>,
}

struct StreamSet {
    shuffle: Rng,
    offsets: Rng,
    strategy: Rng,
}

impl StreamSet {
    fn fresh(seed: u64) -> Self {
        StreamSet {
            shuffle: Rng::new(rng::split(seed, rng::stream::BATCH_SHUFFLE)),
            offsets: Rng::new(rng::split(seed, rng::stream::WARP_OFFSETS)),
            strategy: Rng::new(rng::split(seed, rng::stream::STRATEGY_RANDOM)),
        }
    }

    fn states(&self) -> BTreeMap<String, u64> {
        let mut map = BTreeMap::new();
        map.insert("shuffle".to_string(), self.shuffle.state());
        map.insert("offsets".to_string(), self.offsets.state());
        map.insert("strategy".to_string(), self.strategy.state());
        map
    }

    fn restore(states: &BTreeMap<String, u64>) -> Result<Self, TrainError> {
        let get = |name: &str| -> Result<u64, TrainError> {
            states.get(name).copied().ok_or_else(|| {
                TrainError::Checkpoint(CheckpointError::Manifest(format!(
                    "missing PRNG state {name:?}"
                )))
            })
        };
        Ok(StreamSet {
            shuffle: Rng::from_state(get("shuffle")?),
            offsets: Rng::from_state(get("offsets")?),
            strategy: Rng::from_state(get("strategy")?),
        })
    }
}

fn checkpoint_blobs(params: &ModelParams, adam: &AdamState) -> Vec<(String, Tensor)> {
    let mut blobs: Vec<(String, Tensor)> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    for (n, t) in &adam.m {
        blobs.push((format!("adam.m.{n}"), t.clone()));
    }
    for (n, t) in &adam.v {
        blobs.push((format!("adam.v.{n}"), t.clone()));
    }
    blobs
}

fn save_checkpoint(
    path: &Path,
    cfg: &TrainConfig,
    corpus: &Corpus,
    params: &ModelParams,
    adam: &AdamState,
    epoch: usize,
    streams: &StreamSet,
) -> Result<(), TrainError> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        step: adam.step,
        epoch: epoch as u64,
        raw_dim: corpus.config.raw_dim,
        hidden_dim: cfg.hidden_dim,
        embed_dim: cfg.embed_dim,
        config_hash: cfg.hash(),
        prng_states: streams.states(),
    };
    write_checkpoint(path, &manifest, &checkpoint_blobs(params, adam))?;
    Ok(())
}

/// Rebuild (params, adam, epoch, streams) from a checkpoint, refusing config
/// or dimension mismatches.
fn load_state(
    path: &Path,
    cfg: &TrainConfig,
    corpus: &Corpus,
) -> Result<(ModelParams, AdamState, usize, StreamSet), TrainError> {
    let (manifest, blobs) = read_checkpoint(path)?;
    verify_config_hash(&manifest, cfg.hash())?;
    if manifest.raw_dim != corpus.config.raw_dim
        || manifest.hidden_dim != cfg.hidden_dim
        || manifest.embed_dim != cfg.embed_dim
    {
        return Err(TrainError::Checkpoint(CheckpointError::DimMismatch(
            format!(
                "checkpoint dims ({}, {}, {}) vs active ({}, {}, {})",
                manifest.raw_dim,
                manifest.hidden_dim,
                manifest.embed_dim,
                corpus.config.raw_dim,
                cfg.hidden_dim,
                cfg.embed_dim
            ),
        )));
    }
    let params = ModelParams::from_named(&blobs)
        .map_err(|e| TrainError::Checkpoint(CheckpointError::Manifest(e)))?;
    let mut adam = AdamState::new(&params);
    adam.step = manifest.step;
    for (name, _) in params.named() {
        let m = blobs.get(&format!("adam.m.{name}")).cloned().ok_or_else(|| {
            TrainError::Checkpoint(CheckpointError::Manifest(format!("missing adam.m.{name}")))
        })?;
        let v = blobs.get(&format!("adam.v.{name}")).cloned().ok_or_else(|| {
            TrainError::Checkpoint(CheckpointError::Manifest(format!("missing adam.v.{name}")))
        })?;
        adam.m.insert(name.clone(), m);
        adam.v.insert(name, v);
    }
    let streams = StreamSet::restore(&manifest.prng_states)?;
    Ok((params, adam, manifest.epoch as usize, streams))
}

/// Train from scratch. Checkpoints and the final state go to `out_dir` when
/// given ("ckpt_epoch_<n>.lvck" at the cadence, "final.lvck" at the end).
pub fn train(
    cfg: &TrainConfig,
    corpus: &Corpus,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if corpus.videos.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let params = init_params(cfg.seed, corpus.config.raw_dim, cfg.hidden_dim, cfg.embed_dim);
    let adam = AdamState::new(&params);
    let streams = StreamSet::fresh(cfg.seed);
    run_epochs(cfg, corpus, out_dir, params, adam, 0, streams)
}

/// Continue a run from a checkpoint written by the same config and corpus.
pub fn resume(
    checkpoint: &Path,
    cfg: &TrainConfig,
    corpus: &Corpus,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if corpus.videos.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let (params, adam, epoch, streams) = load_state(checkpoint, cfg, corpus)?;
    run_epochs(cfg, corpus, out_dir, params, adam, epoch, streams)
}

fn run_epochs(
    cfg: &TrainConfig,
    corpus: &Corpus,
    out_dir: Option<&Path>,
    mut params: ModelParams,
    mut adam: AdamState,
    start_epoch: usize,
    mut streams: StreamSet,
) -> Result<TrainOutcome, TrainError> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut report = TrainReport {
        seed: cfg.seed,
        config: cfg.clone(),
        epochs: Vec::new(),
        final_loss: None,
    };

    for epoch in start_epoch..cfg.epochs {
        let started = Instant::now();
        let lambdas = lambda_schedule(cfg, epoch);
        let lr = lr_at_epoch(cfg, epoch);
        let opts = cfg.loss_options(lambdas);

        let mut order: Vec<usize> = (0..corpus.videos.len()).collect();
        streams.shuffle.shuffle(&mut order);

        let mut sums = LossSums::default();
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let videos: Vec<&crate::corpus::VideoSample> =
                chunk.iter().map(|&i| &corpus.videos[i]).collect();
            let mut tape = GradTape::new();
            let tape_params = register_params(&mut tape, &params)
                .map_err(|e| TrainError::Objective(ObjectiveError::Diff(e)))?;
            let batch = encode_batch(&mut tape, &tape_params, &videos)?;
            let (loss_node, breakdown) =
                total_loss(&mut tape, &batch, &opts, &mut streams.strategy, &mut streams.offsets)?;
            if !breakdown.total.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    what: "loss".to_string(),
                });
            }
            let grads = tape
                .backward(loss_node)
                .map_err(|e| TrainError::Objective(ObjectiveError::Diff(e)))?;
            adam_step(&mut params, &grads, &mut adam, lr)?;
            sums.add(&breakdown);
        }

        let record = sums.into_record(epoch, lr, lambdas, started.elapsed().as_millis());
        report.final_loss = Some(record.loss_total);
        report.epochs.push(record);

        if let Some(dir) = out_dir {
            let completed = epoch + 1;
            if cfg.checkpoint_every > 0
                && completed % cfg.checkpoint_every == 0
                && completed < cfg.epochs
            {
                save_checkpoint(
                    &dir.join(format!("ckpt_epoch_{completed}.lvck")),
                    cfg,
                    corpus,
                    &params,
                    &adam,
                    completed,
                    &streams,
                )?;
            }
        }
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join("final.lvck");
            save_checkpoint(&path, cfg, corpus, &params, &adam, cfg.epochs, &streams)?;
            report.write(dir)?;
            Some(path)
        }
        None => None,
    };

    Ok(TrainOutcome {
        params,
        adam,
        report,
        final_checkpoint,
    })
}

#[derive(Default)]
struct LossSums {
    coarse: Option<f64>,
    fine: Option<f64>,
    temporal: Option<f64>,
    total: f64,
    batches: usize,
}

impl LossSums {
    fn add(&mut self, b: &LossBreakdown) {
        let acc = |slot: &mut Option<f64>, v: Option<f64>| {
            if let Some(v) = v {
                *slot = Some(slot.unwrap_or(0.0) + v);
            }
        };
        acc(&mut self.coarse, b.coarse);
        acc(&mut self.fine, b.fine);
        acc(&mut self.temporal, b.temporal);
        self.total += b.total;
        self.batches += 1;
    }

    fn into_record(
        self,
        epoch: usize,
        lr: f64,
        lambdas: (f64, f64, f64),
        wall_ms: u128,
    ) -> EpochRecord {
        let n = self.batches.max(1) as f64;
        EpochRecord {
            epoch,
            lr,
            lambda_coarse: lambdas.0,
            lambda_fine: lambdas.1,
            lambda_temporal: lambdas.2,
            loss_coarse: self.coarse.map(|v| v / n),
            loss_fine: self.fine.map(|v| v / n),
            loss_temporal: self.temporal.map(|v| v / n),
            loss_total: self.total / n,
            batches: self.batches,
            wall_ms,
        }
    }
}

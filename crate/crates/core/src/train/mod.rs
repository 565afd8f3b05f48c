//! Teacher-forced training: Adam, plateau decay, batching and checkpoints.

mod batch;
mod checkpoint;

pub use batch::{make_batches, Batch, Example};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelConfig, ModelError, Variant};
use crate::params::{Grads, ParamStore};
use crate::vocab::{EOS, EOW};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error(
        "training diverged in epoch {epoch}; parameters restored to the end of epoch {restored}"
    )]
    Diverged { epoch: usize, restored: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::tensor::TensorError> for TrainError {
    fn from(e: crate::tensor::TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

impl TrainError {
    /// Non-finite values anywhere in the forward or backward pass.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient(_)
                | TrainError::Model(ModelError::Tensor(crate::tensor::TensorError::NonFinite(_)))
        )
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub min_learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Worker threads for gradient computation; 0 uses all cores.
    pub threads: usize,
    /// Save a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0003,
            decay: 0.5,
            min_learning_rate: 1e-6,
            batch_size: 100,
            dropout: 0.2,
            max_epochs: 50,
            patience: 5,
            clip_norm: 5.0,
            seed: 1,
            threads: 1,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be non-negative and finite");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail("decay must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip norm must be positive");
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter, aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient are
/// treated as having a zero gradient.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ParamStore,
    grads: &Grads,
    rate: f64,
) -> Result<()> {
    if let Some(id) = grads.first_non_finite() {
        return Err(TrainError::NonFiniteGradient(params.name(id).to_string()));
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powf(state.t as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(state.t as f64);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let (m, v) = (&mut state.m[id.index()], &mut state.v[id.index()]);
        let g = grads.get(id);
        let p = params.get_mut(id).data_mut();
        for i in 0..p.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= rate * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Learning rate after the latest validation loss: multiplied by `decay`
/// when it fails to improve on every earlier loss, never below the floor.
pub fn decay_on_plateau(config: &TrainConfig, rate: f64, losses: &[f64]) -> f64 {
    match losses.split_last() {
        Some((last, earlier)) if !earlier.is_empty() => {
            let best = earlier.iter().copied().fold(f64::INFINITY, f64::min);
            if *last < best {
                rate
            } else {
                (rate * config.decay).max(config.min_learning_rate)
            }
        }
        _ => rate,
    }
}

/// Per-epoch log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub learning_rate: f64,
    pub wall_time: f64,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("epoch record serializes")
    }
}

/// Keeps examples that fit the model's length limits; returns the kept
/// examples and the number dropped.
pub fn filter_by_length(config: &ModelConfig, corpus: &[Example]) -> (Vec<Example>, usize) {
    let fits = |e: &Example| {
        if e.source.is_empty() || e.target.is_empty() {
            return false;
        }
        match config.variant {
            Variant::Subword | Variant::Character => {
                e.target.len() - 1 <= config.max_sentence_length
            }
            Variant::Hierarchical => {
                let body = &e.target[..e.target.len() - 1];
                let words = body.iter().filter(|&&u| u == EOW).count();
                words <= config.max_sentence_length
                    && body
                        .split(|&u| u == EOW)
                        .all(|w| w.len() <= config.max_word_length)
                    && e.target.last() == Some(&EOS)
            }
        }
    };
    let kept: Vec<Example> = corpus.iter().filter(|e| fits(e)).cloned().collect();
    let dropped = corpus.len() - kept.len();
    (kept, dropped)
}

/// Summed gradients, summed NLL and scored units over some examples.
pub struct GradientSum {
    pub grads: Grads,
    pub nll: f64,
    pub units: usize,
}

fn example_gradient(
    model: &Model,
    ex: &Example,
    dropout: Option<(f64, u64)>,
) -> Result<(Grads, f64, usize)> {
    let mut g = model.graph();
    if let Some((rate, seed)) = dropout {
        g.enable_dropout(rate, seed)?;
    }
    let (nll, units) = model.sentence_nll(&mut g, &ex.source, &ex.target)?;
    g.backward(nll)?;
    Ok((g.param_grads(), g.scalar(nll), units))
}

fn mix(a: u64, b: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = a.wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gradients of the summed NLL over `examples`. Per-example results are
/// combined in input order, so the sum is identical for any thread count.
/// `dropout` carries the rate and a base seed; example `i` uses a seed
/// derived from both.
pub fn batch_gradients(
    model: &Model,
    examples: &[Example],
    dropout: Option<(f64, u64)>,
    parallel: bool,
) -> Result<GradientSum> {
    let seeded = |i: usize| dropout.map(|(r, s)| (r, mix(s, i as u64)));
    let mut total = GradientSum {
        grads: Grads::zeros_like(model.params()),
        nll: 0.0,
        units: 0,
    };
    let mut add = |(g, nll, units): (Grads, f64, usize)| {
        total.grads.accumulate(&g);
        total.nll += nll;
        total.units += units;
    };
    if parallel {
        let parts: Vec<_> = examples
            .par_iter()
            .enumerate()
            .map(|(i, ex)| example_gradient(model, ex, seeded(i)))
            .collect::<Result<_>>()?;
        parts.into_iter().for_each(&mut add);
    } else {
        for (i, ex) in examples.iter().enumerate() {
            add(example_gradient(model, ex, seeded(i))?);
        }
    }
    Ok(total)
}

/// Mean NLL per target unit without dropout.
pub fn corpus_loss(model: &Model, corpus: &[Example]) -> Result<f64> {
    let mut nll = 0.0;
    let mut units = 0;
    for ex in corpus {
        let mut g = model.graph();
        let (v, n) = model.sentence_nll(&mut g, &ex.source, &ex.target)?;
        nll += g.scalar(v);
        units += n;
    }
    if units == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    Ok(nll / units as f64)
}

/// Training progress that survives a checkpoint round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    pub epoch: usize,
    pub learning_rate: f64,
    pub history: Vec<EpochRecord>,
    pub best_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
}

/// Why [`Trainer::fit`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    Hook,
}

/// What a hook wants after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookAction {
    Continue,
    Stop,
}

pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: AdamState,
    pub progress: TrainProgress,
    /// Parameters at the best monitored loss so far.
    pub best_params: Option<ParamStore>,
    last_good: (ParamStore, AdamState),
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(model.params());
        let progress = TrainProgress {
            epoch: 0,
            learning_rate: config.learning_rate,
            history: Vec::new(),
            best_loss: None,
            best_epoch: None,
            bad_epochs: 0,
        };
        Self::assemble(model, config, adam, progress, None)
    }

    fn assemble(
        model: Model,
        config: TrainConfig,
        adam: AdamState,
        progress: TrainProgress,
        best_params: Option<ParamStore>,
    ) -> Result<Self> {
        let pool = match config.threads {
            1 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| TrainError::Config(e.to_string()))?,
            ),
        };
        let last_good = (model.params().clone(), adam.clone());
        Ok(Trainer {
            model,
            config,
            adam,
            progress,
            best_params,
            last_good,
            pool,
        })
    }

    /// Resumes from a checkpoint. `config` overrides the stored training
    /// configuration when given.
    pub fn from_checkpoint(ckpt: Checkpoint, config: Option<TrainConfig>) -> Result<Self> {
        let config = match config.or(ckpt.train_config) {
            Some(c) => c,
            None => {
                return Err(TrainError::Config(
                    "checkpoint holds no training configuration".into(),
                ))
            }
        };
        config.validate()?;
        let model = Model::from_params(ckpt.model, ckpt.params)?;
        let adam = match ckpt.optimizer {
            Some(a) => a,
            None => AdamState::new(model.params()),
        };
        let progress = ckpt.progress.unwrap_or(TrainProgress {
            epoch: 0,
            learning_rate: config.learning_rate,
            history: Vec::new(),
            best_loss: None,
            best_epoch: None,
            bad_epochs: 0,
        });
        Self::assemble(model, config, adam, progress, ckpt.best_params)
    }

    pub fn checkpoint(&self, codec: Option<crate::codec::Codec>) -> Checkpoint {
        Checkpoint {
            model: self.model.config().clone(),
            codec,
            params: self.model.params().clone(),
            optimizer: Some(self.adam.clone()),
            train_config: Some(self.config.clone()),
            progress: Some(self.progress.clone()),
            best_params: self.best_params.clone(),
        }
    }

    /// The model with the best monitored loss, or the current one.
    pub fn best_model(&self) -> Result<Model> {
        match &self.best_params {
            Some(p) => Ok(Model::from_params(self.model.config().clone(), p.clone())?),
            None => Ok(self.model.clone()),
        }
    }

    fn step(&mut self, examples: &[Example], dropout_seed: u64) -> Result<(f64, usize)> {
        let dropout = (self.config.dropout > 0.0).then_some((self.config.dropout, dropout_seed));
        let model = &self.model;
        let sum = match &self.pool {
            Some(pool) => pool.install(|| batch_gradients(model, examples, dropout, true))?,
            None => batch_gradients(model, examples, dropout, false)?,
        };
        if !sum.nll.is_finite() {
            return Err(TrainError::NonFiniteGradient("loss".into()));
        }
        let mut grads = sum.grads;
        grads.scale(1.0 / sum.units as f64);
        grads.clip_norm(self.config.clip_norm);
        adam_step(
            &mut self.adam,
            self.model.params_mut(),
            &grads,
            self.progress.learning_rate,
        )?;
        if !self.model.params().all_finite() {
            return Err(TrainError::NonFiniteGradient("updated parameters".into()));
        }
        Ok((sum.nll, sum.units))
    }

    /// Trains one epoch and updates the schedule.
    pub fn run_epoch(&mut self, train: &[Example], valid: &[Example]) -> Result<EpochRecord> {
        let start = Instant::now();
        let epoch = self.progress.epoch + 1;
        let batches = make_batches(
            train,
            self.config.batch_size,
            mix(self.config.seed, epoch as u64),
        )?;
        let mut nll = 0.0;
        let mut units = 0;
        for (b, batch) in batches.iter().enumerate() {
            let seed = mix(mix(self.config.seed ^ 0xD5, epoch as u64), b as u64);
            match self.step(&batch.examples(), seed) {
                Ok((n, u)) => {
                    nll += n;
                    units += u;
                }
                Err(e) if e.is_divergence() => {
                    let (p, a) = self.last_good.clone();
                    *self.model.params_mut() = p;
                    self.adam = a;
                    return Err(TrainError::Diverged {
                        epoch,
                        restored: self.progress.epoch,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = nll / units.max(1) as f64;
        let valid_loss = if valid.is_empty() {
            None
        } else {
            Some(corpus_loss(&self.model, valid)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            learning_rate: self.progress.learning_rate,
            wall_time: start.elapsed().as_secs_f64(),
        };
        let monitored = valid_loss.unwrap_or(train_loss);
        let p = &mut self.progress;
        p.epoch = epoch;
        p.history.push(record.clone());
        let losses: Vec<f64> = p
            .history
            .iter()
            .map(|r| r.valid_loss.unwrap_or(r.train_loss))
            .collect();
        p.learning_rate = decay_on_plateau(&self.config, p.learning_rate, &losses);
        if p.best_loss.map_or(true, |b| monitored < b) {
            p.best_loss = Some(monitored);
            p.best_epoch = Some(epoch);
            p.bad_epochs = 0;
            self.best_params = Some(self.model.params().clone());
        } else {
            p.bad_epochs += 1;
        }
        self.last_good = (self.model.params().clone(), self.adam.clone());
        Ok(record)
    }

    /// Trains until `max_epochs`, early stopping, or a hook asks to stop.
    pub fn fit<F>(
        &mut self,
        train: &[Example],
        valid: &[Example],
        mut hook: F,
    ) -> Result<StopReason>
    where
        F: FnMut(&EpochRecord, &Trainer) -> Result<HookAction>,
    {
        if train.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        while self.progress.epoch < self.config.max_epochs {
            let record = self.run_epoch(train, valid)?;
            if hook(&record, self)? == HookAction::Stop {
                return Ok(StopReason::Hook);
            }
            if self.config.patience > 0 && self.progress.bad_epochs >= self.config.patience {
                return Ok(StopReason::EarlyStopping);
            }
        }
        Ok(StopReason::MaxEpochs)
    }
}

/// Trains a fresh trainer to completion with no hook.
pub fn train(
    model: Model,
    train: &[Example],
    valid: &[Example],
    config: TrainConfig,
) -> Result<Trainer> {
    let mut t = Trainer::new(model, config)?;
    t.fit(train, valid, |_, _| Ok(HookAction::Continue))?;
    Ok(t)
}

//! Synthetic training pairs, the training loop and model checkpoints.
//!
//! Each training sample takes a template, draws a random rigid transform and a
//! noise level, and builds the source by moving and perturbing the template.
//! The network learns to map the source back onto the template.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, random_transform, RigidTransform};
use crate::losses::LossKind;
use crate::meshio::{add_gaussian_noise, farthest_point_sample, normalize_unit_box, PointCloud};
use crate::nncore::{adam_step, load_checkpoint, save_checkpoint, AdamState, Grads, Real};
use crate::pcrnet::{
    train_backward, train_backward_all, train_forward_iterative, ModelConfig, PcrNet, Variant, DEFAULT_TRAIN_UNROLL,
};

/// Which slice of the data the run covers. Only recorded, the loop treats
/// every template list the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    OneModel,
    OneCategory,
    MultiCategory,
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_model" | "one-model" => Ok(Scope::OneModel),
            "one_category" | "one-category" => Ok(Scope::OneCategory),
            "multi_category" | "multi-category" => Ok(Scope::MultiCategory),
            _ => Err("expected one_model, one_category or multi_category".into()),
        }
    }
}

/// Which unrolled iterations the loss looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Only the final estimate.
    Final,
    /// The mean loss over the estimates after every iteration.
    All,
}

impl FromStr for Supervision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final" => Ok(Supervision::Final),
            "all" => Ok(Supervision::All),
            _ => Err("expected final or all".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Widths / 8, 128 points, 50 epochs.
    Tiny,
    /// Full-size network, 1024 points, 300 epochs.
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "paper" => Ok(Preset::Paper),
            _ => Err("expected tiny or paper".into()),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Tiny => "tiny",
            Preset::Paper => "paper",
        })
    }
}

/// Training settings. Read from a flat `key = value` file by [`TrainConfig::parse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scope: Scope,
    pub preset: Preset,
    pub variant: Variant,
    pub loss: LossKind,
    pub supervision: Supervision,
    /// Points per cloud.
    pub points: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps per epoch; `0` means one pass over the templates.
    pub steps_per_epoch: usize,
    pub lr: f64,
    pub decay_rate: f64,
    /// Steps between learning-rate decays; `0` disables decay.
    pub decay_every: u64,
    /// Cap on the global L2 norm of the batch gradient; `0` disables clipping.
    #[serde(default)]
    pub clip_norm: f64,
    pub noise_lo: f64,
    pub noise_hi: f64,
    /// Unrolled iterations per training sample.
    pub unroll: usize,
    /// When above `unroll`, each sample draws its unroll count uniformly
    /// from `unroll..=unroll_max`; `0` keeps it fixed.
    pub unroll_max: usize,
    /// Maximum rotation per Euler axis, degrees.
    pub angle_range: f64,
    /// Maximum translation per axis.
    pub trans_range: f64,
    pub seed: u64,
    /// Layer widths are the full-size ones divided by this.
    pub width_divisor: usize,
    pub dropout: Real,
    /// Write a checkpoint every this many epochs; `0` writes only at the end.
    pub checkpoint_every: usize,
    pub threads: usize,
}

/// Keys accepted in a config file.
pub const CONFIG_KEYS: [&str; 24] = [
    "scope",
    "preset",
    "variant",
    "loss",
    "supervision",
    "points",
    "batch_size",
    "epochs",
    "steps_per_epoch",
    "lr",
    "decay_rate",
    "decay_every",
    "clip_norm",
    "noise_lo",
    "noise_hi",
    "unroll",
    "unroll_max",
    "angle_range",
    "trans_range",
    "seed",
    "width_divisor",
    "dropout",
    "checkpoint_every",
    "threads",
];

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper, Variant::Iterative)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset, variant: Variant) -> Self {
        let (points, epochs, width_divisor) = match preset {
            Preset::Tiny => (128, 50, 8),
            Preset::Paper => (1024, 300, 1),
        };
        TrainConfig {
            scope: Scope::MultiCategory,
            preset,
            variant,
            loss: LossKind::Emd,
            supervision: Supervision::Final,
            points,
            batch_size: 32,
            epochs,
            steps_per_epoch: 0,
            lr: 1e-3,
            decay_rate: 0.7,
            decay_every: 3_000_000,
            clip_norm: 0.0,
            noise_lo: 0.0,
            noise_hi: 0.0,
            unroll: match variant {
                Variant::Iterative => DEFAULT_TRAIN_UNROLL,
                Variant::SingleShot => 1,
            },
            unroll_max: 0,
            angle_range: 45.0,
            trans_range: 1.0,
            seed: 0,
            width_divisor,
            dropout: ModelConfig::paper(variant).dropout,
            checkpoint_every: 0,
            threads: 1,
        }
    }

    /// Parse `key = value` lines. Blank lines and `#` comments are skipped.
    /// `preset` and `variant` set the defaults; every other key overrides them
    /// regardless of order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not `key = value`", n + 1),
            })?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "unknown key".into(),
                });
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config {
                    key: key.to_string(),
                    message: "given twice".into(),
                });
            }
        }
        let preset = get(&entries, "preset")?.unwrap_or(Preset::Paper);
        let variant = get(&entries, "variant")?.unwrap_or(Variant::Iterative);
        let mut c = TrainConfig::preset(preset, variant);
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = get(&entries, stringify!($field))? {
                    c.$field = v;
                }
            )*};
        }
        set!(
            scope,
            loss,
            supervision,
            points,
            batch_size,
            epochs,
            steps_per_epoch,
            lr,
            decay_rate,
            decay_every,
            clip_norm,
            noise_lo,
            noise_hi,
            unroll,
            unroll_max,
            angle_range,
            trans_range,
            seed,
            width_divisor,
            dropout,
            checkpoint_every,
            threads
        );
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.points == 0 {
            return bad("points", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.unroll == 0 {
            return bad("unroll", "must be at least 1");
        }
        if self.unroll_max != 0 && self.unroll_max < self.unroll {
            return bad("unroll_max", "must be 0 or at least unroll");
        }
        if self.width_divisor == 0 {
            return bad("width_divisor", "must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be a non-negative number");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate", "must be in (0, 1]");
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return bad("clip_norm", "must be a non-negative number");
        }
        if !(self.noise_lo >= 0.0 && self.noise_hi >= self.noise_lo && self.noise_hi.is_finite()) {
            return bad("noise_hi", "noise range must satisfy 0 <= noise_lo <= noise_hi");
        }
        if !(self.angle_range >= 0.0 && self.angle_range.is_finite()) {
            return bad("angle_range", "must be non-negative");
        }
        if !(self.trans_range >= 0.0 && self.trans_range.is_finite()) {
            return bad("trans_range", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must be in [0, 1)");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut m = ModelConfig::scaled(self.variant, self.width_divisor);
        m.dropout = self.dropout;
        m
    }

    /// Render as a config file that [`TrainConfig::parse`] reads back.
    pub fn to_config_text(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let v = &json[key];
            let text = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
            out.push_str(&format!("{key} = {text}\n"));
        }
        out
    }
}

fn get<T: FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    entries
        .get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| Error::Config {
                key: key.to_string(),
                message: format!("cannot parse `{v}`: {e}"),
            })
        })
        .transpose()
}

/// One synthetic pair: `source = noise(gt(template))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub template: PointCloud,
    pub source: PointCloud,
    pub gt: RigidTransform,
    pub sigma: f64,
}

/// Draw a transform and noise level and build the source from `template`.
pub fn make_sample<R: Rng + ?Sized>(template: &PointCloud, rng: &mut R, config: &TrainConfig) -> Result<TrainSample> {
    let gt = random_transform(rng, config.angle_range, config.trans_range);
    let sigma = if config.noise_hi > config.noise_lo {
        rng.random_range(config.noise_lo..config.noise_hi)
    } else {
        config.noise_lo
    };
    let source = add_gaussian_noise(&apply_transform(&gt, template), sigma, rng)?;
    Ok(TrainSample {
        template: template.clone(),
        source,
        gt,
        sigma,
    })
}

/// Reduce clouds to `n` points by farthest point sampling and renormalize.
/// Clouds that already have `n` points pass through unchanged.
pub fn prepare_templates(clouds: Vec<PointCloud>, n: usize) -> Result<Vec<PointCloud>> {
    clouds
        .into_iter()
        .map(|c| match c.len() {
            l if l == n => Ok(c),
            l if l > n => Ok(normalize_unit_box(&farthest_point_sample(&c, n)?)),
            l => Err(Error::Config {
                key: "points".into(),
                message: format!("a template has only {l} points, {n} requested"),
            }),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,lr\n");
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.mean_loss, r.lr));
    }
    out
}

/// Model, optimizer and history: everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: PcrNet,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, u64::MAX, 0));
        Ok(TrainState {
            net: PcrNet::new(config.model_config(), &mut rng)?,
            adam: AdamState::new(config.lr).with_decay(config.decay_rate, config.decay_every),
            history: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn save(&self, dir: &Path, config: &TrainConfig) -> Result<()> {
        let meta = serde_json::json!({
            "model": self.net.config,
            "train": config,
            "history": self.history,
        });
        save_checkpoint(dir, &self.net.params, &self.adam, meta)
    }

    /// Load a training checkpoint. The stored model must match `config`.
    pub fn load(dir: &Path, config: &TrainConfig) -> Result<Self> {
        let (net, ckpt) = load_parts(dir)?;
        if net.config != config.model_config() {
            return Err(Error::Checkpoint(
                "checkpoint model differs from the configured model".into(),
            ));
        }
        let history = serde_json::from_value(ckpt.meta["history"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad history in manifest: {e}")))?;
        Ok(TrainState {
            net,
            adam: ckpt.adam,
            history,
        })
    }
}

fn load_parts(dir: &Path) -> Result<(PcrNet, crate::nncore::Checkpoint)> {
    let ckpt = load_checkpoint(dir)?;
    let model: ModelConfig = serde_json::from_value(ckpt.meta["model"].clone())
        .map_err(|e| Error::Checkpoint(format!("manifest lacks a model description: {e}")))?;
    let net = PcrNet::from_params(model, ckpt.params.clone())?;
    Ok((net, ckpt))
}

/// Load just the model from a checkpoint directory.
pub fn load_model(dir: &Path) -> Result<PcrNet> {
    load_parts(dir).map(|(net, _)| net)
}

/// SplitMix64 finalizer over the combined inputs, used to derive independent
/// per-sample generator seeds.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(31);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss and parameter gradients for one sample.
fn sample_grads(net: &PcrNet, template: &PointCloud, config: &TrainConfig, seed: u64) -> Result<(f64, Grads)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = make_sample(template, &mut rng, config)?;
    let unroll = if config.unroll_max > config.unroll {
        rng.random_range(config.unroll..=config.unroll_max)
    } else {
        config.unroll
    };
    let (est, cache) = train_forward_iterative(net, &sample.source, &sample.template, unroll, &mut rng)?;
    let mut grads = net.params.grads_like();
    match config.supervision {
        Supervision::Final => {
            let loss = config.loss.evaluate(&est, &sample.template)?;
            if loss.value.is_finite() {
                train_backward(net, &cache, &loss.grad, &mut grads)?;
            }
            Ok((loss.value, grads))
        }
        Supervision::All => {
            let outputs = cache.outputs();
            let k = outputs.len() as f64;
            let mut value = 0.0;
            let mut losses = Vec::with_capacity(outputs.len());
            for out in &outputs {
                let mut l = config.loss.evaluate(out, &sample.template)?;
                value += l.value / k;
                l.grad.iter_mut().for_each(|g| *g /= k);
                losses.push(l);
            }
            if value.is_finite() {
                let d: Vec<Option<&[Vector3<f64>]>> = losses.iter().map(|l| Some(l.grad.as_slice())).collect();
                train_backward_all(net, &cache, &d, &mut grads)?;
            }
            Ok((value, grads))
        }
    }
}

fn steps_per_epoch(config: &TrainConfig, n_templates: usize) -> usize {
    if config.steps_per_epoch > 0 {
        config.steps_per_epoch
    } else {
        n_templates.div_ceil(config.batch_size)
    }
}

/// Run epochs until `config.epochs` are recorded in `state.history`.
///
/// Every sample draws from its own generator seeded by the run seed, the
/// global step and its batch position, and per-sample gradients are summed in
/// batch order, so results do not depend on the thread count. A checkpoint is
/// written to `ckpt_dir` every `checkpoint_every` epochs and after the last one.
pub fn train(
    mut state: TrainState,
    templates: &[PointCloud],
    config: &TrainConfig,
    ckpt_dir: Option<&Path>,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainState> {
    config.validate()?;
    if templates.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one template".into()));
    }
    if let Some(t) = templates.iter().find(|t| t.len() != config.points) {
        return Err(Error::Config {
            key: "points".into(),
            message: format!("template has {} points, config expects {}", t.len(), config.points),
        });
    }
    if state.net.config != config.model_config() {
        return Err(Error::InvalidArgument(
            "model does not match the training config".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let steps = steps_per_epoch(config, templates.len());
    let b = config.batch_size;

    while state.history.len() < config.epochs {
        let epoch = state.history.len() + 1;
        let mut order: Vec<usize> = (0..templates.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(config.seed, epoch as u64, u64::MAX)));
        let mut loss_sum = 0.0;
        for s in 0..steps {
            let global = state.adam.step;
            let jobs: Vec<(usize, u64)> = (0..b)
                .map(|k| (order[(s * b + k) % order.len()], mix(config.seed, global, k as u64)))
                .collect();
            let net = &state.net;
            let results: Vec<Result<(f64, Grads)>> = if config.threads > 1 {
                pool.install(|| {
                    jobs.par_iter()
                        .map(|&(t, seed)| sample_grads(net, &templates[t], config, seed))
                        .collect()
                })
            } else {
                jobs.iter()
                    .map(|&(t, seed)| sample_grads(net, &templates[t], config, seed))
                    .collect()
            };
            let mut total = state.net.params.grads_like();
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                total.add_assign(&g);
            }
            batch_loss /= b as f64;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: global + 1,
                });
            }
            loss_sum += batch_loss;
            let mut scale = 1.0 / b as f64;
            if config.clip_norm > 0.0 {
                let norm = total.flat().iter().map(|&g| (g as f64).powi(2)).sum::<f64>().sqrt() * scale;
                if norm > config.clip_norm {
                    scale *= config.clip_norm / norm;
                }
            }
            state.net.params.accumulate_grads(&total, scale as Real)?;
            adam_step(&mut state.net.params, &mut state.adam);
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / steps as f64,
            lr: state.adam.effective_lr(state.adam.step),
        };
        state.history.push(record);
        progress(&record);
        if let Some(dir) = ckpt_dir {
            let periodic = config.checkpoint_every > 0 && epoch.is_multiple_of(config.checkpoint_every);
            if periodic || epoch == config.epochs {
                state.save(dir, config)?;
            }
        }
    }
    if let (Some(dir), 0) = (ckpt_dir, config.epochs) {
        state.save(dir, config)?;
    }
    Ok(state)
}

//! PCRNet registration: Siamese PointNet features, a fully connected pose
//! head, and the single-shot and iterative registration loops.

mod head;
mod pose_grad;
mod register;
mod unrolled;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encoder_layer_specs, PAPER_ENCODER_WIDTHS};
use crate::error::{Error, Result};
use crate::geometry::{compose_chain, RigidTransform};
use crate::nncore::{init_params, LayerSpec, ParamStore, Real};

pub use head::{head_backward, head_forward, HeadCache, OUTPUT_LAYER as OUTPUT_LAYER_NAME};
pub use pose_grad::{apply_pose_backward, PoseForward};
pub use register::{register_iterative, register_single_shot, DEFAULT_EPS, DEFAULT_MAX_ITER};
pub use unrolled::{train_backward, train_backward_all, train_forward_iterative, UnrolledCache, DEFAULT_TRAIN_UNROLL};

pub const SINGLE_SHOT_HEAD: [usize; 5] = [1024, 1024, 512, 512, 256];
pub const ITERATIVE_HEAD: [usize; 3] = [1024, 512, 256];
pub const POSE_SIZE: usize = 7;
pub const DEFAULT_DROPOUT: Real = 0.5;
/// Scale applied to the output layer's initial weights.
pub const OUTPUT_INIT_SCALE: Real = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SingleShot,
    Iterative,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::SingleShot => "single_shot",
            Variant::Iterative => "iterative",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_shot" => Ok(Variant::SingleShot),
            "iterative" => Ok(Variant::Iterative),
            other => Err(Error::InvalidArgument(format!("unknown model variant `{other}`"))),
        }
    }
}

/// Layer widths of the encoder and head, plus dropout before the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder: Vec<usize>,
    pub head: Vec<usize>,
    /// `0` means no dropout layer.
    pub dropout: Real,
}

impl ModelConfig {
    pub fn paper(variant: Variant) -> Self {
        match variant {
            Variant::SingleShot => Self {
                variant,
                encoder: PAPER_ENCODER_WIDTHS.to_vec(),
                head: SINGLE_SHOT_HEAD.to_vec(),
                dropout: 0.0,
            },
            Variant::Iterative => Self {
                variant,
                encoder: PAPER_ENCODER_WIDTHS.to_vec(),
                head: ITERATIVE_HEAD.to_vec(),
                dropout: DEFAULT_DROPOUT,
            },
        }
    }

    /// Every width divided by `divisor` (at least 1).
    pub fn scaled(variant: Variant, divisor: usize) -> Self {
        let mut c = Self::paper(variant);
        let d = divisor.max(1);
        c.encoder.iter_mut().for_each(|w| *w = (*w / d).max(1));
        c.head.iter_mut().for_each(|w| *w = (*w / d).max(1));
        c
    }

    pub fn tiny(variant: Variant) -> Self {
        Self::scaled(variant, 8)
    }

    pub fn feature_dim(&self) -> usize {
        *self.encoder.last().expect("encoder has layers")
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = encoder_layer_specs(&self.encoder);
        let mut fan_in = 2 * self.feature_dim();
        for (i, &w) in self.head.iter().enumerate() {
            specs.push(LayerSpec::new(head::hidden_name(i), fan_in, w));
            fan_in = w;
        }
        specs.push(LayerSpec::new(head::OUTPUT_LAYER, fan_in, POSE_SIZE));
        specs
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.encoder.contains(&0) || self.head.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Model configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PcrNet {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl PcrNet {
    /// Fresh He-initialized model. The output layer's weights are shrunk and
    /// its quaternion `w` bias set to 1, so an untrained head predicts a pose
    /// close to the identity.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = init_params(&config.layer_specs(), rng)?;
        let out = params.layer_mut(head::OUTPUT_LAYER).expect("output layer");
        out.weight.data_mut().iter_mut().for_each(|w| *w *= OUTPUT_INIT_SCALE);
        out.bias[3] = 1.0;
        Ok(Self { config, params })
    }

    /// Pair a configuration with existing parameters, checking every shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = config.layer_specs();
        if specs.len() != params.layers().len() {
            return Err(Error::Checkpoint(format!(
                "{} model expects {} layers, parameters have {}",
                config.variant,
                specs.len(),
                params.layers().len()
            )));
        }
        for (s, l) in specs.iter().zip(params.layers()) {
            if s.name != l.name || s.fan_in != l.fan_in() || s.fan_out != l.fan_out() {
                return Err(Error::Checkpoint(format!(
                    "layer `{}` is {}×{}, expected `{}` {}×{}",
                    l.name,
                    l.fan_in(),
                    l.fan_out(),
                    s.name,
                    s.fan_in,
                    s.fan_out
                )));
            }
        }
        Ok(Self { config, params })
    }
}

/// Outcome of one registration call.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps the source onto the template.
    pub transform: RigidTransform,
    /// Incremental transforms, first iteration first.
    pub per_iteration: Vec<RigidTransform>,
    pub iterations_used: usize,
    pub converged: bool,
    pub elapsed_secs: f64,
}

impl RegistrationResult {
    /// Distance (homogeneous Frobenius) between `transform` and the
    /// recomposed `T(n) × … × T(1)` chain.
    pub fn composition_residual(&self) -> f64 {
        let chained = compose_chain(&self.per_iteration);
        (chained.to_homogeneous() - self.transform.to_homogeneous()).norm()
    }
}

//! Training losses on point clouds: exact Earth Mover Distance and Chamfer distance.

mod chamfer;
mod emd;
mod hungarian;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use chamfer::chamfer;
pub use emd::{emd, emd_assignment};
pub use hungarian::hungarian;

/// A loss value and its gradient with respect to every point of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<Vector3<f64>>,
}

/// Loss selector for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Emd,
    Chamfer,
}

impl LossKind {
    pub fn evaluate(self, est: &crate::PointCloud, template: &crate::PointCloud) -> crate::Result<LossValue> {
        match self {
            LossKind::Emd => emd(est, template),
            LossKind::Chamfer => chamfer(est, template),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Emd => "emd",
            LossKind::Chamfer => "chamfer",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "emd" => Ok(LossKind::Emd),
            "chamfer" => Ok(LossKind::Chamfer),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss `{other}` (expected emd or chamfer)"
            ))),
        }
    }
}

//! Loss terms of the adaptation objective and the discriminator conditioning maps.
//!
//! The combined objective minimised by one optimizer is
//!
//! ```text
//! L = L_clc + β L_IM + γ L_MCC + δ L_MMD + η L_PLMMD + L_dis
//! ```
//!
//! where `L_dis` reaches the feature extractor and classifier only through a
//! gradient-reversal node scaled by `λ`, so minimising it trains the
//! discriminator while pushing the features the other way.

mod classification;
mod conditioning;
mod entropy;
mod kernel;
mod plmmd;

pub use classification::{cross_entropy, discriminator_bce, one_hot};
pub use conditioning::{ConditioningKind, ConditioningMap, MULTILINEAR_LIMIT, RANDOMIZED_DIM};
pub use entropy::{info_max_loss, mcc_loss, ClassConfusionMatrix};
pub use kernel::{gaussian_kernel_matrix, mmd_loss, Bandwidth, KernelSpec};
pub use plmmd::{plmmd_loss, plmmd_weights, PlmmdWeights};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Mixing coefficients of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Peak gradient-reversal coefficient.
    pub lambda_adv: f64,
    /// Information maximisation.
    pub beta: f64,
    /// Minimum class confusion.
    pub gamma: f64,
    /// MMD.
    pub delta: f64,
    /// Pseudo-label MMD.
    pub eta: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        lambda_adv: 0.0,
        beta: 0.0,
        gamma: 0.0,
        delta: 0.0,
        eta: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda_adv),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("eta", self.eta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Graph nodes of the individual loss terms for one step.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub clc: Var,
    /// Discriminator BCE, already routed through gradient reversal.
    pub dis: Option<Var>,
    pub im: Var,
    pub mcc: Var,
    pub mmd: Var,
    pub plmmd: Var,
}

/// Unweighted per-term values, for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub clc: f64,
    pub dis: f64,
    pub im: f64,
    pub mcc: f64,
    pub mmd: f64,
    pub plmmd: f64,
}

/// Weighted sum of the terms. `λ` is not applied here; it lives in the
/// reversal node upstream of `terms.dis`.
pub fn total_loss(g: &mut Graph, terms: &LossTerms, weights: &LossWeights) -> Result<(Var, LossBreakdown)> {
    weights.validate()?;
    let read = |g: &Graph, term: &'static str, v: Var| -> Result<f64> {
        let value = g.value(v).item();
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteLoss { term, value })
        }
    };
    let breakdown = LossBreakdown {
        clc: read(g, "clc", terms.clc)?,
        dis: match terms.dis {
            Some(d) => read(g, "dis", d)?,
            None => 0.0,
        },
        im: read(g, "im", terms.im)?,
        mcc: read(g, "mcc", terms.mcc)?,
        mmd: read(g, "mmd", terms.mmd)?,
        plmmd: read(g, "plmmd", terms.plmmd)?,
    };

    let mut total = terms.clc;
    for (v, w) in [
        (terms.im, weights.beta),
        (terms.mcc, weights.gamma),
        (terms.mmd, weights.delta),
        (terms.plmmd, weights.eta),
    ] {
        let scaled = g.scale(v, w)?;
        total = g.add(total, scaled)?;
    }
    if let Some(d) = terms.dis {
        total = g.add(total, d)?;
    }
    Ok((total, breakdown))
}

//! Finite-difference checks for every loss term on small seeded inputs.
//!
//! Each check perturbs one input tensor (logits or features, batch 8) and
//! compares the tape gradient with central differences. Kernel bandwidths
//! are frozen at the median of the unperturbed inputs, since the median is
//! a statistic that is not differentiated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, Graph, Tensor, Var};
use crate::data::random_matrix;
use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy, discriminator_bce, info_max_loss, mcc_loss, mmd_loss, one_hot, plmmd_loss, plmmd_weights, Bandwidth,
    KernelSpec,
};

pub const LOSS_NAMES: [&str; 6] = ["ce", "dis", "im", "mcc", "mmd", "plmmd"];
pub const BATCH: usize = 8;
pub const FEATURES: usize = 6;
pub const CLASSES: usize = 4;
pub const STEP: f64 = 1e-6;
pub const THRESHOLD: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckResult {
    pub loss: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn frozen_kernel(a: &Tensor, b: &Tensor) -> KernelSpec {
    let default = KernelSpec::default();
    KernelSpec {
        bandwidth: Bandwidth::Fixed(default.base_bandwidth(&[a, b])),
        ..default
    }
}

/// Runs the named check (`ce`, `dis`, `im`, `mcc`, `mmd`, `plmmd`).
pub fn check_loss(name: &str, seed: u64) -> Result<GradCheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = random_matrix(BATCH, CLASSES, -2.0, 2.0, &mut rng);
    let fs = random_matrix(BATCH, FEATURES, -1.0, 1.0, &mut rng);
    let ft = random_matrix(BATCH, FEATURES, -0.5, 1.5, &mut rng);
    let disc_w = random_matrix(FEATURES, 1, -1.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..BATCH).map(|i| (i * 3 + seed as usize) % CLASSES).collect();

    let err = match name {
        "ce" => grad_check(|g, x| cross_entropy(g, x, &labels), &logits, STEP)?,
        "dis" => grad_check(
            |g, x| {
                let w = g.constant(disc_w.clone())?;
                let t = g.constant(ft.clone())?;
                let zs = g.matmul(x, w)?;
                let zt = g.matmul(t, w)?;
                let ds = g.sigmoid(zs)?;
                let dt = g.sigmoid(zt)?;
                discriminator_bce(g, ds, dt)
            },
            &fs,
            STEP,
        )?,
        "im" => grad_check(
            |g, x| {
                let p = g.softmax_rows(x)?;
                info_max_loss(g, p)
            },
            &logits,
            STEP,
        )?,
        "mcc" => grad_check(|g, x| mcc_loss(g, x, 2.5), &logits, STEP)?,
        "mmd" => {
            let spec = frozen_kernel(&fs, &ft);
            grad_check(
                |g, x| {
                    let t = g.constant(ft.clone())?;
                    mmd_loss(g, x, t, &spec)
                },
                &fs,
                STEP,
            )?
        }
        "plmmd" => {
            let spec = frozen_kernel(&fs, &ft);
            // Every other target row is accepted, cycling through classes.
            let mut pseudo = Tensor::zeros(&[BATCH, CLASSES]);
            for i in (0..BATCH).step_by(2) {
                pseudo.data_mut()[i * CLASSES + (i / 2) % CLASSES] = 1.0;
            }
            let weights = plmmd_weights(&one_hot(&labels, CLASSES)?, &pseudo)?;
            grad_check(
                |g: &mut Graph, x: Var| {
                    let t = g.constant(ft.clone())?;
                    plmmd_loss(g, x, t, &weights, &spec)
                },
                &fs,
                STEP,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown loss `{other}` (expected one of {})",
                LOSS_NAMES.join(", ")
            )))
        }
    };
    Ok(GradCheckResult {
        loss: name.to_string(),
        max_rel_error: err,
        threshold: THRESHOLD,
        passed: err < THRESHOLD,
    })
}

/// Runs every check, or only `filter` when given.
pub fn run_suite(filter: Option<&str>, seed: u64) -> Result<Vec<GradCheckResult>> {
    match filter {
        Some(name) => Ok(vec![check_loss(name, seed)?]),
        None => LOSS_NAMES.iter().map(|n| check_loss(n, seed)).collect(),
    }
}

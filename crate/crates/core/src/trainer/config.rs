use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{ConditioningKind, KernelSpec, LossWeights};
use crate::models::{Architecture, DISCRIMINATOR_HIDDEN};

use super::optim::AdamWConfig;

/// When target pseudo-labels are recomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelRefresh {
    /// Once per epoch over the whole target set.
    PerEpoch,
    /// From the current batch's predictions at every step.
    PerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_weights: LossWeights,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub pseudo_label_warmup_epochs: usize,
    pub pseudo_label_confidence: f64,
    pub pseudo_label_refresh: PseudoLabelRefresh,
    pub mcc_temperature: f64,
    /// `None` picks multilinear or randomized from the feature/class sizes.
    pub conditioning: Option<ConditioningKind>,
    pub kernel: KernelSpec,
    pub stage_widths: Vec<usize>,
    pub feature_dim: usize,
    pub discriminator_hidden: usize,
    pub seed: u64,
}

/// Names accepted by [`TrainConfig::preset`].
pub const PRESETS: [&str; 5] = ["desk-default", "office31", "officehome", "visda", "domainnet"];

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_weights: LossWeights {
                lambda_adv: 1.0,
                beta: 0.1,
                gamma: 0.3,
                delta: 0.25,
                eta: 0.25,
            },
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 30,
            batch_size: 32,
            pseudo_label_warmup_epochs: 2,
            pseudo_label_confidence: 0.8,
            pseudo_label_refresh: PseudoLabelRefresh::PerEpoch,
            mcc_temperature: 2.5,
            conditioning: None,
            kernel: KernelSpec::default(),
            stage_widths: vec![64, 48, 32],
            feature_dim: 32,
            discriminator_hidden: DISCRIMINATOR_HIDDEN,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Named hyper-parameter sets. The benchmark presets carry the published
    /// loss weights with lr 1e-5, batch 32, weight decay 1e-3 and 50 epochs.
    pub fn preset(name: &str) -> Result<Self> {
        let published = |beta: f64, gamma: f64, delta: f64, eta: f64| TrainConfig {
            loss_weights: LossWeights {
                lambda_adv: 1.0,
                beta,
                gamma,
                delta,
                eta,
            },
            learning_rate: 1e-5,
            weight_decay: 1e-3,
            batch_size: 32,
            epochs: 50,
            ..TrainConfig::default()
        };
        match name {
            "desk-default" => Ok(TrainConfig::default()),
            "office31" => Ok(published(0.05, 0.1, 0.15, 0.15)),
            "officehome" => Ok(published(0.05, 0.21, 0.25, 0.25)),
            "visda" => Ok(published(0.05, 0.3, 0.25, 0.25)),
            "domainnet" => Ok(published(0.05, 0.01, 0.2, 0.25)),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        self.kernel.validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail("learning rate must be > 0");
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return fail("weight decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return fail("adam epsilon must be > 0");
        }
        if self.batch_size == 0 {
            return fail("batch size must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.pseudo_label_confidence) {
            return fail("pseudo-label confidence must lie in [0, 1]");
        }
        if !(self.mcc_temperature > 0.0) || !self.mcc_temperature.is_finite() {
            return fail("mcc temperature must be > 0");
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) || self.feature_dim == 0 {
            return fail("stage widths and feature dim must be positive");
        }
        if self.discriminator_hidden == 0 {
            return fail("discriminator hidden width must be positive");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn architecture(&self, input_dim: usize, classes: usize) -> Architecture {
        Architecture {
            input_dim,
            classes,
            stage_widths: self.stage_widths.clone(),
            feature_dim: self.feature_dim,
            discriminator_hidden: self.discriminator_hidden,
            conditioning: self
                .conditioning
                .unwrap_or_else(|| ConditioningKind::default_for(self.feature_dim, classes)),
        }
    }
}

/// Partial config; every present field replaces the base value. Used for
/// JSON config files and command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub preset: Option<String>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub pseudo_label_warmup_epochs: Option<usize>,
    pub pseudo_label_confidence: Option<f64>,
    pub pseudo_label_refresh: Option<PseudoLabelRefresh>,
    pub mcc_temperature: Option<f64>,
    pub conditioning: Option<ConditioningKind>,
    pub kernel: Option<KernelSpec>,
    pub stage_widths: Option<Vec<usize>>,
    pub feature_dim: Option<usize>,
    pub discriminator_hidden: Option<usize>,
    pub seed: Option<u64>,
}

impl TrainOverrides {
    /// `self` wins over `lower` field by field.
    pub fn or(self, lower: TrainOverrides) -> TrainOverrides {
        macro_rules! pick {
            ($($f:ident),*) => { TrainOverrides { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            preset,
            lambda,
            beta,
            gamma,
            delta,
            eta,
            learning_rate,
            weight_decay,
            adam_beta1,
            adam_beta2,
            epochs,
            batch_size,
            pseudo_label_warmup_epochs,
            pseudo_label_confidence,
            pseudo_label_refresh,
            mcc_temperature,
            conditioning,
            kernel,
            stage_widths,
            feature_dim,
            discriminator_hidden,
            seed
        )
    }

    /// Starts from the named preset (default `desk-default`) and applies
    /// every present field, then validates.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::preset(self.preset.as_deref().unwrap_or("desk-default"))?;
        let w = &mut c.loss_weights;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(w.lambda_adv, self.lambda);
        set!(w.beta, self.beta);
        set!(w.gamma, self.gamma);
        set!(w.delta, self.delta);
        set!(w.eta, self.eta);
        set!(c.learning_rate, self.learning_rate);
        set!(c.weight_decay, self.weight_decay);
        set!(c.adam_beta1, self.adam_beta1);
        set!(c.adam_beta2, self.adam_beta2);
        set!(c.epochs, self.epochs);
        set!(c.batch_size, self.batch_size);
        set!(c.pseudo_label_warmup_epochs, self.pseudo_label_warmup_epochs);
        set!(c.pseudo_label_confidence, self.pseudo_label_confidence);
        set!(c.pseudo_label_refresh, self.pseudo_label_refresh);
        set!(c.mcc_temperature, self.mcc_temperature);
        set!(c.kernel, self.kernel);
        set!(c.stage_widths, self.stage_widths);
        set!(c.feature_dim, self.feature_dim);
        set!(c.discriminator_hidden, self.discriminator_hidden);
        set!(c.seed, self.seed);
        if self.conditioning.is_some() {
            c.conditioning = self.conditioning;
        }
        c.validate()?;
        Ok(c)
    }
}

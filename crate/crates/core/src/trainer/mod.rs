//! The adaptation training loop.
//!
//! Each step runs one forward pass over a source and a target batch, builds
//! every loss term, and applies a single AdamW update to all parameters.
//! The discriminator sees the conditioned features through a gradient
//! reversal node, so the same backward pass trains it to separate domains
//! and pushes the extractor and classifier to confuse it.

mod ablation;
mod checkpoint;
mod config;
mod eval;
mod metrics;
mod optim;
mod pseudo;

pub use ablation::{ladder, run_ablation, AblationRow, AblationTable};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{PseudoLabelRefresh, TrainConfig, TrainOverrides, PRESETS};
pub use eval::{argmax_rows, discriminator_accuracy, evaluate, proxy_a_distance, score, EvalReport};
pub use metrics::{write_embeddings, MetricsRecord, MetricsWriter};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use pseudo::{update_pseudo_labels, PseudoLabelState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::data::{paired_batch_indices, paired_batches, Batch, Dataset, Domain};
use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy, discriminator_bce, info_max_loss, mcc_loss, mmd_loss, one_hot, plmmd_loss, plmmd_weights,
    total_loss, LossBreakdown, LossTerms,
};
use crate::models::{ClassifierHead, Networks};

const INIT_STREAM_SALT: u64 = 0x1D41_0000_0000_0001;

/// Adversarial ramp `λ_max · (2 / (1 + e^{-10p}) - 1)`. Progress outside
/// `[0, 1]` is clamped with a warning.
pub fn lambda_schedule(progress: f64, lambda_max: f64) -> f64 {
    let p = if (0.0..=1.0).contains(&progress) {
        progress
    } else {
        log::warn!("lambda schedule progress {progress} outside [0, 1]; clamping");
        if progress.is_nan() {
            0.0
        } else {
            progress.clamp(0.0, 1.0)
        }
    };
    lambda_max * (2.0 / (1.0 + (-10.0 * p).exp()) - 1.0)
}

/// Result of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub losses: LossBreakdown,
    pub lambda_eff: f64,
    /// Fraction of the target batch with an accepted pseudo-label.
    pub acceptance_rate: f64,
}

pub struct Trainer {
    config: TrainConfig,
    nets: Networks,
    optimizer: OptimizerState,
    epochs_completed: usize,
}

impl Trainer {
    /// Fresh networks seeded from `config.seed`.
    pub fn new(config: TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        let nets = init_networks(&config, input_dim, classes)?;
        let optimizer = OptimizerState::new(nets.named_params().into_iter().map(|(_, t)| t));
        Ok(Trainer {
            config,
            nets,
            optimizer,
            epochs_completed: 0,
        })
    }

    pub fn from_parts(config: TrainConfig, nets: Networks, optimizer: OptimizerState, epochs_completed: usize) -> Self {
        Trainer {
            config,
            nets,
            optimizer,
            epochs_completed,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn networks(&self) -> &Networks {
        &self.nets
    }

    pub fn networks_mut(&mut self) -> &mut Networks {
        &mut self.nets
    }

    pub fn optimizer_state(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    /// One forward/backward pass and AdamW update.
    ///
    /// `pseudo` is the per-epoch pseudo-label state indexed by target row;
    /// it is ignored when the config refreshes pseudo-labels per step.
    pub fn train_step(
        &mut self,
        source: &Batch,
        target: &Batch,
        lambda_eff: f64,
        pseudo: Option<&PseudoLabelState>,
    ) -> Result<StepOutcome> {
        let cfg = &self.config;
        let k = self.nets.classes();
        let labels = source
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config("source batch has no labels".into()))?;

        let mut g = Graph::new();
        let vars = self.nets.bind(&mut g)?;
        let xs = g.constant(source.features.clone())?;
        let xt = g.constant(target.features.clone())?;

        let fs = vars.extractor.forward(&mut g, xs)?;
        let ft = vars.extractor.forward(&mut g, xt)?;
        let logits_s = ClassifierHead::classify(&vars.head, &mut g, fs)?;
        let logits_t = ClassifierHead::classify(&vars.head, &mut g, ft)?;
        let clc = cross_entropy(&mut g, logits_s, labels)?;

        let ps = g.softmax_rows(logits_s)?;
        let pt = g.softmax_rows(logits_t)?;
        let hs = self.nets.conditioning.condition(&mut g, fs, ps)?;
        let ht = self.nets.conditioning.condition(&mut g, ft, pt)?;
        let rs = g.grad_reverse(hs, lambda_eff)?;
        let rt = g.grad_reverse(ht, lambda_eff)?;
        let ds = vars.discriminator.discriminate(&mut g, rs)?;
        let dt = vars.discriminator.discriminate(&mut g, rt)?;
        let dis = discriminator_bce(&mut g, ds, dt)?;

        let im = info_max_loss(&mut g, pt)?;
        let mcc = mcc_loss(&mut g, logits_t, cfg.mcc_temperature)?;
        let mmd = mmd_loss(&mut g, fs, ft, &cfg.kernel)?;

        let (target_rows, acceptance_rate) = match cfg.pseudo_label_refresh {
            PseudoLabelRefresh::PerEpoch => match pseudo {
                Some(state) => {
                    let rows = state.rows(&target.indices, k)?;
                    let accepted = target.indices.iter().filter(|&&i| state.accepted[i]).count();
                    (rows, accepted as f64 / target.indices.len() as f64)
                }
                None => (Tensor::zeros(&[target.indices.len(), k]), 0.0),
            },
            PseudoLabelRefresh::PerStep => {
                let state = update_pseudo_labels(
                    g.value(pt),
                    self.epochs_completed,
                    cfg.pseudo_label_warmup_epochs,
                    cfg.pseudo_label_confidence,
                )?;
                let all: Vec<usize> = (0..target.indices.len()).collect();
                (state.rows(&all, k)?, state.acceptance_rate())
            }
        };
        let weights = plmmd_weights(&one_hot(labels, k)?, &target_rows)?;
        let plmmd = plmmd_loss(&mut g, fs, ft, &weights, &cfg.kernel)?;

        let terms = LossTerms {
            clc,
            dis: Some(dis),
            im,
            mcc,
            mmd,
            plmmd,
        };
        let (total, losses) = total_loss(&mut g, &terms, &cfg.loss_weights)?;
        g.backward(total)?;

        let grads = vars.grads(&g);
        let names: Vec<String> = self.nets.named_params().into_iter().map(|(n, _)| n).collect();
        let opt = cfg.optimizer();
        adamw_step(&mut self.nets.params_mut(), &grads, &names, &mut self.optimizer, &opt)?;

        Ok(StepOutcome {
            losses,
            lambda_eff,
            acceptance_rate,
        })
    }

    /// Runs the next epoch and returns its metrics.
    pub fn run_epoch(&mut self, source: &Dataset, target: &Dataset) -> Result<MetricsRecord> {
        check_pair(&self.nets, source, target)?;
        let cfg = self.config.clone();
        let epoch = self.epochs_completed;
        let pairs = paired_batches(source, target, cfg.batch_size, cfg.seed, epoch as u64)?;
        let total_steps = (pairs.len() * cfg.epochs.max(1)) as f64;

        let pseudo = match cfg.pseudo_label_refresh {
            PseudoLabelRefresh::PerEpoch => {
                let (_, logits) = self.nets.predict(&target.feature_tensor()?)?;
                let probs = softmax_rows(&logits);
                Some(update_pseudo_labels(
                    &probs,
                    epoch,
                    cfg.pseudo_label_warmup_epochs,
                    cfg.pseudo_label_confidence,
                )?)
            }
            PseudoLabelRefresh::PerStep => None,
        };

        let mut sum = LossBreakdown::default();
        let mut acceptance = 0.0;
        let mut lambda_eff = 0.0;
        for (i, (sb, tb)) in pairs.iter().enumerate() {
            let progress = (epoch * pairs.len() + i) as f64 / total_steps;
            lambda_eff = lambda_schedule(progress.min(1.0), cfg.loss_weights.lambda_adv);
            let out = self.train_step(sb, tb, lambda_eff, pseudo.as_ref())?;
            add_breakdown(&mut sum, &out.losses);
            acceptance += out.acceptance_rate;
        }
        let steps = pairs.len() as f64;
        mean_breakdown(&mut sum, steps);
        self.epochs_completed += 1;

        let src_eval = evaluate(&self.nets, source)?;
        let tgt_eval = evaluate(&self.nets, target)?;
        let disc_acc = discriminator_accuracy(&self.nets, source, target)?;
        Ok(MetricsRecord {
            epoch,
            losses: sum,
            lambda_eff,
            source_accuracy: src_eval.accuracy,
            target_accuracy: tgt_eval.accuracy,
            target_per_class_accuracy: tgt_eval.per_class,
            pseudo_label_acceptance_rate: match &pseudo {
                Some(p) => p.acceptance_rate(),
                None => acceptance / steps,
            },
            proxy_a_distance: proxy_a_distance(disc_acc),
        })
    }

    /// Trains until `config.epochs` epochs are complete, calling `on_epoch`
    /// after each one.
    pub fn fit(
        &mut self,
        source: &Dataset,
        target: &Dataset,
        mut on_epoch: impl FnMut(&Trainer, &MetricsRecord) -> Result<()>,
    ) -> Result<Vec<MetricsRecord>> {
        let mut records = Vec::new();
        while self.epochs_completed < self.config.epochs {
            let rec = self.run_epoch(source, target)?;
            on_epoch(self, &rec)?;
            records.push(rec);
        }
        Ok(records)
    }
}

fn init_networks(config: &TrainConfig, input_dim: usize, classes: usize) -> Result<Networks> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ INIT_STREAM_SALT);
    Networks::new(&config.architecture(input_dim, classes), &mut rng)
}

fn check_pair(nets: &Networks, source: &Dataset, target: &Dataset) -> Result<()> {
    if source.domain() != Domain::Source || target.domain() != Domain::Target {
        return Err(Error::Config("expected a source dataset and a target dataset".into()));
    }
    let d = nets.extractor.input_dim();
    let k = nets.classes();
    for ds in [source, target] {
        if ds.dim() != d || ds.classes() != k {
            return Err(Error::shape("train", &[d, k], &[ds.dim(), ds.classes()]));
        }
    }
    Ok(())
}

fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        crate::autodiff::softmax_in_place(row);
    }
    out
}

fn add_breakdown(acc: &mut LossBreakdown, x: &LossBreakdown) {
    acc.clc += x.clc;
    acc.dis += x.dis;
    acc.im += x.im;
    acc.mcc += x.mcc;
    acc.mmd += x.mmd;
    acc.plmmd += x.plmmd;
}

fn mean_breakdown(acc: &mut LossBreakdown, n: f64) {
    for v in [
        &mut acc.clc,
        &mut acc.dis,
        &mut acc.im,
        &mut acc.mcc,
        &mut acc.mmd,
        &mut acc.plmmd,
    ] {
        *v /= n;
    }
}

/// Per-epoch record of the supervised-only baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub epoch: usize,
    pub loss_clc: f64,
    pub source_accuracy: f64,
    pub target_accuracy: f64,
}

/// Source-only training of the extractor and classifier with cross-entropy.
///
/// Uses the same initialisation and source batch sequence as [`Trainer`],
/// so it is what the trainer reduces to when every auxiliary weight and λ
/// are zero.
pub fn train_source_only(
    config: &TrainConfig,
    source: &Dataset,
    target: &Dataset,
) -> Result<(Networks, Vec<BaselineRecord>)> {
    config.validate()?;
    let mut nets = init_networks(config, source.dim(), source.classes())?;
    check_pair(&nets, source, target)?;
    let all_names: Vec<String> = nets.named_params().into_iter().map(|(n, _)| n).collect();
    let n_cls = all_names
        .iter()
        .take_while(|n| !n.starts_with("discriminator."))
        .count();
    let names = &all_names[..n_cls];
    let mut optimizer = OptimizerState::new(nets.named_params()[..n_cls].iter().map(|(_, t)| *t));
    let opt = config.optimizer();

    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let pairs = paired_batch_indices(source.len(), target.len(), config.batch_size, config.seed, epoch as u64)?;
        let mut loss_sum = 0.0;
        for (si, _) in &pairs {
            let x = source.select(si)?;
            let labels: Vec<usize> = si.iter().map(|&i| source.labels()[i] as usize).collect();
            let mut g = Graph::new();
            let ev = nets.extractor.bind(&mut g)?;
            let hv = nets.head.bind(&mut g)?;
            let xv = g.constant(x)?;
            let f = ev.forward(&mut g, xv)?;
            let logits = ClassifierHead::classify(&hv, &mut g, f)?;
            let loss = cross_entropy(&mut g, logits, &labels)?;
            loss_sum += g.value(loss).item();
            g.backward(loss)?;

            let full = crate::models::NetworkVars {
                extractor: ev,
                head: hv,
                discriminator: nets.discriminator.bind(&mut g)?,
            };
            let grads = full.grads(&g);
            let mut params = nets.params_mut();
            params.truncate(n_cls);
            adamw_step(&mut params, &grads[..n_cls], names, &mut optimizer, &opt)?;
        }
        records.push(BaselineRecord {
            epoch,
            loss_clc: loss_sum / pairs.len() as f64,
            source_accuracy: evaluate(&nets, source)?.accuracy,
            target_accuracy: evaluate(&nets, target)?.accuracy,
        });
    }
    Ok((nets, records))
}

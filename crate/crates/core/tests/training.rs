use idal_core::autodiff::{grad_check, Graph, Tensor};
use idal_core::losses::{
    cross_entropy, discriminator_bce, info_max_loss, mcc_loss, mmd_loss, one_hot, plmmd_loss, plmmd_weights,
    total_loss, Bandwidth, ConditioningKind, KernelSpec, LossTerms, LossWeights,
};
use idal_core::models::ClassifierHead;
use idal_core::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train_source_only, MetricsRecord, MetricsWriter, PseudoLabelRefresh,
};
use idal_core::{generate_shift_pair, Dataset, Error, ShiftSpec, TrainConfig, Trainer};

fn small_pair(seed: u64) -> (Dataset, Dataset) {
    generate_shift_pair(&ShiftSpec {
        n_source: 160,
        n_target: 120,
        seed,
        ..ShiftSpec::default()
    })
    .unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        stage_widths: vec![16, 12],
        feature_dim: 8,
        discriminator_hidden: 16,
        pseudo_label_warmup_epochs: 1,
        pseudo_label_confidence: 0.5,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn params_of(t: &Trainer) -> Vec<Vec<f64>> {
    t.networks()
        .named_params()
        .into_iter()
        .map(|(_, p)| p.data().to_vec())
        .collect()
}

#[test]
fn same_seed_same_metrics_bytes() {
    let (s, t) = small_pair(0);
    let dir = tempfile::tempdir().unwrap();
    let mut files = vec![];
    for run in 0..2 {
        let path = dir.path().join(format!("m{run}.jsonl"));
        let mut w = MetricsWriter::create(&path).unwrap();
        let mut trainer = Trainer::new(small_config(3), s.dim(), s.classes()).unwrap();
        trainer.fit(&s, &t, |_, r| w.append(r)).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(MetricsWriter::read(&dir.path().join("m0.jsonl")).unwrap().len(), 3);
}

fn resume_matches(config: TrainConfig) {
    let (s, t) = small_pair(1);
    let mut full = Trainer::new(config.clone(), s.dim(), s.classes()).unwrap();
    let full_records = full.fit(&s, &t, |_, _| Ok(())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(config, s.dim(), s.classes()).unwrap();
    let mut records: Vec<MetricsRecord> = (0..2).map(|_| first.run_epoch(&s, &t).unwrap()).collect();
    save_checkpoint(&first, dir.path()).unwrap();
    drop(first);
    let mut resumed = load_checkpoint(dir.path()).unwrap();
    assert_eq!(resumed.epochs_completed(), 2);
    records.extend(resumed.fit(&s, &t, |_, _| Ok(())).unwrap());

    assert_eq!(records, full_records);
    assert_eq!(params_of(&resumed), params_of(&full));
    assert_eq!(resumed.optimizer_state(), full.optimizer_state());
}

#[test]
fn resume_replays_uninterrupted_run() {
    resume_matches(small_config(4));
}

#[test]
fn resume_restores_randomized_projection() {
    resume_matches(TrainConfig {
        conditioning: Some(ConditioningKind::Randomized),
        ..small_config(3)
    });
}

#[test]
fn checkpoint_round_trip_preserves_evaluation() {
    let (s, t) = small_pair(2);
    let mut tr = Trainer::new(small_config(1), s.dim(), s.classes()).unwrap();
    tr.fit(&s, &t, |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&tr, dir.path()).unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    assert_eq!(
        evaluate(back.networks(), &t).unwrap(),
        evaluate(tr.networks(), &t).unwrap()
    );
    assert_eq!(back.networks(), tr.networks());
}

#[test]
fn truncated_or_mismatched_checkpoint_is_rejected() {
    let (s, _) = small_pair(2);
    let tr = Trainer::new(small_config(1), s.dim(), s.classes()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&tr, dir.path()).unwrap();
    let blob = dir.path().join("params.bin");
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));

    std::fs::write(&blob, &bytes).unwrap();
    let manifest = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(
        &manifest,
        text.replace("\"format_version\": 1", "\"format_version\": 99"),
    )
    .unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
}

#[test]
fn zero_auxiliary_weights_reduce_to_supervised_baseline() {
    let (s, t) = small_pair(4);
    let config = TrainConfig {
        loss_weights: LossWeights::ZERO,
        ..small_config(3)
    };
    let mut tr = Trainer::new(config.clone(), s.dim(), s.classes()).unwrap();
    let records = tr.fit(&s, &t, |_, _| Ok(())).unwrap();
    let (nets, baseline) = train_source_only(&config, &s, &t).unwrap();
    for (r, b) in records.iter().zip(&baseline) {
        assert_eq!(r.source_accuracy.to_bits(), b.source_accuracy.to_bits());
        assert_eq!(r.target_accuracy.to_bits(), b.target_accuracy.to_bits());
        assert_eq!(r.losses.clc.to_bits(), b.loss_clc.to_bits());
    }
    assert_eq!(tr.networks().extractor, nets.extractor);
    assert_eq!(tr.networks().head, nets.head);
}

#[test]
fn plmmd_silent_during_warmup() {
    let (s, t) = small_pair(5);
    let config = TrainConfig {
        pseudo_label_warmup_epochs: 2,
        pseudo_label_confidence: 0.0,
        ..small_config(3)
    };
    let mut tr = Trainer::new(config, s.dim(), s.classes()).unwrap();
    let recs = tr.fit(&s, &t, |_, _| Ok(())).unwrap();
    assert_eq!(recs[0].losses.plmmd, 0.0);
    assert_eq!(recs[1].losses.plmmd, 0.0);
    assert_eq!(recs[0].pseudo_label_acceptance_rate, 0.0);
    assert_eq!(recs[2].pseudo_label_acceptance_rate, 1.0);
    assert!(recs[2].losses.plmmd != 0.0);
}

#[test]
fn per_step_refresh_runs() {
    let (s, t) = small_pair(6);
    let config = TrainConfig {
        pseudo_label_refresh: PseudoLabelRefresh::PerStep,
        ..small_config(2)
    };
    let mut tr = Trainer::new(config, s.dim(), s.classes()).unwrap();
    let recs = tr.fit(&s, &t, |_, _| Ok(())).unwrap();
    assert_eq!(recs[0].pseudo_label_acceptance_rate, 0.0);
    assert!((0.0..=1.0).contains(&recs[1].pseudo_label_acceptance_rate));
}

#[test]
fn metrics_fields_in_range() {
    let (s, t) = small_pair(7);
    let mut tr = Trainer::new(small_config(2), s.dim(), s.classes()).unwrap();
    for r in tr.fit(&s, &t, |_, _| Ok(())).unwrap() {
        for v in [r.source_accuracy, r.target_accuracy, r.pseudo_label_acceptance_rate] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!((-2.0..=2.0).contains(&r.proxy_a_distance));
        let l = r.losses;
        assert!([l.clc, l.dis, l.im, l.mcc, l.mmd, l.plmmd]
            .iter()
            .all(|v| v.is_finite()));
    }
}

#[test]
fn adversarial_and_plmmd_signals_change_the_extractor() {
    let (s, t) = small_pair(8);
    let batches = idal_core::data::paired_batches(&s, &t, 32, 0, 0).unwrap();
    let (sb, tb) = &batches[0];
    let all_pseudo = idal_core::trainer::update_pseudo_labels(&Tensor::filled(&[t.len(), 4], 0.25), 5, 0, 0.0).unwrap();

    let step = |weights: LossWeights, lambda: f64| {
        let config = TrainConfig {
            loss_weights: weights,
            ..small_config(1)
        };
        let mut tr = Trainer::new(config, s.dim(), s.classes()).unwrap();
        tr.train_step(sb, tb, lambda, Some(&all_pseudo)).unwrap();
        tr.networks().extractor.clone()
    };
    let full = small_config(1).loss_weights;
    let partial = step(LossWeights { eta: 0.0, ..full }, 0.0);
    assert_ne!(step(full, 1.0), partial);
}

/// The complete objective as one differentiable function of the source
/// inputs. The discriminator branch is used without gradient reversal so
/// the analytic gradient is the true derivative of the forward value.
#[test]
fn full_objective_gradient_check() {
    let (s, t) = small_pair(9);
    let config = TrainConfig {
        kernel: KernelSpec {
            bandwidth: Bandwidth::Fixed(2.0),
            ..KernelSpec::default()
        },
        ..small_config(1)
    };
    let tr = Trainer::new(config.clone(), s.dim(), s.classes()).unwrap();
    let nets = tr.networks();
    let idx: Vec<usize> = (0..8).collect();
    let xs = s.select(&idx).unwrap();
    let xt = t.select(&idx).unwrap();
    let labels: Vec<usize> = idx.iter().map(|&i| s.labels()[i] as usize).collect();
    let pseudo = one_hot(&[0, 1, 2, 3, 0, 1, 2, 3], 4).unwrap();
    let weights = plmmd_weights(&one_hot(&labels, 4).unwrap(), &pseudo).unwrap();

    let objective = |g: &mut Graph, x| {
        let vars = nets.bind(g)?;
        let target = g.constant(xt.clone())?;
        let fs = vars.extractor.forward(g, x)?;
        let ft = vars.extractor.forward(g, target)?;
        let ls = ClassifierHead::classify(&vars.head, g, fs)?;
        let lt = ClassifierHead::classify(&vars.head, g, ft)?;
        let clc = cross_entropy(g, ls, &labels)?;
        let ps = g.softmax_rows(ls)?;
        let pt = g.softmax_rows(lt)?;
        let hs = nets.conditioning.condition(g, fs, ps)?;
        let ht = nets.conditioning.condition(g, ft, pt)?;
        let ds = vars.discriminator.discriminate(g, hs)?;
        let dt = vars.discriminator.discriminate(g, ht)?;
        let terms = LossTerms {
            clc,
            dis: Some(discriminator_bce(g, ds, dt)?),
            im: info_max_loss(g, pt)?,
            mcc: mcc_loss(g, lt, config.mcc_temperature)?,
            mmd: mmd_loss(g, fs, ft, &config.kernel)?,
            plmmd: plmmd_loss(g, fs, ft, &weights, &config.kernel)?,
        };
        Ok(total_loss(g, &terms, &config.loss_weights)?.0)
    };
    let err = grad_check(objective, &xs, 1e-6).unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

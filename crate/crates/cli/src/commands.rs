use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use idal_core::gradcheck::run_suite;
use idal_core::trainer::{
    discriminator_accuracy, evaluate, load_checkpoint, proxy_a_distance, run_ablation, save_checkpoint,
    write_embeddings, MetricsRecord, MetricsWriter, TrainOverrides,
};
use idal_core::{generate_shift_pair, Dataset, Domain, ShiftSpec, TrainConfig, Trainer};
use serde::Serialize;
use serde_json::json;

use crate::args::{AblateArgs, EvalArgs, GenDataArgs, GradcheckArgs, HyperArgs, TrainArgs};
use crate::exit::{NumericFailure, UsageError};
use crate::outdir::StagedDir;

/// Prints to stdout, ignoring a closed pipe (e.g. `idal ... | head`).
fn say(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn echo<T: Serialize>(value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    say(&text);
    Ok(text)
}

fn missing(what: &str, path: &Path) -> anyhow::Error {
    std::io::Error::new(ErrorKind::NotFound, format!("{what} {} does not exist", path.display())).into()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path, expected: Domain) -> Result<Dataset> {
    if !path.exists() {
        return Err(missing("dataset", path));
    }
    let ds = Dataset::load_csv(path)?;
    if ds.domain() != expected {
        bail!(UsageError(format!(
            "{} holds {} data, expected {}",
            path.display(),
            ds.domain().as_str(),
            expected.as_str()
        )));
    }
    Ok(ds)
}

/// Flags over config file over preset over defaults.
fn resolve_config(hyper: &HyperArgs) -> Result<TrainConfig> {
    let file = match &hyper.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TrainOverrides>(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        }
        None => TrainOverrides::default(),
    };
    Ok(hyper.overrides().or(file).resolve()?)
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let spec = ShiftSpec {
        classes: args.k,
        dim: args.d,
        n_source: args.n_source,
        n_target: args.n_target,
        class_separation: args.separation,
        rotation_angle: args.rotation,
        scale_factor: args.scale,
        style_offset_magnitude: args.offset,
        noise_sigma_source: args.noise_source,
        noise_sigma_target: args.noise_target,
        seed: args.seed,
    };
    let echoed = echo(&json!({ "spec": spec, "fingerprint": spec.fingerprint() }))?;
    spec.validate()?;
    let out = StagedDir::create(&args.out)?;
    write(&out.join("spec.json"), &echoed)?;
    let (source, target) = generate_shift_pair(&spec)?;
    source.save_csv(&out.join("source.csv"))?;
    target.save_csv(&out.join("target.csv"))?;
    let dir = out.commit()?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut resumed = match &args.resume {
        Some(dir) => {
            if !dir.join("manifest.json").exists() {
                return Err(missing("checkpoint", dir));
            }
            Some(load_checkpoint(dir)?)
        }
        None => None,
    };
    let config = match &mut resumed {
        Some(trainer) => {
            let mut config = trainer.config().clone();
            if let Some(epochs) = args.hyper.epochs {
                config.epochs = epochs;
            }
            config
        }
        None => resolve_config(&args.hyper)?,
    };
    let echoed = echo(&config)?;
    if args.dry_run {
        return Ok(());
    }

    let (Some(src_path), Some(tgt_path), Some(out_path)) = (&args.source, &args.target, &args.out) else {
        bail!(UsageError(
            "train needs --source, --target and --out (or --dry-run)".into()
        ));
    };
    let source = load_dataset(src_path, Domain::Source)?;
    let target = load_dataset(tgt_path, Domain::Target)?;
    let out = StagedDir::create(out_path)?;
    write(&out.join("config.json"), &echoed)?;

    let mut trainer = match resumed {
        Some(t) => Trainer::from_parts(
            config,
            t.networks().clone(),
            t.optimizer_state().clone(),
            t.epochs_completed(),
        ),
        None => Trainer::new(config, source.dim(), source.classes())?,
    };
    let mut metrics = MetricsWriter::create(&out.join("metrics.jsonl"))?;
    let mut last: Option<MetricsRecord> = None;
    let result = trainer.fit(&source, &target, |_, rec| {
        log::info!(
            "epoch {}: target acc {:.4}, source acc {:.4}, λ {:.3}",
            rec.epoch,
            rec.target_accuracy,
            rec.source_accuracy,
            rec.lambda_eff
        );
        last = Some(rec.clone());
        metrics.append(rec)
    });
    if let Err(err) = result {
        let dump = out.join("failure.json");
        let detail = match &err {
            idal_core::Error::NonFiniteLoss { term, value } => json!({ "term": term, "value": value.to_string() }),
            _ => json!(null),
        };
        let report = json!({
            "error": err.to_string(),
            "non_finite_term": detail,
            "epochs_completed": trainer.epochs_completed(),
            "last_epoch_losses": last.as_ref().map(|r| r.losses),
        });
        write(&dump, &serde_json::to_string_pretty(&report)?)?;
        eprintln!("loss dump written to {}", dump.display());
        return Err(err.into());
    }

    save_checkpoint(&trainer, &out.join("checkpoint"))?;
    write_embeddings(&out.join("embeddings.csv"), trainer.networks(), &source, &target)?;
    let final_acc = match &last {
        Some(rec) => rec.target_accuracy,
        None => evaluate(trainer.networks(), &target)?.accuracy,
    };
    let dir = out.commit()?;
    say(&format!("final target accuracy: {final_acc:.4}"));
    eprintln!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    source_accuracy: Option<f64>,
    source_per_class_accuracy: Option<Vec<Option<f64>>>,
    target_accuracy: Option<f64>,
    target_per_class_accuracy: Option<Vec<Option<f64>>>,
    proxy_a_distance: Option<f64>,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    echo(&json!({
        "checkpoint": args.checkpoint,
        "source": args.source,
        "target": args.target,
        "out": args.out,
    }))?;
    if args.source.is_none() && args.target.is_none() {
        bail!(UsageError("eval needs --source and/or --target".into()));
    }
    if !args.checkpoint.join("manifest.json").exists() {
        return Err(missing("checkpoint", &args.checkpoint));
    }
    let trainer = load_checkpoint(&args.checkpoint)?;
    let nets = trainer.networks();
    let source = args
        .source
        .as_deref()
        .map(|p| load_dataset(p, Domain::Source))
        .transpose()?;
    let target = args
        .target
        .as_deref()
        .map(|p| load_dataset(p, Domain::Target))
        .transpose()?;
    let src = source.as_ref().map(|ds| evaluate(nets, ds)).transpose()?;
    let tgt = target.as_ref().map(|ds| evaluate(nets, ds)).transpose()?;
    let pad = match (&source, &target) {
        (Some(s), Some(t)) => Some(proxy_a_distance(discriminator_accuracy(nets, s, t)?)),
        _ => None,
    };
    let report = EvalReport {
        checkpoint: args.checkpoint.display().to_string(),
        source_accuracy: src.as_ref().map(|r| r.accuracy),
        source_per_class_accuracy: src.map(|r| r.per_class),
        target_accuracy: tgt.as_ref().map(|r| r.accuracy),
        target_per_class_accuracy: tgt.map(|r| r.per_class),
        proxy_a_distance: pad,
    };
    let text = echo(&report)?;
    if let Some(path) = &args.out {
        let out = StagedDir::create(path)?;
        write(&out.join("report.json"), &text)?;
        out.commit()?;
    }
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    echo(&json!({ "loss": args.loss, "seed": args.seed }))?;
    let results = run_suite(args.loss.as_deref(), args.seed)?;
    say(&format!("{:<8} {:>14} {:>8}", "loss", "max rel err", "status"));
    for r in &results {
        say(&format!(
            "{:<8} {:>14.3e} {:>8}",
            r.loss,
            r.max_rel_error,
            if r.passed { "ok" } else { "FAIL" }
        ));
    }
    if let Some(path) = &args.out {
        let out = StagedDir::create(path)?;
        write(&out.join("gradcheck.json"), &serde_json::to_string_pretty(&results)?)?;
        out.commit()?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.loss.as_str()).collect();
    if !failed.is_empty() {
        bail!(NumericFailure(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn thread_count() -> Result<usize> {
    match std::env::var("IDAL_NUM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!(UsageError(format!(
                "IDAL_NUM_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let config = resolve_config(&args.hyper)?;
    if args.seeds == 0 {
        bail!(UsageError("--seeds must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| config.seed + i).collect();
    let threads = thread_count()?;
    let echoed = echo(&json!({ "config": config, "seeds": seeds, "threads": threads }))?;
    let source = load_dataset(&args.source, Domain::Source)?;
    let target = load_dataset(&args.target, Domain::Target)?;
    let out = StagedDir::create(&args.out)?;
    write(&out.join("config.json"), &echoed)?;

    let data: Vec<(u64, &Dataset, &Dataset)> = seeds.iter().map(|&s| (s, &source, &target)).collect();
    let table = run_ablation(&data, &config, threads)?;
    let text = table.render();
    say(text.trim_end());
    write(&out.join("ablation.txt"), &text)?;
    write(&out.join("ablation.json"), &serde_json::to_string_pretty(&table)?)?;
    out.commit()?;
    Ok(())
}

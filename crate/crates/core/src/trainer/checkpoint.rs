//! Checkpoints: a JSON manifest plus one little-endian `f64` blob.
//!
//! The blob holds, in order, every trainable parameter, the AdamW first and
//! second moments, and (for the randomized conditioning map) its two frozen
//! projection matrices. The manifest lists each entry's name, shape and
//! offset, so loading can verify everything before building any state.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::losses::{ConditioningKind, ConditioningMap};
use crate::models::Networks;

use super::{OptimizerState, TrainConfig, Trainer};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const BLOB: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: TrainConfig,
    seed: u64,
    epochs_completed: usize,
    optimizer_step: u64,
    input_dim: usize,
    classes: usize,
    conditioning: ConditioningKind,
    blob_sha256: String,
    entries: Vec<Entry>,
}

fn entries_of(trainer: &Trainer) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let nets = trainer.networks();
    let params = nets.named_params();
    let opt = trainer.optimizer_state();
    let mut out: Vec<(String, Vec<usize>, Vec<f64>)> = params
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec(), t.data().to_vec()))
        .collect();
    for (prefix, moments) in [("adam.m.", &opt.first_moment), ("adam.v.", &opt.second_moment)] {
        for ((n, t), m) in params.iter().zip(moments) {
            out.push((format!("{prefix}{n}"), t.shape().to_vec(), m.clone()));
        }
    }
    if let Some((rf, rg)) = nets.conditioning.random_matrices() {
        out.push(("conditioning.rf".into(), rf.shape().to_vec(), rf.data().to_vec()));
        out.push(("conditioning.rg".into(), rg.shape().to_vec(), rg.data().to_vec()));
    }
    out
}

/// Writes `manifest.json` and `params.bin` into `dir` (created if needed).
/// Each file is written to a temporary name and renamed into place.
pub fn save_checkpoint(trainer: &Trainer, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, shape, data) in entries_of(trainer) {
        for v in &data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(Entry {
            name,
            shape,
            offset,
            length: data.len(),
        });
        offset += data.len();
    }
    let nets = trainer.networks();
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        config: trainer.config().clone(),
        seed: trainer.config().seed,
        epochs_completed: trainer.epochs_completed(),
        optimizer_step: trainer.optimizer_state().step,
        input_dim: nets.extractor.input_dim(),
        classes: nets.classes(),
        conditioning: nets.conditioning.kind(),
        blob_sha256: hex(&Sha256::digest(&blob)),
        entries,
    };
    write_atomic(&dir.join(BLOB), &blob)?;
    write_atomic(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Restores a trainer saved by [`save_checkpoint`]. Fails without side
/// effects on a version, checksum, name or shape mismatch.
pub fn load_checkpoint(dir: &Path) -> Result<Trainer> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {} (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    let bpath = dir.join(BLOB);
    let bytes = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if hex(&Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(Error::Checkpoint("params.bin checksum mismatch".into()));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint("params.bin length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let mut config = manifest.config.clone();
    config.conditioning = Some(manifest.conditioning);
    config.validate()?;
    // The RNG only fills placeholders; every value is overwritten below.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut nets = Networks::new(&config.architecture(manifest.input_dim, manifest.classes), &mut rng)?;
    config.conditioning = manifest.config.conditioning;

    let mut expected: Vec<(String, Vec<usize>)> = nets
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    let n_params = expected.len();
    for prefix in ["adam.m.", "adam.v."] {
        for i in 0..n_params {
            let (n, s) = expected[i].clone();
            expected.push((format!("{prefix}{n}"), s));
        }
    }
    if let Some((rf, rg)) = nets.conditioning.random_matrices() {
        expected.push(("conditioning.rf".into(), rf.shape().to_vec()));
        expected.push(("conditioning.rg".into(), rg.shape().to_vec()));
    }
    if expected.len() != manifest.entries.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} entries, manifest lists {}",
            expected.len(),
            manifest.entries.len()
        )));
    }
    let mut slices = Vec::with_capacity(expected.len());
    for ((name, shape), e) in expected.iter().zip(&manifest.entries) {
        let numel: usize = shape.iter().product();
        if *name != e.name || *shape != e.shape || e.length != numel {
            return Err(Error::Checkpoint(format!(
                "entry `{}` {:?} does not match expected `{name}` {shape:?}",
                e.name, e.shape
            )));
        }
        let end = e.offset.checked_add(e.length).filter(|&end| end <= values.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("entry `{}` runs past end of params.bin", e.name)))?;
        slices.push(&values[e.offset..end]);
    }

    for (p, s) in nets.params_mut().into_iter().zip(&slices[..n_params]) {
        p.data_mut().copy_from_slice(s);
    }
    let optimizer = OptimizerState {
        first_moment: slices[n_params..2 * n_params].iter().map(|s| s.to_vec()).collect(),
        second_moment: slices[2 * n_params..3 * n_params].iter().map(|s| s.to_vec()).collect(),
        step: manifest.optimizer_step,
    };
    if slices.len() > 3 * n_params {
        let shape_of = |i: usize| &manifest.entries[i].shape;
        let rf = Tensor::new(shape_of(3 * n_params).clone(), slices[3 * n_params].to_vec())?;
        let rg = Tensor::new(shape_of(3 * n_params + 1).clone(), slices[3 * n_params + 1].to_vec())?;
        nets.conditioning = ConditioningMap::randomized_from(rf, rg)?;
    }
    Ok(Trainer::from_parts(config, nets, optimizer, manifest.epochs_completed))
}

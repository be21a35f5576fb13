//! Synthetic domain-shift data, CSV persistence and batching.
//!
//! Target ground truth is stored in a separate evaluation channel
//! ([`Dataset::eval_labels`]); the training view ([`Dataset::labels`]) of a
//! target set is all `-1`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const TARGET_STREAM_SALT: u64 = 0x5EED_7A26_E7D0_0A11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// Parameters of a synthetic source/target pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub classes: usize,
    pub dim: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub class_separation: f64,
    /// Radians, applied in the plane of the first two coordinates.
    pub rotation_angle: f64,
    pub scale_factor: f64,
    pub style_offset_magnitude: f64,
    pub noise_sigma_source: f64,
    pub noise_sigma_target: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            classes: 4,
            dim: 8,
            n_source: 2000,
            n_target: 2000,
            class_separation: 4.0,
            rotation_angle: std::f64::consts::FRAC_PI_4,
            scale_factor: 1.3,
            style_offset_magnitude: 1.0,
            noise_sigma_source: 0.5,
            noise_sigma_target: 0.5,
            seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return fail(format!("k must be >= 2, got {}", self.classes));
        }
        if self.dim < 2 {
            return fail(format!("d must be >= 2, got {}", self.dim));
        }
        if self.classes > 2 * self.dim {
            return fail(format!("k must be <= 2d ({}), got {}", 2 * self.dim, self.classes));
        }
        let positive = [
            ("class_separation", self.class_separation),
            ("scale_factor", self.scale_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be > 0, got {v}"));
            }
        }
        let non_negative = [
            ("style_offset_magnitude", self.style_offset_magnitude),
            ("noise_sigma_source", self.noise_sigma_source),
            ("noise_sigma_target", self.noise_sigma_target),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !self.rotation_angle.is_finite() {
            return fail("rotation_angle must be finite".into());
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Source class centers: `±separation · e_j`, positive axes first.
    pub fn source_centers(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|k| {
                let mut c = vec![0.0; self.dim];
                let (axis, sign) = if k < self.dim { (k, 1.0) } else { (k - self.dim, -1.0) };
                c[axis] = sign * self.class_separation;
                c
            })
            .collect()
    }

    /// Unit-sum direction `(1, …, 1)/√d` scaled by the offset magnitude.
    pub fn style_offset(&self) -> Vec<f64> {
        let v = self.style_offset_magnitude / (self.dim as f64).sqrt();
        vec![v; self.dim]
    }

    /// Target class centers: `scale · R(θ) · center + offset`.
    pub fn target_centers(&self) -> Vec<Vec<f64>> {
        let (s, c) = self.rotation_angle.sin_cos();
        let offset = self.style_offset();
        self.source_centers()
            .into_iter()
            .map(|mut m| {
                let (x, y) = (m[0], m[1]);
                m[0] = c * x - s * y;
                m[1] = s * x + c * y;
                m.iter_mut()
                    .zip(&offset)
                    .for_each(|(v, o)| *v = self.scale_factor * *v + o);
                m
            })
            .collect()
    }
}

/// Feature matrix with training-view labels and a separate evaluation channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    domain: Domain,
    features: Vec<f64>,
    labels: Vec<i64>,
    eval_labels: Vec<i64>,
    pub spec_fingerprint: Option<String>,
}

impl Dataset {
    pub fn new(
        dim: usize,
        classes: usize,
        domain: Domain,
        features: Vec<f64>,
        labels: Vec<i64>,
        eval_labels: Vec<i64>,
    ) -> Result<Self> {
        if dim == 0 || classes < 2 {
            return Err(Error::Config(format!(
                "dataset needs d >= 1 and k >= 2 (d={dim}, k={classes})"
            )));
        }
        let n = labels.len();
        if features.len() != n * dim || eval_labels.len() != n {
            return Err(Error::shape("dataset", &[n, dim], &[features.len(), eval_labels.len()]));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "dataset" });
        }
        let k = classes as i64;
        for (i, (&l, &e)) in labels.iter().zip(&eval_labels).enumerate() {
            if l < -1 || l >= k || e < -1 || e >= k {
                return Err(Error::Config(format!("row {i}: label out of range [-1, {k})")));
            }
            if domain == Domain::Source && l < 0 {
                return Err(Error::Config(format!("row {i}: source rows must be labelled")));
            }
        }
        Ok(Dataset {
            dim,
            classes,
            domain,
            features,
            labels,
            eval_labels,
            spec_fingerprint: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Training-view labels; `-1` marks unlabelled rows.
    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Ground-truth labels, for scoring only. `None` if any row lacks one.
    pub fn eval_labels(&self) -> Option<&[i64]> {
        self.eval_labels
            .iter()
            .all(|&l| l >= 0)
            .then_some(self.eval_labels.as_slice())
    }

    /// All rows as one `n×d` tensor.
    pub fn feature_tensor(&self) -> Result<Tensor> {
        Tensor::matrix(self.len(), self.dim, self.features.clone())
    }

    pub fn select(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor::matrix(indices.len(), self.dim, data)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(
            w,
            "idal-dataset,v1,n={},d={},k={},domain={}",
            self.len(),
            self.dim,
            self.classes,
            self.domain.as_str()
        )
        .map_err(io)?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            for v in self.row(i) {
                // `{}` prints the shortest string that parses back to the same f64
                let _ = write!(line, "{v},");
            }
            let _ = write!(line, "{},{}", self.labels[i], self.eval_labels[i]);
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };

        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(path, e))?,
            None => return Err(parse_err(1, "missing header".into())),
        };
        let (n, d, k, domain) = parse_header(&header).map_err(|m| parse_err(1, m))?;

        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut eval_labels = Vec::with_capacity(n);
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != d + 2 {
                return Err(parse_err(
                    lineno,
                    format!("expected {} cells, found {}", d + 2, cells.len()),
                ));
            }
            for (j, cell) in cells[..d].iter().enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("column {j}: `{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(lineno, format!("column {j}: non-finite value")));
                }
                features.push(v);
            }
            let int = |s: &str, col: &str| -> Result<i64> {
                s.parse()
                    .map_err(|_| parse_err(lineno, format!("{col}: `{s}` is not an integer")))
            };
            labels.push(int(cells[d], "label")?);
            eval_labels.push(int(cells[d + 1], "eval_label")?);
        }
        if labels.len() != n {
            return Err(parse_err(
                1,
                format!("header declares n={n}, file has {} rows", labels.len()),
            ));
        }
        Dataset::new(d, k, domain, features, labels, eval_labels).map_err(|e| parse_err(1, e.to_string()))
    }
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize, usize, Domain), String> {
    let parts: Vec<&str> = line.trim_end().split(',').collect();
    if parts.len() != 6 || parts[0] != "idal-dataset" || parts[1] != "v1" {
        return Err(format!("bad header `{line}`"));
    }
    let field = |s: &str, key: &str| -> std::result::Result<String, String> {
        s.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_owned)
            .ok_or_else(|| format!("expected `{key}=` in header, found `{s}`"))
    };
    let num = |s: &str, key: &str| -> std::result::Result<usize, String> {
        field(s, key)?
            .parse()
            .map_err(|_| format!("header {key} is not an integer"))
    };
    let n = num(parts[2], "n")?;
    let d = num(parts[3], "d")?;
    let k = num(parts[4], "k")?;
    let domain = match field(parts[5], "domain")?.as_str() {
        "source" => Domain::Source,
        "target" => Domain::Target,
        other => return Err(format!("unknown domain `{other}`")),
    };
    Ok((n, d, k, domain))
}

/// Draws a source/target pair. Labels are assigned round-robin, so every
/// class gets `⌊n/K⌋` or `⌈n/K⌉` rows.
pub fn generate_shift_pair(spec: &ShiftSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let src_centers = spec.source_centers();
    let tgt_centers = spec.target_centers();

    let draw = |centers: &[Vec<f64>], n: usize, sigma: f64, rng: &mut ChaCha8Rng| -> Result<(Vec<f64>, Vec<i64>)> {
        let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut features = Vec::with_capacity(n * spec.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % spec.classes;
            features.extend(centers[k].iter().map(|&c| c + noise.sample(rng)));
            labels.push(k as i64);
        }
        Ok((features, labels))
    };

    let mut src_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tgt_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ TARGET_STREAM_SALT);
    let (sf, sl) = draw(&src_centers, spec.n_source, spec.noise_sigma_source, &mut src_rng)?;
    let (tf, tl) = draw(&tgt_centers, spec.n_target, spec.noise_sigma_target, &mut tgt_rng)?;

    let fingerprint = spec.fingerprint();
    let mut source = Dataset::new(spec.dim, spec.classes, Domain::Source, sf, sl.clone(), sl)?;
    let mut target = Dataset::new(spec.dim, spec.classes, Domain::Target, tf, vec![-1; tl.len()], tl)?;
    source.spec_fingerprint = Some(fingerprint.clone());
    target.spec_fingerprint = Some(fingerprint);
    Ok((source, target))
}

/// One mini-batch: rows, their dataset indices and (for labelled data) labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub features: Tensor,
    pub labels: Option<Vec<usize>>,
}

/// Shuffled partition of `0..n` for one epoch. The permutation is a pure
/// function of `(seed, epoch)`; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::Config("cannot batch an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn batch_iter(ds: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Batch>> {
    batch_indices(ds.len(), batch_size, seed, epoch)?
        .into_iter()
        .map(|indices| make_batch(ds, indices))
        .collect()
}

fn make_batch(ds: &Dataset, indices: Vec<usize>) -> Result<Batch> {
    let features = ds.select(&indices)?;
    let labels = if indices.iter().all(|&i| ds.labels[i] >= 0) {
        Some(indices.iter().map(|&i| ds.labels[i] as usize).collect())
    } else {
        None
    };
    Ok(Batch {
        indices,
        features,
        labels,
    })
}

/// Index batches for one epoch over both domains. The shorter stream is
/// cycled so every step gets one batch of each; the epoch length is the
/// longer stream's batch count.
pub fn paired_batch_indices(
    n_source: usize,
    n_target: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let s = batch_indices(n_source, batch_size, seed, epoch)?;
    let t = batch_indices(n_target, batch_size, seed ^ TARGET_STREAM_SALT, epoch)?;
    let steps = s.len().max(t.len());
    Ok((0..steps)
        .map(|i| (s[i % s.len()].clone(), t[i % t.len()].clone()))
        .collect())
}

pub fn paired_batches(
    source: &Dataset,
    target: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<(Batch, Batch)>> {
    paired_batch_indices(source.len(), target.len(), batch_size, seed, epoch)?
        .into_iter()
        .map(|(s, t)| Ok((make_batch(source, s)?, make_batch(target, t)?)))
        .collect()
}

/// Uniform random rows, handy for tests and benches.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

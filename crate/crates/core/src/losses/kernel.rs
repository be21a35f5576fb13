use serde::{Deserialize, Serialize};

use crate::autodiff::{sq_dist_raw, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// How the base bandwidth of the Gaussian kernel family is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the pooled samples.
    Median,
}

/// A sum of Gaussian kernels with bandwidths `base * multiplier_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
    pub multipliers: Vec<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            bandwidth: Bandwidth::Median,
            multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

impl KernelSpec {
    pub fn single(sigma: f64) -> Self {
        KernelSpec {
            bandwidth: Bandwidth::Fixed(sigma),
            multipliers: vec![1.0],
        }
    }

    pub fn count(&self) -> usize {
        self.multipliers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.multipliers.is_empty() {
            return Err(Error::Config("kernel needs at least one bandwidth multiplier".into()));
        }
        if self.multipliers.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Config("kernel multipliers must be finite and > 0".into()));
        }
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Config("fixed kernel bandwidth must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Base bandwidth for a pooled sample set. A zero median falls back to
    /// 1.0 with a warning.
    pub fn base_bandwidth(&self, pooled: &[&Tensor]) -> f64 {
        match self.bandwidth {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Median => {
                let m = median_pairwise_distance(pooled);
                if m > 0.0 {
                    m
                } else {
                    log::warn!("median pairwise distance is zero; using bandwidth 1.0");
                    1.0
                }
            }
        }
    }
}

fn median_pairwise_distance(pooled: &[&Tensor]) -> f64 {
    let d = pooled.first().map(|t| t.cols()).unwrap_or(0);
    let rows: Vec<&[f64]> = pooled
        .iter()
        .flat_map(|t| (0..t.rows()).map(move |i| t.row(i)))
        .collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            dists.push(sq_dist_raw(rows[i], rows[j], 1, 1, d)[0].sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    }
}

/// `K[i,j] = Σ_m exp(-‖x_i - y_j‖² / (2 σ_m²))` with `σ_m = base · multiplier_m`.
/// The base bandwidth is computed from the pooled rows of `x` and `y` and
/// is not differentiated through.
pub fn gaussian_kernel_matrix(g: &mut Graph, x: Var, y: Var, spec: &KernelSpec) -> Result<Var> {
    spec.validate()?;
    let base = spec.base_bandwidth(&[g.value(x), g.value(y)]);
    kernel_with_bandwidth(g, x, y, spec, base)
}

pub(crate) fn kernel_with_bandwidth(g: &mut Graph, x: Var, y: Var, spec: &KernelSpec, base: f64) -> Result<Var> {
    let d = g.sq_dist(x, y)?;
    let mut acc: Option<Var> = None;
    for &m in &spec.multipliers {
        let sigma = base * m;
        let scaled = g.scale(d, -1.0 / (2.0 * sigma * sigma))?;
        let k = g.exp(scaled)?;
        acc = Some(match acc {
            None => k,
            Some(a) => g.add(a, k)?,
        });
    }
    Ok(acc.expect("validated non-empty multipliers"))
}

pub(crate) fn check_batch_pair(op: &'static str, g: &Graph, x: Var, y: Var) -> Result<()> {
    let (tx, ty) = (g.value(x), g.value(y));
    if tx.shape().len() != 2 || ty.shape().len() != 2 || tx.cols() != ty.cols() {
        return Err(Error::shape(op, tx.shape(), ty.shape()));
    }
    Ok(())
}

/// Biased (V-statistic) squared MMD between two batches:
/// `mean k(X,X) - 2 mean k(X,Y) + mean k(Y,Y)`.
pub fn mmd_loss(g: &mut Graph, source: Var, target: Var, spec: &KernelSpec) -> Result<Var> {
    spec.validate()?;
    check_batch_pair("mmd_loss", g, source, target)?;
    let base = spec.base_bandwidth(&[g.value(source), g.value(target)]);
    let kxx = kernel_with_bandwidth(g, source, source, spec, base)?;
    let kyy = kernel_with_bandwidth(g, target, target, spec, base)?;
    let kxy = kernel_with_bandwidth(g, source, target, spec, base)?;
    let mxx = g.mean(kxx)?;
    let myy = g.mean(kyy)?;
    let mxy = g.mean(kxy)?;
    let within = g.add(mxx, myy)?;
    let cross = g.scale(mxy, 2.0)?;
    g.sub(within, cross)
}

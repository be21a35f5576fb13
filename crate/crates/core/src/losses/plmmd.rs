use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

use super::kernel::{check_batch_pair, kernel_with_bandwidth, KernelSpec};

/// Instance-level weights for the class-conditional MMD.
#[derive(Clone, Debug, PartialEq)]
pub struct PlmmdWeights {
    /// `b_s × b_s`
    pub w_xx: Tensor,
    /// `b_s × b_t`
    pub w_xy: Tensor,
    /// `b_t × b_t`
    pub w_yy: Tensor,
    pub common_class_count: usize,
}

/// Builds the weight arrays from source one-hot labels (`b_s×K`) and target
/// pseudo-label rows (`b_t×K`, rejected rows all zero).
///
/// Each class column is normalised to unit mass in each domain. For every
/// class present in both domains the outer products of the normalised
/// columns are accumulated, then averaged over the number of such classes.
pub fn plmmd_weights(source_labels: &Tensor, target_pseudo: &Tensor) -> Result<PlmmdWeights> {
    let (bs, k) = source_labels
        .dims2()
        .ok_or_else(|| Error::shape("plmmd_weights", source_labels.shape(), &[]))?;
    let (bt, kt) = target_pseudo
        .dims2()
        .ok_or_else(|| Error::shape("plmmd_weights", target_pseudo.shape(), &[]))?;
    if k != kt {
        return Err(Error::shape(
            "plmmd_weights",
            source_labels.shape(),
            target_pseudo.shape(),
        ));
    }

    let normalized_column = |t: &Tensor, c: usize| -> Option<Vec<f64>> {
        let col: Vec<f64> = (0..t.rows()).map(|i| t.get(i, c)).collect();
        let mass: f64 = col.iter().sum();
        (mass > 0.0).then(|| col.into_iter().map(|v| v / mass).collect())
    };

    let mut w_xx = vec![0.0; bs * bs];
    let mut w_xy = vec![0.0; bs * bt];
    let mut w_yy = vec![0.0; bt * bt];
    let mut common = 0usize;
    for c in 0..k {
        let (Some(u), Some(v)) = (normalized_column(source_labels, c), normalized_column(target_pseudo, c)) else {
            continue;
        };
        common += 1;
        accumulate_outer(&mut w_xx, &u, &u);
        accumulate_outer(&mut w_xy, &u, &v);
        accumulate_outer(&mut w_yy, &v, &v);
    }
    if common > 0 {
        let inv = 1.0 / common as f64;
        for w in [&mut w_xx, &mut w_xy, &mut w_yy] {
            w.iter_mut().for_each(|x| *x *= inv);
        }
    }

    Ok(PlmmdWeights {
        w_xx: Tensor::matrix(bs, bs, w_xx)?,
        w_xy: Tensor::matrix(bs, bt, w_xy)?,
        w_yy: Tensor::matrix(bt, bt, w_yy)?,
        common_class_count: common,
    })
}

fn accumulate_outer(out: &mut [f64], a: &[f64], b: &[f64]) {
    let n = b.len();
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i * n..(i + 1) * n].iter_mut().zip(b) {
            *o += x * y;
        }
    }
}

/// `Σ w_xx⊙k(X,X) - 2 Σ w_xy⊙k(X,Y) + Σ w_yy⊙k(Y,Y)`.
///
/// With no common class the result is a constant zero that is not connected
/// to the features, so it contributes nothing to any gradient.
pub fn plmmd_loss(g: &mut Graph, source: Var, target: Var, weights: &PlmmdWeights, spec: &KernelSpec) -> Result<Var> {
    spec.validate()?;
    check_batch_pair("plmmd_loss", g, source, target)?;
    let (bs, bt) = (g.value(source).rows(), g.value(target).rows());
    if weights.w_xx.shape() != [bs, bs] || weights.w_xy.shape() != [bs, bt] || weights.w_yy.shape() != [bt, bt] {
        return Err(Error::shape(
            "plmmd_loss",
            &[bs, bt],
            &[weights.w_xx.rows(), weights.w_yy.rows()],
        ));
    }
    if weights.common_class_count == 0 {
        return g.constant(Tensor::scalar(0.0));
    }

    let base = spec.base_bandwidth(&[g.value(source), g.value(target)]);
    let weighted_sum = |g: &mut Graph, x: Var, y: Var, w: &Tensor| -> Result<Var> {
        let k = kernel_with_bandwidth(g, x, y, spec, base)?;
        let w = g.constant(w.clone())?;
        let kw = g.mul(k, w)?;
        g.sum(kw)
    };
    let sxx = weighted_sum(g, source, source, &weights.w_xx)?;
    let syy = weighted_sum(g, target, target, &weights.w_yy)?;
    let sxy = weighted_sum(g, source, target, &weights.w_xy)?;
    let within = g.add(sxx, syy)?;
    let cross = g.scale(sxy, 2.0)?;
    g.sub(within, cross)
}

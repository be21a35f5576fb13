use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Mean cross-entropy of `logits` (`b×K`) against integer labels.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let (b, k) = g
        .value(logits)
        .dims2()
        .ok_or_else(|| Error::shape("cross_entropy", g.shape(logits), &[]))?;
    if labels.len() != b {
        return Err(Error::shape("cross_entropy", g.shape(logits), &[labels.len()]));
    }
    let onehot = one_hot(labels, k)?;
    let logp = g.log_softmax_rows(logits)?;
    let mask = g.constant(onehot)?;
    let picked = g.mul(logp, mask)?;
    let total = g.sum(picked)?;
    g.scale(total, -1.0 / b as f64)
}

/// `b×k` indicator matrix of `labels`.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::domain(
                "one_hot",
                format!("label {y} at row {i} outside [0, {k})"),
            ));
        }
        data[i * k + y] = 1.0;
    }
    Tensor::matrix(labels.len(), k, data)
}

/// Domain-discriminator binary cross-entropy with source labelled 1 and
/// target labelled 0: `-mean(log d_s) - mean(log(1 - d_t))`.
pub fn discriminator_bce(g: &mut Graph, d_source: Var, d_target: Var) -> Result<Var> {
    if g.value(d_source).numel() == 0 || g.value(d_target).numel() == 0 {
        return Err(Error::domain("discriminator_bce", "empty batch"));
    }
    let ls = g.log(d_source)?;
    let src = g.mean(ls)?;
    let inv = g.one_minus(d_target)?;
    let lt = g.log(inv)?;
    let tgt = g.mean(lt)?;
    let s = g.add(src, tgt)?;
    g.neg(s)
}

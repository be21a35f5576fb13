use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Tolerance on row sums of probability matrices.
const ROW_SUM_TOL: f64 = 1e-6;

/// Negative mutual information between target inputs and predictions:
/// `-H(mean_i p_i) + mean_i H(p_i)` (natural log). Lies in `[-ln K, 0]`.
pub fn info_max_loss(g: &mut Graph, probs: Var) -> Result<Var> {
    let t = g.value(probs);
    let (n, k) = t.dims2().ok_or_else(|| Error::shape("info_max_loss", t.shape(), &[]))?;
    for (i, row) in t.data().chunks(k).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::domain(
                "info_max_loss",
                format!("row {i} sums to {s}, expected 1"),
            ));
        }
    }

    let mean = g.mean_cols(probs)?;
    let log_mean = g.log(mean)?;
    let plogp_mean = g.mul(mean, log_mean)?;
    let neg_marginal_entropy = g.sum(plogp_mean)?;

    let logp = g.log(probs)?;
    let plogp = g.mul(probs, logp)?;
    let total = g.sum(plogp)?;
    let neg_mean_entropy = g.scale(total, 1.0 / n as f64)?;

    g.sub(neg_marginal_entropy, neg_mean_entropy)
}

/// Row-normalised class confusion matrix on a target batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassConfusionMatrix {
    pub classes: usize,
    /// `classes × classes`, row-major
    pub entries: Vec<f64>,
    pub normalized: bool,
}

impl ClassConfusionMatrix {
    /// Evaluates the confusion matrix used by [`mcc_loss`] without recording
    /// gradients.
    pub fn from_logits(logits: &Tensor, temperature: f64) -> Result<Self> {
        let mut g = Graph::new();
        let l = g.constant(logits.clone())?;
        let (c, _) = mcc_parts(&mut g, l, temperature)?;
        let classes = logits.cols();
        Ok(ClassConfusionMatrix {
            classes,
            entries: g.value(c).data().to_vec(),
            normalized: true,
        })
    }

    pub fn off_diagonal_sum(&self) -> f64 {
        let c = self.classes;
        (0..c)
            .flat_map(|j| (0..c).filter(move |&k| k != j).map(move |k| (j, k)))
            .map(|(j, k)| self.entries[j * c + k].abs())
            .sum()
    }
}

/// Minimum-class-confusion loss.
///
/// Probabilities are tempered (`softmax(logits / T)`), samples are
/// re-weighted by `b · softmax(-H(ŷ_i))` so that confident rows count more,
/// and the weighted co-occurrence matrix `ŶᵀWŶ` is row-normalised. The loss
/// is the off-diagonal mass divided by the class count, so it lies in
/// `[0, (c-1)/c]`.
pub fn mcc_loss(g: &mut Graph, logits: Var, temperature: f64) -> Result<Var> {
    Ok(mcc_parts(g, logits, temperature)?.1)
}

fn mcc_parts(g: &mut Graph, logits: Var, temperature: f64) -> Result<(Var, Var)> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::domain("mcc_loss", "temperature must be > 0"));
    }
    let (b, c) = g
        .value(logits)
        .dims2()
        .ok_or_else(|| Error::shape("mcc_loss", g.shape(logits), &[]))?;
    if b < 1 || c < 2 || g.shape(logits).len() != 2 {
        return Err(Error::shape("mcc_loss", g.shape(logits), &[]));
    }

    let scaled = g.scale(logits, 1.0 / temperature)?;
    let probs = g.softmax_rows(scaled)?;

    // certainty weights, b×1, summing to b
    let logp = g.log(probs)?;
    let plogp = g.mul(probs, logp)?;
    let neg_entropy = g.sum_rows(plogp)?;
    let neg_entropy_row = g.transpose(neg_entropy)?;
    let w_row = g.softmax_rows(neg_entropy_row)?;
    let w_row = g.scale(w_row, b as f64)?;
    let w = g.transpose(w_row)?;

    let weighted = g.mul(probs, w)?;
    let weighted_t = g.transpose(weighted)?;
    let confusion = g.matmul(weighted_t, probs)?;
    let row_sums = g.sum_rows(confusion)?;
    let normalized = g.div(confusion, row_sums)?;

    let mut mask = Tensor::filled(&[c, c], 1.0);
    for j in 0..c {
        mask.data_mut()[j * c + j] = 0.0;
    }
    let mask = g.constant(mask)?;
    let abs = g.abs(normalized)?;
    let off = g.mul(abs, mask)?;
    let total = g.sum(off)?;
    let loss = g.scale(total, 1.0 / c as f64)?;
    Ok((normalized, loss))
}

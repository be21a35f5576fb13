use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Hard pseudo-labels for target rows with a confidence gate.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelState {
    pub classes: Vec<usize>,
    pub confidence: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl PseudoLabelState {
    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    /// One-hot rows for the given sample indices; rejected rows are zero.
    pub fn rows(&self, indices: &[usize], k: usize) -> Result<Tensor> {
        let mut data = vec![0.0; indices.len() * k];
        for (r, &i) in indices.iter().enumerate() {
            if self.accepted[i] {
                data[r * k + self.classes[i]] = 1.0;
            }
        }
        Tensor::matrix(indices.len(), k, data)
    }
}

/// Argmax class and max probability per row. Rows are accepted only once
/// `epoch >= warmup_epochs` and only if their confidence reaches `tau`.
pub fn update_pseudo_labels(probs: &Tensor, epoch: usize, warmup_epochs: usize, tau: f64) -> Result<PseudoLabelState> {
    let (n, k) = probs
        .dims2()
        .ok_or_else(|| Error::shape("update_pseudo_labels", probs.shape(), &[]))?;
    let warm = epoch >= warmup_epochs;
    let mut state = PseudoLabelState {
        classes: Vec::with_capacity(n),
        confidence: Vec::with_capacity(n),
        accepted: Vec::with_capacity(n),
    };
    for row in probs.data().chunks(k) {
        let (class, conf) =
            row.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (j, p)| if p > best.1 { (j, p) } else { best },
            );
        state.classes.push(class);
        state.confidence.push(conf);
        state.accepted.push(warm && conf >= tau);
    }
    Ok(state)
}

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Networks;

/// Overall and per-class accuracy of argmax predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes with no samples.
    pub per_class: Vec<Option<f64>>,
}

impl EvalReport {
    /// Mean over classes that have samples.
    pub fn mean_class_accuracy(&self) -> f64 {
        let present: Vec<f64> = self.per_class.iter().flatten().copied().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }
}

/// Scores predictions against ground truth.
pub fn score(predictions: &[usize], truth: &[i64], classes: usize) -> EvalReport {
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        let t = t as usize;
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let n: usize = totals.iter().sum();
    EvalReport {
        accuracy: if n == 0 {
            0.0
        } else {
            hits.iter().sum::<usize>() as f64 / n as f64
        },
        per_class: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
    }
}

pub fn argmax_rows(data: &[f64], cols: usize) -> Vec<usize> {
    data.chunks(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                .0
        })
        .collect()
}

/// Accuracy of the classifier on the dataset's evaluation channel.
pub fn evaluate(nets: &Networks, ds: &Dataset) -> Result<EvalReport> {
    let truth = ds
        .eval_labels()
        .ok_or_else(|| Error::Config("dataset has no evaluation labels".into()))?;
    if ds.is_empty() {
        return Ok(score(&[], &[], nets.classes()));
    }
    if ds.dim() != nets.extractor.input_dim() || ds.classes() != nets.classes() {
        return Err(Error::shape(
            "evaluate",
            &[nets.extractor.input_dim(), nets.classes()],
            &[ds.dim(), ds.classes()],
        ));
    }
    let (_, logits) = nets.predict(&ds.feature_tensor()?)?;
    Ok(score(
        &argmax_rows(logits.data(), nets.classes()),
        truth,
        nets.classes(),
    ))
}

/// `2(2ε̂ - 1)` for domain-classification accuracy `ε̂`. 0 means the
/// domains are indistinguishable, 2 perfectly separable.
pub fn proxy_a_distance(disc_accuracy: f64) -> f64 {
    2.0 * (2.0 * disc_accuracy - 1.0)
}

/// Fraction of rows the discriminator assigns to the right domain
/// (source when `d ≥ 0.5`).
pub fn discriminator_accuracy(nets: &Networks, source: &Dataset, target: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (ds, is_source) in [(source, true), (target, false)] {
        if ds.is_empty() {
            continue;
        }
        let d = nets.domain_probability(&ds.feature_tensor()?)?;
        correct += d.data().iter().filter(|&&p| (p >= 0.5) == is_source).count();
        total += ds.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = score(&[0, 1, 2, 1], &[0, 1, 2, 1], 3);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.per_class, vec![Some(1.0); 3]);
    }

    #[test]
    fn one_class_always_wrong() {
        let truth: Vec<i64> = (0..40).map(|i| i % 4).collect();
        let preds: Vec<usize> = truth.iter().map(|&t| if t == 2 { 0 } else { t as usize }).collect();
        let r = score(&preds, &truth, 4);
        assert_eq!(r.per_class[2], Some(0.0));
        assert_eq!(r.mean_class_accuracy(), 0.75);
    }

    #[test]
    fn random_binary_predictor_near_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let truth: Vec<i64> = (0..1000).map(|i| i % 2).collect();
        let preds: Vec<usize> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        let r = score(&preds, &truth, 2);
        assert!((r.accuracy - 0.5).abs() <= 0.05, "{}", r.accuracy);
    }

    #[test]
    fn proxy_distance_values() {
        assert_eq!(proxy_a_distance(0.5), 0.0);
        assert_eq!(proxy_a_distance(1.0), 2.0);
        assert_eq!(proxy_a_distance(0.75), 1.0);
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossWeights;

use super::{TrainConfig, Trainer};

/// The cumulative ladder: adversarial baseline, then MMD, MCC and PLMMD
/// switched on one at a time. The last row is the full objective.
pub fn ladder(full: &LossWeights) -> Vec<(&'static str, LossWeights)> {
    let base = LossWeights {
        gamma: 0.0,
        delta: 0.0,
        eta: 0.0,
        ..*full
    };
    let mmd = LossWeights {
        delta: full.delta,
        ..base
    };
    let mcc = LossWeights {
        gamma: full.gamma,
        ..mmd
    };
    vec![("clc+dis", base), ("+mmd", mmd), ("+mcc", mcc), ("+plmmd", *full)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub weights: LossWeights,
    /// Final target accuracy per seed, in input order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn render(&self) -> String {
        let mut s = format!("{:<10} {:>8} {:>8}\n", "row", "mean", "sd");
        for r in &self.rows {
            s.push_str(&format!("{:<10} {:>8.4} {:>8.4}\n", r.name, r.mean, r.std));
        }
        s
    }
}

/// Trains every ladder row on every `(seed, source, target)` triple and
/// reports final target accuracy. Jobs run on a pool of `threads` workers;
/// results do not depend on the thread count.
pub fn run_ablation(data: &[(u64, &Dataset, &Dataset)], base: &TrainConfig, threads: usize) -> Result<AblationTable> {
    if data.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    base.validate()?;
    let rows = ladder(&base.loss_weights);
    let jobs: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|r| (0..data.len()).map(move |s| (r, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, s)| {
                let (seed, source, target) = data[s];
                let config = TrainConfig {
                    loss_weights: rows[r].1,
                    seed,
                    ..base.clone()
                };
                let mut trainer = Trainer::new(config, source.dim(), source.classes())?;
                let records = trainer.fit(source, target, |_, _| Ok(()))?;
                match records.last() {
                    Some(rec) => Ok(rec.target_accuracy),
                    None => Ok(super::evaluate(trainer.networks(), target)?.accuracy),
                }
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<f64>>>()?;

    let table_rows = rows
        .iter()
        .enumerate()
        .map(|(r, (name, weights))| {
            let accuracies = results[r * data.len()..(r + 1) * data.len()].to_vec();
            let (mean, std) = mean_std(&accuracies);
            AblationRow {
                name: name.to_string(),
                weights: *weights,
                accuracies,
                mean,
                std,
            }
        })
        .collect();
    Ok(AblationTable {
        seeds: data.iter().map(|d| d.0).collect(),
        rows: table_rows,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_is_cumulative() {
        let full = TrainConfig::default().loss_weights;
        let l = ladder(&full);
        assert_eq!(l.len(), 4);
        assert_eq!((l[0].1.gamma, l[0].1.delta, l[0].1.eta), (0.0, 0.0, 0.0));
        assert_eq!(l[0].1.beta, full.beta);
        assert_eq!(l[1].1.delta, full.delta);
        assert_eq!((l[2].1.gamma, l[2].1.eta), (full.gamma, 0.0));
        assert_eq!(l[3].1, full);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }
}

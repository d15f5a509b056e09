//! Hyperparameter/model selection by summed min-max normalized scores.

use serde::{Deserialize, Serialize};

use super::{fit_monitored, DensitySpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub name: String,
    pub spec: DensitySpec,
}

#[derive(Clone, Debug)]
pub struct SelectionDataset {
    pub name: String,
    pub train: Vec<Vec<f64>>,
    pub eval: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectionReport {
    pub format_version: u32,
    pub configs: Vec<String>,
    pub datasets: Vec<String>,
    /// `scores[dataset][config]`.
    pub scores: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub summed: Vec<f64>,
    pub parameter_counts: Vec<usize>,
    pub selected: String,
    pub selected_index: usize,
}

/// Area under a per-epoch curve, averaged over the epoch span.
fn curve_auc(curve: &[f64]) -> f64 {
    match curve.len() {
        0 => f64::NAN,
        1 => curve[0],
        n => {
            let area: f64 = curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
            area / (n - 1) as f64
        }
    }
}

/// Normalizes `scores[dataset][config]` to `[0, 1]` within each dataset
/// and sums per config. A dataset where every config scores the same
/// contributes zero to all of them. Returns `(normalized, summed)`.
pub fn normalize_scores(scores: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = scores.first().map_or(0, |r| r.len());
    let mut summed = vec![0.0; k];
    let normalized = scores
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let span = hi - lo;
            row.iter()
                .enumerate()
                .map(|(j, &s)| {
                    let v = if span > 0.0 { (s - lo) / span } else { 0.0 };
                    summed[j] += v;
                    v
                })
                .collect()
        })
        .collect();
    (normalized, summed)
}

fn argmax_with_tiebreak(summed: &[f64], params: &[usize]) -> usize {
    let mut best = 0;
    for j in 1..summed.len() {
        if summed[j] > summed[best] || (summed[j] == summed[best] && params[j] < params[best]) {
            best = j;
        }
    }
    best
}

/// Scores every candidate on every dataset and picks the winner.
///
/// A dataset score is the held-out mean log-likelihood: its per-epoch area
/// under the curve for iterative fits, its final value for closed-form
/// fits. Ties on the summed normalized score go to the smaller model.
pub fn select_model(
    candidates: &[CandidateConfig],
    datasets: &[SelectionDataset],
    seed: u64,
) -> Result<ModelSelectionReport> {
    if candidates.is_empty() {
        return Err(Error::invalid("model selection needs at least one candidate"));
    }
    if datasets.is_empty() {
        return Err(Error::invalid("model selection needs at least one dataset"));
    }
    let mut scores = vec![vec![0.0; candidates.len()]; datasets.len()];
    let mut params = vec![0usize; candidates.len()];
    for (i, ds) in datasets.iter().enumerate() {
        if ds.train.len() < 2 || ds.eval.is_empty() {
            return Err(Error::invalid(format!(
                "dataset '{}' needs a train split of at least 2 and a nonempty eval split",
                ds.name
            )));
        }
        for (j, cand) in candidates.iter().enumerate() {
            let mut rng: Stream = stream(seed, "select-model", &[i as u64, j as u64]);
            let rep = fit_monitored(&cand.spec, &ds.train, Some(&ds.eval[..]), &mut rng)?;
            scores[i][j] = if cand.spec.is_closed_form() || rep.eval_curve.is_empty() {
                rep.model.mean_log_likelihood(&ds.eval)?
            } else {
                curve_auc(&rep.eval_curve)
            };
            params[j] = params[j].max(rep.model.parameter_count());
        }
    }
    let (normalized, summed) = normalize_scores(&scores);
    let best = argmax_with_tiebreak(&summed, &params);
    Ok(ModelSelectionReport {
        format_version: crate::FORMAT_VERSION,
        configs: candidates.iter().map(|c| c.name.clone()).collect(),
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        scores,
        normalized,
        summed,
        parameter_counts: params,
        selected: candidates[best].name.clone(),
        selected_index: best,
    })
}

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::goals::Goal;
use super::policy::Controller;
use super::reward::ThresholdMode;
use super::rollout::{rollout, StopAt};
use crate::density::DensitySpec;
use crate::entropy::{cross_entropy_upper_bound, ewga, normalized_auc};
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::rng;

/// When evaluation rollouts end.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStop {
    /// Run the full horizon.
    #[default]
    Horizon,
    /// Stop at the first success under the largest threshold.
    AtLargest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCurve {
    pub format_version: u32,
    pub mode: ThresholdMode,
    pub thresholds: Vec<f64>,
    pub success: Vec<f64>,
    pub auc: f64,
    pub goals: usize,
}

impl EvaluationCurve {
    /// Success rate at the largest threshold not above `eps`.
    pub fn success_at(&self, eps: f64) -> Option<f64> {
        self.thresholds.iter().rposition(|&t| t <= eps).map(|i| self.success[i])
    }
}

/// Parses `lo:hi:count` into `count` evenly spaced thresholds.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::invalid(format!("threshold grid '{text}' is not lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    linear_grid(lo, hi, n)
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(lo > 0.0) || !(hi >= lo) || (n > 1 && hi == lo) {
        return Err(Error::invalid("grid needs 0 < lo < hi and count >= 1"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// One rollout per goal from the reset state; success at each threshold
/// means the best reward along the trajectory beat it, which makes the
/// curve non-decreasing in the threshold.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_curve(
    env: &EnvSpec,
    controller: &dyn Controller,
    goals: &[Goal],
    thresholds: &[f64],
    mode: ThresholdMode,
    horizon: usize,
    stop: EvalStop,
    seed: u64,
) -> Result<EvaluationCurve> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[1] > w[0])) || !(thresholds[0] > 0.0) {
        return Err(Error::invalid("thresholds must be positive and strictly increasing"));
    }
    if goals.is_empty() {
        return Err(Error::invalid("no evaluation goals"));
    }
    let largest = *thresholds.last().unwrap();
    let best: Vec<f64> = goals
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let s = env.reset(&mut rng::stream(seed, "eval-reset", &[i as u64]));
            let rule = match stop {
                EvalStop::Horizon => None,
                EvalStop::AtLargest => Some(StopAt { eps: largest, mode }),
            };
            rollout(env, controller, &s, g, horizon, rule, false).map(|r| r.best_reward)
        })
        .collect::<Result<_>>()?;
    let success: Vec<f64> = thresholds
        .iter()
        .map(|&eps| best.iter().filter(|&&r| mode.succeeds(r, eps)).count() as f64 / best.len() as f64)
        .collect();
    let auc = normalized_auc(thresholds, &success)?;
    Ok(EvaluationCurve {
        format_version: crate::FORMAT_VERSION,
        mode,
        thresholds: thresholds.to_vec(),
        success,
        auc,
        goals: goals.len(),
    })
}

/// Cross-entropy of each evaluation set's flattened goal poses.
pub fn eval_set_entropies(
    eval_sets: &[(String, Vec<Goal>)],
    spec: &DensitySpec,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, (name, goals)) in eval_sets.iter().enumerate() {
        let xs: Vec<Vec<f64>> = goals.iter().map(|g| g.pose.flatten()).collect();
        let mut r = rng::stream(seed, "eval-entropy", &[i as u64]);
        let rep = cross_entropy_upper_bound(&xs, spec, 0.8, &mut r)?;
        out.insert(name.clone(), rep.cross_entropy);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEvaluation {
    pub format_version: u32,
    pub policies: Vec<String>,
    pub eval_sets: Vec<String>,
    /// `curves[p][e]`: policy `p` on evaluation set `e`.
    pub curves: Vec<Vec<EvaluationCurve>>,
    pub entropies: BTreeMap<String, f64>,
    pub ewga: BTreeMap<String, f64>,
}

/// Evaluates every policy on every evaluation set and scores each policy
/// by the entropy-weighted mean of its AUCs.
#[allow(clippy::too_many_arguments)]
pub fn cross_evaluate(
    env: &EnvSpec,
    policies: &[(String, &dyn Controller)],
    eval_sets: &[(String, Vec<Goal>)],
    entropies: &BTreeMap<String, f64>,
    thresholds: &[f64],
    mode: ThresholdMode,
    horizon: usize,
    seed: u64,
) -> Result<CrossEvaluation> {
    if policies.is_empty() || eval_sets.is_empty() {
        return Err(Error::invalid("cross evaluation needs policies and evaluation sets"));
    }
    let mut curves = Vec::with_capacity(policies.len());
    let mut scores = BTreeMap::new();
    for (pname, ctrl) in policies {
        let mut row = Vec::with_capacity(eval_sets.len());
        let mut aucs = BTreeMap::new();
        for (ename, goals) in eval_sets {
            let c = evaluate_curve(env, *ctrl, goals, thresholds, mode, horizon, EvalStop::Horizon, seed)?;
            aucs.insert(ename.clone(), c.auc);
            row.push(c);
        }
        scores.insert(pname.clone(), ewga(&aucs, entropies)?);
        curves.push(row);
    }
    Ok(CrossEvaluation {
        format_version: crate::FORMAT_VERSION,
        policies: policies.iter().map(|p| p.0.clone()).collect(),
        eval_sets: eval_sets.iter().map(|e| e.0.clone()).collect(),
        curves,
        entropies: entropies.clone(),
        ewga: scores,
    })
}

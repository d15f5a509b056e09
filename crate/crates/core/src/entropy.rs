//! Cross-entropy upper bounds, visitation grids and the entropy-weighted
//! goal achievement score. All logarithms are natural.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::density::{self, DensitySpec, Family};
use crate::env::Plane;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub const MIN_ENTROPY_STATES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub format_version: u32,
    pub family: Family,
    pub density: DensitySpec,
    pub fit_size: usize,
    pub eval_size: usize,
    /// `-mean log ρ̂` over the held-out part, in nats.
    pub cross_entropy: f64,
    /// One value per seed when aggregated with [`cross_entropy_over_seeds`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<f64>,
}

/// Shuffles the states, fits `spec` on the first `split_fraction` of them
/// and reports `-mean log ρ̂` over the rest.
pub fn cross_entropy_upper_bound<P: AsRef<[f64]> + Sync>(
    states: &[P],
    spec: &DensitySpec,
    split_fraction: f64,
    rng: &mut Stream,
) -> Result<EntropyReport> {
    if states.len() < MIN_ENTROPY_STATES {
        return Err(Error::invalid(format!(
            "cross-entropy needs at least {MIN_ENTROPY_STATES} states, got {}",
            states.len()
        )));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::invalid("split_fraction must lie in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.shuffle(rng);
    let n_fit = ((states.len() as f64) * split_fraction).round() as usize;
    let n_fit = n_fit.clamp(2, states.len() - 1);
    let fit: Vec<&[f64]> = order[..n_fit].iter().map(|&i| states[i].as_ref()).collect();
    let eval: Vec<&[f64]> = order[n_fit..].iter().map(|&i| states[i].as_ref()).collect();
    let model = density::fit(spec, &fit, rng)?;
    let ll = model.mean_log_likelihood(&eval)?;
    Ok(EntropyReport {
        format_version: crate::FORMAT_VERSION,
        family: spec.family(),
        density: spec.clone(),
        fit_size: fit.len(),
        eval_size: eval.len(),
        cross_entropy: -ll,
        per_seed: Vec::new(),
    })
}

/// Repeats the estimate with one stream per seed; `cross_entropy` is the
/// median of the per-seed values.
pub fn cross_entropy_over_seeds<P: AsRef<[f64]> + Sync>(
    states: &[P],
    spec: &DensitySpec,
    split_fraction: f64,
    streams: &mut [Stream],
) -> Result<EntropyReport> {
    if streams.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    let mut reports = Vec::with_capacity(streams.len());
    for r in streams.iter_mut() {
        reports.push(cross_entropy_upper_bound(states, spec, split_fraction, r)?);
    }
    let values: Vec<f64> = reports.iter().map(|r| r.cross_entropy).collect();
    let mut out = reports.swap_remove(0);
    out.cross_entropy = median(&values);
    out.per_seed = values;
    Ok(out)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// 2D visitation counts. Row 0 is the lowest `y` band; exports flip this so
/// the top row of an image is the largest `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub format_version: u32,
    pub dims: [usize; 2],
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub bins: usize,
    /// `counts[row * bins + col]`, `row` indexing `y`, `col` indexing `x`.
    pub counts: Vec<u64>,
    pub total: u64,
    /// States that fell outside the bounds and were clamped to an edge cell.
    pub clamped: u64,
}

pub fn frequency_grid<P: AsRef<[f64]>>(states: &[P], plane: &Plane, bins: usize) -> Result<FrequencyGrid> {
    if bins == 0 {
        return Err(Error::invalid("bins must be at least 1"));
    }
    if !(0..2).all(|a| plane.max[a] > plane.min[a]) {
        return Err(Error::invalid("grid bounds must have max > min"));
    }
    let mut counts = vec![0u64; bins * bins];
    let mut clamped = 0;
    for s in states {
        let s = s.as_ref();
        if plane.dims.iter().any(|&d| d >= s.len()) {
            return Err(Error::DimensionMismatch {
                expected: plane.dims[0].max(plane.dims[1]) + 1,
                got: s.len(),
            });
        }
        let p = plane.project(s);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state"));
        }
        let mut outside = false;
        let mut idx = [0usize; 2];
        for a in 0..2 {
            if p[a] < plane.min[a] || p[a] > plane.max[a] {
                outside = true;
            }
            let u = (p[a] - plane.min[a]) / (plane.max[a] - plane.min[a]);
            idx[a] = ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        }
        if outside {
            clamped += 1;
        }
        counts[idx[1] * bins + idx[0]] += 1;
    }
    Ok(FrequencyGrid {
        format_version: crate::FORMAT_VERSION,
        dims: plane.dims,
        min: plane.min,
        max: plane.max,
        bins,
        counts,
        total: states.len() as u64,
        clamped,
    })
}

impl FrequencyGrid {
    pub fn count(&self, col: usize, row: usize) -> u64 {
        self.counts[row * self.bins + col]
    }

    /// `ln(1 + count)` per cell, same layout as `counts`.
    pub fn log_frequency(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).ln_1p()).collect()
    }

    pub fn nonzero_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Rows from largest `y` to smallest.
    fn rows_top_down(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.bins).rev()
    }

    /// Log-frequencies as CSV, top row = largest `y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows_top_down() {
            let line: Vec<String> = row.iter().map(|&c| format!("{}", (c as f64).ln_1p())).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Plain (P2) PGM, maxval 255, row-major, top row = largest `y`. Pixel
    /// values are `round(255 · ln(1+c) / ln(1+max c))`; an empty grid is
    /// all zeros.
    pub fn to_pgm(&self) -> String {
        let top = self.counts.iter().copied().max().unwrap_or(0);
        let denom = (top as f64).ln_1p();
        let mut out = String::new();
        let _ = writeln!(out, "P2\n{} {}\n255", self.bins, self.bins);
        for row in self.rows_top_down() {
            let px: Vec<String> = row
                .iter()
                .map(|&c| {
                    if top == 0 {
                        "0".to_string()
                    } else {
                        let v = (255.0 * (c as f64).ln_1p() / denom).round() as u32;
                        v.min(255).to_string()
                    }
                })
                .collect();
            out.push_str(&px.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Entropy-weighted mean of AUCs: `Σ e^{H_s} AUC_s / Σ e^{H_s}`.
pub fn ewga(auc: &BTreeMap<String, f64>, entropy: &BTreeMap<String, f64>) -> Result<f64> {
    if auc.is_empty() {
        return Err(Error::invalid("ewga needs at least one evaluation set"));
    }
    if auc.len() != entropy.len() || auc.keys().any(|k| !entropy.contains_key(k)) {
        return Err(Error::invalid("ewga: AUC and entropy maps have different keys"));
    }
    for (k, &a) in auc {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("ewga: AUC for '{k}' outside [0,1]")));
        }
        if !entropy[k].is_finite() {
            return Err(Error::invalid(format!("ewga: entropy for '{k}' is not finite")));
        }
    }
    let top = entropy.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &a) in auc {
        let w = (entropy[k] - top).exp();
        num += w * a;
        den += w;
    }
    Ok(num / den)
}

/// Trapezoid area under `ys(xs)`, divided by the `x` range. A single point
/// returns its value.
pub fn normalized_auc(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::invalid("auc needs equal-length, nonempty inputs"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("auc abscissae must be strictly increasing"));
    }
    if xs.len() == 1 {
        return Ok(ys[0]);
    }
    let area: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    Ok(area / (xs[xs.len() - 1] - xs[0]))
}

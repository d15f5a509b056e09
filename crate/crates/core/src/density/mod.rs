//! Density estimators behind a single fitted-model type.
//!
//! Every model reports a floored log-density: queries far outside the
//! support return [`LOG_DENSITY_FLOOR`] instead of `-inf`, which keeps
//! inverse-density weights finite.

mod gaussian;
mod gmm;
mod histogram;
mod kde;
mod select;

pub use gaussian::{GaussianModel, MultivariateNormal};
pub use gmm::GmmModel;
pub use histogram::HistogramModel;
pub use kde::KdeModel;
pub use select::{normalize_scores, select_model, CandidateConfig, ModelSelectionReport, SelectionDataset};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// `ln(1e-12)`.
pub const LOG_DENSITY_FLOOR: f64 = -27.631_021_115_928_547;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Gmm,
    Kde,
    Histogram,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Family::Gaussian),
            "gmm" => Ok(Family::Gmm),
            "kde" => Ok(Family::Kde),
            "histogram" => Ok(Family::Histogram),
            other => Err(Error::invalid(format!("unknown density family '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Gmm => "gmm",
            Family::Kde => "kde",
            Family::Histogram => "histogram",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Scott,
    Silverman,
    /// One value per dimension, or a single value for all of them.
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Family plus hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DensitySpec {
    Gaussian {
        /// Added to the covariance diagonal before factorization.
        #[serde(default)]
        ridge: f64,
    },
    Gmm {
        components: usize,
        #[serde(default = "default_gmm_iters")]
        max_iters: usize,
        #[serde(default = "default_gmm_tol")]
        tol: f64,
        #[serde(default = "default_gmm_restarts")]
        restarts: usize,
        #[serde(default)]
        reg_covar: f64,
    },
    Kde {
        #[serde(default = "default_bandwidth")]
        bandwidth: Bandwidth,
    },
    Histogram {
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
        #[serde(default)]
        bounds: Option<Bounds>,
    },
}

fn default_gmm_iters() -> usize {
    200
}
fn default_gmm_tol() -> f64 {
    1e-8
}
fn default_gmm_restarts() -> usize {
    3
}
fn default_bandwidth() -> Bandwidth {
    Bandwidth::Scott
}
fn default_bins() -> usize {
    32
}
fn default_smoothing() -> f64 {
    0.5
}

impl DensitySpec {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Gaussian => DensitySpec::Gaussian { ridge: 0.0 },
            Family::Gmm => DensitySpec::gmm(4),
            Family::Kde => DensitySpec::Kde {
                bandwidth: Bandwidth::Scott,
            },
            Family::Histogram => DensitySpec::histogram(default_bins()),
        }
    }

    pub fn gmm(components: usize) -> Self {
        DensitySpec::Gmm {
            components,
            max_iters: default_gmm_iters(),
            tol: default_gmm_tol(),
            restarts: default_gmm_restarts(),
            reg_covar: 0.0,
        }
    }

    pub fn histogram(bins: usize) -> Self {
        DensitySpec::Histogram {
            bins,
            smoothing: default_smoothing(),
            bounds: None,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            DensitySpec::Gaussian { .. } => Family::Gaussian,
            DensitySpec::Gmm { .. } => Family::Gmm,
            DensitySpec::Kde { .. } => Family::Kde,
            DensitySpec::Histogram { .. } => Family::Histogram,
        }
    }

    /// Fits by closed form rather than by iterating.
    pub fn is_closed_form(&self) -> bool {
        !matches!(self, DensitySpec::Gmm { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FittedDensity {
    Gaussian(GaussianModel),
    Gmm(GmmModel),
    Kde(KdeModel),
    Histogram(HistogramModel),
}

/// A fitted, immutable density model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub format_version: u32,
    pub floor: f64,
    #[serde(flatten)]
    pub fitted: FittedDensity,
}

impl DensityModel {
    pub fn new(fitted: FittedDensity) -> Self {
        DensityModel {
            format_version: crate::FORMAT_VERSION,
            floor: LOG_DENSITY_FLOOR,
            fitted,
        }
    }

    pub fn family(&self) -> Family {
        match &self.fitted {
            FittedDensity::Gaussian(_) => Family::Gaussian,
            FittedDensity::Gmm(_) => Family::Gmm,
            FittedDensity::Kde(_) => Family::Kde,
            FittedDensity::Histogram(_) => Family::Histogram,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.fitted {
            FittedDensity::Gaussian(m) => m.dim(),
            FittedDensity::Gmm(m) => m.dim(),
            FittedDensity::Kde(m) => m.dim(),
            FittedDensity::Histogram(m) => m.dim(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match &self.fitted {
            FittedDensity::Gaussian(m) => m.parameter_count(),
            FittedDensity::Gmm(m) => m.parameter_count(),
            FittedDensity::Kde(m) => m.parameter_count(),
            FittedDensity::Histogram(m) => m.parameter_count(),
        }
    }

    fn raw_log_density(&self, x: &[f64]) -> f64 {
        match &self.fitted {
            FittedDensity::Gaussian(m) => m.log_density(x),
            FittedDensity::Gmm(m) => m.log_density(x),
            FittedDensity::Kde(m) => m.log_density(x),
            FittedDensity::Histogram(m) => m.log_density(x),
        }
    }

    /// Floored log-density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("density query has non-finite entries"));
        }
        Ok(self.floored(self.raw_log_density(x)))
    }

    fn floored(&self, v: f64) -> f64 {
        if v.is_nan() {
            self.floor
        } else {
            v.max(self.floor)
        }
    }

    /// Batch query, parallel over points, same results as repeated
    /// [`DensityModel::log_density`].
    pub fn log_densities<P: AsRef<[f64]> + Sync>(&self, xs: &[P]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.log_density(x.as_ref())).collect()
    }

    pub fn mean_log_likelihood<P: AsRef<[f64]> + Sync>(&self, xs: &[P]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::invalid("mean log-likelihood of an empty set"));
        }
        let lds = self.log_densities(xs)?;
        Ok(lds.iter().sum::<f64>() / lds.len() as f64)
    }
}

/// Model plus everything recorded while fitting it.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: DensityModel,
    pub warnings: Vec<String>,
    /// Mean training log-likelihood per iteration (iterative fits only).
    pub train_curve: Vec<f64>,
    /// Mean held-out log-likelihood per iteration, when held-out data was
    /// supplied (iterative fits only).
    pub eval_curve: Vec<f64>,
}

pub fn fit<P: AsRef<[f64]>>(spec: &DensitySpec, samples: &[P], rng: &mut Stream) -> Result<DensityModel> {
    fit_monitored::<P, P>(spec, samples, None, rng).map(|r| r.model)
}

/// Fits and records training curves. `eval` is scored after every
/// iteration of iterative fits.
pub fn fit_monitored<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    spec: &DensitySpec,
    samples: &[P],
    eval: Option<&[Q]>,
    rng: &mut Stream,
) -> Result<FitReport> {
    let data = Samples::from_rows(samples)?;
    if data.n < 2 {
        return Err(Error::invalid("density fit needs at least two samples"));
    }
    let eval = match eval {
        Some(e) if !e.is_empty() => {
            let e = Samples::from_rows(e)?;
            if e.dim != data.dim {
                return Err(Error::DimensionMismatch {
                    expected: data.dim,
                    got: e.dim,
                });
            }
            Some(e)
        }
        _ => None,
    };
    let mut warnings = Vec::new();
    let mut train_curve = Vec::new();
    let mut eval_curve = Vec::new();
    let fitted = match spec {
        DensitySpec::Gaussian { ridge } => FittedDensity::Gaussian(GaussianModel::fit(&data, *ridge, &mut warnings)?),
        DensitySpec::Gmm {
            components,
            max_iters,
            tol,
            restarts,
            reg_covar,
        } => {
            let opts = gmm::GmmOptions {
                components: *components,
                max_iters: *max_iters,
                tol: *tol,
                restarts: *restarts,
                reg_covar: *reg_covar,
            };
            let out = gmm::fit(&data, &opts, eval.as_ref(), rng, &mut warnings)?;
            train_curve = out.train_curve;
            eval_curve = out.eval_curve;
            FittedDensity::Gmm(out.model)
        }
        DensitySpec::Kde { bandwidth } => FittedDensity::Kde(KdeModel::fit(&data, bandwidth, &mut warnings)?),
        DensitySpec::Histogram {
            bins,
            smoothing,
            bounds,
        } => FittedDensity::Histogram(HistogramModel::fit(
            &data,
            *bins,
            *smoothing,
            bounds.as_ref(),
            &mut warnings,
        )?),
    };
    Ok(FitReport {
        model: DensityModel::new(fitted),
        warnings,
        train_curve,
        eval_curve,
    })
}

/// Row-major sample matrix.
#[derive(Clone, Debug)]
pub(crate) struct Samples {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn from_rows<P: AsRef<[f64]>>(rows: &[P]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("empty sample"));
        };
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(Error::invalid("samples have dimension zero"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("samples contain non-finite values"));
            }
            data.extend_from_slice(r);
        }
        Ok(Samples {
            n: rows.len(),
            dim,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// Maximum-likelihood covariance, flat row-major.
    pub fn covariance(&self, mean: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut c = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for r in self.rows() {
            for k in 0..d {
                diff[k] = r[k] - mean[k];
            }
            for a in 0..d {
                for b in a..d {
                    c[a * d + b] += diff[a] * diff[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = c[a * d + b] / self.n as f64;
                c[a * d + b] = v;
                c[b * d + a] = v;
            }
        }
        c
    }

    pub fn std_devs(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.dim];
        for r in self.rows() {
            for k in 0..self.dim {
                v[k] += (r[k] - mean[k]).powi(2);
            }
        }
        // unbiased, as used by bandwidth rules
        let denom = (self.n.max(2) - 1) as f64;
        v.iter().map(|s| (s / denom).sqrt()).collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn spec_json_is_family_tagged() {
        let spec = DensitySpec::gmm(3);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"family\":\"gmm\""));
        let parsed: DensitySpec = serde_json::from_str(r#"{"family":"kde"}"#).unwrap();
        assert_eq!(parsed, DensitySpec::default_for(Family::Kde));
        let parsed: DensitySpec = serde_json::from_str(r#"{"family":"kde","bandwidth":{"fixed":[0.5]}}"#).unwrap();
        assert!(matches!(
            parsed,
            DensitySpec::Kde {
                bandwidth: Bandwidth::Fixed(_)
            }
        ));
    }

    #[test]
    fn empty_and_single_sample_rejected() {
        let mut rng = stream(0, "t", &[]);
        let empty: Vec<Vec<f64>> = vec![];
        for fam in [Family::Gaussian, Family::Gmm, Family::Kde, Family::Histogram] {
            let spec = DensitySpec::default_for(fam);
            assert!(fit(&spec, &empty, &mut rng).is_err());
            assert!(fit(&spec, &[vec![1.0, 2.0]], &mut rng).is_err());
        }
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let mut rng = stream(0, "t", &[]);
        let rows = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            fit(&DensitySpec::default_for(Family::Gaussian), &rows, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn query_dimension_checked() {
        let mut rng = stream(0, "t", &[]);
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        for fam in [Family::Gaussian, Family::Kde, Family::Histogram] {
            let m = fit(&DensitySpec::default_for(fam), &rows, &mut rng).unwrap();
            assert!(matches!(
                m.log_density(&[0.0]),
                Err(Error::DimensionMismatch { expected: 2, got: 1 })
            ));
        }
    }

    #[test]
    fn far_queries_hit_the_floor() {
        let mut rng = stream(0, "t", &[]);
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1, (i % 7) as f64 * 0.1]).collect();
        for fam in [Family::Gaussian, Family::Gmm, Family::Kde, Family::Histogram] {
            let m = fit(&DensitySpec::default_for(fam), &rows, &mut rng).unwrap();
            let v = m.log_density(&[1e6, -1e6]).unwrap();
            assert_eq!(v, LOG_DENSITY_FLOOR, "{fam:?}");
        }
    }

    #[test]
    fn model_json_roundtrip_preserves_log_density() {
        let mut rng = stream(3, "t", &[]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 3.0, (t * 1.3).cos()]
            })
            .collect();
        for fam in [Family::Gaussian, Family::Gmm, Family::Kde, Family::Histogram] {
            let m = fit(&DensitySpec::default_for(fam), &rows, &mut rng).unwrap();
            let text = serde_json::to_string(&m).unwrap();
            assert!(text.contains(&format!("\"family\":\"{}\"", fam.name())));
            let back: DensityModel = serde_json::from_str(&text).unwrap();
            for q in [[0.1, 0.2], [2.0, -0.5], [-2.5, 0.9]] {
                assert_eq!(m.log_density(&q).unwrap(), back.log_density(&q).unwrap());
            }
        }
    }
}

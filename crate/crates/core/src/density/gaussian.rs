use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Samples;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Full-covariance normal with a cached Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalRepr", into = "NormalRepr")]
pub struct MultivariateNormal {
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub covariance: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct NormalRepr {
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

impl TryFrom<NormalRepr> for MultivariateNormal {
    type Error = Error;
    fn try_from(r: NormalRepr) -> Result<Self> {
        MultivariateNormal::new(r.mean, r.covariance)
    }
}

impl From<MultivariateNormal> for NormalRepr {
    fn from(m: MultivariateNormal) -> Self {
        NormalRepr {
            mean: m.mean,
            covariance: m.covariance,
        }
    }
}

impl MultivariateNormal {
    /// Fails if the covariance is not symmetric positive definite.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: covariance.len(),
            });
        }
        let m = DMatrix::from_row_slice(d, d, &covariance);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut flat = vec![0.0; d * d];
        let mut log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                flat[i * d + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::Numerical("covariance determinant underflow".into()));
        }
        Ok(MultivariateNormal {
            mean,
            covariance,
            chol: flat,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    /// Like [`MultivariateNormal::new`], but on failure adds a growing
    /// multiple of the identity until the factorization succeeds. Returns
    /// the jitter that was added (zero when none was needed).
    pub fn with_jitter(mean: Vec<f64>, mut covariance: Vec<f64>) -> Result<(Self, f64)> {
        if let Ok(m) = MultivariateNormal::new(mean.clone(), covariance.clone()) {
            return Ok((m, 0.0));
        }
        let d = mean.len();
        let scale = (0..d).map(|i| covariance[i * d + i].abs()).sum::<f64>() / d as f64;
        let mut jitter = 1e-9 * scale.max(1.0);
        let mut added = 0.0;
        for _ in 0..16 {
            for i in 0..d {
                covariance[i * d + i] += jitter - added;
            }
            added = jitter;
            if let Ok(m) = MultivariateNormal::new(mean.clone(), covariance.clone()) {
                return Ok((m, jitter));
            }
            jitter *= 10.0;
        }
        Err(Error::Numerical("covariance stays singular after jitter".into()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // forward substitution L z = x - mean, accumulating |z|^2
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut maha = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= row[j] * z[j];
            }
            let zi = s / row[i];
            z[i] = zi;
            maha += zi * zi;
        }
        self.log_norm - 0.5 * maha
    }
}

/// Single full-covariance Gaussian fitted by maximum likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub normal: MultivariateNormal,
    pub jitter: f64,
}

impl GaussianModel {
    pub(crate) fn fit(data: &Samples, ridge: f64, warnings: &mut Vec<String>) -> Result<Self> {
        let mean = data.mean();
        let mut cov = data.covariance(&mean);
        let d = data.dim;
        for i in 0..d {
            cov[i * d + i] += ridge;
        }
        let (normal, jitter) = MultivariateNormal::with_jitter(mean, cov)?;
        if jitter > 0.0 {
            warnings.push(format!("degenerate covariance: added jitter {jitter:e}"));
        }
        Ok(GaussianModel { normal, jitter })
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    pub fn parameter_count(&self) -> usize {
        let d = self.dim();
        d + d * (d + 1) / 2
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.normal.log_density(x)
    }
}

use serde::{Deserialize, Serialize};

use super::{Bandwidth, Samples};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MIN_BANDWIDTH: f64 = 1e-6;

/// Gaussian product-kernel density estimate with one bandwidth per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KdeRepr", into = "KdeRepr")]
pub struct KdeModel {
    pub bandwidth: Vec<f64>,
    dim: usize,
    points: Vec<f64>,
    /// Points divided componentwise by the bandwidth.
    scaled: Vec<f64>,
    inv_bw: Vec<f64>,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct KdeRepr {
    bandwidth: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl TryFrom<KdeRepr> for KdeModel {
    type Error = Error;
    fn try_from(r: KdeRepr) -> Result<Self> {
        let s = Samples::from_rows(&r.points)?;
        KdeModel::build(s, r.bandwidth)
    }
}

impl From<KdeModel> for KdeRepr {
    fn from(k: KdeModel) -> Self {
        KdeRepr {
            points: k.points.chunks_exact(k.dim).map(|c| c.to_vec()).collect(),
            bandwidth: k.bandwidth,
        }
    }
}

/// Scott's or Silverman's rule per axis.
pub(crate) fn rule_bandwidth(data: &Samples, rule: &Bandwidth) -> Vec<f64> {
    let n = data.n as f64;
    let d = data.dim as f64;
    let factor = match rule {
        Bandwidth::Silverman => (n * (d + 2.0) / 4.0).powf(-1.0 / (d + 4.0)),
        _ => n.powf(-1.0 / (d + 4.0)),
    };
    data.std_devs().iter().map(|s| s * factor).collect()
}

impl KdeModel {
    pub(crate) fn fit(data: &Samples, rule: &Bandwidth, warnings: &mut Vec<String>) -> Result<Self> {
        let mut bw = match rule {
            Bandwidth::Fixed(v) if v.len() == 1 => vec![v[0]; data.dim],
            Bandwidth::Fixed(v) if v.len() == data.dim => v.clone(),
            Bandwidth::Fixed(v) => {
                return Err(Error::DimensionMismatch {
                    expected: data.dim,
                    got: v.len(),
                })
            }
            rule => rule_bandwidth(data, rule),
        };
        if let Bandwidth::Fixed(_) = rule {
            if bw.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::invalid("kde bandwidth must be positive"));
            }
        }
        for (k, h) in bw.iter_mut().enumerate() {
            if !(*h >= MIN_BANDWIDTH) {
                warnings.push(format!("kde axis {k}: degenerate spread, bandwidth floored"));
                *h = MIN_BANDWIDTH;
            }
        }
        KdeModel::build(data.clone(), bw)
    }

    fn build(data: Samples, bandwidth: Vec<f64>) -> Result<Self> {
        if bandwidth.len() != data.dim {
            return Err(Error::DimensionMismatch {
                expected: data.dim,
                got: bandwidth.len(),
            });
        }
        let inv_bw: Vec<f64> = bandwidth.iter().map(|h| 1.0 / h).collect();
        let scaled = data
            .data
            .chunks_exact(data.dim)
            .flat_map(|r| r.iter().zip(&inv_bw).map(|(x, ih)| x * ih))
            .collect();
        let log_norm =
            -(data.n as f64).ln() - bandwidth.iter().map(|h| h.ln()).sum::<f64>() - 0.5 * data.dim as f64 * LN_2PI;
        Ok(KdeModel {
            dim: data.dim,
            points: data.data,
            scaled,
            inv_bw,
            bandwidth,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.points.len() + self.dim
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = [0.0f64; 32];
        let mut heap;
        let q: &mut [f64] = if d <= 32 {
            &mut q[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for k in 0..d {
            q[k] = x[k] * self.inv_bw[k];
        }
        // streaming log-sum-exp over kernel exponents
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for p in self.scaled.chunks_exact(d) {
            let mut s = 0.0;
            for k in 0..d {
                let t = q[k] - p[k];
                s += t * t;
            }
            let v = -0.5 * s;
            if v > max {
                sum = sum * (max - v).exp() + 1.0;
                max = v;
            } else {
                sum += (v - max).exp();
            }
        }
        self.log_norm + max + sum.ln()
    }
}

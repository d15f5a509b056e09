use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Bounds, Samples};
use crate::error::{Error, Result};

const DENSE_LIMIT: u64 = 1 << 22;
const MIN_WIDTH: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
enum Counts {
    Dense(Vec<u32>),
    Sparse(BTreeMap<u64, u32>),
}

impl Counts {
    fn get(&self, idx: u64) -> u32 {
        match self {
            Counts::Dense(v) => v[idx as usize],
            Counts::Sparse(m) => m.get(&idx).copied().unwrap_or(0),
        }
    }
}

/// Regular-grid histogram with additive smoothing.
///
/// Cell `c` has density `(count_c + alpha) / (n + alpha * cells) / volume`,
/// so the density integrates to one over the grid box. Outside the box the
/// density is zero and queries land on the floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct HistogramModel {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub bins: usize,
    pub smoothing: f64,
    pub n: usize,
    counts: Counts,
    cells: u64,
    inv_width: Vec<f64>,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    min: Vec<f64>,
    max: Vec<f64>,
    bins: usize,
    smoothing: f64,
    n: usize,
    /// `[linear cell index, count]`, ascending, nonzero counts only.
    counts: Vec<(u64, u32)>,
}

impl TryFrom<HistogramRepr> for HistogramModel {
    type Error = Error;
    fn try_from(r: HistogramRepr) -> Result<Self> {
        let mut h = HistogramModel::empty(r.min, r.max, r.bins, r.smoothing)?;
        for (idx, c) in r.counts {
            if idx >= h.cells {
                return Err(Error::Format(format!("histogram cell {idx} out of range")));
            }
            h.add(idx, c);
        }
        h.n = r.n;
        h.finish();
        Ok(h)
    }
}

impl From<HistogramModel> for HistogramRepr {
    fn from(h: HistogramModel) -> Self {
        let counts = match &h.counts {
            Counts::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i as u64, c))
                .collect(),
            Counts::Sparse(m) => m.iter().map(|(&i, &c)| (i, c)).collect(),
        };
        HistogramRepr {
            min: h.min,
            max: h.max,
            bins: h.bins,
            smoothing: h.smoothing,
            n: h.n,
            counts,
        }
    }
}

impl HistogramModel {
    fn empty(min: Vec<f64>, max: Vec<f64>, bins: usize, smoothing: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin per axis"));
        }
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::invalid("histogram bounds must have matching nonzero length"));
        }
        if !(smoothing >= 0.0) {
            return Err(Error::invalid("histogram smoothing must be non-negative"));
        }
        let mut cells: u64 = 1;
        for _ in 0..min.len() {
            cells = cells
                .checked_mul(bins as u64)
                .filter(|&c| c <= 1 << 62)
                .ok_or_else(|| Error::invalid("histogram grid has too many cells"))?;
        }
        let mut inv_width = Vec::with_capacity(min.len());
        for (lo, hi) in min.iter().zip(&max) {
            if !(hi > lo) {
                return Err(Error::invalid("histogram bounds must satisfy min < max"));
            }
            inv_width.push(bins as f64 / (hi - lo));
        }
        let counts = if cells <= DENSE_LIMIT {
            Counts::Dense(vec![0; cells as usize])
        } else {
            Counts::Sparse(BTreeMap::new())
        };
        Ok(HistogramModel {
            min,
            max,
            bins,
            smoothing,
            n: 0,
            counts,
            cells,
            inv_width,
            log_norm: 0.0,
        })
    }

    fn add(&mut self, idx: u64, c: u32) {
        match &mut self.counts {
            Counts::Dense(v) => v[idx as usize] += c,
            Counts::Sparse(m) => *m.entry(idx).or_insert(0) += c,
        }
    }

    fn finish(&mut self) {
        let log_volume: f64 = self.inv_width.iter().map(|iw| -iw.ln()).sum();
        let total = self.n as f64 + self.smoothing * self.cells as f64;
        self.log_norm = -total.ln() - log_volume;
    }

    pub(crate) fn fit(
        data: &Samples,
        bins: usize,
        smoothing: f64,
        bounds: Option<&Bounds>,
        warnings: &mut Vec<String>,
    ) -> Result<Self> {
        let (min, max) = match bounds {
            Some(b) => {
                if b.min.len() != data.dim || b.max.len() != data.dim {
                    return Err(Error::DimensionMismatch {
                        expected: data.dim,
                        got: b.min.len(),
                    });
                }
                (b.min.clone(), b.max.clone())
            }
            None => {
                let mut lo = vec![f64::INFINITY; data.dim];
                let mut hi = vec![f64::NEG_INFINITY; data.dim];
                for r in data.rows() {
                    for k in 0..data.dim {
                        lo[k] = lo[k].min(r[k]);
                        hi[k] = hi[k].max(r[k]);
                    }
                }
                for k in 0..data.dim {
                    if hi[k] - lo[k] < MIN_WIDTH {
                        warnings.push(format!("histogram axis {k}: zero extent, widened"));
                        lo[k] -= 0.5 * MIN_WIDTH;
                        hi[k] += 0.5 * MIN_WIDTH;
                    }
                }
                (lo, hi)
            }
        };
        let mut h = HistogramModel::empty(min, max, bins, smoothing)?;
        let mut outside = 0usize;
        for r in data.rows() {
            match h.cell_index(r) {
                Some(idx) => {
                    h.add(idx, 1);
                    h.n += 1;
                }
                None => outside += 1,
            }
        }
        if outside > 0 {
            warnings.push(format!("histogram: {outside} samples outside the bounds ignored"));
        }
        if h.n == 0 {
            return Err(Error::invalid("histogram: no samples inside the bounds"));
        }
        h.finish();
        Ok(h)
    }

    /// Linear cell index (first axis most significant), `None` outside
    /// the closed box. Points on the upper face belong to the last cell.
    pub fn cell_index(&self, x: &[f64]) -> Option<u64> {
        let mut idx: u64 = 0;
        for (k, &v) in x.iter().enumerate().take(self.min.len()) {
            if !(v >= self.min[k] && v <= self.max[k]) {
                return None;
            }
            let b = (((v - self.min[k]) * self.inv_width[k]) as usize).min(self.bins - 1);
            idx = idx * self.bins as u64 + b as u64;
        }
        Some(idx)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn cells(&self) -> u64 {
        self.cells
    }

    pub fn cell_volume(&self) -> f64 {
        self.inv_width.iter().map(|iw| 1.0 / iw).product()
    }

    pub fn count(&self, idx: u64) -> u32 {
        self.counts.get(idx)
    }

    pub fn parameter_count(&self) -> usize {
        self.cells.min(usize::MAX as u64) as usize
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self.cell_index(x) {
            Some(idx) => (self.counts.get(idx) as f64 + self.smoothing).ln() + self.log_norm,
            None => f64::NEG_INFINITY,
        }
    }

    /// Log-density of the cell with linear index `idx`.
    pub fn cell_log_density(&self, idx: u64) -> f64 {
        (self.counts.get(idx) as f64 + self.smoothing).ln() + self.log_norm
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fit, Bounds, DensitySpec, FittedDensity};
    use crate::rng::stream;
    use rand::Rng;

    fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "uniform", &[]);
        (0..n)
            .map(|_| vec![rng.random_range(lo..hi), rng.random_range(lo..hi)])
            .collect()
    }

    #[test]
    fn cell_masses_sum_to_one() {
        let rows = uniform(0, 5000, -3.0, 7.0);
        let mut rng = stream(0, "h", &[]);
        for (bins, alpha) in [(10, 0.0), (16, 0.5), (7, 2.0)] {
            let spec = DensitySpec::Histogram {
                bins,
                smoothing: alpha,
                bounds: None,
            };
            let m = fit(&spec, &rows, &mut rng).unwrap();
            let FittedDensity::Histogram(h) = &m.fitted else {
                panic!()
            };
            let vol = h.cell_volume();
            let total: f64 = (0..h.cells()).map(|c| h.cell_log_density(c).exp() * vol).sum();
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn uniform_cells_within_multinomial_bounds() {
        // box [0, 10]^2, 20x20 cells, n = 1e5: each count ~ Binomial(n, 1/400)
        let n = 100_000;
        let rows = uniform(1, n, 0.0, 10.0);
        let mut rng = stream(1, "h", &[]);
        let spec = DensitySpec::Histogram {
            bins: 20,
            smoothing: 0.0,
            bounds: Some(Bounds {
                min: vec![0.0, 0.0],
                max: vec![10.0, 10.0],
            }),
        };
        let m = fit(&spec, &rows, &mut rng).unwrap();
        let FittedDensity::Histogram(h) = &m.fitted else {
            panic!()
        };
        let p = 1.0 / 400.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let vol = h.cell_volume();
        let target = 1.0 / 100.0;
        // 3 sigma on counts, translated to density units
        let tol = 3.0 * sd / (n as f64 * vol);
        let mut violations = 0;
        for c in 0..h.cells() {
            if (h.cell_log_density(c).exp() - target).abs() > tol {
                violations += 1;
            }
        }
        // about 0.27% of 400 cells expected outside 3 sigma
        assert!(violations <= 4, "{violations} cells outside 3 sigma");
    }

    #[test]
    fn outside_box_is_zero_density() {
        let rows = uniform(2, 100, 0.0, 1.0);
        let mut rng = stream(2, "h", &[]);
        let m = fit(&DensitySpec::histogram(4), &rows, &mut rng).unwrap();
        let FittedDensity::Histogram(h) = &m.fitted else {
            panic!()
        };
        assert_eq!(h.log_density(&[2.0, 0.5]), f64::NEG_INFINITY);
    }

    #[test]
    fn high_dimensional_grid_is_sparse() {
        let mut rng = stream(3, "h", &[]);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..8).map(|_| rng.random::<f64>()).collect())
            .collect();
        let m = fit(&DensitySpec::histogram(16), &rows, &mut rng).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: super::super::DensityModel = serde_json::from_str(&text).unwrap();
        assert_eq!(m.log_density(&rows[0]).unwrap(), back.log_density(&rows[0]).unwrap());
    }
}

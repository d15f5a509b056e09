use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::MultivariateNormal;
use super::{log_sum_exp, Samples, LOG_DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub components: Vec<MultivariateNormal>,
    /// Mean training log-likelihood at convergence.
    pub train_log_likelihood: f64,
    pub iterations: usize,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn parameter_count(&self) -> usize {
        let d = self.dim();
        let m = self.components.len();
        m * (d + d * (d + 1) / 2) + (m - 1)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0f64; 64];
        let m = self.components.len();
        if m <= buf.len() {
            for (j, c) in self.components.iter().enumerate() {
                buf[j] = self.weights[j].ln() + c.log_density(x);
            }
            log_sum_exp(&buf[..m])
        } else {
            let v: Vec<f64> = self
                .components
                .iter()
                .zip(&self.weights)
                .map(|(c, w)| w.ln() + c.log_density(x))
                .collect();
            log_sum_exp(&v)
        }
    }
}

pub(crate) struct GmmOptions {
    pub components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub reg_covar: f64,
}

pub(crate) struct GmmFit {
    pub model: GmmModel,
    pub train_curve: Vec<f64>,
    pub eval_curve: Vec<f64>,
}

/// EM with k-means++ seeding; the restart with the best final training
/// likelihood wins.
pub(crate) fn fit(
    data: &Samples,
    opts: &GmmOptions,
    eval: Option<&Samples>,
    rng: &mut Stream,
    warnings: &mut Vec<String>,
) -> Result<GmmFit> {
    let m = opts.components;
    if m == 0 {
        return Err(Error::invalid("gmm needs at least one component"));
    }
    if m > data.n {
        return Err(Error::invalid(format!(
            "gmm with {m} components needs at least {m} samples"
        )));
    }
    let mut best: Option<GmmFit> = None;
    for _ in 0..opts.restarts.max(1) {
        let centres = kmeans_pp(data, m, rng);
        let run = run_em(data, &centres, opts, eval, warnings)?;
        let better = best
            .as_ref()
            .is_none_or(|b| run.model.train_log_likelihood > b.model.train_log_likelihood);
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(data: &Samples, m: usize, rng: &mut Stream) -> Vec<Vec<f64>> {
    let mut centres = vec![data.row(rng.random_range(0..data.n)).to_vec()];
    let mut d2: Vec<f64> = data.rows().map(|r| sq_dist(r, &centres[0])).collect();
    while centres.len() < m {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = data.n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..data.n)
        };
        let c = data.row(idx).to_vec();
        for (i, r) in data.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centres.push(c);
    }
    centres
}

struct Params {
    weights: Vec<f64>,
    comps: Vec<MultivariateNormal>,
}

/// M-step from responsibilities (`resp[i * m + j]`).
fn m_step(
    data: &Samples,
    resp: &[f64],
    m: usize,
    reg: f64,
    previous: Option<&Params>,
    warnings: &mut Vec<String>,
) -> Result<Params> {
    let d = data.dim;
    let mut weights = Vec::with_capacity(m);
    let mut comps = Vec::with_capacity(m);
    for j in 0..m {
        let nj: f64 = (0..data.n).map(|i| resp[i * m + j]).sum();
        if nj < 1e-10 * data.n as f64 {
            // collapsed component: keep it where it was, with negligible mass
            let c = match previous {
                Some(p) => p.comps[j].clone(),
                None => {
                    let mean = data.mean();
                    let cov = data.covariance(&mean);
                    MultivariateNormal::with_jitter(mean, cov)?.0
                }
            };
            weights.push(nj.max(f64::MIN_POSITIVE) / data.n as f64);
            comps.push(c);
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, r) in data.rows().enumerate() {
            let w = resp[i * m + j];
            for k in 0..d {
                mean[k] += w * r[k];
            }
        }
        mean.iter_mut().for_each(|v| *v /= nj);
        let mut cov = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for (i, r) in data.rows().enumerate() {
            let w = resp[i * m + j];
            for k in 0..d {
                diff[k] = r[k] - mean[k];
            }
            for a in 0..d {
                for b in a..d {
                    cov[a * d + b] += w * diff[a] * diff[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / nj;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
            cov[a * d + a] += reg;
        }
        let (c, jitter) = MultivariateNormal::with_jitter(mean, cov)?;
        if jitter > 0.0 {
            warnings.push(format!("gmm component {j}: added jitter {jitter:e}"));
        }
        weights.push(nj / data.n as f64);
        comps.push(c);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Params { weights, comps })
}

/// E-step. Fills responsibilities and returns the mean log-likelihood.
fn e_step(data: &Samples, p: &Params, resp: &mut [f64]) -> f64 {
    let m = p.comps.len();
    let log_w: Vec<f64> = p.weights.iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    for (i, r) in data.rows().enumerate() {
        let row = &mut resp[i * m..(i + 1) * m];
        for j in 0..m {
            row[j] = log_w[j] + p.comps[j].log_density(r);
        }
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
    }
    total / data.n as f64
}

fn mean_eval_ll(eval: &Samples, p: &Params) -> f64 {
    let model = GmmModel {
        weights: p.weights.clone(),
        components: p.comps.clone(),
        train_log_likelihood: 0.0,
        iterations: 0,
    };
    eval.rows()
        .map(|r| model.log_density(r).max(LOG_DENSITY_FLOOR))
        .sum::<f64>()
        / eval.n as f64
}

fn run_em(
    data: &Samples,
    centres: &[Vec<f64>],
    opts: &GmmOptions,
    eval: Option<&Samples>,
    warnings: &mut Vec<String>,
) -> Result<GmmFit> {
    let m = centres.len();
    // hard assignment to the nearest centre seeds the first M-step
    let mut resp = vec![0.0; data.n * m];
    for (i, r) in data.rows().enumerate() {
        let j = (0..m)
            .min_by(|&a, &b| sq_dist(r, &centres[a]).total_cmp(&sq_dist(r, &centres[b])))
            .expect("m >= 1");
        resp[i * m + j] = 1.0;
    }
    let mut params = m_step(data, &resp, m, opts.reg_covar, None, warnings)?;
    let mut train_curve = Vec::new();
    let mut eval_curve = Vec::new();
    let mut iterations = 0;
    let mut ll = e_step(data, &params, &mut resp);
    train_curve.push(ll);
    if let Some(e) = eval {
        eval_curve.push(mean_eval_ll(e, &params));
    }
    while iterations < opts.max_iters {
        let next = m_step(data, &resp, m, opts.reg_covar, Some(&params), warnings)?;
        let next_ll = e_step(data, &next, &mut resp);
        iterations += 1;
        params = next;
        train_curve.push(next_ll);
        if let Some(e) = eval {
            eval_curve.push(mean_eval_ll(e, &params));
        }
        let converged = (next_ll - ll).abs() <= opts.tol * (1.0 + ll.abs());
        ll = next_ll;
        if converged {
            break;
        }
    }
    Ok(GmmFit {
        model: GmmModel {
            weights: params.weights,
            components: params.comps,
            train_log_likelihood: ll,
            iterations,
        },
        train_curve,
        eval_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{fit as fit_any, fit_monitored, DensitySpec, FittedDensity};
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    fn mixture(seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "mixture", &[]);
        let centres = [[-4.0, 0.0], [3.0, 3.0], [2.0, -4.0]];
        (0..n)
            .map(|i| {
                let c = centres[i % 3];
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![c[0] + a * 0.8, c[1] + b * 0.6]
            })
            .collect()
    }

    #[test]
    fn em_is_monotone() {
        let rows = mixture(1, 3000);
        let mut rng = stream(2, "gmm", &[]);
        for m in [1, 2, 3, 5] {
            let rep = fit_monitored::<_, Vec<f64>>(&DensitySpec::gmm(m), &rows, None, &mut rng).unwrap();
            for w in rep.train_curve.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "m={m}: {} then {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn one_component_equals_gaussian() {
        let rows = mixture(4, 1000);
        let mut rng = stream(5, "gmm", &[]);
        let g = fit_any(&DensitySpec::Gaussian { ridge: 0.0 }, &rows, &mut rng).unwrap();
        let m = fit_any(&DensitySpec::gmm(1), &rows, &mut rng).unwrap();
        for q in [[0.0, 0.0], [-4.0, 0.5], [10.0, 10.0], [2.0, -3.0]] {
            let (a, b) = (g.log_density(&q).unwrap(), m.log_density(&q).unwrap());
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn finds_well_separated_components() {
        let rows = mixture(6, 3000);
        let mut rng = stream(7, "gmm", &[]);
        let model = fit_any(&DensitySpec::gmm(3), &rows, &mut rng).unwrap();
        let FittedDensity::Gmm(g) = model.fitted else { panic!() };
        let mut means: Vec<[f64; 2]> = g.components.iter().map(|c| [c.mean[0], c.mean[1]]).collect();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let expect = [[-4.0, 0.0], [2.0, -4.0], [3.0, 3.0]];
        for (m, e) in means.iter().zip(expect) {
            assert!((m[0] - e[0]).abs() < 0.1 && (m[1] - e[1]).abs() < 0.1, "{means:?}");
        }
        for w in &g.weights {
            assert!((w - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn eval_curve_tracks_iterations() {
        let rows = mixture(8, 600);
        let held = mixture(9, 300);
        let mut rng = stream(10, "gmm", &[]);
        let rep = fit_monitored(&DensitySpec::gmm(3), &rows, Some(&held[..]), &mut rng).unwrap();
        assert_eq!(rep.train_curve.len(), rep.eval_curve.len());
        assert!(rep.eval_curve.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn too_many_components_rejected() {
        let mut rng = stream(0, "gmm", &[]);
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(fit_any(&DensitySpec::gmm(3), &rows, &mut rng).is_err());
    }
}

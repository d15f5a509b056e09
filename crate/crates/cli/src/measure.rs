//! `entropy`, `grid` and `select-model`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chronogem_core::density::{select_model, CandidateConfig, DensitySpec, Family, SelectionDataset};
use chronogem_core::entropy::{cross_entropy_over_seeds, frequency_grid};
use chronogem_core::env::{Environment, Plane};
use chronogem_core::rng;
use chronogem_core::StateSet;
use clap::{Args, ValueEnum};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{require, require_path, resolve};
use crate::failure::Failure;
use crate::inputs::{env_of, load_states, parse_density};
use crate::manifest::Run;

fn project(set: &StateSet, dims: Option<&[usize]>) -> anyhow::Result<Vec<Vec<f64>>> {
    match dims {
        None => Ok(set.vectors()),
        Some(d) => {
            let dim = set.states.first().map_or(0, |s| s.len());
            if d.is_empty() || d.iter().any(|&j| j >= dim) {
                return Err(Failure::Usage(format!("--dims {d:?} out of range for {dim}-dimensional states")).into());
            }
            Ok(set.states.iter().map(|s| d.iter().map(|&j| s[j]).collect()).collect())
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EntropyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// State set (JSONL).
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Estimator: gaussian, kde, gmm[:c], histogram[:bins].
    #[arg(long, value_parser = parse_density)]
    pub density: Option<DensitySpec>,
    /// Fraction of states used for fitting.
    #[arg(long)]
    pub split: Option<f64>,
    /// Number of random splits; the report holds their median.
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Components to measure, comma separated; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySettings {
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub density: DensitySpec,
    pub split: f64,
    pub splits: usize,
    pub seed: u64,
    pub dims: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
}

impl Default for EntropySettings {
    fn default() -> Self {
        EntropySettings {
            input: None,
            density: DensitySpec::default_for(Family::Kde),
            split: 0.8,
            splits: 5,
            seed: 0,
            dims: None,
            out: None,
        }
    }
}

pub fn entropy(args: &EntropyArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: EntropySettings = resolve(args.config.as_deref(), args)?;
    let input = require_path(&s.input, "in")?;
    let out = require_path(&s.out, "out")?;
    run.config(&s)?;
    run.seed("seed", s.seed);
    let set = load_states(&input)?;
    let xs = project(&set, s.dims.as_deref())?;
    let mut streams: Vec<_> = (0..s.splits)
        .map(|j| rng::stream(s.seed, "entropy", &[j as u64]))
        .collect();
    let report = cross_entropy_over_seeds(&xs, &s.density, s.split, &mut streams)?;
    run.write_json(&out, &report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    Pgm,
    Csv,
    Json,
}

impl GridFormat {
    fn from_path(p: &Path) -> Option<Self> {
        match p.extension()?.to_str()? {
            "pgm" => Some(GridFormat::Pgm),
            "csv" => Some(GridFormat::Csv),
            "json" => Some(GridFormat::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Cells per axis.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Two components to project on; the environment's plane when absent.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// `xmin,ymin,xmax,ymax`; the environment's plane when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bounds: Option<Vec<f64>>,
    /// Output format; inferred from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<GridFormat>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub bins: usize,
    pub dims: Option<Vec<usize>>,
    pub bounds: Option<Vec<f64>>,
    pub format: Option<GridFormat>,
    pub out: Option<PathBuf>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            input: None,
            bins: 64,
            dims: None,
            bounds: None,
            format: None,
            out: None,
        }
    }
}

pub fn grid(args: &GridArgs, run: &mut Run) -> anyhow::Result<()> {
    let s: GridSettings = resolve(args.config.as_deref(), args)?;
    let input = require_path(&s.input, "in")?;
    let out = require_path(&s.out, "out")?;
    let format = match s.format.or_else(|| GridFormat::from_path(&out)) {
        Some(f) => f,
        None => return Err(Failure::Usage("cannot infer --format from the output extension".into()).into()),
    };
    run.config(&s)?;
    let set = load_states(&input)?;
    let env = env_of(&set)?;
    let mut plane: Plane = env.plane();
    if let Some(d) = &s.dims {
        let [a, b] = d[..] else {
            return Err(Failure::Usage("--dims takes exactly two components".into()).into());
        };
        plane.dims = [a, b];
    }
    if let Some(b) = &s.bounds {
        let [x0, y0, x1, y1] = b[..] else {
            return Err(Failure::Usage("--bounds takes xmin,ymin,xmax,ymax".into()).into());
        };
        plane.min = [x0, y0];
        plane.max = [x1, y1];
    }
    let g = frequency_grid(&set.states, &plane, s.bins)?;
    run.steps("states", set.len() as u64);
    match format {
        GridFormat::Pgm => run.write(&out, g.to_pgm().as_bytes()),
        GridFormat::Csv => run.write(&out, g.to_csv().as_bytes()),
        GridFormat::Json => run.write_json(&out, &g),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// State set used as one selection dataset; repeatable.
    #[arg(long = "data")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<PathBuf>,
    /// Candidate estimators, comma separated (same syntax as `--density`).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip)]
    pub candidates: Option<Vec<String>>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    pub data: Vec<PathBuf>,
    pub candidates: Vec<CandidateConfig>,
    pub split: f64,
    pub dims: Option<Vec<usize>>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

pub fn default_candidates() -> Vec<CandidateConfig> {
    ["gaussian", "gmm:1", "gmm:3", "kde"]
        .into_iter()
        .map(|n| CandidateConfig {
            name: n.to_string(),
            spec: parse_density(n).expect("valid default"),
        })
        .collect()
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings {
            data: Vec::new(),
            candidates: default_candidates(),
            split: 0.8,
            dims: None,
            seed: 0,
            out: None,
        }
    }
}

#[derive(Serialize)]
struct SelectFlags<'a> {
    #[serde(flatten)]
    args: &'a SelectArgs,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<CandidateConfig>>,
}

pub fn select(args: &SelectArgs, run: &mut Run) -> anyhow::Result<()> {
    let named = match &args.candidates {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .map(|n| {
                    parse_density(n)
                        .map(|spec| CandidateConfig { name: n.clone(), spec })
                        .map_err(|e| Failure::Usage(format!("--candidates: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let flags = SelectFlags {
        args,
        candidates: named,
    };
    let s: SelectSettings = resolve(args.config.as_deref(), &flags)?;
    let out = require_path(&s.out, "out")?;
    require((!s.data.is_empty()).then_some(()), "data")?;
    if !(s.split > 0.0 && s.split < 1.0) {
        return Err(Failure::Usage("--split must lie in (0, 1)".into()).into());
    }
    run.config(&s)?;
    run.seed("seed", s.seed);
    let mut datasets = Vec::with_capacity(s.data.len());
    for (i, path) in s.data.iter().enumerate() {
        let set = load_states(path)?;
        let mut rows = project(&set, s.dims.as_deref())?;
        rows.shuffle(&mut rng::stream(s.seed, "select-split", &[i as u64]));
        let n_fit = ((rows.len() as f64) * s.split).round() as usize;
        let eval = rows.split_off(n_fit.min(rows.len()));
        datasets.push(SelectionDataset {
            name: path.display().to_string(),
            train: rows,
            eval,
        });
    }
    let report = select_model(&s.candidates, &datasets, s.seed).context("model selection")?;
    run.write_json(&out, &report)
}

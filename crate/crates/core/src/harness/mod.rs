//! Monte Carlo validity and power studies.
//!
//! A study is the Cartesian grid settings x dims x balances x effects x
//! methods. Every (cell, repetition) pair simulates one dataset from a seed
//! mixed from the base seed and the cell coordinates, so any subset of the
//! grid reproduces the same numbers, whatever the worker count.

mod io;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

pub use io::{export_csv, export_dataset, import_dataset, load_dataset, read_power_curve, DatasetColumns};

use crate::cdcorr::CdcorrConfig;
use crate::dcorr::Method;
use crate::distances::Bandwidth;
use crate::error::{Error, Result};
use crate::pipeline::{run_test, TestOptions};
use crate::seeding::{mix_seed, stream};
use crate::sims::{simulate, Setting, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Validity,
    Power,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Validity => "validity",
            ExperimentKind::Power => "power",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validity" => Ok(ExperimentKind::Validity),
            "power" => Ok(ExperimentKind::Power),
            _ => Err(Error::Config(format!("unknown experiment kind `{s}`"))),
        }
    }
}

/// Ten evenly spaced balances from 0.2 to 1.0.
pub fn validity_balances() -> Vec<f64> {
    (0..10).map(|i| 0.2 + 0.8 * i as f64 / 9.0).collect()
}

/// Effects 0, 0.125, ..., 1.
pub fn power_effects() -> Vec<f64> {
    (0..=8).map(|i| i as f64 / 8.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub settings: Vec<Setting>,
    pub dims: Vec<usize>,
    pub balances: Vec<f64>,
    pub effects: Vec<f64>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub alpha: f64,
    pub n: usize,
    pub n_replicates: usize,
    pub ci_level: f64,
    pub block_size: usize,
    pub bandwidth: Bandwidth,
    pub base_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        let (balances, effects, repetitions) = match kind {
            ExperimentKind::Validity => (validity_balances(), vec![0.0], 100),
            ExperimentKind::Power => (vec![0.4, 0.8], power_effects(), 200),
        };
        let cdcorr = CdcorrConfig::default();
        Self {
            kind,
            settings: Setting::ALL.to_vec(),
            dims: vec![10, 101],
            balances,
            effects,
            methods: Method::ALL.to_vec(),
            repetitions,
            alpha: 0.05,
            n: 100,
            n_replicates: cdcorr.n_replicates,
            ci_level: 0.90,
            block_size: cdcorr.block_size,
            bandwidth: cdcorr.bandwidth,
            base_seed: 0,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty()
            || self.dims.is_empty()
            || self.balances.is_empty()
            || self.effects.is_empty()
            || self.methods.is_empty()
        {
            return Err(Error::Config("every grid must be nonempty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("need at least one repetition".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("ci level must be in (0, 1), got {}", self.ci_level)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        self.cdcorr().validate()?;
        for cell in self.cells() {
            self.simulation(&cell, 0).validate()?;
        }
        Ok(())
    }

    fn cdcorr(&self) -> CdcorrConfig {
        CdcorrConfig { bandwidth: self.bandwidth, n_replicates: self.n_replicates, block_size: self.block_size }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &setting in &self.settings {
            for &dim in &self.dims {
                for &balance in &self.balances {
                    for &effect in &self.effects {
                        cells.push(Cell { setting, dim, balance, effect });
                    }
                }
            }
        }
        cells
    }

    fn simulation(&self, cell: &Cell, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n: self.n,
            dim: cell.dim,
            balance: cell.balance,
            effect: cell.effect,
            seed,
            ..SimulationConfig::new(cell.setting)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    setting: Setting,
    dim: usize,
    balance: f64,
    effect: f64,
}

impl Cell {
    fn seed(&self, base: u64, rep: usize) -> u64 {
        mix_seed(base, &[self.setting as u64, self.dim as u64, self.balance.to_bits(), self.effect.to_bits(), rep as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub setting: Setting,
    pub dim: usize,
    pub balance: f64,
    pub effect: f64,
    pub method: Method,
    /// Rejections over applicable runs; 0 when no run was applicable.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_applicable: usize,
    pub n_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerCurve {
    pub rows: Vec<PowerRow>,
}

impl PowerCurve {
    pub fn find(&self, setting: Setting, dim: usize, balance: f64, effect: f64, method: Method) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.setting == setting && r.dim == dim && r.balance == balance && r.effect == effect && r.method == method)
    }
}

/// Wald interval `p +- z sqrt(p (1 - p) / trials)` clipped to `[0, 1]`.
pub fn wald_ci(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    assert!(trials >= 1, "wald interval needs at least one trial");
    assert!(level > 0.0 && level < 1.0, "level must be in (0, 1)");
    let p = successes as f64 / trials as f64;
    let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
    let half = z * (p * (1.0 - p) / trials as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

/// Outcome of one method on one simulated dataset: `Some(rejected)` or
/// `None` when the method was not applicable.
fn one_repetition(cfg: &ExperimentConfig, cell: &Cell, rep: usize) -> Result<Vec<Option<bool>>> {
    let seed = cell.seed(cfg.base_seed, rep);
    let sample = simulate(&cfg.simulation(cell, seed), &mut stream(seed, &[0]))?;
    let options = TestOptions { cdcorr: cfg.cdcorr(), ..TestOptions::default() };
    cfg.methods
        .iter()
        .map(|&m| match run_test(&sample.dataset, m, &options, &mut stream(seed, &[1, m as u64])) {
            Ok(t) => Ok(Some(t.p_value <= cfg.alpha)),
            Err(e) if e.is_applicability() => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn run_grid(cfg: &ExperimentConfig) -> Result<PowerCurve> {
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r))).collect();
    let outcomes: Vec<Vec<Option<bool>>> = jobs.par_iter().map(|&(c, r)| one_repetition(cfg, &cells[c], r)).collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cells.len() * cfg.methods.len());
    for (c, cell) in cells.iter().enumerate() {
        let reps = &outcomes[c * cfg.repetitions..(c + 1) * cfg.repetitions];
        for (m, &method) in cfg.methods.iter().enumerate() {
            let applicable: Vec<bool> = reps.iter().filter_map(|o| o[m]).collect();
            let rejections = applicable.iter().filter(|&&b| b).count();
            let n_applicable = applicable.len();
            let (rate, (ci_low, ci_high)) = if n_applicable == 0 {
                (0.0, (0.0, 0.0))
            } else {
                (rejections as f64 / n_applicable as f64, wald_ci(rejections, n_applicable, cfg.ci_level))
            };
            rows.push(PowerRow {
                setting: cell.setting,
                dim: cell.dim,
                balance: cell.balance,
                effect: cell.effect,
                method,
                rate,
                ci_low,
                ci_high,
                n_applicable,
                n_errors: cfg.repetitions - n_applicable,
            });
        }
    }
    Ok(PowerCurve { rows })
}

/// Runs the full grid. Applicability failures of a method on a dataset are
/// counted in `n_errors`; any other error aborts the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PowerCurve> {
    cfg.validate()?;
    match cfg.threads {
        None => run_grid(cfg),
        Some(t) => {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().map_err(|e| Error::Config(e.to_string()))?.install(|| run_grid(cfg))
        }
    }
}

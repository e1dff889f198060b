//! Simulation settings for causal conditional discrepancy studies.
//!
//! Covariates are mixtures of a shared `2 Beta(10, 10) - 1` component (the
//! balanced fraction) and group-specific skewed components reflected about
//! zero. Outcomes follow one of four group-conditional mean/noise models,
//! scaled per dimension by a decaying signal vector, and are finally rotated
//! by a Haar-random orthogonal matrix.
//!
//! Groups are 1-based. In the two-group settings group 1 is the group whose
//! covariates skew left and, for the sigmoidal setting, whose mean curve is
//! rotated by the effect.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::distances::haar_orthogonal;
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::pipeline::Dataset;
use crate::seeding::stream;

const NOISE_SD: f64 = 0.5;
const MEAN_GRID_POINTS: usize = 201;
const NONMONOTONE_HALF_WIDTH: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Sigmoidal,
    Nonmonotone,
    Kgroup,
    Heteroskedastic,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Sigmoidal, Setting::Nonmonotone, Setting::Kgroup, Setting::Heteroskedastic];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Sigmoidal => "sigmoidal",
            Setting::Nonmonotone => "nonmonotone",
            Setting::Kgroup => "kgroup",
            Setting::Heteroskedastic => "heteroskedastic",
        }
    }

    pub fn default_decay(self) -> f64 {
        match self {
            Setting::Kgroup => 1.1,
            _ => 1.5,
        }
    }

    pub fn default_groups(self) -> usize {
        match self {
            Setting::Kgroup => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Config(format!("unknown setting `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub setting: Setting,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    /// Fraction of samples drawn from the shared covariate law.
    pub balance: f64,
    pub effect: f64,
    /// Signal decay exponent: dimension `p` carries `2 / p^q`.
    pub decay: f64,
    /// Probability of the group-1 draw in the K-group sampler, of group 2 in
    /// the two-group sampler.
    pub treatment_prob: f64,
    pub rotate: bool,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(setting: Setting) -> Self {
        Self {
            setting,
            n: 100,
            dim: 10,
            k: setting.default_groups(),
            balance: 1.0,
            effect: 0.0,
            decay: setting.default_decay(),
            treatment_prob: 0.5,
            rotate: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.effect) {
            return Err(Error::Config(format!("effect must be in [0, 1], got {}", self.effect)));
        }
        if !unit(self.balance) {
            return Err(Error::Config(format!("balance must be in [0, 1], got {}", self.balance)));
        }
        if !unit(self.treatment_prob) {
            return Err(Error::Config(format!("treatment probability must be in [0, 1], got {}", self.treatment_prob)));
        }
        if self.decay.is_nan() || self.decay <= 1.0 {
            return Err(Error::Config(format!("decay exponent must exceed 1, got {}", self.decay)));
        }
        if self.n == 0 || self.dim == 0 {
            return Err(Error::Config("n and dim must be positive".into()));
        }
        match self.setting {
            Setting::Kgroup if self.k < 3 => Err(Error::Config(format!("kgroup needs at least 3 groups, got {}", self.k))),
            Setting::Kgroup => Ok(()),
            _ if self.k != 2 => Err(Error::Config(format!("{} is a two-group setting, got k = {}", self.setting, self.k))),
            _ => Ok(()),
        }
    }
}

/// Numerically safe logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-dimension signal `2 / p^q` for `p = 1..=dim`.
pub fn beta_vector(dim: usize, q: f64) -> Vec<f64> {
    (1..=dim).map(|p| 2.0 / (p as f64).powf(q)).collect()
}

/// Group labels and scalar covariates.
pub fn sample_covariates<R: Rng + ?Sized>(k: usize, balance: f64, treatment_prob: f64, n: usize, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
    let shared = Beta::new(10.0, 10.0).expect("valid beta");
    let left = Beta::new(2.0, 8.0).expect("valid beta");
    let right = Beta::new(8.0, 2.0).expect("valid beta");
    let mut groups = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let g = if k == 2 {
            if u < treatment_prob {
                2
            } else {
                1
            }
        } else if u < treatment_prob {
            1
        } else {
            let rest = (1.0 - treatment_prob) / (k - 1) as f64;
            (2 + ((u - treatment_prob) / rest) as usize).min(k)
        };
        let balanced = rng.random::<f64>() < balance;
        let z = if balanced {
            shared.sample(rng)
        } else if g == 1 {
            left.sample(rng)
        } else {
            right.sample(rng)
        };
        groups.push(g);
        xs.push(2.0 * z - 1.0);
    }
    (groups, xs)
}

/// Scalar profile of the group mean at covariate `x`; the mean vector is this
/// value times the signal vector.
pub fn mean_profile(setting: Setting, group: usize, x: f64, effect: f64) -> f64 {
    let base = 5.0 * sigmoid(8.0 * x);
    match setting {
        Setting::Sigmoidal | Setting::Kgroup if group == 1 => {
            // r (base - 5/2) + 5/2, written so that r = 1 returns base exactly
            let r = (effect * PI).cos();
            base + (r - 1.0) * (base - 2.5)
        }
        Setting::Sigmoidal | Setting::Kgroup | Setting::Heteroskedastic => base,
        Setting::Nonmonotone => {
            if x.abs() > NONMONOTONE_HALF_WIDTH {
                0.0
            } else if group == 1 {
                -effect
            } else {
                effect
            }
        }
    }
}

/// Noise standard deviation for a group.
pub fn noise_sd(setting: Setting, group: usize, effect: f64) -> f64 {
    match setting {
        Setting::Heteroskedastic if group == 1 => NOISE_SD * (1.0 + effect).sqrt(),
        _ => NOISE_SD,
    }
}

/// Unrotated group mean curves tabulated on an even grid over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurves {
    pub grid: Vec<f64>,
    /// `means[g - 1]` is `grid.len() x dim` for group `g`.
    pub means: Vec<DMatrix<f64>>,
}

impl MeanCurves {
    pub fn tabulate(setting: Setting, k: usize, effect: f64, beta: &[f64]) -> Self {
        // exactly symmetric about zero
        let last = MEAN_GRID_POINTS as i64 - 1;
        let grid: Vec<f64> = (0..MEAN_GRID_POINTS).map(|i| (2 * i as i64 - last) as f64 / last as f64).collect();
        let means =
            (1..=k).map(|g| DMatrix::from_fn(grid.len(), beta.len(), |i, p| mean_profile(setting, g, grid[i], effect) * beta[p])).collect();
        Self { grid, means }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSample {
    pub dataset: Dataset,
    pub mean_curves: MeanCurves,
    /// Applied to every outcome row (identity when rotation is off).
    pub rotation: RealMatrix,
}

/// Draws one dataset.
pub fn simulate<R: Rng + ?Sized>(cfg: &SimulationConfig, rng: &mut R) -> Result<SimulatedSample> {
    cfg.validate()?;
    let beta = beta_vector(cfg.dim, cfg.decay);
    let (groups, xs) = sample_covariates(cfg.k, cfg.balance, cfg.treatment_prob, cfg.n, rng);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut y = DMatrix::zeros(cfg.n, cfg.dim);
    for i in 0..cfg.n {
        let g = groups[i];
        let m = mean_profile(cfg.setting, g, xs[i], cfg.effect);
        let sd = noise_sd(cfg.setting, g, cfg.effect);
        for p in 0..cfg.dim {
            y[(i, p)] = m * beta[p] + sd * normal.sample(rng);
        }
    }
    let rotation = if cfg.rotate { haar_orthogonal(cfg.dim, rng) } else { RealMatrix::from_matrix(DMatrix::identity(cfg.dim, cfg.dim))? };
    let outcomes = RealMatrix::from_matrix(y * rotation.as_matrix().transpose())?;
    let dataset = Dataset::new(outcomes, groups, RealMatrix::column(&xs)?)?;
    Ok(SimulatedSample { dataset, mean_curves: MeanCurves::tabulate(cfg.setting, cfg.k, cfg.effect, &beta), rotation })
}

/// [`simulate`] with the stream keyed by `cfg.seed`.
pub fn simulate_seeded(cfg: &SimulationConfig) -> Result<SimulatedSample> {
    simulate(cfg, &mut stream(cfg.seed, &[]))
}

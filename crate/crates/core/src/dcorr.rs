//! Unconditional distance correlation and its permutation test.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::distances::{double_center_matrix, pairwise_euclidean, DistanceMatrix};
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::seeding::{replicate_rng, StreamRng};

/// Variance terms at or below this are treated as zero.
pub(crate) const VARIANCE_EPS: f64 = 1e-14;

pub(crate) const MIN_SAMPLES: usize = 4;

/// Test labels understood by the dispatcher and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dcorr,
    Cdcorr,
    CausalCdcorr,
    Cmanova,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dcorr, Method::Cdcorr, Method::CausalCdcorr, Method::Cmanova];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dcorr => "dcorr",
            Method::Cdcorr => "cdcorr",
            Method::CausalCdcorr => "causal-cdcorr",
            Method::Cmanova => "cmanova",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Permutation replicates used; zero for tests with an analytic null.
    pub n_replicates: usize,
    pub method: Method,
}

/// Distance correlation from two distance matrices, using biased
/// (V-statistic) double centering.
pub fn dcorr_statistic(dy: &DistanceMatrix, dv: &DistanceMatrix) -> Result<f64> {
    check_sizes(dy.n(), dv.n())?;
    let a = double_center_matrix(dy.as_matrix());
    let b = double_center_matrix(dv.as_matrix());
    let ident: Vec<usize> = (0..a.nrows()).collect();
    Ok(Centered::new(a, b).statistic(&ident))
}

fn check_sizes(ny: usize, nv: usize) -> Result<()> {
    if ny != nv {
        return Err(Error::InvalidInput(format!("sample sizes differ: {ny} vs {nv}")));
    }
    if ny < MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: ny });
    }
    Ok(())
}

/// Double-centered matrices plus their squared norms, so a permuted statistic
/// costs a single pass over the entries.
struct Centered {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    var_a: f64,
    var_b: f64,
}

impl Centered {
    fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let n2 = (a.nrows() * a.nrows()) as f64;
        let var_a = a.iter().map(|v| v * v).sum::<f64>() / n2;
        let var_b = b.iter().map(|v| v * v).sum::<f64>() / n2;
        Self { a, b, var_a, var_b }
    }

    /// Statistic with the rows and columns of `b` reordered by `perm`.
    fn statistic(&self, perm: &[usize]) -> f64 {
        if self.var_a <= VARIANCE_EPS || self.var_b <= VARIANCE_EPS {
            return 0.0;
        }
        let n = perm.len();
        let mut cov = 0.0;
        for j in 0..n {
            let a_col = self.a.column(j);
            let b_col = self.b.column(perm[j]);
            for i in 0..n {
                cov += a_col[i] * b_col[perm[i]];
            }
        }
        cov /= (n * n) as f64;
        (cov / (self.var_a * self.var_b).sqrt()).clamp(0.0, 1.0)
    }
}

/// Counts replicates whose statistic reaches the observed value and returns
/// `(1 + exceedances) / (1 + n_replicates)`.
///
/// Replicate `r` draws from a stream keyed by `(seed, r)`, so the result does
/// not depend on the number of worker threads.
pub(crate) fn permutation_p_value<S, F>(
    observed: f64,
    n_replicates: usize,
    seed: u64,
    init: impl Fn() -> S + Sync + Send,
    replicate: F,
) -> f64
where
    F: Fn(&mut S, &mut StreamRng) -> f64 + Sync + Send,
{
    let exceed = (0..n_replicates)
        .into_par_iter()
        .map_init(&init, |scratch, r| {
            let mut rng = replicate_rng(seed, r);
            usize::from(replicate(scratch, &mut rng) >= observed)
        })
        .sum::<usize>();
    (1 + exceed) as f64 / (1 + n_replicates) as f64
}

/// Permutation test of independence between the rows of `y` and `v`.
pub fn dcorr_test<R: Rng + ?Sized>(y: &RealMatrix, v: &RealMatrix, n_replicates: usize, rng: &mut R) -> Result<TestResult> {
    check_sizes(y.nrows(), v.nrows())?;
    if n_replicates == 0 {
        return Err(Error::InvalidInput("need at least one permutation replicate".into()));
    }
    let dy = pairwise_euclidean(y)?;
    let dv = pairwise_euclidean(v)?;
    let centered = Centered::new(double_center_matrix(dy.as_matrix()), double_center_matrix(dv.as_matrix()));
    let n = y.nrows();
    let ident: Vec<usize> = (0..n).collect();
    let observed = centered.statistic(&ident);
    let seed: u64 = rng.random();
    let p_value = permutation_p_value(
        observed,
        n_replicates,
        seed,
        || ident.clone(),
        |perm, rng| {
            perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
            perm.shuffle(rng);
            centered.statistic(perm)
        },
    );
    Ok(TestResult { statistic: observed, p_value, n_replicates, method: Method::Dcorr })
}

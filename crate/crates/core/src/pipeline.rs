//! Datasets, one-hot group encoding, the Causal cDcorr procedure and a single
//! dispatch point for all tests.

use rand::Rng;

use crate::cdcorr::{cdcorr_test, CdcorrConfig};
use crate::cmanova::cmanova_test;
use crate::dcorr::{dcorr_test, Method, TestResult};
use crate::error::{Error, Result};
use crate::matching::{class_indices, fit_multinomial, n_groups, predict_propensities, vector_match, MatchFilter};
use crate::matrix::RealMatrix;

/// Fewer retained samples than this make the local permutation null useless.
pub const MIN_RETAINED: usize = 10;

/// Observed `(y, t, x)` triples. Groups are 1-based; `K` is the largest label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcomes: RealMatrix,
    groups: Vec<usize>,
    covariates: RealMatrix,
}

impl Dataset {
    pub fn new(outcomes: RealMatrix, groups: Vec<usize>, covariates: RealMatrix) -> Result<Self> {
        let n = outcomes.nrows();
        if groups.len() != n || covariates.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "row counts differ: outcomes {n}, groups {}, covariates {}",
                groups.len(),
                covariates.nrows()
            )));
        }
        if groups.contains(&0) {
            return Err(Error::InvalidInput("group labels are 1-based".into()));
        }
        let mut distinct = groups.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::InvalidInput("need at least two distinct groups".into()));
        }
        Ok(Self { outcomes, groups, covariates })
    }

    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn n_groups(&self) -> usize {
        n_groups(&self.groups)
    }

    pub fn outcomes(&self) -> &RealMatrix {
        &self.outcomes
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn covariates(&self) -> &RealMatrix {
        &self.covariates
    }
}

/// `n x K` one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndicator(RealMatrix);

impl GroupIndicator {
    pub fn as_real_matrix(&self) -> &RealMatrix {
        &self.0
    }

    pub fn into_real_matrix(self) -> RealMatrix {
        self.0
    }
}

pub fn one_hot(groups: &[usize], k: usize) -> Result<GroupIndicator> {
    let mut data = vec![0.0; groups.len() * k];
    for (i, &t) in groups.iter().enumerate() {
        if t == 0 || t > k {
            return Err(Error::InvalidInput(format!("group label {t} outside 1..={k}")));
        }
        data[i * k + t - 1] = 1.0;
    }
    Ok(GroupIndicator(RealMatrix::from_row_major(groups.len(), k, &data)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalResult {
    pub test: TestResult,
    pub filter: MatchFilter,
}

/// Settings shared by every method behind [`run_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    /// `n_replicates` also applies to the dcorr permutation test.
    pub cdcorr: CdcorrConfig,
    pub propensity_max_iter: usize,
    pub propensity_tol: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self { cdcorr: CdcorrConfig::default(), propensity_max_iter: 100, propensity_tol: 1e-8 }
    }
}

/// Vector matching on full-sample propensities followed by cDcorr of the
/// outcomes against one-hot groups on the retained samples.
pub fn causal_cdcorr_test<R: Rng + ?Sized>(data: &Dataset, cfg: &CdcorrConfig, rng: &mut R) -> Result<CausalResult> {
    causal_with(data, cfg, &TestOptions::default(), rng)
}

fn causal_with<R: Rng + ?Sized>(data: &Dataset, cfg: &CdcorrConfig, opts: &TestOptions, rng: &mut R) -> Result<CausalResult> {
    cfg.validate()?;
    let k = data.n_groups();
    class_indices(&data.groups, k)?;
    let model = fit_multinomial(&data.covariates, &data.groups, opts.propensity_max_iter, opts.propensity_tol)?;
    let scores = predict_propensities(&model, &data.covariates)?;
    let filter = vector_match(&scores, &data.groups)?;
    if filter.n_retained() < MIN_RETAINED {
        return Err(Error::InsufficientOverlap { retained: filter.n_retained(), needed: MIN_RETAINED });
    }
    let idx = &filter.retained;
    let groups: Vec<usize> = idx.iter().map(|&i| data.groups[i]).collect();
    let v = one_hot(&groups, k)?.into_real_matrix();
    let mut test = cdcorr_test(&data.outcomes.select_rows(idx), &v, &data.covariates.select_rows(idx), cfg, rng)?;
    test.method = Method::CausalCdcorr;
    Ok(CausalResult { test, filter })
}

/// Result of [`run_test_detailed`]; the filter is present for Causal cDcorr.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub test: TestResult,
    pub filter: Option<MatchFilter>,
}

pub fn run_test<R: Rng + ?Sized>(data: &Dataset, method: Method, options: &TestOptions, rng: &mut R) -> Result<TestResult> {
    run_test_detailed(data, method, options, rng).map(|o| o.test)
}

pub fn run_test_detailed<R: Rng + ?Sized>(data: &Dataset, method: Method, options: &TestOptions, rng: &mut R) -> Result<TestOutcome> {
    let plain = |test| Ok(TestOutcome { test, filter: None });
    match method {
        Method::Dcorr => {
            let v = one_hot(&data.groups, data.n_groups())?.into_real_matrix();
            plain(dcorr_test(&data.outcomes, &v, options.cdcorr.n_replicates, rng)?)
        }
        Method::Cdcorr => {
            let v = one_hot(&data.groups, data.n_groups())?.into_real_matrix();
            plain(cdcorr_test(&data.outcomes, &v, &data.covariates, &options.cdcorr, rng)?)
        }
        Method::CausalCdcorr => {
            let r = causal_with(data, &options.cdcorr, options, rng)?;
            Ok(TestOutcome { test: r.test, filter: Some(r.filter) })
        }
        Method::Cmanova => {
            let r = cmanova_test(&data.outcomes, &data.groups, &data.covariates)?;
            plain(TestResult { statistic: r.pillai_trace, p_value: r.p_value, n_replicates: 0, method })
        }
    }
}

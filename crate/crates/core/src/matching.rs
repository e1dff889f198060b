//! Generalized propensity scores and vector matching.
//!
//! Propensities come from a baseline-category multinomial logit with an
//! intercept, fit by Newton's method. Vector matching then keeps the samples
//! whose whole score vector lies inside the box where every group has
//! support.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

const HESSIAN_RIDGE: f64 = 1e-8;
const SEPARATION_NORM: f64 = 30.0;

/// Converts 1-based labels to 0-based class indices and checks that every
/// group in `1..=k` is present.
pub(crate) fn class_indices(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; k];
    let mut out = Vec::with_capacity(labels.len());
    for &t in labels {
        if t == 0 || t > k {
            return Err(Error::InvalidInput(format!("group label {t} outside 1..={k}")));
        }
        counts[t - 1] += 1;
        out.push(t - 1);
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!("group {} has no samples", g + 1)));
    }
    Ok(out)
}

/// Number of groups implied by 1-based labels.
pub(crate) fn n_groups(labels: &[usize]) -> usize {
    labels.iter().copied().max().unwrap_or(0)
}

/// Fitted baseline-category logit. Row `l` of `coefficients` belongs to
/// group `l + 2` (group 1 is the baseline); column 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub coefficients: DMatrix<f64>,
    pub baseline: usize,
    pub converged: bool,
    /// Set when the coefficients ran off towards infinity with a gradient that
    /// would not vanish. Scores are still usable for ordering.
    pub separated: bool,
    pub n_iterations: usize,
}

impl PropensityModel {
    pub fn n_groups(&self) -> usize {
        self.coefficients.nrows() + 1
    }
}

/// `n x K` matrix of estimated group probabilities; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityScores(DMatrix<f64>);

impl PropensityScores {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        for i in 0..m.nrows() {
            let s = m.row(i).sum();
            if (s - 1.0).abs() > 1e-10 || m.row(i).iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidInput(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.0.ncols()
    }

    /// Probability of 1-based group `t` for sample `i`.
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.0[(i, t - 1)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Per-group cutoffs and the samples kept by vector matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchFilter {
    /// `low[t - 1]` is the lower cutoff for the group-`t` score.
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Retained sample indices, ascending.
    pub retained: Vec<usize>,
    pub n_total: usize,
}

impl MatchFilter {
    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained.len() as f64 / self.n_total as f64
    }
}

fn with_intercept(x: &RealMatrix) -> DMatrix<f64> {
    let (n, r) = (x.nrows(), x.ncols());
    DMatrix::from_fn(n, r + 1, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) })
}

/// Softmax over `[0, eta_1, ..., eta_{K-1}]` with the maximum subtracted.
fn softmax_row(eta: &[f64], out: &mut [f64]) {
    let m = eta.iter().copied().fold(0.0f64, f64::max);
    out[0] = (-m).exp();
    for (o, &e) in out[1..].iter_mut().zip(eta) {
        *o = (e - m).exp();
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
}

/// Group probabilities for flattened parameters (`(K-1) x p`, row-major) and
/// a design that already carries its intercept column.
fn probabilities(theta: &[f64], design: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (n, p) = design.shape();
    let mut probs = DMatrix::zeros(n, k);
    let mut eta = vec![0.0; k - 1];
    let mut row = vec![0.0; k];
    for i in 0..n {
        for (l, e) in eta.iter_mut().enumerate() {
            *e = (0..p).map(|j| theta[l * p + j] * design[(i, j)]).sum();
        }
        softmax_row(&eta, &mut row);
        for c in 0..k {
            probs[(i, c)] = row[c];
        }
    }
    probs
}

/// Multinomial log-likelihood at flattened parameters `theta`
/// (`(K-1) x (r+1)`, row-major, intercept first). `groups` are 1-based.
pub fn log_likelihood(theta: &[f64], x: &RealMatrix, groups: &[usize], k: usize) -> f64 {
    let design = with_intercept(x);
    let p = design.ncols();
    let mut ll = 0.0;
    for (i, &t) in groups.iter().enumerate() {
        let eta: Vec<f64> = (0..k - 1).map(|l| (0..p).map(|j| theta[l * p + j] * design[(i, j)]).sum()).collect();
        let m = eta.iter().copied().fold(0.0f64, f64::max);
        let lse = m + ((-m).exp() + eta.iter().map(|e| (e - m).exp()).sum::<f64>()).ln();
        let own = if t == 1 { 0.0 } else { eta[t - 2] };
        ll += own - lse;
    }
    ll
}

/// Analytic gradient of [`log_likelihood`].
pub fn gradient(theta: &[f64], x: &RealMatrix, groups: &[usize], k: usize) -> Vec<f64> {
    let design = with_intercept(x);
    let probs = probabilities(theta, &design, k);
    gradient_from(&design, &probs, groups)
}

fn gradient_from(design: &DMatrix<f64>, probs: &DMatrix<f64>, groups: &[usize]) -> Vec<f64> {
    let (n, p) = design.shape();
    let k = probs.ncols();
    let mut g = vec![0.0; (k - 1) * p];
    for i in 0..n {
        for l in 1..k {
            let resid = f64::from(u8::from(groups[i] == l + 1)) - probs[(i, l)];
            for j in 0..p {
                g[(l - 1) * p + j] += resid * design[(i, j)];
            }
        }
    }
    g
}

/// Observed information (negative Hessian of the log-likelihood).
fn information(design: &DMatrix<f64>, probs: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = design.shape();
    let k = probs.ncols();
    let dim = (k - 1) * p;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for l in 1..k {
            for m in 1..k {
                let w = probs[(i, l)] * (f64::from(u8::from(l == m)) - probs[(i, m)]);
                if w == 0.0 {
                    continue;
                }
                for a in 0..p {
                    let wa = w * design[(i, a)];
                    for b in 0..p {
                        h[((l - 1) * p + a, (m - 1) * p + b)] += wa * design[(i, b)];
                    }
                }
            }
        }
    }
    h
}

/// Maximum-likelihood fit of the baseline-category logit by Newton's method
/// with step halving. Group 1 is the baseline.
pub fn fit_multinomial(x: &RealMatrix, groups: &[usize], max_iter: usize, tol: f64) -> Result<PropensityModel> {
    let n = x.nrows();
    if groups.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} samples", groups.len())));
    }
    let k = n_groups(groups);
    if k < 2 {
        return Err(Error::InvalidInput("need at least two groups".into()));
    }
    class_indices(groups, k)?;
    let design = with_intercept(x);
    let p = design.ncols();
    if n <= k * p {
        return Err(Error::TooFewSamples { needed: k * p + 1, got: n });
    }

    let dim = (k - 1) * p;
    let mut theta = vec![0.0; dim];
    let mut probs = probabilities(&theta, &design, k);
    let mut ll = log_likelihood(&theta, x, groups, k);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let g = gradient_from(&design, &probs, groups);
        let g_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if g_max <= tol {
            converged = true;
            break;
        }
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM {
            separated = true;
            break;
        }
        iterations += 1;
        let mut info = information(&design, &probs);
        for d in 0..dim {
            info[(d, d)] += HESSIAN_RIDGE;
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&DVector::from_vec(g.clone())),
            None => info.lu().solve(&DVector::from_vec(g.clone())).ok_or(Error::SingularDesign)?,
        };
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let cand_ll = log_likelihood(&cand, x, groups, k);
            if cand_ll >= ll - 1e-12 * ll.abs() || scale < 1e-10 {
                theta = cand;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
        probs = probabilities(&theta, &design, k);
    }
    if !converged && !separated {
        let g = gradient_from(&design, &probs, groups);
        converged = g.iter().all(|v| v.abs() <= tol);
    }

    Ok(PropensityModel {
        coefficients: DMatrix::from_row_slice(k - 1, p, &theta),
        baseline: 1,
        converged,
        separated,
        n_iterations: iterations,
    })
}

/// Group probabilities for new covariates.
pub fn predict_propensities(model: &PropensityModel, x: &RealMatrix) -> Result<PropensityScores> {
    let p = model.coefficients.ncols();
    if x.ncols() + 1 != p {
        return Err(Error::InvalidInput(format!("model expects {} covariates, got {}", p - 1, x.ncols())));
    }
    let theta: Vec<f64> =
        (0..model.coefficients.nrows()).flat_map(|l| model.coefficients.row(l).iter().copied().collect::<Vec<_>>()).collect();
    Ok(PropensityScores(probabilities(&theta, &with_intercept(x), model.n_groups())))
}

/// Vector matching with closed cutoff intervals.
///
/// For each group `t`, `low[t]` is the largest per-group minimum of the
/// group-`t` score and `high[t]` the smallest per-group maximum. A sample is
/// retained when every one of its scores lies within its `[low, high]`.
pub fn vector_match(scores: &PropensityScores, groups: &[usize]) -> Result<MatchFilter> {
    let n = scores.n();
    let k = scores.n_groups();
    if groups.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} score rows", groups.len())));
    }
    let classes = class_indices(groups, k)?;
    let m = scores.as_matrix();
    let mut low = vec![f64::NEG_INFINITY; k];
    let mut high = vec![f64::INFINITY; k];
    for t in 0..k {
        let mut mins = vec![f64::INFINITY; k];
        let mut maxs = vec![f64::NEG_INFINITY; k];
        for i in 0..n {
            let c = classes[i];
            mins[c] = mins[c].min(m[(i, t)]);
            maxs[c] = maxs[c].max(m[(i, t)]);
        }
        low[t] = mins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        high[t] = maxs.iter().copied().fold(f64::INFINITY, f64::min);
    }
    let retained: Vec<usize> = (0..n).filter(|&i| (0..k).all(|t| low[t] <= m[(i, t)] && m[(i, t)] <= high[t])).collect();
    if retained.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    Ok(MatchFilter { low, high, retained, n_total: n })
}

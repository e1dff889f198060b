//! Conditional MANOVA: nested multivariate linear models compared through the
//! Pillai-Bartlett trace of the extra sum-of-squares-and-cross-products.
//!
//! The null model regresses the outcomes on an intercept and the covariates.
//! The alternative adds group indicators and group-by-covariate interactions.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::matching::class_indices;
use crate::matrix::RealMatrix;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelFit {
    /// `predictors x D`.
    pub coefficients: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub residual_sscp: DMatrix<f64>,
    pub df_residual: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmanovaResult {
    pub pillai_trace: f64,
    pub f_statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

/// Least squares fit of every outcome column on `design` via Householder QR.
pub fn fit_mlm(y: &RealMatrix, design: &RealMatrix) -> Result<LinearModelFit> {
    let (n, p) = (design.nrows(), design.ncols());
    if y.nrows() != n {
        return Err(Error::InvalidInput(format!("{} outcome rows for {n} design rows", y.nrows())));
    }
    if n <= p {
        return Err(Error::TooFewSamples { needed: p + 1, got: n });
    }
    let x = design.as_matrix();
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= RANK_TOL * scale) {
        return Err(Error::SingularDesign);
    }
    let df_residual = n - p;
    if y.ncols() > df_residual {
        return Err(Error::Hdlss { dim: y.ncols(), df_residual });
    }
    let qty = qr.q().transpose() * y.as_matrix();
    let coefficients = r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;
    let residuals = y.as_matrix() - x * &coefficients;
    let residual_sscp = residuals.transpose() * &residuals;
    Ok(LinearModelFit { coefficients, residuals, residual_sscp, df_residual })
}

/// Designs `[1, x]` and `[1, x, groups, groups * x]` with group 1 as baseline.
fn designs(classes: &[usize], k: usize, x: &RealMatrix) -> (RealMatrix, RealMatrix) {
    let (n, r) = (x.nrows(), x.ncols());
    let xm = x.as_matrix();
    let null = DMatrix::from_fn(n, 1 + r, |i, j| if j == 0 { 1.0 } else { xm[(i, j - 1)] });
    let extra = (k - 1) * (1 + r);
    let alt = DMatrix::from_fn(n, 1 + r + extra, |i, j| {
        if j <= r {
            return null[(i, j)];
        }
        let e = j - 1 - r;
        let (group, term) = (1 + e / (1 + r), e % (1 + r));
        if classes[i] != group {
            0.0
        } else if term == 0 {
            1.0
        } else {
            xm[(i, term - 1)]
        }
    });
    (RealMatrix::from_matrix(null).expect("finite"), RealMatrix::from_matrix(alt).expect("finite"))
}

/// Tests whether group membership explains outcome variation beyond a linear
/// function of the covariates.
pub fn cmanova_test(y: &RealMatrix, groups: &[usize], x: &RealMatrix) -> Result<CmanovaResult> {
    let n = y.nrows();
    if groups.len() != n || x.nrows() != n {
        return Err(Error::InvalidInput("outcomes, groups and covariates disagree on n".into()));
    }
    let k = crate::matching::n_groups(groups);
    if k < 2 {
        return Err(Error::InvalidInput("need at least two groups".into()));
    }
    let classes = class_indices(groups, k)?;
    for g in 0..k {
        let count = classes.iter().filter(|&&c| c == g).count();
        if count < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: count });
        }
    }
    let (null_design, alt_design) = designs(&classes, k, x);
    let alt = fit_mlm(y, &alt_design)?;
    let null = fit_mlm(y, &null_design)?;

    let d = y.ncols();
    let q = alt_design.ncols() - null_design.ncols();
    let e0 = &null.residual_sscp;
    let h = e0 - &alt.residual_sscp;
    // trace(H (H + E)^-1) with H + E = E0
    let chol = e0.clone().cholesky().ok_or(Error::SingularDesign)?;
    let s = d.min(q) as f64;
    let v = chol.solve(&h).trace().clamp(0.0, s);

    let df_res = alt.df_residual as f64;
    let dq = (d as f64 - q as f64).abs();
    let num = dq + s; // 2m' + s + 1
    let den = df_res - d as f64 + s; // 2n' + s + 1
    let df1 = s * num;
    let df2 = s * den;
    let (f_statistic, p_value) = if v >= s {
        (f64::INFINITY, 0.0)
    } else {
        let f = (v / (s - v)) * (den / num);
        let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::InvalidInput(e.to_string()))?;
        (f, dist.sf(f).clamp(0.0, 1.0))
    };
    Ok(CmanovaResult { pillai_trace: v, f_statistic, df1: df1 as usize, df2: df2 as usize, p_value })
}

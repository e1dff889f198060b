//! Distance matrices, centering, Gaussian kernel weights and Haar-random
//! orthogonal matrices.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

const SYMMETRY_TOL: f64 = 1e-9;
const BANDWIDTH_FLOOR: f64 = 1e-8;

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    /// Validates an arbitrary square matrix as a distance matrix.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput("distance matrix must be square".into()));
        }
        let n = m.nrows();
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidInput("distance matrix diagonal must be zero".into()));
            }
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidInput("distances must be finite and non-negative".into()));
                }
                if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                    return Err(Error::InvalidInput("distance matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Distances among the selected samples, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self(DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.0[(idx[i], idx[j])]))
    }

    /// Strictly positive off-diagonal distances, one per unordered pair.
    fn positive_pairs(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for j in 0..n {
            for i in (j + 1)..n {
                let d = self.0[(i, j)];
                if d > 0.0 {
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Euclidean distances between the rows of `points`.
pub fn pairwise_euclidean(points: &RealMatrix) -> Result<DistanceMatrix> {
    let m = points.as_matrix();
    if m.nrows() == 0 {
        return Err(Error::InvalidInput("need at least one row".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("points have non-finite entries".into()));
    }
    let n = m.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).iter().copied().collect()).collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = s.sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(DistanceMatrix(d))
}

/// Subtracts row and column means and adds back the grand mean.
pub fn double_center(d: &DistanceMatrix) -> RealMatrix {
    RealMatrix::from_matrix(double_center_matrix(d.as_matrix())).expect("centering a finite matrix stays finite")
}

pub(crate) fn double_center_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Kernel bandwidth: a fixed positive value or the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    Fixed(f64),
    #[default]
    Auto,
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Bandwidth::Auto);
        }
        let h: f64 = s.parse().map_err(|_| Error::InvalidInput(format!("bad bandwidth `{s}`")))?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Bandwidth::Fixed(h))
    }
}

/// Gaussian similarity weights between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    w: DMatrix<f64>,
    bandwidth: f64,
}

impl KernelWeights {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Equal weights everywhere. Conditioning on such weights is the same as
    /// not conditioning at all.
    pub fn uniform(n: usize) -> Self {
        Self { w: DMatrix::from_element(n, n, 1.0), bandwidth: f64::INFINITY }
    }

    /// Weight matrix with each column `k` holding the anchor-`k` weights
    /// normalized to sum to one.
    pub(crate) fn normalized_columns(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            let total: f64 = self.w.row(k).sum();
            for j in 0..n {
                out[(j, k)] = self.w[(k, j)] / total;
            }
        }
        out
    }
}

/// Median of the strictly positive pairwise distances, floored at 1e-8.
pub fn median_heuristic(d: &DistanceMatrix) -> Result<f64> {
    let mut pos = d.positive_pairs();
    if pos.is_empty() {
        return Err(Error::DegenerateCovariates);
    }
    pos.sort_by(f64::total_cmp);
    let m = pos.len();
    let med = if m % 2 == 1 { pos[m / 2] } else { 0.5 * (pos[m / 2 - 1] + pos[m / 2]) };
    Ok(med.max(BANDWIDTH_FLOOR))
}

/// `w[i][j] = exp(-d[i][j]^2 / (2 h^2))`.
pub fn gaussian_kernel(covariate_distances: &DistanceMatrix, bandwidth: Bandwidth) -> Result<KernelWeights> {
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h.is_finite() && h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Auto => median_heuristic(covariate_distances)?,
    };
    let scale = 1.0 / (2.0 * h * h);
    let w = covariate_distances.as_matrix().map(|d| (-d * d * scale).exp());
    Ok(KernelWeights { w, bandwidth: h })
}

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with
/// the signs of `R`'s diagonal folded into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> RealMatrix {
    assert!(dim >= 1, "dimension must be positive");
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    RealMatrix::from_matrix(q).expect("QR of a finite matrix is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> RealMatrix {
        let mut rng = stream(seed, &[]);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        RealMatrix::from_row_major(n, d, &data).unwrap()
    }

    #[test]
    fn euclidean_hand_example() {
        let p = RealMatrix::column(&[0.0, 3.0, 4.0]).unwrap();
        let d = pairwise_euclidean(&p).unwrap();
        let expect = [[0., 3., 4.], [3., 0., 1.], [4., 1., 0.]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.get(i, j), expect[i][j]);
            }
        }
        let single = pairwise_euclidean(&RealMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(single.n(), 1);
        assert_eq!(single.get(0, 0), 0.0);
    }

    #[test]
    fn euclidean_matches_double_loop() {
        let p = random_points(5, 3, 11);
        let d = pairwise_euclidean(&p).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for c in 0..3 {
                    let diff = p.get(i, c) - p.get(j, c);
                    s += diff * diff;
                }
                assert!((d.get(i, j) - s.sqrt()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn double_center_closed_forms() {
        let c = 2.5;
        let d = DistanceMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, c, c, 0.0])).unwrap();
        let a = double_center(&d);
        assert!((a.get(0, 0) + c / 2.0).abs() < 1e-15);
        assert!((a.get(0, 1) - c / 2.0).abs() < 1e-15);
        assert!((a.get(1, 0) - c / 2.0).abs() < 1e-15);
        assert!((a.get(1, 1) + c / 2.0).abs() < 1e-15);

        let z = DistanceMatrix::from_matrix(DMatrix::zeros(4, 4)).unwrap();
        assert!(double_center(&z).as_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn double_center_zero_margins() {
        let d = pairwise_euclidean(&random_points(6, 2, 3)).unwrap();
        let a = double_center(&d);
        for i in 0..6 {
            assert!(a.as_matrix().row(i).sum().abs() < 1e-10);
            assert!(a.as_matrix().column(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn double_center_idempotent() {
        let d = pairwise_euclidean(&random_points(8, 3, 4)).unwrap();
        let once = double_center(&d);
        let twice = double_center_matrix(once.as_matrix());
        let diff = (once.as_matrix() - twice).abs().max();
        assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0., 1., 2., 0.])).is_err());
        assert!(DistanceMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1., 1., 1., 0.])).is_err());
        assert!(DistanceMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0., -1., -1., 0.])).is_err());
        assert!(pairwise_euclidean(&RealMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn kernel_closed_forms() {
        let d = pairwise_euclidean(&RealMatrix::column(&[0.0, 0.7]).unwrap()).unwrap();
        let w = gaussian_kernel(&d, Bandwidth::Fixed(0.7)).unwrap();
        assert_eq!(w.get(0, 0), 1.0);
        assert!((w.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((w.get(0, 1) - 0.60653).abs() < 1e-5);
        assert!(gaussian_kernel(&d, Bandwidth::Fixed(0.0)).is_err());
    }

    #[test]
    fn auto_bandwidth_is_median_of_off_diagonal() {
        let mut rng = stream(99, &[]);
        let xs: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let d = pairwise_euclidean(&RealMatrix::column(&xs).unwrap()).unwrap();
        // sort-and-select oracle over unordered pairs
        let mut pairs = Vec::new();
        for i in 0..10 {
            for j in (i + 1)..10 {
                pairs.push((xs[i] - xs[j]).abs());
            }
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pairs.len(), 45);
        let oracle = pairs[22];
        let w = gaussian_kernel(&d, Bandwidth::Auto).unwrap();
        assert!((w.bandwidth() - oracle).abs() < 1e-15);
    }

    #[test]
    fn degenerate_covariates_rejected() {
        let d = pairwise_euclidean(&RealMatrix::column(&[1.0; 5]).unwrap()).unwrap();
        assert!(matches!(gaussian_kernel(&d, Bandwidth::Auto), Err(Error::DegenerateCovariates)));
        assert!(gaussian_kernel(&d, Bandwidth::Fixed(1.0)).is_ok());
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("auto".parse::<Bandwidth>().unwrap(), Bandwidth::Auto);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
        assert!("wide".parse::<Bandwidth>().is_err());
    }

    #[test]
    fn haar_small_and_orthogonal() {
        let mut rng = stream(1, &[]);
        let r1 = haar_orthogonal(1, &mut rng);
        assert_eq!(r1.get(0, 0).abs(), 1.0);
        for seed in 0..5 {
            let r = haar_orthogonal(10, &mut stream(seed, &[]));
            let m = r.as_matrix();
            let err = (m.transpose() * m - DMatrix::identity(10, 10)).abs().max();
            assert!(err <= 1e-10, "{err}");
        }
    }

    #[test]
    fn haar_first_entry_is_centered() {
        let mut rng = stream(2024, &[]);
        let samples: Vec<f64> = (0..10_000).map(|_| haar_orthogonal(3, &mut rng).get(0, 0)).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn haar_preserves_distances() {
        let x = random_points(12, 6, 8);
        let r = haar_orthogonal(6, &mut stream(8, &[1]));
        let rotated = RealMatrix::from_matrix(x.as_matrix() * r.as_matrix().transpose()).unwrap();
        let d0 = pairwise_euclidean(&x).unwrap();
        let d1 = pairwise_euclidean(&rotated).unwrap();
        assert!((d0.as_matrix() - d1.as_matrix()).abs().max() <= 1e-10);
    }

    proptest! {
        #[test]
        fn triangle_inequality(seed in 0u64..1000, n in 3usize..9, d in 1usize..4) {
            let dm = pairwise_euclidean(&random_points(n, d, seed)).unwrap();
            for i in 0..n { for j in 0..n { for k in 0..n {
                prop_assert!(dm.get(i, k) <= dm.get(i, j) + dm.get(j, k) + 1e-12);
            }}}
        }

        #[test]
        fn kernel_monotone_in_distance(h in 0.01f64..10.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let d = pairwise_euclidean(&RealMatrix::column(&[0.0, a, -b]).unwrap()).unwrap();
            let w = gaussian_kernel(&d, Bandwidth::Fixed(h)).unwrap();
            if a < b {
                prop_assert!(w.get(0, 1) >= w.get(0, 2));
            } else {
                prop_assert!(w.get(0, 1) <= w.get(0, 2));
            }
            prop_assert!(w.get(1, 2) > 0.0 || (a + b) / h > 30.0);
            prop_assert!(w.get(1, 2) <= 1.0);
        }
    }
}

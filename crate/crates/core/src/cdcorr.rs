//! Conditional distance correlation and its local-permutation test.
//!
//! For every anchor sample `k` the Gaussian kernel row `w[k]`, normalized to
//! sum to one, defines a weighted empirical law. Both distance matrices are
//! double centered under that law and the weighted distance correlation is
//! taken; the statistic is the plain average over anchors.
//!
//! The permutation null only reshuffles `v` within blocks of covariate
//! nearest neighbours, so replicates keep the association between `v` and the
//! covariates that the conditional null allows.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dcorr::{permutation_p_value, Method, TestResult, MIN_SAMPLES, VARIANCE_EPS};
use crate::distances::{gaussian_kernel, pairwise_euclidean, Bandwidth, DistanceMatrix, KernelWeights};
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

/// At most this many distinct rows in `v` switches the replicate loop to the
/// label-based fast path.
const MAX_CATEGORIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdcorrConfig {
    pub bandwidth: Bandwidth,
    pub n_replicates: usize,
    pub block_size: usize,
}

impl Default for CdcorrConfig {
    fn default() -> Self {
        Self { bandwidth: Bandwidth::Auto, n_replicates: 1000, block_size: 5 }
    }
}

impl CdcorrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 2 {
            return Err(Error::Config(format!("block size must be at least 2, got {}", self.block_size)));
        }
        if self.n_replicates == 0 {
            return Err(Error::Config("need at least one permutation replicate".into()));
        }
        Ok(())
    }
}

/// Conditional distance correlation of `dy` and `dv` given kernel weights `w`.
pub fn cdcorr_statistic(dy: &DistanceMatrix, dv: &DistanceMatrix, w: &KernelWeights) -> Result<f64> {
    let n = dy.n();
    if dv.n() != n || w.n() != n {
        return Err(Error::InvalidInput(format!("size mismatch: dy {n}, dv {}, weights {}", dv.n(), w.n())));
    }
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: n });
    }
    let engine = Engine::new(dy, w);
    let v = VSide::Dense(dv.as_matrix().clone());
    let ident: Vec<usize> = (0..n).collect();
    Ok(engine.statistic(&v, &ident, &mut Scratch::new(n, &v)))
}

/// Greedy nearest-neighbour blocks. Each block is seeded with the unassigned
/// sample of smallest index and filled with its `block_size - 1` nearest
/// unassigned neighbours (ties broken by index). The last block may be short.
pub fn neighbor_blocks(x_distances: &DistanceMatrix, block_size: usize) -> Vec<Vec<usize>> {
    assert!(block_size >= 2, "block size must be at least 2");
    let n = x_distances.n();
    let mut assigned = vec![false; n];
    let mut blocks = Vec::with_capacity(n.div_ceil(block_size));
    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut candidates: Vec<usize> = (0..n).filter(|&j| !assigned[j]).collect();
        candidates.sort_by(|&a, &b| x_distances.get(seed, a).total_cmp(&x_distances.get(seed, b)).then(a.cmp(&b)));
        let mut block = vec![seed];
        for &j in candidates.iter().take(block_size - 1) {
            assigned[j] = true;
            block.push(j);
        }
        block.sort_unstable();
        blocks.push(block);
    }
    blocks
}

/// Shuffles `perm` uniformly within each block. `perm[i]` is the source row
/// placed at position `i`.
fn shuffle_within<R: Rng + ?Sized>(blocks: &[Vec<usize>], perm: &mut [usize], shuffled: &mut Vec<usize>, rng: &mut R) {
    for block in blocks {
        shuffled.clear();
        shuffled.extend_from_slice(block);
        shuffled.shuffle(rng);
        for (&dst, &src) in block.iter().zip(shuffled.iter()) {
            perm[dst] = src;
        }
    }
}

/// Random permutation that is uniform within covariate nearest-neighbour
/// blocks and the identity across them.
///
/// # Panics
///
/// If `block_size < 2`.
pub fn local_permutation<R: Rng + ?Sized>(x_distances: &DistanceMatrix, block_size: usize, rng: &mut R) -> Vec<usize> {
    let blocks = neighbor_blocks(x_distances, block_size);
    let mut perm: Vec<usize> = (0..x_distances.n()).collect();
    shuffle_within(&blocks, &mut perm, &mut Vec::with_capacity(block_size), rng);
    perm
}

/// Local-permutation test of `y` independent of `v` given `x`.
pub fn cdcorr_test<R: Rng + ?Sized>(y: &RealMatrix, v: &RealMatrix, x: &RealMatrix, cfg: &CdcorrConfig, rng: &mut R) -> Result<TestResult> {
    cfg.validate()?;
    let n = y.nrows();
    if v.nrows() != n || x.nrows() != n {
        return Err(Error::InvalidInput(format!("row counts differ: y {n}, v {}, x {}", v.nrows(), x.nrows())));
    }
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: n });
    }
    let dy = pairwise_euclidean(y)?;
    let dx = pairwise_euclidean(x)?;
    let w = gaussian_kernel(&dx, cfg.bandwidth)?;
    let blocks = neighbor_blocks(&dx, cfg.block_size);

    let engine = Engine::new(&dy, &w);
    let vside = VSide::from_points(v)?;
    let ident: Vec<usize> = (0..n).collect();
    let observed = engine.statistic(&vside, &ident, &mut Scratch::new(n, &vside));

    let seed: u64 = rng.random();
    let p_value = permutation_p_value(
        observed,
        cfg.n_replicates,
        seed,
        || (Scratch::new(n, &vside), ident.clone(), Vec::with_capacity(cfg.block_size)),
        |(scratch, perm, shuffled), rng| {
            shuffle_within(&blocks, perm, shuffled, rng);
            engine.statistic(&vside, perm, scratch)
        },
    );
    Ok(TestResult { statistic: observed, p_value, n_replicates: cfg.n_replicates, method: Method::Cdcorr })
}

/// The `v` side of the statistic.
enum VSide {
    Dense(DMatrix<f64>),
    /// Few distinct rows: class index per sample plus the distances between
    /// class representatives.
    Categorical {
        labels: Vec<usize>,
        class_dist: DMatrix<f64>,
    },
}

impl VSide {
    fn from_points(v: &RealMatrix) -> Result<Self> {
        let n = v.nrows();
        let mut reps: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let row = v.row(i);
            match reps.iter().position(|r| *r == row) {
                Some(c) => labels.push(c),
                None if reps.len() < MAX_CATEGORIES => {
                    labels.push(reps.len());
                    reps.push(row);
                }
                None => return Ok(VSide::Dense(pairwise_euclidean(v)?.as_matrix().clone())),
            }
        }
        let class_pts = RealMatrix::from_rows(&reps)?;
        let class_dist = pairwise_euclidean(&class_pts)?.as_matrix().clone();
        Ok(VSide::Categorical { labels, class_dist })
    }
}

struct Scratch {
    /// Column-stacked inputs to the single matrix product per replicate.
    stacked: DMatrix<f64>,
    product: DMatrix<f64>,
    b: Vec<f64>,
    labels: Vec<usize>,
    class_mass: Vec<f64>,
}

impl Scratch {
    fn new(n: usize, v: &VSide) -> Self {
        let (rows, k) = match v {
            VSide::Dense(_) => (3 * n, 0),
            VSide::Categorical { class_dist, .. } => (n, class_dist.nrows()),
        };
        Self {
            stacked: DMatrix::zeros(rows, n),
            product: DMatrix::zeros(rows, n),
            b: vec![0.0; n],
            labels: vec![0; n],
            class_mass: vec![0.0; k],
        }
    }
}

/// Everything on the `y` side that permutations of `v` leave unchanged.
struct Engine {
    n: usize,
    dy: DMatrix<f64>,
    /// Column `k` holds the normalized anchor-`k` weights.
    wt: DMatrix<f64>,
    /// `row_means[(i, k)]`: weighted mean of row `i` of `dy` under anchor `k`.
    row_means: DMatrix<f64>,
    grand_means: Vec<f64>,
    var_y: Vec<f64>,
}

impl Engine {
    fn new(dy: &DistanceMatrix, w: &KernelWeights) -> Self {
        let n = dy.n();
        let dy = dy.as_matrix().clone();
        let wt = w.normalized_columns();
        let row_means = &dy * &wt;
        let sq_means = dy.map(|d| d * d) * &wt;
        let mut grand_means = vec![0.0; n];
        let mut var_y = vec![0.0; n];
        for k in 0..n {
            let wk = wt.column(k);
            let ak = row_means.column(k);
            let grand = wk.dot(&ak);
            let s_dd = wk.dot(&sq_means.column(k));
            let s_aa: f64 = (0..n).map(|i| wk[i] * ak[i] * ak[i]).sum();
            grand_means[k] = grand;
            var_y[k] = s_dd - 2.0 * s_aa + grand * grand;
        }
        Self { n, dy, wt, row_means, grand_means, var_y }
    }

    /// Statistic with `v` rows reordered by `perm`.
    fn statistic(&self, v: &VSide, perm: &[usize], s: &mut Scratch) -> f64 {
        let n = self.n;
        match v {
            VSide::Dense(e) => {
                for j in 0..n {
                    let e_col = e.column(perm[j]);
                    let dy_col = self.dy.column(j);
                    let mut out = s.stacked.column_mut(j);
                    for i in 0..n {
                        let ev = e_col[perm[i]];
                        out[i] = dy_col[i] * ev;
                        out[n + i] = ev;
                        out[2 * n + i] = ev * ev;
                    }
                }
            }
            VSide::Categorical { labels, class_dist } => {
                for (dst, &src) in s.labels.iter_mut().zip(perm) {
                    *dst = labels[src];
                }
                for j in 0..n {
                    let cj = s.labels[j];
                    let dy_col = self.dy.column(j);
                    let mut out = s.stacked.column_mut(j);
                    for i in 0..n {
                        out[i] = dy_col[i] * class_dist[(s.labels[i], cj)];
                    }
                }
            }
        }
        s.product.gemm(1.0, &s.stacked, &self.wt, 0.0);

        let mut total = 0.0;
        for k in 0..n {
            let wk = self.wt.column(k);
            let pk = s.product.column(k);
            let s_de: f64 = (0..n).map(|i| wk[i] * pk[i]).sum();
            let s_ee = match v {
                VSide::Dense(_) => {
                    for i in 0..n {
                        s.b[i] = pk[n + i];
                    }
                    (0..n).map(|i| wk[i] * pk[2 * n + i]).sum::<f64>()
                }
                VSide::Categorical { class_dist, .. } => {
                    s.class_mass.iter_mut().for_each(|m| *m = 0.0);
                    for i in 0..n {
                        s.class_mass[s.labels[i]] += wk[i];
                    }
                    let kc = class_dist.nrows();
                    let mut s_ee = 0.0;
                    for c in 0..kc {
                        for c2 in 0..kc {
                            let dcc = class_dist[(c, c2)];
                            s_ee += s.class_mass[c] * s.class_mass[c2] * dcc * dcc;
                        }
                    }
                    for i in 0..n {
                        let li = s.labels[i];
                        s.b[i] = (0..kc).map(|c| class_dist[(li, c)] * s.class_mass[c]).sum();
                    }
                    s_ee
                }
            };
            let ak = self.row_means.column(k);
            let (mut b_grand, mut s_ab, mut s_bb) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let (w, b) = (wk[i], s.b[i]);
                b_grand += w * b;
                s_ab += w * ak[i] * b;
                s_bb += w * b * b;
            }
            let var_v = s_ee - 2.0 * s_bb + b_grand * b_grand;
            let var_y = self.var_y[k];
            if var_y <= VARIANCE_EPS || var_v <= VARIANCE_EPS {
                continue;
            }
            let cov = s_de - 2.0 * s_ab + self.grand_means[k] * b_grand;
            total += cov / (var_y * var_v).sqrt();
        }
        (total / n as f64).clamp(0.0, 1.0)
    }
}

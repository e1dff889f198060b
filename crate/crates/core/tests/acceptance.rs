//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --release -p ckdisc --test acceptance -- --nocapture`.

use ckdisc::cdcorr::cdcorr_statistic;
use ckdisc::dcorr::{dcorr_statistic, dcorr_test, Method};
use ckdisc::distances::{gaussian_kernel, haar_orthogonal, pairwise_euclidean, Bandwidth, DistanceMatrix, KernelWeights};
use ckdisc::harness::{export_csv, run_experiment, ExperimentConfig, ExperimentKind, PowerCurve};
use ckdisc::ks::ks_uniform_p_value;
use ckdisc::matching::{fit_multinomial, gradient, log_likelihood, predict_propensities, vector_match};
use ckdisc::pipeline::{run_test, TestOptions};
use ckdisc::seeding::stream;
use ckdisc::sims::{beta_vector, sample_covariates, simulate, MeanCurves, Setting, SimulationConfig};
use ckdisc::{Error, RealMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

const ALPHA: f64 = 0.05;
const SEED: u64 = 20_240_601;

fn report(id: &str, what: &str, pass: bool, detail: &str) {
    println!("criterion {id} [{}] {what}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn study(settings: &[Setting], balances: &[f64], effects: &[f64], method: Method, reps: usize) -> PowerCurve {
    let cfg = ExperimentConfig {
        settings: settings.to_vec(),
        dims: vec![10],
        balances: balances.to_vec(),
        effects: effects.to_vec(),
        methods: vec![method],
        repetitions: reps,
        alpha: ALPHA,
        base_seed: SEED,
        ..ExperimentConfig::new(ExperimentKind::Power)
    };
    run_experiment(&cfg).expect("experiment runs")
}

#[test]
fn c1_causal_cdcorr_validity() {
    let curve = study(&[Setting::Sigmoidal, Setting::Nonmonotone], &[0.2, 0.6, 1.0], &[0.0], Method::CausalCdcorr, 100);
    let mut detail = Vec::new();
    let mut valid = 0;
    for r in &curve.rows {
        valid += usize::from(r.ci_low <= ALPHA);
        detail.push(format!("{}@{} rate {:.2} ci_low {:.3}", r.setting, r.balance, r.rate, r.ci_low));
    }
    let pass = valid == 6 && curve.rows.len() == 6;
    report("1", "causal-cdcorr valid in 6/6 desk cells", pass, &format!("{valid}/6 valid; {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn c2_cdcorr_invalid_under_imbalance() {
    let curve = study(&[Setting::Sigmoidal], &[0.2], &[0.0], Method::Cdcorr, 100);
    let rate = curve.rows[0].rate;
    let pass = rate >= 0.30;
    report("2", "cdcorr type-I rate >= 0.30 at balance 0.2", pass, &format!("rate {rate:.2}"));
    assert!(pass);
}

#[test]
fn c3_dcorr_effect_aliasing() {
    let curve = study(&[Setting::Sigmoidal], &[0.4], &[0.0, 0.5, 1.0], Method::Dcorr, 200);
    let at = |e: f64| curve.rows.iter().find(|r| r.effect == e).unwrap();
    let (r0, r5, r1) = (at(0.0), at(0.5), at(1.0));
    let pass = r0.ci_low > ALPHA && r5.rate > r1.rate;
    report(
        "3",
        "dcorr aliases confounding and peaks at effect 0.5",
        pass,
        &format!("rate(0) {:.3} ci_low {:.3}; rate(0.5) {:.3}; rate(1) {:.3}", r0.rate, r0.ci_low, r5.rate, r1.rate),
    );
    assert!(pass);
}

#[test]
fn c4_causal_cdcorr_power_trend() {
    let curve = study(&[Setting::Nonmonotone, Setting::Heteroskedastic], &[0.4], &[0.0, 1.0], Method::CausalCdcorr, 200);
    let mut pass = true;
    let mut detail = Vec::new();
    for s in [Setting::Nonmonotone, Setting::Heteroskedastic] {
        let rate = |e| curve.find(s, 10, 0.4, e, Method::CausalCdcorr).unwrap().rate;
        let gain = rate(1.0) - rate(0.0);
        pass &= gain >= 0.3;
        detail.push(format!("{s} {:.3} -> {:.3} (gain {gain:.3})", rate(0.0), rate(1.0)));
    }
    report("4", "causal-cdcorr power gain >= 0.3", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn c5_cmanova_blind_to_variance_effects() {
    let curve = study(&[Setting::Heteroskedastic], &[0.8], &[0.0, 1.0], Method::Cmanova, 200);
    let rate = |e: f64| curve.rows.iter().find(|r| r.effect == e).unwrap().rate;
    let pass = rate(1.0) <= 0.12;
    report("5", "cmanova rate <= 0.12 at heteroskedastic effect 1", pass, &format!("rate(0) {:.3}, rate(1) {:.3}", rate(0.0), rate(1.0)));
    assert!(pass);
}

#[test]
fn c6_hdlss_guard() {
    let sim = SimulationConfig { dim: 101, ..SimulationConfig::new(Setting::Sigmoidal) };
    let data = simulate(&sim, &mut stream(SEED, &[6])).unwrap().dataset;
    let err = run_test(&data, Method::Cmanova, &TestOptions::default(), &mut stream(SEED, &[7])).unwrap_err();
    let typed = matches!(err, Error::Hdlss { dim: 101, .. });

    let reps = 100;
    let cfg = ExperimentConfig {
        settings: vec![Setting::Sigmoidal],
        dims: vec![101],
        balances: vec![0.8],
        effects: vec![0.0],
        methods: vec![Method::Cmanova],
        repetitions: reps,
        base_seed: SEED,
        ..ExperimentConfig::new(ExperimentKind::Validity)
    };
    let row = run_experiment(&cfg).unwrap().rows[0].clone();
    let pass = typed && row.n_errors == reps && row.n_applicable == 0;
    report("6", "cmanova HDLSS error at D=101", pass, &format!("error `{err}`; n_errors {}/{reps}", row.n_errors));
    assert!(pass);
}

fn gaussian(n: usize, d: usize, rng: &mut impl Rng) -> RealMatrix {
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    RealMatrix::from_row_major(n, d, &data).unwrap()
}

fn dist(m: &RealMatrix) -> DistanceMatrix {
    pairwise_euclidean(m).unwrap()
}

/// Weighted double centering `d_ij - sum_k w_k d_kj - sum_k w_k d_ik + sum_kl w_k w_l d_kl`
/// and the normalized weighted covariance, from nested loops over raw entries.
fn weighted_dcor(dy: &DistanceMatrix, dv: &DistanceMatrix, w: &[f64]) -> Option<f64> {
    let n = w.len();
    let centered = |d: &DistanceMatrix| -> Vec<Vec<f64>> {
        let mut grand = 0.0;
        for k in 0..n {
            for l in 0..n {
                grand += w[k] * w[l] * d.get(k, l);
            }
        }
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let row: f64 = (0..n).map(|k| w[k] * d.get(i, k)).sum();
                        let col: f64 = (0..n).map(|k| w[k] * d.get(k, j)).sum();
                        d.get(i, j) - row - col + grand
                    })
                    .collect()
            })
            .collect()
    };
    let (a, b) = (centered(dy), centered(dv));
    let inner = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += w[i] * w[j] * p[i][j] * q[i][j];
            }
        }
        s
    };
    let (vy, vv) = (inner(&a, &a), inner(&b, &b));
    (vy > 1e-14 && vv > 1e-14).then(|| inner(&a, &b) / (vy * vv).sqrt())
}

fn oracle_dcorr(dy: &DistanceMatrix, dv: &DistanceMatrix) -> f64 {
    let n = dy.n();
    weighted_dcor(dy, dv, &vec![1.0 / n as f64; n]).unwrap_or(0.0)
}

fn oracle_cdcorr(dy: &DistanceMatrix, dv: &DistanceMatrix, k: &KernelWeights) -> f64 {
    let n = dy.n();
    let mut total = 0.0;
    for anchor in 0..n {
        let raw: Vec<f64> = (0..n).map(|j| k.get(anchor, j)).collect();
        let z: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / z).collect();
        total += weighted_dcor(dy, dv, &w).unwrap_or(0.0);
    }
    total / n as f64
}

#[test]
fn c7_oracle_equivalence() {
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = stream(SEED, &[7, inst]);
        let n = rng.random_range(4..=8);
        let dy = dist(&gaussian(n, rng.random_range(1..=4), &mut rng));
        let dv = dist(&gaussian(n, rng.random_range(1..=3), &mut rng));
        let dx = dist(&gaussian(n, 1, &mut rng));
        let w = gaussian_kernel(&dx, Bandwidth::Auto).unwrap();
        worst = worst.max((dcorr_statistic(&dy, &dv).unwrap() - oracle_dcorr(&dy, &dv)).abs());
        worst = worst.max((cdcorr_statistic(&dy, &dv, &w).unwrap() - oracle_cdcorr(&dy, &dv, &w)).abs());
    }
    let pass = worst <= 1e-12;
    report("7", "dcorr/cdcorr match brute force on 20 instances", pass, &format!("max abs diff {worst:.2e}"));
    assert!(pass);
}

fn check(failures: &mut Vec<String>, name: &str, ok: bool) {
    if !ok {
        failures.push(name.to_owned());
    }
}

#[test]
fn c8_property_suites() {
    let mut failures = Vec::new();

    // statistic range
    let mut in_range = true;
    for inst in 0..50u64 {
        let mut rng = stream(SEED, &[8, 0, inst]);
        let y = gaussian(15, 3, &mut rng);
        let v = gaussian(15, 2, &mut rng);
        let x = gaussian(15, 1, &mut rng);
        let w = gaussian_kernel(&dist(&x), Bandwidth::Auto).unwrap();
        let a = dcorr_statistic(&dist(&y), &dist(&v)).unwrap();
        let b = cdcorr_statistic(&dist(&y), &dist(&v), &w).unwrap();
        in_range &= (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b);
    }
    check(&mut failures, "statistic range", in_range);

    // p-value uniformity under an exchangeable null
    let p: Vec<f64> = (0..500u64)
        .map(|run| {
            let mut rng = stream(SEED, &[8, 1, run]);
            let y = gaussian(30, 2, &mut rng);
            let v = gaussian(30, 1, &mut rng);
            dcorr_test(&y, &v, 199, &mut rng).unwrap().p_value
        })
        .collect();
    let ks_p = ks_uniform_p_value(&p);
    check(&mut failures, "p-value uniformity", ks_p > 0.01);

    // multinomial gradient against central differences
    let mut rng = stream(SEED, &[8, 2]);
    let x = gaussian(60, 2, &mut rng);
    let groups: Vec<usize> = (0..60).map(|i| if i < 3 { i + 1 } else { rng.random_range(1..=3) }).collect();
    let mut worst_rel: f64 = 0.0;
    for _ in 0..10 {
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient(&theta, &x, &groups, 3);
        for j in 0..theta.len() {
            let h = 1e-5;
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (log_likelihood(&up, &x, &groups, 3) - log_likelihood(&down, &x, &groups, 3)) / (2.0 * h);
            worst_rel = worst_rel.max((g[j] - fd).abs() / fd.abs().max(1.0));
        }
    }
    check(&mut failures, "gradient finite differences", worst_rel <= 1e-5);

    // Haar orthogonality
    let mut worst_orth: f64 = 0.0;
    for dim in [1, 2, 10, 101] {
        let q = haar_orthogonal(dim, &mut stream(SEED, &[8, 3, dim as u64]));
        let m = q.as_matrix();
        let e = (m.transpose() * m - nalgebra::DMatrix::identity(dim, dim)).abs().max();
        worst_orth = worst_orth.max(e);
    }
    check(&mut failures, "haar orthogonality", worst_orth <= 1e-10);

    // vector matching box containment
    let mut contained = true;
    for run in 0..20u64 {
        let mut rng = stream(SEED, &[8, 4, run]);
        let (g, xs) = sample_covariates(3, 0.3, 0.5, 150, &mut rng);
        let x = RealMatrix::column(&xs).unwrap();
        let model = fit_multinomial(&x, &g, 100, 1e-8).unwrap();
        let scores = predict_propensities(&model, &x).unwrap();
        if let Ok(f) = vector_match(&scores, &g) {
            for &i in &f.retained {
                for t in 1..=3 {
                    let s = scores.get(i, t);
                    contained &= f.low[t - 1] <= s && s <= f.high[t - 1];
                }
            }
        }
    }
    check(&mut failures, "vector matching containment", contained);

    // reflection identity at effect 1
    let curves = MeanCurves::tabulate(Setting::Sigmoidal, 2, 1.0, &beta_vector(10, 1.5));
    let m = curves.grid.len();
    let mut worst_refl: f64 = 0.0;
    for i in 0..m {
        assert_eq!(curves.grid[i], -curves.grid[m - 1 - i]);
        for p in 0..10 {
            worst_refl = worst_refl.max((curves.means[0][(i, p)] - curves.means[1][(m - 1 - i, p)]).abs());
        }
    }
    check(&mut failures, "reflection identity", worst_refl <= 1e-12);

    // determinism across worker counts
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 8] {
        let cfg = ExperimentConfig {
            settings: vec![Setting::Sigmoidal, Setting::Kgroup],
            dims: vec![5],
            balances: vec![0.4],
            effects: vec![0.0, 0.5],
            repetitions: 6,
            n: 60,
            n_replicates: 99,
            base_seed: SEED,
            threads: Some(threads),
            ..ExperimentConfig::new(ExperimentKind::Power)
        };
        let path = dir.path().join(format!("w{threads}.csv"));
        export_csv(&run_experiment(&cfg).unwrap(), &path).unwrap();
        outputs.push(std::fs::read(&path).unwrap());
    }
    check(&mut failures, "determinism 1 vs 8 workers", outputs[0] == outputs[1]);

    let pass = failures.is_empty();
    let detail = format!(
        "ks p {ks_p:.3}; grad rel err {worst_rel:.1e}; orth err {worst_orth:.1e}; reflection err {worst_refl:.1e}; failed [{}]",
        failures.join(", ")
    );
    report("8", "property suites", pass, &detail);
    assert!(pass);
}

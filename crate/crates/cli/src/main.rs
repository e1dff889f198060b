//! `ckdisc` command line: simulate datasets, run a single test, run a study.
//!
//! Exit status is 0 on success, 2 when the chosen test cannot be applied to
//! the data (HDLSS, empty overlap, ...) and 1 for any other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use ckdisc::cdcorr::CdcorrConfig;
use ckdisc::dcorr::Method;
use ckdisc::distances::Bandwidth;
use ckdisc::harness::{
    export_csv, export_dataset, import_dataset, load_dataset, run_experiment, DatasetColumns, ExperimentConfig, ExperimentKind,
};
use ckdisc::pipeline::{run_test_detailed, TestOptions};
use ckdisc::seeding::stream;
use ckdisc::sims::{simulate_seeded, Setting, SimulationConfig};
use clap::{Args, Parser, Subcommand};

const THREADS_ENV: &str = "CKDISC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ckdisc", version, about = "K-sample causal conditional discrepancy testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw one dataset from a simulation setting and write it as CSV.
    Simulate(SimulateArgs),
    /// Run one test on a CSV dataset.
    Test(TestArgs),
    /// Run a validity or power study and write the results CSV.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    setting: Setting,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long = "d", default_value_t = 10)]
    dim: usize,
    /// Defaults to 3 for kgroup and 2 otherwise.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    balance: f64,
    #[arg(long, default_value_t = 0.0)]
    effect: f64,
    /// Signal decay exponent; defaults to the setting's own.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    treatment_prob: f64,
    #[arg(long)]
    no_rotate: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated outcome columns; defaults to every `y_*` column.
    #[arg(long, value_delimiter = ',')]
    outcome_cols: Vec<String>,
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Comma-separated covariate columns; defaults to every `x_*` column.
    #[arg(long, value_delimiter = ',')]
    covariate_cols: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    block_size: usize,
    #[arg(long, default_value = "auto")]
    bandwidth: Bandwidth,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    kind: ExperimentKind,
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<Setting>>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    balances: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    effects: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.90)]
    ci_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; falls back to CKDISC_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn simulate_cmd(a: SimulateArgs) -> ckdisc::Result<()> {
    let base = SimulationConfig::new(a.setting);
    let cfg = SimulationConfig {
        n: a.n,
        dim: a.dim,
        k: a.k.unwrap_or(base.k),
        balance: a.balance,
        effect: a.effect,
        decay: a.q.unwrap_or(base.decay),
        treatment_prob: a.treatment_prob,
        rotate: !a.no_rotate,
        seed: a.seed,
        ..base
    };
    let sample = simulate_seeded(&cfg)?;
    export_dataset(&sample.dataset, &a.out)
}

fn test_cmd(a: TestArgs) -> ckdisc::Result<()> {
    let data = if a.outcome_cols.is_empty() && a.covariate_cols.is_empty() && a.group_col == "group" {
        import_dataset(&a.data)?
    } else {
        let outcomes = if a.outcome_cols.is_empty() { prefixed(&a.data, "y_")? } else { a.outcome_cols };
        let covariates = if a.covariate_cols.is_empty() { prefixed(&a.data, "x_")? } else { a.covariate_cols };
        load_dataset(&a.data, &DatasetColumns { outcomes, group: a.group_col, covariates })?
    };
    let options = TestOptions {
        cdcorr: CdcorrConfig { bandwidth: a.bandwidth, n_replicates: a.replicates, block_size: a.block_size },
        ..TestOptions::default()
    };
    let out = run_test_detailed(&data, a.method, &options, &mut stream(a.seed, &[]))?;
    let retained = out.filter.as_ref().map_or(data.n(), |f| f.n_retained());
    println!("statistic={} p={} retained={}/{}", out.test.statistic, out.test.p_value, retained, data.n());
    Ok(())
}

/// Header names starting with `prefix`.
fn prefixed(path: &PathBuf, prefix: &str) -> ckdisc::Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or("");
    Ok(header.split(',').map(str::trim).filter(|h| h.starts_with(prefix)).map(str::to_owned).collect())
}

fn threads(flag: Option<usize>) -> ckdisc::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| ckdisc::Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))
        }
        Err(_) => Ok(None),
    }
}

fn experiment_cmd(a: ExperimentArgs) -> ckdisc::Result<()> {
    let base = ExperimentConfig::new(a.kind);
    let cfg = ExperimentConfig {
        settings: a.settings.unwrap_or(base.settings.clone()),
        dims: a.dims.unwrap_or(base.dims.clone()),
        methods: a.methods.unwrap_or(base.methods.clone()),
        balances: a.balances.unwrap_or(base.balances.clone()),
        effects: a.effects.unwrap_or(base.effects.clone()),
        repetitions: a.reps.unwrap_or(base.repetitions),
        alpha: a.alpha,
        n: a.n,
        n_replicates: a.replicates,
        ci_level: a.ci_level,
        base_seed: a.seed,
        threads: threads(a.threads)?,
        ..base
    };
    let curve = run_experiment(&cfg)?;
    export_csv(&curve, &a.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Test(a) => test_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_applicability() { 2 } else { 1 })
        }
    }
}

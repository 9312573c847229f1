use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ndscausal::bench::{self, report, ExperimentConfig};
use ndscausal::estimators::{self, Method};
use ndscausal::features::{self, FeatureKind, FeatureParams};
use ndscausal::graphgen::{self, InteractionMatrix, ObservedSet};
use ndscausal::noise::{build_covariance, CovarianceSpec, InterventionSpec};
use ndscausal::simulate::{self, TimeSeries};
use ndscausal::theory::ConsistencyReport;
use ndscausal::{linalg, Error, Result};

#[derive(Parser)]
#[command(name = "ndscausal", version, about = "Causal structure recovery for linear networked dynamical systems")]
struct Cli {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random graph and its interaction matrix
    Generate(GenerateArgs),
    /// Simulate a time series from an interaction matrix
    Simulate(SimulateArgs),
    /// Apply a matrix estimator to a stored time series
    Estimate(EstimateArgs),
    /// Dump per-pair features of a stored time series
    Features(FeaturesArgs),
    /// Train the networks of a config and save them to a directory
    Train,
    /// Run a benchmark config and write result rows
    Bench,
    /// Check the noise flatness condition for stored matrices
    Audit(AuditArgs),
    /// Aggregate a results CSV into accuracy-vs-n rows
    Plotdata(PlotdataArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    rho: f64,
    /// Also write the binary adjacency matrix here
    #[arg(long)]
    graph_out: Option<PathBuf>,
    /// Also write a noise covariance here (needs --sigma2)
    #[arg(long)]
    cov_out: Option<PathBuf>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    osc: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Interaction matrix file
    #[arg(long)]
    matrix: PathBuf,
    /// Noise covariance file (identity when absent)
    #[arg(long)]
    cov: Option<PathBuf>,
    #[arg(long)]
    length: usize,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    intervention: f64,
}

#[derive(Args)]
struct ObservedArgs {
    /// Comma-separated observed node indices (all when absent)
    #[arg(long, value_delimiter = ',')]
    observed: Option<Vec<usize>>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Time series file (matrix format, one row per sample)
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "nig")]
    method: String,
    /// Samples to use (all usable when absent)
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    observed: ObservedArgs,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "k")]
    kind: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Interaction matrix over all nodes, for labels
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Standardize the features
    #[arg(long)]
    scale: bool,
    #[command(flatten)]
    observed: ObservedArgs,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    cov: PathBuf,
    /// Print a CSV row instead of aligned text
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct PlotdataArgs {
    /// Results CSV written by `bench`
    #[arg(long)]
    input: PathBuf,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.data.seed = seed;
    }
    Ok(cfg)
}

fn observed_set(args: &ObservedArgs, n: usize) -> Result<ObservedSet> {
    match &args.observed {
        Some(idx) => ObservedSet::new(idx.clone(), n),
        None => Ok(ObservedSet::full(n)),
    }
}

fn usable(ts_len: usize, n: Option<usize>, lag: usize) -> Result<usize> {
    let max = ts_len.saturating_sub(lag);
    match n {
        Some(n) if n > max => Err(Error::Length(format!("n = {n} needs {} samples, have {ts_len}", n + lag))),
        Some(n) => Ok(n),
        None if max == 0 => Err(Error::Length("series too short".into())),
        None => Ok(max),
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let g = graphgen::erdos_renyi(a.nodes, a.p, a.directed, ndscausal::rng::mix(seed, ndscausal::rng::stream::GRAPH))?;
    let im = graphgen::laplacian_weights(&g, a.alpha, a.rho)?;
    if let Some(p) = &a.graph_out {
        linalg::write_matrix(p, g.adjacency())?;
    }
    if let Some(p) = &a.cov_out {
        let sigma2 = a.sigma2.ok_or_else(|| Error::Parameter("--cov-out needs --sigma2".into()))?;
        let s = build_covariance(
            a.nodes,
            sigma2,
            a.beta,
            a.osc,
            ndscausal::rng::mix(seed, ndscausal::rng::stream::COVARIANCE),
        )?;
        linalg::write_matrix(p, s.matrix())?;
    }
    let mut out = output(&cli.out)?;
    out.write_all(linalg::format_matrix(im.matrix()).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let im = InteractionMatrix::from_matrix(linalg::read_matrix(&a.matrix)?)?;
    let sigma = match &a.cov {
        Some(p) => CovarianceSpec::from_matrix(linalg::read_matrix(p)?)?,
        None => CovarianceSpec::identity(im.n())?,
    };
    let burn_in = a.burn_in.unwrap_or_else(|| simulate::default_burn_in(im.rho()));
    let ts = simulate::simulate(
        &im,
        &sigma,
        &InterventionSpec::new(a.intervention)?,
        a.length,
        burn_in,
        cli.seed.unwrap_or(0),
    )?;
    let mut out = output(&cli.out)?;
    out.write_all(linalg::format_matrix(ts.data()).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn read_series(path: &Path, observed: &ObservedArgs) -> Result<ndscausal::simulate::ObservedTimeSeries> {
    let ts = TimeSeries::from_data(linalg::read_matrix(path)?)?;
    let s = observed_set(observed, ts.n_nodes())?;
    simulate::observe(&ts, &s)
}

fn estimate_cmd(cli: &Cli, a: &EstimateArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let ts = read_series(&a.series, &a.observed)?;
    let n = usable(ts.len(), a.n, method.max_lag())?;
    let m = ndscausal::moments::empirical_moments(ts.data(), method.max_lag(), n)?;
    let e = estimators::estimate_from_moments(method, &m, ts.observed())?;
    let mut out = output(&cli.out)?;
    writeln!(out, "method,n,i,j,value")?;
    for row in e.csv_rows() {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

fn features_cmd(cli: &Cli, a: &FeaturesArgs) -> Result<()> {
    let kind: FeatureKind = a.kind.parse()?;
    let p = FeatureParams::new(a.d, a.m)?;
    let ts = read_series(&a.series, &a.observed)?;
    let n = usable(ts.len(), a.n, p.m)?;
    let mut fs = features::build_from_series(kind, &ts, n, p)?;
    if let Some(path) = &a.truth {
        let truth = InteractionMatrix::from_matrix(linalg::read_matrix(path)?)?;
        if truth.n() != ts.observed().n_total() {
            return Err(Error::Parameter("truth matrix size does not match the series".into()));
        }
        fs = fs.with_labels(&linalg::principal_submatrix(&truth.support(), ts.observed().indices()))?;
    }
    if a.scale {
        fs = features::standard_scale(&fs)?.0;
    }
    let mut out = output(&cli.out)?;
    fs.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn train_cmd(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = cli.out.as_ref().ok_or_else(|| Error::Config("train needs --out DIR".into()))?;
    let models = bench::train_models(&cfg)?;
    if models.models.is_empty() {
        return Err(Error::Config("no ffnn_* methods in the config".into()));
    }
    models.save(dir)?;
    for (n, kind) in models.models.keys() {
        eprintln!("saved {}", dir.join(bench::TrainedModels::file_name(*n, *kind)).display());
    }
    Ok(())
}

fn bench_cmd(cli: &Cli) -> Result<bench::Summary> {
    let cfg = load_config(cli)?;
    let target = cli.out.clone().or_else(|| cfg.output.csv.clone());
    let out = output(&target)?;
    let summary = bench::run_benchmark(&cfg, out)?;
    eprintln!("{} rows, {} failed", summary.rows, summary.error_rows);
    Ok(summary)
}

fn audit_cmd(cli: &Cli, a: &AuditArgs) -> Result<()> {
    let r = report::audit(&a.matrix, &a.cov)?;
    let mut out = output(&cli.out)?;
    if a.csv {
        writeln!(out, "{}", ConsistencyReport::CSV_HEADER)?;
        writeln!(out, "{}", r.csv_row())?;
    } else {
        write!(out, "{r}")?;
    }
    out.flush()?;
    Ok(())
}

fn plotdata_cmd(cli: &Cli, a: &PlotdataArgs) -> Result<()> {
    let rows = report::plotdata(&std::fs::read_to_string(&a.input)?)?;
    let mut out = output(&cli.out)?;
    writeln!(out, "{}", report::PLOT_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    out.flush()?;
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Generate(a) => generate(&cli, a),
        Command::Simulate(a) => simulate_cmd(&cli, a),
        Command::Estimate(a) => estimate_cmd(&cli, a),
        Command::Features(a) => features_cmd(&cli, a),
        Command::Train => train_cmd(&cli),
        Command::Bench => match bench_cmd(&cli) {
            Ok(s) if s.error_rows > 0 => return ExitCode::from(4),
            other => other.map(|_| ()),
        },
        Command::Audit(a) => audit_cmd(&cli, a),
        Command::Plotdata(a) => plotdata_cmd(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

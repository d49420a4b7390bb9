use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;

use egolsm::analysis::{correlation_table, DEFAULT_RESTARTS};
use egolsm::error::{Error, Result};
use egolsm::experiment::{
    center_study, estimate, run_experiment, streams, write_outcome, CenterRow, ExperimentConfig, NetworkSpec, MANIFEST_FILE,
    ROWS_FILE,
};
use egolsm::init::InitConfig;
use egolsm::io::{
    csv_err, emit_positions, encode_labels, read_config, read_covariates, read_edge_list, read_labels, write_json, CovariateFormat,
    IdBase,
};
use egolsm::simgen::{apply_scenario, gen_simulation1, sample_adjacency, MixtureParams, Scenario};
use egolsm::stats::mean;
use egolsm::{PartialView, ProjectionMode, RngSpec, SolverConfig};

/// Latent space model estimation from ego-centered partial views of a
/// network.
#[derive(Parser)]
#[command(name = "egolsm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-community mixture network and write it to --out.
    Simulate(Common),
    /// Fit latent positions from one center's partial view.
    Fit(Common),
    /// Centralities, clustering accuracy and correlations for many centers.
    Analyze(AnalyzeArgs),
    /// Replicated simulation study over scenarios.
    Experiment(Common),
}

/// Every option may also be set in a `key = value` config file; flags win.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key-value config file using the flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Edge list ("u v" per line, 0- or 1-based ids detected).
    #[arg(long)]
    network: Option<PathBuf>,
    /// Covariate matrix: dense n×n CSV or "i j x" triplets (0-based).
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Node labels, "node label" per line, same id base as the network.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Center node id, in the network file's id base [default: first node].
    #[arg(long)]
    center: Option<usize>,
    /// imbalanced, balanced or full [default: imbalanced; experiment runs all three].
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Latent dimension [default: 3 for simulated networks, 2 otherwise].
    #[arg(long)]
    k: Option<usize>,
    /// Base step size [default: 0.2].
    #[arg(long)]
    eta: Option<f64>,
    /// Gradient iterations [default: 500].
    #[arg(long)]
    iters: Option<usize>,
    /// practical or theoretical [default: practical].
    #[arg(long)]
    projection: Option<ProjectionMode>,
    /// Replicates for `experiment` [default: 20].
    #[arg(long)]
    replicates: Option<usize>,
    /// Seed for every random stream [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Node count for simulated networks [default: 300].
    #[arg(long)]
    n: Option<usize>,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated center ids [default: every node].
    #[arg(long, value_delimiter = ',')]
    centers: Option<Vec<usize>>,
}

/// Flags merged over the config file.
struct Settings {
    common: Common,
}

fn lookup<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(v) => v.parse().map(Some).map_err(|e| Error::Config(format!("config key `{key}`: {e}"))),
        None => Ok(None),
    }
}

impl Settings {
    fn resolve(flags: Common, known_extra: &[&str]) -> Result<(Self, BTreeMap<String, String>)> {
        let file = match &flags.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        const KEYS: [&str; 14] = [
            "network", "covariates", "labels", "center", "scenario", "k", "eta", "iters", "projection", "replicates", "seed", "n", "out",
            "config",
        ];
        for key in file.keys() {
            if !KEYS.contains(&key.as_str()) && !known_extra.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let common = Common {
            config: flags.config.clone(),
            network: lookup(flags.network, &file, "network")?,
            covariates: lookup(flags.covariates, &file, "covariates")?,
            labels: lookup(flags.labels, &file, "labels")?,
            center: lookup(flags.center, &file, "center")?,
            scenario: lookup(flags.scenario, &file, "scenario")?,
            k: lookup(flags.k, &file, "k")?,
            eta: lookup(flags.eta, &file, "eta")?,
            iters: lookup(flags.iters, &file, "iters")?,
            projection: lookup(flags.projection, &file, "projection")?,
            replicates: lookup(flags.replicates, &file, "replicates")?,
            seed: lookup(flags.seed, &file, "seed")?,
            n: lookup(flags.n, &file, "n")?,
            out: lookup(flags.out, &file, "out")?,
        };
        Ok((Settings { common }, file))
    }

    fn k(&self) -> usize {
        self.common.k.unwrap_or(if self.common.network.is_some() { 2 } else { 3 })
    }

    fn solver(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            eta: self.common.eta.unwrap_or(d.eta),
            iterations: self.common.iters.unwrap_or(d.iterations),
            projection: self.common.projection.unwrap_or(d.projection),
            ..d
        }
    }

    fn seed(&self) -> u64 {
        self.common.seed.unwrap_or(0)
    }

    fn out(&self) -> PathBuf {
        self.common.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn n(&self) -> usize {
        self.common.n.unwrap_or(300)
    }

    fn network(&self) -> Result<&Path> {
        self.common.network.as_deref().ok_or_else(|| Error::Config("--network is required".into()))
    }
}

/// A loaded network with its file id offset.
struct Loaded {
    adjacency: egolsm::AdjacencyMatrix,
    x: DMatrix<f64>,
    offset: usize,
    labels: Option<Vec<String>>,
}

fn load(s: &Settings) -> Result<Loaded> {
    let edges = read_edge_list(s.network()?, IdBase::Auto, None)?;
    let n = edges.adjacency.n();
    info!("loaded {n} nodes, {} edges", edges.adjacency.edge_count());
    let x = match &s.common.covariates {
        Some(p) => read_covariates(p, n, CovariateFormat::Auto)?,
        None => DMatrix::zeros(n, n),
    };
    let labels = match &s.common.labels {
        Some(p) => Some(read_labels(p, n, edges.offset)?),
        None => None,
    };
    Ok(Loaded { adjacency: edges.adjacency, x, offset: edges.offset, labels })
}

fn to_index(id: usize, offset: usize, n: usize) -> Result<usize> {
    if id < offset || id - offset >= n {
        return Err(Error::NodeIndex { index: id, n });
    }
    Ok(id - offset)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn simulate(s: &Settings) -> Result<()> {
    let (n, k, seed) = (s.n(), s.k(), s.seed());
    let rep = RngSpec::new(seed, 0);
    let truth = gen_simulation1(&MixtureParams::new(n, k), &mut rep.child(streams::TRUTH).rng())?;
    let a = sample_adjacency(&truth.theta, &mut rep.child(streams::ADJACENCY).rng())?;
    let out = s.out();
    create_dir(&out)?;
    let edges_path = out.join("edges.txt");
    let mut text = String::from("# simulated network, 0-based ids\n");
    for (i, j) in a.edges() {
        text.push_str(&format!("{i} {j}\n"));
    }
    std::fs::write(&edges_path, text).map_err(|e| Error::io(&edges_path, e))?;
    let cov_path = out.join("covariates.csv");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&cov_path).map_err(|e| csv_err(&cov_path, e))?;
    for i in 0..n {
        w.write_record((0..n).map(|j| truth.model.x[(i, j)].to_string())).map_err(|e| csv_err(&cov_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&cov_path, e))?;
    let labels: Vec<String> = truth.labels.as_ref().map_or_else(Vec::new, |l| l.iter().map(|c| c.to_string()).collect());
    let labels_path = out.join("labels.txt");
    let text: String = labels.iter().enumerate().map(|(i, l)| format!("{i} {l}\n")).collect();
    std::fs::write(&labels_path, text).map_err(|e| Error::io(&labels_path, e))?;
    emit_positions(&truth.model.params(), Some(&labels), 0, &out.join("truth_positions.csv"))?;
    #[derive(Serialize)]
    struct SimManifest {
        tool: &'static str,
        version: &'static str,
        generator: MixtureParams,
        seed: u64,
        edges: usize,
        files: [&'static str; 4],
    }
    write_json(
        &out.join(MANIFEST_FILE),
        &SimManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            generator: MixtureParams::new(n, k),
            seed,
            edges: a.edge_count(),
            files: ["edges.txt", "covariates.csv", "labels.txt", "truth_positions.csv"],
        },
    )?;
    println!("wrote {n}-node network with {} edges to {}", a.edge_count(), out.display());
    Ok(())
}

fn fit_cmd(s: &Settings) -> Result<()> {
    let net = load(s)?;
    let n = net.adjacency.n();
    let center = to_index(s.common.center.unwrap_or(net.offset), net.offset, n)?;
    let scenario = s.common.scenario.unwrap_or(Scenario::Imbalanced);
    let rep = RngSpec::new(s.seed(), 0);
    let a = apply_scenario(&net.adjacency, center, scenario, &mut rep.child(streams::SCENARIO).rng())?;
    let view = PartialView::build(&a, center)?;
    let k = s.k();
    let solver = s.solver();
    let (_, result) = estimate(&view, &net.x, &InitConfig::new(k), &solver, None)?;
    let out = s.out();
    create_dir(&out)?;
    emit_positions(&result.params, net.labels.as_deref(), net.offset, &out.join("positions.csv"))?;
    #[derive(Serialize)]
    struct TraceRow {
        iteration: usize,
        objective: f64,
    }
    let trace: Vec<TraceRow> =
        result.objective_trace.iter().enumerate().map(|(iteration, &objective)| TraceRow { iteration, objective }).collect();
    write_rows(&out.join("trace.csv"), &trace)?;
    #[derive(Serialize)]
    struct FitManifest {
        tool: &'static str,
        version: &'static str,
        network: PathBuf,
        center: usize,
        scenario: Scenario,
        k: usize,
        seed: u64,
        solver: SolverConfig,
        n: usize,
        n_s: usize,
        r_s: f64,
        iterations_run: usize,
        final_objective: f64,
        beta_hat: f64,
        step_sizes: egolsm::StepSizes,
    }
    write_json(
        &out.join(MANIFEST_FILE),
        &FitManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            network: s.network()?.to_path_buf(),
            center: center + net.offset,
            scenario,
            k,
            seed: s.seed(),
            solver,
            n,
            n_s: view.n_s(),
            r_s: view.r_s(),
            iterations_run: result.iterations_run,
            final_objective: result.final_objective(),
            beta_hat: result.params.beta,
            step_sizes: result.step_sizes,
        },
    )?;
    println!(
        "center {}: |S| = {}, objective {:.4} -> {:.4}, beta_hat = {:.4}; wrote {}",
        center + net.offset,
        view.n_s(),
        result.objective_trace[0],
        result.final_objective(),
        result.params.beta,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CorrelationRow {
    attribute: &'static str,
    pearson: Option<f64>,
    spearman: Option<f64>,
}

fn analyze(s: &Settings, centers: Option<Vec<usize>>) -> Result<()> {
    let net = load(s)?;
    let n = net.adjacency.n();
    let centers: Vec<usize> = match centers {
        Some(c) => c.into_iter().map(|id| to_index(id, net.offset, n)).collect::<Result<_>>()?,
        None => (0..n).collect(),
    };
    let truth = net.labels.as_ref().map(|l| encode_labels(l));
    let study = center_study(
        &net.adjacency,
        &net.x,
        truth.as_deref(),
        &centers,
        &InitConfig::new(s.k()),
        &s.solver(),
        s.seed(),
        DEFAULT_RESTARTS,
    )?;
    let full = study.full_fit;
    let rows: Vec<CenterRow> = study.rows.into_iter().map(|r| CenterRow { node: r.node + net.offset, ..r }).collect();
    let out = s.out();
    create_dir(&out)?;
    write_rows(&out.join("centers.csv"), &rows)?;
    emit_positions(&full.params, net.labels.as_deref(), net.offset, &out.join("positions.csv"))?;
    if rows.len() >= 3 && rows.iter().all(|r| r.accuracy.is_some()) {
        let acc: Vec<f64> = rows.iter().map(|r| r.accuracy.unwrap_or(f64::NAN)).collect();
        let attrs: [(&'static str, Vec<f64>); 6] = [
            ("degree", rows.iter().map(|r| r.degree as f64).collect()),
            ("fraction_observed", rows.iter().map(|r| r.fraction_observed).collect()),
            ("betweenness", rows.iter().map(|r| r.betweenness).collect()),
            ("closeness", rows.iter().map(|r| r.closeness).collect()),
            ("eigenvector", rows.iter().map(|r| r.eigenvector).collect()),
            ("imbalance", rows.iter().map(|r| r.imbalance).collect()),
        ];
        let corr = attrs
            .iter()
            .map(|(name, v)| correlation_table(v, &acc).map(|c| CorrelationRow { attribute: name, pearson: c.pearson, spearman: c.spearman }))
            .collect::<Result<Vec<_>>>()?;
        write_rows(&out.join("correlations.csv"), &corr)?;
    }
    println!("node,degree,fraction_observed,betweenness,closeness,eigenvector,imbalance,accuracy");
    for r in &rows {
        println!(
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
            r.node,
            r.degree,
            r.fraction_observed,
            r.betweenness,
            r.closeness,
            r.eigenvector,
            r.imbalance,
            r.accuracy.map_or(String::new(), |a| format!("{a:.3}"))
        );
    }
    Ok(())
}

fn experiment(s: &Settings) -> Result<bool> {
    let k = s.k();
    let network = match &s.common.network {
        Some(path) => NetworkSpec::EdgeList { path: path.clone(), covariates: s.common.covariates.clone(), labels: s.common.labels.clone() },
        None => {
            let d = MixtureParams::new(s.n(), k);
            NetworkSpec::Simulation1 { n: d.n, latent_variance: d.latent_variance, beta: d.beta }
        }
    };
    let center = match (&network, s.common.center) {
        (NetworkSpec::EdgeList { path, .. }, Some(id)) => {
            let e = read_edge_list(path, IdBase::Auto, None)?;
            to_index(id, e.offset, e.adjacency.n())?
        }
        (_, Some(id)) => id,
        (_, None) => 0,
    };
    let config = ExperimentConfig {
        network,
        center,
        scenarios: s.common.scenario.map_or_else(|| Scenario::ALL.to_vec(), |sc| vec![sc]),
        k,
        solver: s.solver(),
        init: InitConfig::new(k),
        replicates: s.common.replicates.unwrap_or(20),
        seed: s.seed(),
        track_truth: false,
        kmeans_restarts: DEFAULT_RESTARTS,
    };
    let outcome = run_experiment(&config)?;
    let out = s.out();
    write_outcome(&config, &outcome, &out)?;
    for &sc in &config.scenarios {
        let errs: Vec<f64> = outcome.scenario_rows(sc).filter_map(|r| r.relative_error).collect();
        if !errs.is_empty() {
            println!("{sc:>10}: mean relative error {:.4} over {} replicates", mean(&errs), errs.len());
        }
    }
    println!("wrote {} and {} to {}", ROWS_FILE, MANIFEST_FILE, out.display());
    let failures = outcome.failures();
    if failures > 0 {
        warn!("{failures} replicate(s) failed");
    }
    Ok(failures == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        match cli.command {
            Command::Simulate(c) => simulate(&Settings::resolve(c, &[])?.0).map(|_| true),
            Command::Fit(c) => fit_cmd(&Settings::resolve(c, &[])?.0).map(|_| true),
            Command::Analyze(a) => {
                let (settings, file) = Settings::resolve(a.common, &["centers"])?;
                let centers = match a.centers {
                    Some(c) => Some(c),
                    None => file
                        .get("centers")
                        .map(|v| v.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| Error::Config(format!("centers: {e}")))).collect())
                        .transpose()?,
                };
                analyze(&settings, centers).map(|_| true)
            }
            Command::Experiment(c) => experiment(&Settings::resolve(c, &[])?.0),
        }
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

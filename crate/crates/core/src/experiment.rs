//! Replicated estimation studies: generate or load a network, take the
//! partial view of a center under each scenario, fit, and score.

use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{clustering_accuracy, kmeans_cluster, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::init::{initialize, InitConfig};
use crate::io::{csv_err, encode_labels, read_covariates, read_edge_list, read_labels, write_json, CovariateFormat, IdBase};
use crate::metrics::{centering_distortion, error_metric, neighborhood_diagnostics, ErrorReport};
use crate::model::{AdjacencyMatrix, Params};
use crate::rng::RngSpec;
use crate::simgen::{apply_scenario, gen_simulation1, sample_adjacency, GroundTruth, MixtureParams, Scenario};
use crate::solver::{fit, FitResult, SolverConfig};
use crate::view::PartialView;

/// Largest `c = ‖Δ_Z‖_F / ‖𝒵*‖_op` at which the Gram error bound is checked.
pub const GRAM_BOUND_C_MAX: f64 = 1.0;

/// Constant used when monitoring `‖𝒵*𝒵*ᵀ - Z*Z*ᵀ‖²_F ≤ C·U_S²/r_S`.
pub const CENTERING_MONITOR_C: f64 = 10.0;

/// Child stream indices under a replicate's [`RngSpec`].
pub mod streams {
    pub const TRUTH: u64 = 0;
    pub const ADJACENCY: u64 = 1;
    pub const SCENARIO: u64 = 2;
    pub const KMEANS: u64 = 3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    /// Two-community Gaussian mixture latent positions.
    Simulation1 { n: usize, latent_variance: f64, beta: f64 },
    /// A fixed network read from disk. Ids in `labels` use the same base
    /// as the edge list; covariate triplets are zero-based.
    EdgeList {
        path: PathBuf,
        covariates: Option<PathBuf>,
        labels: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    /// Zero-based center node.
    pub center: usize,
    pub scenarios: Vec<Scenario>,
    pub k: usize,
    pub solver: SolverConfig,
    pub init: InitConfig,
    pub replicates: usize,
    pub seed: u64,
    /// Record the error trace against the truth at every iteration
    /// (simulated networks only).
    pub track_truth: bool,
    pub kmeans_restarts: usize,
}

impl ExperimentConfig {
    pub fn simulation1(n: usize, k: usize) -> Self {
        let defaults = MixtureParams::new(n, k);
        ExperimentConfig {
            network: NetworkSpec::Simulation1 {
                n,
                latent_variance: defaults.latent_variance,
                beta: defaults.beta,
            },
            center: 0,
            scenarios: Scenario::ALL.to_vec(),
            k,
            solver: SolverConfig::default(),
            init: InitConfig::new(k),
            replicates: 20,
            seed: 0,
            track_truth: false,
            kmeans_restarts: DEFAULT_RESTARTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.k == 0 || self.init.k != self.k {
            return Err(Error::Config(format!("k must be at least 1 and match the initializer (k = {}, init k = {})", self.k, self.init.k)));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        self.solver.validate()?;
        self.init.validate()
    }
}

/// One CSV row per (replicate, scenario). Error and diagnostic columns are
/// empty when no ground truth is available or the replicate failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub scenario: Scenario,
    pub center: usize,
    pub seed: u64,
    pub n: usize,
    pub n_s: usize,
    pub r_s: f64,
    pub status: String,
    pub iterations: Option<usize>,
    pub final_objective: Option<f64>,
    pub beta_hat: Option<f64>,
    pub relative_error: Option<f64>,
    pub relative_error_init: Option<f64>,
    pub e_t: Option<f64>,
    pub delta_g_f_sq: Option<f64>,
    pub u_s: Option<f64>,
    pub u_s_normalized: Option<f64>,
    pub gamma_s: Option<f64>,
    pub kappa_prime: Option<f64>,
    pub p_s: Option<f64>,
    pub delta_n_sq: Option<f64>,
    pub centering_distortion: Option<f64>,
    pub centering_monitor_ok: Option<bool>,
    pub gram_bound_checked: Option<usize>,
    pub gram_bound_violations: Option<usize>,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

impl ReplicateRow {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSeed {
    pub replicate: usize,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub replicate_seeds: Vec<ReplicateSeed>,
    pub rows_file: String,
    pub rows: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ReplicateRow>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    /// Successful rows of one scenario, in replicate order.
    pub fn scenario_rows(&self, scenario: Scenario) -> impl Iterator<Item = &ReplicateRow> {
        self.rows.iter().filter(move |r| r.scenario == scenario && !r.failed())
    }
}

/// A network with optional truth, covariates and node labels.
#[derive(Debug, Clone)]
pub struct Instance {
    pub adjacency: AdjacencyMatrix,
    pub x: DMatrix<f64>,
    pub truth: Option<GroundTruth>,
    pub labels: Option<Vec<usize>>,
}

/// The network of one replicate. Simulated replicates draw a fresh latent
/// configuration and adjacency from their own streams.
pub fn build_instance(network: &NetworkSpec, k: usize, rep: RngSpec) -> Result<Instance> {
    match network {
        NetworkSpec::Simulation1 { n, latent_variance, beta } => {
            let params = MixtureParams { n: *n, k, latent_variance: *latent_variance, beta: *beta };
            let truth = gen_simulation1(&params, &mut rep.child(streams::TRUTH).rng())?;
            let adjacency = sample_adjacency(&truth.theta, &mut rep.child(streams::ADJACENCY).rng())?;
            Ok(Instance {
                adjacency,
                x: truth.model.x.clone(),
                labels: truth.labels.clone(),
                truth: Some(truth),
            })
        }
        NetworkSpec::EdgeList { path, covariates, labels } => {
            let edges = read_edge_list(path, IdBase::Auto, None)?;
            let n = edges.adjacency.n();
            let x = match covariates {
                Some(p) => read_covariates(p, n, CovariateFormat::Auto)?,
                None => DMatrix::zeros(n, n),
            };
            let labels = match labels {
                Some(p) => Some(encode_labels(&read_labels(p, n, edges.offset)?)),
                None => None,
            };
            Ok(Instance { adjacency: edges.adjacency, x, truth: None, labels })
        }
    }
}

/// Initialization followed by projected gradient descent.
pub fn estimate(
    view: &PartialView,
    x: &DMatrix<f64>,
    init: &InitConfig,
    solver: &SolverConfig,
    truth: Option<&GroundTruth>,
) -> Result<(Params, FitResult)> {
    let start = initialize(view, x, init)?;
    let result = fit(view, x, start.clone(), solver, truth)?;
    Ok((start, result))
}

/// Count of traced iterations with `c ≤ c_max`, and of those violating
/// `‖Δ_G‖²_F ≤ (2 + c)² e_t`.
pub fn gram_bound_counts(trace: &[ErrorReport], c_max: f64) -> (usize, usize) {
    let checks: Vec<bool> = trace.iter().filter_map(|r| r.gram_bound_holds(c_max)).collect();
    (checks.len(), checks.iter().filter(|ok| !**ok).count())
}

fn run_one(config: &ExperimentConfig, replicate: usize, scenario: Scenario) -> ReplicateRow {
    let rep = RngSpec::new(config.seed, replicate as u64);
    let mut row = ReplicateRow {
        replicate,
        scenario,
        center: config.center,
        seed: config.seed,
        n: 0,
        n_s: 0,
        r_s: 0.0,
        status: "ok".into(),
        iterations: None,
        final_objective: None,
        beta_hat: None,
        relative_error: None,
        relative_error_init: None,
        e_t: None,
        delta_g_f_sq: None,
        u_s: None,
        u_s_normalized: None,
        gamma_s: None,
        kappa_prime: None,
        p_s: None,
        delta_n_sq: None,
        centering_distortion: None,
        centering_monitor_ok: None,
        gram_bound_checked: None,
        gram_bound_violations: None,
        accuracy: None,
        error: None,
    };
    if let Err(e) = fill_row(config, rep, scenario, &mut row) {
        warn!("replicate {replicate} ({scenario}) failed: {e}");
        row.status = "failed".into();
        row.error = Some(e.to_string());
    }
    row
}

fn fill_row(config: &ExperimentConfig, rep: RngSpec, scenario: Scenario, row: &mut ReplicateRow) -> Result<()> {
    let inst = build_instance(&config.network, config.k, rep)?;
    let adjacency = apply_scenario(&inst.adjacency, config.center, scenario, &mut rep.child(streams::SCENARIO).rng())?;
    let view = PartialView::build(&adjacency, config.center)?;
    row.n = view.n();
    row.n_s = view.n_s();
    row.r_s = view.r_s();
    let truth = inst.truth.as_ref();
    let traced = if config.track_truth { truth } else { None };
    let (start, result) = estimate(&view, &inst.x, &config.init, &config.solver, traced)?;
    row.iterations = Some(result.iterations_run);
    row.final_objective = Some(result.final_objective());
    row.beta_hat = Some(result.params.beta);
    if let Some(truth) = truth {
        let conditional = matches!(config.solver.likelihood, crate::model::Likelihood::Conditional);
        let report = error_metric(&result.params, truth, &view, conditional)?;
        row.relative_error = Some(report.relative_error_theta);
        row.relative_error_init = Some(error_metric(&start, truth, &view, conditional)?.relative_error_theta);
        row.e_t = Some(report.e_t);
        row.delta_g_f_sq = Some(report.delta_g_f_sq);
        let d = neighborhood_diagnostics(truth, &view)?;
        row.u_s = Some(d.u_s);
        row.u_s_normalized = Some(d.u_s_normalized);
        row.gamma_s = Some(d.gamma_s);
        row.kappa_prime = Some(d.kappa_prime);
        row.p_s = Some(d.p_s);
        row.delta_n_sq = Some(d.delta_n_sq);
        let distortion = centering_distortion(&truth.model.z, &view)?;
        row.centering_distortion = Some(distortion);
        row.centering_monitor_ok = Some(distortion <= CENTERING_MONITOR_C * d.u_s * d.u_s / d.r_s * (1.0 + 1e-9) + 1e-9);
    }
    if let Some(trace) = &result.truth_trace {
        let (checked, violations) = gram_bound_counts(trace, GRAM_BOUND_C_MAX);
        row.gram_bound_checked = Some(checked);
        row.gram_bound_violations = Some(violations);
    }
    if let Some(labels) = &inst.labels {
        let clusters = labels.iter().max().map_or(1, |m| m + 1);
        if clusters >= 2 && clusters <= view.n() {
            let km = kmeans_cluster(&result.params.z, clusters, config.kmeans_restarts, &mut rep.child(streams::KMEANS).rng())?;
            row.accuracy = Some(clustering_accuracy(&km.labels, labels)?);
        }
    }
    Ok(())
}

/// Runs every (replicate, scenario) pair, in parallel, and returns the rows
/// sorted by replicate then scenario order. Failures are recorded in the
/// rows rather than aborting the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let tasks: Vec<(usize, Scenario)> =
        (0..config.replicates).flat_map(|r| config.scenarios.iter().map(move |&s| (r, s))).collect();
    info!("running {} fits", tasks.len());
    let rows: Vec<ReplicateRow> = par_map(&tasks, |&(r, s)| run_one(config, r, s));
    Ok(ExperimentOutcome { rows })
}

/// One row of a per-center study on a fixed network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterRow {
    /// Zero-based node index.
    pub node: usize,
    pub degree: usize,
    pub fraction_observed: f64,
    pub betweenness: f64,
    pub closeness: f64,
    pub eigenvector: f64,
    /// Empirical imbalance of the center's view, measured with the
    /// positions estimated from the whole network.
    pub imbalance: f64,
    /// k-means accuracy of the positions estimated from the center's view.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CenterStudy {
    pub rows: Vec<CenterRow>,
    pub full_fit: FitResult,
}

/// Centralities, imbalance and (with labels) clustering accuracy for each
/// center of a fixed network.
pub fn center_study(
    a: &AdjacencyMatrix,
    x: &DMatrix<f64>,
    labels: Option<&[usize]>,
    centers: &[usize],
    init: &InitConfig,
    solver: &SolverConfig,
    seed: u64,
    restarts: usize,
) -> Result<CenterStudy> {
    let profiles = crate::analysis::centralities(a)?;
    let (_, full_fit) = estimate(&PartialView::full(a), x, init, solver, None)?;
    let groups = labels.map_or(0, |l| l.iter().max().map_or(0, |m| m + 1));
    let rows = par_map(centers, |&c| {
        let view = PartialView::build(a, c)?;
        let imbalance = crate::metrics::empirical_imbalance(&full_fit.params.z, &view)?;
        let accuracy = match labels {
            Some(truth) if groups >= 2 => {
                let (_, r) = estimate(&view, x, init, solver, None)?;
                let mut rng = RngSpec::new(seed, c as u64).child(streams::KMEANS).rng();
                let km = kmeans_cluster(&r.params.z, groups, restarts, &mut rng)?;
                Some(clustering_accuracy(&km.labels, truth)?)
            }
            _ => None,
        };
        let p = profiles.get(c).ok_or(Error::NodeIndex { index: c, n: a.n() })?;
        Ok(CenterRow {
            node: c,
            degree: p.degree,
            fraction_observed: p.fraction_observed,
            betweenness: p.betweenness,
            closeness: p.closeness,
            eigenvector: p.eigenvector,
            imbalance,
            accuracy,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(CenterStudy { rows, full_fit })
}

/// Order-preserving map, across threads with the `parallel` feature.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

pub const ROWS_FILE: &str = "replicates.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `replicates.csv` and `manifest.json` into `dir`.
pub fn write_outcome(config: &ExperimentConfig, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows_path = dir.join(ROWS_FILE);
    let mut w = csv::Writer::from_path(&rows_path).map_err(|e| csv_err(&rows_path, e))?;
    for row in &outcome.rows {
        w.serialize(row).map_err(|e| csv_err(&rows_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&rows_path, e))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        replicate_seeds: (0..config.replicates)
            .map(|r| ReplicateSeed { replicate: r, seed: config.seed, stream: r as u64 })
            .collect(),
        rows_file: ROWS_FILE.into(),
        rows: outcome.rows.len(),
        failures: outcome.failures(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            replicates: 2,
            seed: 5,
            solver: SolverConfig { iterations: 20, ..Default::default() },
            kmeans_restarts: 3,
            ..ExperimentConfig::simulation1(60, 2)
        }
    }

    #[test]
    fn rows_are_deterministic_and_ordered() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        let order: Vec<(usize, Scenario)> = a.rows.iter().map(|r| (r.replicate, r.scenario)).collect();
        assert_eq!(order.len(), 6);
        assert_eq!(order[0], (0, Scenario::Imbalanced));
        assert_eq!(order[5], (1, Scenario::Full));
        assert_eq!(a.failures(), 0);
    }

    #[test]
    fn full_scenario_observes_everything() {
        let cfg = ExperimentConfig { scenarios: vec![Scenario::Full], ..small() };
        for row in run_experiment(&cfg).unwrap().rows {
            assert_eq!(row.r_s, 1.0);
            assert!(row.accuracy.is_some());
        }
    }

    #[test]
    fn failures_are_recorded() {
        let cfg = ExperimentConfig { center: 1000, scenarios: vec![Scenario::Imbalanced], ..small() };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.failures(), 2);
        assert!(out.rows[0].error.is_some());
    }

    #[test]
    fn mismatched_k_rejected() {
        let cfg = ExperimentConfig { init: InitConfig::new(3), ..small() };
        assert!(run_experiment(&cfg).is_err());
    }
}

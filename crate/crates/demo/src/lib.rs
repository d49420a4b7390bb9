//! Browser bindings. Every export returns a JSON string for `www/main.js`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use egolsm::analysis::{clustering_accuracy, kmeans_cluster};
use egolsm::experiment::{estimate, streams};
use egolsm::init::InitConfig;
use egolsm::io::{encode_labels, parse_edge_list, parse_labels, IdBase};
use egolsm::metrics::{empirical_imbalance, error_metric, imbalance, neighborhood_diagnostics, procrustes_align, TruthReference};
use egolsm::simgen::{apply_scenario, gen_simulation1, sample_adjacency, MixtureParams};
use egolsm::{AdjacencyMatrix, Error, PartialView, Result, RngSpec, Scenario, SolverConfig};

const KARATE_EDGES: &str = include_str!("../../../data/karate.txt");
const KARATE_LABELS: &str = include_str!("../../../data/karate_labels.txt");
const K: usize = 2;
const KMEANS_RESTARTS: usize = 20;

#[derive(Serialize)]
struct Node {
    id: usize,
    x: f64,
    y: f64,
    group: usize,
    in_view: bool,
}

#[derive(Serialize)]
struct KarateFit {
    center: usize,
    n_s: usize,
    observed_pairs: usize,
    imbalance: f64,
    accuracy: f64,
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct SimulationFit {
    scenario: Scenario,
    n: usize,
    n_s: usize,
    relative_error: f64,
    relative_error_init: f64,
    u_s_normalized: f64,
    beta_hat: f64,
    truth: Vec<Node>,
    estimate: Vec<Node>,
}

#[derive(Serialize)]
struct SweepPoint {
    same_group_share: f64,
    u_s_normalized: f64,
}

fn karate() -> Result<(AdjacencyMatrix, Vec<usize>, usize)> {
    let edges = parse_edge_list(KARATE_EDGES, Path::new("karate.txt"), IdBase::Auto, None)?;
    let labels = parse_labels(KARATE_LABELS, Path::new("karate_labels.txt"), edges.adjacency.n(), edges.offset)?;
    Ok((edges.adjacency, encode_labels(&labels), edges.offset))
}

fn solver(iters: usize) -> SolverConfig {
    SolverConfig { iterations: iters.max(1), ..SolverConfig::default() }
}

/// `z_hat` rotated onto `z_ref`.
fn aligned(z_hat: &DMatrix<f64>, z_ref: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, _) = procrustes_align(z_hat, z_ref)?;
    Ok(z_hat * r.transpose())
}

fn nodes(z: &DMatrix<f64>, groups: &[usize], view: &PartialView, offset: usize) -> Vec<Node> {
    (0..z.nrows())
        .map(|i| Node {
            id: i + offset,
            x: z[(i, 0)],
            y: if z.ncols() > 1 { z[(i, 1)] } else { 0.0 },
            group: groups.get(i).copied().unwrap_or(0),
            in_view: view.contains(i),
        })
        .collect()
}

/// Fits the karate club from one member's partial view. Positions are
/// rotated onto the full-network fit so that centers are comparable.
pub fn karate_fit(center_id: usize, iters: usize) -> Result<String> {
    let (a, groups, offset) = karate()?;
    let n = a.n();
    if center_id < offset || center_id - offset >= n {
        return Err(Error::NodeIndex { index: center_id, n });
    }
    let center = center_id - offset;
    let x = DMatrix::zeros(n, n);
    let init = InitConfig::new(K);
    let solver = solver(iters);
    let (_, full) = estimate(&PartialView::full(&a), &x, &init, &solver, None)?;
    let view = PartialView::build(&a, center)?;
    let (_, fit) = estimate(&view, &x, &init, &solver, None)?;
    let mut rng = RngSpec::new(0, center as u64).child(streams::KMEANS).rng();
    let clusters = kmeans_cluster(&fit.params.z, 2, KMEANS_RESTARTS, &mut rng)?;
    let z = aligned(&fit.params.z, &full.params.z)?;
    let out = KarateFit {
        center: center_id,
        n_s: view.n_s(),
        observed_pairs: view.observed_pair_count(),
        imbalance: empirical_imbalance(&full.params.z, &view)?,
        accuracy: clustering_accuracy(&clusters.labels, &groups)?,
        nodes: nodes(&z, &groups, &view, offset),
        edges: a.edges().into_iter().map(|(i, j)| (i + offset, j + offset)).collect(),
    };
    Ok(serde_json::to_string(&out).expect("plain data serializes"))
}

/// Simulates a two-community network, rewires node 0 by `scenario` and
/// fits from its view. The estimate is rotated onto the centered truth.
pub fn simulate_fit(n: usize, scenario: &str, seed: u64, iters: usize) -> Result<String> {
    let scenario: Scenario = scenario.parse()?;
    let rep = RngSpec::new(seed, 0);
    let truth = gen_simulation1(&MixtureParams::new(n, K), &mut rep.child(streams::TRUTH).rng())?;
    let a = sample_adjacency(&truth.theta, &mut rep.child(streams::ADJACENCY).rng())?;
    let a = apply_scenario(&a, 0, scenario, &mut rep.child(streams::SCENARIO).rng())?;
    let view = PartialView::build(&a, 0)?;
    let x = &truth.model.x;
    let (start, fit) = estimate(&view, x, &InitConfig::new(K), &solver(iters), None)?;
    let reference = TruthReference::new(&truth, &view, false)?;
    let groups = truth.labels.clone().unwrap_or_default();
    let out = SimulationFit {
        scenario,
        n,
        n_s: view.n_s(),
        relative_error: error_metric(&fit.params, &truth, &view, false)?.relative_error_theta,
        relative_error_init: error_metric(&start, &truth, &view, false)?.relative_error_theta,
        u_s_normalized: neighborhood_diagnostics(&truth, &view)?.u_s_normalized,
        beta_hat: fit.params.beta,
        truth: nodes(reference.z_centered(), &groups, &view, 0),
        estimate: nodes(&aligned(&fit.params.z, reference.z_centered())?, &groups, &view, 0),
    };
    Ok(serde_json::to_string(&out).expect("plain data serializes"))
}

/// Imbalance of a size-`n_s` neighborhood of node 0 as the share of its
/// members drawn from node 0's own community grows from 0 to 1.
pub fn imbalance_sweep(n: usize, n_s: usize, seed: u64, steps: usize) -> Result<String> {
    let truth = gen_simulation1(&MixtureParams::new(n, K), &mut RngSpec::new(seed, 0).child(streams::TRUTH).rng())?;
    let half = n / 2;
    let m = n_s.clamp(1, half.saturating_sub(1).max(1));
    let gram_norm = truth.model.gram().norm();
    let empty = AdjacencyMatrix::empty(n);
    let steps = steps.max(1);
    let mut points = Vec::with_capacity(steps + 1);
    for s in 0..=steps {
        let share = s as f64 / steps as f64;
        let own = ((share * m as f64).round() as usize).min(m);
        let members: Vec<usize> = (1..=own).chain(half..half + (m - own)).collect();
        let view = PartialView::with_members(&empty, 0, &members)?;
        let (_, u) = imbalance(&truth.model.z, &view, gram_norm)?;
        points.push(SweepPoint { same_group_share: share, u_s_normalized: u });
    }
    Ok(serde_json::to_string(&points).expect("plain data serializes"))
}

fn js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = karateFit)]
pub fn karate_fit_js(center_id: usize, iters: usize) -> std::result::Result<String, JsValue> {
    js(karate_fit(center_id, iters))
}

#[wasm_bindgen(js_name = simulateFit)]
pub fn simulate_fit_js(n: usize, scenario: &str, seed: u32, iters: usize) -> std::result::Result<String, JsValue> {
    js(simulate_fit(n, scenario, seed as u64, iters))
}

#[wasm_bindgen(js_name = imbalanceSweep)]
pub fn imbalance_sweep_js(n: usize, n_s: usize, seed: u32, steps: usize) -> std::result::Result<String, JsValue> {
    js(imbalance_sweep(n, n_s, seed as u64, steps))
}

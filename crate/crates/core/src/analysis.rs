//! Community detection on estimated positions, clustering accuracy,
//! classical centralities and correlation summaries.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AdjacencyMatrix;
use crate::view::PartialView;

pub const DEFAULT_RESTARTS: usize = 50;

/// Output of [`kmeans_cluster`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

/// Lloyd's algorithm with k-means++ seeding; keeps the best of `restarts`
/// runs by within-cluster sum of squares.
pub fn kmeans_cluster<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, restarts: usize, rng: &mut R) -> Result<Clustering> {
    let n = points.nrows();
    if k < 2 {
        return Err(Error::Config(format!("k-means needs at least 2 clusters, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("cannot form {k} clusters from {n} points")));
    }
    if restarts == 0 {
        return Err(Error::Config("k-means restarts must be at least 1".into()));
    }
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts {
        let run = lloyd(points, seed_plus_plus(points, k, rng));
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols()).map(|d| (points[(i, d)] - centroids[(c, d)]).powi(2)).sum()
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(points: &DMatrix<f64>, mut centroids: DMatrix<f64>) -> Clustering {
    let (n, dim) = points.shape();
    let k = centroids.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..300 {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(points, i, &centroids, c);
                if d < best.1 {
                    best = (c, d);
                }
            }
            if *label != best.0 {
                *label = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for d in 0..dim {
                sums[(c, d)] += points[(i, d)];
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[(c, d)] = sums[(c, d)] / counts[c] as f64;
                }
            }
        }
    }
    let wcss = labels.iter().enumerate().map(|(i, &c)| sq_dist(points, i, &centroids, c)).sum();
    Clustering { labels, centroids, wcss }
}

/// Best fraction of agreeing labels over relabelings of the predicted
/// clusters. Exhaustive for up to 8 labels, Hungarian assignment beyond.
pub fn clustering_accuracy(labels: &[usize], truth: &[usize]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::dim("labels", truth.len(), labels.len()));
    }
    let n = labels.len();
    if n == 0 {
        return Ok(1.0);
    }
    let kp = labels.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let size = kp.max(kt);
    let mut agree = vec![vec![0i64; size]; size];
    for (&p, &t) in labels.iter().zip(truth) {
        agree[p][t] += 1;
    }
    let best = if size <= 8 { best_permutation(&agree) } else { best_assignment(&agree) };
    Ok(best as f64 / n as f64)
}

fn best_assignment(agree: &[Vec<i64>]) -> i64 {
    let weights = Matrix::from_rows(agree.iter().cloned()).expect("square agreement table");
    kuhn_munkres(&weights).0
}

fn best_permutation(agree: &[Vec<i64>]) -> i64 {
    fn rec(agree: &[Vec<i64>], row: usize, used: &mut [bool], acc: i64, best: &mut i64) {
        if row == agree.len() {
            *best = (*best).max(acc);
            return;
        }
        for col in 0..agree.len() {
            if !used[col] {
                used[col] = true;
                rec(agree, row + 1, used, acc + agree[row][col], best);
                used[col] = false;
            }
        }
    }
    let mut best = 0;
    rec(agree, 0, &mut vec![false; agree.len()], 0, &mut best);
    best
}

/// Per-node centralities of a network, plus the observed-edge fraction
/// when the node is used as the center of a partial view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityProfile {
    pub degree: usize,
    pub fraction_observed: f64,
    pub betweenness: f64,
    pub closeness: f64,
    pub eigenvector: f64,
    pub imbalance: Option<f64>,
}

pub fn centralities(a: &AdjacencyMatrix) -> Result<Vec<CentralityProfile>> {
    let n = a.n();
    let adj = a.adjacency_lists();
    let betweenness = betweenness(&adj);
    let closeness = closeness(&adj);
    let eigenvector = eigenvector_centrality(a);
    let total = a.edge_count();
    (0..n)
        .map(|c| {
            let fraction_observed = if total == 0 {
                0.0
            } else {
                let view = PartialView::build(a, c)?;
                let seen = a.edges().into_iter().filter(|&(i, j)| view.contains(i) || view.contains(j)).count();
                seen as f64 / total as f64
            };
            Ok(CentralityProfile {
                degree: adj[c].len(),
                fraction_observed,
                betweenness: betweenness[c],
                closeness: closeness[c],
                eigenvector: eigenvector[c],
                imbalance: None,
            })
        })
        .collect()
}

/// Brandes' algorithm on an unweighted undirected graph, normalized by the
/// number of unordered pairs of other nodes, `(n-1)(n-2)/2`.
pub fn betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut cb = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.iter_mut().for_each(|v| *v = 0.0);
        dist.iter_mut().for_each(|v| *v = -1);
        delta.iter_mut().for_each(|v| *v = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    // Each unordered pair was counted from both endpoints.
    let pairs = if n > 2 { ((n - 1) * (n - 2)) as f64 / 2.0 } else { 1.0 };
    cb.iter().map(|v| v / 2.0 / pairs).collect()
}

/// `(m - 1) / Σ_j d(i, j)` over the `m` nodes of `i`'s component; 0 for
/// isolated nodes.
pub fn closeness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut out = vec![0.0; n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for (s, slot) in out.iter_mut().enumerate() {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        let (mut reached, mut total) = (0usize, 0usize);
        while let Some(v) = queue.pop_front() {
            reached += 1;
            total += dist[v];
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if total > 0 {
            *slot = (reached - 1) as f64 / total as f64;
        }
    }
    out
}

/// Leading eigenvector of `A` with unit Euclidean norm and nonnegative
/// entries. Power iteration runs on `A + I`, which has the same
/// eigenvectors but no tie in modulus on bipartite graphs.
pub fn eigenvector_centrality(a: &AdjacencyMatrix) -> Vec<f64> {
    let n = a.n();
    if a.edge_count() == 0 {
        return vec![0.0; n];
    }
    let shifted = a.matrix() + DMatrix::<f64>::identity(n, n);
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..10_000 {
        let mut next = &shifted * &v;
        next /= next.norm();
        let change = (&next - &v).norm();
        v = next;
        if change < 1e-13 {
            break;
        }
    }
    v.iter().map(|x| x.max(0.0)).collect()
}

/// Pearson and Spearman correlations; `None` when either input has zero
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

pub fn correlation_table(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::dim("y", x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::Config(format!("correlation needs at least 3 points, got {}", x.len())));
    }
    Ok(Correlation {
        pearson: pearson(x, y),
        spearman: pearson(&mid_ranks(x), &mid_ranks(y)),
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;
    use approx::assert_relative_eq;

    #[test]
    fn kmeans_separates_one_dimensional_pairs() {
        let pts = DMatrix::from_column_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        let c = kmeans_cluster(&pts, 2, 5, &mut RngSpec::new(1, 0).rng()).unwrap();
        assert_eq!(c.labels[0], c.labels[1]);
        assert_eq!(c.labels[2], c.labels[3]);
        assert_ne!(c.labels[0], c.labels[2]);
        assert_relative_eq!(c.wcss, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn kmeans_duplicates_share_labels() {
        let pts = DMatrix::from_row_slice(5, 2, &[1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0, 1.0, 1.0]);
        let c = kmeans_cluster(&pts, 2, 3, &mut RngSpec::new(2, 0).rng()).unwrap();
        assert_eq!(c.labels[0], c.labels[1]);
        assert_eq!(c.labels[0], c.labels[4]);
        assert_eq!(c.labels[2], c.labels[3]);
    }

    #[test]
    fn kmeans_rejects_too_many_clusters() {
        let pts = DMatrix::zeros(3, 1);
        assert!(kmeans_cluster(&pts, 4, 1, &mut RngSpec::new(0, 0).rng()).is_err());
        assert!(kmeans_cluster(&pts, 1, 1, &mut RngSpec::new(0, 0).rng()).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert_eq!(clustering_accuracy(&truth, &truth).unwrap(), 1.0);
        let swapped: Vec<usize> = truth.iter().map(|t| 1 - t).collect();
        assert_eq!(clustering_accuracy(&swapped, &truth).unwrap(), 1.0);
        let three_off = [1, 1, 0, 0, 0, 1, 1, 1, 1, 0];
        assert_relative_eq!(clustering_accuracy(&three_off, &truth).unwrap(), 0.7);
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        let mut rng = RngSpec::new(9, 0).rng();
        for size in 2..=7 {
            for _ in 0..20 {
                let table: Vec<Vec<i64>> = (0..size).map(|_| (0..size).map(|_| rng.random_range(0..20)).collect()).collect();
                assert_eq!(best_assignment(&table), best_permutation(&table));
            }
        }
    }

    #[test]
    fn accuracy_with_many_clusters() {
        let truth: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let mut pred: Vec<usize> = truth.iter().map(|&t| (t * 3 + 1) % 10).collect();
        pred[0] = (pred[0] + 1) % 10;
        pred[1] = (pred[1] + 1) % 10;
        assert_relative_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.96);
    }

    #[test]
    fn star_betweenness() {
        let a = AdjacencyMatrix::from_edges(6, (1..6).map(|j| (0, j))).unwrap();
        let b = betweenness(&a.adjacency_lists());
        assert_relative_eq!(b[0], 1.0);
        assert!(b[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn path_closeness_and_betweenness() {
        let a = AdjacencyMatrix::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let c = closeness(&a.adjacency_lists());
        assert_relative_eq!(c[0], 2.0 / 3.0);
        assert_relative_eq!(c[1], 1.0);
        let b = betweenness(&a.adjacency_lists());
        assert_relative_eq!(b[1], 1.0);
    }

    #[test]
    fn closeness_within_component() {
        let a = AdjacencyMatrix::from_edges(5, [(0, 1), (1, 2), (3, 4)]).unwrap();
        let c = closeness(&a.adjacency_lists());
        assert_relative_eq!(c[3], 1.0);
        assert_relative_eq!(c[1], 1.0);
    }

    #[test]
    fn eigenvector_on_complete_graph_is_uniform() {
        let n = 5;
        let a = AdjacencyMatrix::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))).unwrap();
        for v in eigenvector_centrality(&a) {
            assert_relative_eq!(v, 1.0 / (n as f64).sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn empty_graph_gives_zeros() {
        let a = AdjacencyMatrix::empty(4);
        for p in centralities(&a).unwrap() {
            assert_eq!((p.degree, p.betweenness, p.closeness, p.eigenvector, p.fraction_observed), (0, 0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let c = correlation_table(&x, &x.map(|v| 2.0 * v + 1.0)).unwrap();
        assert_relative_eq!(c.pearson.unwrap(), 1.0);
        assert_relative_eq!(c.spearman.unwrap(), 1.0);
        let c = correlation_table(&x, &x.map(|v| v * v * v)).unwrap();
        assert_relative_eq!(c.spearman.unwrap(), 1.0);
        assert!(c.pearson.unwrap() < 1.0);
        let c = correlation_table(&x, &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert_relative_eq!(c.spearman.unwrap(), 0.6, epsilon = 1e-12);
        let c = correlation_table(&x, &[1.0; 4]).unwrap();
        assert_eq!(c.pearson, None);
        assert_eq!(c.spearman, None);
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}

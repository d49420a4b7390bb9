//! Inner-product latent space model.
//!
//! Edge log-odds take the form `Θ_ij = α_i + α_j + β·X_ij + z_i·z_j`, with
//! `α` the degree heterogeneity, `β` the covariate coefficient and the rows
//! of `Z` the latent positions. The observed-data likelihood only involves
//! unordered pairs with at least one endpoint in the neighborhood of the
//! center; see [`crate::view::PartialView`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::view::PartialView;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok((p / (1.0 - p)).ln())
    } else {
        Err(Error::Domain {
            function: "logit",
            value: p,
        })
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - σ(x)) = -log(1 + e^x)`.
pub fn log_one_minus_sigmoid(x: f64) -> f64 {
    -softplus(x)
}

/// Analysis constants bounding the off-diagonal log-odds:
/// `-M1 <= Θ_ij <= -M2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub m1: f64,
    pub m2: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { m1: 6.0, m2: 0.01 }
    }
}

impl Bounds {
    /// Whether every off-diagonal entry lies in `[-M1, -M2]` and every
    /// diagonal entry in `[-M1, M1]`.
    pub fn admits(&self, theta: &DMatrix<f64>) -> bool {
        let n = theta.nrows();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let t = theta[(i, j)];
                if i == j {
                    t.abs() <= self.m1
                } else {
                    (-self.m1..=-self.m2).contains(&t)
                }
            })
        })
    }
}

/// Symmetric binary adjacency matrix with an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    a: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(
                "adjacency",
                "square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let n = a.nrows();
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(Error::InvalidAdjacency(format!("self-loop at node {i}")));
            }
            for j in (i + 1)..n {
                let v = a[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidAdjacency(format!(
                        "entry ({i}, {j}) = {v} is not binary"
                    )));
                }
                if a[(j, i)] != v {
                    return Err(Error::InvalidAdjacency(format!(
                        "asymmetric entry ({i}, {j})"
                    )));
                }
            }
        }
        Ok(AdjacencyMatrix { a })
    }

    pub fn empty(n: usize) -> Self {
        AdjacencyMatrix {
            a: DMatrix::zeros(n, n),
        }
    }

    /// Builds a graph from undirected edges, collapsing duplicates and
    /// ignoring self-loops.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for (u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::NodeIndex { index: w, n });
                }
            }
            if u != v {
                a[(u, v)] = 1.0;
                a[(v, u)] = 1.0;
            }
        }
        Ok(AdjacencyMatrix { a })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.a[(i, j)] != 0.0
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n()).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.has_edge(i, j)).count())
            .sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Adjacency lists, one sorted list per node.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n()).map(|i| self.neighbors(i)).collect()
    }
}

/// Model parameters `(Z, α, β)`; the unit updated by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub z: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub beta: f64,
}

impl Params {
    pub fn zeros(n: usize, k: usize) -> Self {
        Params {
            z: DMatrix::zeros(n, k),
            alpha: DVector::zeros(n),
            beta: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.beta.is_finite()
            && self.alpha.iter().all(|v| v.is_finite())
            && self.z.iter().all(|v| v.is_finite())
    }

    pub fn theta(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        assemble_theta(&self.alpha, self.beta, &self.z, x)
    }
}

/// The full latent space model: parameters, covariates and bounds.
#[derive(Debug, Clone)]
pub struct LatentModel {
    pub alpha: DVector<f64>,
    pub beta: f64,
    pub z: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub bounds: Bounds,
}

impl LatentModel {
    pub fn new(params: Params, x: DMatrix<f64>) -> Result<Self> {
        check_covariates(&x, params.n())?;
        Ok(LatentModel {
            alpha: params.alpha,
            beta: params.beta,
            z: params.z,
            x,
            bounds: Bounds::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn params(&self) -> Params {
        Params {
            z: self.z.clone(),
            alpha: self.alpha.clone(),
            beta: self.beta,
        }
    }

    pub fn theta(&self) -> Result<DMatrix<f64>> {
        assemble_theta(&self.alpha, self.beta, &self.z, &self.x)
    }

    pub fn gram(&self) -> DMatrix<f64> {
        &self.z * self.z.transpose()
    }

    /// Edge probabilities `σ(Θ)`, with the diagonal set to zero.
    pub fn probabilities(&self) -> Result<DMatrix<f64>> {
        let mut p = self.theta()?.map(sigmoid);
        p.fill_diagonal(0.0);
        Ok(p)
    }

    /// True when the column sums of `Z` vanish to within `tol`.
    pub fn is_identifiable(&self, tol: f64) -> bool {
        self.z.row_sum().iter().all(|s| s.abs() <= tol)
    }
}

/// Covariates must be a symmetric `n × n` matrix with a zero diagonal.
pub fn check_covariates(x: &DMatrix<f64>, n: usize) -> Result<()> {
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::dim(
            "X",
            format!("{n}x{n}"),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    for i in 0..n {
        if x[(i, i)] != 0.0 {
            return Err(Error::Config(format!("covariate diagonal X[{i},{i}] must be zero")));
        }
        for j in (i + 1)..n {
            if x[(i, j)] != x[(j, i)] {
                return Err(Error::Config(format!("covariates asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// `Θ = α1ᵀ + 1αᵀ + βX + ZZᵀ`.
///
/// Each entry is formed as `(α_i + α_j) + βX_ij + z_i·z_j` with the terms
/// accumulated in a fixed order, so the result is bitwise symmetric
/// whenever `X` is.
pub fn assemble_theta(
    alpha: &DVector<f64>,
    beta: f64,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = alpha.len();
    if z.nrows() != n {
        return Err(Error::dim("Z", format!("{n} rows"), format!("{} rows", z.nrows())));
    }
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::dim(
            "X",
            format!("{n}x{n}"),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    let k = z.ncols();
    let mut theta = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut dot = 0.0;
            for c in 0..k {
                dot += z[(i, c)] * z[(j, c)];
            }
            let v = (alpha[i] + alpha[j]) + beta * x[(i, j)] + dot;
            theta[(i, j)] = v;
            theta[(j, i)] = v;
        }
    }
    Ok(theta)
}

/// Which pairs enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Every unordered pair with at least one endpoint in the neighborhood.
    #[default]
    Full,
    /// As `Full`, but dropping pairs that contain the center itself.
    Conditional,
}

impl Likelihood {
    pub(crate) fn includes(self, view: &PartialView, i: usize, j: usize) -> bool {
        match self {
            Likelihood::Full => true,
            Likelihood::Conditional => i != view.center() && j != view.center(),
        }
    }
}

fn check_square(theta: &DMatrix<f64>, n: usize) -> Result<()> {
    if theta.nrows() != n || theta.ncols() != n {
        return Err(Error::dim(
            "theta",
            format!("{n}x{n}"),
            format!("{}x{}", theta.nrows(), theta.ncols()),
        ));
    }
    Ok(())
}

/// Negative log-likelihood of the partial view under log-odds `theta`:
/// `-Σ [B_ij Θ_ij + log(1 - σ(Θ_ij))]` over observed unordered pairs.
pub fn neg_log_likelihood(view: &PartialView, theta: &DMatrix<f64>, kind: Likelihood) -> Result<f64> {
    check_square(theta, view.n())?;
    let b = view.b();
    let mut total = 0.0;
    view.for_each_observed_pair(|i, j| {
        if kind.includes(view, i, j) {
            let t = theta[(i, j)];
            total -= b[(i, j)] * t + log_one_minus_sigmoid(t);
        }
    });
    Ok(total)
}

/// Residual `R = B - S(P)` restricted to the likelihood's pairs, with a
/// zero diagonal. `R` is the negative gradient of the likelihood with
/// respect to each `Θ_ij`.
pub fn residual(view: &PartialView, theta: &DMatrix<f64>, kind: Likelihood) -> Result<DMatrix<f64>> {
    check_square(theta, view.n())?;
    let n = view.n();
    let b = view.b();
    let mut r = DMatrix::zeros(n, n);
    view.for_each_observed_pair(|i, j| {
        if kind.includes(view, i, j) {
            let v = b[(i, j)] - sigmoid(theta[(i, j)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    });
    Ok(r)
}

/// Gradient of [`neg_log_likelihood`] with respect to `(Z, α, β)`.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub z: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub beta: f64,
}

pub fn gradient(view: &PartialView, x: &DMatrix<f64>, params: &Params, kind: Likelihood) -> Result<Gradient> {
    let theta = params.theta(x)?;
    let r = residual(view, &theta, kind)?;
    Ok(Gradient {
        z: -(&r * &params.z),
        alpha: -r.column_sum(),
        beta: -0.5 * r.dot(x),
    })
}

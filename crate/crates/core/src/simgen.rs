//! Ground-truth generators: the two-component mixture simulation, the
//! degree-corrected block model, Bernoulli sampling and the three
//! neighborhood scenarios.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::model::{sigmoid, AdjacencyMatrix, LatentModel, Params};

/// Starred quantities of a simulation study.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub model: LatentModel,
    pub theta: DMatrix<f64>,
    /// `G* = Z*Z*ᵀ`.
    pub gram: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl GroundTruth {
    pub fn from_model(model: LatentModel, labels: Option<Vec<usize>>) -> Result<Self> {
        let theta = model.theta()?;
        let gram = model.gram();
        Ok(GroundTruth {
            model,
            theta,
            gram,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    pub fn probabilities(&self) -> DMatrix<f64> {
        let mut p = self.theta.map(sigmoid);
        p.fill_diagonal(0.0);
        p
    }
}

/// Knobs of the two-component mixture simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureParams {
    pub n: usize,
    pub k: usize,
    /// Per-coordinate variance of the latent draws around each mean.
    pub latent_variance: f64,
    pub beta: f64,
}

impl MixtureParams {
    pub fn new(n: usize, k: usize) -> Self {
        MixtureParams {
            n,
            k,
            latent_variance: 0.2,
            beta: -0.5,
        }
    }
}

/// Two-component mixture latent positions with degree heterogeneity and a
/// truncated-normal covariate.
///
/// `α*_i = -n a_i / Σ a_j` with `a ~ U(1, 3)`; cluster means have entries
/// from `U(-0.5, 0)` and `U(0, 0.5)`; rows of `U` are normal around their
/// cluster mean; `G* = n G / ‖G‖_F` with `G = J⁰UUᵀJ⁰`; `X = nV/‖V‖_F`
/// with `V_ij = min(|v_ij|, 2)`, `v ~ N(1, 1)`. The first `n/2` nodes form
/// community 0.
pub fn gen_simulation1<R: Rng + ?Sized>(params: &MixtureParams, rng: &mut R) -> Result<GroundTruth> {
    let MixtureParams { n, k, latent_variance, beta } = *params;
    if n < 2 || n % 2 != 0 {
        return Err(Error::Config(format!("mixture simulation needs an even n >= 2, got {n}")));
    }
    if k == 0 {
        return Err(Error::Config("latent dimension k must be at least 1".into()));
    }
    if !(latent_variance > 0.0) {
        return Err(Error::Config("latent variance must be positive".into()));
    }

    let a_dist = Uniform::new(1.0, 3.0).expect("valid range");
    let a: Vec<f64> = (0..n).map(|_| a_dist.sample(rng)).collect();
    let a_sum: f64 = a.iter().sum();
    let alpha = DVector::from_iterator(n, a.iter().map(|ai| -(n as f64) * ai / a_sum));

    let lower = Uniform::new(-0.5, 0.0).expect("valid range");
    let upper = Uniform::new(0.0, 0.5).expect("valid range");
    let mu1: Vec<f64> = (0..k).map(|_| lower.sample(rng)).collect();
    let mu2: Vec<f64> = (0..k).map(|_| upper.sample(rng)).collect();
    let noise = Normal::new(0.0, latent_variance.sqrt()).expect("positive sd");
    let half = n / 2;
    let mut u = DMatrix::zeros(n, k);
    for i in 0..n {
        let mu = if i < half { &mu1 } else { &mu2 };
        for c in 0..k {
            u[(i, c)] = mu[c] + noise.sample(rng);
        }
    }
    let uc = center_columns(&u);
    let g = &uc * uc.transpose();
    let g_star = &g * (n as f64 / g.norm());
    let (z, _) = psd_factor(&g_star, k, 0.0);

    let v_dist = Normal::new(1.0, 1.0).expect("positive sd");
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let draw: f64 = v_dist.sample(rng);
            let val = draw.abs().min(2.0);
            v[(i, j)] = val;
            v[(j, i)] = val;
        }
    }
    let x = &v * (n as f64 / v.norm());

    let labels = (0..n).map(|i| usize::from(i >= half)).collect();
    let model = LatentModel::new(Params { z, alpha, beta }, x)?;
    GroundTruth::from_model(model, Some(labels))
}

/// `J⁰M`: subtracts column means.
pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Degree-corrected stochastic block model with latent part `J⁰UHUᵀJ⁰`.
#[derive(Debug, Clone)]
pub struct DcSbmSpec {
    /// Community sizes; nodes are assigned to blocks contiguously.
    pub sizes: Vec<usize>,
    /// `K × K` symmetric positive definite block matrix.
    pub h: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub beta: f64,
    pub x: DMatrix<f64>,
}

impl DcSbmSpec {
    /// Equal blocks, constant `α`, no covariates.
    pub fn equal_blocks(n: usize, blocks: usize, h: DMatrix<f64>, alpha: f64) -> Self {
        let base = n / blocks;
        let mut sizes = vec![base; blocks];
        for s in sizes.iter_mut().take(n - base * blocks) {
            *s += 1;
        }
        DcSbmSpec {
            sizes,
            h,
            alpha: DVector::from_element(n, alpha),
            beta: 0.0,
            x: DMatrix::zeros(n, n),
        }
    }
}

/// Builds the block-model ground truth; `Z*` has `K - 1` columns.
pub fn gen_dcsbm(spec: &DcSbmSpec) -> Result<GroundTruth> {
    let blocks = spec.sizes.len();
    let n: usize = spec.sizes.iter().sum();
    if blocks == 0 || n == 0 {
        return Err(Error::Config("block model needs at least one non-empty block".into()));
    }
    if spec.h.nrows() != blocks || spec.h.ncols() != blocks {
        return Err(Error::dim("H", format!("{blocks}x{blocks}"), format!("{}x{}", spec.h.nrows(), spec.h.ncols())));
    }
    if spec.h != spec.h.transpose() || spec.h.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("H"));
    }
    if spec.alpha.len() != n {
        return Err(Error::dim("alpha", n, spec.alpha.len()));
    }
    let mut labels = Vec::with_capacity(n);
    for (b, &size) in spec.sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(b, size));
    }
    let u = DMatrix::from_fn(n, blocks, |i, b| if labels[i] == b { 1.0 } else { 0.0 });
    let uc = center_columns(&u);
    let latent = &uc * &spec.h * uc.transpose();
    let (z, _) = psd_factor(&latent, blocks - 1, 0.0);
    let model = LatentModel::new(
        Params {
            z,
            alpha: spec.alpha.clone(),
            beta: spec.beta,
        },
        spec.x.clone(),
    )?;
    GroundTruth::from_model(model, Some(labels))
}

/// Independent `Bernoulli(σ(Θ_ij))` edges for `i < j`, mirrored.
pub fn sample_adjacency<R: Rng + ?Sized>(theta: &DMatrix<f64>, rng: &mut R) -> Result<AdjacencyMatrix> {
    if !theta.is_square() {
        return Err(Error::dim("theta", "square", format!("{}x{}", theta.nrows(), theta.ncols())));
    }
    let n = theta.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = sigmoid(theta[(i, j)]);
            if rng.random::<f64>() < p {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    AdjacencyMatrix::new(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// The center's own neighbors.
    Imbalanced,
    /// The center's edges redrawn uniformly at its observed degree rate.
    Balanced,
    /// The center connected to everyone.
    Full,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Imbalanced, Scenario::Balanced, Scenario::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Imbalanced => "imbalanced",
            Scenario::Balanced => "balanced",
            Scenario::Full => "full",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imbalanced" => Ok(Scenario::Imbalanced),
            "balanced" => Ok(Scenario::Balanced),
            "full" => Ok(Scenario::Full),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected imbalanced, balanced or full)"
            ))),
        }
    }
}

/// Rewrites the center's row and column according to `scenario`.
pub fn apply_scenario<R: Rng + ?Sized>(
    a: &AdjacencyMatrix,
    center: usize,
    scenario: Scenario,
    rng: &mut R,
) -> Result<AdjacencyMatrix> {
    let n = a.n();
    if center >= n {
        return Err(Error::NodeIndex { index: center, n });
    }
    let mut m = a.matrix().clone();
    match scenario {
        Scenario::Imbalanced => return Ok(a.clone()),
        Scenario::Balanced => {
            let p_hat = a.degree(center) as f64 / n as f64;
            for j in 0..n {
                if j == center {
                    continue;
                }
                let edge = if rng.random::<f64>() < p_hat { 1.0 } else { 0.0 };
                m[(center, j)] = edge;
                m[(j, center)] = edge;
            }
        }
        Scenario::Full => {
            for j in 0..n {
                if j != center {
                    m[(center, j)] = 1.0;
                    m[(j, center)] = 1.0;
                }
            }
        }
    }
    AdjacencyMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;
    use crate::view::PartialView;
    use approx::assert_relative_eq;

    #[test]
    fn mixture_normalizations() {
        let truth = gen_simulation1(&MixtureParams::new(200, 3), &mut RngSpec::new(1, 0).rng()).unwrap();
        let n = 200.0;
        assert_relative_eq!(truth.gram.norm() / n, 1.0, epsilon = 1e-10);
        assert_relative_eq!(truth.model.x.norm() / n, 1.0, epsilon = 1e-12);
        assert_relative_eq!(truth.model.alpha.sum(), -n, epsilon = 1e-9);
        for s in truth.model.z.row_sum().iter() {
            assert!(s.abs() < 1e-8, "column sum {s}");
        }
        let x = &truth.model.x;
        assert!((0..200).all(|i| x[(i, i)] == 0.0));
        assert_eq!(x, &x.transpose());
        assert_eq!(truth.model.beta, -0.5);
        assert!(truth.model.alpha.iter().all(|&a| (-1.5 - 1e-9..=-0.5 + 1e-9).contains(&a)));
    }

    #[test]
    fn mixture_rejects_odd_n() {
        assert!(gen_simulation1(&MixtureParams::new(11, 2), &mut RngSpec::new(0, 0).rng()).is_err());
    }

    #[test]
    fn single_block_has_no_latent_part() {
        let spec = DcSbmSpec::equal_blocks(10, 1, DMatrix::identity(1, 1), -1.0);
        let truth = gen_dcsbm(&spec).unwrap();
        assert_eq!(truth.k(), 0);
        assert!(truth.gram.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn two_equal_blocks_identity_h() {
        let spec = DcSbmSpec::equal_blocks(8, 2, DMatrix::identity(2, 2), -1.0);
        let truth = gen_dcsbm(&spec).unwrap();
        assert_eq!(truth.k(), 1);
        let z = &truth.model.z;
        let v = z[(0, 0)];
        assert_relative_eq!(v * v, 0.5, epsilon = 1e-12);
        for i in 0..8 {
            let expect = if i < 4 { v } else { -v };
            assert_relative_eq!(z[(i, 0)], expect, epsilon = 1e-12);
        }
        assert!(truth.gram[(0, 1)] > 0.0 && truth.gram[(0, 7)] < 0.0);
    }

    #[test]
    fn generic_h_gives_rank_k_minus_one() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let mut spec = DcSbmSpec::equal_blocks(30, 3, h, -1.0);
        spec.sizes = vec![8, 10, 12];
        let truth = gen_dcsbm(&spec).unwrap();
        assert_eq!(truth.k(), 2);
        let sv = crate::linalg::singular_values(&truth.model.z);
        assert!(sv[1] > 1e-6);
    }

    #[test]
    fn non_pd_h_is_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let spec = DcSbmSpec::equal_blocks(6, 2, h, -1.0);
        assert!(matches!(gen_dcsbm(&spec), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn bernoulli_density() {
        let n = 2000;
        let p = 0.3;
        let theta = DMatrix::from_element(n, n, (p / (1.0 - p) as f64).ln());
        let a = sample_adjacency(&theta, &mut RngSpec::new(5, 1).rng()).unwrap();
        let density = a.edge_count() as f64 / (n * (n - 1) / 2) as f64;
        assert!((density - p).abs() < 0.01, "density {density}");
    }

    #[test]
    fn impossible_edges_and_determinism() {
        let theta = DMatrix::from_element(20, 20, f64::NEG_INFINITY);
        let a = sample_adjacency(&theta, &mut RngSpec::new(0, 0).rng()).unwrap();
        assert_eq!(a.edge_count(), 0);
        let theta = DMatrix::from_element(30, 30, -1.0);
        let a1 = sample_adjacency(&theta, &mut RngSpec::new(9, 2).rng()).unwrap();
        let a2 = sample_adjacency(&theta, &mut RngSpec::new(9, 2).rng()).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn scenarios() {
        let theta = DMatrix::from_element(400, 400, -1.5);
        let a = sample_adjacency(&theta, &mut RngSpec::new(3, 0).rng()).unwrap();
        let mut rng = RngSpec::new(3, 1).rng();
        assert_eq!(apply_scenario(&a, 0, Scenario::Imbalanced, &mut rng).unwrap(), a);

        let full = apply_scenario(&a, 0, Scenario::Full, &mut rng).unwrap();
        let view = PartialView::build(&full, 0).unwrap();
        assert!(view.is_full());
        assert_eq!(view.b(), full.matrix());

        let deg = a.degree(0) as f64;
        let mut total = 0.0;
        let reps = 50;
        for _ in 0..reps {
            total += apply_scenario(&a, 0, Scenario::Balanced, &mut rng).unwrap().degree(0) as f64;
        }
        let mean = total / reps as f64;
        // Binomial(n - 1, deg / n) mean, sd of the average ≈ sqrt(deg)/sqrt(reps).
        let expect = 399.0 * deg / 400.0;
        assert!((mean - expect).abs() < 4.0 * (deg / reps as f64).sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("Balanced".parse::<Scenario>().unwrap(), Scenario::Balanced);
        assert!("other".parse::<Scenario>().is_err());
    }
}

//! Initial estimates `(Z⁰, α⁰, β⁰)` via universal singular value
//! thresholding.
//!
//! 1. Threshold the spectrum of `B` at `τ = c·√p̂·(√n + √n_S)/2`, with `p̂`
//!    the edge density over observed pairs (this is `c·√(n p̂)` on a full
//!    view), and clip the reconstruction into `[ε, 1 - ε]`. The hidden block of `B` starts at `p̂` and is replaced
//!    by the reconstruction for a few rounds.
//! 2. Take `Θ̂ = logit(P̂)` on observed pairs, fit `α` and `β` by least
//!    squares, and factor the group-centered residual into its top-`k`
//!    positive part. Unobserved entries of the residual (the hidden block
//!    and the diagonal) start at zero and are re-imputed from the current
//!    low-rank fit for a few rounds.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_factor, sorted_eigen};
use crate::model::{logit, Params};
use crate::view::PartialView;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub k: usize,
    /// Multiplier `c` in `τ = c·√p̂·(√n + √n_S)/2`.
    pub threshold_const: f64,
    /// Probabilities are clipped into `[ε, 1 - ε]` before the logit.
    pub clip_eps: f64,
    /// Rounds of re-imputing the hidden block of `B` from the thresholded
    /// reconstruction.
    pub impute_rounds: usize,
    /// Maximum imputation rounds for the residual factorization.
    pub refine_rounds: usize,
    pub refine_tol: f64,
}

impl InitConfig {
    pub fn new(k: usize) -> Self {
        InitConfig {
            k,
            threshold_const: 2.01,
            clip_eps: 1e-3,
            impute_rounds: 10,
            refine_rounds: 20,
            refine_tol: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("latent dimension k must be at least 1".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::Config(format!("clip epsilon must lie in (0, 0.5), got {}", self.clip_eps)));
        }
        if !(self.threshold_const > 0.0) {
            return Err(Error::Config("threshold constant must be positive".into()));
        }
        Ok(())
    }
}

/// Edge density over observed off-diagonal pairs.
pub fn observed_density(b: &DMatrix<f64>, view: &PartialView) -> f64 {
    let mut edges = 0.0;
    let mut pairs = 0usize;
    view.for_each_observed_pair(|i, j| {
        edges += b[(i, j)];
        pairs += 1;
    });
    if pairs == 0 {
        0.0
    } else {
        edges / pairs as f64
    }
}

/// Thresholded spectral estimate of the edge probabilities. Only entries on
/// observed pairs are meaningful.
pub fn usvt_probability_estimate(b: &DMatrix<f64>, view: &PartialView, config: &InitConfig) -> Result<DMatrix<f64>> {
    config.validate()?;
    let n = view.n();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::dim("B", format!("{n}x{n}"), format!("{}x{}", b.nrows(), b.ncols())));
    }
    let p_hat = observed_density(b, view);
    let tau = config.threshold_const * p_hat.sqrt() * effective_sqrt_dim(view);
    let (lo, hi) = (config.clip_eps, 1.0 - config.clip_eps);
    let outsiders = view.outsiders();
    let mut filled = b.clone();
    for &i in outsiders {
        for &j in outsiders {
            if i != j {
                filled[(i, j)] = p_hat;
            }
        }
    }
    let rounds = if outsiders.len() > 1 { config.impute_rounds.max(1) } else { 1 };
    let mut recon = DMatrix::zeros(n, n);
    for _ in 0..rounds {
        recon = threshold_spectrum(&filled, tau).map(|p| p.clamp(0.0, 1.0));
        let mut change = 0.0;
        let mut scale = 0.0;
        for &i in outsiders {
            for &j in outsiders {
                if i != j {
                    let v = recon[(i, j)];
                    change += (v - filled[(i, j)]).powi(2);
                    scale += v * v;
                    filled[(i, j)] = v;
                }
            }
        }
        if change <= config.refine_tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(recon.map(|p| p.clamp(lo, hi)))
}

/// `(√n + √n_S) / 2`: the noise operator norm of a symmetric Bernoulli
/// matrix observed only on the rows and columns of `S` scales with this
/// instead of `√n`. Equals `√n` on a full view.
pub fn effective_sqrt_dim(view: &PartialView) -> f64 {
    ((view.n() as f64).sqrt() + (view.n_s() as f64).sqrt()) / 2.0
}

/// Keeps the eigen-components of a symmetric matrix with `|λ| ≥ τ`.
fn threshold_spectrum(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let (values, vectors) = sorted_eigen(m);
    let mut recon = DMatrix::zeros(n, n);
    for (c, &lambda) in values.iter().enumerate() {
        if lambda.abs() >= tau && lambda != 0.0 {
            let u = vectors.column(c);
            recon.ger(lambda, &u, &u, 1.0);
        }
    }
    recon
}

/// Outcome of [`decompose_initial`].
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub params: Params,
    /// Number of latent columns backed by a positive eigenvalue.
    pub positive_rank: usize,
    pub rounds: usize,
}

/// Splits `logit(P̂)` into `α1ᵀ + 1αᵀ + βX + ZZᵀ` on the observed pairs.
pub fn decompose_initial(
    p_hat: &DMatrix<f64>,
    x: &DMatrix<f64>,
    view: &PartialView,
    config: &InitConfig,
) -> Result<Decomposition> {
    config.validate()?;
    let n = view.n();
    let k = config.k;
    if p_hat.nrows() != n || p_hat.ncols() != n {
        return Err(Error::dim("P_hat", format!("{n}x{n}"), format!("{}x{}", p_hat.nrows(), p_hat.ncols())));
    }
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::dim("X", format!("{n}x{n}"), format!("{}x{}", x.nrows(), x.ncols())));
    }

    let (lo, hi) = (config.clip_eps, 1.0 - config.clip_eps);
    let mut y = DMatrix::zeros(n, n);
    let mut bad = None;
    view.for_each_observed_pair(|i, j| match logit(p_hat[(i, j)].clamp(lo, hi)) {
        Ok(t) => {
            y[(i, j)] = t;
            y[(j, i)] = t;
        }
        Err(e) => bad = Some(e),
    });
    if let Some(e) = bad {
        return Err(e);
    }

    let use_beta = {
        let mut any = false;
        view.for_each_observed_pair(|i, j| any |= x[(i, j)] != 0.0);
        any
    };

    // Eigenvalues this small relative to the logits are rounding noise.
    let mut y_max: f64 = 0.0;
    view.for_each_observed_pair(|i, j| y_max = y_max.max(y[(i, j)].abs()));
    let floor = 1e-10 * y_max * n as f64;

    let mut gram = DMatrix::zeros(n, n);
    let mut z = DMatrix::zeros(n, k);
    let mut positive_rank = 0;
    let mut rounds = 0;
    let mut fit = fit_additive(&y, &gram, x, view, use_beta);
    for round in 0..config.refine_rounds.max(1) {
        rounds = round + 1;
        let (alpha, beta) = &fit;
        // Residual on observed pairs; unobserved entries imputed from `gram`.
        let mut resid = gram.clone();
        view.for_each_observed_pair(|i, j| {
            let v = y[(i, j)] - alpha[i] - alpha[j] - beta * x[(i, j)];
            resid[(i, j)] = v;
            resid[(j, i)] = v;
        });
        let centered = view.center_rows(&view.center_rows(&resid)?.transpose())?;
        let centered = (&centered + centered.transpose()) * 0.5;
        let (z_new, kept) = psd_factor(&centered, k, floor);
        let gram_new = &z_new * z_new.transpose();
        let change = (&gram_new - &gram).norm() / gram_new.norm().max(1.0);
        z = z_new;
        gram = gram_new;
        positive_rank = kept;
        fit = fit_additive(&y, &gram, x, view, use_beta);
        if change < config.refine_tol {
            break;
        }
    }
    if positive_rank < k {
        warn!("initial residual has only {positive_rank} positive eigenvalues; padding Z0 with {} zero columns", k - positive_rank);
    }
    let (alpha, beta) = fit;
    Ok(Decomposition {
        params: Params {
            z: view.center_rows(&z)?,
            alpha,
            beta,
        },
        positive_rank,
        rounds,
    })
}

/// Least-squares `(α, β)` for `y - G ≈ α_i + α_j + β X_ij` over observed
/// pairs, by Jacobi-preconditioned conjugate gradients on the normal
/// equations. Started from zero, CG returns the minimum-norm solution when
/// the design is rank deficient.
fn fit_additive(
    y: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    x: &DMatrix<f64>,
    view: &PartialView,
    use_beta: bool,
) -> (DVector<f64>, f64) {
    let n = view.n();
    let dim = n + 1;
    let apply = |w: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(dim);
        view.for_each_observed_pair(|i, j| {
            let xb = if use_beta { x[(i, j)] } else { 0.0 };
            let r = w[i] + w[j] + w[n] * xb;
            out[i] += r;
            out[j] += r;
            out[n] += r * xb;
        });
        out
    };
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut diag = DVector::<f64>::zeros(dim);
    view.for_each_observed_pair(|i, j| {
        let xb = if use_beta { x[(i, j)] } else { 0.0 };
        let t = y[(i, j)] - gram[(i, j)];
        rhs[i] += t;
        rhs[j] += t;
        rhs[n] += t * xb;
        diag[i] += 1.0;
        diag[j] += 1.0;
        diag[n] += xb * xb;
    });
    let precond = diag.map(|d| if d > 0.0 { 1.0 / d } else { 0.0 });

    let mut w = DVector::zeros(dim);
    let mut r = rhs.clone();
    let mut zr = r.component_mul(&precond);
    let mut p = zr.clone();
    let mut rz = r.dot(&zr);
    let rhs_norm = rhs.norm().max(f64::MIN_POSITIVE);
    for _ in 0..(4 * dim).max(50) {
        if r.norm() <= 1e-13 * rhs_norm {
            break;
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        w.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        zr = r.component_mul(&precond);
        let rz_new = r.dot(&zr);
        p = &zr + &p * (rz_new / rz);
        rz = rz_new;
    }
    let beta = if use_beta { w[n] } else { 0.0 };
    (w.rows(0, n).into_owned(), beta)
}

/// USVT estimate followed by the decomposition.
pub fn initialize(view: &PartialView, x: &DMatrix<f64>, config: &InitConfig) -> Result<Params> {
    let p_hat = usvt_probability_estimate(view.b(), view, config)?;
    Ok(decompose_initial(&p_hat, x, view, config)?.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_theta, sigmoid, AdjacencyMatrix};
    use approx::assert_relative_eq;

    #[test]
    fn zero_matrix_gives_clip_floor() {
        let a = AdjacencyMatrix::from_edges(6, [(1, 2), (3, 4)]).unwrap();
        let view = PartialView::build(&a, 0).unwrap();
        let cfg = InitConfig::new(2);
        let p = usvt_probability_estimate(view.b(), &view, &cfg).unwrap();
        assert!(p.iter().all(|&v| v == cfg.clip_eps));
    }

    #[test]
    fn huge_threshold_gives_clip_floor() {
        let a = AdjacencyMatrix::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        let view = PartialView::full(&a);
        let cfg = InitConfig { threshold_const: 1e6, ..InitConfig::new(1) };
        let p = usvt_probability_estimate(view.b(), &view, &cfg).unwrap();
        assert!(p.iter().all(|&v| v == cfg.clip_eps));
    }

    #[test]
    fn rank_one_probability_matrix() {
        let n = 400;
        let p = 0.3;
        let b = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { p });
        let view = PartialView::full(&AdjacencyMatrix::empty(n));
        let est = usvt_probability_estimate(&b, &view, &InitConfig::new(1)).unwrap();
        for v in est.iter() {
            assert!((v - p).abs() <= 1.0 / n as f64, "{v}");
        }
    }

    #[test]
    fn pure_degree_model_is_recovered() {
        let n = 12;
        let alpha = DVector::from_fn(n, |i, _| -1.0 + 0.05 * i as f64);
        let x = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { ((i * j) % 4) as f64 * 0.5 });
        let theta = assemble_theta(&alpha, -0.4, &DMatrix::zeros(n, 1), &x).unwrap();
        let p = theta.map(sigmoid);
        let a = AdjacencyMatrix::from_edges(n, [(0, 1), (0, 2), (0, 5), (0, 7)]).unwrap();
        let view = PartialView::build(&a, 0).unwrap();
        let dec = decompose_initial(&p, &x, &view, &InitConfig::new(1)).unwrap();
        assert!(dec.params.z.iter().all(|v| v.abs() < 1e-6));
        assert_relative_eq!(dec.params.alpha, alpha, epsilon = 1e-8);
        assert_relative_eq!(dec.params.beta, -0.4, epsilon = 1e-8);
    }

    #[test]
    fn zero_covariates_give_zero_beta() {
        let n = 10;
        let p = DMatrix::from_fn(n, n, |i, j| 0.1 + 0.01 * ((i + j) % 5) as f64);
        let view = PartialView::full(&AdjacencyMatrix::empty(n));
        let dec = decompose_initial(&p, &DMatrix::zeros(n, n), &view, &InitConfig::new(2)).unwrap();
        assert_eq!(dec.params.beta, 0.0);
    }

    #[test]
    fn output_is_group_centered() {
        let n = 20;
        let a = AdjacencyMatrix::from_edges(n, (1..8).map(|j| (0, j)).chain((8..n).map(|j| (j - 1, j)))).unwrap();
        let view = PartialView::build(&a, 0).unwrap();
        let init = initialize(&view, &DMatrix::zeros(n, n), &InitConfig::new(2)).unwrap();
        for c in 0..2 {
            let s_in: f64 = view.members().iter().map(|&i| init.z[(i, c)]).sum();
            let s_out: f64 = view.outsiders().iter().map(|&i| init.z[(i, c)]).sum();
            assert!(s_in.abs() < 1e-10 && s_out.abs() < 1e-10);
        }
    }
}

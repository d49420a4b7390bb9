//! Estimation error metrics, Procrustes alignment, neighborhood imbalance
//! and neighborhood conditioning diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, op_norm, singular_values};
use crate::model::Params;
use crate::simgen::GroundTruth;
use crate::view::PartialView;

/// Orthogonal `R` minimizing `‖Z_hat - Z_ref R‖_F`, and that minimum.
///
/// With `Z_refᵀ Z_hat = U Σ Vᵀ`, the minimizer is `R = U Vᵀ`; it maximizes
/// `tr(Rᵀ Z_refᵀ Z_hat)`.
pub fn procrustes_align(z_hat: &DMatrix<f64>, z_ref: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if z_hat.shape() != z_ref.shape() {
        return Err(Error::dim(
            "Z_hat",
            format!("{}x{}", z_ref.nrows(), z_ref.ncols()),
            format!("{}x{}", z_hat.nrows(), z_hat.ncols()),
        ));
    }
    let k = z_ref.ncols();
    if k == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    let cross = z_ref.transpose() * z_hat;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let r = u * v_t;
    let err = (z_hat - z_ref * &r).norm();
    Ok((r, err))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e_t: f64,
    /// `‖Δ_Z‖_F` after Procrustes alignment against `𝒵* = JZ*`.
    pub delta_z_f: f64,
    /// `‖𝒵*‖_op`.
    pub z_ref_op: f64,
    /// `‖Z_t Z_tᵀ - Z*Z*ᵀ‖²_F`.
    pub delta_g_f_sq: f64,
    /// `‖Z_t Z_tᵀ - 𝒵*𝒵*ᵀ‖²_F`.
    pub delta_g_centered_f_sq: f64,
    /// `‖Θ_t - Θ*‖²_F` over off-diagonal entries.
    pub delta_theta_f_sq: f64,
    /// `‖S(Θ_t - Θ*)‖²_F` over off-diagonal entries.
    pub delta_s_theta_f_sq: f64,
    pub relative_error_theta: f64,
}

impl ErrorReport {
    /// `c = ‖Δ_Z‖_F / ‖𝒵*‖_op`.
    pub fn c(&self) -> f64 {
        self.delta_z_f / self.z_ref_op
    }

    /// `‖Δ_G‖²_F ≤ (2 + c)² e_t`, evaluated with `Δ_G` measured against
    /// `𝒵*𝒵*ᵀ`. `None` when `c > c_max` (outside the regime of the bound).
    pub fn gram_bound_holds(&self, c_max: f64) -> Option<bool> {
        let c = self.c();
        if !(c <= c_max) {
            return None;
        }
        let bound = (2.0 + c).powi(2) * self.e_t;
        Some(self.delta_g_centered_f_sq <= bound * (1.0 + 1e-9) + 1e-12)
    }
}

/// Truth-side quantities needed to score an iterate, computed once per fit.
#[derive(Debug, Clone)]
pub struct TruthReference {
    z_centered: DMatrix<f64>,
    z_centered_op: f64,
    gram_star: DMatrix<f64>,
    gram_centered: DMatrix<f64>,
    theta_star: DMatrix<f64>,
    theta_star_f_sq: f64,
    x: DMatrix<f64>,
    masked_x_f_sq: f64,
    alpha_star: nalgebra::DVector<f64>,
    beta_star: f64,
    in_s: Vec<bool>,
    n_s: usize,
    conditional_center: Option<usize>,
}

impl TruthReference {
    /// `conditional` zeroes the errors of the center's row and column of
    /// `Θ*` and `G*`.
    pub fn new(truth: &GroundTruth, view: &PartialView, conditional: bool) -> Result<Self> {
        let n = view.n();
        if truth.n() != n {
            return Err(Error::dim("truth", format!("{n} nodes"), format!("{} nodes", truth.n())));
        }
        let z_centered = view.center_rows(&truth.model.z)?;
        let z_centered_op = op_norm(&z_centered);
        let gram_centered = &z_centered * z_centered.transpose();
        let conditional_center = conditional.then_some(view.center());
        let theta_star_f_sq = off_diagonal_f_sq(&truth.theta, conditional_center, |_, _| true);
        Ok(TruthReference {
            z_centered,
            z_centered_op,
            gram_star: truth.gram.clone(),
            gram_centered,
            theta_star: truth.theta.clone(),
            theta_star_f_sq,
            masked_x_f_sq: frobenius_sq(&view.mask(&truth.model.x)?),
            x: truth.model.x.clone(),
            alpha_star: truth.model.alpha.clone(),
            beta_star: truth.model.beta,
            in_s: (0..n).map(|i| view.contains(i)).collect(),
            n_s: view.n_s(),
            conditional_center,
        })
    }

    pub fn z_centered(&self) -> &DMatrix<f64> {
        &self.z_centered
    }

    pub fn report(&self, params: &Params) -> Result<ErrorReport> {
        let n = self.in_s.len();
        if params.n() != n {
            return Err(Error::dim("params", format!("{n} nodes"), format!("{} nodes", params.n())));
        }
        let (_, delta_z_f) = procrustes_align(&params.z, &self.z_centered)?;

        let mut alpha_term = 0.0;
        for i in 0..n {
            let d = params.alpha[i] - self.alpha_star[i];
            let width = if self.in_s[i] { n } else { self.n_s };
            alpha_term += width as f64 * d * d;
        }
        let d_beta = params.beta - self.beta_star;
        let e_t = self.z_centered_op.powi(2) * delta_z_f.powi(2)
            + 2.0 * alpha_term
            + d_beta * d_beta * self.masked_x_f_sq;

        let gram = &params.z * params.z.transpose();
        let delta_g = &gram - &self.gram_star;
        let delta_gc = &gram - &self.gram_centered;
        let (delta_g_f_sq, delta_g_centered_f_sq) = match self.conditional_center {
            None => (frobenius_sq(&delta_g), frobenius_sq(&delta_gc)),
            Some(c) => (
                f_sq_excluding(&delta_g, c),
                f_sq_excluding(&delta_gc, c),
            ),
        };

        let theta = params.theta(&self.x)?;
        let delta_theta = theta - &self.theta_star;
        let cc = self.conditional_center;
        let delta_theta_f_sq = off_diagonal_f_sq(&delta_theta, cc, |_, _| true);
        let delta_s_theta_f_sq = off_diagonal_f_sq(&delta_theta, cc, |i, j| self.in_s[i] || self.in_s[j]);

        Ok(ErrorReport {
            e_t,
            delta_z_f,
            z_ref_op: self.z_centered_op,
            delta_g_f_sq,
            delta_g_centered_f_sq,
            delta_theta_f_sq,
            delta_s_theta_f_sq,
            relative_error_theta: delta_theta_f_sq / self.theta_star_f_sq,
        })
    }
}

fn off_diagonal_f_sq(m: &DMatrix<f64>, skip: Option<usize>, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let n = m.nrows();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i == j || skip == Some(i) || skip == Some(j) || !keep(i, j) {
                continue;
            }
            total += m[(i, j)] * m[(i, j)];
        }
    }
    total
}

fn f_sq_excluding(m: &DMatrix<f64>, center: usize) -> f64 {
    let n = m.nrows();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != center && j != center {
                total += m[(i, j)] * m[(i, j)];
            }
        }
    }
    total
}

/// Error metrics of `params` against `truth` for the given view.
pub fn error_metric(params: &Params, truth: &GroundTruth, view: &PartialView, conditional: bool) -> Result<ErrorReport> {
    TruthReference::new(truth, view, conditional)?.report(params)
}

/// Neighborhood imbalance `U_S` with `U_S² = (1/n) Σ_i (z_iᵀ Σ_{j∈𝒮} z_j)²`,
/// and `U_S / ‖G‖_F` for the supplied Gram norm.
pub fn imbalance(z: &DMatrix<f64>, view: &PartialView, gram_norm: f64) -> Result<(f64, f64)> {
    let n = view.n();
    if z.nrows() != n {
        return Err(Error::dim("Z", format!("{n} rows"), format!("{} rows", z.nrows())));
    }
    let k = z.ncols();
    let mut s = vec![0.0; k];
    for &j in view.members() {
        for (c, sc) in s.iter_mut().enumerate() {
            *sc += z[(j, c)];
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let dot: f64 = (0..k).map(|c| z[(i, c)] * s[c]).sum();
        total += dot * dot;
    }
    let u = (total / n as f64).sqrt();
    Ok((u, u / gram_norm))
}

/// Imbalance measured against the latent positions' own Gram matrix.
pub fn empirical_imbalance(z: &DMatrix<f64>, view: &PartialView) -> Result<f64> {
    let gram_norm = (z * z.transpose()).norm();
    Ok(imbalance(z, view, gram_norm)?.1)
}

/// `‖𝒵𝒵ᵀ - ZZᵀ‖²_F` with `𝒵 = JZ`: how far group centering moves the Gram
/// matrix.
pub fn centering_distortion(z: &DMatrix<f64>, view: &PartialView) -> Result<f64> {
    let zc = view.center_rows(z)?;
    Ok(frobenius_sq(&(&zc * zc.transpose() - z * z.transpose())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticStats {
    pub r_s: f64,
    pub n_s: usize,
    pub u_s: f64,
    pub u_s_normalized: f64,
    pub gamma_s: f64,
    /// `σ₁(𝒵*) / σ_k(𝒵*_S)`; infinite when the neighborhood rows are rank
    /// deficient.
    pub kappa_prime: f64,
    /// Average connection probability of the center.
    pub p_s: f64,
    /// `δ_n² = ‖Σ_i P_{ci} z*_i‖²`.
    pub delta_n_sq: f64,
}

pub fn neighborhood_diagnostics(truth: &GroundTruth, view: &PartialView) -> Result<DiagnosticStats> {
    let n = view.n();
    if truth.n() != n {
        return Err(Error::dim("truth", format!("{n} nodes"), format!("{} nodes", truth.n())));
    }
    let z = &truth.model.z;
    let k = z.ncols();
    let (u_s, u_s_normalized) = imbalance(z, view, truth.gram.norm())?;

    let z_centered = view.center_rows(z)?;
    let sigma_1 = singular_values(&z_centered).first().copied().unwrap_or(0.0);
    let sv_s = singular_values(&view.rows_in(&z_centered));
    let sigma_k = if k == 0 { 0.0 } else { sv_s.get(k - 1).copied().unwrap_or(0.0) };
    let kappa_prime = if sigma_k > sigma_1 * 1e-12 && sigma_k > 0.0 {
        sigma_1 / sigma_k
    } else {
        f64::INFINITY
    };
    let r_s = view.r_s();
    let gamma_s = r_s.min(kappa_prime.powi(-4));

    let center = view.center();
    let p = truth.probabilities();
    let mut p_sum = 0.0;
    let mut weighted = vec![0.0; k];
    for i in 0..n {
        if i == center {
            continue;
        }
        let pci = p[(center, i)];
        p_sum += pci;
        for (c, w) in weighted.iter_mut().enumerate() {
            *w += pci * z[(i, c)];
        }
    }
    Ok(DiagnosticStats {
        r_s,
        n_s: view.n_s(),
        u_s,
        u_s_normalized,
        gamma_s,
        kappa_prime,
        p_s: p_sum / n as f64,
        delta_n_sq: weighted.iter().map(|w| w * w).sum(),
    })
}

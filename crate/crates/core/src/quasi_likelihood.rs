//! Penalized quasi log-likelihood
//! `L(theta) = -1/2 sum_k sum_i (Z^i_k - eta^i_k' theta)^2 - lambda |theta|^2 / 2`,
//! its maximizers with and without a linear hypothesis `P theta = 0`,
//! the likelihood-ratio statistic and the score decomposition behind the
//! square-root Wilks expansion.
//!
//! The likelihood is quadratic, so every supremum is available in closed
//! form from the normal matrix `A = sum eta eta' + lambda I` and the vector
//! `b = sum eta Z`. Weighted variants share the same code path; unit weights
//! reproduce the unweighted quantities bit for bit.

use nalgebra::{DMatrix, DVector};

use crate::basis_model::GeneralDesign;
use crate::error::{IvError, Result};
use crate::linalg;

/// Maximizers and likelihood values under the full model and the hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub theta_hat: DVector<f64>,
    pub theta_restricted: DVector<f64>,
    pub loglik_full: f64,
    pub loglik_restricted: f64,
    /// Normal matrix `sum eta eta' + lambda I`.
    pub d0: DMatrix<f64>,
    pub projector: DMatrix<f64>,
}

impl FitResult {
    /// `T_LR`, computed as the exact quadratic gap between the two maxima.
    pub fn t_lr(&self) -> f64 {
        quad_gap(&self.d0, &self.theta_hat, &self.theta_restricted)
    }
}

/// Full score, profile score and effective Fisher matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreDecomposition {
    pub xi: DVector<f64>,
    pub xi_s: DVector<f64>,
    pub fisher_eff: DMatrix<f64>,
}

/// Orthonormal coordinates adapted to a projector: `range` spans the tested
/// directions, `null` the nuisance directions `{P theta = 0}`.
#[derive(Clone, Debug)]
pub(crate) struct Split {
    pub range: DMatrix<f64>,
    pub null: DMatrix<f64>,
}

impl Split {
    pub fn new(projector: &DMatrix<f64>, j: usize) -> Result<Self> {
        if projector.shape() != (j, j) {
            return Err(IvError::DimensionMismatch(format!(
                "projector {}x{} for J = {j}",
                projector.nrows(),
                projector.ncols()
            )));
        }
        linalg::check_idempotent(projector, 1e-10)?;
        let (range, null) = linalg::split_bases(projector);
        if null.ncols() == 0 {
            return Ok(Self { range: DMatrix::identity(j, j), null });
        }
        if range.ncols() == 0 {
            return Ok(Self { range, null: DMatrix::identity(j, j) });
        }
        Ok(Self { range, null })
    }
}

fn unit_weights(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

/// Normal matrix and right-hand side of the weighted problem:
/// `A = sum_i w_i sum_k eta eta' + lambda (sum w / n) I`, `b = sum_i w_i sum_k eta Z`.
pub(crate) fn normal_equations(
    design: &GeneralDesign,
    weights: &DVector<f64>,
    penalty: PenaltyWeighting,
) -> (DMatrix<f64>, DVector<f64>) {
    let (n, j) = (design.n_obs(), design.n_basis());
    let mut a = DMatrix::zeros(j, j);
    let mut b = DVector::zeros(j);
    for (eta, z) in design.eta().iter().zip(design.zk()) {
        let mut weighted = eta.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        a += weighted.transpose() * eta;
        b += weighted.transpose() * z;
    }
    let share = penalty.share(weights, n);
    for d in 0..j {
        a[(d, d)] += design.penalty() * share;
    }
    (a, b)
}

/// How the ridge penalty enters a weighted objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyWeighting {
    /// Each observation carries a `lambda / n` share of the penalty, multiplied by its weight.
    #[default]
    Weighted,
    /// The penalty stays `lambda |theta|^2 / 2` whatever the weights.
    Unweighted,
}

impl PenaltyWeighting {
    fn share(self, weights: &DVector<f64>, n: usize) -> f64 {
        match self {
            Self::Weighted => weights.sum() / n as f64,
            Self::Unweighted => 1.0,
        }
    }
}

/// Per-observation weighted objective
/// `sum_i w_i [sum_k -1/2 (Z^i_k - eta^i_k' theta)^2 - lambda |theta|^2 / (2n)]`.
pub(crate) fn weighted_loglik(
    design: &GeneralDesign,
    weights: &DVector<f64>,
    theta: &DVector<f64>,
    penalty: PenaltyWeighting,
) -> f64 {
    let n = design.n_obs();
    let pen = design.penalty() * theta.norm_squared() / (2.0 * n as f64);
    if penalty == PenaltyWeighting::Unweighted {
        let fit: f64 = per_obs_fit(design, theta).iter().zip(weights.iter()).map(|(l, w)| w * l).sum();
        return fit - pen * n as f64;
    }
    let per_obs = per_obs_fit(design, theta);
    per_obs.iter().zip(weights.iter()).map(|(l, w)| w * (l - pen)).sum()
}

fn per_obs_fit(design: &GeneralDesign, theta: &DVector<f64>) -> Vec<f64> {
    let n = design.n_obs();
    let mut per_obs = vec![0.0; n];
    for (eta, z) in design.eta().iter().zip(design.zk()) {
        let resid = z - eta * theta;
        for (acc, r) in per_obs.iter_mut().zip(resid.iter()) {
            *acc -= 0.5 * r * r;
        }
    }
    per_obs
}

fn check_theta(design: &GeneralDesign, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != design.n_basis() {
        return Err(IvError::DimensionMismatch(format!(
            "theta of length {} for J = {}",
            theta.len(),
            design.n_basis()
        )));
    }
    Ok(())
}

/// Quasi log-likelihood at `theta`.
pub fn loglik(design: &GeneralDesign, theta: &DVector<f64>) -> Result<f64> {
    check_theta(design, theta)?;
    Ok(weighted_loglik(design, &unit_weights(design.n_obs()), theta, PenaltyWeighting::Weighted))
}

/// Gradient `b - A theta` of the (weighted) objective.
pub(crate) fn gradient(a: &DMatrix<f64>, b: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    b - a * theta
}

pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Unconstrained maximizer `(sum eta eta' + lambda I)^{-1} sum eta Z`.
pub fn mle(design: &GeneralDesign) -> Result<DVector<f64>> {
    let (a, b) = normal_equations(design, &unit_weights(design.n_obs()), PenaltyWeighting::Weighted);
    solve_spd(&a, &b).ok_or(IvError::SingularDesign)
}

/// Fallback ridge level `1e-6 * trace(sum eta eta') / J` for numerically
/// singular designs.
pub fn fallback_penalty(design: &GeneralDesign) -> f64 {
    let trace: f64 = design.eta().iter().map(|e| e.norm_squared()).sum();
    1e-6 * trace / design.n_basis() as f64
}

/// Maximizer over `{theta : P (theta - center) = 0}` of the quadratic
/// objective with normal matrix `a` and right-hand side `b`.
pub(crate) fn constrained_max(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    split: &Split,
    center: &DVector<f64>,
) -> Option<DVector<f64>> {
    let q = &split.null;
    if q.ncols() == 0 {
        return Some(center.clone());
    }
    let reduced = q.transpose() * a * q;
    let rhs = q.transpose() * (b - a * center);
    let v = solve_spd(&reduced, &rhs)?;
    Some(center + q * v)
}

/// `1/2 (x - y)' A (x - y)`: the gap between the value of a quadratic at its
/// maximizer `x` and at any `y`.
pub(crate) fn quad_gap(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let d = x - y;
    0.5 * d.dot(&(a * &d))
}

/// Maximizer under the hypothesis `P theta = 0`.
pub fn restricted_mle(design: &GeneralDesign, projector: &DMatrix<f64>) -> Result<DVector<f64>> {
    let split = Split::new(projector, design.n_basis())?;
    let (a, b) = normal_equations(design, &unit_weights(design.n_obs()), PenaltyWeighting::Weighted);
    let zero = DVector::zeros(design.n_basis());
    constrained_max(&a, &b, &split, &zero).ok_or(IvError::SingularDesign)
}

/// Both maximizers and the corresponding likelihood values.
pub fn fit(design: &GeneralDesign, projector: &DMatrix<f64>) -> Result<FitResult> {
    let split = Split::new(projector, design.n_basis())?;
    let ones = unit_weights(design.n_obs());
    let (a, b) = normal_equations(design, &ones, PenaltyWeighting::Weighted);
    let theta_hat = solve_spd(&a, &b).ok_or(IvError::SingularDesign)?;
    let zero = DVector::zeros(design.n_basis());
    let theta_restricted = constrained_max(&a, &b, &split, &zero).ok_or(IvError::SingularDesign)?;
    Ok(FitResult {
        loglik_full: weighted_loglik(design, &ones, &theta_hat, PenaltyWeighting::Weighted),
        loglik_restricted: weighted_loglik(design, &ones, &theta_restricted, PenaltyWeighting::Weighted),
        theta_hat,
        theta_restricted,
        d0: a,
        projector: projector.clone(),
    })
}

/// `T_LR = sup L - sup_{P theta = 0} L`.
pub fn t_lr(design: &GeneralDesign, projector: &DMatrix<f64>) -> Result<f64> {
    Ok(fit(design, projector)?.t_lr())
}

/// Score decomposition at `grad = grad L(theta*)` with Hessian `h`.
pub(crate) fn decompose(
    grad: &DVector<f64>,
    h: &DMatrix<f64>,
    split: &Split,
) -> Result<ScoreDecomposition> {
    let xi = linalg::inv_sqrt(h).map_err(|_| IvError::SingularDesign)? * grad;
    let (p, q) = (&split.range, &split.null);
    if p.ncols() == 0 {
        return Ok(ScoreDecomposition { xi, xi_s: DVector::zeros(0), fisher_eff: DMatrix::zeros(0, 0) });
    }
    let h_pp = p.transpose() * h * p;
    let g_p = p.transpose() * grad;
    let (g_s, d2) = if q.ncols() == 0 {
        (g_p, h_pp)
    } else {
        let h_pq = p.transpose() * h * q;
        let h_qq = q.transpose() * h * q;
        let chol = h_qq.cholesky().ok_or(IvError::SingularNuisance)?;
        let g_q = q.transpose() * grad;
        let g_s = g_p - &h_pq * chol.solve(&g_q);
        let d2 = h_pp - &h_pq * chol.solve(&h_pq.transpose());
        (g_s, d2)
    };
    let d2 = (&d2 + d2.transpose()) * 0.5;
    let xi_s = linalg::inv_sqrt(&d2).map_err(|_| IvError::SingularNuisance)? * g_s;
    Ok(ScoreDecomposition { xi, xi_s, fisher_eff: d2 })
}

/// `xi = H^{-1/2} grad L(theta*)` and the profile score for the tested block.
///
/// `hessian` is the expected negative Hessian `-E Hess L`; when absent the
/// sample normal matrix is used.
pub fn score_decomposition(
    design: &GeneralDesign,
    theta_star: &DVector<f64>,
    projector: &DMatrix<f64>,
    hessian: Option<&DMatrix<f64>>,
) -> Result<ScoreDecomposition> {
    check_theta(design, theta_star)?;
    let split = Split::new(projector, design.n_basis())?;
    let (a, b) = normal_equations(design, &unit_weights(design.n_obs()), PenaltyWeighting::Weighted);
    let grad = gradient(&a, &b, theta_star);
    decompose(&grad, hessian.unwrap_or(&a), &split)
}

/// `| sqrt(2 max(T_LR, 0)) - |xi_s| |`.
pub fn wilks_gap(
    design: &GeneralDesign,
    projector: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    hessian: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let t = t_lr(design, projector)?;
    let sd = score_decomposition(design, theta_star, projector, hessian)?;
    Ok(((2.0 * t.max(0.0)).sqrt() - sd.xi_s.norm()).abs())
}

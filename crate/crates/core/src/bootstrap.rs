//! Multiplier bootstrap for the quasi-likelihood.
//!
//! Each observation's contribution is reweighted by `u_i ~ N(1, 1)`. The
//! bootstrap statistic tests the hypothesis recentred at the full-sample
//! estimate, `P (theta - theta_hat) = 0`, and its quantiles calibrate the
//! real-world likelihood ratio.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis_model::GeneralDesign;
use crate::error::{IvError, Result};
use crate::outcome::TestOutcome;
use crate::quasi_likelihood::{
    self as ql, constrained_max, decompose, normal_equations, quad_gap, solve_spd,
    weighted_loglik, PenaltyWeighting, ScoreDecomposition, Split,
};
use crate::rng::RngStream;
use crate::stats;

/// Empirical bootstrap distribution and its critical value.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapRun {
    pub n_boot: usize,
    pub t_blr_samples: Vec<f64>,
    /// Upper `alpha` quantile of `(T_BLR - J) / sqrt(J)`.
    pub z_star_alpha: f64,
    pub alpha: f64,
    /// Dimension `J` used in the standardization.
    pub dim: usize,
    /// Weight draws rejected for an indefinite normal matrix.
    pub retries: usize,
}

/// `n` independent `N(1, 1)` multipliers.
pub fn draw_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 1.0 + rng.sample::<f64, _>(StandardNormal))
}

fn check_weights(design: &GeneralDesign, weights: &DVector<f64>) -> Result<()> {
    if weights.len() != design.n_obs() {
        return Err(IvError::DimensionMismatch(format!(
            "{} weights for {} observations",
            weights.len(),
            design.n_obs()
        )));
    }
    Ok(())
}

/// Weighted objective `sum_i u_i [sum_k -1/2 r_ik^2 - lambda |theta|^2 / (2n)]`.
pub fn boot_loglik(
    design: &GeneralDesign,
    weights: &DVector<f64>,
    theta: &DVector<f64>,
    penalty: PenaltyWeighting,
) -> Result<f64> {
    check_weights(design, weights)?;
    if theta.len() != design.n_basis() {
        return Err(IvError::DimensionMismatch("theta length".into()));
    }
    Ok(weighted_loglik(design, weights, theta, penalty))
}

/// Maximizer of [`boot_loglik`]. An indefinite weighted normal matrix
/// yields [`IvError::Retry`].
pub fn boot_mle(
    design: &GeneralDesign,
    weights: &DVector<f64>,
    penalty: PenaltyWeighting,
) -> Result<DVector<f64>> {
    check_weights(design, weights)?;
    let (a, b) = normal_equations(design, weights, penalty);
    solve_spd(&a, &b).ok_or(IvError::Retry)
}

/// Precomputed pieces shared by every bootstrap draw on one design.
#[derive(Clone, Debug)]
pub struct BootContext<'a> {
    design: &'a GeneralDesign,
    split: Split,
    theta_hat: DVector<f64>,
    penalty: PenaltyWeighting,
}

impl<'a> BootContext<'a> {
    pub fn new(
        design: &'a GeneralDesign,
        projector: &DMatrix<f64>,
        penalty: PenaltyWeighting,
    ) -> Result<Self> {
        let split = Split::new(projector, design.n_basis())?;
        let theta_hat = ql::mle(design)?;
        Ok(Self { design, split, theta_hat, penalty })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// `T_BLR` for one weight vector.
    pub fn statistic(&self, weights: &DVector<f64>) -> Result<f64> {
        check_weights(self.design, weights)?;
        let (a, b) = normal_equations(self.design, weights, self.penalty);
        let full = solve_spd(&a, &b).ok_or(IvError::Retry)?;
        let restricted = constrained_max(&a, &b, &self.split, &self.theta_hat).ok_or(IvError::Retry)?;
        Ok(quad_gap(&a, &full, &restricted))
    }

    /// Bootstrap score decomposition: the gradient of the weighted objective
    /// at `theta_hat`, standardized by `hessian` (the weighted normal matrix
    /// when absent).
    pub fn score(
        &self,
        weights: &DVector<f64>,
        hessian: Option<&DMatrix<f64>>,
    ) -> Result<ScoreDecomposition> {
        check_weights(self.design, weights)?;
        let (a, b) = normal_equations(self.design, weights, self.penalty);
        let grad = ql::gradient(&a, &b, &self.theta_hat);
        decompose(&grad, hessian.unwrap_or(&a), &self.split)
    }
}

/// `T_BLR = sup L_b - sup_{P(theta - theta_hat) = 0} L_b`.
pub fn t_blr(
    design: &GeneralDesign,
    weights: &DVector<f64>,
    projector: &DMatrix<f64>,
    penalty: PenaltyWeighting,
) -> Result<f64> {
    BootContext::new(design, projector, penalty)?.statistic(weights)
}

/// `| sqrt(2 T_BLR) - |xi_s_b| |` for one weight draw.
pub fn boot_wilks_gap(
    design: &GeneralDesign,
    weights: &DVector<f64>,
    projector: &DMatrix<f64>,
    hessian: Option<&DMatrix<f64>>,
    penalty: PenaltyWeighting,
) -> Result<f64> {
    let ctx = BootContext::new(design, projector, penalty)?;
    let t = ctx.statistic(weights)?;
    let sd = ctx.score(weights, hessian)?;
    Ok(((2.0 * t.max(0.0)).sqrt() - sd.xi_s.norm()).abs())
}

/// Run `b` bootstrap draws and return the critical value `z_alpha`.
///
/// Draw `k` owns the child stream `rng.child(k)`, so results do not depend
/// on the thread pool. Indefinite draws are redrawn; the run aborts once
/// retries exceed 1% of `b`.
pub fn boot_quantile(
    design: &GeneralDesign,
    projector: &DMatrix<f64>,
    b: usize,
    alpha: f64,
    rng: &RngStream,
    penalty: PenaltyWeighting,
) -> Result<BootstrapRun> {
    if b < 100 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(IvError::InvalidInput("need B >= 100 and 0 < alpha < 1".into()));
    }
    let ctx = BootContext::new(design, projector, penalty)?;
    let budget = b / 100;
    let draws: Vec<(Option<f64>, usize)> = (0..b as u64)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng.child(k);
            let mut retries = 0;
            loop {
                let w = draw_weights(design.n_obs(), &mut stream);
                match ctx.statistic(&w) {
                    Ok(t) => return (Some(t), retries),
                    Err(_) if retries < budget => retries += 1,
                    Err(_) => return (None, retries + 1),
                }
            }
        })
        .collect();
    let retries: usize = draws.iter().map(|d| d.1).sum();
    if retries > budget || draws.iter().any(|d| d.0.is_none()) {
        return Err(IvError::RetryOverflow { retries, requested: b });
    }
    let t_blr_samples: Vec<f64> = draws.into_iter().map(|d| d.0.unwrap()).collect();
    let dim = design.n_basis();
    let z_star_alpha = standardized_quantile(&t_blr_samples, dim, alpha);
    Ok(BootstrapRun { n_boot: b, t_blr_samples, z_star_alpha, alpha, dim, retries })
}

/// Upper `alpha` quantile of `(t - J) / sqrt(J)`.
pub fn standardized_quantile(samples: &[f64], dim: usize, alpha: f64) -> f64 {
    let j = dim as f64;
    let z: Vec<f64> = samples.iter().map(|t| (t - j) / j.sqrt()).collect();
    stats::upper_quantile(&z, alpha)
}

/// Reject when `t_lr > J + z_alpha sqrt(J)`.
pub fn blr_test(t_lr_value: f64, run: &BootstrapRun) -> TestOutcome {
    let j = run.dim as f64;
    let threshold = j + run.z_star_alpha * j.sqrt();
    TestOutcome::upper("BLR", t_lr_value, threshold)
        .with_meta("z_star_alpha", run.z_star_alpha)
        .with_meta("retries", run.retries as f64)
}

//! Identification: closed-form and minimum-norm solutions of the moment
//! system, rank and strength classification, and the truncation bias tail.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};
use crate::linalg::{self, RANK_TOL};

/// Population moment system `eta_star x = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSystem {
    /// `K x J`, rows `E W^k psi_j(X)`.
    pub eta_star: DMatrix<f64>,
    /// `E W^k Y - delta_k`.
    pub rhs: DVector<f64>,
    pub c_ident: Option<f64>,
}

impl MomentSystem {
    pub fn new(eta_star: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if eta_star.nrows() == 0 || eta_star.ncols() == 0 {
            return Err(IvError::DimensionMismatch("empty moment system".into()));
        }
        if rhs.len() != eta_star.nrows() {
            return Err(IvError::DimensionMismatch(format!(
                "{} rows but rhs of length {}",
                eta_star.nrows(),
                rhs.len()
            )));
        }
        if eta_star.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(IvError::InvalidInput("non-finite moments".into()));
        }
        Ok(Self { eta_star, rhs, c_ident: None })
    }
}

/// Result of [`min_norm_solution`].
#[derive(Clone, Debug, PartialEq)]
pub struct MinNormSolution {
    pub x: DVector<f64>,
    /// Numerical rank of the constraint rows.
    pub rank: usize,
    /// Set when linearly dependent (but consistent) rows were dropped.
    pub dropped_redundant: bool,
    /// `|x|^2`, the smallest admissible identification constant.
    pub c_ident: f64,
}

/// Solution of the single-instrument system `<eta1, x> = ewy` of minimal norm.
pub fn single_iv_solution(eta1: &DVector<f64>, ewy: f64) -> Result<DVector<f64>> {
    let nrm2 = eta1.norm_squared();
    if nrm2 == 0.0 || !nrm2.is_finite() {
        return Err(IvError::Identification("instrument moments are zero".into()));
    }
    Ok(eta1 * (ewy / nrm2))
}

/// `argmin |x|^2` subject to `A x = b`, i.e. `x = A'(AA')^+ b`.
///
/// Computed from the SVD of `A` (which diagonalizes `AA'`), discarding
/// singular values below `1e-8 * sigma_max`.
pub fn min_norm_solution(system: &MomentSystem) -> Result<MinNormSolution> {
    let a = &system.eta_star;
    let b = &system.rhs;
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let top = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    if top == 0.0 {
        return Err(IvError::Identification("all moment rows vanish".into()));
    }
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_TOL * top {
            rank += 1;
            let coef = u.column(idx).dot(b) / s;
            x += vt.row(idx).transpose() * coef;
        }
    }
    let residual = (a * &x - b).norm();
    if residual > 1e-10 * (1.0 + b.norm()) {
        return Err(IvError::Infeasible { residual });
    }
    let c_ident = x.norm_squared();
    Ok(MinNormSolution { x, rank, dropped_redundant: rank < a.nrows(), c_ident })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    Complete,
    Incomplete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub class: Completeness,
}

/// Numerical rank of `sum_i sum_k eta_{k,i} eta_{k,i}'` over the first
/// `j_max` basis functions. `per_obs[i]` is the `K x J` moment block of
/// observation `i`.
pub fn rank_classify(per_obs: &[DMatrix<f64>], j_max: usize) -> Result<RankReport> {
    let first = per_obs
        .first()
        .ok_or_else(|| IvError::DimensionMismatch("no observations".into()))?;
    let (k, j) = first.shape();
    if j_max == 0 || j_max > j {
        return Err(IvError::DimensionMismatch(format!("j_max {j_max} outside 1..={j}")));
    }
    let mut gram = DMatrix::zeros(j_max, j_max);
    for block in per_obs {
        if block.shape() != (k, j) {
            return Err(IvError::DimensionMismatch("ragged moment blocks".into()));
        }
        let b = block.columns(0, j_max);
        gram += b.transpose() * b;
    }
    let rank = linalg::numerical_rank(&gram);
    let class = if rank == j_max { Completeness::Complete } else { Completeness::Incomplete };
    Ok(RankReport { rank, class })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthClass {
    Weak,
    SemiStrong,
    Strong,
}

/// Bands on the fitted growth exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthBands {
    pub weak_below: f64,
    pub strong_above: f64,
}

impl Default for StrengthBands {
    fn default() -> Self {
        Self { weak_below: 0.2, strong_above: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthReport {
    pub lambda_max_curve: Vec<(usize, f64)>,
    pub exponent: f64,
    pub class: StrengthClass,
}

/// Fit `s(m) ~ m^alpha` where `s(m)` is the top eigenvalue of the moment
/// matrix accumulated over the first `m` observations.
pub fn strength_classify(
    samples: &[DMatrix<f64>],
    sizes: &[usize],
    bands: StrengthBands,
) -> Result<StrengthReport> {
    if samples.len() != sizes.len() {
        return Err(IvError::DimensionMismatch("one moment matrix per size".into()));
    }
    if sizes.len() < 3 || sizes.windows(2).any(|w| w[1] <= w[0]) || sizes[0] == 0 {
        return Err(IvError::InvalidInput("need at least 3 increasing positive sizes".into()));
    }
    let mut curve = Vec::with_capacity(sizes.len());
    for (m, &size) in samples.iter().zip(sizes) {
        if !m.is_square() {
            return Err(IvError::DimensionMismatch("moment matrices must be square".into()));
        }
        let (vals, _) = linalg::sym_eigen(m);
        let s = vals[vals.len() - 1];
        if !(s > 0.0) {
            return Err(IvError::InvalidInput(format!(
                "moment matrix at m={size} has no positive eigenvalue"
            )));
        }
        curve.push((size, s));
    }
    let xs: Vec<f64> = curve.iter().map(|&(m, _)| (m as f64).ln()).collect();
    let ys: Vec<f64> = curve.iter().map(|&(_, s)| s.ln()).collect();
    let exponent = ls_slope(&xs, &ys);
    let class = if exponent < bands.weak_below {
        StrengthClass::Weak
    } else if exponent > bands.strong_above {
        StrengthClass::Strong
    } else {
        StrengthClass::SemiStrong
    };
    Ok(StrengthReport { lambda_max_curve: curve, exponent, class })
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Euclidean norm of the coefficients beyond the first `j`.
pub fn nonparam_bias_tail(coeffs: &[f64], j: usize) -> Result<f64> {
    if j > coeffs.len() {
        return Err(IvError::InvalidInput(format!(
            "truncation {j} exceeds sequence length {}",
            coeffs.len()
        )));
    }
    // smallest terms first
    Ok(coeffs[j..].iter().rev().map(|c| c * c).sum::<f64>().sqrt())
}

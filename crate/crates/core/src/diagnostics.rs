//! Concentration and Gaussian-approximation diagnostics.
//!
//! Formula evaluators are pure. Monte Carlo checks take an [`RngStream`]
//! and give replication `r` the stream `rng.child(r)`, so their output does
//! not depend on the thread pool. Universal constants in the underlying
//! bounds are unknown, so the Monte Carlo checks report shapes (monotonicity,
//! decay rates) rather than absolute inequalities.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis_model::GeneralDesign;
use crate::error::{IvError, Result};
use crate::linalg::{inv_sqrt, op_norm, sym_eigen, sym_op_norm};
use crate::quasi_likelihood as ql;
use crate::rng::RngStream;
use crate::stats;

/// Grid size of every Kolmogorov distance computed here.
pub const KOLMOGOROV_POINTS: usize = 512;

/// Arguments of the deviation function `z(x, X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationParams {
    x: f64,
    x2: DMatrix<f64>,
    g: f64,
    tr2: f64,
    tr4: f64,
    lambda: f64,
}

impl DeviationParams {
    /// `x2` is the matrix `X^2`; requires `g^2 > 2 tr(X^2) / 3`.
    pub fn new(x: f64, x2: DMatrix<f64>, g: f64) -> Result<Self> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(IvError::InvalidInput("x must be finite and nonnegative".into()));
        }
        if !x2.is_square() || x2.nrows() == 0 {
            return Err(IvError::DimensionMismatch("X^2 must be square and nonempty".into()));
        }
        let scale = x2.amax().max(1.0);
        if (&x2 - x2.transpose()).amax() > 1e-12 * scale {
            return Err(IvError::InvalidInput("X^2 must be symmetric".into()));
        }
        let (vals, _) = sym_eigen(&x2);
        if vals[0] < -1e-12 * scale {
            return Err(IvError::InvalidInput("X^2 must be positive semidefinite".into()));
        }
        let lambda = vals[vals.len() - 1];
        if lambda <= 0.0 {
            return Err(IvError::InvalidInput("X^2 must be nonzero".into()));
        }
        let tr2 = x2.trace();
        let tr4 = (&x2 * &x2).trace();
        if !(g > 0.0 && g * g > 2.0 * tr2 / 3.0) {
            return Err(IvError::InvalidInput("need g > 0 and g^2 > 2 tr(X^2) / 3".into()));
        }
        Ok(Self { x, x2, g, tr2, tr4, lambda })
    }

    /// Uses the default `g = 2 sqrt(2 tr(X^2))`.
    pub fn with_default_g(x: f64, x2: DMatrix<f64>) -> Result<Self> {
        let g = default_g(&x2);
        Self::new(x, x2, g)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn x2(&self) -> &DMatrix<f64> {
        &self.x2
    }

    pub fn with_x(&self, x: f64) -> Result<Self> {
        Self::new(x, self.x2.clone(), self.g)
    }
}

pub fn default_g(x2: &DMatrix<f64>) -> f64 {
    2.0 * (2.0 * x2.trace()).sqrt()
}

/// Branch boundaries of the deviation function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    /// Boundary used between the first two branches, where they meet:
    /// `2 tr(X^4) / (9 lambda_max^2)`.
    pub x1: f64,
    /// `sqrt(2 tr(X^4)) / (18 lambda_max)`; the two branches do not agree here.
    pub x1_stated: f64,
    pub x_c: f64,
    pub z_c2: f64,
    pub g_c: f64,
    /// Branch 3 minus branch 2 at `x_c`.
    pub junction_gap: f64,
}

pub fn breakpoints(p: &DeviationParams) -> Breakpoints {
    let lam = p.lambda;
    let z_c2 = (2.25 * p.g * p.g - 1.5 * p.tr2) / lam;
    let g_c = (p.g * p.g - 2.0 * p.tr2 / 3.0).sqrt() / lam.sqrt();
    let (vals, _) = sym_eigen(&p.x2);
    let log_det: f64 = vals.iter().map(|v| (1.0 - 2.0 * v / (3.0 * lam)).ln()).sum();
    let x_c = (2.0 * z_c2 / 3.0 + log_det) / 2.0;
    let branch2 = p.tr2 + 6.0 * x_c * lam;
    Breakpoints {
        x1: 2.0 * p.tr4 / (9.0 * lam * lam),
        x1_stated: (2.0 * p.tr4).sqrt() / (18.0 * lam),
        x_c,
        z_c2,
        g_c,
        junction_gap: z_c2 * lam - branch2,
    }
}

/// Squared deviation bound `z^2(x, X)`.
///
/// Branch 1 `tr(X^2) + sqrt(8 tr(X^4) x)` up to `x1`, branch 2
/// `tr(X^2) + 6 x lambda_max` up to `x_c`, then
/// `(z_c + 2 (x - x_c) / g_c)^2 lambda_max`.
pub fn z_function(p: &DeviationParams) -> f64 {
    let b = breakpoints(p);
    let x = p.x;
    if x > b.x_c {
        let z = b.z_c2.sqrt() + 2.0 * (x - b.x_c) / b.g_c;
        z * z * p.lambda
    } else if x <= b.x1 {
        p.tr2 + (8.0 * p.tr4 * x).sqrt()
    } else {
        p.tr2 + 6.0 * x * p.lambda
    }
}

/// Matrix Bernstein tail `2p exp(-t^2 / (2 sigma2 (1 + R t / (3 sigma2))))`.
/// Not clamped to 1.
///
/// # Panics
/// When `t < 0`, `sigma2 <= 0`, `r < 0` or `p == 0`.
pub fn bernstein_bound(t: f64, sigma2: f64, r: f64, p: usize) -> f64 {
    assert!(t >= 0.0 && sigma2 > 0.0 && r >= 0.0 && p >= 1, "invalid Bernstein arguments");
    2.0 * p as f64 * (-t * t / (2.0 * (sigma2 + r * t / 3.0))).exp()
}

/// Source of random sums `S = sum_i S_i` of symmetric summands.
pub trait SummandSampler: Sync {
    fn dim(&self) -> usize;
    fn n_summands(&self) -> usize;
    fn summand(&self, i: usize, rng: &mut dyn RngCore) -> DMatrix<f64>;
    /// `sigma^2 = || sum_i E S_i^2 ||`.
    fn variance_proxy(&self) -> f64;
    /// `R` with `||S_i|| <= R` almost surely.
    fn norm_bound(&self) -> f64;

    fn sum(&self, rng: &mut dyn RngCore) -> DMatrix<f64> {
        let p = self.dim();
        (0..self.n_summands()).fold(DMatrix::zeros(p, p), |acc, i| acc + self.summand(i, rng))
    }
}

/// `S_i = eps_i e_1 e_1^T` with Rademacher `eps_i`.
#[derive(Clone, Debug)]
pub struct RademacherRankOne {
    pub dim: usize,
    pub n: usize,
}

impl SummandSampler for RademacherRankOne {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_summands(&self) -> usize {
        self.n
    }
    fn summand(&self, _i: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        m[(0, 0)] = rademacher(rng);
        m
    }
    fn variance_proxy(&self) -> f64 {
        self.n as f64
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
    fn sum(&self, rng: &mut dyn RngCore) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        m[(0, 0)] = (0..self.n).map(|_| rademacher(rng)).sum();
        m
    }
}

/// `S_i = eps_i A_i` for fixed symmetric `A_i`.
#[derive(Clone, Debug)]
pub struct RademacherSeries {
    coeffs: Vec<DMatrix<f64>>,
}

impl RademacherSeries {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = coeffs.first().map(|a| a.nrows()).unwrap_or(0);
        if p == 0 {
            return Err(IvError::InvalidInput("need at least one nonempty coefficient".into()));
        }
        for a in &coeffs {
            if a.shape() != (p, p) || (a - a.transpose()).amax() > 1e-12 {
                return Err(IvError::InvalidInput("coefficients must be symmetric p x p".into()));
            }
        }
        Ok(Self { coeffs })
    }
}

impl SummandSampler for RademacherSeries {
    fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }
    fn n_summands(&self) -> usize {
        self.coeffs.len()
    }
    fn summand(&self, i: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
        &self.coeffs[i] * rademacher(rng)
    }
    fn variance_proxy(&self) -> f64 {
        let p = self.dim();
        let v = self.coeffs.iter().fold(DMatrix::zeros(p, p), |acc, a| acc + a * a);
        sym_op_norm(&v)
    }
    fn norm_bound(&self) -> f64 {
        self.coeffs.iter().map(sym_op_norm).fold(0.0, f64::max)
    }
}

fn rademacher(rng: &mut dyn RngCore) -> f64 {
    if rng.next_u32() & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Empirical tail at one threshold with its Bernstein bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub std_error: f64,
    pub bound: f64,
}

impl TailPoint {
    /// `empirical <= min(1, bound) + k * std_error`.
    pub fn dominated(&self, k: f64) -> bool {
        self.empirical <= self.bound.min(1.0) + k * self.std_error
    }
}

/// Monte Carlo estimate of `P(||S||_op >= t)` on each grid value.
pub fn empirical_opnorm_tail<S: SummandSampler>(
    sampler: &S,
    t_grid: &[f64],
    reps: usize,
    rng: &RngStream,
) -> Vec<TailPoint> {
    let norms: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.child(r);
            sym_op_norm(&sampler.sum(&mut stream))
        })
        .collect();
    let (sigma2, big_r, p) = (sampler.variance_proxy(), sampler.norm_bound(), sampler.dim());
    t_grid
        .iter()
        .map(|&t| {
            let hits = norms.iter().filter(|&&v| v >= t).count();
            let q = hits as f64 / reps as f64;
            TailPoint {
                t,
                empirical: q,
                std_error: (q * (1.0 - q) / reps as f64).sqrt(),
                bound: if sigma2 > 0.0 { bernstein_bound(t, sigma2, big_r, p) } else { 0.0 },
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussCompare {
    pub empirical_kolmogorov: f64,
    /// `max_j sqrt(tr Sigma_j) ||I - Sigma_0^{-1} Sigma_1||`.
    pub bound_factor: f64,
    /// DKW half-width at 95% for one sample of `reps` draws.
    pub dkw: f64,
}

fn gaussian_norms(sigma: &DMatrix<f64>, reps: usize, rng: &RngStream) -> Result<Vec<f64>> {
    let l = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| IvError::InvalidInput("covariance must be positive definite".into()))?
        .l();
    let d = sigma.nrows();
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.child(r);
            let g = DVector::from_fn(d, |_, _| stream.sample::<f64, _>(StandardNormal));
            (&l * g).norm()
        })
        .collect())
}

/// Kolmogorov distance between the laws of `||xi_0||` and `||xi_1||` for
/// centered Gaussians with covariances `sigma0`, `sigma1`.
///
/// `xi_j` draws come from `rng.child(j)`, so calls sharing `rng` use common
/// random numbers.
pub fn gauss_compare_distance(
    sigma0: &DMatrix<f64>,
    sigma1: &DMatrix<f64>,
    reps: usize,
    rng: &RngStream,
) -> Result<GaussCompare> {
    if sigma0.shape() != sigma1.shape() || !sigma0.is_square() {
        return Err(IvError::DimensionMismatch("covariances must share a square shape".into()));
    }
    if reps == 0 {
        return Err(IvError::InvalidInput("reps must be positive".into()));
    }
    let a = gaussian_norms(sigma0, reps, &rng.child(0))?;
    let b = gaussian_norms(sigma1, reps, &rng.child(1))?;
    let inv0 = sigma0.clone().try_inverse().ok_or(IvError::SingularDesign)?;
    let d = sigma0.nrows();
    let gap = op_norm(&(DMatrix::identity(d, d) - inv0 * sigma1));
    let root_tr = sigma0.trace().sqrt().max(sigma1.trace().sqrt());
    Ok(GaussCompare {
        empirical_kolmogorov: stats::grid_kolmogorov(&a, &b, KOLMOGOROV_POINTS),
        bound_factor: root_tr * gap,
        dkw: stats::dkw_band(reps, 0.05),
    })
}

/// Law of the i.i.d. summands in [`gar_scaling_check`]; each has identity
/// covariance before scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummandLaw {
    /// Uniform on `[-sqrt 3, sqrt 3]^J`.
    UniformCube,
    /// Independent Rademacher coordinates.
    RademacherProduct,
    Gaussian,
}

impl SummandLaw {
    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "uniform_cube" => Some(Self::UniformCube),
            "rademacher_product" => Some(Self::RademacherProduct),
            "gaussian" => Some(Self::Gaussian),
            _ => None,
        }
    }

    fn draw<R: RngCore>(self, rng: &mut R) -> f64 {
        match self {
            Self::UniformCube => 3f64.sqrt() * rng.random_range(-1.0..1.0),
            Self::RademacherProduct => {
                if rng.next_u32() & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Gaussian => rng.sample(StandardNormal),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GarPoint {
    pub n: usize,
    pub distance: f64,
    /// DKW half-width at 95% for one sample of `reps` draws.
    pub dkw: f64,
}

/// Kolmogorov distance between `||sum_i xi_i / sqrt(n)||` and `||N(0, I_J)||`
/// for each `n` in `n_list`.
pub fn gar_scaling_check(
    law: SummandLaw,
    dim: usize,
    n_list: &[usize],
    reps: usize,
    rng: &RngStream,
) -> Result<Vec<GarPoint>> {
    if dim == 0 || reps == 0 {
        return Err(IvError::InvalidInput("dim and reps must be positive".into()));
    }
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(IvError::InvalidInput("n_list must be positive, increasing, length >= 2".into()));
    }
    let gauss = gaussian_norms(&DMatrix::identity(dim, dim), reps, &rng.child(0))?;
    n_list
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let base = rng.child(1 + idx as u64);
            let sums: Vec<f64> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut stream = base.child(r);
                    let mut acc = vec![0.0; dim];
                    for _ in 0..n {
                        for a in acc.iter_mut() {
                            *a += law.draw(&mut stream);
                        }
                    }
                    (acc.iter().map(|a| a * a).sum::<f64>() / n as f64).sqrt()
                })
                .collect();
            Ok(GarPoint {
                n,
                distance: stats::grid_kolmogorov(&sums, &gauss, KOLMOGOROV_POINTS),
                dkw: stats::dkw_band(reps, 0.05),
            })
        })
        .collect()
}

/// Least-squares slope of `log distance` on `log n`.
pub fn loglog_slope(points: &[GarPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.distance.max(f64::MIN_POSITIVE).ln()).collect();
    crate::identify::ls_slope(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    /// `max_i |e_i - mean| / sd` of the aggregated residual `e_i = sum_k r_ik`.
    pub max_standardized: f64,
    /// `(s, log mean exp(s e_i))` for the standardized residual.
    pub log_mgf: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FscReport {
    /// `max_i || D_0^{-1} sum_k eta_ik ||` against `1/2`.
    pub design: ConditionCheck,
    /// `lambda_max(sum_k (sigma_k^2 - 1) sum_i eta_ik eta_ik^T)` against the penalty.
    pub identifiability: ConditionCheck,
    pub sigma2: Vec<f64>,
    /// Descriptive only.
    pub moments: MomentSummary,
}

/// Grid of exponents used by [`MomentSummary::log_mgf`].
pub const MGF_GRID: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

/// Finite-sample condition checks on sample moments of `design`, with
/// `D_0^2 = sum_{i,k} eta_ik eta_ik^T + lambda I`.
pub fn fsc_design_check(design: &GeneralDesign) -> Result<FscReport> {
    let j = design.n_basis();
    let n = design.n_obs();
    let lambda = design.penalty();
    let grams: Vec<DMatrix<f64>> = design.eta().iter().map(|e| e.transpose() * e).collect();
    let d0sq = grams.iter().fold(DMatrix::identity(j, j) * lambda, |acc, g| acc + g);
    let d0_inv = inv_sqrt(&d0sq).map_err(|_| IvError::SingularDesign)?;
    let eta_sum = design.eta().iter().fold(DMatrix::zeros(n, j), |acc, e| acc + e);
    let design_measure = (0..n)
        .map(|i| (&d0_inv * eta_sum.row(i).transpose()).norm())
        .fold(0.0, f64::max);

    let theta = ql::mle(design).or_else(|_| {
        design.with_penalty(ql::fallback_penalty(design)).and_then(|d| ql::mle(&d))
    })?;
    let residuals: Vec<DVector<f64>> =
        design.eta().iter().zip(design.zk()).map(|(e, z)| z - e * &theta).collect();
    let sigma2: Vec<f64> = residuals.iter().map(|r| r.norm_squared() / n as f64).collect();
    let weighted = grams
        .iter()
        .zip(&sigma2)
        .fold(DMatrix::zeros(j, j), |acc, (g, s)| acc + g * (s - 1.0));
    let (vals, _) = sym_eigen(&weighted);
    let ident = vals[vals.len() - 1];

    let agg: Vec<f64> = (0..n).map(|i| residuals.iter().map(|r| r[i]).sum()).collect();
    let mean = agg.iter().sum::<f64>() / n as f64;
    let sd = (agg.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let std: Vec<f64> = agg.iter().map(|e| if sd > 0.0 { (e - mean) / sd } else { 0.0 }).collect();
    let max_standardized = std.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let log_mgf = MGF_GRID
        .iter()
        .map(|&s| {
            let m = std.iter().map(|v| (s * v).exp()).sum::<f64>() / n as f64;
            (s, m.ln())
        })
        .collect();

    Ok(FscReport {
        design: ConditionCheck { measured: design_measure, threshold: 0.5, pass: design_measure <= 0.5 },
        identifiability: ConditionCheck { measured: ident, threshold: lambda, pass: ident < lambda },
        sigma2,
        moments: MomentSummary { max_standardized, log_mgf },
    })
}

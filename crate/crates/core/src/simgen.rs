//! Synthetic data for the two-equation instrument model.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis_model::{check_omega, cosine_design, IvSample, Truth};
use crate::benchmark_tests::{Centering, ProfileSearch};
use crate::error::{IvError, Result};

/// Law of the structural errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// `N(0, Omega)`.
    #[default]
    Gauss,
    /// Independent Laplace(0, 1) coordinates.
    Laplace,
    /// `N(0, 5 i / n Omega)`.
    HeteroLinear,
    /// `N(0, (2 + 1.5 sin(6 pi i / n)) Omega)`.
    HeteroPeriodic,
}

impl ErrorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('_', "-").as_str() {
            "gauss" => Some(Self::Gauss),
            "laplace" => Some(Self::Laplace),
            "hetero-linear" => Some(Self::HeteroLinear),
            "hetero-periodic" => Some(Self::HeteroPeriodic),
            _ => None,
        }
    }
}

/// Error law together with the covariance used to scale it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    pub kind: ErrorKind,
    /// Row-major `[[o11, o12], [o21, o22]]`; the off-diagonal carries the
    /// correlation.
    #[serde(default = "identity_rows")]
    pub omega: [[f64; 2]; 2],
}

fn identity_rows() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

impl Default for ErrorSpec {
    fn default() -> Self {
        Self { kind: ErrorKind::Gauss, omega: identity_rows() }
    }
}

impl ErrorSpec {
    pub fn new(kind: ErrorKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn omega(&self) -> Matrix2<f64> {
        let o = self.omega;
        Matrix2::new(o[0][0], o[0][1], o[1][0], o[1][1])
    }

    pub fn validate(&self) -> Result<()> {
        check_omega(&self.omega())
    }
}

/// One synthetic experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    /// Number of instruments.
    pub q: usize,
    /// `c` in `pi' Z Z' pi = c / n`.
    pub concentration: f64,
    pub beta_star: f64,
    pub error: ErrorSpec,
    /// Hypothesized values `beta0` evaluated by the power study.
    pub beta_grid: Vec<f64>,
    pub reps: usize,
    pub boot_reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    /// Monte Carlo draws behind the conditional CLR critical values.
    #[serde(default = "default_draws")]
    pub clr_draws: usize,
    /// Null simulations behind the unconditional LR critical value.
    #[serde(default = "default_draws")]
    pub null_sims: usize,
    #[serde(default)]
    pub centering: Centering,
    #[serde(default)]
    pub blr_search: ProfileSearch,
}

fn default_draws() -> usize {
    10_000
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 200,
            q: 5,
            concentration: 4.0,
            beta_star: 1.0,
            error: ErrorSpec::default(),
            beta_grid: vec![1.0],
            reps: 120,
            boot_reps: 1000,
            alpha: 0.05,
            master_seed: 42,
            clr_draws: default_draws(),
            null_sims: default_draws(),
            centering: Centering::Mle,
            blr_search: ProfileSearch::Global,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(IvError::InvalidInput(m.to_string()));
        if self.q < 1 || self.n < self.q {
            return fail("need n >= q >= 1");
        }
        if self.reps < 1 {
            return fail("reps must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)");
        }
        if !(self.concentration > 0.0) || !self.concentration.is_finite() {
            return fail("concentration must be positive");
        }
        if self.boot_reps < 100 {
            return fail("boot_reps must be at least 100");
        }
        if self.clr_draws < 1000 {
            return fail("clr_draws must be at least 1000");
        }
        if self.null_sims < 1 {
            return fail("null_sims must be at least 1");
        }
        if self.beta_grid.is_empty() || self.beta_grid.iter().any(|b| !b.is_finite()) {
            return fail("beta_grid must be non-empty and finite");
        }
        self.error.validate()
    }
}

/// `pi = s (1, 2, ..., J)` with `s > 0` such that `pi' Z Z' pi = c / n`.
pub fn gen_pi(z: &DMatrix<f64>, concentration: f64) -> Result<DVector<f64>> {
    let (j, n) = z.shape();
    let gram = z * z.transpose();
    if crate::linalg::numerical_rank(&gram) < j {
        return Err(IvError::InvalidInput("ZZ' is singular".into()));
    }
    let base = DVector::from_fn(j, |r, _| (r + 1) as f64);
    let quad = base.dot(&(&gram * &base));
    Ok(base * (concentration / (n as f64 * quad)).sqrt())
}

/// Per-observation scale of the error covariance for observation `i`
/// (1-based).
pub fn variance_scale(kind: ErrorKind, i: usize, n: usize) -> f64 {
    let (i, n) = (i as f64, n as f64);
    match kind {
        ErrorKind::Gauss | ErrorKind::Laplace => 1.0,
        ErrorKind::HeteroLinear => 5.0 * i / n,
        ErrorKind::HeteroPeriodic => 2.0 + 1.5 * (6.0 * PI * i / n).sin(),
    }
}

/// Draw `(e1, e2)` for `n` observations.
pub fn gen_errors<R: Rng + ?Sized>(
    spec: &ErrorSpec,
    n: usize,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    spec.validate()?;
    let mut e1 = DVector::zeros(n);
    let mut e2 = DVector::zeros(n);
    if spec.kind == ErrorKind::Laplace {
        let lap = Laplace;
        for i in 0..n {
            e1[i] = lap.sample(rng);
            e2[i] = lap.sample(rng);
        }
        return Ok((e1, e2));
    }
    let l = spec.omega().cholesky().expect("omega checked").l();
    for i in 0..n {
        let s = variance_scale(spec.kind, i + 1, n).sqrt();
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        e1[i] = s * l[(0, 0)] * x;
        e2[i] = s * (l[(1, 0)] * x + l[(1, 1)] * y);
    }
    Ok((e1, e2))
}

/// Standard Laplace law with density `exp(-|x|) / 2`.
#[derive(Clone, Copy, Debug)]
pub struct Laplace;

impl Distribution<f64> for Laplace {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(rand_distr::Exp1);
        if rng.random::<bool>() {
            e
        } else {
            -e
        }
    }
}

/// Instruments and first-stage coefficients of a configuration.
pub fn design(config: &SimConfig) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let z = cosine_design(config.n, config.q)?;
    let pi = gen_pi(&z, config.concentration)?;
    Ok((z, pi))
}

/// Outcomes `Y1 = Z' pi beta + e1`, `Y2 = Z' pi + e2` on a fixed design.
pub fn gen_outcomes<R: Rng + ?Sized>(
    config: &SimConfig,
    z: &DMatrix<f64>,
    pi: &DVector<f64>,
    beta: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let signal = z.transpose() * pi;
    let (e1, e2) = gen_errors(&config.error, config.n, rng)?;
    Ok((&signal * beta + e1, signal + e2))
}

/// A full sample at structural value `beta`. The statistics always use the
/// configured `Omega`, whatever the error law.
pub fn gen_sample<R: Rng + ?Sized>(config: &SimConfig, beta: f64, rng: &mut R) -> Result<IvSample> {
    config.validate()?;
    let (z, pi) = design(config)?;
    let (y1, y2) = gen_outcomes(config, &z, &pi, beta, rng)?;
    Ok(IvSample::new(y1, y2, z, config.error.omega())?
        .with_truth(Truth { beta_star: beta, pi_star: pi }))
}

/// Error-free sample, `Y1 = beta Y2` exactly.
pub fn noiseless_sample(config: &SimConfig, beta: f64) -> Result<IvSample> {
    config.validate()?;
    let (z, pi) = design(config)?;
    let signal = z.transpose() * &pi;
    Ok(IvSample::new(&signal * beta, signal, z, config.error.omega())?
        .with_truth(Truth { beta_star: beta, pi_star: pi }))
}

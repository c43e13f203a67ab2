//! Core domain types, the cosine design and general quasi-likelihood designs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};

/// Family of basis functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Cosine,
}

/// A basis of `n_basis` functions, indexed from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_basis: usize,
    pub kind: BasisKind,
}

impl BasisSpec {
    pub fn cosine(n_basis: usize) -> Result<Self> {
        if n_basis == 0 {
            return Err(IvError::InvalidInput("n_basis must be at least 1".into()));
        }
        Ok(Self { n_basis, kind: BasisKind::Cosine })
    }

    /// Evaluate the basis on `n` equispaced design points.
    pub fn design(&self, n: usize) -> Result<DMatrix<f64>> {
        match self.kind {
            BasisKind::Cosine => cosine_design(n, self.n_basis),
        }
    }
}

/// Structural truth recorded on simulated samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub beta_star: f64,
    pub pi_star: DVector<f64>,
}

/// One realized dataset of the two-equation model
/// `Y1 = Z'pi beta + e1`, `Y2 = Z'pi + e2`.
#[derive(Clone, Debug, PartialEq)]
pub struct IvSample {
    pub y1: DVector<f64>,
    pub y2: DVector<f64>,
    /// Instruments, `J x n`.
    pub z: DMatrix<f64>,
    /// Assumed error covariance used inside the statistics.
    pub omega: Matrix2<f64>,
    pub truth: Option<Truth>,
}

impl IvSample {
    pub fn new(
        y1: DVector<f64>,
        y2: DVector<f64>,
        z: DMatrix<f64>,
        omega: Matrix2<f64>,
    ) -> Result<Self> {
        let n = y1.len();
        if n == 0 || y2.len() != n || z.ncols() != n || z.nrows() == 0 {
            return Err(IvError::DimensionMismatch(format!(
                "y1 {}, y2 {}, z {}x{}",
                n,
                y2.len(),
                z.nrows(),
                z.ncols()
            )));
        }
        check_omega(&omega)?;
        Ok(Self { y1, y2, z, omega, truth: None })
    }

    pub fn with_truth(mut self, truth: Truth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.z.nrows()
    }
}

pub(crate) fn check_omega(omega: &Matrix2<f64>) -> Result<()> {
    let sym = (omega[(0, 1)] - omega[(1, 0)]).abs() <= 1e-12 * omega.abs().max().max(1.0);
    let pd = omega[(0, 0)] > 0.0 && omega.determinant() > 0.0;
    if !sym || !pd {
        return Err(IvError::InvalidInput("omega must be symmetric positive definite".into()));
    }
    Ok(())
}

/// `J x n` matrix with entry `(j, i) = cos(2 pi i j / n)`, both indices from 1.
pub fn cosine_design(n: usize, j: usize) -> Result<DMatrix<f64>> {
    if n == 0 || j == 0 {
        return Err(IvError::InvalidInput("cosine_design needs n >= 1 and J >= 1".into()));
    }
    let nf = n as f64;
    Ok(DMatrix::from_fn(j, n, |r, c| {
        let (jj, ii) = ((r + 1) as f64, (c + 1) as f64);
        (2.0 * PI * ii * jj / nf).cos()
    }))
}

/// Instrument-weighted basis evaluations and responses of the penalized
/// quasi log-likelihood.
///
/// `eta[k]` is `n x J` with rows `eta^i_k`; `zk[k]` holds `Z^i_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralDesign {
    eta: Vec<DMatrix<f64>>,
    zk: Vec<DVector<f64>>,
    penalty: f64,
}

impl GeneralDesign {
    pub fn new(eta: Vec<DMatrix<f64>>, zk: Vec<DVector<f64>>, penalty: f64) -> Result<Self> {
        if eta.is_empty() || eta.len() != zk.len() {
            return Err(IvError::DimensionMismatch("eta and zk need the same K >= 1".into()));
        }
        let (n, j) = (eta[0].nrows(), eta[0].ncols());
        if n == 0 || j == 0 {
            return Err(IvError::DimensionMismatch("empty design".into()));
        }
        if eta.iter().any(|e| e.nrows() != n || e.ncols() != j) || zk.iter().any(|z| z.len() != n) {
            return Err(IvError::DimensionMismatch("inconsistent eta/zk shapes".into()));
        }
        if !(penalty >= 0.0) || !penalty.is_finite() {
            return Err(IvError::InvalidInput("penalty must be finite and >= 0".into()));
        }
        Ok(Self { eta, zk, penalty })
    }

    pub fn eta(&self) -> &[DMatrix<f64>] {
        &self.eta
    }

    pub fn zk(&self) -> &[DVector<f64>] {
        &self.zk
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn n_obs(&self) -> usize {
        self.eta[0].nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.eta[0].ncols()
    }

    pub fn n_instruments(&self) -> usize {
        self.eta.len()
    }

    pub fn with_penalty(&self, penalty: f64) -> Result<Self> {
        Self::new(self.eta.clone(), self.zk.clone(), penalty)
    }
}

/// Assemble `eta[k][i][j] = W^k_i psi_j(X_i)` and `zk[k][i] = W^k_i Y_i - delta_k`.
///
/// `instruments` is `K x n`, `basis` is `J x n`.
pub fn build_general_design(
    instruments: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    responses: &DVector<f64>,
    delta: &DVector<f64>,
    penalty: f64,
) -> Result<GeneralDesign> {
    let (k, n) = instruments.shape();
    if basis.ncols() != n || responses.len() != n || delta.len() != k {
        return Err(IvError::DimensionMismatch(format!(
            "instruments {}x{}, basis {}x{}, responses {}, delta {}",
            k,
            n,
            basis.nrows(),
            basis.ncols(),
            responses.len(),
            delta.len()
        )));
    }
    let j = basis.nrows();
    let eta = (0..k)
        .map(|kk| DMatrix::from_fn(n, j, |i, jj| instruments[(kk, i)] * basis[(jj, i)]))
        .collect();
    let zk = (0..k)
        .map(|kk| DVector::from_fn(n, |i, _| instruments[(kk, i)] * responses[i] - delta[kk]))
        .collect();
    GeneralDesign::new(eta, zk, penalty)
}

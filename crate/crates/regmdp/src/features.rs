//! Linear feature maps over state-action pairs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RegMdpError, Result};

/// Column independence threshold: the smallest singular value of the feature
/// matrix must exceed this.
pub const MIN_SINGULAR_VALUE: f64 = 1e-10;

/// A feature matrix with one row per state-action pair (canonical ordering)
/// and linearly independent columns. The tabular (identity) map is detected
/// and given O(1) dot/update paths, which the sampling loops rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
    tabular: bool,
    min_singular_value: f64,
}

/// On-disk JSON schema for a feature matrix.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureFile {
    /// One row per pair in canonical ordering.
    phi: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn from_matrix(phi: DMatrix<f64>) -> Result<Self> {
        if phi.ncols() == 0 || phi.nrows() == 0 {
            return Err(RegMdpError::Dimension("empty feature matrix".into()));
        }
        if phi.ncols() > phi.nrows() {
            return Err(RegMdpError::Dimension(format!(
                "more features ({}) than pairs ({})",
                phi.ncols(),
                phi.nrows()
            )));
        }
        for &x in phi.iter() {
            if !x.is_finite() {
                return Err(RegMdpError::Domain("non-finite feature entry".into()));
            }
        }
        let min_sv = phi
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_sv <= MIN_SINGULAR_VALUE {
            return Err(RegMdpError::Numeric(format!(
                "feature columns are not independent enough (sigma_min = {min_sv:.3e})"
            )));
        }
        let tabular = phi.is_identity(0.0);
        Ok(Self {
            phi,
            tabular,
            min_singular_value: min_sv,
        })
    }

    /// Identity features: one indicator per pair.
    pub fn tabular(n_pairs: usize) -> Self {
        Self {
            phi: DMatrix::identity(n_pairs, n_pairs),
            tabular: true,
            min_singular_value: 1.0,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: FeatureFile = serde_json::from_str(json)?;
        let rows = file.phi.len();
        if rows == 0 {
            return Err(RegMdpError::Dimension("empty feature matrix".into()));
        }
        let cols = file.phi[0].len();
        if file.phi.iter().any(|r| r.len() != cols) {
            return Err(RegMdpError::Dimension("ragged feature rows".into()));
        }
        Self::from_matrix(DMatrix::from_fn(rows, cols, |i, j| file.phi[i][j]))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    #[inline]
    pub fn n_pairs(&self) -> usize {
        self.phi.nrows()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.phi.ncols()
    }

    #[inline]
    pub fn is_tabular(&self) -> bool {
        self.tabular
    }

    pub fn min_singular_value(&self) -> f64 {
        self.min_singular_value
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// Feature vector of one pair as an owned column.
    pub fn row(&self, pair: usize) -> DVector<f64> {
        self.phi.row(pair).transpose()
    }

    /// `phi(s,a)^T omega`.
    #[inline]
    pub fn dot(&self, pair: usize, omega: &DVector<f64>) -> f64 {
        if self.tabular {
            omega[pair]
        } else {
            let mut acc = 0.0;
            for j in 0..self.phi.ncols() {
                acc += self.phi[(pair, j)] * omega[j];
            }
            acc
        }
    }

    /// `omega += coeff * phi(s,a)`.
    #[inline]
    pub fn add_scaled(&self, omega: &mut DVector<f64>, pair: usize, coeff: f64) {
        if self.tabular {
            omega[pair] += coeff;
        } else {
            for j in 0..self.phi.ncols() {
                omega[j] += coeff * self.phi[(pair, j)];
            }
        }
    }
}

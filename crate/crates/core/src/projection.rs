//! Two-component PCA over the 9-dimensional input vectors.
//!
//! Features mix newtons, meters, counts, and amperes, so each one is
//! z-scored before the eigendecomposition; the model keeps the per-feature
//! mean and standard deviation so projection reproduces the calibration
//! frame exactly. Eigenvector signs follow a fixed convention (the entry of
//! largest magnitude is positive) so that profiles are identical across runs
//! and platforms.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};

/// Features standardized to a variance below this are clamped to it.
pub const STD_EPSILON: f64 = 1e-9;

/// Minimum calibration vectors for a PCA fit.
pub const MIN_DATASET: usize = 10;

/// A 2D point in the calibrated PCA plane (standardized units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub pc1: f64,
    pub pc2: f64,
}

impl PcaPoint {
    pub fn new(pc1: f64, pc2: f64) -> Self {
        Self { pc1, pc2 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.pc1, self.pc2]
    }
}

/// Fitted standardization + top-2 principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub feature_mean: [f64; FEATURE_DIM],
    pub feature_std: [f64; FEATURE_DIM],
    /// Orthonormal rows, sorted by explained variance descending.
    pub components: [[f64; FEATURE_DIM]; 2],
    pub explained_variance: [f64; 2],
}

impl PcaModel {
    /// Projects one input vector into the PCA plane.
    pub fn project(&self, a: &FeatureVector) -> Result<PcaPoint> {
        if a.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::signal("non-finite input to projection"));
        }
        let mut p = [0.0f64; 2];
        for (k, row) in self.components.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..FEATURE_DIM {
                acc += row[j] * ((a.0[j] - self.feature_mean[j]) / self.feature_std[j]);
            }
            p[k] = acc;
        }
        Ok(PcaPoint::new(p[0], p[1]))
    }

    pub fn project_all(&self, data: &[FeatureVector]) -> Result<Vec<PcaPoint>> {
        data.iter().map(|a| self.project(a)).collect()
    }
}

/// Applies the deterministic sign convention in place: the entry of largest
/// magnitude (first such index on ties) is made positive.
pub fn normalize_sign(row: &mut [f64]) {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = j;
        }
    }
    if row[best] < 0.0 {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
}

/// Fits the standardization and the top-2 principal components of `dataset`.
///
/// Near-constant features are clamped to [`STD_EPSILON`] standard deviation
/// (with a warning) rather than failing the fit.
pub fn fit(dataset: &[FeatureVector]) -> Result<PcaModel> {
    let count = dataset.len();
    if count < MIN_DATASET {
        return Err(Error::calibration(format!(
            "PCA needs at least {MIN_DATASET} vectors, got {count}"
        )));
    }

    let nf = count as f64;
    let mut mean = [0.0f64; FEATURE_DIM];
    for v in dataset {
        for j in 0..FEATURE_DIM {
            mean[j] += v.0[j];
        }
    }
    for mj in &mut mean {
        *mj /= nf;
    }

    let mut var = [0.0f64; FEATURE_DIM];
    for v in dataset {
        for j in 0..FEATURE_DIM {
            let d = v.0[j] - mean[j];
            var[j] += d * d;
        }
    }
    let mut std = [0.0f64; FEATURE_DIM];
    for j in 0..FEATURE_DIM {
        let s = (var[j] / (nf - 1.0)).sqrt();
        if s < STD_EPSILON {
            log::warn!("feature {j} is near constant; clamping std to {STD_EPSILON}");
            std[j] = STD_EPSILON;
        } else {
            std[j] = s;
        }
    }

    // Covariance of the standardized data (the correlation matrix when no
    // feature was clamped).
    let mut cov = DMatrix::<f64>::zeros(FEATURE_DIM, FEATURE_DIM);
    for v in dataset {
        let z: [f64; FEATURE_DIM] =
            std::array::from_fn(|j| (v.0[j] - mean[j]) / std[j]);
        for r in 0..FEATURE_DIM {
            for c in r..FEATURE_DIM {
                cov[(r, c)] += z[r] * z[c];
            }
        }
    }
    for r in 0..FEATURE_DIM {
        for c in r..FEATURE_DIM {
            let v = cov[(r, c)] / (nf - 1.0);
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..FEATURE_DIM).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let mut components = [[0.0f64; FEATURE_DIM]; 2];
    let mut explained = [0.0f64; 2];
    for k in 0..2 {
        let idx = order[k];
        explained[k] = eigen.eigenvalues[idx].max(0.0);
        for j in 0..FEATURE_DIM {
            components[k][j] = eigen.eigenvectors[(j, idx)];
        }
        normalize_sign(&mut components[k]);
    }

    Ok(PcaModel {
        feature_mean: mean,
        feature_std: std,
        components,
        explained_variance: explained,
    })
}

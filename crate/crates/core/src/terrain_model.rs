//! Per terrain-gait Gaussian ellipse models and the derived zones.
//!
//! A cluster of PCA points collected while walking one gait on one terrain is
//! summarized by its 2D Gaussian: mean, covariance, and a squared-Mahalanobis
//! boundary level `chi2`. Membership is boundary inclusive
//! (`mahalanobis2(p) <= chi2`) and the enclosed area is
//! `pi * chi2 * sqrt(det(cov))`.
//!
//! From the twelve fitted ellipses the model keeps, per terrain, the gait
//! whose ellipse minimizes area / v_max (the high-stability ellipse). The
//! stable-terrain winner is the low variance zone (LVZ); the four winners
//! together form the stable zone (SZ); an inflated Gaussian over the pooled
//! SZ points forms the outer safety region that triggers halts.

use serde::{Deserialize, Serialize};

use crate::config::{nominal_current_rank, Config};
use crate::error::{Error, Result};
use crate::projection::PcaPoint;
use crate::telemetry::Gait;

/// Covariance condition number beyond which the fit regularizes.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Relative slack on the membership boundary so that points sampled onto the
/// boundary stay members despite float rounding.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Minimum points for an ellipse fit.
pub const MIN_CLUSTER: usize = 20;

/// One terrain-gait cluster's characteristic ellipse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGaitEllipse {
    pub id: String,
    pub terrain: String,
    pub gait: Gait,
    pub mean: [f64; 2],
    /// Symmetric positive-definite 2x2 covariance.
    pub cov: [[f64; 2]; 2],
    /// Squared-Mahalanobis boundary level.
    pub chi2: f64,
    pub area: f64,
    /// Maximum commanded speed of the gait (m/s).
    pub v_max: f64,
}

fn det2(cov: &[[f64; 2]; 2]) -> f64 {
    cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0]
}

/// Eigenvalues of a symmetric 2x2 matrix, descending.
pub fn eigenvalues2(cov: &[[f64; 2]; 2]) -> (f64, f64) {
    let tr = cov[0][0] + cov[1][1];
    let det = det2(cov);
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 + disc, tr / 2.0 - disc)
}

impl TerrainGaitEllipse {
    /// Squared Mahalanobis distance of `p` from the ellipse center.
    pub fn mahalanobis2(&self, p: &PcaPoint) -> f64 {
        let dx = p.pc1 - self.mean[0];
        let dy = p.pc2 - self.mean[1];
        let det = det2(&self.cov);
        // inv(cov) = [[c11, -c01], [-c10, c00]] / det
        (self.cov[1][1] * dx * dx - 2.0 * self.cov[0][1] * dx * dy
            + self.cov[0][0] * dy * dy)
            / det
    }

    /// Boundary-inclusive membership.
    pub fn contains(&self, p: &PcaPoint) -> bool {
        self.mahalanobis2(p) <= self.chi2 * (1.0 + BOUNDARY_TOL)
    }

    /// `k` points sampled uniformly in angle on the chi2 boundary.
    pub fn boundary_points(&self, k: usize) -> Vec<PcaPoint> {
        // x = mean + sqrt(chi2) * L * [cos t, sin t], L = chol(cov).
        let a = self.cov[0][0];
        let b = self.cov[0][1];
        let c = self.cov[1][1];
        let l00 = a.sqrt();
        let l10 = b / l00;
        let l11 = (c - l10 * l10).max(0.0).sqrt();
        let r = self.chi2.sqrt();
        (0..k)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                let (u, v) = (theta.cos(), theta.sin());
                PcaPoint::new(
                    self.mean[0] + r * l00 * u,
                    self.mean[1] + r * (l10 * u + l11 * v),
                )
            })
            .collect()
    }

    /// Semi-axis lengths (major, minor) and the major axis angle in radians.
    /// Used by plotting.
    pub fn axes(&self) -> (f64, f64, f64) {
        let (l1, l2) = eigenvalues2(&self.cov);
        let angle = if self.cov[0][1].abs() < 1e-300 && self.cov[0][0] >= self.cov[1][1] {
            0.0
        } else if self.cov[0][1].abs() < 1e-300 {
            std::f64::consts::FRAC_PI_2
        } else {
            (l1 - self.cov[0][0]).atan2(self.cov[0][1])
        };
        ((self.chi2 * l1).sqrt(), (self.chi2 * l2).sqrt(), angle)
    }
}

fn sample_mean_cov(points: &[PcaPoint]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mut mean = [0.0f64; 2];
    for p in points {
        mean[0] += p.pc1;
        mean[1] += p.pc2;
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut cov = [[0.0f64; 2]; 2];
    for p in points {
        let dx = p.pc1 - mean[0];
        let dy = p.pc2 - mean[1];
        cov[0][0] += dx * dx;
        cov[0][1] += dx * dy;
        cov[1][1] += dy * dy;
    }
    cov[0][0] /= n - 1.0;
    cov[0][1] /= n - 1.0;
    cov[1][1] /= n - 1.0;
    cov[1][0] = cov[0][1];
    (mean, cov)
}

/// Regularizes a near-singular covariance by adding `1e-6 * trace / 2` to the
/// diagonal. Errors if the result is still not positive definite.
fn condition_cov(mut cov: [[f64; 2]; 2], context: &str) -> Result<[[f64; 2]; 2]> {
    let (l1, l2) = eigenvalues2(&cov);
    if l2 <= 0.0 || l1 / l2 > CONDITION_LIMIT {
        let lambda = 1e-6 * (cov[0][0] + cov[1][1]) / 2.0;
        log::warn!("degenerate covariance for {context}; regularizing with lambda={lambda:e}");
        cov[0][0] += lambda;
        cov[1][1] += lambda;
        let (_, l2) = eigenvalues2(&cov);
        if l2 <= 0.0 {
            return Err(Error::calibration(format!(
                "covariance for {context} is degenerate beyond repair"
            )));
        }
    }
    Ok(cov)
}

/// Fits one terrain-gait ellipse from its cluster of PCA points.
pub fn fit_ellipse(
    points: &[PcaPoint],
    terrain: &str,
    gait: Gait,
    chi2: f64,
    v_max: f64,
) -> Result<TerrainGaitEllipse> {
    if points.len() < MIN_CLUSTER {
        return Err(Error::calibration(format!(
            "cluster {terrain}/{gait} has {} points, needs {MIN_CLUSTER}",
            points.len()
        )));
    }
    let (mean, cov) = sample_mean_cov(points);
    let cov = condition_cov(cov, &format!("{terrain}/{gait}"))?;
    let area = std::f64::consts::PI * chi2 * det2(&cov).sqrt();
    Ok(TerrainGaitEllipse {
        id: format!("{terrain}-{gait}"),
        terrain: terrain.to_string(),
        gait,
        mean,
        cov,
        chi2,
        area,
        v_max,
    })
}

/// The outer safety region: same shape as an ellipse, no gait attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSafe {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
}

impl GammaSafe {
    pub fn mahalanobis2(&self, p: &PcaPoint) -> f64 {
        let dx = p.pc1 - self.mean[0];
        let dy = p.pc2 - self.mean[1];
        (self.cov[1][1] * dx * dx - 2.0 * self.cov[0][1] * dx * dy
            + self.cov[0][0] * dy * dy)
            / det2(&self.cov)
    }

    pub fn contains(&self, p: &PcaPoint) -> bool {
        self.mahalanobis2(p) <= self.chi2 * (1.0 + BOUNDARY_TOL)
    }
}

/// Per-terrain high-stability winners.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Winner ellipse id per terrain, ordered like the configured classes.
    pub sz_ids: Vec<String>,
    /// The stable-terrain winner.
    pub lvz_id: String,
}

/// Selects, per terrain, the gait whose ellipse minimizes area / v_max.
/// Ties break toward smaller area, then toward the lower nominal-current
/// gait. Requires every (terrain, gait) pair to be present.
pub fn select_high_stability(
    ellipses: &[TerrainGaitEllipse],
    cfg: &Config,
) -> Result<Selection> {
    let mut sz_ids = Vec::with_capacity(cfg.terrain_classes.len());
    let mut lvz_id = None;
    for terrain in &cfg.terrain_classes {
        let mut best: Option<&TerrainGaitEllipse> = None;
        for gait in Gait::ALL {
            let e = ellipses
                .iter()
                .find(|e| &e.terrain == terrain && e.gait == gait)
                .ok_or_else(|| {
                    Error::calibration(format!("missing terrain-gait pair {terrain}/{gait}"))
                })?;
            let better = match best {
                None => true,
                Some(b) => {
                    let key = |x: &TerrainGaitEllipse| {
                        (x.area / x.v_max, x.area, nominal_current_rank(x.gait))
                    };
                    let (er, ea, ec) = key(e);
                    let (br, ba, bc) = key(b);
                    (er, ea, ec) < (br, ba, bc)
                }
            };
            if better {
                best = Some(e);
            }
        }
        let winner = best.expect("three gaits were checked");
        if terrain == &cfg.stable_terrain {
            lvz_id = Some(winner.id.clone());
        }
        sz_ids.push(winner.id.clone());
    }
    let lvz_id = lvz_id
        .ok_or_else(|| Error::calibration("stable terrain missing from classes"))?;
    Ok(Selection { sz_ids, lvz_id })
}

/// Fits the outer safety region over the pooled SZ calibration points, then
/// inflates its chi2 multiplicatively until every boundary sample of every SZ
/// ellipse is contained.
pub fn build_gamma_safe(
    sz_points: &[PcaPoint],
    sz_ellipses: &[&TerrainGaitEllipse],
    cfg: &Config,
) -> Result<GammaSafe> {
    if sz_points.len() < MIN_CLUSTER {
        return Err(Error::calibration("too few pooled points for the safety region"));
    }
    let (mean, cov) = sample_mean_cov(sz_points);
    let cov = condition_cov(cov, "gamma_safe")?;
    let mut gamma = GammaSafe { mean, cov, chi2: cfg.chi2_gamma };

    let boundaries: Vec<PcaPoint> = sz_ellipses
        .iter()
        .flat_map(|e| e.boundary_points(cfg.boundary_samples))
        .collect();
    let mut rounds = 0;
    while boundaries.iter().any(|p| !gamma.contains(p)) {
        if rounds >= cfg.gamma_max_inflations {
            return Err(Error::calibration(format!(
                "safety region did not cover the stable zone after {rounds} inflations"
            )));
        }
        gamma.chi2 *= cfg.gamma_inflation;
        rounds += 1;
    }
    Ok(gamma)
}

/// The runtime zone view the gait policy consumes: the four SZ ellipses
/// (LVZ first) and the outer safety region.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSet {
    sz: Vec<TerrainGaitEllipse>,
    gamma_safe: GammaSafe,
}

impl ZoneSet {
    /// `sz` must list the LVZ first; every SZ boundary must lie inside the
    /// safety region.
    pub fn new(sz: Vec<TerrainGaitEllipse>, gamma_safe: GammaSafe) -> Result<Self> {
        if sz.is_empty() {
            return Err(Error::calibration("stable zone is empty"));
        }
        for e in &sz {
            for p in e.boundary_points(64) {
                if !gamma_safe.contains(&p) {
                    return Err(Error::calibration(format!(
                        "ellipse {} is not contained in the safety region",
                        e.id
                    )));
                }
            }
        }
        Ok(Self { sz, gamma_safe })
    }

    pub fn sz(&self) -> &[TerrainGaitEllipse] {
        &self.sz
    }

    pub fn lvz(&self) -> &TerrainGaitEllipse {
        &self.sz[0]
    }

    pub fn gamma_safe(&self) -> &GammaSafe {
        &self.gamma_safe
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sz.iter().position(|e| e.id == id)
    }
}

//! Calibration profile persistence.
//!
//! A profile bundles everything a runtime stream needs: the PCA model, the
//! twelve terrain-gait ellipses, the selected stable-zone ids, the outer
//! safety region, and the calibrated safety thresholds. The file is JSON
//! with a SHA-256 checksum over the canonical serialization of the payload
//! (every field except `checksum` itself, in declaration order), so a
//! corrupted or hand-edited profile is rejected on load.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::projection::PcaModel;
use crate::terrain_model::{GammaSafe, TerrainGaitEllipse, ZoneSet};

pub const PROFILE_VERSION: u32 = 1;

/// Calibrated safety parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyCalibration {
    /// PC2 shift magnitude treated as certain crash risk.
    pub pc2_threshold: f64,
    /// Entrapment effort normalizer: 95th percentile of |hip_fy| over the
    /// calibration logs (N).
    pub f_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub version: u32,
    /// Number of principal components kept (always 2 in this version).
    pub k: u32,
    pub feature_mean: [f64; FEATURE_DIM],
    pub feature_std: [f64; FEATURE_DIM],
    pub components: [[f64; FEATURE_DIM]; 2],
    pub explained_variance: [f64; 2],
    pub ellipses: Vec<TerrainGaitEllipse>,
    pub gamma_safe: GammaSafe,
    pub lvz_id: String,
    pub sz_ids: Vec<String>,
    pub safety: SafetyCalibration,
    pub checksum: String,
}

/// Shadow of the profile without the checksum; its canonical JSON is what
/// gets hashed.
#[derive(Serialize)]
struct Payload<'a> {
    version: u32,
    k: u32,
    feature_mean: &'a [f64; FEATURE_DIM],
    feature_std: &'a [f64; FEATURE_DIM],
    components: &'a [[f64; FEATURE_DIM]; 2],
    explained_variance: &'a [f64; 2],
    ellipses: &'a Vec<TerrainGaitEllipse>,
    gamma_safe: &'a GammaSafe,
    lvz_id: &'a String,
    sz_ids: &'a Vec<String>,
    safety: &'a SafetyCalibration,
}

impl CalibrationProfile {
    pub fn compute_checksum(&self) -> String {
        let payload = Payload {
            version: self.version,
            k: self.k,
            feature_mean: &self.feature_mean,
            feature_std: &self.feature_std,
            components: &self.components,
            explained_variance: &self.explained_variance,
            ellipses: &self.ellipses,
            gamma_safe: &self.gamma_safe,
            lvz_id: &self.lvz_id,
            sz_ids: &self.sz_ids,
            safety: &self.safety,
        };
        let canonical = serde_json::to_string(&payload).expect("profile serialization");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seals the checksum field. Call after any mutation.
    pub fn seal(&mut self) {
        self.checksum = self.compute_checksum();
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("profile serialization");
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let profile: CalibrationProfile = serde_json::from_str(&text)
            .map_err(|e| Error::schema(format!("profile: {e}")))?;
        if profile.version != PROFILE_VERSION {
            return Err(Error::schema(format!(
                "profile version {} unsupported (expected {PROFILE_VERSION})",
                profile.version
            )));
        }
        let expect = profile.compute_checksum();
        if profile.checksum != expect {
            return Err(Error::schema(format!(
                "profile checksum mismatch: stored {}, computed {expect}",
                profile.checksum
            )));
        }
        Ok(profile)
    }

    pub fn pca_model(&self) -> PcaModel {
        PcaModel {
            feature_mean: self.feature_mean,
            feature_std: self.feature_std,
            components: self.components,
            explained_variance: self.explained_variance,
        }
    }

    pub fn ellipse(&self, id: &str) -> Option<&TerrainGaitEllipse> {
        self.ellipses.iter().find(|e| e.id == id)
    }

    /// Builds the runtime zone view: the SZ ellipses with the LVZ first,
    /// plus the safety region.
    pub fn zone_set(&self) -> Result<ZoneSet> {
        let mut sz = Vec::with_capacity(self.sz_ids.len());
        let lvz = self
            .ellipse(&self.lvz_id)
            .ok_or_else(|| Error::calibration(format!("LVZ {} not in profile", self.lvz_id)))?;
        sz.push(lvz.clone());
        for id in &self.sz_ids {
            if id == &self.lvz_id {
                continue;
            }
            let e = self
                .ellipse(id)
                .ok_or_else(|| Error::calibration(format!("SZ ellipse {id} not in profile")))?;
            sz.push(e.clone());
        }
        ZoneSet::new(sz, self.gamma_safe.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::Gait;

    pub(crate) fn toy_profile() -> CalibrationProfile {
        let ellipse = |id: &str, gait: Gait, mean: [f64; 2]| TerrainGaitEllipse {
            id: id.into(),
            terrain: id.trim_end_matches(|c: char| c != '-').trim_end_matches('-').into(),
            gait,
            mean,
            cov: [[1.0, 0.1], [0.1, 1.0]],
            chi2: 5.991,
            area: std::f64::consts::PI * 5.991 * (1.0f64 - 0.01).sqrt(),
            v_max: 1.0,
        };
        let mut profile = CalibrationProfile {
            version: PROFILE_VERSION,
            k: 2,
            feature_mean: [0.1; FEATURE_DIM],
            feature_std: [1.0; FEATURE_DIM],
            components: [
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ],
            explained_variance: [2.0, 1.0],
            ellipses: vec![
                ellipse("solid-flat-trot", Gait::Trot, [0.0, 0.0]),
                ellipse("granular-crawl", Gait::Crawl, [4.0, 0.0]),
            ],
            gamma_safe: GammaSafe {
                mean: [2.0, 0.0],
                cov: [[8.0, 0.0], [0.0, 8.0]],
                chi2: 13.82,
            },
            lvz_id: "solid-flat-trot".into(),
            sz_ids: vec!["solid-flat-trot".into(), "granular-crawl".into()],
            safety: SafetyCalibration { pc2_threshold: 0.5, f_ref: 8.0 },
            checksum: String::new(),
        };
        profile.seal();
        profile
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.json");
        let profile = toy_profile();
        profile.save(&path).unwrap();
        let back = CalibrationProfile::load(&path).unwrap();
        assert_eq!(back, profile);
        // Numeric fields round-trip bit for bit.
        assert_eq!(back.feature_mean[0].to_bits(), profile.feature_mean[0].to_bits());
        assert_eq!(
            back.ellipses[0].cov[0][1].to_bits(),
            profile.ellipses[0].cov[0][1].to_bits()
        );
    }

    #[test]
    fn missing_components_field_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        let mut value: serde_json::Value =
            serde_json::to_value(toy_profile()).unwrap();
        value.as_object_mut().unwrap().remove("components");
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = CalibrationProfile::load(&path).unwrap_err();
        assert!(err.to_string().contains("components"), "{err}");
    }

    #[test]
    fn tampered_numeric_field_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tampered.json");
        let mut value: serde_json::Value = serde_json::to_value(toy_profile()).unwrap();
        value["explained_variance"][0] = serde_json::json!(99.0);
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        let err = CalibrationProfile::load(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("old.json");
        let mut profile = toy_profile();
        profile.version = 0;
        profile.seal();
        profile.save(&path).unwrap();
        let err = CalibrationProfile::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn zone_set_puts_lvz_first() {
        let profile = toy_profile();
        let zones = profile.zone_set().unwrap();
        assert_eq!(zones.lvz().id, "solid-flat-trot");
        assert_eq!(zones.sz().len(), 2);
    }
}

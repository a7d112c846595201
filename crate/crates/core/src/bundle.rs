//! Self-describing model archive: a small header, a bincode payload with
//! the fitted featurizer and stacked ensemble, and a trailing content
//! checksum. Loadable without the original pipeline config.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ensemble::StackedEnsemble;
use crate::featurize::Featurizer;

const MAGIC: &[u8; 4] = b"ADSB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model bundle (bad magic)")]
    BadMagic,
    #[error("bundle format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("bundle corrupted: {0}")]
    Integrity(String),
    #[error("bundle encoding failed: {0}")]
    Encode(String),
}

/// Everything needed to featurize new records and predict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub featurizer: Featurizer,
    pub ensemble: StackedEnsemble,
    /// SHA-256 of the gazetteer snapshot the pipeline ran with.
    pub gazetteer_fingerprint: String,
    /// SHA-256 of the effective pipeline config.
    pub config_fingerprint: String,
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), BundleError> {
    let payload = bincode::serialize(bundle).map_err(|e| BundleError::Encode(e.to_string()))?;
    let digest = Sha256::digest(&payload);
    let io_err = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(payload.len() as u64).to_le_bytes()).map_err(io_err)?;
    out.write_all(&payload).map_err(io_err)?;
    out.write_all(&digest).map_err(io_err)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, BundleError> {
    let io_err = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| BundleError::Integrity("file shorter than header".into()))?;
    if &magic != MAGIC {
        return Err(BundleError::BadMagic);
    }
    let mut version = [0u8; 4];
    file.read_exact(&mut version)
        .map_err(|_| BundleError::Integrity("missing version".into()))?;
    let found = u32::from_le_bytes(version);
    if found != FORMAT_VERSION {
        return Err(BundleError::Version {
            found,
            supported: FORMAT_VERSION,
        });
    }
    let mut len = [0u8; 8];
    file.read_exact(&mut len)
        .map_err(|_| BundleError::Integrity("missing payload length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut payload = vec![0u8; len];
    file.read_exact(&mut payload)
        .map_err(|_| BundleError::Integrity("payload truncated".into()))?;
    let mut digest = [0u8; 32];
    file.read_exact(&mut digest)
        .map_err(|_| BundleError::Integrity("checksum missing".into()))?;
    let computed = Sha256::digest(&payload);
    if computed.as_slice() != digest {
        return Err(BundleError::Integrity("checksum mismatch".into()));
    }
    bincode::deserialize(&payload).map_err(|e| BundleError::Integrity(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{train_stack, StackConfig};
    use crate::extract::HouseType;
    use crate::featurize::{Featurizer, FeaturizerConfig};
    use crate::learners::LearnerSpec;
    use crate::types::Label;

    fn tiny_bundle() -> ModelBundle {
        let records: Vec<crate::extract::AdRecord> = (0..30)
            .map(|i| crate::extract::AdRecord {
                id: format!("r{i}"),
                description: format!("bán nhà số {i} giá tốt"),
                price: 1000.0 + 700.0 * (i % 9) as f64,
                area: 50.0 + (i % 7) as f64 * 10.0,
                house_type: if i % 2 == 0 { HouseType::Frontage } else { HouseType::Alley },
                road: format!("road {}", i % 4),
                district: "1".into(),
                road_width: if i % 2 == 0 { 20.0 } else { 4.0 },
                road_first: "a".into(),
                road_second: "b".into(),
                road_third: "c".into(),
                label: None,
            })
            .collect();
        let (x, featurizer) = Featurizer::fit_transform(&records, FeaturizerConfig::default()).unwrap();
        let y: Vec<Label> = (0..30)
            .map(|i| if i % 3 == 0 { Label::Fake } else { Label::Real })
            .collect();
        let cfg = StackConfig {
            roster: vec![LearnerSpec::preset("decision_tree").unwrap()],
            validation_fraction: 0.2,
            selection_iterations: 5,
            oof_folds: 3,
            seed: 1,
        };
        let ensemble = train_stack(&x, &y, &cfg).unwrap();
        ModelBundle {
            featurizer,
            ensemble,
            gazetteer_fingerprint: "g".into(),
            config_fingerprint: "c".into(),
        }
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bundle");
        let b = tiny_bundle();
        save_bundle(&b, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();

        let records: Vec<crate::extract::AdRecord> = (0..10)
            .map(|i| crate::extract::AdRecord {
                id: format!("q{i}"),
                description: "bán nhà giá tốt".into(),
                price: 1500.0 + i as f64 * 321.0,
                area: 61.0,
                house_type: HouseType::Alley,
                road: "road 1".into(),
                district: "1".into(),
                road_width: 4.0,
                road_first: "a".into(),
                road_second: "b".into(),
                road_third: "c".into(),
                label: None,
            })
            .collect();
        let xa = b.featurizer.transform(&records).unwrap();
        let xb = loaded.featurizer.transform(&records).unwrap();
        assert_eq!(xa.data(), xb.data());
        let pa = b.ensemble.predict_proba(&xa).unwrap();
        let pb = loaded.ensemble.predict_proba(&xb).unwrap();
        assert_eq!(pa, pb, "bit-identical predictions after round trip");
    }

    #[test]
    fn truncated_file_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bundle");
        save_bundle(&tiny_bundle(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
        assert!(matches!(load_bundle(&path), Err(BundleError::Integrity(_))));
    }

    #[test]
    fn corrupted_payload_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bundle");
        save_bundle(&tiny_bundle(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_bundle(&path), Err(BundleError::Integrity(_))));
    }

    #[test]
    fn future_version_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bundle");
        save_bundle(&tiny_bundle(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_bundle(&path) {
            Err(BundleError::Version { found: 99, supported: 1 }) => {}
            other => panic!("expected Version error, got {other:?}"),
        }
    }
}

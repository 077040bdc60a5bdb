//! Checkpoint directories: `model.params` (binary tensors) and
//! `manifest.json`, plus an optional per-epoch `metrics.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{AnnotatedPatch, PseudoMask};
use crate::error::{Error, Result};

use super::network::Network;
use super::spec::{hex, NetworkSpec};

pub const PARAMS_FILE: &str = "model.params";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";

const MAGIC: &[u8; 8] = b"CCDPARAM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format_version: u32,
    pub network: String,
    pub architecture_fingerprint: String,
    pub parameter_checksum: String,
    pub spec: NetworkSpec,
    pub training: serde_json::Value,
    pub data_fingerprint: String,
    pub metrics: BTreeMap<String, f64>,
    pub crate_version: String,
}

/// Trained parameters keyed by `<layer>.weight` / `<layer>.bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterArchive {
    pub manifest: ArchiveManifest,
    pub tensors: BTreeMap<String, Vec<f32>>,
}

impl ParameterArchive {
    pub fn from_network(
        network: &Network,
        training: serde_json::Value,
        data_fingerprint: String,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            manifest: ArchiveManifest {
                format_version: FORMAT_VERSION,
                network: network.spec().name.clone(),
                architecture_fingerprint: network.spec().fingerprint(),
                parameter_checksum: network.checksum(),
                spec: network.spec().clone(),
                training,
                data_fingerprint,
                metrics,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
            },
            tensors: network.named_tensors(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.manifest.architecture_fingerprint
    }

    /// Rebuilds the network, refusing archives made for another architecture.
    pub fn to_network(&self, spec: &NetworkSpec) -> Result<Network> {
        let expected = spec.fingerprint();
        if expected != self.manifest.architecture_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                found: self.manifest.architecture_fingerprint.clone(),
            });
        }
        let mut net = Network::zeros(spec.clone())?;
        net.load_named_tensors(&self.tensors)?;
        Ok(net)
    }

    /// Rebuilds the network from the spec stored in the manifest.
    pub fn network(&self) -> Result<Network> {
        self.to_network(&self.manifest.spec)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(PARAMS_FILE);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, values) in &self.tensors {
            bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
            bytes.extend_from_slice(name.as_bytes());
            bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ArchiveManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if manifest.spec.fingerprint() != manifest.architecture_fingerprint {
            return Err(Error::Archive(format!(
                "{}: stored spec does not match its fingerprint",
                path.display()
            )));
        }
        let path = dir.join(PARAMS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let tensors = decode_params(&bytes).map_err(|detail| Error::Archive(format!("{}: {detail}", path.display())))?;
        Ok(Self { manifest, tensors })
    }
}

fn decode_params(bytes: &[u8]) -> std::result::Result<BTreeMap<String, Vec<f32>>, String> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        if cursor.len() < n {
            return Err("truncated parameter file".into());
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|e| e.to_string())?;
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(len.checked_mul(4).ok_or("tensor too large")?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.insert(name, values);
    }
    if !cursor.is_empty() {
        return Err("trailing bytes after tensors".into());
    }
    Ok(out)
}

/// Column-oriented per-epoch training log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrainingLog {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "log row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Content hash of a patch set (ids, pixels and annotations).
pub fn dataset_fingerprint(patches: &[AnnotatedPatch]) -> String {
    let mut h = Sha256::new();
    for p in patches {
        h.update(p.id.as_bytes());
        h.update([0]);
        h.update((p.width() as u64).to_le_bytes());
        h.update((p.height() as u64).to_le_bytes());
        for v in p.image.data() {
            h.update(v.to_le_bytes());
        }
        for d in &p.dots {
            h.update(d.x.to_le_bytes());
            h.update(d.y.to_le_bytes());
            h.update([d.category.index() as u8]);
        }
    }
    hex(&h.finalize())
}

pub fn mask_fingerprint(masks: &[PseudoMask]) -> String {
    let mut h = Sha256::new();
    for m in masks {
        h.update((m.mask.width() as u64).to_le_bytes());
        h.update((m.mask.height() as u64).to_le_bytes());
        h.update((m.count as u64).to_le_bytes());
        h.update(m.mask.data());
    }
    hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::counter_spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::glorot(counter_spec(16).unwrap(), &mut rng).unwrap();
        let mut metrics = BTreeMap::new();
        metrics.insert("val_pearson".to_string(), 0.97);
        let archive = ParameterArchive::from_network(&net, serde_json::json!({"lr": 1e-4}), "abc".into(), metrics);
        let dir = tempfile::tempdir().unwrap();
        archive.save(dir.path()).unwrap();
        let loaded = ParameterArchive::load(dir.path()).unwrap();
        assert_eq!(loaded, archive);
        assert_eq!(loaded.network().unwrap().checksum(), net.checksum());
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let net = Network::zeros(counter_spec(16).unwrap()).unwrap();
        let archive = ParameterArchive::from_network(&net, serde_json::Value::Null, String::new(), BTreeMap::new());
        let err = archive.to_network(&counter_spec(32).unwrap()).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn corrupt_params_are_rejected() {
        let net = Network::zeros(counter_spec(16).unwrap()).unwrap();
        let archive = ParameterArchive::from_network(&net, serde_json::Value::Null, String::new(), BTreeMap::new());
        let dir = tempfile::tempdir().unwrap();
        archive.save(dir.path()).unwrap();
        let path = dir.path().join(PARAMS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(ParameterArchive::load(dir.path()), Err(Error::Archive(_))));
    }

    #[test]
    fn log_csv() {
        let mut log = TrainingLog::new(&["epoch", "loss"]);
        log.push(vec![1.0, 0.5]);
        assert_eq!(log.to_csv(), "epoch,loss\n1,0.5\n");
        assert_eq!(log.column("loss"), Some(vec![0.5]));
    }
}

//! On-disk dataset: `manifest.json` plus `samples.bin` with fixed-size records.
//!
//! Each record is little-endian IEEE-754, complex entries interleaved
//! `(re, im)`, matrices row-major:
//!
//! | field       | type             | bytes |
//! |-------------|------------------|-------|
//! | `G`         | complex M×K      | 16MK  |
//! | `G_pinv`    | complex M×K      | 16MK  |
//! | `Delta_olp` | complex M×K      | 16MK  |
//! | `t_star`    | f64              | 8     |
//! | `seed`      | u64              | 8     |
//!
//! `G_pinv` is `G^{T*}(G^T G^{T*})^{-1}`, the right inverse of `G^T`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use olpkit_core::channel::EnvironmentSpec;
use olpkit_core::linalg::{c64, cabs, CMatrix};
use olpkit_core::olp::SolverConfig;
use olpkit_core::system::{min_sinr, ChannelMatrix, Precoder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DATASET_FORMAT_VERSION: &str = "olpkit-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.bin";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported dataset format version `{found}` (expected `{DATASET_FORMAT_VERSION}`)")]
    Version { found: String },
    #[error("{SAMPLES_FILE} is truncated: manifest promises {expected} records ({expected_bytes} bytes), file has {found_bytes} bytes")]
    Truncated {
        expected: usize,
        expected_bytes: u64,
        found_bytes: u64,
    },
    #[error("{SAMPLES_FILE} has {extra} bytes beyond the {expected} records in the manifest")]
    TrailingData { expected: usize, extra: u64 },
    #[error("checksum mismatch for {file}: manifest has {expected}, file hashes to {found}")]
    Checksum {
        file: String,
        expected: String,
        found: String,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub environment: EnvironmentSpec,
    #[serde(rename = "M")]
    pub num_aps: usize,
    #[serde(rename = "K")]
    pub num_ues: usize,
    pub rho_d: f64,
    pub num_samples: usize,
    pub solver: SolverConfig,
    pub seed_base: u64,
    pub created_by: String,
    /// File name to lowercase hex SHA-256.
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn new(env: EnvironmentSpec, num_aps: usize, num_ues: usize, solver: SolverConfig, seed_base: u64) -> Self {
        Self {
            format_version: DATASET_FORMAT_VERSION.into(),
            rho_d: env.rho_d,
            environment: env,
            num_aps,
            num_ues,
            num_samples: 0,
            solver,
            seed_base,
            created_by: format!("olpkit {}", env!("CARGO_PKG_VERSION")),
            checksums: BTreeMap::new(),
        }
    }

    pub fn record_size(&self) -> usize {
        record_size(self.num_aps, self.num_ues)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub g: CMatrix,
    pub g_pinv: CMatrix,
    pub delta_olp: CMatrix,
    pub t_star: f64,
    pub seed: u64,
}

impl SampleRecord {
    /// Channel carrying the stored pseudo-inverse.
    pub fn channel(&self) -> ChannelMatrix {
        ChannelMatrix::with_pinv(self.g.clone(), self.g_pinv.clone())
            .expect("record matrices share one shape")
    }

    pub fn precoder(&self) -> Precoder {
        Precoder(self.delta_olp.clone())
    }
}

pub fn record_size(num_aps: usize, num_ues: usize) -> usize {
    48 * num_aps * num_ues + 16
}

fn put_matrix(buf: &mut Vec<u8>, a: &CMatrix) {
    for z in a.as_slice() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
}

pub fn encode_record(rec: &SampleRecord, buf: &mut Vec<u8>) {
    put_matrix(buf, &rec.g);
    put_matrix(buf, &rec.g_pinv);
    put_matrix(buf, &rec.delta_olp);
    buf.extend_from_slice(&rec.t_star.to_le_bytes());
    buf.extend_from_slice(&rec.seed.to_le_bytes());
}

fn take8(bytes: &[u8], at: &mut usize) -> [u8; 8] {
    let out = bytes[*at..*at + 8].try_into().expect("8-byte slice");
    *at += 8;
    out
}

fn take_matrix(bytes: &[u8], at: &mut usize, rows: usize, cols: usize) -> CMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            let re = f64::from_le_bytes(take8(bytes, at));
            let im = f64::from_le_bytes(take8(bytes, at));
            c64(re, im)
        })
        .collect();
    CMatrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Decodes one record of exactly `record_size(num_aps, num_ues)` bytes.
pub fn decode_record(bytes: &[u8], num_aps: usize, num_ues: usize) -> Result<SampleRecord> {
    if bytes.len() != record_size(num_aps, num_ues) {
        return Err(DatasetError::Invalid(format!(
            "record is {} bytes, expected {}",
            bytes.len(),
            record_size(num_aps, num_ues)
        )));
    }
    let mut at = 0;
    let g = take_matrix(bytes, &mut at, num_aps, num_ues);
    let g_pinv = take_matrix(bytes, &mut at, num_aps, num_ues);
    let delta_olp = take_matrix(bytes, &mut at, num_aps, num_ues);
    let t_star = f64::from_le_bytes(take8(bytes, &mut at));
    let seed = u64::from_le_bytes(take8(bytes, &mut at));
    Ok(SampleRecord {
        g,
        g_pinv,
        delta_olp,
        t_star,
        seed,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn manifest_json(manifest: &DatasetManifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    out.push(b'\n');
    out
}

/// Writes `records` under `dir`, filling in `num_samples` and the checksum.
/// Returns the manifest as written.
pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, records: &[SampleRecord]) -> Result<DatasetManifest> {
    let (m, k) = (manifest.num_aps, manifest.num_ues);
    let mut blob = Vec::with_capacity(records.len() * record_size(m, k));
    for (i, rec) in records.iter().enumerate() {
        for (name, a) in [("G", &rec.g), ("G_pinv", &rec.g_pinv), ("Delta_olp", &rec.delta_olp)] {
            if a.shape() != (m, k) {
                return Err(DatasetError::Invalid(format!(
                    "record {i}: {name} is {:?}, manifest says {m}x{k}",
                    a.shape()
                )));
            }
        }
        encode_record(rec, &mut blob);
    }
    let mut manifest = manifest.clone();
    manifest.num_samples = records.len();
    manifest.checksums = BTreeMap::from([(SAMPLES_FILE.to_string(), sha256_hex(&blob))]);

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let samples = dir.join(SAMPLES_FILE);
    fs::write(&samples, &blob).map_err(io_err(&samples))?;
    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(&manifest_json(&manifest)).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Parses `manifest.json`, checking the format version before anything else.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(io_err(&path))?;
    let raw: serde_json::Value = serde_json::from_slice(&text)?;
    let version = raw.get("format_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if version != DATASET_FORMAT_VERSION {
        return Err(DatasetError::Version {
            found: version.to_string(),
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(raw)?;
    if manifest.num_aps == 0 || manifest.num_ues == 0 {
        return Err(DatasetError::Invalid("M and K must be positive".into()));
    }
    Ok(manifest)
}

/// Reads `samples.bin` after checking its length and checksum against the
/// manifest.
pub fn read_samples(dir: &Path, manifest: &DatasetManifest) -> Result<Vec<SampleRecord>> {
    let path = dir.join(SAMPLES_FILE);
    let blob = fs::read(&path).map_err(io_err(&path))?;
    let size = manifest.record_size();
    let expected_bytes = (manifest.num_samples * size) as u64;
    let found_bytes = blob.len() as u64;
    if found_bytes < expected_bytes {
        return Err(DatasetError::Truncated {
            expected: manifest.num_samples,
            expected_bytes,
            found_bytes,
        });
    }
    if found_bytes > expected_bytes {
        return Err(DatasetError::TrailingData {
            expected: manifest.num_samples,
            extra: found_bytes - expected_bytes,
        });
    }
    let expected = manifest
        .checksums
        .get(SAMPLES_FILE)
        .ok_or_else(|| DatasetError::Invalid(format!("manifest has no checksum for {SAMPLES_FILE}")))?;
    let found = sha256_hex(&blob);
    if !expected.eq_ignore_ascii_case(&found) {
        return Err(DatasetError::Checksum {
            file: SAMPLES_FILE.into(),
            expected: expected.clone(),
            found,
        });
    }
    blob.chunks_exact(size)
        .map(|rec| decode_record(rec, manifest.num_aps, manifest.num_ues))
        .collect()
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SampleRecord>)> {
    let manifest = read_manifest(dir)?;
    let records = read_samples(dir, &manifest)?;
    Ok((manifest, records))
}

/// Stored precoders must meet the per-AP power limit within this slack.
pub const POWER_SLACK: f64 = 1e-6;
/// Largest `‖G^T G† − I‖_max` accepted for a stored pseudo-inverse.
pub const PINV_TOL: f64 = 1e-6;

/// Re-checks one record: finite entries, power limit, the stored label
/// achieving its `t_star`, and the stored pseudo-inverse. Returns every
/// violation found.
pub fn check_record(rec: &SampleRecord, rho_d: f64) -> Vec<String> {
    let mut problems = Vec::new();
    let finite = |a: &CMatrix| a.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite());
    for (name, a) in [("G", &rec.g), ("G_pinv", &rec.g_pinv), ("Delta_olp", &rec.delta_olp)] {
        if !finite(a) {
            problems.push(format!("{name} has non-finite entries"));
        }
    }
    if !rec.t_star.is_finite() || rec.t_star < 0.0 {
        problems.push(format!("t_star = {} is not a finite nonnegative number", rec.t_star));
    }
    if !problems.is_empty() {
        return problems;
    }
    let delta = rec.precoder();
    let worst = delta.max_row_norm();
    if worst > 1.0 + POWER_SLACK {
        problems.push(format!("Delta_olp violates the power limit: max row norm {worst}"));
    }
    match min_sinr(&ChannelMatrix::new(rec.g.clone()), &delta, rho_d) {
        Ok(s) if s < rec.t_star - 1e-4 * (1.0 + rec.t_star) => {
            problems.push(format!("Delta_olp reaches min-SINR {s}, below t_star {}", rec.t_star))
        }
        Ok(_) => {}
        Err(e) => problems.push(format!("SINR evaluation failed: {e}")),
    }
    let gram = match rec.g.transpose_matmul(&rec.g_pinv) {
        Ok(a) => a,
        Err(e) => {
            problems.push(format!("G_pinv: {e}"));
            return problems;
        }
    };
    let k = gram.rows();
    let off = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| {
            let target = if i == j { 1.0 } else { 0.0 };
            cabs(gram[(i, j)] - c64(target, 0.0))
        })
        .fold(0.0, f64::max);
    if off > PINV_TOL {
        problems.push(format!("G_pinv is not a right inverse of G^T: residual {off:e}"));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use olpkit_core::channel::{EnvironmentKind, EnvironmentSpec};

    fn record(m: usize, k: usize, seed: u64) -> SampleRecord {
        let v = |s: u64| {
            CMatrix::from_fn(m, k, |i, j| c64((s + i as u64) as f64 * 0.5, -(j as f64) - s as f64))
        };
        SampleRecord {
            g: v(seed),
            g_pinv: v(seed + 1),
            delta_olp: v(seed + 2),
            t_star: 1.25 + seed as f64,
            seed,
        }
    }

    #[test]
    fn record_layout() {
        let rec = record(3, 2, 4);
        let mut buf = Vec::new();
        encode_record(&rec, &mut buf);
        assert_eq!(buf.len(), record_size(3, 2));
        assert_eq!(&buf[..8], &rec.g[(0, 0)].re.to_le_bytes());
        assert_eq!(&buf[8..16], &rec.g[(0, 0)].im.to_le_bytes());
        assert_eq!(&buf[16..24], &rec.g[(0, 1)].re.to_le_bytes());
        assert_eq!(&buf[buf.len() - 8..], &4u64.to_le_bytes());
        assert_eq!(decode_record(&buf, 3, 2).unwrap(), rec);
        assert!(decode_record(&buf[1..], 3, 2).is_err());
    }

    #[test]
    fn manifest_field_names() {
        let env = EnvironmentSpec::preset(EnvironmentKind::LoS60GHz);
        let m = DatasetManifest::new(env, 4, 2, SolverConfig::default(), 9);
        let v = serde_json::to_value(&m).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for key in [
            "format_version",
            "environment",
            "M",
            "K",
            "rho_d",
            "num_samples",
            "solver",
            "seed_base",
            "created_by",
            "checksums",
        ] {
            assert!(keys.contains(&key), "{key}");
        }
    }
}

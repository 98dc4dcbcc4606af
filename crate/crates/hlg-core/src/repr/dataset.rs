//! On-disk dataset format.
//!
//! Binary layout (little-endian): magic `HLG1`, version `u16`, session
//! length N `u16`, record count `u64`, then per record: label `u16`,
//! n_real `u16`, source id length `u16` and UTF-8 bytes, then `N x 256`
//! `f32` values row-major. The class-id manifest is a JSON sidecar at
//! `<path>.manifest.json`.

use super::{SessionTensor, PACKET_VECTOR_LEN};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"HLG1";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    VersionMismatch(u16),
    #[error("record count mismatch: header says {expected}, file holds {found}")]
    CountMismatch { expected: u64, found: u64 },
    #[error("record is truncated")]
    TruncatedRecord,
    #[error("tensor shape mismatch: dataset N = {expected}, record has {found} rows")]
    ShapeMismatch { expected: u16, found: u16 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("manifest is not valid JSON: {0}")]
    BadManifest(#[from] serde_json::Error),
}

/// A labeled collection of session tensors with one shared session length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub n: u16,
    pub records: Vec<SessionTensor>,
    /// Class id to human-readable name.
    pub manifest: BTreeMap<u16, String>,
}

impl Dataset {
    pub fn new(n: u16) -> Self {
        Self {
            n,
            records: Vec::new(),
            manifest: BTreeMap::new(),
        }
    }

    /// Distinct labels present, sorted.
    pub fn labels(&self) -> Vec<u16> {
        let mut labels: Vec<u16> = self.records.iter().map(|r| r.label).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    for record in &dataset.records {
        if record.rows != dataset.n {
            return Err(DatasetError::ShapeMismatch {
                expected: dataset.n,
                found: record.rows,
            });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dataset.n.to_le_bytes())?;
    w.write_all(&(dataset.records.len() as u64).to_le_bytes())?;
    for record in &dataset.records {
        w.write_all(&record.label.to_le_bytes())?;
        w.write_all(&record.n_real.to_le_bytes())?;
        let id = record.source_id.as_bytes();
        w.write_all(&(id.len() as u16).to_le_bytes())?;
        w.write_all(id)?;
        for &v in &record.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;

    let named: BTreeMap<String, String> = dataset
        .manifest
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    let json = serde_json::to_string_pretty(&named)?;
    std::fs::write(manifest_path(path), json)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(map_eof)?;
    if &magic != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(DatasetError::VersionMismatch(version));
    }
    let n = read_u16(&mut r)?;
    let count = read_u64(&mut r)?;
    let values_per_record = n as usize * PACKET_VECTOR_LEN;
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let label = read_u16(&mut r)?;
        let n_real = read_u16(&mut r)?;
        let id_len = read_u16(&mut r)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes).map_err(map_eof)?;
        let source_id = String::from_utf8(id_bytes)
            .map_err(|_| DatasetError::TruncatedRecord)?;
        let mut data = vec![0f32; values_per_record];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut buf).map_err(map_eof)?;
            *v = f32::from_le_bytes(buf);
        }
        records.push(SessionTensor {
            rows: n,
            n_real,
            label,
            source_id,
            data,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DatasetError::CountMismatch {
            expected: count,
            found: count + 1,
        });
    }

    let manifest = match std::fs::read_to_string(manifest_path(path)) {
        Ok(json) => serde_json::from_str::<BTreeMap<String, String>>(&json)?
            .into_iter()
            .filter_map(|(k, v)| k.parse::<u16>().ok().map(|id| (id, v)))
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };

    Ok(Dataset {
        n,
        records,
        manifest,
    })
}

fn map_eof(e: io::Error) -> DatasetError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        DatasetError::TruncatedRecord
    } else {
        DatasetError::Io(e)
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, DatasetError> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf).map_err(map_eof)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, DatasetError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(map_eof)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn record(label: u16, fill: f32) -> SessionTensor {
        SessionTensor {
            rows: 4,
            n_real: 2,
            label,
            source_id: format!("src-{label}"),
            data: vec![fill; 4 * PACKET_VECTOR_LEN],
        }
    }

    #[test]
    fn empty_dataset_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.hlg");
        let ds = Dataset::new(16);
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn records_and_manifest_round_trip_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.hlg");
        let mut ds = Dataset::new(4);
        ds.records = vec![record(0, 0.25), record(1, 0.5), record(2, 1.0)];
        ds.manifest.insert(0, "benign".into());
        ds.manifest.insert(1, "alpha".into());
        ds.manifest.insert(2, "beta".into());
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_file_fails_to_read() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.hlg");
        let mut ds = Dataset::new(4);
        ds.records = vec![record(0, 0.1)];
        write_dataset(&path, &ds).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DatasetError::TruncatedRecord)
        ));
    }

    #[test]
    fn trailing_garbage_is_a_count_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("extra.hlg");
        let ds = Dataset::new(4);
        write_dataset(&path, &ds).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DatasetError::CountMismatch { .. })
        ));
    }

    #[test]
    fn wrong_magic_and_version_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.hlg");
        std::fs::write(&path, b"NOPEnonsense").unwrap();
        assert!(matches!(read_dataset(&path), Err(DatasetError::BadMagic)));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&9u16.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DatasetError::VersionMismatch(9))
        ));
    }

    #[test]
    fn inconsistent_record_rows_refuse_to_write() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad-n.hlg");
        let mut ds = Dataset::new(16);
        ds.records = vec![record(0, 0.0)]; // rows = 4, dataset N = 16
        assert!(matches!(
            write_dataset(&path, &ds),
            Err(DatasetError::ShapeMismatch { .. })
        ));
    }
}

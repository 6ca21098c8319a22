//! The on-disk dataset format: one JSON header line, then fixed-width binary
//! rows (little-endian `u32` entries followed by two little-endian `u64`
//! label fields). Streamable, seekable, and bit-exact.

use super::{DataError, Distribution, InputVector, LabeledExample};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// The header line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub q: u64,
    pub distribution: Distribution,
    pub seed: u64,
    pub count: u64,
}

impl DatasetMeta {
    pub fn new(n: usize, q: u64, distribution: Distribution, seed: u64, count: u64) -> Self {
        Self {
            format: "modlab-dataset".to_string(),
            version: DATASET_FORMAT_VERSION,
            n,
            q,
            distribution,
            seed,
            count,
        }
    }
}

/// A fully loaded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub examples: Vec<LabeledExample>,
}

/// Writes `examples` under `meta` to `path`.
pub fn write_dataset(path: &Path, examples: &[LabeledExample], meta: &DatasetMeta) -> Result<(), DataError> {
    debug_assert_eq!(meta.count, examples.len() as u64);
    let mut w = BufWriter::new(File::create(path)?);
    let header = serde_json::to_string(meta).expect("meta serializes");
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    for example in examples {
        for &entry in example.x.entries() {
            w.write_all(&entry.to_le_bytes())?;
        }
        w.write_all(&example.y_q.to_le_bytes())?;
        w.write_all(&example.quotient.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset back, validating the schema version, entry ranges, and
/// the label reconstruction of every row.
pub fn read_dataset(path: &Path) -> Result<Dataset, DataError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte)? {
            0 => return Err(DataError::Header("missing newline after header".into())),
            _ if byte[0] == b'\n' => break,
            _ => header.push(byte[0]),
        }
        if header.len() > 1 << 16 {
            return Err(DataError::Header("header line too long".into()));
        }
    }
    let meta: DatasetMeta = serde_json::from_slice(&header)
        .map_err(|e| DataError::Header(e.to_string()))?;
    if meta.format != "modlab-dataset" {
        return Err(DataError::Header(format!(
            "unexpected format tag {:?}",
            meta.format
        )));
    }
    if meta.version != DATASET_FORMAT_VERSION {
        return Err(DataError::SchemaVersion {
            found: meta.version,
            expected: DATASET_FORMAT_VERSION,
        });
    }

    let row_bytes = meta.n * 4 + 16;
    let mut buf = vec![0u8; row_bytes];
    let mut examples = Vec::with_capacity(meta.count as usize);
    for row in 0..meta.count as usize {
        r.read_exact(&mut buf)
            .map_err(|_| DataError::Truncated { row })?;
        let mut entries = Vec::with_capacity(meta.n);
        for i in 0..meta.n {
            let value = u32::from_le_bytes(buf[i * 4..i * 4 + 4].try_into().unwrap());
            if value as u64 >= meta.q {
                return Err(DataError::RowEntryOutOfRange {
                    row,
                    index: i,
                    value,
                    modulus: meta.q,
                });
            }
            entries.push(value);
        }
        let y_q = u64::from_le_bytes(buf[meta.n * 4..meta.n * 4 + 8].try_into().unwrap());
        let quotient =
            u64::from_le_bytes(buf[meta.n * 4 + 8..meta.n * 4 + 16].try_into().unwrap());
        let total: u64 = entries.iter().map(|&v| v as u64).sum();
        if quotient * meta.q + y_q != total || y_q >= meta.q {
            return Err(DataError::RowLabelMismatch { row });
        }
        examples.push(LabeledExample {
            x: InputVector { entries },
            y_q,
            quotient,
        });
    }
    Ok(Dataset { meta, examples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_examples;
    use crate::problem::ProblemSpec;

    fn sample_dataset() -> Dataset {
        let spec = ProblemSpec::new(8, 31, 2, 0.0).unwrap();
        let examples = generate_examples(&spec, Distribution::Uniform, 1000, 7);
        let meta = DatasetMeta::new(8, 31, Distribution::Uniform, 7, 1000);
        Dataset { meta, examples }
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.mlds");
        let ds = sample_dataset();
        write_dataset(&path, &ds.examples, &ds.meta).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn regenerating_with_the_recorded_seed_reproduces_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.mlds");
        let ds = sample_dataset();
        write_dataset(&path, &ds.examples, &ds.meta).unwrap();
        let back = read_dataset(&path).unwrap();
        let spec = ProblemSpec::new(back.meta.n, back.meta.q, 2, 0.0).unwrap();
        let regenerated = generate_examples(
            &spec,
            back.meta.distribution,
            back.meta.count,
            back.meta.seed,
        );
        assert_eq!(regenerated, back.examples);
    }

    #[test]
    fn out_of_range_entry_is_reported_with_its_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mlds");
        let ds = sample_dataset();
        write_dataset(&path, &ds.examples, &ds.meta).unwrap();

        // Corrupt the first entry of row 3 to the modulus value.
        let mut bytes = std::fs::read(&path).unwrap();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        let row_bytes = 8 * 4 + 16;
        let offset = header_end + 3 * row_bytes;
        bytes[offset..offset + 4].copy_from_slice(&31u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();

        match read_dataset(&path) {
            Err(DataError::RowEntryOutOfRange { row, value, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(value, 31);
            }
            other => panic!("expected RowEntryOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.mlds");
        let ds = sample_dataset();
        write_dataset(&path, &ds.examples, &ds.meta).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DataError::Truncated { row: 999 })
        ));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vers.mlds");
        let ds = sample_dataset();
        let mut meta = ds.meta.clone();
        meta.version = 99;
        write_dataset(&path, &ds.examples, &meta).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DataError::SchemaVersion {
                found: 99,
                expected: DATASET_FORMAT_VERSION
            })
        ));
    }
}

//! Binary archive of projections of one data subset at several
//! hyperparameter values.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "HPTA" | version u8
//! fingerprint  u16 len + utf8
//! engine       u16 len + utf8
//! h names      u16 count, then u16 len + utf8 each
//! seed u64 | aligned u8
//! indices      u32 count, u32 each
//! records      u32 count, then per record: f64 x |h names|, f32 x 2 x |indices|
//! ```

use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::engines::{EngineKind, HyperValue};
use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"HPTA";
pub const ARCHIVE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRecord {
    pub h: HyperValue,
    /// `|indices| x 2`.
    pub coords: Array2<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionArchive {
    pub fingerprint: String,
    pub engine: EngineKind,
    pub hyper_names: Vec<String>,
    pub seed: u64,
    pub aligned: bool,
    /// Dataset rows the layouts refer to, shared by every record.
    pub indices: Vec<u32>,
    pub records: Vec<ProjectionRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("archive truncated at byte {} (need {n} more)", self.at))
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format("archive string is not UTF-8".into()))
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Format(format!("string too long: {} bytes", s.len())))?;
    out.extend(len.to_le_bytes());
    out.extend(s.as_bytes());
    Ok(())
}

impl ProjectionArchive {
    /// Structural checks shared by reading and writing.
    pub fn validate(&self) -> Result<()> {
        let dims = self.hyper_names.len();
        if dims == 0 {
            return Err(Error::Format("archive declares no hyperparameter names".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.h.dims() != dims {
                return Err(Error::Format(format!(
                    "record {i} has {} h components, expected {dims}",
                    r.h.dims()
                )));
            }
            if r.coords.dim() != (self.indices.len(), 2) {
                return Err(Error::Format(format!(
                    "record {i} has {} rows, expected {}",
                    r.coords.nrows(),
                    self.indices.len()
                )));
            }
            if let Some(pos) = r.coords.iter().position(|v| !v.is_finite()) {
                return Err(Error::Format(format!("record {i} has a non-finite coordinate at row {}", pos / 2)));
            }
        }
        if dims == 1 {
            for pair in self.records.windows(2) {
                let (a, b) = (pair[0].h.values()[0], pair[1].h.values()[0]);
                if !(a < b) {
                    return Err(Error::Format(format!(
                        "records must be sorted by ascending h, found {a} before {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend(ARCHIVE_MAGIC);
        out.push(ARCHIVE_VERSION);
        put_string(&mut out, &self.fingerprint)?;
        put_string(&mut out, self.engine.name())?;
        out.extend((self.hyper_names.len() as u16).to_le_bytes());
        for name in &self.hyper_names {
            put_string(&mut out, name)?;
        }
        out.extend(self.seed.to_le_bytes());
        out.push(self.aligned as u8);
        out.extend((self.indices.len() as u32).to_le_bytes());
        for i in &self.indices {
            out.extend(i.to_le_bytes());
        }
        out.extend((self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            for v in r.h.values() {
                out.extend(v.to_le_bytes());
            }
            for v in r.coords.iter() {
                out.extend(v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != ARCHIVE_MAGIC {
            return Err(Error::Format("not a projection archive (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Format(format!("unsupported archive version {version}")));
        }
        let fingerprint = r.string()?;
        let engine_name = r.string()?;
        let engine = EngineKind::parse(&engine_name)
            .ok_or_else(|| Error::Format(format!("unknown engine '{engine_name}'")))?;
        let name_count = r.u16()? as usize;
        let hyper_names = (0..name_count).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let aligned = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("bad alignment flag {other}"))),
        };
        let index_count = r.u32()? as usize;
        let indices = (0..index_count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let record_count = r.u32()? as usize;
        let mut records = Vec::with_capacity(record_count.min(1 << 16));
        for _ in 0..record_count {
            let h = (0..name_count)
                .map(|_| Ok(f64::from_le_bytes(r.array()?)))
                .collect::<Result<Vec<_>>>()?;
            let raw = r.take(index_count * 8)?;
            let coords: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            records.push(ProjectionRecord {
                h: HyperValue(h),
                coords: Array2::from_shape_vec((index_count, 2), coords).expect("sized above"),
            });
        }
        if r.at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after archive", bytes.len() - r.at)));
        }
        let archive = Self {
            fingerprint,
            engine,
            hyper_names,
            seed,
            aligned,
            indices,
            records,
        };
        archive.validate()?;
        Ok(archive)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Checks that the archive refers to `dataset`: matching fingerprint
    /// (unless `allow_mismatch`) and in-range row indices.
    pub fn check_dataset(&self, dataset: &Dataset, allow_mismatch: bool) -> Result<()> {
        if self.fingerprint != dataset.fingerprint() {
            if !allow_mismatch {
                return Err(Error::FingerprintMismatch {
                    archive: self.fingerprint.clone(),
                    dataset: dataset.fingerprint().to_string(),
                });
            }
            log::warn!(
                "archive fingerprint {} differs from dataset {}; continuing as requested",
                self.fingerprint,
                dataset.fingerprint()
            );
        }
        if let Some(&bad) = self.indices.iter().find(|&&i| i as usize >= dataset.len()) {
            return Err(Error::InvalidData(format!(
                "archive index {bad} out of range for {} dataset rows",
                dataset.len()
            )));
        }
        Ok(())
    }

    pub fn index_usize(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| i as usize).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> ProjectionArchive {
        ProjectionArchive {
            fingerprint: "abc".into(),
            engine: EngineKind::Isomap,
            hyper_names: vec!["k".into()],
            seed: 7,
            aligned: true,
            indices: vec![4, 0],
            records: vec![
                ProjectionRecord {
                    h: HyperValue::scalar(3.0),
                    coords: array![[1.5, -2.0], [f32::MIN_POSITIVE, 1e-30]],
                },
                ProjectionRecord {
                    h: HyperValue::scalar(5.0),
                    coords: array![[0.1, 0.2], [0.3, 0.4]],
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let a = sample();
        let b = ProjectionArchive::from_bytes(&a.to_bytes().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsorted_records_rejected_on_read() {
        let a = sample();
        let mut bytes = a.to_bytes().unwrap();
        // swap the two h values in place
        let first = bytes.windows(8).position(|w| w == 3.0f64.to_le_bytes()).unwrap();
        let second = bytes.windows(8).position(|w| w == 5.0f64.to_le_bytes()).unwrap();
        bytes[first..first + 8].copy_from_slice(&9.0f64.to_le_bytes());
        assert!(second > first);
        let err = ProjectionArchive::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("ascending"), "{err}");
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(ProjectionArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ProjectionArchive::from_bytes(&extra).is_err());
    }

    #[test]
    fn fingerprint_mismatch_names_both() {
        let d = Dataset::new(Array2::zeros((5, 2)), None, None, None).unwrap();
        let err = sample().check_dataset(&d, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("abc") && msg.contains(d.fingerprint()), "{msg}");
        assert!(sample().check_dataset(&d, true).is_ok());
    }
}

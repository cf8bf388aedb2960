//! Shared versioned binary artifact format.
//!
//! Every on-disk artifact starts with one ASCII header line — a magic tag,
//! a format version, and the dimension counts needed to size the body —
//! followed by a little-endian binary body. Loads are strict: wrong magic,
//! wrong version, truncation, and trailing bytes are all errors, and f64
//! payloads round-trip bit-exactly.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Errors shared by all artifact readers and writers.
#[derive(Debug, Error)]
pub enum PersistError {
    #[error("corrupted {artifact} file: {msg}")]
    Corrupted { artifact: &'static str, msg: String },
    #[error("{artifact} file version {found}, this build reads version {expected}")]
    VersionMismatch { artifact: &'static str, found: u32, expected: u32 },
    #[error("failed to access '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> PersistError {
    PersistError::Io { path: path.display().to_string(), source }
}

/// Accumulates an artifact in memory, then writes it in one shot.
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    /// Start an artifact with header `<magic> <version> <dims...>`.
    pub(crate) fn new(magic: &str, version: u32, dims: &[u64]) -> Writer {
        let mut header = format!("{magic} {version}");
        for d in dims {
            header.push_str(&format!(" {d}"));
        }
        header.push('\n');
        Writer { buf: header.into_bytes() }
    }

    pub(crate) fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    pub(crate) fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_bits().to_le_bytes());
    }

    pub(crate) fn f64_slice(&mut self, xs: &[f64]) {
        for &x in xs {
            self.f64(x);
        }
    }

    pub(crate) fn finish(self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        let path = path.as_ref();
        fs::write(path, self.buf).map_err(|e| io_error(path, e))
    }
}

/// Cursor over a loaded artifact; every read checks bounds.
pub(crate) struct Reader {
    artifact: &'static str,
    bytes: Vec<u8>,
    off: usize,
}

impl Reader {
    /// Open an artifact, validate magic and version, and return the header
    /// dimensions alongside the body cursor.
    pub(crate) fn open(
        path: impl AsRef<Path>,
        artifact: &'static str,
        magic: &str,
        version: u32,
    ) -> Result<(Reader, Vec<u64>), PersistError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        let corrupted = |msg: &str| PersistError::Corrupted { artifact, msg: msg.to_string() };

        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupted("missing header line"))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| corrupted("non-ASCII header"))?;
        let mut fields = header.split(' ');
        if fields.next() != Some(magic) {
            return Err(corrupted("bad magic"));
        }
        let found: u32 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupted("bad version field"))?;
        if found != version {
            return Err(PersistError::VersionMismatch { artifact, found, expected: version });
        }
        let dims = fields
            .map(|f| f.parse::<u64>().map_err(|_| corrupted("bad header dimension")))
            .collect::<Result<Vec<u64>, _>>()?;
        Ok((Reader { artifact, bytes, off: nl + 1 }, dims))
    }

    fn take(&mut self, n: usize) -> Result<&[u8], PersistError> {
        if self.off + n > self.bytes.len() {
            return Err(PersistError::Corrupted {
                artifact: self.artifact,
                msg: "truncated body".to_string(),
            });
        }
        let slice = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(slice)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub(crate) fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, PersistError> {
        (0..n).map(|_| self.f64()).collect()
    }

    /// Declare the body fully consumed; leftover bytes are corruption.
    pub(crate) fn done(self) -> Result<(), PersistError> {
        if self.off != self.bytes.len() {
            return Err(PersistError::Corrupted {
                artifact: self.artifact,
                msg: "trailing bytes".to_string(),
            });
        }
        Ok(())
    }

    pub(crate) fn corrupted(&self, msg: impl Into<String>) -> PersistError {
        PersistError::Corrupted { artifact: self.artifact, msg: msg.into() }
    }
}

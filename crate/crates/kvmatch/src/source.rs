//! Data access behind the matcher and the index builder.
//!
//! The raw data file format is a headerless sequence of 64-bit IEEE-754
//! little-endian values; the series length is inferred from the file size.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Random access to a stored series, 1-based like everything else.
pub trait DataSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fetches the subsequence `X(offset, len)`.
    fn fetch(&self, offset: usize, len: usize) -> Result<Vec<f64>>;
}

impl DataSource for TimeSeries {
    fn len(&self) -> usize {
        TimeSeries::len(self)
    }

    fn fetch(&self, offset: usize, len: usize) -> Result<Vec<f64>> {
        Ok(self.subsequence(offset, len)?.to_vec())
    }
}

/// A disk-resident series of raw little-endian values.
pub struct DataFile {
    file: File,
    len: usize,
}

impl DataFile {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path)?;
        let bytes = file.metadata()?.len();
        if bytes % 8 != 0 {
            return Err(Error::CorruptData(format!(
                "size {bytes} is not a multiple of 8"
            )));
        }
        Ok(Self {
            file,
            len: (bytes / 8) as usize,
        })
    }

    /// Writes a series to `path` in the raw format.
    pub fn write<P: AsRef<Path>>(path: P, values: &[f64]) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads the whole file into memory.
    pub fn read_all(&self) -> Result<TimeSeries> {
        let mut reader = BufReader::with_capacity(1 << 20, &self.file);
        let mut values = Vec::with_capacity(self.len);
        let mut buf = [0u8; 8];
        // Reading via a fresh BufReader does not disturb fetch(), which uses
        // positioned reads.
        for i in 0..self.len {
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::CorruptData(format!("short read at value {i}")))?;
            values.push(f64::from_le_bytes(buf));
        }
        TimeSeries::new(values)
    }

    /// Streaming min/max over the whole file.
    pub fn value_bounds(&self) -> Result<(f64, f64)> {
        if self.len == 0 {
            return Err(Error::EmptySeries);
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        const CHUNK: usize = 1 << 18;
        let mut offset = 1;
        while offset <= self.len {
            let take = CHUNK.min(self.len - offset + 1);
            for v in self.fetch(offset, take)? {
                min = min.min(v);
                max = max.max(v);
            }
            offset += take;
        }
        Ok((min, max))
    }
}

impl DataSource for DataFile {
    fn len(&self) -> usize {
        self.len
    }

    fn fetch(&self, offset: usize, len: usize) -> Result<Vec<f64>> {
        if offset == 0 || len == 0 || offset + len - 1 > self.len {
            return Err(Error::SubsequenceOutOfRange {
                offset,
                len,
                n: self.len,
            });
        }
        let mut bytes = vec![0u8; len * 8];
        self.file
            .read_exact_at(&mut bytes, ((offset - 1) * 8) as u64)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

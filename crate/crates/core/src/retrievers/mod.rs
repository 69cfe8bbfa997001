//! File input and output: `TRF1` run files with partial loading, n-column
//! ASCII, and a hierarchical JSON document mirroring the NeXus layout.

pub(crate) mod binary;

pub mod ascii;
pub mod hierarchical;
pub mod trf;

use std::collections::BTreeSet;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{DataError, DataSet};
use binary::DecodeError;

pub use ascii::{read_ascii_columns, write_ascii_columns};
pub use hierarchical::{read_hierarchical, write_hierarchical};
pub use trf::{
    load_run, probe, read_runfile, write_run, write_runfile, DirectoryEntry, RunFileDirectory,
};

#[derive(Debug, Error)]
pub enum RetrieverError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<RetrieverError>,
    },
    #[error("bad magic {0:?}, not a TRF1 run file")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("{context} truncated at byte offset {offset}")]
    Truncated { offset: u64, context: &'static str },
    #[error("corrupt data at byte offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("selection out of range: {what} {index}")]
    Selection { what: &'static str, index: u64 },
    #[error("line {line}: {reason}")]
    Ascii { line: usize, reason: String },
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    UnderlyingIo(io::Error),
}

impl RetrieverError {
    pub fn io(path: &Path, source: io::Error) -> RetrieverError {
        RetrieverError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches file context to errors that do not already carry it.
    pub fn with_path(self, path: &Path) -> RetrieverError {
        match self {
            e @ (RetrieverError::Io { .. } | RetrieverError::InFile { .. }) => e,
            e => RetrieverError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    /// The error with any file context stripped.
    pub fn root(&self) -> &RetrieverError {
        match self {
            RetrieverError::InFile { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self.root(),
            RetrieverError::Io { .. } | RetrieverError::UnderlyingIo(_)
        )
    }
}

impl From<DecodeError> for RetrieverError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Truncated { offset, .. } => RetrieverError::Truncated {
                offset,
                context: "dataset block",
            },
            DecodeError::Invalid { offset, reason } => RetrieverError::Corrupt { offset, reason },
            DecodeError::Io(e) => RetrieverError::UnderlyingIo(e),
        }
    }
}

pub type Result<T, E = RetrieverError> = std::result::Result<T, E>;

/// What a dataset inside a run file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Monitor,
    Histogram,
    /// Reserved; carried like a histogram with no special semantics.
    PulseHeight,
}

impl DatasetKind {
    pub fn code(self) -> u8 {
        match self {
            DatasetKind::Monitor => 0,
            DatasetKind::Histogram => 1,
            DatasetKind::PulseHeight => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<DatasetKind> {
        match code {
            0 => Some(DatasetKind::Monitor),
            1 => Some(DatasetKind::Histogram),
            2 => Some(DatasetKind::PulseHeight),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Monitor => "monitor",
            DatasetKind::Histogram => "histogram",
            DatasetKind::PulseHeight => "pulse_height",
        }
    }

    pub fn from_name(name: &str) -> Option<DatasetKind> {
        [
            DatasetKind::Monitor,
            DatasetKind::Histogram,
            DatasetKind::PulseHeight,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    /// Monitor when every spectrum carries `monitor = 1`, histogram otherwise.
    pub fn infer(ds: &DataSet) -> DatasetKind {
        if !ds.is_empty() && ds.spectra().iter().all(|s| s.is_monitor()) {
            DatasetKind::Monitor
        } else {
            DatasetKind::Histogram
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunDataset {
    pub kind: DatasetKind,
    pub data: DataSet,
}

/// One measurement: run header plus its datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub instrument: String,
    pub run_number: u32,
    pub start_time: i64,
    pub datasets: Vec<RunDataset>,
}

impl Run {
    /// First spectrum of the first monitor dataset.
    pub fn monitor(&self) -> Option<&crate::dataset::Spectrum> {
        self.datasets
            .iter()
            .find(|d| d.kind == DatasetKind::Monitor)
            .and_then(|d| d.data.spectra().first())
    }

    pub fn histograms(&self) -> impl Iterator<Item = &DataSet> {
        self.datasets
            .iter()
            .filter(|d| d.kind == DatasetKind::Histogram)
            .map(|d| &d.data)
    }
}

/// Part of a run to load. `None` fields select everything.
///
/// * `dataset_indices`: directory positions; datasets come back in file
///   order regardless of the order given.
/// * `spectrum_ids`: applied within every selected dataset; each id must
///   exist in at least one of them.
/// * `bin_range`: half-open bin index range `[lo, hi)` applied to every
///   selected spectrum.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadSelection {
    pub dataset_indices: Option<Vec<u32>>,
    pub spectrum_ids: Option<Vec<u32>>,
    pub bin_range: Option<(u32, u32)>,
}

impl LoadSelection {
    pub fn all() -> LoadSelection {
        LoadSelection::default()
    }

    pub fn datasets(indices: impl Into<Vec<u32>>) -> LoadSelection {
        LoadSelection {
            dataset_indices: Some(indices.into()),
            ..Default::default()
        }
    }

    pub fn with_spectra(mut self, ids: impl Into<Vec<u32>>) -> LoadSelection {
        self.spectrum_ids = Some(ids.into());
        self
    }

    pub fn with_bins(mut self, lo: u32, hi: u32) -> LoadSelection {
        self.bin_range = Some((lo, hi));
        self
    }

    /// Sorted, de-duplicated dataset indices, validated against `n`.
    pub fn resolve_datasets(&self, n: u32) -> Result<Vec<u32>> {
        match &self.dataset_indices {
            None => Ok((0..n).collect()),
            Some(ix) => {
                if let Some(&bad) = ix.iter().find(|&&i| i >= n) {
                    return Err(RetrieverError::Selection {
                        what: "dataset index",
                        index: bad as u64,
                    });
                }
                Ok(ix
                    .iter()
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect())
            }
        }
    }

    /// Applies the selection to fully loaded datasets in memory. Partial
    /// reads must produce exactly this result.
    pub fn restrict(&self, datasets: &[DataSet]) -> Result<Vec<DataSet>> {
        let indices = self.resolve_datasets(datasets.len() as u32)?;
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(indices.len());
        for i in indices {
            let ds = &datasets[i as usize];
            let mut spectra = Vec::new();
            for s in ds.spectra() {
                if let Some(ids) = &self.spectrum_ids {
                    if !ids.contains(&s.id()) {
                        continue;
                    }
                }
                seen.insert(s.id());
                let s = match self.bin_range {
                    None => s.clone(),
                    Some((lo, hi)) => {
                        let (lo, hi) = (lo as usize, hi as usize);
                        let scale = s.xscale().slice_bins(lo, hi).map_err(|_| {
                            RetrieverError::Selection {
                                what: "bin range",
                                index: hi as u64,
                            }
                        })?;
                        s.with_data(
                            scale,
                            s.counts()[lo..hi].to_vec(),
                            s.errors()[lo..hi].to_vec(),
                        )?
                    }
                };
                spectra.push(s);
            }
            out.push(ds.with_spectra(spectra)?);
        }
        if let Some(ids) = &self.spectrum_ids {
            if let Some(missing) = ids.iter().find(|id| !seen.contains(id)) {
                return Err(RetrieverError::Selection {
                    what: "spectrum id",
                    index: *missing as u64,
                });
            }
        }
        Ok(out)
    }
}

/// Reader wrapper counting the bytes actually read from the inner reader.
#[derive(Debug)]
pub struct CountingReader<R> {
    inner: R,
    bytes_read: u64,
}

impl<R> CountingReader<R> {
    pub fn new(inner: R) -> CountingReader<R> {
        CountingReader {
            inner,
            bytes_read: 0,
        }
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    pub fn into_inner(self) -> R {
        self.inner
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.bytes_read += n as u64;
        Ok(n)
    }
}

impl<R: Seek> Seek for CountingReader<R> {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        self.inner.seek(pos)
    }
}

//! `TRF1` run files.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "TRF1" | u32 version = 1 | str instrument | u32 run_number | i64 start_time
//! | u32 n_datasets | n_datasets × entry | zero padding to 8-byte alignment
//! | dataset blocks
//!
//! entry  = str name | u8 kind | u32 n_spectra | u32 n_bins | u64 offset | u64 length
//! block  = u8 x_units | u8 shared_scale | [xscale, iff shared_scale = 1]
//!          | n_spectra × ([xscale, iff shared_scale = 0] | spectrum)
//! xscale = u8 0 | f64 start | f64 end | u32 nbins
//!        | u8 1 | u32 n_edges | n_edges × f64
//! spectrum = u32 id | u32 group_id | str label | u8 has_geometry
//!          | [6 × f64: x, y, z, L1, solid_angle, efficiency]
//!          | u16 n_attrs | n_attrs × (str name | u8 tag | payload)
//!          | n_bins × f32 counts | n_bins × f32 errors
//! ```
//!
//! Attribute tags: 0 f64, 1 i64, 2 string, 3 f64 triple. Because each
//! spectrum's payload length is known from its scale, readers can seek past
//! unselected spectra and whole unselected datasets.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::binary::{spectrum_len, str_len, xscale_len, DecodeError, Decoder, EncodeExt};
use super::{DatasetKind, LoadSelection, Result, RetrieverError, Run, RunDataset};
use crate::dataset::{attr, Attribute, DataSet, XScale};

pub const MAGIC: &[u8; 4] = b"TRF1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectoryEntry {
    pub name: String,
    pub kind: DatasetKind,
    pub n_spectra: u32,
    pub n_bins: u32,
    pub offset: u64,
    pub length: u64,
}

/// Header and dataset directory of a run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFileDirectory {
    pub instrument: String,
    pub run_number: u32,
    pub start_time: i64,
    pub entries: Vec<DirectoryEntry>,
    /// Bytes occupied by the header and directory, before padding.
    pub header_len: u64,
}

impl RunFileDirectory {
    pub fn n_datasets(&self) -> u32 {
        self.entries.len() as u32
    }

    pub fn payload_len(&self) -> u64 {
        self.entries.iter().map(|e| e.length).sum()
    }

    pub fn file_len(&self) -> u64 {
        self.entries
            .last()
            .map(|e| e.offset + e.length)
            .unwrap_or_else(|| pad8(self.header_len))
    }
}

fn pad8(n: u64) -> u64 {
    n.div_ceil(8) * 8
}

fn entry_len(name: &str) -> u64 {
    str_len(name) + 1 + 4 + 4 + 8 + 8
}

fn shared_scale(ds: &DataSet) -> Option<&XScale> {
    let first = ds.spectra().first()?.xscale();
    ds.spectra()
        .iter()
        .all(|s| s.xscale() == first)
        .then_some(first)
}

fn block_len(ds: &DataSet) -> u64 {
    let spectra: u64 = ds.spectra().iter().map(spectrum_len).sum();
    match shared_scale(ds) {
        Some(scale) => 2 + xscale_len(scale) + spectra,
        None => {
            2 + spectra
                + ds.spectra()
                    .iter()
                    .map(|s| xscale_len(s.xscale()))
                    .sum::<u64>()
        }
    }
}

fn header_len(instrument: &str, datasets: &[RunDataset]) -> u64 {
    4 + 4
        + str_len(instrument)
        + 4
        + 8
        + 4
        + datasets
            .iter()
            .map(|d| entry_len(d.data.title()))
            .sum::<u64>()
}

/// Writes `run` to `path`. Dataset titles become directory entry names.
///
/// Only the run-level metadata and the spectra are stored: dataset titles
/// round-trip through the entry names, dataset y-units and attributes do not
/// (readers attach `run_number` and `start_time` from the header instead).
pub fn write_run(path: &Path, run: &Run) -> Result<()> {
    let ctx = |e| RetrieverError::io(path, e);
    let file = File::create(path).map_err(ctx)?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    write_run_to(&mut w, run).map_err(ctx)?;
    w.flush().map_err(ctx)?;
    Ok(())
}

/// Convenience form taking datasets directly; each dataset's kind is
/// inferred ([`DatasetKind::infer`]).
pub fn write_runfile(
    path: &Path,
    instrument: &str,
    run_number: u32,
    start_time: i64,
    datasets: &[DataSet],
) -> Result<()> {
    let run = Run {
        instrument: instrument.to_string(),
        run_number,
        start_time,
        datasets: datasets
            .iter()
            .map(|d| RunDataset {
                kind: DatasetKind::infer(d),
                data: d.clone(),
            })
            .collect(),
    };
    write_run(path, &run)
}

pub fn write_run_to<W: Write>(w: &mut W, run: &Run) -> std::io::Result<()> {
    let header = header_len(&run.instrument, &run.datasets);
    w.write_all(MAGIC)?;
    w.put_u32(FORMAT_VERSION)?;
    w.put_str(&run.instrument)?;
    w.put_u32(run.run_number)?;
    w.put_i64(run.start_time)?;
    w.put_u32(run.datasets.len() as u32)?;
    let mut offset = pad8(header);
    for d in &run.datasets {
        let len = block_len(&d.data);
        w.put_str(d.data.title())?;
        w.put_u8(d.kind.code())?;
        w.put_u32(d.data.len() as u32)?;
        w.put_u32(d.data.max_nbins() as u32)?;
        w.put_u64(offset)?;
        w.put_u64(len)?;
        offset += len;
    }
    w.write_all(&[0u8; 8][..(pad8(header) - header) as usize])?;
    for d in &run.datasets {
        write_block(w, &d.data)?;
    }
    Ok(())
}

fn write_block<W: Write>(w: &mut W, ds: &DataSet) -> std::io::Result<()> {
    w.put_u8(ds.x_units().code())?;
    match shared_scale(ds) {
        Some(scale) => {
            w.put_u8(1)?;
            w.put_xscale(scale)?;
            for s in ds.spectra() {
                w.put_spectrum(s)?;
            }
        }
        None => {
            w.put_u8(0)?;
            for s in ds.spectra() {
                w.put_xscale(s.xscale())?;
                w.put_spectrum(s)?;
            }
        }
    }
    Ok(())
}

/// Reads only the header and directory of the run file at `path`.
pub fn probe(path: &Path) -> Result<RunFileDirectory> {
    let mut f = File::open(path).map_err(|e| RetrieverError::io(path, e))?;
    let file_len = f
        .seek(SeekFrom::End(0))
        .map_err(|e| RetrieverError::io(path, e))?;
    f.seek(SeekFrom::Start(0))
        .map_err(|e| RetrieverError::io(path, e))?;
    probe_from(&mut f, file_len).map_err(|e| e.with_path(path))
}

/// Parses the header and directory from `r`, positioned at the file start.
/// `file_len` bounds the directory's offsets.
///
/// Issues only the reads needed for the header fields themselves.
pub fn probe_from<R: Read>(r: R, file_len: u64) -> Result<RunFileDirectory> {
    let mut d = Decoder::new(r, 0);
    let magic: [u8; 4] = d.bytes(4).map_err(header_err)?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(RetrieverError::BadMagic(magic));
    }
    let version = d.u32().map_err(header_err)?;
    if version > FORMAT_VERSION || version == 0 {
        return Err(RetrieverError::UnsupportedVersion(version));
    }
    let instrument = d.string().map_err(header_err)?;
    let run_number = d.u32().map_err(header_err)?;
    let start_time = d.i64().map_err(header_err)?;
    let n = d.u32().map_err(header_err)?;
    let mut entries = Vec::with_capacity((n as usize).min(4096));
    for _ in 0..n {
        let name = d.string().map_err(header_err)?;
        let at = d.position();
        let code = d.u8().map_err(header_err)?;
        let kind = DatasetKind::from_code(code).ok_or_else(|| RetrieverError::Corrupt {
            offset: at,
            reason: format!("unknown dataset kind {code}"),
        })?;
        entries.push(DirectoryEntry {
            name,
            kind,
            n_spectra: d.u32().map_err(header_err)?,
            n_bins: d.u32().map_err(header_err)?,
            offset: d.u64().map_err(header_err)?,
            length: d.u64().map_err(header_err)?,
        });
    }
    let header_len = d.position();
    let mut floor = header_len;
    for (i, e) in entries.iter().enumerate() {
        let end = e.offset.checked_add(e.length);
        if e.offset < floor || end.is_none_or(|end| end > file_len) {
            return Err(RetrieverError::Corrupt {
                offset: header_len,
                reason: format!(
                    "directory entry {i} ({:?}) spans [{}, +{}) outside the file or overlapping its predecessor",
                    e.name, e.offset, e.length
                ),
            });
        }
        floor = e.offset + e.length;
    }
    Ok(RunFileDirectory {
        instrument,
        run_number,
        start_time,
        entries,
        header_len,
    })
}

fn header_err(e: DecodeError) -> RetrieverError {
    match e {
        DecodeError::Truncated { offset, .. } => RetrieverError::Truncated {
            offset,
            context: "header",
        },
        other => other.into(),
    }
}

/// Reads the selected parts of the run file at `path`.
pub fn read_runfile(path: &Path, sel: &LoadSelection) -> Result<Vec<DataSet>> {
    Ok(load_run(path, sel)?
        .datasets
        .into_iter()
        .map(|d| d.data)
        .collect())
}

/// Like [`read_runfile`] but keeps the run header and dataset kinds.
pub fn load_run(path: &Path, sel: &LoadSelection) -> Result<Run> {
    let dir = probe(path)?;
    let f = File::open(path).map_err(|e| RetrieverError::io(path, e))?;
    load_run_from(BufReader::with_capacity(1 << 16, f), &dir, sel).map_err(|e| e.with_path(path))
}

/// Reads the selection from `r` given an already probed directory. Payloads
/// of unselected datasets and spectra are skipped by seeking.
pub fn load_run_from<R: Read + Seek>(
    r: R,
    dir: &RunFileDirectory,
    sel: &LoadSelection,
) -> Result<Run> {
    let indices = sel.resolve_datasets(dir.n_datasets())?;
    let mut d = Decoder::new(r, 0);
    let wanted_ids: Option<BTreeSet<u32>> = sel
        .spectrum_ids
        .as_ref()
        .map(|v| v.iter().copied().collect());
    let mut seen_ids = BTreeSet::new();
    let mut datasets = Vec::with_capacity(indices.len());

    for &i in &indices {
        let entry = &dir.entries[i as usize];
        d.seek_to(entry.offset)?;
        let units = d.units()?;
        let shared = match d.u8()? {
            0 => None,
            1 => Some(d.xscale()?),
            f => {
                return Err(RetrieverError::Corrupt {
                    offset: d.position() - 1,
                    reason: format!("bad shared-scale flag {f}"),
                })
            }
        };
        let mut spectra = Vec::new();
        for _ in 0..entry.n_spectra {
            let scale = match &shared {
                Some(s) => s.clone(),
                None => d.xscale()?,
            };
            let header = d.spectrum_header()?;
            let nbins = scale.nbins();
            let keep = wanted_ids.as_ref().is_none_or(|w| w.contains(&header.id));
            if !keep {
                d.skip(8 * nbins as u64)?;
                continue;
            }
            seen_ids.insert(header.id);
            let (scale, counts, errors) = match sel.bin_range {
                None => (scale, d.f32_vec(nbins)?, d.f32_vec(nbins)?),
                Some((lo, hi)) => {
                    let (lo, hi) = (lo as usize, hi as usize);
                    let sliced =
                        scale
                            .slice_bins(lo, hi)
                            .map_err(|_| RetrieverError::Selection {
                                what: "bin range",
                                index: hi as u64,
                            })?;
                    d.skip(4 * lo as u64)?;
                    let counts = d.f32_vec(hi - lo)?;
                    d.skip(4 * (nbins - hi + lo) as u64)?;
                    let errors = d.f32_vec(hi - lo)?;
                    d.skip(4 * (nbins - hi) as u64)?;
                    (sliced, counts, errors)
                }
            };
            spectra.push(header.into_spectrum(scale, counts, errors)?);
        }
        datasets.push(RunDataset {
            kind: entry.kind,
            data: DataSet::new(
                entry.name.clone(),
                units,
                "counts",
                spectra,
                run_attributes(dir.run_number, dir.start_time),
            )?,
        });
    }
    if let Some(ids) = &sel.spectrum_ids {
        if let Some(missing) = ids.iter().find(|id| !seen_ids.contains(id)) {
            return Err(RetrieverError::Selection {
                what: "spectrum id",
                index: *missing as u64,
            });
        }
    }
    Ok(Run {
        instrument: dir.instrument.clone(),
        run_number: dir.run_number,
        start_time: dir.start_time,
        datasets,
    })
}

/// Dataset attributes synthesized from a run header.
pub fn run_attributes(run_number: u32, start_time: i64) -> Vec<Attribute> {
    vec![
        Attribute::i64(attr::RUN_NUMBER, run_number as i64).expect("reserved type"),
        Attribute::i64(attr::START_TIME, start_time).expect("reserved type"),
    ]
}

/// Encoded size in bytes of `ds` as a run-file block.
pub fn encoded_block_len(ds: &DataSet) -> u64 {
    block_len(ds)
}

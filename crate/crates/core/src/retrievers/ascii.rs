//! n-column ASCII spectra.
//!
//! Column 1 holds x values, column 2 counts and the optional column 3
//! errors (Poisson when absent). Lines starting with `#` are comments and a
//! blank line ends a spectrum. A block of `n` count rows followed by one
//! row holding only an x value is read as `n + 1` bin edges; a block where
//! every row has counts is read as `n` bin centres of a uniform scale.
//!
//! The writer always emits edges, and records dataset and per-spectrum
//! metadata in `# key: value` comment lines that the reader picks up again,
//! so a written file reads back to an identical dataset.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, RetrieverError};
use crate::dataset::{AttrValue, Attribute, DataSet, DetectorGeometry, Spectrum, XScale, XUnits};

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct AttrJson {
    pub name: String,
    #[serde(flatten)]
    pub value: AttrValue,
}

impl AttrJson {
    pub fn from_attr(a: &Attribute) -> AttrJson {
        AttrJson {
            name: a.name().to_string(),
            value: a.value().clone(),
        }
    }

    pub fn into_attr(self) -> std::result::Result<Attribute, crate::dataset::DataError> {
        Attribute::new(self.name, self.value)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpectrumMeta {
    id: u32,
    group_id: u32,
    label: String,
    scale: String,
    geometry: Option<[f64; 6]>,
    attributes: Vec<AttrJson>,
}

const SPECTRUM_TAG: &str = "# spectrum: ";

pub fn write_ascii_columns(ds: &DataSet, path: &Path) -> Result<()> {
    let ctx = |e| RetrieverError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(ctx)?);
    write_ascii_to(&mut w, ds).map_err(ctx)?;
    w.flush().map_err(ctx)
}

pub fn write_ascii_to<W: Write>(w: &mut W, ds: &DataSet) -> std::io::Result<()> {
    writeln!(w, "# tofbench n-column ASCII")?;
    writeln!(w, "# title: {}", one_line(ds.title()))?;
    writeln!(w, "# x_units: {}", ds.x_units())?;
    writeln!(w, "# y_units: {}", one_line(ds.y_units()))?;
    writeln!(
        w,
        "# columns: x_edge counts errors; an n-bin spectrum has n+1 rows, the last holding only its closing edge"
    )?;
    let attrs: Vec<AttrJson> = ds.attributes().iter().map(AttrJson::from_attr).collect();
    writeln!(w, "# attributes: {}", json(&attrs))?;
    for (k, s) in ds.spectra().iter().enumerate() {
        if k > 0 {
            writeln!(w)?;
        }
        let g = s.geometry().map(|g| {
            let p = g.position();
            [
                p[0],
                p[1],
                p[2],
                g.initial_path(),
                g.solid_angle(),
                g.efficiency(),
            ]
        });
        let meta = SpectrumMeta {
            id: s.id(),
            group_id: s.group_id(),
            label: s.label().to_string(),
            scale: if s.xscale().is_uniform() {
                "uniform"
            } else {
                "explicit"
            }
            .into(),
            geometry: g,
            attributes: s.attributes().iter().map(AttrJson::from_attr).collect(),
        };
        writeln!(w, "{SPECTRUM_TAG}{}", json(&meta))?;
        for i in 0..s.nbins() {
            writeln!(
                w,
                "{:?} {:?} {:?}",
                s.xscale().edge(i),
                s.counts()[i],
                s.errors()[i]
            )?;
        }
        writeln!(w, "{:?}", s.xscale().last())?;
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("metadata serializes")
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

struct Row {
    line: usize,
    x: f64,
    y: Option<(f32, Option<f32>)>,
}

struct Block {
    meta: Option<(usize, SpectrumMeta)>,
    rows: Vec<Row>,
}

pub fn read_ascii_columns(path: &Path) -> Result<DataSet> {
    let f = File::open(path).map_err(|e| RetrieverError::io(path, e))?;
    let default_title = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_ascii_from(BufReader::new(f), &default_title).map_err(|e| e.with_path(path))
}

pub fn read_ascii_from<R: BufRead>(r: R, default_title: &str) -> Result<DataSet> {
    let mut title = default_title.to_string();
    let mut x_units = XUnits::TofUs;
    let mut y_units = "counts".to_string();
    let mut ds_attrs = Vec::new();
    let mut blocks: Vec<Block> = Vec::new();
    let mut current = Block {
        meta: None,
        rows: Vec::new(),
    };
    let mut last_line = 0;

    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = line.map_err(RetrieverError::UnderlyingIo)?;
        let t = line.trim();
        if t.is_empty() {
            if !current.rows.is_empty() {
                blocks.push(std::mem::replace(
                    &mut current,
                    Block {
                        meta: None,
                        rows: Vec::new(),
                    },
                ));
            }
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            let bad = |reason: String| RetrieverError::Ascii { line: n, reason };
            if let Some(json) = line.strip_prefix(SPECTRUM_TAG) {
                if !current.rows.is_empty() {
                    blocks.push(std::mem::replace(
                        &mut current,
                        Block {
                            meta: None,
                            rows: Vec::new(),
                        },
                    ));
                }
                let meta = serde_json::from_str(json)
                    .map_err(|e| bad(format!("spectrum metadata: {e}")))?;
                current.meta = Some((n, meta));
            } else if let Some(v) = comment.trim_start().strip_prefix("title:") {
                title = v.trim().to_string();
            } else if let Some(v) = comment.trim_start().strip_prefix("x_units:") {
                x_units = v
                    .trim()
                    .parse()
                    .map_err(|e: crate::dataset::DataError| bad(e.to_string()))?;
            } else if let Some(v) = comment.trim_start().strip_prefix("y_units:") {
                y_units = v.trim().to_string();
            } else if let Some(v) = comment.trim_start().strip_prefix("attributes:") {
                let raw: Vec<AttrJson> =
                    serde_json::from_str(v.trim()).map_err(|e| bad(format!("attributes: {e}")))?;
                ds_attrs = raw
                    .into_iter()
                    .map(AttrJson::into_attr)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(e.to_string()))?;
            }
            continue;
        }
        current.rows.push(parse_row(t, n)?);
    }
    if !current.rows.is_empty() {
        blocks.push(current);
    }
    if blocks.is_empty() {
        return Err(RetrieverError::Ascii {
            line: last_line,
            reason: "no data".into(),
        });
    }

    let spectra = blocks
        .into_iter()
        .enumerate()
        .map(|(k, b)| block_to_spectrum(k as u32, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(DataSet::new(title, x_units, y_units, spectra, ds_attrs)?)
}

fn parse_row(t: &str, line: usize) -> Result<Row> {
    let tokens: Vec<&str> = t.split_whitespace().collect();
    let bad = |reason: String| RetrieverError::Ascii { line, reason };
    if tokens.len() > 3 {
        return Err(bad(format!(
            "expected at most 3 columns, found {}",
            tokens.len()
        )));
    }
    let x: f64 = tokens[0]
        .parse()
        .map_err(|_| bad(format!("non-numeric value {:?} in column 1", tokens[0])))?;
    let num = |col: usize| -> Result<f32> {
        tokens[col].parse().map_err(|_| {
            bad(format!(
                "non-numeric value {:?} in column {}",
                tokens[col],
                col + 1
            ))
        })
    };
    let y = match tokens.len() {
        1 => None,
        2 => Some((num(1)?, None)),
        _ => Some((num(1)?, Some(num(2)?))),
    };
    Ok(Row { line, x, y })
}

fn block_to_spectrum(index: u32, b: Block) -> Result<Spectrum> {
    let first_line = b.rows[0].line;
    let bad = |line: usize, reason: String| RetrieverError::Ascii { line, reason };
    let ncols = |r: &Row| match r.y {
        None => 1,
        Some((_, None)) => 2,
        Some((_, Some(_))) => 3,
    };
    let (last, body) = b.rows.split_last().expect("non-empty block");
    let edge_mode = last.y.is_none();
    let data_rows = if edge_mode { body } else { &b.rows[..] };
    if data_rows.is_empty() {
        return Err(bad(
            first_line,
            "spectrum has a closing edge but no bins".into(),
        ));
    }
    let width = ncols(&data_rows[0]);
    if let Some(r) = data_rows.iter().find(|r| ncols(r) != width) {
        return Err(bad(
            r.line,
            format!("ragged columns: expected {width}, found {}", ncols(r)),
        ));
    }
    let counts: Vec<f32> = data_rows.iter().map(|r| r.y.expect("checked").0).collect();
    let errors: Option<Vec<f32>> = (width == 3).then(|| {
        data_rows
            .iter()
            .map(|r| r.y.expect("checked").1.expect("checked"))
            .collect()
    });

    let xs: Vec<f64> = b.rows.iter().map(|r| r.x).collect();
    let uniform_meta = b.meta.as_ref().is_some_and(|(_, m)| m.scale == "uniform");
    let scale = if edge_mode {
        let n = xs.len() - 1;
        if uniform_meta {
            XScale::uniform(xs[0], xs[n], n as u32)
        } else {
            XScale::explicit(xs)
        }
    } else {
        centers_to_scale(&xs).map_err(|reason| bad(first_line, reason))?
    }
    .map_err(|e| bad(first_line, e.to_string()))?;

    let id = b.meta.as_ref().map_or(index, |(_, m)| m.id);
    let s = Spectrum::new(id, scale, counts, errors).map_err(|e| bad(first_line, e.to_string()))?;
    let Some((line, m)) = b.meta else {
        return Ok(s);
    };
    let geometry = m
        .geometry
        .map(|g| DetectorGeometry::new([g[0], g[1], g[2]], g[3], g[4], g[5]))
        .transpose()
        .map_err(|e| bad(line, e.to_string()))?;
    let attrs = m
        .attributes
        .into_iter()
        .map(AttrJson::into_attr)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(line, e.to_string()))?;
    Ok(s.with_group_id(m.group_id)
        .with_label(m.label)
        .with_geometry(geometry)
        .with_attributes(attrs))
}

fn centers_to_scale(
    centers: &[f64],
) -> std::result::Result<crate::dataset::Result<XScale>, String> {
    if centers.len() < 2 {
        return Err("a single bin centre does not determine a bin width".into());
    }
    let n = centers.len();
    let w = (centers[n - 1] - centers[0]) / (n - 1) as f64;
    if let Some(i) = centers
        .windows(2)
        .position(|p| ((p[1] - p[0]) - w).abs() > 1e-9 * w.abs().max(f64::MIN_POSITIVE))
    {
        return Err(format!(
            "bin centres are not uniformly spaced near row {}",
            i + 2
        ));
    }
    Ok(XScale::uniform(
        centers[0] - 0.5 * w,
        centers[n - 1] + 0.5 * w,
        n as u32,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::attr;

    fn read(text: &str) -> Result<DataSet> {
        read_ascii_from(text.as_bytes(), "t")
    }

    #[test]
    fn edge_rows() {
        let ds = read("0 4\n1 6\n2\n").unwrap();
        let s = &ds.spectra()[0];
        assert_eq!(s.xscale().edges(), vec![0.0, 1.0, 2.0]);
        assert_eq!(s.counts(), &[4.0, 6.0]);
        assert_eq!(s.errors(), &[2.0, 6f32.sqrt()]);
    }

    #[test]
    fn centre_rows() {
        let ds = read("# comment\n0.5 1 1\n1.5 2 1\n2.5 3 1\n").unwrap();
        let s = &ds.spectra()[0];
        assert_eq!(s.xscale(), &XScale::uniform(0.0, 3.0, 3).unwrap());
        assert_eq!(s.errors(), &[1.0, 1.0, 1.0]);
        assert!(read("1 2\n").is_err());
        assert!(read("1 2\n2 2\n4 2\n").is_err());
    }

    #[test]
    fn header_only_has_no_data() {
        let e = read("# just a header\n# and another\n").unwrap_err();
        assert!(matches!(e, RetrieverError::Ascii { line: 2, ref reason } if reason == "no data"));
    }

    #[test]
    fn blank_lines_split_spectra() {
        let ds = read("0 1\n1 2\n2\n\n\n0 3\n1\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.ids(), vec![0, 1]);
        assert_eq!(ds.spectra()[1].counts(), &[3.0]);
    }

    #[test]
    fn bad_tokens_and_ragged_columns() {
        let e = read("0 1\n1 x\n2\n").unwrap_err();
        assert!(matches!(e, RetrieverError::Ascii { line: 2, .. }));
        let e = read("0 1 1\n1 2\n2\n").unwrap_err();
        assert!(matches!(e, RetrieverError::Ascii { line: 2, .. }));
        let e = read("0 1\n1\n2 3\n").unwrap_err();
        assert!(matches!(e, RetrieverError::Ascii { .. }));
        assert!(read("0 1 2 3\n").is_err());
    }

    #[test]
    fn writer_round_trip() {
        let s = Spectrum::new(
            5,
            XScale::uniform(0.1, 0.7, 3).unwrap(),
            vec![1.5, 0.1, 7.0],
            None,
        )
        .unwrap()
        .with_label("a label")
        .with_group_id(2)
        .with_geometry(Some(DetectorGeometry::in_plane(1.0, 2.0, 30.0).unwrap()))
        .with_attribute(Attribute::f64(attr::BANK_ANGLE_DEG, 90.0).unwrap());
        let e = Spectrum::new(
            9,
            XScale::explicit(vec![1.0, 1.5, 4.0]).unwrap(),
            vec![3.0, 4.0],
            Some(vec![0.5, 0.25]),
        )
        .unwrap();
        let ds = DataSet::new("title", XUnits::DspacingA, "counts/s", vec![s, e], vec![])
            .unwrap()
            .with_attribute(Attribute::i64(attr::RUN_NUMBER, 3).unwrap());
        let mut buf = Vec::new();
        write_ascii_to(&mut buf, &ds).unwrap();
        assert_eq!(read_ascii_from(&buf[..], "x").unwrap(), ds);
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let mut buf = Vec::new();
        write_ascii_to(&mut buf, &DataSet::empty(XUnits::TofUs)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')));
    }
}

//! View computations behind the image, slice and 3D displays.
//!
//! The image view draws one spectrum per screen row (scrolling, never
//! squeezing, vertically) and compresses horizontally by taking the maximum
//! of the bins under each screen column, so narrow Bragg peaks survive.
//! Everything here is a pure function of its inputs; equal inputs give
//! byte-identical rasters.

mod colormap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use colormap::COLORMAP;

use crate::dataset::{attr, AttrValue, DataSet, Spectrum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ViewError {
    #[error("invalid viewport: {0}")]
    Viewport(String),
    #[error("cursor ({px}, {py}) is outside the {width}×{height} raster")]
    OutOfRaster {
        px: u32,
        py: u32,
        width: u32,
        height: u32,
    },
    #[error("spectrum {id} has no bins under screen column {px}")]
    NoData { id: u32, px: u32 },
    #[error("channel {channel} out of range; spectrum {id} has {nbins} bins")]
    ChannelOutOfRange { channel: u32, id: u32, nbins: usize },
    #[error("spectrum {id} lacks a non-negative integer {name:?} attribute")]
    MissingAttribute { id: u32, name: &'static str },
    #[error("spectrum {0} has no detector geometry")]
    MissingGeometry(u32),
}

pub type Result<T, E = ViewError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityScale {
    #[default]
    Linear,
    Log,
}

/// How the bins under one compressed screen column are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub width_px: u32,
    pub height_px: u32,
    /// First spectrum (dataset position) shown.
    pub row_offset: u32,
    /// First bin shown when not compressing.
    pub col_offset: u32,
    pub horizontal_compression: bool,
    pub intensity_scale: IntensityScale,
    pub aggregate: Aggregate,
}

impl Viewport {
    pub fn new(width_px: u32, height_px: u32) -> Viewport {
        Viewport {
            width_px,
            height_px,
            row_offset: 0,
            col_offset: 0,
            horizontal_compression: true,
            intensity_scale: IntensityScale::Linear,
            aggregate: Aggregate::Max,
        }
    }
}

/// A rendered image: `pixels` are colormap indices, row-major, `width ×
/// height`. `row_map[y]` is the spectrum id drawn on screen row `y`,
/// `col_map[x]` the half-open bin range under screen column `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterResult {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub row_map: Vec<u32>,
    /// Dataset position of the spectrum on each screen row.
    pub row_index: Vec<u32>,
    pub col_map: Vec<(u32, u32)>,
    /// Smallest and largest value that took part in the color mapping
    /// (positive values only under the log scale); `(0, 0)` if none did.
    pub value_range: (f64, f64),
    /// Screen rows per spectrum.
    pub row_height: u32,
    pub intensity_scale: IntensityScale,
    pub aggregate: Aggregate,
}

impl RasterResult {
    pub fn pixel(&self, px: u32, py: u32) -> u8 {
        self.pixels[(py * self.width + px) as usize]
    }

    /// Binary PGM (P5) image of the color indices.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// RGB triples through [`COLORMAP`], row-major.
    pub fn to_rgb(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|&i| COLORMAP[i as usize])
            .collect()
    }
}

/// Half-open bin ranges of the screen columns.
fn columns(nbins: usize, vp: &Viewport) -> Vec<(u32, u32)> {
    let w = vp.width_px as usize;
    if vp.horizontal_compression && nbins > w {
        (0..w)
            .map(|c| ((c * nbins / w) as u32, ((c + 1) * nbins / w) as u32))
            .collect()
    } else {
        let start = (vp.col_offset as usize).min(nbins);
        let end = (start + w).min(nbins);
        (start..end).map(|b| (b as u32, b as u32 + 1)).collect()
    }
}

/// Combined value of `counts[lo..hi]`, or `None` if the spectrum has no
/// bins there.
fn cell(counts: &[f32], (lo, hi): (u32, u32), agg: Aggregate) -> Option<f64> {
    let hi = (hi as usize).min(counts.len());
    let lo = lo as usize;
    if lo >= hi {
        return None;
    }
    let window = &counts[lo..hi];
    Some(match agg {
        Aggregate::Max => window
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64)),
        Aggregate::Mean => window.iter().map(|&v| v as f64).sum::<f64>() / window.len() as f64,
    })
}

/// Position of the first maximum of `counts[lo..hi]`.
fn argmax(counts: &[f32], (lo, hi): (u32, u32)) -> Option<usize> {
    let hi = (hi as usize).min(counts.len());
    let lo = lo as usize;
    (lo..hi).fold(None, |best: Option<usize>, i| match best {
        Some(b) if counts[b] >= counts[i] => Some(b),
        _ => Some(i),
    })
}

fn color(v: f64, (lo, hi): (f64, f64), scale: IntensityScale) -> u8 {
    if !(v > 0.0) {
        return 0;
    }
    let t = match scale {
        IntensityScale::Linear => {
            let base = lo.max(0.0);
            if hi > base {
                (v - base) / (hi - base)
            } else {
                1.0
            }
        }
        IntensityScale::Log => {
            if hi > lo {
                (v / lo).ln() / (hi / lo).ln()
            } else {
                1.0
            }
        }
    };
    (1.0 + (t.clamp(0.0, 1.0) * 254.0).round()) as u8
}

/// Renders `ds` into a raster for viewport `vp`.
///
/// Vertically, spectra start at `row_offset`; when fewer spectra remain
/// than screen rows, each is replicated over `height / remaining` rows.
/// Horizontally, with compression on and more bins than columns, each
/// column aggregates the bins it covers (max by default); otherwise a
/// window of one bin per column starting at `col_offset` is shown. Colors
/// map positive values onto 1..=255 over the value range (linearly from 0 or
/// logarithmically); zero, negative and missing values and every spectrum
/// whose total counts are zero are color 0.
pub fn image_raster(ds: &DataSet, vp: &Viewport) -> Result<RasterResult> {
    if vp.width_px == 0 || vp.height_px == 0 {
        return Err(ViewError::Viewport(format!(
            "width and height must be at least 1, got {}×{}",
            vp.width_px, vp.height_px
        )));
    }
    let spectra = ds.spectra();
    let first = (vp.row_offset as usize).min(spectra.len());
    let remaining = spectra.len() - first;
    let row_height = (vp.height_px as usize)
        .checked_div(remaining)
        .unwrap_or(1)
        .max(1);
    let shown = remaining.min(vp.height_px as usize / row_height);
    let visible = &spectra[first..first + shown];
    let col_map = columns(ds.max_nbins(), vp);

    let cells: Vec<Vec<Option<f64>>> = visible
        .iter()
        .map(|s| {
            let dead = s.total_counts() == 0.0;
            col_map
                .iter()
                .map(|&c| {
                    if dead {
                        None
                    } else {
                        cell(s.counts(), c, vp.aggregate)
                    }
                })
                .collect()
        })
        .collect();

    let usable =
        |v: f64| v.is_finite() && (vp.intensity_scale == IntensityScale::Linear || v > 0.0);
    let value_range = cells
        .iter()
        .flatten()
        .flatten()
        .copied()
        .filter(|&v| usable(v))
        .fold(None, |r: Option<(f64, f64)>, v| match r {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .unwrap_or((0.0, 0.0));

    let width = col_map.len();
    let mut pixels = Vec::with_capacity(width * shown * row_height);
    let mut row_map = Vec::with_capacity(shown * row_height);
    let mut row_index = Vec::with_capacity(shown * row_height);
    for (k, (s, row)) in visible.iter().zip(&cells).enumerate() {
        let line: Vec<u8> = row
            .iter()
            .map(|v| {
                v.filter(|&v| usable(v))
                    .map_or(0, |v| color(v, value_range, vp.intensity_scale))
            })
            .collect();
        for _ in 0..row_height {
            pixels.extend_from_slice(&line);
            row_map.push(s.id());
            row_index.push((first + k) as u32);
        }
    }
    Ok(RasterResult {
        width: width as u32,
        height: row_map.len() as u32,
        pixels,
        row_map,
        row_index,
        col_map,
        value_range,
        row_height: row_height as u32,
        intensity_scale: vp.intensity_scale,
        aggregate: vp.aggregate,
    })
}

/// What the cursor points at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub spectrum_id: u32,
    pub label: String,
    /// Centre of the reported bin, in the dataset's x units.
    pub x_at_cursor: f64,
    pub y_value: f32,
    pub bin_index: u32,
}

fn check_cursor(rr: &RasterResult, px: u32, py: u32) -> Result<()> {
    if px >= rr.width || py >= rr.height {
        return Err(ViewError::OutOfRaster {
            px,
            py,
            width: rr.width,
            height: rr.height,
        });
    }
    Ok(())
}

/// The spectrum drawn on screen row `py`.
pub fn pointed_spectrum<'a>(ds: &'a DataSet, rr: &RasterResult, py: u32) -> Result<&'a Spectrum> {
    if py >= rr.height {
        return Err(ViewError::OutOfRaster {
            px: 0,
            py,
            width: rr.width,
            height: rr.height,
        });
    }
    Ok(&ds.spectra()[rr.row_index[py as usize] as usize])
}

/// Data under screen pixel `(px, py)`. For a column covering several bins
/// the bin holding the maximum is reported, matching what was drawn.
pub fn cursor_readout(ds: &DataSet, rr: &RasterResult, px: u32, py: u32) -> Result<Readout> {
    check_cursor(rr, px, py)?;
    let s = pointed_spectrum(ds, rr, py)?;
    let bin =
        argmax(s.counts(), rr.col_map[px as usize]).ok_or(ViewError::NoData { id: s.id(), px })?;
    Ok(Readout {
        spectrum_id: s.id(),
        label: s.label().to_string(),
        x_at_cursor: s.xscale().bin_center(bin),
        y_value: s.counts()[bin],
        bin_index: bin as u32,
    })
}

/// The channel a linked slice view should show for the cursor position.
pub fn find_slice_for_cursor(ds: &DataSet, rr: &RasterResult, px: u32, py: u32) -> Result<u32> {
    Ok(cursor_readout(ds, rr, px, py)?.bin_index)
}

/// Row-major grid of per-pixel values of an area detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_rows: u32,
    pub n_cols: u32,
    pub values: Vec<f32>,
}

impl Grid {
    pub fn get(&self, row: u32, col: u32) -> f32 {
        self.values[(row * self.n_cols + col) as usize]
    }
}

fn pixel_of(s: &Spectrum) -> Result<(u32, u32)> {
    let coord = |name: &'static str| {
        s.attr(name)
            .and_then(AttrValue::as_i64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or(ViewError::MissingAttribute { id: s.id(), name })
    };
    Ok((coord(attr::ROW)?, coord(attr::COL)?))
}

fn grid_of(ds: &DataSet, value: impl Fn(&Spectrum) -> Result<f32>) -> Result<Grid> {
    let placed = ds
        .spectra()
        .iter()
        .map(|s| Ok((pixel_of(s)?, value(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let n_rows = placed.iter().map(|((r, _), _)| r + 1).max().unwrap_or(0);
    let n_cols = placed.iter().map(|((_, c), _)| c + 1).max().unwrap_or(0);
    let mut values = vec![0.0f32; n_rows as usize * n_cols as usize];
    for ((r, c), v) in placed {
        values[(r * n_cols + c) as usize] = v;
    }
    Ok(Grid {
        n_rows,
        n_cols,
        values,
    })
}

/// Counts in `channel` laid out by the spectra's `row`/`col` attributes;
/// pixels with no spectrum are 0.
pub fn time_slice(ds: &DataSet, channel: u32) -> Result<Grid> {
    grid_of(ds, |s| {
        s.counts()
            .get(channel as usize)
            .copied()
            .ok_or(ViewError::ChannelOutOfRange {
                channel,
                id: s.id(),
                nbins: s.nbins(),
            })
    })
}

/// Total counts per pixel, laid out like [`time_slice`].
pub fn total_counts_grid(ds: &DataSet) -> Result<Grid> {
    grid_of(ds, |s| Ok(s.total_counts() as f32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "channel")]
pub enum PointMode {
    Total,
    Channel(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

/// One point per spectrum at its detector position, weighted by total
/// counts or by the counts of one channel.
pub fn point_cloud(ds: &DataSet, mode: PointMode) -> Result<Vec<Point>> {
    ds.spectra()
        .iter()
        .map(|s| {
            let g = s.geometry().ok_or(ViewError::MissingGeometry(s.id()))?;
            let intensity = match mode {
                PointMode::Total => s.total_counts(),
                PointMode::Channel(c) => {
                    *s.counts()
                        .get(c as usize)
                        .ok_or(ViewError::ChannelOutOfRange {
                            channel: c,
                            id: s.id(),
                            nbins: s.nbins(),
                        })? as f64
                }
            };
            let [x, y, z] = g.position();
            Ok(Point {
                id: s.id(),
                x,
                y,
                z,
                intensity,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Attribute, XScale, XUnits};

    fn spectrum(id: u32, counts: Vec<f32>) -> Spectrum {
        let n = counts.len() as u32;
        Spectrum::new(id, XScale::uniform(0.0, n as f64, n).unwrap(), counts, None).unwrap()
    }

    fn dataset(rows: Vec<Vec<f32>>) -> DataSet {
        let spectra = rows
            .into_iter()
            .enumerate()
            .map(|(i, c)| spectrum(i as u32 * 10, c))
            .collect();
        DataSet::new("t", XUnits::TofUs, "counts", spectra, vec![]).unwrap()
    }

    #[test]
    fn identity_columns_when_bins_equal_width() {
        let ds = dataset(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let rr = image_raster(&ds, &Viewport::new(4, 3)).unwrap();
        assert_eq!(rr.col_map, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(rr.height, 3);
        assert_eq!(rr.row_height, 3);
        assert_eq!(rr.row_map, vec![0, 0, 0]);
        for y in 1..3 {
            assert_eq!(rr.pixels[y * 4..(y + 1) * 4], rr.pixels[..4]);
        }
        assert_eq!(rr.value_range, (1.0, 4.0));
        assert_eq!(rr.pixel(3, 0), 255);
    }

    #[test]
    fn compression_takes_pairwise_max() {
        let counts: Vec<f32> = (0..8)
            .map(|i| [3.0, 1.0, 0.0, 9.0, 5.0, 5.0, 2.0, 7.0][i])
            .collect();
        let ds = dataset(vec![counts]);
        let rr = image_raster(&ds, &Viewport::new(4, 1)).unwrap();
        assert_eq!(rr.col_map, vec![(0, 2), (2, 4), (4, 6), (6, 8)]);
        let r = cursor_readout(&ds, &rr, 1, 0).unwrap();
        assert_eq!((r.bin_index, r.y_value), (3, 9.0));
        assert_eq!(rr.value_range, (3.0, 9.0));
        assert_eq!(rr.pixel(1, 0), 255);
        assert_eq!(find_slice_for_cursor(&ds, &rr, 3, 0).unwrap(), 7);
    }

    #[test]
    fn dead_spectra_are_black_rows() {
        let ds = dataset(vec![vec![1.0, 2.0], vec![0.0, 0.0], vec![4.0, 0.0]]);
        let rr = image_raster(&ds, &Viewport::new(2, 3)).unwrap();
        assert_eq!(&rr.pixels[2..4], &[0, 0]);
        assert_eq!(rr.pixel(1, 2), 0);
        assert!(rr.pixel(0, 0) > 0);
        let log = image_raster(
            &ds,
            &Viewport {
                intensity_scale: IntensityScale::Log,
                ..Viewport::new(2, 3)
            },
        )
        .unwrap();
        assert_eq!(log.value_range, (1.0, 4.0));
        assert_eq!((log.pixel(0, 0), log.pixel(0, 2)), (1, 255));
        assert_eq!(log.pixel(1, 2), 0);
    }

    #[test]
    fn scrolling_and_pointed_spectrum() {
        let ds = dataset((0..20).map(|i| vec![i as f32 + 1.0; 3]).collect());
        let vp = Viewport {
            row_offset: 10,
            ..Viewport::new(3, 5)
        };
        let rr = image_raster(&ds, &vp).unwrap();
        assert_eq!(rr.height, 5);
        assert_eq!(pointed_spectrum(&ds, &rr, 0).unwrap().id(), 100);
        assert!(pointed_spectrum(&ds, &rr, 5).is_err());
        assert!(cursor_readout(&ds, &rr, 3, 0).is_err());
        let past = image_raster(
            &ds,
            &Viewport {
                row_offset: 25,
                ..vp
            },
        )
        .unwrap();
        assert_eq!(past.height, 0);
        assert!(pointed_spectrum(&ds, &past, 0).is_err());
    }

    #[test]
    fn uncompressed_window_and_short_spectra() {
        let ds = dataset(vec![(0..10).map(|i| i as f32).collect(), vec![5.0; 4]]);
        let vp = Viewport {
            horizontal_compression: false,
            col_offset: 3,
            ..Viewport::new(4, 2)
        };
        let rr = image_raster(&ds, &vp).unwrap();
        assert_eq!(rr.col_map, vec![(3, 4), (4, 5), (5, 6), (6, 7)]);
        let r = cursor_readout(&ds, &rr, 2, 0).unwrap();
        assert_eq!((r.bin_index, r.y_value, r.x_at_cursor), (5, 5.0, 5.5));
        assert_eq!(rr.pixel(1, 1), 0);
        assert!(matches!(
            cursor_readout(&ds, &rr, 1, 1),
            Err(ViewError::NoData { id: 10, .. })
        ));
        assert!(image_raster(&ds, &Viewport::new(0, 2)).is_err());
    }

    fn pixel_spectrum(id: u32, row: i64, col: i64, counts: Vec<f32>) -> Spectrum {
        spectrum(id, counts).with_attributes(vec![
            Attribute::i64(attr::ROW, row).unwrap(),
            Attribute::i64(attr::COL, col).unwrap(),
        ])
    }

    #[test]
    fn time_slice_places_pixels() {
        let spectra = vec![
            pixel_spectrum(0, 0, 0, vec![1.0, 2.0]),
            pixel_spectrum(1, 0, 1, vec![3.0, 4.0]),
            pixel_spectrum(2, 1, 1, vec![5.0, 6.0]),
        ];
        let ds = DataSet::new("d", XUnits::TofUs, "counts", spectra, vec![]).unwrap();
        let g = time_slice(&ds, 0).unwrap();
        assert_eq!((g.n_rows, g.n_cols), (2, 2));
        assert_eq!(g.values, vec![1.0, 3.0, 0.0, 5.0]);
        assert!(matches!(
            time_slice(&ds, 2),
            Err(ViewError::ChannelOutOfRange { channel: 2, .. })
        ));
        let bare = dataset(vec![vec![1.0]]);
        assert!(matches!(
            time_slice(&bare, 0),
            Err(ViewError::MissingAttribute { name: "row", .. })
        ));
        assert_eq!(
            total_counts_grid(&ds).unwrap().values,
            vec![3.0, 7.0, 0.0, 11.0]
        );
    }

    #[test]
    fn colormap_is_monotone_from_black() {
        assert_eq!(COLORMAP[0], [0, 0, 0]);
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        assert!(COLORMAP.windows(2).all(|w| lum(w[1]) >= lum(w[0])));
    }

    #[test]
    fn pgm_header() {
        let ds = dataset(vec![vec![1.0, 2.0]]);
        let rr = image_raster(&ds, &Viewport::new(2, 1)).unwrap();
        let pgm = rr.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(pgm.len(), 11 + 2);
    }
}

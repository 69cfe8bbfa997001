use std::fmt::Debug;
use std::sync::Arc;

use super::{GoniometerSetting, PeakError, Result};
use crate::dataset::{
    attr, norm, AttrValue, Attribute, DataSet, DetectorGeometry, Spectrum, XScale, XUnits,
};

/// Attribute holding the orientation index of an SCD volume.
pub const ORIENTATION_INDEX: &str = "orientation_index";
/// Attribute holding the goniometer `(chi, phi, omega)` in radians.
pub const GONIOMETER: &str = "goniometer";

/// Maps detector pixels to positions relative to the sample (m).
pub trait PixelGeometry: Debug + Send + Sync {
    fn position(&self, row: u32, col: u32) -> [f64; 3];

    /// Position at a fractional pixel coordinate. The default uses the
    /// nearest pixel.
    fn position_at(&self, row: f64, col: f64) -> [f64; 3] {
        self.position(row.round().max(0.0) as u32, col.round().max(0.0) as u32)
    }

    fn solid_angle(&self, _row: u32, _col: u32) -> f64 {
        0.0
    }
}

/// A flat rectangular area detector facing the sample.
///
/// The panel centre lies at distance `distance` in the horizontal (x, z)
/// plane at scattering angle `two_theta`. Columns run horizontally (towards
/// smaller 2θ as the column index grows when `two_theta > 0`), rows run
/// along +y.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPanel {
    pub n_rows: u32,
    pub n_cols: u32,
    pub distance: f64,
    pub two_theta: f64,
    /// Pixel pitch in metres, square pixels.
    pub pitch: f64,
}

impl FlatPanel {
    pub fn new(
        n_rows: u32,
        n_cols: u32,
        distance: f64,
        two_theta: f64,
        pitch: f64,
    ) -> Result<FlatPanel> {
        if n_rows == 0 || n_cols == 0 {
            return Err(PeakError::Volume("panel needs at least one pixel".into()));
        }
        if !(distance > 0.0) || !(pitch > 0.0) || !two_theta.is_finite() {
            return Err(PeakError::Volume(format!(
                "bad panel distance {distance}, pitch {pitch} or angle {two_theta}"
            )));
        }
        Ok(FlatPanel {
            n_rows,
            n_cols,
            distance,
            two_theta,
            pitch,
        })
    }

    fn normal(&self) -> [f64; 3] {
        [self.two_theta.sin(), 0.0, self.two_theta.cos()]
    }

    fn col_axis(&self) -> [f64; 3] {
        [self.two_theta.cos(), 0.0, -self.two_theta.sin()]
    }

    /// Fractional `(row, col)` where the ray from the sample along `dir`
    /// meets the panel plane, or `None` if it points away from the panel.
    /// The result may lie outside the pixel grid.
    pub fn project(&self, dir: [f64; 3]) -> Option<(f64, f64)> {
        let n = self.normal();
        let along = dot(n, dir);
        if along <= 0.0 {
            return None;
        }
        let t = self.distance / along;
        let hit = dir.map(|d| d * t);
        let u = dot(hit, self.col_axis());
        let v = hit[1];
        Some((
            v / self.pitch + (self.n_rows as f64 - 1.0) / 2.0,
            u / self.pitch + (self.n_cols as f64 - 1.0) / 2.0,
        ))
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl PixelGeometry for FlatPanel {
    fn position(&self, row: u32, col: u32) -> [f64; 3] {
        self.position_at(row as f64, col as f64)
    }

    fn position_at(&self, row: f64, col: f64) -> [f64; 3] {
        let u = (col - (self.n_cols as f64 - 1.0) / 2.0) * self.pitch;
        let v = (row - (self.n_rows as f64 - 1.0) / 2.0) * self.pitch;
        let (n, a) = (self.normal(), self.col_axis());
        [
            self.distance * n[0] + u * a[0],
            v,
            self.distance * n[2] + u * a[2],
        ]
    }

    fn solid_angle(&self, row: u32, col: u32) -> f64 {
        let p = self.position(row, col);
        let r = norm(p);
        self.pitch * self.pitch * dot(self.normal(), p) / (r * r * r)
    }
}

/// Explicit per-pixel positions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTable {
    n_cols: u32,
    positions: Vec<[f64; 3]>,
    solid_angles: Vec<f64>,
}

impl PixelTable {
    pub fn new(
        n_cols: u32,
        positions: Vec<[f64; 3]>,
        solid_angles: Vec<f64>,
    ) -> Result<PixelTable> {
        if n_cols == 0
            || positions.len() % n_cols as usize != 0
            || solid_angles.len() != positions.len()
        {
            return Err(PeakError::Volume(format!(
                "{} positions / {} solid angles do not fill rows of {n_cols}",
                positions.len(),
                solid_angles.len()
            )));
        }
        Ok(PixelTable {
            n_cols,
            positions,
            solid_angles,
        })
    }
}

impl PixelGeometry for PixelTable {
    fn position(&self, row: u32, col: u32) -> [f64; 3] {
        self.positions[(row * self.n_cols + col) as usize]
    }

    /// Bilinear between the four surrounding pixels, which is exact for
    /// any flat detector; clamped to the grid.
    fn position_at(&self, row: f64, col: f64) -> [f64; 3] {
        let n_rows = (self.positions.len() / self.n_cols as usize) as u32;
        let split = |x: f64, n: u32| {
            let x = x.clamp(0.0, (n - 1) as f64);
            let i = (x.floor() as u32).min(n.saturating_sub(2));
            (i, (i + 1).min(n - 1), x - i as f64)
        };
        let (r0, r1, fr) = split(row, n_rows);
        let (c0, c1, fc) = split(col, self.n_cols);
        let (a, b, c, d) = (
            self.position(r0, c0),
            self.position(r0, c1),
            self.position(r1, c0),
            self.position(r1, c1),
        );
        [0, 1, 2].map(|k| {
            (1.0 - fr) * ((1.0 - fc) * a[k] + fc * b[k]) + fr * ((1.0 - fc) * c[k] + fc * d[k])
        })
    }

    fn solid_angle(&self, row: u32, col: u32) -> f64 {
        self.solid_angles[(row * self.n_cols + col) as usize]
    }
}

/// Counts from one area detector at one crystal orientation, indexed
/// `[row][col][channel]`.
#[derive(Debug, Clone)]
pub struct DetectorVolume {
    n_rows: u32,
    n_cols: u32,
    tof: XScale,
    counts: Vec<f32>,
    pixels: Arc<dyn PixelGeometry>,
    l1: f64,
    orientation_index: u32,
    goniometer: GoniometerSetting,
}

impl DetectorVolume {
    pub fn new(
        n_rows: u32,
        n_cols: u32,
        tof: XScale,
        counts: Vec<f32>,
        pixels: Arc<dyn PixelGeometry>,
        l1: f64,
    ) -> Result<DetectorVolume> {
        let expected = n_rows as usize * n_cols as usize * tof.nbins();
        if counts.len() != expected {
            return Err(PeakError::Volume(format!(
                "{} counts for {n_rows}×{n_cols}×{} voxels",
                counts.len(),
                tof.nbins()
            )));
        }
        if !(l1 > 0.0) {
            return Err(PeakError::Volume(format!(
                "initial flight path must be positive, got {l1}"
            )));
        }
        if tof.first() <= 0.0 {
            return Err(PeakError::Volume(
                "time-of-flight axis must be positive".into(),
            ));
        }
        for r in 0..n_rows {
            for c in 0..n_cols {
                let p = pixels.position(r, c);
                if !(norm(p) > 0.0) {
                    return Err(PeakError::Volume(format!(
                        "pixel ({r}, {c}) sits at the sample"
                    )));
                }
            }
        }
        Ok(DetectorVolume {
            n_rows,
            n_cols,
            tof,
            counts,
            pixels,
            l1,
            orientation_index: 0,
            goniometer: GoniometerSetting::default(),
        })
    }

    pub fn with_orientation(mut self, index: u32, goniometer: GoniometerSetting) -> DetectorVolume {
        self.orientation_index = index;
        self.goniometer = goniometer;
        self
    }

    pub fn n_rows(&self) -> u32 {
        self.n_rows
    }

    pub fn n_cols(&self) -> u32 {
        self.n_cols
    }

    pub fn n_channels(&self) -> u32 {
        self.tof.nbins() as u32
    }

    pub fn tof_scale(&self) -> &XScale {
        &self.tof
    }

    pub fn counts(&self) -> &[f32] {
        &self.counts
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn orientation_index(&self) -> u32 {
        self.orientation_index
    }

    pub fn goniometer(&self) -> GoniometerSetting {
        self.goniometer
    }

    pub fn pixels(&self) -> &dyn PixelGeometry {
        self.pixels.as_ref()
    }

    pub fn index(&self, row: u32, col: u32, channel: u32) -> usize {
        (row as usize * self.n_cols as usize + col as usize) * self.tof.nbins() + channel as usize
    }

    pub fn get(&self, row: u32, col: u32, channel: u32) -> f32 {
        self.counts[self.index(row, col, channel)]
    }

    /// Time-of-flight spectrum of one pixel.
    pub fn pixel_counts(&self, row: u32, col: u32) -> &[f32] {
        let start = self.index(row, col, 0);
        &self.counts[start..start + self.tof.nbins()]
    }

    pub fn pixel_geometry(&self, row: u32, col: u32) -> DetectorGeometry {
        DetectorGeometry::new(
            self.pixels.position(row, col),
            self.l1,
            self.pixels.solid_angle(row, col),
            1.0,
        )
        .expect("pixel positions are validated on construction")
    }

    /// Time of flight at a fractional channel, interpolating linearly within
    /// the bin so that channel `i` maps to the centre of bin `i`.
    pub fn tof_at(&self, channel: f64) -> f64 {
        let n = self.tof.nbins();
        let x = channel + 0.5;
        let i = (x.floor().max(0.0) as usize).min(n - 1);
        self.tof.edge(i) + (x - i as f64) * self.tof.bin_width(i)
    }

    /// One spectrum per pixel, id `row·n_cols + col`, carrying `row`/`col`
    /// attributes and the pixel geometry.
    pub fn to_dataset(&self, title: &str) -> Result<DataSet> {
        let g = self.goniometer;
        let setting = vec![
            Attribute::i64(ORIENTATION_INDEX, self.orientation_index as i64)?,
            Attribute::new(GONIOMETER, AttrValue::Triple([g.chi, g.phi, g.omega]))?,
        ];
        let mut spectra = Vec::with_capacity((self.n_rows * self.n_cols) as usize);
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                // The setting is repeated per pixel: run files keep spectrum
                // attributes but not dataset ones.
                let mut attrs = vec![
                    Attribute::i64(attr::ROW, r as i64)?,
                    Attribute::i64(attr::COL, c as i64)?,
                ];
                attrs.extend(setting.iter().cloned());
                let s = Spectrum::new(
                    r * self.n_cols + c,
                    self.tof.clone(),
                    self.pixel_counts(r, c).to_vec(),
                    None,
                )?
                .with_geometry(Some(self.pixel_geometry(r, c)))
                .with_attributes(attrs);
                spectra.push(s);
            }
        }
        Ok(DataSet::new(
            title,
            XUnits::TofUs,
            "counts",
            spectra,
            setting,
        )?)
    }

    /// Rebuilds a volume from per-pixel spectra carrying `row`/`col`
    /// attributes and geometry, all on one time-of-flight axis.
    pub fn from_dataset(ds: &DataSet) -> Result<DetectorVolume> {
        if ds.x_units() != XUnits::TofUs {
            return Err(PeakError::Volume(format!(
                "expected a TOF dataset, got {}",
                ds.x_units()
            )));
        }
        let first = ds
            .spectra()
            .first()
            .ok_or_else(|| PeakError::Volume("empty dataset".into()))?;
        let coord = |s: &Spectrum, key: &str| -> Result<u32> {
            s.attr(key)
                .and_then(AttrValue::as_i64)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| {
                    PeakError::Volume(format!("spectrum {} lacks a valid {key} attribute", s.id()))
                })
        };
        let mut n_rows = 0;
        let mut n_cols = 0;
        for s in ds.spectra() {
            n_rows = n_rows.max(coord(s, attr::ROW)? + 1);
            n_cols = n_cols.max(coord(s, attr::COL)? + 1);
        }
        let tof = first.xscale().clone();
        let nb = tof.nbins();
        let n_pix = n_rows as usize * n_cols as usize;
        let mut counts = vec![0f32; n_pix * nb];
        let mut positions = vec![None; n_pix];
        let mut solid = vec![0.0; n_pix];
        let mut l1 = None;
        for s in ds.spectra() {
            if s.xscale() != &tof {
                return Err(PeakError::Volume(format!(
                    "spectrum {} has a different TOF axis",
                    s.id()
                )));
            }
            let g = s
                .geometry()
                .ok_or_else(|| PeakError::Volume(format!("spectrum {} has no geometry", s.id())))?;
            let k = (coord(s, attr::ROW)? * n_cols + coord(s, attr::COL)?) as usize;
            if positions[k].is_some() {
                return Err(PeakError::Volume(format!(
                    "two spectra for pixel of spectrum {}",
                    s.id()
                )));
            }
            positions[k] = Some(g.position());
            solid[k] = g.solid_angle();
            l1.get_or_insert(g.initial_path());
            counts[k * nb..(k + 1) * nb].copy_from_slice(s.counts());
        }
        let positions = positions
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                p.ok_or_else(|| {
                    PeakError::Volume(format!(
                        "no spectrum for pixel ({}, {})",
                        k / n_cols as usize,
                        k % n_cols as usize
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let table = PixelTable::new(n_cols, positions, solid)?;
        let mut vol = DetectorVolume::new(
            n_rows,
            n_cols,
            tof,
            counts,
            Arc::new(table),
            l1.expect("non-empty"),
        )?;
        let setting = |key: &str| ds.attr(key).or_else(|| first.attr(key));
        if let Some(i) = setting(ORIENTATION_INDEX).and_then(AttrValue::as_i64) {
            vol.orientation_index = u32::try_from(i)
                .map_err(|_| PeakError::Volume(format!("bad orientation index {i}")))?;
        }
        if let Some(AttrValue::Triple([chi, phi, omega])) = setting(GONIOMETER) {
            vol.goniometer = GoniometerSetting::new(*chi, *phi, *omega)?;
        }
        Ok(vol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> FlatPanel {
        FlatPanel::new(4, 6, 0.3, 1.2, 0.002).unwrap()
    }

    #[test]
    fn panel_centre_and_projection() {
        let p = FlatPanel::new(5, 5, 0.3, 1.2, 0.002).unwrap();
        let c = p.position(2, 2);
        assert!((norm(c) - 0.3).abs() < 1e-15);
        assert!((c[0].atan2(c[2]) - 1.2).abs() < 1e-15);
        for (r, col) in [(0.0, 0.0), (1.3, 3.7), (4.0, 2.0)] {
            let pos = p.position_at(r, col);
            let (r2, c2) = p.project(pos).unwrap();
            assert!((r - r2).abs() < 1e-9 && (col - c2).abs() < 1e-9);
        }
        assert!(p.project([-1.0, 0.0, -1.0]).is_none());
    }

    #[test]
    fn dataset_round_trip() {
        let tof = XScale::uniform(1000.0, 2000.0, 3).unwrap();
        let counts: Vec<f32> = (0..4 * 6 * 3).map(|v| v as f32).collect();
        let vol = DetectorVolume::new(4, 6, tof, counts, Arc::new(panel()), 9.0)
            .unwrap()
            .with_orientation(3, GoniometerSetting::new(0.1, 0.2, 0.3).unwrap());
        let ds = vol.to_dataset("scd").unwrap();
        assert_eq!(ds.len(), 24);
        let back = DetectorVolume::from_dataset(&ds).unwrap();
        assert_eq!(back.counts(), vol.counts());
        assert_eq!(back.orientation_index(), 3);
        assert_eq!(back.goniometer(), vol.goniometer());
        for r in 0..4 {
            for c in 0..6 {
                assert_eq!(back.pixel_geometry(r, c), vol.pixel_geometry(r, c));
            }
        }
        for (r, c) in [(0.0, 0.0), (1.5, 2.25), (3.0, 5.0), (2.9, 0.1)] {
            let (a, b) = (
                back.pixels().position_at(r, c),
                vol.pixels().position_at(r, c),
            );
            assert!(
                (0..3).all(|k| (a[k] - b[k]).abs() < 1e-15),
                "{a:?} vs {b:?}"
            );
        }
        let partial = ds.with_spectra(ds.spectra()[1..].to_vec()).unwrap();
        assert!(DetectorVolume::from_dataset(&partial).is_err());
    }

    #[test]
    fn tof_at_channel_centres() {
        let tof = XScale::uniform(1000.0, 2000.0, 10).unwrap();
        let vol = DetectorVolume::new(4, 6, tof, vec![0.0; 240], Arc::new(panel()), 9.0).unwrap();
        assert_eq!(vol.tof_at(0.0), 1050.0);
        assert_eq!(vol.tof_at(9.0), 1950.0);
        assert_eq!(vol.tof_at(2.25), 1275.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let tof = XScale::uniform(1000.0, 2000.0, 10).unwrap();
        assert!(
            DetectorVolume::new(4, 6, tof.clone(), vec![0.0; 10], Arc::new(panel()), 9.0).is_err()
        );
        assert!(DetectorVolume::new(4, 6, tof, vec![0.0; 240], Arc::new(panel()), 0.0).is_err());
    }
}

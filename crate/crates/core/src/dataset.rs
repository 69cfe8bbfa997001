//! Immutable data model: x-scales, attributes, detector geometry, spectra and
//! datasets, plus the size accounting used for memory budgeting.
//!
//! Every constructor validates its invariants and rejects malformed input.
//! Nothing in this module mutates a value after construction; the `with_*`
//! builders consume `self` and hand back a new value.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved attribute names.
pub mod attr {
    pub const RUN_NUMBER: &str = "run_number";
    pub const START_TIME: &str = "start_time";
    pub const LABEL: &str = "label";
    pub const BANK_ANGLE_DEG: &str = "bank_angle_deg";
    pub const ROW: &str = "row";
    pub const COL: &str = "col";
    pub const MONITOR: &str = "monitor";

    pub const RESERVED: [&str; 7] = [
        RUN_NUMBER,
        START_TIME,
        LABEL,
        BANK_ANGLE_DEG,
        ROW,
        COL,
        MONITOR,
    ];
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("invalid x-scale: {0}")]
    InvalidScale(String),
    #[error("spectrum {id}: {reason}")]
    InvalidSpectrum { id: u32, reason: String },
    #[error("invalid attribute {name:?}: {reason}")]
    InvalidAttribute { name: String, reason: String },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("duplicate spectrum id {0}")]
    DuplicateId(u32),
    #[error("unknown spectrum id {0}")]
    UnknownId(u32),
    #[error("unknown x units {0:?}")]
    UnknownUnits(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Physical units of a dataset's x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XUnits {
    #[serde(rename = "tof_us")]
    TofUs,
    #[serde(rename = "wavelength_A")]
    WavelengthA,
    #[serde(rename = "dspacing_A")]
    DspacingA,
    #[serde(rename = "Q_invA")]
    QInvA,
}

impl XUnits {
    pub const ALL: [XUnits; 4] = [
        XUnits::TofUs,
        XUnits::WavelengthA,
        XUnits::DspacingA,
        XUnits::QInvA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            XUnits::TofUs => "tof_us",
            XUnits::WavelengthA => "wavelength_A",
            XUnits::DspacingA => "dspacing_A",
            XUnits::QInvA => "Q_invA",
        }
    }

    /// Binary code used by the run-file and wire formats.
    pub fn code(self) -> u8 {
        match self {
            XUnits::TofUs => 0,
            XUnits::WavelengthA => 1,
            XUnits::DspacingA => 2,
            XUnits::QInvA => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<XUnits> {
        XUnits::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for XUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for XUnits {
    type Err = DataError;

    /// Accepts the canonical names plus the short forms used on the command
    /// line (`tof`, `wavelength`, `d`, `q`).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tof_us" | "tof" => Ok(XUnits::TofUs),
            "wavelength_A" | "wavelength" | "lambda" => Ok(XUnits::WavelengthA),
            "dspacing_A" | "dspacing" | "d" => Ok(XUnits::DspacingA),
            "Q_invA" | "q" | "Q" => Ok(XUnits::QInvA),
            other => Err(DataError::UnknownUnits(other.to_string())),
        }
    }
}

/// Bin boundaries of a histogram.
///
/// Bins are half-open `[lo, hi)`; the final right edge is exclusive too, so a
/// value equal to the last edge falls outside the scale.
#[derive(Debug, Clone, PartialEq)]
pub enum XScale {
    Uniform { start: f64, end: f64, nbins: u32 },
    Explicit { edges: Vec<f64> },
}

impl XScale {
    pub fn uniform(start: f64, end: f64, nbins: u32) -> Result<XScale> {
        if nbins == 0 {
            return Err(DataError::InvalidScale("nbins must be at least 1".into()));
        }
        if !start.is_finite() || !end.is_finite() {
            return Err(DataError::InvalidScale(format!(
                "non-finite range [{start}, {end})"
            )));
        }
        if start >= end {
            return Err(DataError::InvalidScale(format!(
                "start {start} must be below end {end}"
            )));
        }
        Ok(XScale::Uniform { start, end, nbins })
    }

    pub fn explicit(edges: Vec<f64>) -> Result<XScale> {
        if edges.len() < 2 {
            return Err(DataError::InvalidScale(format!(
                "need at least 2 edges, got {}",
                edges.len()
            )));
        }
        if u32::try_from(edges.len() - 1).is_err() {
            return Err(DataError::InvalidScale("too many bins".into()));
        }
        if let Some(i) = edges.iter().position(|e| !e.is_finite()) {
            return Err(DataError::InvalidScale(format!("edge {i} is not finite")));
        }
        if let Some(i) = edges.windows(2).position(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidScale(format!(
                "edges not strictly increasing at index {}: {} >= {}",
                i + 1,
                edges[i],
                edges[i + 1]
            )));
        }
        Ok(XScale::Explicit { edges })
    }

    pub fn nbins(&self) -> usize {
        match self {
            XScale::Uniform { nbins, .. } => *nbins as usize,
            XScale::Explicit { edges } => edges.len() - 1,
        }
    }

    pub fn first(&self) -> f64 {
        self.edge(0)
    }

    pub fn last(&self) -> f64 {
        self.edge(self.nbins())
    }

    /// Edge `i`, for `0 <= i <= nbins`.
    pub fn edge(&self, i: usize) -> f64 {
        match self {
            XScale::Uniform { start, end, nbins } => {
                let n = *nbins as usize;
                assert!(i <= n, "edge index {i} out of range for {n} bins");
                if i == n {
                    *end
                } else {
                    start + i as f64 * (end - start) / n as f64
                }
            }
            XScale::Explicit { edges } => edges[i],
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        match self {
            XScale::Uniform { .. } => (0..=self.nbins()).map(|i| self.edge(i)).collect(),
            XScale::Explicit { edges } => edges.clone(),
        }
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.edge(i) + self.edge(i + 1))
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.edge(i + 1) - self.edge(i)
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, XScale::Uniform { .. })
    }

    /// Index of the bin containing `x`, or `None` when `x` lies outside
    /// `[first, last)`.
    pub fn bin_index(&self, x: f64) -> Option<u32> {
        if !(x >= self.first() && x < self.last()) {
            return None;
        }
        let i = match self {
            XScale::Uniform { start, end, nbins } => {
                let n = *nbins as usize;
                let guess = (((x - start) / (end - start)) * n as f64) as usize;
                // Correct for rounding in the division against the exact edges.
                let mut i = guess.min(n - 1);
                while i > 0 && x < self.edge(i) {
                    i -= 1;
                }
                while i + 1 < n && x >= self.edge(i + 1) {
                    i += 1;
                }
                i
            }
            XScale::Explicit { edges } => edges.partition_point(|&e| e <= x) - 1,
        };
        Some(i as u32)
    }

    /// Bins `[lo, hi)` as an explicit scale whose edges are bit-identical to
    /// the corresponding edges of `self`.
    pub fn slice_bins(&self, lo: usize, hi: usize) -> Result<XScale> {
        if lo >= hi || hi > self.nbins() {
            return Err(DataError::InvalidScale(format!(
                "bin range [{lo}, {hi}) invalid for {} bins",
                self.nbins()
            )));
        }
        XScale::explicit((lo..=hi).map(|i| self.edge(i)).collect())
    }
}

/// Attribute payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AttrValue {
    F64(f64),
    I64(i64),
    Str(String),
    Triple([f64; 3]),
}

impl AttrValue {
    /// Numeric view used for comparisons; integers and floats compare equal
    /// when they denote the same number.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::F64(v) => Some(*v),
            AttrValue::I64(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            AttrValue::I64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Loose equality: numbers by value regardless of integer/float tag.
    pub fn matches(&self, other: &AttrValue) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => self == other,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            AttrValue::F64(_) => "f64",
            AttrValue::I64(_) => "i64",
            AttrValue::Str(_) => "string",
            AttrValue::Triple(_) => "triple",
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::F64(v) => write!(f, "{v}"),
            AttrValue::I64(v) => write!(f, "{v}"),
            AttrValue::Str(s) => f.write_str(s),
            AttrValue::Triple([x, y, z]) => write!(f, "({x}, {y}, {z})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    name: String,
    value: AttrValue,
}

impl Attribute {
    /// Builds an attribute, checking reserved names carry their fixed type.
    pub fn new(name: impl Into<String>, value: AttrValue) -> Result<Attribute> {
        let name = name.into();
        if name.is_empty() {
            return Err(DataError::InvalidAttribute {
                name,
                reason: "empty name".into(),
            });
        }
        let expected = match name.as_str() {
            attr::RUN_NUMBER | attr::START_TIME | attr::ROW | attr::COL | attr::MONITOR => {
                Some("i64")
            }
            attr::LABEL => Some("string"),
            attr::BANK_ANGLE_DEG => Some("f64"),
            _ => None,
        };
        if let Some(expected) = expected {
            if value.type_name() != expected {
                return Err(DataError::InvalidAttribute {
                    reason: format!(
                        "reserved attribute requires {expected}, got {}",
                        value.type_name()
                    ),
                    name,
                });
            }
        }
        Ok(Attribute { name, value })
    }

    pub fn f64(name: &str, v: f64) -> Result<Attribute> {
        Attribute::new(name, AttrValue::F64(v))
    }

    pub fn i64(name: &str, v: i64) -> Result<Attribute> {
        Attribute::new(name, AttrValue::I64(v))
    }

    pub fn string(name: &str, v: impl Into<String>) -> Result<Attribute> {
        Attribute::new(name, AttrValue::Str(v.into()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &AttrValue {
        &self.value
    }
}

/// Looks up `name` in an attribute list.
pub fn find_attr<'a>(attrs: &'a [Attribute], name: &str) -> Option<&'a AttrValue> {
    attrs.iter().find(|a| a.name == name).map(|a| &a.value)
}

/// Returns `attrs` with `new` replacing any attribute of the same name.
pub fn upsert_attr(attrs: &[Attribute], new: Attribute) -> Vec<Attribute> {
    let mut out: Vec<Attribute> = attrs
        .iter()
        .filter(|a| a.name != new.name)
        .cloned()
        .collect();
    out.push(new);
    out
}

/// Position and flight paths of one detector element.
///
/// The sample sits at the origin and the incident beam travels along +z.
/// The full scattering angle 2θ is the angle between +z and `position`; the
/// Bragg angle θ used by focusing and unit conversion is half of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorGeometry {
    position: [f64; 3],
    initial_path: f64,
    solid_angle: f64,
    efficiency: f64,
}

impl DetectorGeometry {
    pub fn new(
        position: [f64; 3],
        initial_path: f64,
        solid_angle: f64,
        efficiency: f64,
    ) -> Result<DetectorGeometry> {
        if position
            .iter()
            .chain([initial_path, solid_angle, efficiency].iter())
            .any(|v| !v.is_finite())
        {
            return Err(DataError::InvalidGeometry("non-finite component".into()));
        }
        if norm(position) <= 0.0 {
            return Err(DataError::InvalidGeometry(
                "detector position must not coincide with the sample".into(),
            ));
        }
        if initial_path <= 0.0 {
            return Err(DataError::InvalidGeometry(format!(
                "initial flight path must be positive, got {initial_path}"
            )));
        }
        Ok(DetectorGeometry {
            position,
            initial_path,
            solid_angle,
            efficiency,
        })
    }

    /// Element at distance `l2` and full scattering angle `two_theta` in the
    /// horizontal (x, z) plane.
    pub fn in_plane(two_theta: f64, l2: f64, l1: f64) -> Result<DetectorGeometry> {
        DetectorGeometry::new(
            [l2 * two_theta.sin(), 0.0, l2 * two_theta.cos()],
            l1,
            0.0,
            1.0,
        )
    }

    pub fn position(&self) -> [f64; 3] {
        self.position
    }

    pub fn initial_path(&self) -> f64 {
        self.initial_path
    }

    pub fn solid_angle(&self) -> f64 {
        self.solid_angle
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Secondary flight path L2 = |position|.
    pub fn secondary_path(&self) -> f64 {
        norm(self.position)
    }

    pub fn total_path(&self) -> f64 {
        self.initial_path + self.secondary_path()
    }

    /// Full scattering angle 2θ in radians.
    pub fn two_theta(&self) -> f64 {
        let [x, y, z] = self.position;
        (x * x + y * y).sqrt().atan2(z)
    }

    /// Bragg angle θ in radians (half the scattering angle).
    pub fn theta(&self) -> f64 {
        0.5 * self.two_theta()
    }
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// One detector element's histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    id: u32,
    group_id: u32,
    label: String,
    xscale: XScale,
    counts: Vec<f32>,
    errors: Vec<f32>,
    geometry: Option<DetectorGeometry>,
    attributes: Vec<Attribute>,
}

impl Spectrum {
    /// Builds a spectrum. When `errors` is `None` they default to the Poisson
    /// estimate `sqrt(max(count, 0))`.
    pub fn new(
        id: u32,
        xscale: XScale,
        counts: Vec<f32>,
        errors: Option<Vec<f32>>,
    ) -> Result<Spectrum> {
        let nbins = xscale.nbins();
        if counts.len() != nbins {
            return Err(DataError::InvalidSpectrum {
                id,
                reason: format!("{} counts for {} bins", counts.len(), nbins),
            });
        }
        let errors = match errors {
            Some(e) => {
                if e.len() != counts.len() {
                    return Err(DataError::InvalidSpectrum {
                        id,
                        reason: format!("{} errors for {} counts", e.len(), counts.len()),
                    });
                }
                if let Some(i) = e.iter().position(|v| !(*v >= 0.0)) {
                    return Err(DataError::InvalidSpectrum {
                        id,
                        reason: format!("error at bin {i} is {} (must be >= 0)", e[i]),
                    });
                }
                e
            }
            None => poisson_errors(&counts),
        };
        Ok(Spectrum {
            id,
            group_id: 0,
            label: String::new(),
            xscale,
            counts,
            errors,
            geometry: None,
            attributes: Vec::new(),
        })
    }

    pub fn with_id(mut self, id: u32) -> Spectrum {
        self.id = id;
        self
    }

    pub fn with_group_id(mut self, group_id: u32) -> Spectrum {
        self.group_id = group_id;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Spectrum {
        self.label = label.into();
        self
    }

    pub fn with_geometry(mut self, geometry: Option<DetectorGeometry>) -> Spectrum {
        self.geometry = geometry;
        self
    }

    pub fn with_attributes(mut self, attributes: Vec<Attribute>) -> Spectrum {
        self.attributes = attributes;
        self
    }

    pub fn with_attribute(self, attribute: Attribute) -> Spectrum {
        let attrs = upsert_attr(&self.attributes, attribute);
        self.with_attributes(attrs)
    }

    /// Replaces the histogram (scale, counts, errors) keeping metadata.
    pub fn with_data(
        &self,
        xscale: XScale,
        counts: Vec<f32>,
        errors: Vec<f32>,
    ) -> Result<Spectrum> {
        Ok(Spectrum::new(self.id, xscale, counts, Some(errors))?
            .with_group_id(self.group_id)
            .with_label(self.label.clone())
            .with_geometry(self.geometry)
            .with_attributes(self.attributes.clone()))
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn group_id(&self) -> u32 {
        self.group_id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn xscale(&self) -> &XScale {
        &self.xscale
    }

    pub fn counts(&self) -> &[f32] {
        &self.counts
    }

    pub fn errors(&self) -> &[f32] {
        &self.errors
    }

    pub fn geometry(&self) -> Option<&DetectorGeometry> {
        self.geometry.as_ref()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        find_attr(&self.attributes, name)
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    /// Sum of counts accumulated in f64.
    pub fn total_counts(&self) -> f64 {
        self.counts.iter().map(|&c| c as f64).sum()
    }

    pub fn is_monitor(&self) -> bool {
        self.attr(attr::MONITOR).and_then(AttrValue::as_i64) == Some(1)
    }
}

pub fn poisson_errors(counts: &[f32]) -> Vec<f32> {
    counts.iter().map(|&c| c.max(0.0).sqrt()).collect()
}

/// An ordered collection of spectra sharing x-axis units.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    title: String,
    x_units: XUnits,
    y_units: String,
    spectra: Vec<Spectrum>,
    attributes: Vec<Attribute>,
}

impl DataSet {
    pub fn new(
        title: impl Into<String>,
        x_units: XUnits,
        y_units: impl Into<String>,
        spectra: Vec<Spectrum>,
        attributes: Vec<Attribute>,
    ) -> Result<DataSet> {
        let mut seen = HashSet::with_capacity(spectra.len());
        for s in &spectra {
            if !seen.insert(s.id) {
                return Err(DataError::DuplicateId(s.id));
            }
        }
        Ok(DataSet {
            title: title.into(),
            x_units,
            y_units: y_units.into(),
            spectra,
            attributes,
        })
    }

    pub fn empty(x_units: XUnits) -> DataSet {
        DataSet {
            title: String::new(),
            x_units,
            y_units: "counts".into(),
            spectra: Vec::new(),
            attributes: Vec::new(),
        }
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn x_units(&self) -> XUnits {
        self.x_units
    }

    pub fn y_units(&self) -> &str {
        &self.y_units
    }

    pub fn spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        find_attr(&self.attributes, name)
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn spectrum(&self, id: u32) -> Option<&Spectrum> {
        self.spectra.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.spectra.iter().map(Spectrum::id).collect()
    }

    /// Same metadata, different spectra (re-validated).
    pub fn with_spectra(&self, spectra: Vec<Spectrum>) -> Result<DataSet> {
        DataSet::new(
            self.title.clone(),
            self.x_units,
            self.y_units.clone(),
            spectra,
            self.attributes.clone(),
        )
    }

    pub fn with_title(mut self, title: impl Into<String>) -> DataSet {
        self.title = title.into();
        self
    }

    pub fn with_units(mut self, x_units: XUnits) -> DataSet {
        self.x_units = x_units;
        self
    }

    pub fn with_attributes(mut self, attributes: Vec<Attribute>) -> DataSet {
        self.attributes = attributes;
        self
    }

    pub fn with_attribute(self, attribute: Attribute) -> DataSet {
        let attrs = upsert_attr(&self.attributes, attribute);
        self.with_attributes(attrs)
    }

    /// Keeps only the spectra whose ids appear in `ids`, in dataset order.
    pub fn select(&self, ids: &[u32]) -> Result<DataSet> {
        let wanted: HashSet<u32> = ids.iter().copied().collect();
        let present: HashSet<u32> = self.spectra.iter().map(|s| s.id).collect();
        if let Some(&missing) = ids.iter().find(|id| !present.contains(id)) {
            return Err(DataError::UnknownId(missing));
        }
        let spectra = self
            .spectra
            .iter()
            .filter(|s| wanted.contains(&s.id))
            .cloned()
            .collect();
        self.with_spectra(spectra)
    }

    /// Histogram payload in bytes: 4 bytes per count and per error, plus 8
    /// bytes per edge for explicit scales. Uniform scales carry no edge array.
    pub fn payload_bytes(&self) -> u64 {
        self.spectra
            .iter()
            .map(|s| {
                let values = 2 * 4 * s.counts.len() as u64;
                let edges = match &s.xscale {
                    XScale::Uniform { .. } => 0,
                    XScale::Explicit { edges } => 8 * edges.len() as u64,
                };
                values + edges
            })
            .sum()
    }

    pub fn max_nbins(&self) -> usize {
        self.spectra.iter().map(Spectrum::nbins).max().unwrap_or(0)
    }
}

/// Histogram-array size of an instrument dataset: pixels · channels · bytes.
///
/// Only the count arrays are included. Instruments whose acquisition system
/// sums detectors into groups store one histogram per group rather than per
/// pixel; use [`estimate_grouped_dataset_size`] for those.
pub fn estimate_dataset_size(n_pixels: u64, n_channels: u64, bytes_per_bin: u64) -> u64 {
    n_pixels * n_channels * bytes_per_bin
}

/// Like [`estimate_dataset_size`], with an effective number of stored
/// histograms (`groups`) replacing the pixel count when present.
pub fn estimate_grouped_dataset_size(
    n_pixels: u64,
    n_channels: u64,
    bytes_per_bin: u64,
    groups: Option<u64>,
) -> u64 {
    estimate_dataset_size(groups.unwrap_or(n_pixels), n_channels, bytes_per_bin)
}

/// Default storage width of one histogram bin.
pub const BYTES_PER_BIN: u64 = 4;

/// Decimal kilobytes (1 KB = 1000 B).
pub fn kilobytes(bytes: u64) -> f64 {
    bytes as f64 / 1e3
}

/// Decimal megabytes (1 MB = 1000² B).
pub fn megabytes(bytes: u64) -> f64 {
    bytes as f64 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: u32, counts: &[f32]) -> Spectrum {
        let scale = XScale::uniform(0.0, counts.len() as f64, counts.len() as u32).unwrap();
        Spectrum::new(id, scale, counts.to_vec(), None).unwrap()
    }

    #[test]
    fn uniform_edges() {
        let s = XScale::uniform(0.0, 10.0, 10).unwrap();
        assert_eq!(s.edges(), (0..=10).map(f64::from).collect::<Vec<_>>());
        let s = XScale::uniform(0.0, 5000.0, 5000).unwrap();
        assert_eq!(s.nbins(), 5000);
        assert!((0..5000).all(|i| s.bin_width(i) == 1.0));
    }

    #[test]
    fn degenerate_scales_rejected() {
        assert!(XScale::uniform(3.0, 3.0, 5).is_err());
        assert!(XScale::uniform(0.0, 1.0, 0).is_err());
        assert!(XScale::uniform(2.0, 1.0, 1).is_err());
        assert!(XScale::explicit(vec![1.0]).is_err());
        assert!(XScale::explicit(vec![1.0, 1.0]).is_err());
        assert!(XScale::explicit(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn bin_lookup() {
        let u = XScale::uniform(0.0, 10.0, 10).unwrap();
        assert_eq!(u.bin_index(2.5), Some(2));
        assert_eq!(u.bin_index(10.0), None);
        assert_eq!(u.bin_index(0.0), Some(0));
        assert_eq!(u.bin_index(-0.1), None);
        assert_eq!(u.bin_index(f64::NAN), None);
        let e = XScale::explicit(vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        assert_eq!(e.bin_index(5.0), Some(2));
        assert_eq!(e.bin_index(4.0), Some(2));
        assert_eq!(e.bin_index(1.0), Some(0));
        assert_eq!(e.bin_index(8.0), None);
    }

    #[test]
    fn uniform_lookup_agrees_with_edges() {
        let u = XScale::uniform(0.1, 0.7, 3).unwrap();
        for i in 0..3 {
            assert_eq!(u.bin_index(u.edge(i)), Some(i as u32));
        }
    }

    #[test]
    fn poisson_default_errors() {
        let s = spec(0, &[4.0, 9.0, 16.0]);
        assert_eq!(s.errors(), &[2.0, 3.0, 4.0]);
        let s = spec(0, &[0.0, 0.0]);
        assert_eq!(s.errors(), &[0.0, 0.0]);
        let s = spec(0, &[-4.0]);
        assert_eq!(s.errors(), &[0.0]);
    }

    #[test]
    fn spectrum_length_mismatch() {
        let scale = XScale::uniform(0.0, 3.0, 3).unwrap();
        assert!(Spectrum::new(0, scale.clone(), vec![1.0, 2.0], None).is_err());
        assert!(Spectrum::new(0, scale.clone(), vec![1.0; 3], Some(vec![1.0; 2])).is_err());
        assert!(Spectrum::new(0, scale, vec![1.0; 3], Some(vec![1.0, -1.0, 0.0])).is_err());
    }

    #[test]
    fn reserved_attribute_types() {
        assert!(Attribute::i64(attr::RUN_NUMBER, 8712).is_ok());
        assert!(Attribute::f64(attr::RUN_NUMBER, 8712.0).is_err());
        assert!(Attribute::string(attr::BANK_ANGLE_DEG, "90").is_err());
        assert!(Attribute::f64("", 1.0).is_err());
        assert!(Attribute::string("comment", "x").is_ok());
    }

    #[test]
    fn geometry_angles() {
        let g = DetectorGeometry::in_plane(std::f64::consts::FRAC_PI_2, 2.0, 20.0).unwrap();
        assert!((g.theta() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((g.secondary_path() - 2.0).abs() < 1e-15);
        assert!((g.total_path() - 22.0).abs() < 1e-14);
        assert!(DetectorGeometry::new([0.0; 3], 1.0, 0.0, 1.0).is_err());
        assert!(DetectorGeometry::new([1.0, 0.0, 0.0], 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn select_spectra() {
        let ds = DataSet::new(
            "t",
            XUnits::TofUs,
            "counts",
            vec![spec(1, &[1.0]), spec(2, &[2.0]), spec(3, &[3.0])],
            vec![],
        )
        .unwrap();
        let one = ds.select(&[2]).unwrap();
        assert_eq!(one.ids(), vec![2]);
        assert_eq!(ds.select(&[3, 1, 2]).unwrap(), ds);
        assert_eq!(ds.select(&[99]).unwrap_err(), DataError::UnknownId(99));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = DataSet::new(
            "t",
            XUnits::TofUs,
            "c",
            vec![spec(1, &[1.0]), spec(1, &[1.0])],
            vec![],
        );
        assert_eq!(r.unwrap_err(), DataError::DuplicateId(1));
    }

    #[test]
    fn table_sizes() {
        // Instrument rows with histogram-only storage at 4 bytes per bin.
        assert_eq!(estimate_dataset_size(7200, 120, 4), 3_456_000);
        assert_eq!(estimate_dataset_size(150, 5000, 4), 3_000_000);
        assert_eq!(estimate_dataset_size(2000, 3000, 4), 24_000_000);
        assert_eq!(estimate_dataset_size(5_000_000, 85, 4), 1_700_000_000);
        assert_eq!(kilobytes(3_456_000), 3456.0);
        assert_eq!(megabytes(1_700_000_000), 1700.0);
        // Grouped storage: 4 and 300 effective histograms.
        assert_eq!(estimate_grouped_dataset_size(160, 5000, 4, Some(4)), 80_000);
        assert_eq!(
            estimate_grouped_dataset_size(15000, 5000, 4, Some(300)),
            6_000_000
        );
    }

    #[test]
    fn payload_accounting() {
        let ds = DataSet::new("t", XUnits::TofUs, "c", vec![spec(0, &[1.0; 100])], vec![]).unwrap();
        assert_eq!(ds.payload_bytes(), 800);
        assert_eq!(DataSet::empty(XUnits::TofUs).payload_bytes(), 0);
        let explicit = Spectrum::new(
            0,
            XScale::explicit(vec![0.0, 1.0, 3.0]).unwrap(),
            vec![1.0, 1.0],
            None,
        )
        .unwrap();
        let ds = DataSet::new("t", XUnits::TofUs, "c", vec![explicit], vec![]).unwrap();
        assert_eq!(ds.payload_bytes(), 2 * 4 * 2 + 3 * 8);
    }

    #[test]
    fn slice_bins_keeps_edges() {
        let u = XScale::uniform(0.1, 0.9, 7).unwrap();
        let s = u.slice_bins(2, 5).unwrap();
        assert_eq!(s.nbins(), 3);
        for j in 0..=3 {
            assert_eq!(s.edge(j).to_bits(), u.edge(j + 2).to_bits());
        }
        assert!(u.slice_bins(3, 3).is_err());
        assert!(u.slice_bins(0, 8).is_err());
    }

    #[test]
    fn units_round_trip_codes() {
        for u in XUnits::ALL {
            assert_eq!(XUnits::from_code(u.code()), Some(u));
            assert_eq!(u.name().parse::<XUnits>().unwrap(), u);
        }
        assert_eq!(XUnits::from_code(4), None);
        assert!("furlongs".parse::<XUnits>().is_err());
    }
}

//! Single-crystal pipeline: find peaks in an area-detector volume, centroid
//! and integrate them, map them to reciprocal space, refine an orientation
//! (UB) matrix from seeded assignments, and index the rest.
//!
//! Conventions used throughout:
//!
//! * the beam travels along +z and the sample sits at the origin;
//! * `q = k_f − k_i = (2π/λ)·(p̂ − ẑ)` for a pixel in direction `p̂`;
//! * `q = 2π·UB·h` for Miller indices `h`;
//! * the goniometer rotation is `R = Rz(ω)·Rx(χ)·Rz(φ)` and sample-frame
//!   vectors are `Rᵀ·q_lab`. Other instruments order these differently, so
//!   check before feeding angles from elsewhere.

mod export;
mod find;
mod reciprocal;
mod volume;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataError;

pub use export::{format_peaks, parse_peaks, read_assignments, read_peaks, write_peaks};
pub use find::{analyze, centroid, find_peaks, integrate_peak, FindParams};
pub use reciprocal::{
    apply_goniometer, choose_seeds, index_peaks, peak_to_q, refine_ub, scattering_vector,
    DEFAULT_INDEX_TOL,
};
pub use volume::{DetectorVolume, FlatPanel, PixelGeometry, PixelTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeakError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid detector volume: {0}")]
    Volume(String),
    #[error("box sum around ({row}, {col}, {channel}) is not positive")]
    FlatRegion { row: u32, col: u32, channel: u32 },
    #[error("background shell is empty after clipping to the volume")]
    EmptyShell,
    #[error("non-positive flight path or time of flight")]
    ZeroFlightPath,
    #[error("assignments do not determine UB: {0}")]
    RankDeficient(String),
    #[error("UB matrix is singular")]
    Singular,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = PeakError> = std::result::Result<T, E>;

/// A reflection found in a detector volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub row: f64,
    pub col: f64,
    /// TOF bin index; bin `i` is centred on `i`.
    pub channel: f64,
    pub intensity: f64,
    pub sigma_intensity: f64,
    /// Å⁻¹.
    pub q: [f64; 3],
    pub hkl: Option<[i32; 3]>,
    pub orientation_index: u32,
}

impl Peak {
    pub fn new(row: f64, col: f64, channel: f64, intensity: f64) -> Peak {
        Peak {
            row,
            col,
            channel,
            intensity,
            sigma_intensity: intensity.max(0.0).sqrt(),
            q: [0.0; 3],
            hkl: None,
            orientation_index: 0,
        }
    }

    /// Nearest voxel.
    pub fn voxel(&self) -> (i64, i64, i64) {
        (
            self.row.round() as i64,
            self.col.round() as i64,
            self.channel.round() as i64,
        )
    }
}

/// Orientation matrix, `q = 2π·UB·h` with `q` in Å⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UBMatrix(Matrix3<f64>);

impl UBMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<UBMatrix> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(PeakError::InvalidArgument("non-finite UB element".into()));
        }
        let scale = m.norm();
        if scale == 0.0 || m.determinant().abs() <= 1e-12 * scale.powi(3) {
            return Err(PeakError::Singular);
        }
        Ok(UBMatrix(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<UBMatrix> {
        UBMatrix::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    /// Cubic lattice with cell edge `a` (Å) in the standard orientation.
    pub fn cubic(a: f64) -> Result<UBMatrix> {
        if !(a > 0.0) {
            return Err(PeakError::InvalidArgument(format!(
                "cell edge must be positive, got {a}"
            )));
        }
        UBMatrix::new(Matrix3::identity() / a)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
    }

    /// `2π·UB·h`.
    pub fn q_for(&self, hkl: [i32; 3]) -> [f64; 3] {
        let h = nalgebra::Vector3::new(hkl[0] as f64, hkl[1] as f64, hkl[2] as f64);
        let q = self.0 * h * std::f64::consts::TAU;
        [q.x, q.y, q.z]
    }

    /// Largest elementwise difference from `other`.
    pub fn max_abs_diff(&self, other: &UBMatrix) -> f64 {
        (self.0 - other.0).amax()
    }
}

/// Sample rotation stage angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GoniometerSetting {
    pub chi: f64,
    pub phi: f64,
    pub omega: f64,
}

impl GoniometerSetting {
    pub fn new(chi: f64, phi: f64, omega: f64) -> Result<GoniometerSetting> {
        if ![chi, phi, omega].iter().all(|v| v.is_finite()) {
            return Err(PeakError::InvalidArgument(
                "non-finite goniometer angle".into(),
            ));
        }
        Ok(GoniometerSetting { chi, phi, omega })
    }

    /// `Rz(ω)·Rx(χ)·Rz(φ)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        rz(self.omega) * rx(self.chi) * rz(self.phi)
    }
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_ub_rejected() {
        assert_eq!(UBMatrix::new(Matrix3::zeros()), Err(PeakError::Singular));
        let m = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert_eq!(UBMatrix::new(m), Err(PeakError::Singular));
        assert!(UBMatrix::cubic(0.0).is_err());
    }

    #[test]
    fn cubic_q() {
        let ub = UBMatrix::cubic(4.0).unwrap();
        let q = ub.q_for([1, 0, 0]);
        assert!((q[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}

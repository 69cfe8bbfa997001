use std::sync::Arc;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{poisson, rng, tof_for_wavelength};
use crate::dataset::XScale;
use crate::peaks::{
    DetectorVolume, FlatPanel, GoniometerSetting, PeakError, PixelGeometry, UBMatrix,
};

/// Single-crystal measurement on one flat area detector.
#[derive(Debug, Clone)]
pub struct ScdConfig {
    /// Cubic cell edge (Å).
    pub lattice_a: f64,
    /// Crystal orientation; random (from the seed) when `None`.
    pub orientation: Option<Matrix3<f64>>,
    pub goniometer: GoniometerSetting,
    pub orientation_index: u32,
    pub n_reflections: usize,
    /// Each reflection's `q` is displaced uniformly within a ball of radius
    /// `q_noise·|q|` before it is placed on the detector.
    pub q_noise: f64,
    pub panel: FlatPanel,
    pub l1: f64,
    pub tof: XScale,
    /// Only reflections with `|h| = √(h²+k²+l²)` up to this are placed.
    pub max_hkl_norm: f64,
    /// Minimum Chebyshev distance in voxels between placed reflections.
    pub min_separation: f64,
    /// Peak heights are drawn uniformly from this range (counts).
    pub amplitude: (f64, f64),
    /// Blob width in voxels.
    pub sigma_voxels: f64,
    /// Mean background counts per voxel.
    pub background: f64,
    /// Poisson-sample the counts; otherwise store expected values.
    pub poisson: bool,
}

impl Default for ScdConfig {
    fn default() -> ScdConfig {
        ScdConfig {
            lattice_a: 4.0,
            orientation: None,
            goniometer: GoniometerSetting::default(),
            orientation_index: 0,
            n_reflections: 50,
            q_noise: 0.01,
            panel: FlatPanel::new(128, 128, 0.2, std::f64::consts::FRAC_PI_2, 0.003)
                .expect("valid panel"),
            l1: 9.0,
            tof: XScale::uniform(1000.0, 11000.0, 500).expect("valid scale"),
            max_hkl_norm: 7.0,
            min_separation: 8.0,
            amplitude: (150.0, 1500.0),
            sigma_voxels: 1.0,
            background: 0.5,
            poisson: true,
        }
    }
}

/// A reflection placed on the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub hkl: [i32; 3],
    /// `2π·UB·h` in the sample frame.
    pub q_sample: [f64; 3],
    /// Lab-frame `q` after the goniometer rotation and noise; this is what
    /// the detector position encodes.
    pub q_lab: [f64; 3],
    pub row: f64,
    pub col: f64,
    pub channel: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct ScdSample {
    pub ub: UBMatrix,
    pub volume: DetectorVolume,
    pub reflections: Vec<Reflection>,
}

fn random_rotation(r: &mut impl Rng) -> Matrix3<f64> {
    let v: [f64; 4] = [0; 4].map(|_| r.sample(StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]))
        .to_rotation_matrix()
        .into_inner()
}

fn unit_ball(r: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

/// Fractional channel of time of flight `t`, the inverse of
/// [`DetectorVolume::tof_at`].
fn channel_of(scale: &XScale, t: f64) -> Option<f64> {
    let i = scale.bin_index(t)? as usize;
    Some(i as f64 + (t - scale.edge(i)) / scale.bin_width(i) - 0.5)
}

/// Where elastic scattering with momentum transfer `q` (lab frame) lands:
/// `(row, col, channel)`, or `None` if it misses the panel or the TOF range.
fn place(cfg: &ScdConfig, q: Vector3<f64>) -> Option<(f64, f64, f64)> {
    // q = k(p̂ − ẑ) with |p̂| = 1 gives k = −|q|²/(2 q_z).
    if q.z >= 0.0 {
        return None;
    }
    let k = -q.norm_squared() / (2.0 * q.z);
    let dir = (q + Vector3::z() * k) / k;
    let (row, col) = cfg.panel.project([dir.x, dir.y, dir.z])?;
    let pos = cfg.panel.position_at(row, col);
    let path = cfg.l1 + Vector3::from(pos).norm();
    let t = tof_for_wavelength(std::f64::consts::TAU / k, path);
    Some((row, col, channel_of(&cfg.tof, t)?))
}

/// Places `n_reflections` well-separated reflections of a cubic crystal on
/// the panel and renders them as Gaussian blobs over a flat background.
pub fn generate_scd(cfg: &ScdConfig, seed: u64) -> Result<ScdSample, PeakError> {
    let mut r = rng(seed, 0);
    let u = match cfg.orientation {
        Some(u) => u,
        None => random_rotation(&mut r),
    };
    let ub = UBMatrix::new(u / cfg.lattice_a)?;
    let rot = cfg.goniometer.rotation();
    let (nr, nc, nch) = (
        cfg.panel.n_rows as f64,
        cfg.panel.n_cols as f64,
        cfg.tof.nbins() as f64,
    );
    let margin = 3.0 * cfg.sigma_voxels + 1.0;
    let inside = |x: f64, n: f64| x >= margin && x <= n - 1.0 - margin;

    let m = cfg.max_hkl_norm.floor() as i32;
    let mut candidates = Vec::new();
    for h in -m..=m {
        for k in -m..=m {
            for l in -m..=m {
                if (h, k, l) == (0, 0, 0)
                    || ((h * h + k * k + l * l) as f64).sqrt() > cfg.max_hkl_norm
                {
                    continue;
                }
                let q_sample = Vector3::from(ub.q_for([h, k, l]));
                let mut q = rot * q_sample;
                q += unit_ball(&mut r) * (cfg.q_noise * q.norm());
                if let Some((row, col, ch)) = place(cfg, q) {
                    if inside(row, nr) && inside(col, nc) && inside(ch, nch) {
                        candidates.push(Reflection {
                            hkl: [h, k, l],
                            q_sample: q_sample.into(),
                            q_lab: q.into(),
                            row,
                            col,
                            channel: ch,
                            amplitude: 0.0,
                        });
                    }
                }
            }
        }
    }
    // Random order, then greedy separation.
    for i in (1..candidates.len()).rev() {
        let j = r.random_range(0..=i);
        candidates.swap(i, j);
    }
    let mut chosen: Vec<Reflection> = Vec::with_capacity(cfg.n_reflections);
    for mut c in candidates {
        if chosen.len() == cfg.n_reflections {
            break;
        }
        let far = chosen.iter().all(|o| {
            (o.row - c.row)
                .abs()
                .max((o.col - c.col).abs())
                .max((o.channel - c.channel).abs())
                >= cfg.min_separation
        });
        if far {
            c.amplitude = r.random_range(cfg.amplitude.0..cfg.amplitude.1);
            chosen.push(c);
        }
    }
    if chosen.len() < cfg.n_reflections {
        return Err(PeakError::InvalidArgument(format!(
            "only {} separated reflections reach the detector, {} requested",
            chosen.len(),
            cfg.n_reflections
        )));
    }

    let (nr, nc, nch) = (
        cfg.panel.n_rows as usize,
        cfg.panel.n_cols as usize,
        cfg.tof.nbins(),
    );
    let mut expected = vec![cfg.background; nr * nc * nch];
    let s = cfg.sigma_voxels;
    let reach = (4.0 * s).ceil() as i64;
    for refl in &chosen {
        let (r0, c0, k0) = (
            refl.row.round() as i64,
            refl.col.round() as i64,
            refl.channel.round() as i64,
        );
        for rr in (r0 - reach).max(0)..=(r0 + reach).min(nr as i64 - 1) {
            for cc in (c0 - reach).max(0)..=(c0 + reach).min(nc as i64 - 1) {
                for kk in (k0 - reach).max(0)..=(k0 + reach).min(nch as i64 - 1) {
                    let d2 = (rr as f64 - refl.row).powi(2)
                        + (cc as f64 - refl.col).powi(2)
                        + (kk as f64 - refl.channel).powi(2);
                    expected[(rr as usize * nc + cc as usize) * nch + kk as usize] +=
                        refl.amplitude * (-0.5 * d2 / (s * s)).exp();
                }
            }
        }
    }
    let mut noise = rng(seed, 1);
    let counts = expected
        .into_iter()
        .map(|m| {
            if cfg.poisson {
                poisson(&mut noise, m)
            } else {
                m as f32
            }
        })
        .collect();
    let volume = DetectorVolume::new(
        cfg.panel.n_rows,
        cfg.panel.n_cols,
        cfg.tof.clone(),
        counts,
        Arc::new(cfg.panel.clone()),
        cfg.l1,
    )?
    .with_orientation(cfg.orientation_index, cfg.goniometer);
    Ok(ScdSample {
        ub,
        volume,
        reflections: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peaks::{apply_goniometer, peak_to_q, Peak};

    #[test]
    fn placement_is_consistent_with_peak_to_q() {
        let cfg = ScdConfig {
            q_noise: 0.0,
            n_reflections: 10,
            poisson: false,
            goniometer: GoniometerSetting::new(0.3, -0.2, 0.5).unwrap(),
            ..Default::default()
        };
        let s = generate_scd(&cfg, 3).unwrap();
        assert_eq!(s.reflections.len(), 10);
        for refl in &s.reflections {
            let p = Peak::new(refl.row, refl.col, refl.channel, 1.0);
            let q = peak_to_q(&p, &s.volume).unwrap().q;
            let qs = apply_goniometer(q, &s.volume.goniometer());
            for i in 0..3 {
                assert!(
                    (qs[i] - refl.q_sample[i]).abs() < 1e-9,
                    "{qs:?} vs {:?}",
                    refl.q_sample
                );
            }
        }
    }

    #[test]
    fn too_many_reflections_is_an_error() {
        let cfg = ScdConfig {
            n_reflections: 100_000,
            poisson: false,
            ..Default::default()
        };
        assert!(generate_scd(&cfg, 1).is_err());
    }
}

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::{poisson, rng, tof_for_wavelength};
use crate::dataset::{attr, Attribute, DataSet, DetectorGeometry, Spectrum, XScale, XUnits};
use crate::retrievers::trf::{run_attributes, write_run};
use crate::retrievers::{DatasetKind, RetrieverError, Run, RunDataset};

/// Bank angle of the single detector the reference reduction extracts.
pub const FOCUS_BANK_DEG: f64 = 90.0;

const OTHER_BANKS_DEG: [f64; 10] = [
    20.0, 30.0, 45.0, 60.0, 75.0, 105.0, 120.0, 135.0, 150.0, 160.0,
];

/// A powder diffractometer: spectrum 0 is a lone detector at 90°, the
/// rest are spread over ten banks. Runs form a temperature scan: the lattice
/// expands slowly and a superlattice reflection grows in after half the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PowderConfig {
    pub instrument: String,
    pub n_spectra: u32,
    pub n_bins: u32,
    pub tof_min_us: f64,
    pub tof_max_us: f64,
    pub l1: f64,
    pub l2: f64,
    /// Cubic cell edge (Å) of the first run.
    pub lattice_a: f64,
    /// Mean counts per bin at the incident-flux maximum.
    pub intensity: f64,
    /// Spectra with no counts at all.
    pub dead: Vec<u32>,
    pub first_run: u32,
    pub first_start_time: i64,
    pub run_interval_s: i64,
}

impl Default for PowderConfig {
    fn default() -> PowderConfig {
        PowderConfig {
            instrument: "GPPD".into(),
            n_spectra: 160,
            n_bins: 5000,
            tof_min_us: 1000.0,
            tof_max_us: 21000.0,
            l1: 20.0,
            l2: 1.5,
            lattice_a: 4.0,
            intensity: 20.0,
            dead: vec![17, 58, 133],
            first_run: 8700,
            first_start_time: 1_000_000_000,
            run_interval_s: 900,
        }
    }
}

/// Bank angle and exact scattering angle (degrees) of spectrum `id`.
fn detector_angles(id: u32) -> (f64, f64) {
    if id == 0 {
        return (FOCUS_BANK_DEG, FOCUS_BANK_DEG);
    }
    let k = (id - 1) as usize;
    let bank = OTHER_BANKS_DEG[k % OTHER_BANKS_DEG.len()];
    let slot = (k / OTHER_BANKS_DEG.len()) as f64;
    (bank, bank + 0.12 * (slot - 7.5))
}

/// Smooth moderator spectrum, peaking near 1.2 Å.
fn flux(lambda: f64) -> f64 {
    let x = lambda / 1.2;
    x.powi(-4) * (-1.0 / (x * x)).exp() * std::f64::consts::E
}

/// Reflections `(d, weight)` of a primitive cubic cell.
fn reflections(a: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for n in 1..=48u32 {
        let representable =
            (0..=7).any(|h: u32| (0..=h).any(|k| (0..=k).any(|l| h * h + k * k + l * l == n)));
        if representable {
            // Weights fixed by the index alone, so every run agrees.
            let w = 0.4 + 0.6 * (n.wrapping_mul(2654435761) % 1000) as f64 / 1000.0;
            out.push((a / (n as f64).sqrt(), w));
        }
    }
    out
}

fn tof_scale(cfg: &PowderConfig) -> XScale {
    XScale::uniform(cfg.tof_min_us, cfg.tof_max_us, cfg.n_bins).expect("valid configuration")
}

/// Expected counts of one detector: flux-weighted background plus Gaussian
/// peaks with constant relative width.
fn expected(
    scale: &XScale,
    path: f64,
    theta: f64,
    peaks: &[(f64, f64)],
    amplitude: f64,
) -> Vec<f64> {
    let n = scale.nbins();
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            let lambda = crate::operators::tof_to_wavelength(scale.bin_center(i), path);
            0.15 * flux(lambda)
        })
        .collect();
    for &(d, w) in peaks {
        let t0 = tof_for_wavelength(2.0 * d * theta.sin(), path);
        let sigma = 0.0025 * t0;
        let (lo, hi) = (t0 - 6.0 * sigma, t0 + 6.0 * sigma);
        if hi < scale.first() || lo > scale.last() {
            continue;
        }
        let area = 40.0 * w * flux(2.0 * d * theta.sin());
        let start = scale.bin_index(lo.max(scale.first())).unwrap_or(0) as usize;
        let end = scale.bin_index(hi).map_or(n, |i| i as usize + 1);
        for (i, v) in y.iter_mut().enumerate().take(end).skip(start) {
            let z = (scale.bin_center(i) - t0) / sigma;
            *v += area * scale.bin_width(i) / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                * (-0.5 * z * z).exp();
        }
    }
    y.iter_mut().for_each(|v| *v *= amplitude);
    y
}

/// Run `index` of a scan, Poisson-sampled with `seed`.
pub fn powder_run(cfg: &PowderConfig, index: u32, seed: u64) -> Run {
    let mut r = rng(seed, index as u64);
    let run_number = cfg.first_run + index;
    let start_time = cfg.first_start_time + index as i64 * cfg.run_interval_s;
    let beam: f64 = r.random_range(0.8..1.2);
    let scale = tof_scale(cfg);

    let a = cfg.lattice_a * (1.0 + 2e-5 * index as f64);
    let mut peaks = reflections(a);
    let half = index as f64 / 60.0 - 1.0;
    if half > 0.0 {
        peaks.push((a * 2.0 / 3f64.sqrt(), 0.8 * half.min(1.0)));
    }

    let monitor_path = cfg.l1 - 2.0;
    let monitor_counts = (0..scale.nbins())
        .map(|i| {
            let lambda = crate::operators::tof_to_wavelength(scale.bin_center(i), monitor_path);
            poisson(&mut r, 50.0 * cfg.intensity * beam * flux(lambda))
        })
        .collect();
    let monitor = Spectrum::new(0, scale.clone(), monitor_counts, None)
        .expect("sized to the scale")
        .with_label("monitor")
        // Upstream of the sample: 2 m back along the beam, total path l1 − 2.
        .with_geometry(Some(
            DetectorGeometry::new([0.0, 0.0, -2.0], (monitor_path - 2.0).max(0.1), 0.0, 1e-4)
                .expect("fixed geometry"),
        ))
        .with_attribute(Attribute::i64(attr::MONITOR, 1).expect("reserved type"));

    let spectra: Vec<Spectrum> = (0..cfg.n_spectra)
        .map(|id| {
            let (bank, tt) = detector_angles(id);
            let geometry = DetectorGeometry::in_plane(tt.to_radians(), cfg.l2, cfg.l1)
                .expect("positive paths");
            // Texture: per-detector intensity factor, identical in every run.
            let texture = 0.6 + 0.8 * ((id.wrapping_mul(2246822519) >> 8) % 1000) as f64 / 1000.0;
            let counts = if cfg.dead.contains(&id) {
                vec![0.0; scale.nbins()]
            } else {
                let mut sr = rng(seed ^ 0x5eed_0fd3_7ec7, ((index as u64) << 32) | id as u64);
                expected(
                    &scale,
                    cfg.l1 + cfg.l2,
                    0.5 * tt.to_radians(),
                    &peaks,
                    cfg.intensity * beam * texture,
                )
                .into_iter()
                .map(|m| poisson(&mut sr, m))
                .collect()
            };
            Spectrum::new(id, scale.clone(), counts, None)
                .expect("sized to the scale")
                .with_label(format!("bank {bank} det {id}"))
                .with_geometry(Some(geometry))
                .with_attribute(Attribute::f64(attr::BANK_ANGLE_DEG, bank).expect("reserved type"))
        })
        .collect();

    let attrs = run_attributes(run_number, start_time);
    let dataset = |title: &str, spectra| {
        DataSet::new(title, XUnits::TofUs, "counts", spectra, attrs.clone()).expect("unique ids")
    };
    Run {
        instrument: cfg.instrument.clone(),
        run_number,
        start_time,
        datasets: vec![
            RunDataset {
                kind: DatasetKind::Monitor,
                data: dataset("monitor", vec![monitor]),
            },
            RunDataset {
                kind: DatasetKind::Histogram,
                data: dataset("detectors", spectra),
            },
        ],
    }
}

/// Writes `n_runs` runs as `<instrument><run_number>.trf` into `dir`,
/// returning the paths in run order.
pub fn write_powder_runs(
    dir: &Path,
    cfg: &PowderConfig,
    n_runs: u32,
    seed: u64,
) -> Result<Vec<PathBuf>, RetrieverError> {
    std::fs::create_dir_all(dir).map_err(|e| RetrieverError::io(dir, e))?;
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let run = powder_run(cfg, i, seed);
            let path = dir.join(format!("{}{:05}.trf", cfg.instrument, run.run_number));
            write_run(&path, &run)?;
            Ok(path)
        })
        .collect()
}

/// Noise-free bank with one Bragg reflection at `d` (Å), one spectrum per
/// entry of `two_theta_deg`, each with its own secondary path.
pub fn bragg_bank(d: f64, two_theta_deg: &[f64], l2: &[f64], l1: f64, scale: &XScale) -> DataSet {
    assert_eq!(
        two_theta_deg.len(),
        l2.len(),
        "one secondary path per detector"
    );
    let spectra = two_theta_deg
        .iter()
        .zip(l2)
        .enumerate()
        .map(|(id, (&tt, &l2))| {
            let theta = 0.5 * tt.to_radians();
            let t0 = tof_for_wavelength(2.0 * d * theta.sin(), l1 + l2);
            let sigma = 0.002 * t0;
            let counts = (0..scale.nbins())
                .map(|i| {
                    let z = (scale.bin_center(i) - t0) / sigma;
                    (1.0 + 1000.0 * (-0.5 * z * z).exp()) as f32
                })
                .collect();
            Spectrum::new(id as u32, scale.clone(), counts, None)
                .expect("sized to the scale")
                .with_geometry(Some(
                    DetectorGeometry::in_plane(tt.to_radians(), l2, l1).expect("positive paths"),
                ))
        })
        .collect();
    DataSet::new("bragg bank", XUnits::TofUs, "counts", spectra, vec![]).expect("unique ids")
}

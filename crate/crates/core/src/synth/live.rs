use super::scd::{generate_scd, ScdConfig};
use crate::dataset::{DataSet, XScale};
use crate::peaks::{FlatPanel, PeakError};

/// Count-rate pattern for the live server.
#[derive(Debug, Clone, PartialEq)]
pub struct LivePatternConfig {
    pub n_rows: u32,
    pub n_cols: u32,
    pub n_bins: u32,
    pub n_peaks: usize,
    /// Background rate per bin (counts/s).
    pub background_rate: f64,
    /// Peak-top rates are drawn from this range (counts/s).
    pub peak_rate: (f64, f64),
}

impl Default for LivePatternConfig {
    fn default() -> LivePatternConfig {
        LivePatternConfig {
            n_rows: 32,
            n_cols: 32,
            n_bins: 200,
            n_peaks: 8,
            background_rate: 0.05,
            peak_rate: (2.0, 20.0),
        }
    }
}

/// A small area detector whose "counts" are expected rates (counts/s/bin):
/// a few single-crystal peaks over a flat background, with pixel geometry
/// and `row`/`col` attributes.
pub fn live_pattern(cfg: &LivePatternConfig, seed: u64) -> Result<DataSet, PeakError> {
    let pitch = 0.2 / cfg.n_rows.max(cfg.n_cols) as f64;
    let scd = ScdConfig {
        panel: FlatPanel::new(
            cfg.n_rows,
            cfg.n_cols,
            0.25,
            std::f64::consts::FRAC_PI_2,
            pitch,
        )?,
        tof: XScale::uniform(1000.0, 11000.0, cfg.n_bins)?,
        n_reflections: cfg.n_peaks,
        amplitude: cfg.peak_rate,
        background: cfg.background_rate,
        min_separation: 4.0,
        q_noise: 0.0,
        poisson: false,
        ..Default::default()
    };
    let sample = generate_scd(&scd, seed)?;
    let ds = sample.volume.to_dataset("live pattern")?;
    Ok(ds.with_units(crate::dataset::XUnits::TofUs))
}

//! Reproducible synthetic data: powder-diffractometer runs, Bragg-peak
//! banks for focusing checks, single-crystal detector volumes, and count-rate
//! patterns for the live server. Every generator is driven by an explicit
//! seed.

mod live;
mod powder;
mod scd;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use live::{live_pattern, LivePatternConfig};
pub use powder::{bragg_bank, powder_run, write_powder_runs, PowderConfig, FOCUS_BANK_DEG};
pub use scd::{generate_scd, Reflection, ScdConfig, ScdSample};

use crate::operators::H_OVER_MN;

/// Independent stream `stream` of the generator for `seed`.
pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Time of flight (µs) of neutrons of wavelength `lambda` (Å) over `path` (m).
pub fn tof_for_wavelength(lambda: f64, path: f64) -> f64 {
    lambda * path * 1e-4 / H_OVER_MN
}

/// Poisson sample with mean `mean` (0 for non-positive means).
pub(crate) fn poisson(r: &mut ChaCha8Rng, mean: f64) -> f32 {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean)
        .map(|p| p.sample(r) as f32)
        .unwrap_or(mean as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::tof_to_wavelength;

    #[test]
    fn tof_inverts_wavelength() {
        let t = tof_for_wavelength(1.7, 21.5);
        assert!((tof_to_wavelength(t, 21.5) - 1.7).abs() < 1e-12);
    }
}

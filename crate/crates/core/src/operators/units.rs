use std::f64::consts::PI;

use rayon::prelude::*;

use super::{OpError, Result};
use crate::dataset::{DataSet, Spectrum, XScale, XUnits};

/// Planck constant over neutron mass (CODATA 2018), m²/s.
pub const H_OVER_MN: f64 = 6.626_070_15e-34 / 1.674_927_498_04e-27;

/// Wavelength in Å for a time of flight in µs over a total path in m:
/// λ = (h/mₙ)·t/L.
pub fn tof_to_wavelength(tof_us: f64, total_path_m: f64) -> f64 {
    1e10 * H_OVER_MN * (tof_us * 1e-6) / total_path_m
}

/// Converts a time-of-flight dataset to wavelength, d-spacing or Q.
///
/// Counts move with their bins; there is no Jacobian rescaling. Q decreases
/// with time of flight, so for that target the edge list and the count/error
/// arrays are reversed to keep edges increasing.
pub fn convert_units(ds: &DataSet, target: XUnits) -> Result<DataSet> {
    if ds.x_units() != XUnits::TofUs {
        return Err(OpError::WrongUnits {
            expected: XUnits::TofUs,
            found: ds.x_units(),
        });
    }
    if target == XUnits::TofUs {
        return Ok(ds.clone());
    }
    let spectra = ds
        .spectra()
        .par_iter()
        .map(|s| convert_spectrum(s, target))
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_spectra(spectra)?.with_units(target))
}

fn convert_spectrum(s: &Spectrum, target: XUnits) -> Result<Spectrum> {
    let geom = s.geometry().ok_or(OpError::MissingGeometry(s.id()))?;
    let path = geom.total_path();
    let sin_theta = geom.theta().sin();
    if target != XUnits::WavelengthA && sin_theta <= 0.0 {
        return Err(OpError::Singular {
            id: s.id(),
            reason: "scattering angle is zero".into(),
        });
    }
    let to_lambda = |t: f64| tof_to_wavelength(t, path);
    let map = |t: f64| -> f64 {
        let lambda = to_lambda(t);
        match target {
            XUnits::WavelengthA => lambda,
            XUnits::DspacingA => lambda / (2.0 * sin_theta),
            XUnits::QInvA => 4.0 * PI * sin_theta / lambda,
            XUnits::TofUs => t,
        }
    };

    if target == XUnits::QInvA {
        if let Some(i) = (0..=s.nbins()).find(|&i| to_lambda(s.xscale().edge(i)) <= 0.0) {
            return Err(OpError::Singular {
                id: s.id(),
                reason: format!(
                    "edge {i} at t = {} µs maps to infinite Q",
                    s.xscale().edge(i)
                ),
            });
        }
        let edges: Vec<f64> = s.xscale().edges().into_iter().rev().map(map).collect();
        let scale = XScale::explicit(edges).map_err(|e| OpError::Singular {
            id: s.id(),
            reason: e.to_string(),
        })?;
        let counts = s.counts().iter().rev().copied().collect();
        let errors = s.errors().iter().rev().copied().collect();
        return Ok(s.with_data(scale, counts, errors)?);
    }

    // λ and d are linear in t, so uniform scales stay uniform.
    let scale = match s.xscale() {
        XScale::Uniform { start, end, nbins } => XScale::uniform(map(*start), map(*end), *nbins),
        XScale::Explicit { edges } => XScale::explicit(edges.iter().map(|&t| map(t)).collect()),
    }
    .map_err(|e| OpError::Singular {
        id: s.id(),
        reason: e.to_string(),
    })?;
    Ok(s.with_data(scale, s.counts().to_vec(), s.errors().to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DetectorGeometry;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn constant_matches_codata_quotient() {
        let h = 6.626_070_15e-34;
        let mn = 1.674_927_498_04e-27;
        assert!(((h / mn) - H_OVER_MN).abs() / (h / mn) < 1e-15);
        assert!((H_OVER_MN - 3.956_034e-7).abs() < 1e-13);
    }

    fn one_bin(t0: f64, t1: f64, two_theta: f64, l1: f64, l2: f64) -> DataSet {
        let s = Spectrum::new(7, XScale::uniform(t0, t1, 1).unwrap(), vec![3.0], None)
            .unwrap()
            .with_geometry(Some(DetectorGeometry::in_plane(two_theta, l2, l1).unwrap()));
        DataSet::new("x", XUnits::TofUs, "counts", vec![s], vec![]).unwrap()
    }

    #[test]
    fn wavelength_at_5000us_over_20m() {
        assert!((tof_to_wavelength(5000.0, 20.0) - 0.989_008_503).abs() < 1e-9);
        let ds = one_bin(5000.0, 6000.0, FRAC_PI_2, 18.0, 2.0);
        let out = convert_units(&ds, XUnits::WavelengthA).unwrap();
        assert!((out.spectra()[0].xscale().first() - 0.989_008_503).abs() < 1e-9);
        assert_eq!(out.x_units(), XUnits::WavelengthA);
    }

    #[test]
    fn dspacing_and_q_at_90_degrees() {
        let ds = one_bin(5000.0, 6000.0, FRAC_PI_2, 18.0, 2.0);
        let d = convert_units(&ds, XUnits::DspacingA).unwrap();
        // λ / (2 sin 45°) evaluated independently.
        assert!((d.spectra()[0].xscale().first() - 0.699_334_619).abs() < 1e-8);
        let q = convert_units(&ds, XUnits::QInvA).unwrap();
        // Q is decreasing in t: the t = 5000 edge becomes the upper edge.
        assert!((q.spectra()[0].xscale().last() - 8.984_519_192).abs() < 1e-8);
    }

    #[test]
    fn q_reverses_bins() {
        let s = Spectrum::new(
            0,
            XScale::uniform(1000.0, 4000.0, 3).unwrap(),
            vec![1.0, 2.0, 3.0],
            None,
        )
        .unwrap()
        .with_geometry(Some(DetectorGeometry::in_plane(1.0, 1.0, 10.0).unwrap()));
        let ds = DataSet::new("x", XUnits::TofUs, "counts", vec![s], vec![]).unwrap();
        let q = convert_units(&ds, XUnits::QInvA).unwrap();
        let sp = &q.spectra()[0];
        assert_eq!(sp.counts(), &[3.0, 2.0, 1.0]);
        let e = sp.xscale().edges();
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_tof_edge() {
        let ds = one_bin(0.0, 100.0, FRAC_PI_2, 18.0, 2.0);
        let l = convert_units(&ds, XUnits::WavelengthA).unwrap();
        assert_eq!(l.spectra()[0].xscale().first(), 0.0);
        assert!(convert_units(&ds, XUnits::DspacingA).is_ok());
        assert!(matches!(
            convert_units(&ds, XUnits::QInvA),
            Err(OpError::Singular { id: 7, .. })
        ));
    }

    #[test]
    fn error_paths() {
        let ds = one_bin(1.0, 2.0, FRAC_PI_2, 18.0, 2.0);
        let d = convert_units(&ds, XUnits::DspacingA).unwrap();
        assert!(matches!(
            convert_units(&d, XUnits::QInvA),
            Err(OpError::WrongUnits { .. })
        ));
        let bare =
            Spectrum::new(4, XScale::uniform(1.0, 2.0, 1).unwrap(), vec![1.0], None).unwrap();
        let ds = DataSet::new("x", XUnits::TofUs, "c", vec![bare], vec![]).unwrap();
        assert_eq!(
            convert_units(&ds, XUnits::WavelengthA).unwrap_err(),
            OpError::MissingGeometry(4)
        );
        let forward = one_bin(1.0, 2.0, 0.0, 18.0, 2.0);
        assert!(convert_units(&forward, XUnits::WavelengthA).is_ok());
        assert!(matches!(
            convert_units(&forward, XUnits::DspacingA),
            Err(OpError::Singular { .. })
        ));
    }
}

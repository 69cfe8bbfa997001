use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use super::{OpError, Result};
use crate::dataset::{DataSet, DetectorGeometry, XScale, XUnits};

/// Reference geometry a bank is focused onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusParams {
    ref_theta: f64,
    ref_l1: f64,
    ref_l2: f64,
}

impl FocusParams {
    /// `ref_theta` is the Bragg half-angle in radians; paths are in metres.
    pub fn new(ref_theta: f64, ref_l1: f64, ref_l2: f64) -> Result<FocusParams> {
        if !(ref_theta > 0.0 && ref_theta < FRAC_PI_2) {
            return Err(OpError::InvalidArgument(format!(
                "reference theta {ref_theta} rad outside (0, pi/2)"
            )));
        }
        if !(ref_l1 > 0.0 && ref_l2 > 0.0) || !ref_l1.is_finite() || !ref_l2.is_finite() {
            return Err(OpError::InvalidArgument(format!(
                "reference paths must be positive, got L1 = {ref_l1}, L2 = {ref_l2}"
            )));
        }
        Ok(FocusParams {
            ref_theta,
            ref_l1,
            ref_l2,
        })
    }

    pub fn ref_theta(&self) -> f64 {
        self.ref_theta
    }

    pub fn ref_l1(&self) -> f64 {
        self.ref_l1
    }

    pub fn ref_l2(&self) -> f64 {
        self.ref_l2
    }

    pub fn total_path(&self) -> f64 {
        self.ref_l1 + self.ref_l2
    }

    /// Detector geometry at the reference position, in the (x, z) plane.
    pub fn geometry(&self, solid_angle: f64, efficiency: f64) -> Result<DetectorGeometry> {
        let two_theta = 2.0 * self.ref_theta;
        Ok(DetectorGeometry::new(
            [
                self.ref_l2 * two_theta.sin(),
                0.0,
                self.ref_l2 * two_theta.cos(),
            ],
            self.ref_l1,
            solid_angle,
            efficiency,
        )?)
    }
}

/// Time-focusing factor `(L_i sin θ_i) / (L_r sin θ_r)` for total flight paths
/// `L` and Bragg angles `θ`.
pub fn focus_factor(l_i: f64, theta_i: f64, l_r: f64, theta_r: f64) -> Result<f64> {
    for (name, l) in [("L_i", l_i), ("L_r", l_r)] {
        if !(l > 0.0) || !l.is_finite() {
            return Err(OpError::InvalidArgument(format!(
                "{name} = {l} must be positive"
            )));
        }
    }
    for (name, t) in [("theta_i", theta_i), ("theta_r", theta_r)] {
        if !(t > 0.0 && t < FRAC_PI_2) {
            return Err(OpError::InvalidArgument(format!(
                "{name} = {t} rad outside (0, pi/2)"
            )));
        }
    }
    Ok((l_i * theta_i.sin()) / (l_r * theta_r.sin()))
}

/// Maps every spectrum's time axis onto the reference geometry, `t' = t / f`.
///
/// Counts and errors are untouched. Each spectrum's geometry is replaced by
/// the reference geometry so later unit conversion uses `(L_r, θ_r)`.
pub fn time_focus(ds: &DataSet, fp: &FocusParams) -> Result<DataSet> {
    if ds.x_units() != XUnits::TofUs {
        return Err(OpError::WrongUnits {
            expected: XUnits::TofUs,
            found: ds.x_units(),
        });
    }
    if let Some(s) = ds.spectra().iter().find(|s| s.geometry().is_none()) {
        return Err(OpError::MissingGeometry(s.id()));
    }
    let spectra = ds
        .spectra()
        .par_iter()
        .map(|s| {
            let g = s.geometry().expect("checked above");
            let f = focus_factor(g.total_path(), g.theta(), fp.total_path(), fp.ref_theta())
                .map_err(|e| OpError::Singular {
                    id: s.id(),
                    reason: e.to_string(),
                })?;
            let scale = match s.xscale() {
                XScale::Uniform { start, end, nbins } => {
                    XScale::uniform(start / f, end / f, *nbins)?
                }
                XScale::Explicit { edges } => {
                    XScale::explicit(edges.iter().map(|t| t / f).collect())?
                }
            };
            let geometry = fp.geometry(g.solid_angle(), g.efficiency())?;
            Ok(
                s.with_data(scale, s.counts().to_vec(), s.errors().to_vec())?
                    .with_geometry(Some(geometry)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_spectra(spectra)?)
}

use std::collections::HashMap;

use rayon::prelude::*;

use super::rebin::rebin_values;
use super::{OpError, Result};
use crate::dataset::{Attribute, DataSet, Spectrum};

/// Sums spectra that share a group id.
///
/// Members are rebinned onto the first member's x-scale before summing, and
/// variances add. The summed spectrum takes its id from the group id and its
/// label, geometry and attributes from the first member; groups appear in
/// order of their first member.
pub fn group_spectra(ds: &DataSet, grouping: &HashMap<u32, u32>) -> Result<DataSet> {
    let mut order: Vec<u32> = Vec::new();
    let mut members: HashMap<u32, Vec<&Spectrum>> = HashMap::new();
    for s in ds.spectra() {
        let g = *grouping.get(&s.id()).ok_or(OpError::Ungrouped(s.id()))?;
        members
            .entry(g)
            .or_insert_with(|| {
                order.push(g);
                Vec::new()
            })
            .push(s);
    }

    let spectra = order
        .par_iter()
        .map(|g| {
            let group = &members[g];
            let first = group[0];
            let target = first.xscale().edges();
            let mut counts = vec![0.0f64; first.nbins()];
            let mut variances = vec![0.0f64; first.nbins()];
            for s in group {
                let c: Vec<f64> = s.counts().iter().map(|&x| x as f64).collect();
                let v: Vec<f64> = s
                    .errors()
                    .iter()
                    .map(|&e| (e as f64) * (e as f64))
                    .collect();
                let (c, v) = if s.xscale() == first.xscale() {
                    (c, v)
                } else {
                    rebin_values(&s.xscale().edges(), &c, &v, &target)
                };
                counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
                variances.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            }
            let summed = first.with_data(
                first.xscale().clone(),
                counts.iter().map(|&c| c as f32).collect(),
                variances.iter().map(|&v| v.sqrt() as f32).collect(),
            )?;
            Ok(summed.with_id(*g).with_group_id(*g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_spectra(spectra)?)
}

/// Divisor for [`normalize`].
#[derive(Debug, Clone, Copy)]
pub enum Normalization<'a> {
    /// Divide by the total counts of a beam monitor spectrum.
    Monitor(&'a Spectrum),
    /// Divide by a counting time in seconds.
    Time(f64),
    Scalar(f64),
}

impl Normalization<'_> {
    fn mode(&self) -> &'static str {
        match self {
            Normalization::Monitor(_) => "monitor",
            Normalization::Time(_) => "time",
            Normalization::Scalar(_) => "scalar",
        }
    }

    pub fn divisor(&self) -> f64 {
        match self {
            Normalization::Monitor(m) => m.total_counts(),
            Normalization::Time(t) => *t,
            Normalization::Scalar(k) => *k,
        }
    }
}

/// Name of the dataset attribute recording the applied normalization.
pub const NORMALIZED_BY: &str = "normalized_by";

/// Divides counts and errors of every spectrum by the normalization divisor.
pub fn normalize(ds: &DataSet, mode: Normalization<'_>) -> Result<DataSet> {
    let divisor = mode.divisor();
    if !(divisor > 0.0) || !divisor.is_finite() {
        return Err(OpError::InvalidArgument(format!(
            "{} divisor must be positive, got {divisor}",
            mode.mode()
        )));
    }
    let spectra = ds
        .spectra()
        .par_iter()
        .map(|s| {
            let scale = |v: &[f32]| v.iter().map(|&x| (x as f64 / divisor) as f32).collect();
            s.with_data(s.xscale().clone(), scale(s.counts()), scale(s.errors()))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let tag = Attribute::string(NORMALIZED_BY, format!("{} {}", mode.mode(), divisor))?;
    Ok(ds.with_spectra(spectra)?.with_attribute(tag))
}

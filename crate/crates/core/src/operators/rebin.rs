use super::Result;
use crate::dataset::{Spectrum, XScale};

/// Redistributes histogram contents onto new bin edges by fractional overlap.
///
/// For old bin `i` and new bin `j`, the fraction `w = overlap(i, j) / width(i)`
/// of the counts moves across, and the same fraction of the variance:
/// `c'_j = Σ w·c_i`, `v'_j = Σ w·v_i`. Using the fraction rather than its
/// square for variances makes split-then-recombine lossless. Content outside
/// the new range is dropped.
pub fn rebin_values(
    old_edges: &[f64],
    counts: &[f64],
    variances: &[f64],
    new_edges: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(old_edges.len(), counts.len() + 1);
    assert_eq!(counts.len(), variances.len());
    assert!(new_edges.len() >= 2);
    let n_new = new_edges.len() - 1;
    let mut out_c = vec![0.0; n_new];
    let mut out_v = vec![0.0; n_new];

    let (mut i, mut j) = (0usize, 0usize);
    while i < counts.len() && j < n_new {
        let (lo_i, hi_i) = (old_edges[i], old_edges[i + 1]);
        let (lo_j, hi_j) = (new_edges[j], new_edges[j + 1]);
        let overlap = hi_i.min(hi_j) - lo_i.max(lo_j);
        if overlap > 0.0 {
            let w = overlap / (hi_i - lo_i);
            out_c[j] += w * counts[i];
            out_v[j] += w * variances[i];
        }
        if hi_i <= hi_j {
            i += 1;
        } else {
            j += 1;
        }
    }
    (out_c, out_v)
}

/// Rebins one spectrum onto `new_xscale` (same x units assumed), keeping its
/// metadata.
pub fn rebin(s: &Spectrum, new_xscale: &XScale) -> Result<Spectrum> {
    if s.xscale() == new_xscale {
        return Ok(s.clone());
    }
    let counts: Vec<f64> = s.counts().iter().map(|&c| c as f64).collect();
    let variances: Vec<f64> = s
        .errors()
        .iter()
        .map(|&e| (e as f64) * (e as f64))
        .collect();
    let (c, v) = rebin_values(
        &s.xscale().edges(),
        &counts,
        &variances,
        &new_xscale.edges(),
    );
    let counts = c.into_iter().map(|x| x as f32).collect();
    let errors = v.into_iter().map(|x| x.max(0.0).sqrt() as f32).collect();
    Ok(s.with_data(new_xscale.clone(), counts, errors)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(edges: &[f64], counts: &[f32], errors: &[f32]) -> Spectrum {
        Spectrum::new(
            0,
            XScale::explicit(edges.to_vec()).unwrap(),
            counts.to_vec(),
            Some(errors.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn identity() {
        let s = spectrum(&[0.0, 1.0, 3.0], &[4.0, 6.0], &[2.0, 2.5]);
        assert_eq!(rebin(&s, s.xscale()).unwrap(), s);
        let via_values = rebin(&s, &XScale::explicit(vec![0.0, 1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(via_values, s);
    }

    #[test]
    fn coarsen_two_into_one() {
        let s = spectrum(&[0.0, 1.0, 2.0], &[4.0, 6.0], &[2.0, 6f32.sqrt()]);
        let out = rebin(&s, &XScale::explicit(vec![0.0, 2.0]).unwrap()).unwrap();
        assert!((out.counts()[0] - 10.0).abs() < 1e-6);
        assert!((out.errors()[0] - 10f32.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn split_one_into_two() {
        let s = spectrum(&[0.0, 2.0], &[10.0], &[10f32.sqrt()]);
        let out = rebin(&s, &XScale::explicit(vec![0.0, 1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(out.counts(), &[5.0, 5.0]);
        for e in out.errors() {
            assert!((e - 2.236_068).abs() < 1e-6);
        }
    }

    #[test]
    fn partial_overlap_and_out_of_range() {
        let (c, v) = rebin_values(&[0.0, 1.0, 2.0], &[4.0, 6.0], &[4.0, 6.0], &[0.5, 1.5, 3.0]);
        assert_eq!(c, vec![2.0 + 3.0, 3.0]);
        assert_eq!(v, vec![5.0, 3.0]);
        // Entirely disjoint target drops everything.
        let (c, _) = rebin_values(&[0.0, 1.0], &[4.0], &[4.0], &[5.0, 6.0]);
        assert_eq!(c, vec![0.0]);
    }
}

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};

use super::{DetectorVolume, GoniometerSetting, Peak, PeakError, Result, UBMatrix};
use crate::dataset::norm;
use crate::operators::tof_to_wavelength;

/// Default indexing tolerance in Miller-index units.
pub const DEFAULT_INDEX_TOL: f64 = 0.10;

/// Momentum transfer `q = (2π/λ)·(p̂ − ẑ)` (Å⁻¹) for elastic scattering
/// into a pixel at `position`, with λ from the time of flight over the
/// total path `l1 + |position|`.
pub fn scattering_vector(position: [f64; 3], l1: f64, tof_us: f64) -> Result<[f64; 3]> {
    let r = norm(position);
    let path = l1 + r;
    if !(r > 0.0) || !(path > 0.0) || !(tof_us > 0.0) {
        return Err(PeakError::ZeroFlightPath);
    }
    let k = TAU / tof_to_wavelength(tof_us, path);
    let [x, y, z] = position;
    // p̂_z − 1 without cancellation near the forward direction.
    let dz = if z > 0.0 {
        -(x * x + y * y) / (r * (r + z))
    } else {
        z / r - 1.0
    };
    Ok([k * x / r, k * y / r, k * dz])
}

/// Sets the lab-frame `q` of a peak from its centroid position and channel.
pub fn peak_to_q(p: &Peak, vol: &DetectorVolume) -> Result<Peak> {
    let (r, c) = (p.row.round(), p.col.round());
    if r < 0.0 || c < 0.0 || r >= vol.n_rows() as f64 || c >= vol.n_cols() as f64 {
        return Err(PeakError::InvalidArgument(format!(
            "peak at ({}, {}) lies outside the detector",
            p.row, p.col
        )));
    }
    let position = vol.pixels().position_at(p.row, p.col);
    Ok(Peak {
        q: scattering_vector(position, vol.l1(), vol.tof_at(p.channel))?,
        ..p.clone()
    })
}

/// Rotates a lab-frame vector into the sample frame: `R(g)ᵀ·q_lab`.
pub fn apply_goniometer(q_lab: [f64; 3], g: &GoniometerSetting) -> [f64; 3] {
    let q = g.rotation().transpose() * Vector3::from(q_lab);
    [q.x, q.y, q.z]
}

/// Least-squares UB from `(hkl, q)` pairs, minimising `Σ‖2π·UB·h − q‖²`.
/// Returns the matrix and the RMS residual norm (Å⁻¹).
pub fn refine_ub(assigned: &[([i32; 3], [f64; 3])]) -> Result<(UBMatrix, f64)> {
    let n = assigned.len();
    if n < 3 {
        return Err(PeakError::RankDeficient(format!(
            "{n} assignments, need at least 3"
        )));
    }
    // Closed form UB = Q·Hᵀ·(H·Hᵀ)⁻¹/2π. H·Hᵀ has exact integer entries.
    let mut hht = Matrix3::<f64>::zeros();
    let mut qht = Matrix3::<f64>::zeros();
    for (h, q) in assigned {
        let h = Vector3::new(h[0] as f64, h[1] as f64, h[2] as f64);
        hht += h * h.transpose();
        qht += Vector3::from(*q) * h.transpose();
    }
    let eig = hht.symmetric_eigenvalues();
    if !(eig.min() > 1e-12 * eig.max()) {
        return Err(PeakError::RankDeficient(
            "Miller indices are coplanar".into(),
        ));
    }
    let chol = hht
        .cholesky()
        .ok_or_else(|| PeakError::RankDeficient("H·Hᵀ not positive definite".into()))?;
    // UB·(H·Hᵀ) = Q·Hᵀ/2π, and H·Hᵀ is symmetric.
    let ub = UBMatrix::new(chol.solve(&qht.transpose()).transpose() / TAU)?;
    let sq: f64 = assigned
        .iter()
        .map(|(h, q)| {
            let p = ub.q_for(*h);
            (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>()
        })
        .sum();
    Ok((ub, (sq / n as f64).sqrt()))
}

/// Picks `n` of the candidate assignments whose Miller-index directions
/// best span reciprocal space (largest `det Σ ĥ·ĥᵀ`), so that a UB refined
/// from them is as well conditioned as the candidates allow. Greedy
/// forward selection followed by single-swap exchange; deterministic.
pub fn choose_seeds(candidates: &[([i32; 3], [f64; 3])], n: usize) -> Vec<([i32; 3], [f64; 3])> {
    let units: Vec<Vector3<f64>> = candidates
        .iter()
        .map(|(h, _)| {
            let v = Vector3::new(h[0] as f64, h[1] as f64, h[2] as f64);
            let len = v.norm();
            if len > 0.0 {
                v / len
            } else {
                v
            }
        })
        .collect();
    let n = n.min(candidates.len());
    // A small ridge keeps the greedy determinant informative below 3 picks.
    let score = |set: &[usize]| {
        let m = set.iter().fold(Matrix3::identity() * 1e-6, |m, &i| {
            m + units[i] * units[i].transpose()
        });
        m.determinant()
    };
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    while chosen.len() < n {
        let best = (0..units.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let mut s = chosen.clone();
                s.push(i);
                (score(&s), i)
            })
            .fold((f64::MIN, usize::MAX), |a, b| if b.0 > a.0 { b } else { a });
        chosen.push(best.1);
    }
    loop {
        let current = score(&chosen);
        let mut improved = false;
        'swap: for slot in 0..chosen.len() {
            for i in 0..units.len() {
                if chosen.contains(&i) {
                    continue;
                }
                let mut s = chosen.clone();
                s[slot] = i;
                if score(&s) > current * (1.0 + 1e-12) {
                    chosen = s;
                    improved = true;
                    break 'swap;
                }
            }
        }
        if !improved {
            break;
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| candidates[i]).collect()
}

/// Assigns `hkl = round(UB⁻¹·q/2π)` to each peak whose fractional indices
/// all lie within `tol` of integers; other peaks get `hkl = None`.
pub fn index_peaks(ub: &UBMatrix, peaks: &[Peak], tol: f64) -> Result<Vec<Peak>> {
    if !(tol > 0.0 && tol <= 0.5) {
        return Err(PeakError::InvalidArgument(format!(
            "index tolerance must be in (0, 0.5], got {tol}"
        )));
    }
    let inv = ub.matrix().try_inverse().ok_or(PeakError::Singular)?;
    Ok(peaks
        .iter()
        .map(|p| {
            let h = inv * Vector3::from(p.q) / TAU;
            let hkl = h.map(f64::round);
            let ok = (h - hkl).amax() < tol && hkl.iter().all(|v| v.abs() < i32::MAX as f64);
            Peak {
                hkl: ok.then(|| [hkl.x as i32, hkl.y as i32, hkl.z as i32]),
                ..p.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;
    use crate::dataset::DetectorGeometry;
    use crate::operators::H_OVER_MN;

    /// TOF giving wavelength `lambda` over `path`.
    fn tof_for(lambda: f64, path: f64) -> f64 {
        lambda * 1e-10 * path / H_OVER_MN * 1e6
    }

    #[test]
    fn forward_and_right_angle() {
        let q = scattering_vector([0.0, 0.0, 0.5], 9.0, 3000.0).unwrap();
        assert_eq!(q, [0.0, 0.0, 0.0]);
        let q = scattering_vector([0.5, 0.0, 0.0], 9.0, tof_for(1.0, 9.5)).unwrap();
        let expect = [TAU, 0.0, -TAU];
        for i in 0..3 {
            assert!((q[i] - expect[i]).abs() < 1e-12, "{q:?}");
        }
        assert!((norm(q) - 8.885765876316732).abs() < 1e-9);
        assert_eq!(
            scattering_vector([0.5, 0.0, 0.0], 9.0, 0.0),
            Err(PeakError::ZeroFlightPath)
        );
    }

    #[test]
    fn seeds_span_space() {
        let ub = UBMatrix::cubic(4.0).unwrap();
        let hs = [
            [1, 0, 0],
            [2, 0, 0],
            [3, 1, 0],
            [0, 1, 0],
            [1, 1, 0],
            [0, 0, 1],
            [4, 0, 0],
        ];
        let c: Vec<_> = hs.iter().map(|&h| (h, ub.q_for(h))).collect();
        let seeds = choose_seeds(&c, 3);
        let picked: Vec<_> = seeds.iter().map(|s| s.0).collect();
        assert!(picked.contains(&[0, 0, 1]));
        assert!(refine_ub(&seeds).is_ok());
        assert_eq!(choose_seeds(&c, 10).len(), 7);
    }

    #[test]
    fn goniometer_examples() {
        let g = GoniometerSetting::default();
        assert_eq!(apply_goniometer([1.0, 2.0, 3.0], &g), [1.0, 2.0, 3.0]);
        let g = GoniometerSetting::new(0.0, 0.0, FRAC_PI_2).unwrap();
        let q = apply_goniometer([1.0, 0.0, 0.0], &g);
        assert!((q[0]).abs() < 1e-15 && (q[1] + 1.0).abs() < 1e-15 && q[2] == 0.0);
    }

    #[test]
    fn refine_examples() {
        let c = FRAC_PI_2;
        let a = [
            ([1, 0, 0], [c, 0.0, 0.0]),
            ([0, 1, 0], [0.0, c, 0.0]),
            ([0, 0, 1], [0.0, 0.0, c]),
        ];
        let (ub, res) = refine_ub(&a).unwrap();
        assert!(ub.max_abs_diff(&UBMatrix::cubic(4.0).unwrap()) < 1e-15);
        assert!(res < 1e-15);
        assert!(matches!(
            refine_ub(&a[..2]),
            Err(PeakError::RankDeficient(_))
        ));
        let coplanar = [
            a[0],
            a[1],
            ([1, 1, 0], [c, c, 0.0]),
            ([2, 1, 0], [2.0 * c, c, 0.0]),
        ];
        assert!(matches!(
            refine_ub(&coplanar),
            Err(PeakError::RankDeficient(_))
        ));
    }

    #[test]
    fn index_examples() {
        let ub =
            UBMatrix::from_rows([[0.2, 0.01, 0.0], [0.0, 0.25, 0.03], [0.02, 0.0, 0.3]]).unwrap();
        let mut p = Peak::new(0.0, 0.0, 0.0, 1.0);
        p.q = ub.q_for([1, 2, 3]);
        assert_eq!(
            index_peaks(&ub, &[p.clone()], 0.1).unwrap()[0].hkl,
            Some([1, 2, 3])
        );
        // Shift by 0.2 in h.
        let dq = ub.q_for([1, 0, 0]);
        p.q = [0, 1, 2].map(|i| p.q[i] + 0.2 * dq[i]);
        assert_eq!(index_peaks(&ub, &[p.clone()], 0.1).unwrap()[0].hkl, None);
        assert_eq!(
            index_peaks(&ub, &[p], 0.25).unwrap()[0].hkl,
            Some([1, 2, 3])
        );
    }

    fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-PI..PI, -PI..PI, -PI..PI).prop_map(|(a, b, c)| {
            GoniometerSetting {
                chi: a,
                phi: b,
                omega: c,
            }
            .rotation()
        })
    }

    fn ub_matrix() -> impl Strategy<Value = UBMatrix> {
        (
            rotation(),
            2.0..20.0f64,
            2.0..20.0f64,
            2.0..20.0f64,
            1.2..1.9f64,
        )
            .prop_filter_map("singular", |(u, a, b, c, gamma)| {
                // Monoclinic-ish B with unequal edges.
                let b_mat = Matrix3::new(
                    1.0 / a,
                    -gamma.cos() / a,
                    0.0,
                    0.0,
                    1.0 / b,
                    0.0,
                    0.0,
                    0.0,
                    1.0 / c,
                );
                UBMatrix::new(u * b_mat).ok()
            })
    }

    fn hkl() -> impl Strategy<Value = [i32; 3]> {
        [-10..=10i32, -10..=10i32, -10..=10i32]
    }

    proptest! {
        #[test]
        fn goniometer_preserves_norm(q in [-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64],
                                     chi in -7.0..7.0f64, phi in -7.0..7.0f64, omega in -7.0..7.0f64) {
            let g = GoniometerSetting::new(chi, phi, omega).unwrap();
            let s = apply_goniometer(q, &g);
            prop_assert!((norm(s) - norm(q)).abs() <= 1e-12 * norm(q).max(1.0));
        }

        #[test]
        fn q_magnitude_identity(pos in [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64], l1 in 1.0..30.0f64, tof in 100.0..30000.0f64) {
            prop_assume!(norm(pos) > 1e-3);
            let q = scattering_vector(pos, l1, tof).unwrap();
            let theta = DetectorGeometry::new(pos, l1, 0.0, 1.0).unwrap().theta();
            let lambda = tof_to_wavelength(tof, l1 + norm(pos));
            let expect = 4.0 * PI * theta.sin() / lambda;
            prop_assert!((norm(q) - expect).abs() <= 1e-9 * expect.max(1e-300) || expect == 0.0 && norm(q) == 0.0);
        }

        #[test]
        fn refine_inverts_forward_generation(ub in ub_matrix(), hs in proptest::collection::vec(hkl(), 3..40)) {
            let assigned: Vec<_> = hs.iter().map(|&h| (h, ub.q_for(h))).collect();
            match refine_ub(&assigned) {
                Ok((fit, res)) => {
                    prop_assert!(fit.max_abs_diff(&ub) < 1e-10);
                    prop_assert!(res < 1e-10, "res {res} diff {}", fit.max_abs_diff(&ub));
                }
                Err(PeakError::RankDeficient(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn index_inverts_forward_generation(ub in ub_matrix(), h in hkl()) {
            let mut p = Peak::new(0.0, 0.0, 0.0, 1.0);
            p.q = ub.q_for(h);
            prop_assert_eq!(index_peaks(&ub, &[p], DEFAULT_INDEX_TOL).unwrap()[0].hkl, Some(h));
        }
    }
}

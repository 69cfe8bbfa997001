use rayon::prelude::*;

use super::{peak_to_q, DetectorVolume, Peak, PeakError, Result};

/// Local maxima standing out from the whole volume.
///
/// A voxel is a candidate when it exceeds every in-bounds voxel of its
/// 3×3×3 neighbourhood and `mean + k_sigma·stddev` of the volume. Candidates
/// are taken strongest first; any within Chebyshev distance `min_sep` of an
/// accepted peak is dropped. At most `max_peaks` are returned.
pub fn find_peaks(
    vol: &DetectorVolume,
    k_sigma: f64,
    max_peaks: u32,
    min_sep: u32,
) -> Result<Vec<Peak>> {
    if !(k_sigma > 0.0) {
        return Err(PeakError::InvalidArgument(format!(
            "k_sigma must be positive, got {k_sigma}"
        )));
    }
    let counts = vol.counts();
    if counts.is_empty() {
        return Ok(Vec::new());
    }
    let n = counts.len() as f64;
    let mean = counts.par_iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = counts
        .par_iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let threshold = mean + k_sigma * var.sqrt();

    let (nr, nc, nch) = (vol.n_rows(), vol.n_cols(), vol.n_channels());
    // Rows are scanned in parallel; ordering is fixed afterwards by the sort.
    let mut candidates: Vec<(f32, u32, u32, u32)> = (0..nr)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut found = Vec::new();
            for c in 0..nc {
                for ch in 0..nch {
                    let v = vol.get(r, c, ch);
                    if (v as f64) > threshold && is_strict_max(vol, r, c, ch, v) {
                        found.push((v, r, c, ch));
                    }
                }
            }
            found
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3)))
    });

    let sep = min_sep as i64;
    let mut accepted: Vec<(i64, i64, i64)> = Vec::new();
    let mut peaks = Vec::new();
    for (v, r, c, ch) in candidates {
        if peaks.len() >= max_peaks as usize {
            break;
        }
        let p = (r as i64, c as i64, ch as i64);
        let near = accepted.iter().any(|a| {
            (a.0 - p.0)
                .abs()
                .max((a.1 - p.1).abs())
                .max((a.2 - p.2).abs())
                <= sep
        });
        if near {
            continue;
        }
        accepted.push(p);
        let mut peak = Peak::new(r as f64, c as f64, ch as f64, v as f64);
        peak.orientation_index = vol.orientation_index();
        peaks.push(peak);
    }
    Ok(peaks)
}

fn is_strict_max(vol: &DetectorVolume, r: u32, c: u32, ch: u32, v: f32) -> bool {
    let range = |x: u32, n: u32| x.saturating_sub(1)..=(x + 1).min(n - 1);
    for rr in range(r, vol.n_rows()) {
        for cc in range(c, vol.n_cols()) {
            for kk in range(ch, vol.n_channels()) {
                if (rr, cc, kk) != (r, c, ch) && vol.get(rr, cc, kk) >= v {
                    return false;
                }
            }
        }
    }
    true
}

/// Voxels within Chebyshev distance `half` of the peak's nearest voxel,
/// clipped to the volume, visited as `(row, col, channel, distance)`.
fn for_box(vol: &DetectorVolume, p: &Peak, half: u32, mut f: impl FnMut(u32, u32, u32, u32)) {
    let (r0, c0, k0) = p.voxel();
    let h = half as i64;
    let clip = |x: i64, n: u32| (x - h).max(0)..=(x + h).min(n as i64 - 1);
    for r in clip(r0, vol.n_rows()) {
        for c in clip(c0, vol.n_cols()) {
            for k in clip(k0, vol.n_channels()) {
                let d = (r - r0).abs().max((c - c0).abs()).max((k - k0).abs());
                f(r as u32, c as u32, k as u32, d as u32);
            }
        }
    }
}

/// Replaces the peak position by the intensity-weighted centroid of the
/// `±radius` box around it; the intensity becomes the box sum.
pub fn centroid(vol: &DetectorVolume, p: &Peak, radius: u32) -> Result<Peak> {
    let (mut sum, mut sr, mut sc, mut sk) = (0.0, 0.0, 0.0, 0.0);
    for_box(vol, p, radius, |r, c, k, _| {
        let w = vol.get(r, c, k) as f64;
        sum += w;
        sr += w * r as f64;
        sc += w * c as f64;
        sk += w * k as f64;
    });
    if !(sum > 0.0) {
        let (r, c, k) = p.voxel();
        return Err(PeakError::FlatRegion {
            row: r as u32,
            col: c as u32,
            channel: k as u32,
        });
    }
    Ok(Peak {
        row: sr / sum,
        col: sc / sum,
        channel: sk / sum,
        intensity: sum,
        sigma_intensity: sum.sqrt(),
        ..p.clone()
    })
}

/// Background-subtracted intensity: the `±box_half` box sum minus the
/// background estimated from the shell `box_half < d ≤ shell_half`
/// (Chebyshev distance), with Poisson uncertainty.
pub fn integrate_peak(
    vol: &DetectorVolume,
    p: &Peak,
    box_half: u32,
    shell_half: u32,
) -> Result<(f64, f64)> {
    if box_half >= shell_half {
        return Err(PeakError::InvalidArgument(format!(
            "box half-width {box_half} must be smaller than shell half-width {shell_half}"
        )));
    }
    let (mut sum_box, mut n_box, mut sum_shell, mut n_shell) = (0.0, 0.0, 0.0, 0.0);
    for_box(vol, p, shell_half, |r, c, k, d| {
        let v = vol.get(r, c, k) as f64;
        if d <= box_half {
            sum_box += v;
            n_box += 1.0;
        } else {
            sum_shell += v;
            n_shell += 1.0;
        }
    });
    if n_shell == 0.0 {
        return Err(PeakError::EmptyShell);
    }
    let intensity = sum_box - n_box * sum_shell / n_shell;
    let var = sum_box + n_box * n_box * sum_shell / (n_shell * n_shell);
    Ok((intensity, var.max(0.0).sqrt()))
}

/// Settings for [`analyze`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FindParams {
    pub k_sigma: f64,
    pub max_peaks: u32,
    pub min_sep: u32,
    pub centroid_radius: u32,
    pub box_half: u32,
    pub shell_half: u32,
}

impl Default for FindParams {
    fn default() -> FindParams {
        FindParams {
            k_sigma: 10.0,
            max_peaks: 1000,
            min_sep: 3,
            centroid_radius: 2,
            box_half: 2,
            shell_half: 4,
        }
    }
}

/// Finds, centroids and integrates peaks and sets their lab-frame `q`.
pub fn analyze(vol: &DetectorVolume, params: &FindParams) -> Result<Vec<Peak>> {
    find_peaks(vol, params.k_sigma, params.max_peaks, params.min_sep)?
        .par_iter()
        .map(|p| {
            let mut p = centroid(vol, p, params.centroid_radius)?;
            let (i, s) = integrate_peak(vol, &p, params.box_half, params.shell_half)?;
            p.intensity = i;
            p.sigma_intensity = s;
            peak_to_q(&p, vol)
        })
        .collect()
}

use std::sync::Arc;

use proptest::prelude::*;
use tofbench::dataset::XScale;
use tofbench::peaks::{
    analyze, apply_goniometer, choose_seeds, find_peaks, index_peaks, refine_ub, DetectorVolume,
    FindParams, FlatPanel, GoniometerSetting, Peak, DEFAULT_INDEX_TOL,
};
use tofbench::retrievers::{read_runfile, write_runfile, LoadSelection};
use tofbench::synth::{generate_scd, ScdConfig};

fn volume(nr: u32, nc: u32, nch: u32, counts: Vec<f32>) -> DetectorVolume {
    let panel = FlatPanel::new(nr, nc, 0.3, 1.5, 0.002).unwrap();
    let tof = XScale::uniform(1000.0, 1000.0 + 10.0 * nch as f64, nch).unwrap();
    DetectorVolume::new(nr, nc, tof, counts, Arc::new(panel), 9.0).unwrap()
}

/// Straight transcription of the definition, with no shortcuts.
fn brute_force(v: &DetectorVolume, k: f64, max: usize, sep: i64) -> Vec<(i64, i64, i64)> {
    let c = v.counts();
    let n = c.len() as f64;
    let mean = c.iter().map(|&x| x as f64).sum::<f64>() / n;
    let sd = (c.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (nr, nc, nk) = (v.n_rows() as i64, v.n_cols() as i64, v.n_channels() as i64);
    let at = |r: i64, c: i64, k: i64| v.get(r as u32, c as u32, k as u32);
    let mut cand = Vec::new();
    for r in 0..nr {
        for cc in 0..nc {
            for kk in 0..nk {
                let x = at(r, cc, kk);
                if x as f64 <= mean + k * sd {
                    continue;
                }
                let mut strict = true;
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        for dk in -1..=1 {
                            let (a, b, d) = (r + dr, cc + dc, kk + dk);
                            if (dr, dc, dk) != (0, 0, 0)
                                && a >= 0
                                && b >= 0
                                && d >= 0
                                && a < nr
                                && b < nc
                                && d < nk
                            {
                                strict &= at(a, b, d) < x;
                            }
                        }
                    }
                }
                if strict {
                    cand.push((x, (r, cc, kk)));
                }
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<(i64, i64, i64)> = Vec::new();
    for (_, p) in cand {
        if out.len() == max {
            break;
        }
        if out.iter().all(|q| {
            (q.0 - p.0)
                .abs()
                .max((q.1 - p.1).abs())
                .max((q.2 - p.2).abs())
                > sep
        }) {
            out.push(p);
        }
    }
    out
}

fn coords(p: &[Peak]) -> Vec<(i64, i64, i64)> {
    p.iter().map(Peak::voxel).collect()
}

#[test]
fn two_gaussian_blobs() {
    let (nr, nc, nk) = (20, 24, 40);
    let centres = [(5.0, 6.0, 10.0, 100.0), (14.0, 17.0, 28.0, 60.0)];
    let mut counts = Vec::new();
    for r in 0..nr {
        for c in 0..nc {
            for k in 0..nk {
                let v: f64 = centres
                    .iter()
                    .map(|&(a, b, d, h)| {
                        let d2 = (r as f64 - a).powi(2)
                            + (c as f64 - b).powi(2)
                            + (k as f64 - d).powi(2);
                        h * (-d2 / 3.0).exp()
                    })
                    .sum();
                counts.push(v as f32);
            }
        }
    }
    let v = volume(nr, nc, nk, counts);
    let found = find_peaks(&v, 5.0, 10, 3).unwrap();
    assert_eq!(coords(&found), vec![(5, 6, 10), (14, 17, 28)]);
    assert_eq!(coords(&found), brute_force(&v, 5.0, 10, 3));
}

fn random_volume() -> impl Strategy<Value = DetectorVolume> {
    (2..9u32, 2..9u32, 2..12u32).prop_flat_map(|(nr, nc, nk)| {
        proptest::collection::vec(0..40u32, (nr * nc * nk) as usize)
            .prop_map(move |c| volume(nr, nc, nk, c.into_iter().map(|x| x as f32).collect()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_brute_force(v in random_volume(), k in 0.1..2.0f64, max in 1..20usize, sep in 0..3u32) {
        let fast = find_peaks(&v, k, max as u32, sep).unwrap();
        prop_assert_eq!(coords(&fast), brute_force(&v, k, max, sep as i64));
    }

    #[test]
    fn invariant_under_positive_scaling(v in random_volume(), k in 0.1..2.0f64, scale in prop_oneof![0.25..4.0f64, Just(1e3), Just(1e-3)]) {
        let scaled: Vec<f32> = v.counts().iter().map(|&x| (x as f64 * scale) as f32).collect();
        let w = volume(v.n_rows(), v.n_cols(), v.n_channels(), scaled);
        let a = coords(&find_peaks(&v, k, 100, 1).unwrap());
        let b = coords(&find_peaks(&w, k, 100, 1).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn volume_survives_a_run_file() {
    let cfg = ScdConfig {
        panel: FlatPanel::new(16, 16, 0.2, 1.5, 0.02).unwrap(),
        tof: XScale::uniform(1000.0, 11000.0, 50).unwrap(),
        n_reflections: 2,
        min_separation: 3.0,
        max_hkl_norm: 4.0,
        goniometer: GoniometerSetting::new(0.1, 0.2, 0.3).unwrap(),
        ..Default::default()
    };
    let s = generate_scd(&cfg, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scd.trf");
    write_runfile(&path, "SCD", 1, 0, &[s.volume.to_dataset("panel").unwrap()]).unwrap();
    let ds = read_runfile(&path, &LoadSelection::all())
        .unwrap()
        .remove(0);
    let back = DetectorVolume::from_dataset(&ds).unwrap();
    assert_eq!(back.counts(), s.volume.counts());
    assert_eq!(back.goniometer(), s.volume.goniometer());
    let p = FindParams {
        k_sigma: 5.0,
        ..Default::default()
    };
    let (a, b) = (analyze(&back, &p).unwrap(), analyze(&s.volume, &p).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(
            (x.row, x.col, x.channel, x.intensity),
            (y.row, y.col, y.channel, y.intensity)
        );
        assert!((0..3).all(|k| (x.q[k] - y.q[k]).abs() < 1e-12));
    }
}

#[test]
fn scd_pipeline_end_to_end() {
    let cfg = ScdConfig {
        goniometer: GoniometerSetting::new(0.4, 1.1, -0.3).unwrap(),
        ..Default::default()
    };
    let s = generate_scd(&cfg, 7).unwrap();
    let g = s.volume.goniometer();
    let peaks: Vec<Peak> = analyze(&s.volume, &FindParams::default())
        .unwrap()
        .into_iter()
        .map(|p| Peak {
            q: apply_goniometer(p.q, &g),
            ..p
        })
        .collect();
    let truth = |p: &Peak| {
        s.reflections.iter().find(|r| {
            (r.row - p.row)
                .abs()
                .max((r.col - p.col).abs())
                .max((r.channel - p.channel).abs())
                < 2.0
        })
    };
    let matched: Vec<_> = peaks
        .iter()
        .filter_map(|p| truth(p).map(|r| (r.hkl, p.q)))
        .collect();
    assert!(matched.len() >= 48, "{} matched", matched.len());

    let (ub, _) = refine_ub(&choose_seeds(&matched, 5)).unwrap();
    // Loose bound: the 1% noise alone puts the 5-seed error near 1e-3.
    assert!(ub.max_abs_diff(&s.ub) < 1e-2);
    let indexed = index_peaks(&ub, &peaks, DEFAULT_INDEX_TOL).unwrap();
    let correct = indexed
        .iter()
        .filter(|p| p.hkl.is_some() && truth(p).map(|r| r.hkl) == p.hkl)
        .count();
    assert!(correct >= 48, "{correct} indexed correctly");
}

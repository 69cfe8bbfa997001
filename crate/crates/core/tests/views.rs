use proptest::collection::vec;
use proptest::prelude::*;
use tofbench::dataset::{DataSet, Spectrum, XScale, XUnits};
use tofbench::synth::{generate_scd, live_pattern, LivePatternConfig, ScdConfig};
use tofbench::views::{
    cursor_readout, find_slice_for_cursor, image_raster, point_cloud, pointed_spectrum, time_slice,
    total_counts_grid, IntensityScale, PointMode, Viewport,
};

fn dataset(rows: Vec<Vec<f32>>) -> DataSet {
    let spectra = rows
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let n = c.len() as u32;
            Spectrum::new(
                i as u32 + 1,
                XScale::uniform(100.0, 100.0 + 2.0 * n as f64, n).unwrap(),
                c,
                None,
            )
            .unwrap()
        })
        .collect();
    DataSet::new("v", XUnits::TofUs, "counts", spectra, vec![]).unwrap()
}

/// Rows of equal length with a sprinkling of zeros and whole dead rows.
fn rows() -> impl Strategy<Value = Vec<Vec<f32>>> {
    (1usize..12, 1usize..80).prop_flat_map(|(n, bins)| {
        vec(
            prop_oneof![
                1 => Just(vec![0.0f32; bins]),
                6 => vec(prop_oneof![1 => Just(0.0f32), 4 => 0.0f32..1e4], bins),
            ],
            n,
        )
    })
}

fn scale() -> impl Strategy<Value = IntensityScale> {
    prop_oneof![Just(IntensityScale::Linear), Just(IntensityScale::Log)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compressed_columns_show_the_window_max(rows in rows(), width in 1u32..40, height in 1u32..30, s in scale()) {
        let ds = dataset(rows.clone());
        let vp = Viewport { intensity_scale: s, ..Viewport::new(width, height) };
        let rr = image_raster(&ds, &vp).unwrap();
        let nbins = rows[0].len();
        // Columns tile the bins without gaps or overlap.
        let covered: Vec<u32> = rr.col_map.iter().flat_map(|&(lo, hi)| lo..hi).collect();
        if nbins > width as usize {
            prop_assert_eq!(covered, (0..nbins as u32).collect::<Vec<_>>());
        }
        prop_assert_eq!(rr.pixels.len(), (rr.width * rr.height) as usize);
        for py in 0..rr.height {
            let row = &rows[rr.row_index[py as usize] as usize];
            let dead = row.iter().all(|&v| v == 0.0);
            for px in 0..rr.width {
                let (lo, hi) = rr.col_map[px as usize];
                let max = row[lo as usize..hi as usize].iter().copied().fold(f32::MIN, f32::max);
                let r = cursor_readout(&ds, &rr, px, py).unwrap();
                prop_assert_eq!(r.y_value, max);
                prop_assert!(r.bin_index >= lo && r.bin_index < hi);
                let p = rr.pixel(px, py);
                if dead || max <= 0.0 {
                    prop_assert_eq!(p, 0);
                } else {
                    prop_assert!(p >= 1);
                    prop_assert!(max as f64 >= rr.value_range.0 && max as f64 <= rr.value_range.1);
                }
            }
        }
    }

    #[test]
    fn colors_are_monotone_in_value(rows in rows(), width in 1u32..40, s in scale()) {
        let ds = dataset(rows);
        let rr = image_raster(&ds, &Viewport { intensity_scale: s, ..Viewport::new(width, 12) }).unwrap();
        let mut cells = Vec::new();
        for py in 0..rr.height {
            for px in 0..rr.width {
                let v = cursor_readout(&ds, &rr, px, py).unwrap().y_value;
                if rr.pixel(px, py) > 0 {
                    cells.push((v, rr.pixel(px, py)));
                }
            }
        }
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        prop_assert!(cells.windows(2).all(|w| w[0].1 <= w[1].1));
        if let Some(&(_, top)) = cells.last() {
            prop_assert_eq!(top, 255);
        }
    }

    #[test]
    fn uncompressed_raster_is_a_bijection(rows in rows(), extra in 0u32..5, s in scale()) {
        let nbins = rows[0].len() as u32;
        let ds = dataset(rows.clone());
        let vp = Viewport {
            horizontal_compression: false,
            intensity_scale: s,
            ..Viewport::new(nbins + extra, rows.len() as u32)
        };
        let rr = image_raster(&ds, &vp).unwrap();
        prop_assert_eq!(rr.width, nbins);
        prop_assert_eq!(rr.height as usize, rows.len());
        prop_assert_eq!(&rr.col_map, &(0..nbins).map(|b| (b, b + 1)).collect::<Vec<_>>());
        for (py, row) in rows.iter().enumerate() {
            prop_assert_eq!(rr.row_map[py], py as u32 + 1);
            for (b, &v) in row.iter().enumerate() {
                let r = cursor_readout(&ds, &rr, b as u32, py as u32).unwrap();
                prop_assert_eq!((r.bin_index, r.y_value.to_bits()), (b as u32, v.to_bits()));
                prop_assert_eq!(r.x_at_cursor, 100.0 + 2.0 * b as f64 + 1.0);
            }
        }
    }

    #[test]
    fn global_maximum_survives(rows in rows(), width in 1u32..40, offset in 0u32..4) {
        let ds = dataset(rows.clone());
        let rr = image_raster(&ds, &Viewport { row_offset: offset, ..Viewport::new(width, 40) }).unwrap();
        let visible: Vec<&Vec<f32>> = rows.iter().skip(offset as usize).collect();
        prop_assert_eq!(rr.height as usize / rr.row_height.max(1) as usize, visible.len());
        let truth = visible.iter().flat_map(|r| r.iter().copied()).fold(0.0f32, f32::max);
        let mut shown = 0.0f32;
        for py in 0..rr.height {
            for px in 0..rr.width {
                shown = shown.max(cursor_readout(&ds, &rr, px, py).unwrap().y_value);
            }
        }
        prop_assert_eq!(shown, truth);
        if truth > 0.0 {
            prop_assert_eq!(rr.value_range.1, truth as f64);
            prop_assert!(rr.pixels.contains(&255));
        }
    }

    #[test]
    fn rendering_is_deterministic(rows in rows(), width in 1u32..40, height in 1u32..30, s in scale()) {
        let vp = Viewport { intensity_scale: s, ..Viewport::new(width, height) };
        let a = image_raster(&dataset(rows.clone()), &vp).unwrap();
        let b = image_raster(&dataset(rows), &vp).unwrap();
        prop_assert_eq!(a.to_pgm(), b.to_pgm());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn slices_sum_to_pixel_totals(seed in 0u64..1000) {
        let cfg = LivePatternConfig { n_rows: 16, n_cols: 16, n_bins: 60, n_peaks: 3, ..Default::default() };
        // Small panels cannot always fit the requested reflections.
        let ds = live_pattern(&cfg, seed);
        prop_assume!(ds.is_ok());
        let ds = ds.unwrap();
        let totals = total_counts_grid(&ds).unwrap();
        let mut sum = vec![0.0f64; totals.values.len()];
        for k in 0..cfg.n_bins {
            let g = time_slice(&ds, k).unwrap();
            for (acc, v) in sum.iter_mut().zip(&g.values) {
                *acc += *v as f64;
            }
            let cloud = point_cloud(&ds, PointMode::Channel(k)).unwrap();
            for (s, p) in ds.spectra().iter().zip(&cloud) {
                let row = s.attr("row").unwrap().as_i64().unwrap() as u32;
                let col = s.attr("col").unwrap().as_i64().unwrap() as u32;
                prop_assert_eq!(p.intensity, g.get(row, col) as f64);
            }
        }
        for (a, t) in sum.iter().zip(&totals.values) {
            prop_assert!((*a - *t as f64).abs() <= 1e-6 * t.abs().max(1.0) as f64);
        }
    }
}

#[test]
fn slice_matches_the_detector_volume() {
    let cfg = ScdConfig {
        n_reflections: 20,
        ..Default::default()
    };
    let sample = generate_scd(&cfg, 11).unwrap();
    let v = &sample.volume;
    let ds = v.to_dataset("scd").unwrap();
    for refl in &sample.reflections {
        let k = refl.channel.round() as u32;
        let g = time_slice(&ds, k).unwrap();
        assert_eq!((g.n_rows, g.n_cols), (v.n_rows(), v.n_cols()));
        for r in 0..v.n_rows() {
            for c in 0..v.n_cols() {
                assert_eq!(g.get(r, c).to_bits(), v.get(r, c, k).to_bits());
            }
        }
        // The blob's cross-section peaks near the reflection's pixel.
        let (pr, pc) = (refl.row.round() as u32, refl.col.round() as u32);
        let local = g.get(pr, pc);
        assert!(
            local > 0.25 * refl.amplitude as f32,
            "{local} vs {}",
            refl.amplitude
        );
    }
}

#[test]
fn pointing_at_a_peak_selects_its_channel() {
    let cfg = ScdConfig {
        n_reflections: 10,
        background: 0.0,
        poisson: false,
        ..Default::default()
    };
    let sample = generate_scd(&cfg, 3).unwrap();
    let ds = sample.volume.to_dataset("scd").unwrap();
    let nbins = ds.max_nbins() as u32;
    for refl in &sample.reflections {
        let (pr, pc) = (refl.row.round() as u32, refl.col.round() as u32);
        let position = (pr * sample.volume.n_cols() + pc) as u32;
        let vp = Viewport {
            row_offset: position,
            ..Viewport::new(nbins / 4, 1)
        };
        let rr = image_raster(&ds, &vp).unwrap();
        assert_eq!(
            pointed_spectrum(&ds, &rr, 0).unwrap().id(),
            ds.spectra()[position as usize].id()
        );
        let counts = ds.spectra()[position as usize].counts();
        let peak = (0..counts.len())
            .max_by(|&a, &b| counts[a].total_cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap() as u32;
        assert!(
            (peak as f64 - refl.channel).abs() <= 1.0,
            "{peak} vs {}",
            refl.channel
        );
        let px = rr
            .col_map
            .iter()
            .position(|&(lo, hi)| (lo..hi).contains(&peak))
            .unwrap() as u32;
        assert_eq!(find_slice_for_cursor(&ds, &rr, px, 0).unwrap(), peak);
        assert!(find_slice_for_cursor(&ds, &rr, rr.width, 0).is_err());
    }
}

#[test]
fn point_cloud_total_mode_and_missing_geometry() {
    let cfg = LivePatternConfig {
        n_rows: 8,
        n_cols: 8,
        n_bins: 20,
        n_peaks: 0,
        ..Default::default()
    };
    let ds = live_pattern(&cfg, 1).unwrap();
    let cloud = point_cloud(&ds, PointMode::Total).unwrap();
    assert_eq!(cloud.len(), 64);
    for (s, p) in ds.spectra().iter().zip(&cloud) {
        assert_eq!(p.intensity, s.total_counts());
        let [x, y, z] = s.geometry().unwrap().position();
        assert_eq!((p.x, p.y, p.z), (x, y, z));
    }
    let bare = dataset(vec![vec![1.0], vec![2.0], vec![3.0]]);
    let err = point_cloud(&bare, PointMode::Total).unwrap_err();
    assert!(err.to_string().contains("spectrum 1"), "{err}");
}

#![allow(dead_code)]

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use tofbench::dataset::{
    attr, AttrValue, Attribute, DataSet, DetectorGeometry, Spectrum, XScale, XUnits,
};
use tofbench::retrievers::{DatasetKind, Run, RunDataset};

pub fn xscale(max_bins: u32) -> impl Strategy<Value = XScale> {
    let uniform = (0.0..5000.0f64, 0.5..50.0f64, 1..=max_bins)
        .prop_map(|(start, w, n)| XScale::uniform(start, start + w * n as f64, n).unwrap());
    let explicit =
        (0.0..5000.0f64, vec(0.01..40.0f64, 1..=max_bins as usize)).prop_map(|(start, widths)| {
            let mut edges = vec![start];
            for w in widths {
                edges.push(edges.last().unwrap() + w);
            }
            XScale::explicit(edges).unwrap()
        });
    prop_oneof![uniform, explicit]
}

fn attr_value() -> impl Strategy<Value = AttrValue> {
    prop_oneof![
        (-1e6..1e6f64).prop_map(AttrValue::F64),
        any::<i64>().prop_map(AttrValue::I64),
        "[a-z ]{0,8}".prop_map(AttrValue::Str),
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(a, b, c)| AttrValue::Triple([a, b, c])),
    ]
}

pub fn attributes() -> impl Strategy<Value = Vec<Attribute>> {
    vec(("[a-z]{1,6}", attr_value()), 0..3).prop_map(|v| {
        let mut out: Vec<Attribute> = Vec::new();
        for (name, value) in v {
            // Keep clear of reserved names, whose types are fixed.
            let name = format!("x_{name}");
            if out.iter().all(|a| a.name() != name) {
                out.push(Attribute::new(name, value).unwrap());
            }
        }
        out
    })
}

fn geometry() -> impl Strategy<Value = Option<DetectorGeometry>> {
    proptest::option::of(
        (0.02..3.1f64, 0.2..4.0f64, 5.0..30.0f64)
            .prop_map(|(tt, l2, l1)| DetectorGeometry::in_plane(tt, l2, l1).unwrap()),
    )
}

fn spectrum_on(id: u32, scale: XScale) -> impl Strategy<Value = Spectrum> {
    let n = scale.nbins();
    (
        vec(-5.0..1e5f32, n),
        proptest::option::of(vec(0.0..500.0f32, n)),
        0..4u32,
        "[a-z0-9]{0,6}",
        geometry(),
        attributes(),
        proptest::option::of(0..64i64),
    )
        .prop_map(
            move |(counts, errors, group, label, geom, mut attrs, row)| {
                if let Some(r) = row {
                    attrs.push(Attribute::i64(attr::ROW, r).unwrap());
                }
                Spectrum::new(id, scale.clone(), counts, errors)
                    .unwrap()
                    .with_group_id(group)
                    .with_label(label)
                    .with_geometry(geom)
                    .with_attributes(attrs)
            },
        )
}

/// Datasets with unique ids; about half share a single x-scale.
pub fn dataset(max_spectra: usize, max_bins: u32) -> impl Strategy<Value = DataSet> {
    (
        btree_set(0..1000u32, 1..=max_spectra),
        any::<bool>(),
        xscale(max_bins),
        "[A-Za-z0-9_]{0,10}",
        prop_oneof![
            Just(XUnits::TofUs),
            Just(XUnits::WavelengthA),
            Just(XUnits::DspacingA),
            Just(XUnits::QInvA)
        ],
        attributes(),
    )
        .prop_flat_map(move |(ids, shared, scale, title, units, attrs)| {
            let spectra: Vec<_> = ids
                .into_iter()
                .map(|id| {
                    if shared {
                        spectrum_on(id, scale.clone()).boxed()
                    } else {
                        xscale(max_bins)
                            .prop_flat_map(move |s| spectrum_on(id, s))
                            .boxed()
                    }
                })
                .collect();
            (spectra, Just(title), Just(units), Just(attrs))
        })
        .prop_map(|(spectra, title, units, attrs)| {
            DataSet::new(title, units, "counts", spectra, attrs).unwrap()
        })
}

pub fn run(max_datasets: usize) -> impl Strategy<Value = Run> {
    (
        "[A-Z]{1,6}",
        any::<u32>(),
        any::<i64>(),
        vec((dataset(5, 24), 0..3u8), 1..=max_datasets),
    )
        .prop_map(|(instrument, run_number, start_time, ds)| Run {
            instrument,
            run_number,
            start_time,
            datasets: ds
                .into_iter()
                .map(|(data, k)| RunDataset {
                    kind: DatasetKind::from_code(k).unwrap(),
                    data,
                })
                .collect(),
        })
}

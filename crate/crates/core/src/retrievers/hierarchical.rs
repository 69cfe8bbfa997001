//! Hierarchical run document: the NeXus logical layout (an `entry` holding
//! instrument metadata and one data group per dataset) carried as JSON.
//!
//! Bulk arrays are base64 of little-endian values: `f32` for counts and
//! errors, `f64` for explicit bin edges. Decoding reports schema violations
//! with the JSON path of the offending node, e.g. `entry.data[0].spectra[3].counts`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Map, Value};

use super::ascii::AttrJson;
use super::{DatasetKind, Result, RetrieverError, Run, RunDataset};
use crate::dataset::{Attribute, DataSet, DetectorGeometry, Spectrum, XScale, XUnits};

pub const FORMAT: &str = "tofbench-hierarchical/1";

pub fn write_hierarchical(run: &Run, path: &Path) -> Result<()> {
    let ctx = |e| RetrieverError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(ctx)?);
    serde_json::to_writer(&mut w, &to_value(run)).map_err(|e| ctx(e.into()))?;
    w.flush().map_err(ctx)
}

pub fn read_hierarchical(path: &Path) -> Result<Run> {
    let f = File::open(path).map_err(|e| RetrieverError::io(path, e))?;
    let v: Value =
        serde_json::from_reader(BufReader::new(f)).map_err(|e| RetrieverError::Schema {
            path: "$".into(),
            reason: format!("{}: invalid JSON: {e}", path.display()),
        })?;
    from_value(&v)
}

fn f32_b64(v: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(4 * v.len());
    v.iter()
        .for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
    B64.encode(bytes)
}

fn f64_b64(v: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(8 * v.len());
    v.iter()
        .for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
    B64.encode(bytes)
}

fn attrs_value(attrs: &[Attribute]) -> Value {
    serde_json::to_value(attrs.iter().map(AttrJson::from_attr).collect::<Vec<_>>())
        .expect("attributes serialize")
}

pub fn to_value(run: &Run) -> Value {
    let data: Vec<Value> = run
        .datasets
        .iter()
        .map(|d| {
            let spectra: Vec<Value> = d.data.spectra().iter().map(spectrum_value).collect();
            json!({
                "NX_class": "NXdata",
                "name": d.data.title(),
                "kind": d.kind.name(),
                "x_units": d.data.x_units().name(),
                "y_units": d.data.y_units(),
                "attributes": attrs_value(d.data.attributes()),
                "spectra": spectra,
            })
        })
        .collect();
    json!({
        "format": FORMAT,
        "entry": {
            "NX_class": "NXentry",
            "instrument": run.instrument,
            "run_number": run.run_number,
            "start_time": run.start_time,
            "data": data,
        }
    })
}

fn spectrum_value(s: &Spectrum) -> Value {
    let xscale = match s.xscale() {
        XScale::Uniform { start, end, nbins } => {
            json!({"kind": "uniform", "start": start, "end": end, "nbins": nbins})
        }
        XScale::Explicit { edges } => json!({"kind": "explicit", "edges": f64_b64(edges)}),
    };
    let geometry = match s.geometry() {
        None => Value::Null,
        Some(g) => json!({
            "position": g.position(),
            "initial_path": g.initial_path(),
            "solid_angle": g.solid_angle(),
            "efficiency": g.efficiency(),
        }),
    };
    json!({
        "id": s.id(),
        "group_id": s.group_id(),
        "label": s.label(),
        "xscale": xscale,
        "counts": f32_b64(s.counts()),
        "errors": f32_b64(s.errors()),
        "geometry": geometry,
        "attributes": attrs_value(s.attributes()),
    })
}

/// A JSON node together with its path, for error reporting.
#[derive(Clone, Copy)]
struct Node<'a> {
    value: &'a Value,
    path: &'a str,
}

struct Owned<'a> {
    value: &'a Value,
    path: String,
}

impl<'a> Owned<'a> {
    fn node(&self) -> Node<'_> {
        Node {
            value: self.value,
            path: &self.path,
        }
    }
}

fn schema(path: &str, reason: impl Into<String>) -> RetrieverError {
    RetrieverError::Schema {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl<'a> Node<'a> {
    fn object(&self) -> Result<&'a Map<String, Value>> {
        self.value
            .as_object()
            .ok_or_else(|| schema(self.path, "expected an object"))
    }

    fn get(&self, key: &str) -> Result<Owned<'a>> {
        let path = if self.path == "$" {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        };
        let value = self
            .object()?
            .get(key)
            .ok_or_else(|| schema(&path, "missing required key"))?;
        Ok(Owned { value, path })
    }

    fn items(&self) -> Result<Vec<Owned<'a>>> {
        let arr = self
            .value
            .as_array()
            .ok_or_else(|| schema(self.path, "expected an array"))?;
        Ok(arr
            .iter()
            .enumerate()
            .map(|(i, value)| Owned {
                value,
                path: format!("{}[{i}]", self.path),
            })
            .collect())
    }

    fn str(&self) -> Result<&'a str> {
        self.value
            .as_str()
            .ok_or_else(|| schema(self.path, "expected a string"))
    }

    fn u32(&self) -> Result<u32> {
        self.value
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| schema(self.path, "expected an unsigned 32-bit integer"))
    }

    fn i64(&self) -> Result<i64> {
        self.value
            .as_i64()
            .ok_or_else(|| schema(self.path, "expected an integer"))
    }

    fn f64(&self) -> Result<f64> {
        self.value
            .as_f64()
            .ok_or_else(|| schema(self.path, "expected a number"))
    }

    fn bytes(&self, width: usize) -> Result<Vec<u8>> {
        let b = B64
            .decode(self.str()?)
            .map_err(|e| schema(self.path, format!("invalid base64: {e}")))?;
        if b.len() % width != 0 {
            return Err(schema(
                self.path,
                format!("{} bytes is not a multiple of {width}", b.len()),
            ));
        }
        Ok(b)
    }

    fn f32s(&self) -> Result<Vec<f32>> {
        Ok(self
            .bytes(4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn f64s(&self) -> Result<Vec<f64>> {
        Ok(self
            .bytes(8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn attributes(&self) -> Result<Vec<Attribute>> {
        self.items()?
            .iter()
            .map(|a| {
                let raw: AttrJson = serde_json::from_value(a.value.clone())
                    .map_err(|e| schema(&a.path, e.to_string()))?;
                raw.into_attr().map_err(|e| schema(&a.path, e.to_string()))
            })
            .collect()
    }
}

pub fn from_value(v: &Value) -> Result<Run> {
    let root = Node {
        value: v,
        path: "$",
    };
    let format = root.get("format")?;
    if format.node().str()? != FORMAT {
        return Err(schema(
            &format.path,
            format!("unsupported format {:?}", format.value),
        ));
    }
    let entry = root.get("entry")?;
    let entry = entry.node();
    let data = entry.get("data")?;
    let datasets = data
        .node()
        .items()?
        .iter()
        .map(|d| dataset_from(d.node()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Run {
        instrument: entry.get("instrument")?.node().str()?.to_string(),
        run_number: entry.get("run_number")?.node().u32()?,
        start_time: entry.get("start_time")?.node().i64()?,
        datasets,
    })
}

fn dataset_from(d: Node<'_>) -> Result<RunDataset> {
    let kind_node = d.get("kind")?;
    let kind = DatasetKind::from_name(kind_node.node().str()?)
        .ok_or_else(|| schema(&kind_node.path, "unknown dataset kind"))?;
    let units_node = d.get("x_units")?;
    let x_units: XUnits = units_node
        .node()
        .str()?
        .parse()
        .map_err(|e: crate::dataset::DataError| schema(&units_node.path, e.to_string()))?;
    let spectra_node = d.get("spectra")?;
    let spectra = spectra_node
        .node()
        .items()?
        .iter()
        .map(|s| spectrum_from(s.node()))
        .collect::<Result<Vec<_>>>()?;
    let data = DataSet::new(
        d.get("name")?.node().str()?,
        x_units,
        d.get("y_units")?.node().str()?,
        spectra,
        d.get("attributes")?.node().attributes()?,
    )
    .map_err(|e| schema(&spectra_node.path, e.to_string()))?;
    Ok(RunDataset { kind, data })
}

fn spectrum_from(s: Node<'_>) -> Result<Spectrum> {
    let xs = s.get("xscale")?;
    let x = xs.node();
    let kind = x.get("kind")?;
    let scale = match kind.node().str()? {
        "uniform" => XScale::uniform(
            x.get("start")?.node().f64()?,
            x.get("end")?.node().f64()?,
            x.get("nbins")?.node().u32()?,
        ),
        "explicit" => XScale::explicit(x.get("edges")?.node().f64s()?),
        other => {
            return Err(schema(
                &kind.path,
                format!("unknown x-scale kind {other:?}"),
            ))
        }
    }
    .map_err(|e| schema(&xs.path, e.to_string()))?;

    let geometry_node = s.get("geometry")?;
    let geometry = match geometry_node.value {
        Value::Null => None,
        _ => {
            let g = geometry_node.node();
            let pos = g.get("position")?;
            let p = pos.node().items()?;
            if p.len() != 3 {
                return Err(schema(&pos.path, "expected 3 components"));
            }
            let position = [p[0].node().f64()?, p[1].node().f64()?, p[2].node().f64()?];
            Some(
                DetectorGeometry::new(
                    position,
                    g.get("initial_path")?.node().f64()?,
                    g.get("solid_angle")?.node().f64()?,
                    g.get("efficiency")?.node().f64()?,
                )
                .map_err(|e| schema(&geometry_node.path, e.to_string()))?,
            )
        }
    };
    let counts = s.get("counts")?;
    let spectrum = Spectrum::new(
        s.get("id")?.node().u32()?,
        scale,
        counts.node().f32s()?,
        Some(s.get("errors")?.node().f32s()?),
    )
    .map_err(|e| schema(&counts.path, e.to_string()))?;
    Ok(spectrum
        .with_group_id(s.get("group_id")?.node().u32()?)
        .with_label(s.get("label")?.node().str()?)
        .with_geometry(geometry)
        .with_attributes(s.get("attributes")?.node().attributes()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::attr;

    fn run() -> Run {
        let s = Spectrum::new(
            3,
            XScale::explicit(vec![1.0, 2.5, 4.0]).unwrap(),
            vec![1.0, 2.0],
            None,
        )
        .unwrap()
        .with_geometry(Some(DetectorGeometry::in_plane(0.3, 1.5, 20.0).unwrap()))
        .with_attribute(Attribute::i64(attr::ROW, 4).unwrap());
        let ds = DataSet::new("bank", XUnits::TofUs, "counts", vec![s], vec![]).unwrap();
        Run {
            instrument: "GPPD".into(),
            run_number: 8712,
            start_time: 1_020_300_000,
            datasets: vec![RunDataset {
                kind: DatasetKind::Histogram,
                data: ds,
            }],
        }
    }

    #[test]
    fn value_round_trip() {
        let r = run();
        assert_eq!(from_value(&to_value(&r)).unwrap(), r);
    }

    #[test]
    fn missing_entry_is_named() {
        let v = json!({"format": FORMAT});
        match from_value(&v).unwrap_err() {
            RetrieverError::Schema { path, .. } => assert_eq!(path, "entry"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nested_paths_in_errors() {
        let mut v = to_value(&run());
        v["entry"]["data"][0]["spectra"][0]["counts"] = json!("!!!");
        match from_value(&v).unwrap_err() {
            RetrieverError::Schema { path, .. } => {
                assert_eq!(path, "entry.data[0].spectra[0].counts")
            }
            e => panic!("unexpected {e}"),
        }
        let mut v = to_value(&run());
        v["entry"]["data"][0]["spectra"][0]["errors"] = json!(f32_b64(&[1.0]));
        match from_value(&v).unwrap_err() {
            RetrieverError::Schema { path, .. } => {
                assert_eq!(path, "entry.data[0].spectra[0].counts")
            }
            e => panic!("unexpected {e}"),
        }
        let mut v = to_value(&run());
        v["entry"]["run_number"] = json!(-1);
        assert!(
            matches!(from_value(&v), Err(RetrieverError::Schema { path, .. }) if path == "entry.run_number")
        );
    }
}

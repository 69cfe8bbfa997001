use std::cmp::Ordering;

use super::{OpError, Result};
use crate::dataset::{attr, AttrValue, DataSet, Spectrum};

/// Concatenates two datasets with matching x units, `b`'s spectra after
/// `a`'s, renumbering spectrum ids from zero.
///
/// A dataset without spectra merges with anything and adopts the other's
/// units, title and attributes.
pub fn merge(a: &DataSet, b: &DataSet) -> Result<DataSet> {
    let (units, title, attrs) = match (a.is_empty(), b.is_empty()) {
        (true, _) => (b.x_units(), b.title().to_string(), b.attributes().to_vec()),
        (false, true) => (a.x_units(), a.title().to_string(), a.attributes().to_vec()),
        (false, false) => {
            if a.x_units() != b.x_units() {
                return Err(OpError::UnitMismatch(a.x_units(), b.x_units()));
            }
            let title = if a.title() == b.title() {
                a.title().to_string()
            } else {
                format!("{} + {}", a.title(), b.title())
            };
            (a.x_units(), title, a.attributes().to_vec())
        }
    };
    let spectra = a
        .spectra()
        .iter()
        .chain(b.spectra())
        .enumerate()
        .map(|(i, s)| s.clone().with_id(i as u32))
        .collect();
    Ok(DataSet::new(
        title,
        units,
        a_or_b_y_units(a, b),
        spectra,
        attrs,
    )?)
}

fn a_or_b_y_units<'a>(a: &'a DataSet, b: &'a DataSet) -> &'a str {
    if a.is_empty() {
        b.y_units()
    } else {
        a.y_units()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    RunNumber,
    StartTime,
    Id,
}

/// Parsed spectrum-label template with `{run_number}`, `{start_time}` and
/// `{id}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTemplate {
    pieces: Vec<Piece>,
}

impl LabelTemplate {
    pub fn parse(template: &str) -> Result<LabelTemplate> {
        let mut pieces = Vec::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| OpError::BadTemplate(template.to_string()))?
                + open;
            let piece = match &rest[open + 1..close] {
                "run_number" => Piece::RunNumber,
                "start_time" => Piece::StartTime,
                "id" => Piece::Id,
                other => return Err(OpError::UnknownPlaceholder(other.to_string())),
            };
            pieces.push(piece);
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(LabelTemplate { pieces })
    }

    /// Expands the template for one spectrum; spectrum attributes take
    /// precedence over the dataset's.
    pub fn expand(&self, s: &Spectrum, ds: &DataSet) -> Result<String> {
        let lookup = |name: &str| -> Result<String> {
            s.attr(name)
                .or_else(|| ds.attr(name))
                .map(AttrValue::to_string)
                .ok_or_else(|| OpError::Unresolved {
                    id: s.id(),
                    key: name.to_string(),
                })
        };
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::RunNumber => out.push_str(&lookup(attr::RUN_NUMBER)?),
                Piece::StartTime => out.push_str(&lookup(attr::START_TIME)?),
                Piece::Id => out.push_str(&s.id().to_string()),
            }
        }
        Ok(out)
    }
}

/// Replaces every spectrum label with the expanded template.
pub fn relabel(ds: &DataSet, template: &str) -> Result<DataSet> {
    let template = LabelTemplate::parse(template)?;
    let spectra = ds
        .spectra()
        .iter()
        .map(|s| Ok(s.clone().with_label(template.expand(s, ds)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_spectra(spectra)?)
}

/// Spectra whose attribute `key` equals `value`. Numbers compare by value
/// whatever their integer/float tag.
pub fn extract_group(ds: &DataSet, key: &str, value: &AttrValue) -> Result<DataSet> {
    let spectra = ds
        .spectra()
        .iter()
        .filter(|s| s.attr(key).is_some_and(|v| v.matches(value)))
        .cloned()
        .collect();
    Ok(ds.with_spectra(spectra)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SortKey {
    Id,
    /// Bragg angle from the detector geometry.
    Theta,
    Attribute(String),
}

impl SortKey {
    pub fn parse(key: &str) -> SortKey {
        match key {
            "id" => SortKey::Id,
            "theta" => SortKey::Theta,
            other => SortKey::Attribute(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SortValue {
    Num(f64),
    Text(String),
}

impl SortValue {
    fn cmp(&self, other: &SortValue) -> Ordering {
        match (self, other) {
            (SortValue::Num(a), SortValue::Num(b)) => a.total_cmp(b),
            (SortValue::Text(a), SortValue::Text(b)) => a.cmp(b),
            (SortValue::Num(_), SortValue::Text(_)) => Ordering::Less,
            (SortValue::Text(_), SortValue::Num(_)) => Ordering::Greater,
        }
    }
}

fn resolve(s: &Spectrum, key: &SortKey) -> Result<SortValue> {
    let unresolved = |k: &str| OpError::Unresolved {
        id: s.id(),
        key: k.to_string(),
    };
    match key {
        SortKey::Id => Ok(SortValue::Num(s.id() as f64)),
        SortKey::Theta => s
            .geometry()
            .map(|g| SortValue::Num(g.theta()))
            .ok_or_else(|| unresolved("theta")),
        SortKey::Attribute(name) => match s.attr(name) {
            Some(AttrValue::Str(t)) => Ok(SortValue::Text(t.clone())),
            Some(v) => v
                .as_f64()
                .map(SortValue::Num)
                .ok_or_else(|| unresolved(name)),
            None if name == attr::LABEL && !s.label().is_empty() => {
                Ok(SortValue::Text(s.label().to_string()))
            }
            None => Err(unresolved(name)),
        },
    }
}

/// Stable sort by `key`; ties keep input order in both directions.
pub fn sort_spectra(ds: &DataSet, key: &SortKey, ascending: bool) -> Result<DataSet> {
    let mut keyed = ds
        .spectra()
        .iter()
        .map(|s| Ok((resolve(s, key)?, s)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|(a, _), (b, _)| {
        let o = a.cmp(b);
        if ascending {
            o
        } else {
            o.reverse()
        }
    });
    Ok(ds.with_spectra(keyed.into_iter().map(|(_, s)| s.clone()).collect())?)
}

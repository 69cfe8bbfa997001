use std::fmt::Write as _;
use std::path::Path;

use super::{Peak, PeakError, Result};

const HEADER: &str = "\
# tofbench peak list
# q = k_f - k_i in 1/Angstrom, beam along +z; q = 2*pi*UB*hkl
# row, col: fractional detector pixel; channel: fractional TOF bin (bin i centred on i)
# unindexed peaks show '*' for h k l
# orientation_index h k l row col channel intensity sigma qx qy qz
";

pub fn format_peaks(peaks: &[Peak]) -> String {
    let mut out = String::from(HEADER);
    for p in peaks {
        let hkl = match p.hkl {
            Some([h, k, l]) => format!("{h} {k} {l}"),
            None => "* * *".into(),
        };
        let _ = writeln!(
            out,
            "{} {hkl} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            p.orientation_index,
            p.row,
            p.col,
            p.channel,
            p.intensity,
            p.sigma_intensity,
            p.q[0],
            p.q[1],
            p.q[2]
        );
    }
    out
}

pub fn write_peaks(path: &Path, peaks: &[Peak]) -> Result<()> {
    std::fs::write(path, format_peaks(peaks))
        .map_err(|e| PeakError::Io(format!("{}: {e}", path.display())))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split_whitespace().collect()))
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| PeakError::Parse {
        line,
        reason: format!("bad number {tok:?}"),
    })
}

pub fn parse_peaks(text: &str) -> Result<Vec<Peak>> {
    data_lines(text)
        .map(|(line, t)| {
            if t.len() != 12 {
                return Err(PeakError::Parse {
                    line,
                    reason: format!("expected 12 columns, found {}", t.len()),
                });
            }
            let hkl = if t[1..4] == ["*", "*", "*"] {
                None
            } else {
                Some([num(t[1], line)?, num(t[2], line)?, num(t[3], line)?])
            };
            let f = |i: usize| num::<f64>(t[i], line);
            Ok(Peak {
                orientation_index: num(t[0], line)?,
                hkl,
                row: f(4)?,
                col: f(5)?,
                channel: f(6)?,
                intensity: f(7)?,
                sigma_intensity: f(8)?,
                q: [f(9)?, f(10)?, f(11)?],
            })
        })
        .collect()
}

pub fn read_peaks(path: &Path) -> Result<Vec<Peak>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PeakError::Io(format!("{}: {e}", path.display())))?;
    parse_peaks(&text)
}

/// Seeded assignments, one per line: `h k l qx qy qz` (sample frame, Å⁻¹).
pub fn read_assignments(text: &str) -> Result<Vec<([i32; 3], [f64; 3])>> {
    data_lines(text)
        .map(|(line, t)| {
            if t.len() != 6 {
                return Err(PeakError::Parse {
                    line,
                    reason: format!("expected 'h k l qx qy qz', found {} columns", t.len()),
                });
            }
            Ok((
                [num(t[0], line)?, num(t[1], line)?, num(t[2], line)?],
                [num(t[3], line)?, num(t[4], line)?, num(t[5], line)?],
            ))
        })
        .collect()
}

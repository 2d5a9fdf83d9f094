//! Correspondence exchange CSV: `x1,y1,x2,y2,score` with an optional `inlier` column.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::KeyPoint;
use crate::error::{Error, Result};
use crate::matching::{Match, MatchSet};

const HEADER: &str = "x1,y1,x2,y2,score";
const HEADER_WITH_INLIER: &str = "x1,y1,x2,y2,score,inlier";
const MIN_SIGNIFICANT: i32 = 6;

/// Matches read from an exchange file, plus the inlier column when present.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMatches {
    pub matches: MatchSet,
    pub inliers: Option<Vec<bool>>,
}

/// Shortest round-trip decimal, padded to at least six significant digits.
fn format_float(v: f64) -> String {
    let shortest = format!("{v}");
    if !v.is_finite() || shortest.contains('e') {
        return shortest;
    }
    let decimals = shortest.split_once('.').map_or(0, |(_, f)| f.len()) as i32;
    let magnitude = if v == 0.0 { 0 } else { v.abs().log10().floor() as i32 };
    let needed = (MIN_SIGNIFICANT - 1 - magnitude).max(decimals).max(0) as usize;
    format!("{v:.needed$}")
}

/// Writes one line per pair in pair order. With `inliers`, an `inlier` 0/1 column is added.
pub fn write_matches(mut out: impl Write, matches: &MatchSet, inliers: Option<&[bool]>) -> Result<()> {
    writeln!(out, "{}", if inliers.is_some() { HEADER_WITH_INLIER } else { HEADER })?;
    for (i, m) in matches.pairs.iter().enumerate() {
        let ((x1, y1), (x2, y2)) = matches.points(i);
        let mut line = [x1, y1, x2, y2, m.distance].map(format_float).join(",");
        if let Some(mask) = inliers {
            line.push_str(if mask[i] { ",1" } else { ",0" });
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses an exchange file. When `bounds` gives `((w_a, h_a), (w_b, h_b))`,
/// coordinates must satisfy `0 ≤ x < w` and `0 ≤ y < h` on their side.
pub fn read_matches(input: impl Read, bounds: Option<((usize, usize), (usize, usize))>) -> Result<ExternalMatches> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "missing header".into(),
            })
        }
    };
    let with_inlier = match header.trim().trim_start_matches('\u{feff}') {
        HEADER => false,
        HEADER_WITH_INLIER => true,
        other => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: format!("unexpected header `{other}`"),
            })
        }
    };
    let fields = if with_inlier { 6 } else { 5 };
    let (mut ka, mut kb, mut pairs, mut mask) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != fields {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: format!("expected {fields} fields, found {}", parts.len()),
            });
        }
        let mut v = [0.0f64; 5];
        for (slot, text) in v.iter_mut().zip(&parts) {
            *slot = text
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::MalformedRecord {
                    line: line_no,
                    reason: format!("`{text}` is not a finite number"),
                })?;
        }
        if with_inlier {
            mask.push(match parts[5] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::MalformedRecord {
                        line: line_no,
                        reason: format!("inlier flag `{other}` is not 0 or 1"),
                    })
                }
            });
        }
        if let Some(((wa, ha), (wb, hb))) = bounds {
            let inside = |x: f64, y: f64, w: usize, h: usize| x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64;
            if !inside(v[0], v[1], wa, ha) || !inside(v[2], v[3], wb, hb) {
                return Err(Error::CoordinateOutOfBounds { line: line_no });
            }
        }
        let i = pairs.len();
        ka.push(KeyPoint::at(v[0], v[1]));
        kb.push(KeyPoint::at(v[2], v[3]));
        pairs.push(Match {
            index_a: i,
            index_b: i,
            distance: v[4],
        });
    }
    Ok(ExternalMatches {
        matches: MatchSet::new(ka, kb, pairs)?,
        inliers: with_inlier.then_some(mask),
    })
}

pub fn import_external_matches(path: &Path, bounds: Option<((usize, usize), (usize, usize))>) -> Result<MatchSet> {
    let file = File::open(path).map_err(|e| Error::InputUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(read_matches(file, bounds)?.matches)
}

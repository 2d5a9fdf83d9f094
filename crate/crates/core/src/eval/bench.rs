//! Benchmark suites over (dataset, algorithm) cells and their report tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::run::{run_registration, Algorithm, RegistrationConfig, RegistrationInput, RegistrationReport, Status};
use super::synth::{generate_synthetic_pair, SceneParams};
use crate::error::{Error, Result};
use crate::io::read_raster;
use crate::matching::MatchSet;
use crate::raster::GeoRaster;

pub const REPORT_COLUMNS: [&str; 15] = [
    "algorithm",
    "dataset",
    "rmse_x",
    "rmse_y",
    "t_preprocess",
    "t_detect",
    "t_match",
    "t_estimate",
    "t_warp",
    "t_total",
    "n_kp_a",
    "n_kp_b",
    "n_matches",
    "n_inliers",
    "status",
];

const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        seed: u64,
        #[serde(default)]
        scene: SceneParams,
    },
    Files {
        source: PathBuf,
        reference: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCell {
    pub dataset: String,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSuite {
    pub datasets: BTreeMap<String, DatasetSpec>,
    pub cells: Vec<BenchmarkCell>,
    pub config: RegistrationConfig,
    /// Run the first cell once, untimed, before the measured runs.
    pub warmup: bool,
}

impl Default for BenchmarkSuite {
    fn default() -> Self {
        Self {
            datasets: BTreeMap::new(),
            cells: Vec::new(),
            config: RegistrationConfig::default(),
            warmup: true,
        }
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (v * k).round() / k
}

fn fmt_rmse(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| format!("{:.4}", round_to(v, 4)))
}

fn fmt_time(v: f64) -> String {
    format!("{:.3}", round_to(v, 3))
}

/// The report's fields in [`REPORT_COLUMNS`] order, as written to CSV.
pub fn csv_fields(r: &RegistrationReport) -> Vec<String> {
    let s = &r.stage_times;
    vec![
        r.algorithm.clone(),
        r.dataset.clone(),
        fmt_rmse(r.rmse_x),
        fmt_rmse(r.rmse_y),
        fmt_time(s.preprocess),
        fmt_time(s.detect_describe),
        fmt_time(s.match_),
        fmt_time(s.estimate),
        fmt_time(s.warp),
        fmt_time(r.total_time),
        r.n_kp_a.to_string(),
        r.n_kp_b.to_string(),
        r.n_matches.to_string(),
        r.n_inliers.to_string(),
        r.status.as_str().to_string(),
    ]
}

/// Compact `algorithm,dataset,rmse_x,rmse_y,t_total` summary line.
pub fn summary_row(r: &RegistrationReport) -> String {
    [
        r.algorithm.clone(),
        r.dataset.clone(),
        fmt_rmse(r.rmse_x),
        fmt_rmse(r.rmse_y),
        fmt_time(r.total_time),
    ]
    .join(",")
}

pub fn write_report_csv(out: impl Write, rows: &[RegistrationReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.write_record(csv_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    algorithm: &'a str,
    dataset: &'a str,
    rmse_x: Option<f64>,
    rmse_y: Option<f64>,
    t_preprocess: f64,
    t_detect: f64,
    t_match: f64,
    t_estimate: f64,
    t_warp: f64,
    t_total: f64,
    n_kp_a: usize,
    n_kp_b: usize,
    n_matches: usize,
    n_inliers: usize,
    status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
}

/// JSON array mirroring the CSV columns; NA becomes `null`. RMSE values keep
/// full precision, times are rounded to milliseconds.
pub fn write_report_json(out: impl Write, rows: &[RegistrationReport]) -> Result<()> {
    let json: Vec<JsonRow> = rows
        .iter()
        .map(|r| JsonRow {
            algorithm: &r.algorithm,
            dataset: &r.dataset,
            rmse_x: r.rmse_x,
            rmse_y: r.rmse_y,
            t_preprocess: round_to(r.stage_times.preprocess, 3),
            t_detect: round_to(r.stage_times.detect_describe, 3),
            t_match: round_to(r.stage_times.match_, 3),
            t_estimate: round_to(r.stage_times.estimate, 3),
            t_warp: round_to(r.stage_times.warp, 3),
            t_total: round_to(r.total_time, 3),
            n_kp_a: r.n_kp_a,
            n_kp_b: r.n_kp_b,
            n_matches: r.n_matches,
            n_inliers: r.n_inliers,
            status: r.status,
            failure: r.failure.as_deref(),
        })
        .collect();
    serde_json::to_writer_pretty(out, &json)?;
    Ok(())
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Source and reference side by side with a line per match: green for
/// inliers, red for outliers (all green without a mask).
pub fn render_match_overlay(
    source: &GeoRaster,
    reference: &GeoRaster,
    matches: &MatchSet,
    inliers: Option<&[bool]>,
) -> RgbImage {
    let (wa, wb) = (source.width() as u32, reference.width() as u32);
    let h = source.height().max(reference.height()) as u32;
    let mut img = RgbImage::new(wa + wb, h);
    let gray = |r: &GeoRaster| {
        if r.depth() == crate::raster::SampleDepth::U8 {
            r.to_u8()
        } else {
            crate::preprocess::normalize_u8(r)
                .map(|n| n.to_u8())
                .unwrap_or_else(|_| vec![0; r.len()])
        }
    };
    for (raster, x_off) in [(source, 0), (reference, wa)] {
        let px = gray(raster);
        for y in 0..raster.height() {
            for x in 0..raster.width() {
                let v = px[y * raster.width() + x];
                img.put_pixel(x as u32 + x_off, y as u32, Rgb([v, v, v]));
            }
        }
    }
    for i in 0..matches.len() {
        let ((xa, ya), (xb, yb)) = matches.points(i);
        let ok = inliers.is_none_or(|m| m[i]);
        let color = if ok { Rgb([0, 230, 0]) } else { Rgb([230, 0, 0]) };
        draw_line(
            &mut img,
            (xa.round() as i64, ya.round() as i64),
            ((xb.round() as i64) + wa as i64, yb.round() as i64),
            color,
        );
    }
    img
}

/// Renders [`render_match_overlay`] and saves it as PNG.
pub fn write_match_overlay(
    path: &Path,
    source: &GeoRaster,
    reference: &GeoRaster,
    matches: &MatchSet,
    inliers: Option<&[bool]>,
) -> Result<()> {
    render_match_overlay(source, reference, matches, inliers)
        .save(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn load_dataset(spec: &DatasetSpec, name: &str) -> Result<RegistrationInput> {
    match spec {
        DatasetSpec::Synthetic { seed, scene } => {
            let pair = generate_synthetic_pair(*seed, scene)?;
            Ok(RegistrationInput {
                dataset: name.to_string(),
                source: pair.source,
                reference: pair.reference,
                truth: Some(pair.truth),
            })
        }
        DatasetSpec::Files { source, reference } => Ok(RegistrationInput {
            dataset: name.to_string(),
            source: read_raster(source)?,
            reference: read_raster(reference)?,
            truth: None,
        }),
    }
}

fn failed_cell(cell: &BenchmarkCell, reason: String) -> RegistrationReport {
    let mut r = RegistrationReport::new(cell.algorithm.label(), &cell.dataset);
    r.failure = Some(reason);
    r
}

/// Runs every cell in order. Cell failures are recorded in the table and never
/// stop the suite. With `overlay_dir`, a match-overlay PNG is written per cell.
pub fn run_benchmark(suite: &BenchmarkSuite, overlay_dir: Option<&Path>) -> Result<Vec<RegistrationReport>> {
    for (i, cell) in suite.cells.iter().enumerate() {
        if !suite.datasets.contains_key(&cell.dataset) {
            return Err(Error::ConfigInvalid {
                field: format!("cells[{i}].dataset"),
                reason: format!("unknown dataset `{}`", cell.dataset),
            });
        }
    }
    suite.config.validate()?;

    let mut loaded: BTreeMap<&str, std::result::Result<RegistrationInput, String>> = BTreeMap::new();
    for cell in &suite.cells {
        loaded
            .entry(cell.dataset.as_str())
            .or_insert_with(|| load_dataset(&suite.datasets[&cell.dataset], &cell.dataset).map_err(|e| e.to_string()));
    }

    if suite.warmup {
        if let Some(cell) = suite.cells.first() {
            if let Ok(input) = &loaded[cell.dataset.as_str()] {
                let _ = run_registration(input, cell.algorithm, &suite.config);
            }
        }
    }

    let mut rows = Vec::with_capacity(suite.cells.len());
    for cell in &suite.cells {
        let input = match &loaded[cell.dataset.as_str()] {
            Ok(input) => input,
            Err(reason) => {
                rows.push(failed_cell(cell, reason.clone()));
                continue;
            }
        };
        let outcome = match run_registration(input, cell.algorithm, &suite.config) {
            Ok(o) => o,
            Err(e) => {
                rows.push(failed_cell(cell, e.to_string()));
                continue;
            }
        };
        if let (Some(dir), Some(matches)) = (overlay_dir, &outcome.matches) {
            let inliers = outcome.artifacts.as_ref().map(|a| a.inliers.as_slice());
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!(
                "{}_{}_matches.png",
                sanitize(&cell.dataset),
                cell.algorithm.id()
            ));
            write_match_overlay(&path, &input.source, &input.reference, matches, inliers)?;
        }
        rows.push(outcome.report);
    }
    Ok(rows)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::run::StageTimes;

    fn report() -> RegistrationReport {
        RegistrationReport {
            rmse_x: Some(0.6249),
            rmse_y: Some(0.5718),
            total_time: 3.809,
            stage_times: StageTimes {
                preprocess: 0.5,
                detect_describe: 2.0,
                match_: 1.0,
                estimate: 0.009,
                warp: 0.3,
            },
            n_kp_a: 10,
            n_kp_b: 12,
            n_matches: 8,
            n_inliers: 6,
            status: Status::Ok,
            ..RegistrationReport::new("SuperGlue", "OHRC-NAC-EQ")
        }
    }

    #[test]
    fn summary_row_layout() {
        assert_eq!(summary_row(&report()), "SuperGlue,OHRC-NAC-EQ,0.6249,0.5718,3.809");
    }

    #[test]
    fn csv_header_and_na() {
        let failed = RegistrationReport::new("SIFT", "x");
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[report(), failed]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_COLUMNS.join(","));
        assert_eq!(
            lines[1],
            "SuperGlue,OHRC-NAC-EQ,0.6249,0.5718,0.500,2.000,1.000,0.009,0.300,3.809,10,12,8,6,ok"
        );
        assert!(lines[2].starts_with("SIFT,x,NA,NA,"));
        assert!(lines[2].ends_with(",failed"));
    }

    #[test]
    fn json_uses_null_for_na() {
        let mut buf = Vec::new();
        write_report_json(&mut buf, &[RegistrationReport::new("SIFT", "x")]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert!(v[0]["rmse_x"].is_null());
        assert_eq!(v[0]["status"], "failed");
    }

    #[test]
    fn empty_suite_writes_header_only() {
        let rows = run_benchmark(&BenchmarkSuite::default(), None).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), REPORT_COLUMNS.join(","));
    }

    #[test]
    fn line_endpoints_are_drawn() {
        let mut img = RgbImage::new(10, 10);
        draw_line(&mut img, (1, 8), (7, 2), Rgb([1, 2, 3]));
        assert_eq!(img.get_pixel(1, 8), &Rgb([1, 2, 3]));
        assert_eq!(img.get_pixel(7, 2), &Rgb([1, 2, 3]));
    }
}

//! Single-pair registration with per-stage wall-clock timing.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rmse_xy, ControlPointSet};
use crate::error::{Error, Result};
use crate::features::{
    asift_detect, asift_match_features, detect_akaze, detect_rift2, detect_sift, import_external_matches, AkazeParams,
    AsiftParams, Features, KeyPoint, Rift2Params, SiftParams,
};
use crate::geowarp::{composite, integrate_coordinates, warp_onto, warp_perspective, CompositeMode, WarpResult};
use crate::matching::{
    default_ratio, dlt_homography, match_features, ransac_homography, Homography, MatchSet, RansacParams,
};
use crate::preprocess::{normalize_u8, PlanContext, PreprocessPlan};
use crate::raster::{GeoRaster, Kernel, SampleDepth};

type Pt = (f64, f64);

/// Stream of the held-out split generator, kept apart from RANSAC's streams.
const SPLIT_STREAM: u64 = 0x5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sift,
    Asift,
    Akaze,
    Rift2,
    External,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Sift,
        Algorithm::Asift,
        Algorithm::Akaze,
        Algorithm::Rift2,
        Algorithm::External,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Sift => "sift",
            Algorithm::Asift => "asift",
            Algorithm::Akaze => "akaze",
            Algorithm::Rift2 => "rift2",
            Algorithm::External => "external",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Sift => "SIFT",
            Algorithm::Asift => "ASIFT",
            Algorithm::Akaze => "AKAZE",
            Algorithm::Rift2 => "RIFT2",
            Algorithm::External => "External",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Everything the pipeline needs besides the images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub preprocess_source: PreprocessPlan,
    pub preprocess_reference: PreprocessPlan,
    pub sift: SiftParams,
    pub asift: AsiftParams,
    pub akaze: AkazeParams,
    pub rift2: Rift2Params,
    /// Ratio-test threshold; `None` uses the descriptor family's default.
    pub ratio: Option<f64>,
    pub cross_check: bool,
    pub ransac: RansacParams,
    /// Correspondence file for [`Algorithm::External`].
    pub external_matches: Option<PathBuf>,
    pub interpolation: Kernel,
    /// Crop the warped product to the reference extent instead of padding.
    pub crop_to_reference: bool,
    pub composite: CompositeMode,
    pub restore_source_crs: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            preprocess_source: PreprocessPlan::default(),
            preprocess_reference: PreprocessPlan::default(),
            sift: SiftParams::default(),
            asift: AsiftParams::default(),
            akaze: AkazeParams::default(),
            rift2: Rift2Params::default(),
            ratio: None,
            cross_check: false,
            ransac: RansacParams::default(),
            external_matches: None,
            interpolation: Kernel::Bilinear,
            crop_to_reference: false,
            composite: CompositeMode::Overlay,
            restore_source_crs: false,
        }
    }
}

fn config_err(field: &str, reason: &str) -> Error {
    Error::ConfigInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_ratio(field: &str, r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(config_err(field, "out of range (0, 1]"))
    }
}

impl RegistrationConfig {
    /// Reports the first offending field as [`Error::ConfigInvalid`].
    pub fn validate(&self) -> Result<()> {
        self.preprocess_source
            .validate()
            .map_err(|e| e.into_config("preprocess_source"))?;
        self.preprocess_reference
            .validate()
            .map_err(|e| e.into_config("preprocess_reference"))?;
        self.sift.validate().map_err(|e| e.into_config("sift"))?;
        self.asift.validate().map_err(|e| e.into_config("asift"))?;
        self.akaze.validate().map_err(|e| e.into_config("akaze"))?;
        self.rift2.validate().map_err(|e| e.into_config("rift2"))?;
        if let Some(r) = self.ratio {
            check_ratio("ratio", r)?;
        }
        self.ransac.validate().map_err(|e| e.into_config("ransac"))
    }
}

/// Images to register. `source` is warped onto `reference`.
#[derive(Debug, Clone)]
pub struct RegistrationInput {
    pub dataset: String,
    pub source: GeoRaster,
    pub reference: GeoRaster,
    /// Known `(source, reference)` correspondences; when absent, accuracy is
    /// scored on a held-out half of the RANSAC inliers.
    pub truth: Option<Vec<(Pt, Pt)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
        }
    }
}

/// Wall-clock seconds per stage, at millisecond resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub preprocess: f64,
    pub detect_describe: f64,
    #[serde(rename = "match")]
    pub match_: f64,
    pub estimate: f64,
    pub warp: f64,
}

impl StageTimes {
    pub fn sum(&self) -> f64 {
        self.preprocess + self.detect_describe + self.match_ + self.estimate + self.warp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub algorithm: String,
    pub dataset: String,
    pub rmse_x: Option<f64>,
    pub rmse_y: Option<f64>,
    pub stage_times: StageTimes,
    pub total_time: f64,
    pub n_kp_a: usize,
    pub n_kp_b: usize,
    pub n_matches: usize,
    pub n_inliers: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RegistrationReport {
    pub fn new(algorithm: impl Into<String>, dataset: impl Into<String>) -> Self {
        Self {
            algorithm: algorithm.into(),
            dataset: dataset.into(),
            rmse_x: None,
            rmse_y: None,
            stage_times: StageTimes::default(),
            total_time: 0.0,
            n_kp_a: 0,
            n_kp_b: 0,
            n_matches: 0,
            n_inliers: 0,
            status: Status::Failed,
            failure: None,
        }
    }

    /// Copy with all timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            stage_times: StageTimes::default(),
            total_time: 0.0,
            ..self.clone()
        }
    }
}

/// Intermediate products of a successful registration.
#[derive(Debug, Clone)]
pub struct RegistrationArtifacts {
    /// Source pixel → reference pixel, in original image coordinates.
    pub homography: Homography,
    pub matches: MatchSet,
    pub inliers: Vec<bool>,
    pub warped: WarpResult,
    /// Composite and its top-left position in the reference frame.
    pub composite: Option<(GeoRaster, (i64, i64))>,
    /// Warped product with integrated georeferencing, when the reference has metadata.
    pub integrated: Option<GeoRaster>,
    pub control_points: ControlPointSet,
}

#[derive(Debug, Clone)]
pub struct RegistrationOutcome {
    pub report: RegistrationReport,
    /// Matches found before any failure, for overlays of failed runs.
    pub matches: Option<MatchSet>,
    pub artifacts: Option<RegistrationArtifacts>,
}

fn seconds_ms(t: Instant) -> f64 {
    (t.elapsed().as_secs_f64() * 1000.0).round() / 1000.0
}

fn detector_input(img: &GeoRaster) -> Result<GeoRaster> {
    let single = if img.band_count() > 1 {
        img.extract_band(0)?
    } else {
        img.clone()
    };
    if single.depth() == SampleDepth::U8 {
        Ok(single)
    } else {
        normalize_u8(&single)
    }
}

/// Maps keypoints detected on a resampled image back to original pixel coordinates.
fn rescale(kps: &mut [KeyPoint], from: &GeoRaster, to: &GeoRaster) {
    if from.width() == to.width() && from.height() == to.height() {
        return;
    }
    let sx = to.width() as f64 / from.width() as f64;
    let sy = to.height() as f64 / from.height() as f64;
    for kp in kps {
        kp.x = (kp.x + 0.5) * sx - 0.5;
        kp.y = (kp.y + 0.5) * sy - 0.5;
        kp.scale *= sx.max(sy);
    }
}

fn asift_params(config: &RegistrationConfig) -> AsiftParams {
    let mut params = config.asift;
    if let Some(r) = config.ratio {
        params.ratio = r;
    }
    params.cross_check |= config.cross_check;
    params
}

fn detect(img: &GeoRaster, algorithm: Algorithm, config: &RegistrationConfig) -> Result<Features> {
    let (keypoints, descriptors) = match algorithm {
        Algorithm::Sift => detect_sift(img, &config.sift)?,
        Algorithm::Akaze => detect_akaze(img, &config.akaze)?,
        Algorithm::Rift2 => detect_rift2(img, &config.rift2)?,
        Algorithm::Asift => return Ok(asift_detect(img, &asift_params(config))?.into_features()),
        Algorithm::External => {
            return Err(Error::ConfigInvalid {
                field: "algorithm".into(),
                reason: "external correspondences have no detector".into(),
            })
        }
    };
    Ok(Features { keypoints, descriptors })
}

/// Keypoints and descriptors of one image with the named detector, in the
/// image's own pixel coordinates.
pub fn detect_features(img: &GeoRaster, algorithm: Algorithm, config: &RegistrationConfig) -> Result<Features> {
    config.validate()?;
    let input = detector_input(img)?;
    detect(&input, algorithm, config)
}

/// Preprocesses both images, detects and matches, without geometric fitting.
pub fn detect_and_match(
    source: &GeoRaster,
    reference: &GeoRaster,
    algorithm: Algorithm,
    config: &RegistrationConfig,
) -> Result<MatchSet> {
    config.validate()?;
    let (pre_src, pre_ref) = preprocess_pair(source, reference, config)?;
    match_pair(source, reference, &pre_src, &pre_ref, algorithm, config, None)
}

fn preprocess_pair(
    src: &GeoRaster,
    reference: &GeoRaster,
    config: &RegistrationConfig,
) -> Result<(GeoRaster, GeoRaster)> {
    let mut ctx = PlanContext::default();
    ctx.references.insert("source".into(), src.clone());
    ctx.references.insert("reference".into(), reference.clone());
    let a = detector_input(&config.preprocess_source.apply(src, &ctx)?)?;
    let b = detector_input(&config.preprocess_reference.apply(reference, &ctx)?)?;
    Ok((a, b))
}

/// Detection and matching on preprocessed images, keypoints mapped back to
/// the original frames. Fills counts and timings into `report` when given.
fn match_pair(
    src: &GeoRaster,
    reference: &GeoRaster,
    pre_src: &GeoRaster,
    pre_ref: &GeoRaster,
    algorithm: Algorithm,
    config: &RegistrationConfig,
    report: Option<&mut RegistrationReport>,
) -> Result<MatchSet> {
    let clock = Instant::now();
    let ((n_a, n_b), detect_time, matches, match_time) = if algorithm == Algorithm::Asift {
        let params = asift_params(config);
        let fa = asift_detect(pre_src, &params)?;
        let fb = asift_detect(pre_ref, &params)?;
        let counts = (fa.keypoint_count(), fb.keypoint_count());
        let detect_time = seconds_ms(clock);
        let clock = Instant::now();
        let mut m = asift_match_features(fa, fb, &params)?;
        rescale(&mut m.keypoints_a, pre_src, src);
        rescale(&mut m.keypoints_b, pre_ref, reference);
        (counts, detect_time, m, seconds_ms(clock))
    } else {
        let mut fa = detect(pre_src, algorithm, config)?;
        let mut fb = detect(pre_ref, algorithm, config)?;
        rescale(&mut fa.keypoints, pre_src, src);
        rescale(&mut fb.keypoints, pre_ref, reference);
        let counts = (fa.keypoints.len(), fb.keypoints.len());
        let detect_time = seconds_ms(clock);
        let clock = Instant::now();
        let ratio = config.ratio.unwrap_or_else(|| default_ratio(fa.descriptors.kind));
        let m = match_features(&fa, &fb, ratio, config.cross_check)?;
        (counts, detect_time, m, seconds_ms(clock))
    };
    if let Some(r) = report {
        r.n_kp_a = n_a;
        r.n_kp_b = n_b;
        r.stage_times.detect_describe = detect_time;
        r.stage_times.match_ = match_time;
    }
    Ok(matches)
}

/// Scores `h` on a seeded half of the inliers after refitting on the other half.
fn held_out_points(pairs: &[(Pt, Pt)], inliers: &[bool], seed: u64) -> Result<ControlPointSet> {
    let mut idx: Vec<usize> = (0..pairs.len()).filter(|&i| inliers[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let half = idx.len().div_ceil(2);
    let (fit, eval) = idx.split_at(half);
    if fit.len() < 4 || eval.is_empty() {
        return Err(Error::InsufficientPoints {
            needed: 5,
            got: idx.len(),
        });
    }
    let fit_pairs: Vec<(Pt, Pt)> = fit.iter().map(|&i| pairs[i]).collect();
    let h = dlt_homography(&fit_pairs)?;
    Ok(ControlPointSet::new(
        eval.iter()
            .map(|&i| (pairs[i].1, h.apply(pairs[i].0 .0, pairs[i].0 .1)))
            .collect(),
    ))
}

struct Tracker {
    report: RegistrationReport,
    matches: Option<MatchSet>,
}

/// Runs preprocess → detect → match → RANSAC → warp → integrate. Stage
/// failures yield a `failed` report; only configuration and input errors are
/// returned as `Err`.
pub fn run_registration(
    input: &RegistrationInput,
    algorithm: Algorithm,
    config: &RegistrationConfig,
) -> Result<RegistrationOutcome> {
    config.validate()?;
    let external = match (algorithm, &config.external_matches) {
        (Algorithm::External, None) => return Err(config_err("external_matches", "required for algorithm external")),
        (Algorithm::External, Some(p)) => {
            std::fs::metadata(p).map_err(|e| Error::InputUnreadable {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            Some(p.clone())
        }
        _ => None,
    };

    let start = Instant::now();
    let mut t = Tracker {
        report: RegistrationReport::new(algorithm.label(), &input.dataset),
        matches: None,
    };
    let result = pipeline(input, algorithm, config, external, &mut t);
    let mut report = t.report;
    report.total_time = seconds_ms(start).max(report.stage_times.sum());
    let artifacts = match result {
        Ok(a) => {
            report.status = Status::Ok;
            Some(a)
        }
        Err(e @ (Error::InputUnreadable { .. } | Error::ConfigInvalid { .. })) => return Err(e),
        Err(e) => {
            report.status = Status::Failed;
            report.rmse_x = None;
            report.rmse_y = None;
            report.failure = Some(e.to_string());
            None
        }
    };
    Ok(RegistrationOutcome {
        report,
        matches: t.matches,
        artifacts,
    })
}

fn pipeline(
    input: &RegistrationInput,
    algorithm: Algorithm,
    config: &RegistrationConfig,
    external: Option<PathBuf>,
    t: &mut Tracker,
) -> Result<RegistrationArtifacts> {
    let (src, reference) = (&input.source, &input.reference);

    let clock = Instant::now();
    let (pre_src, pre_ref) = if algorithm == Algorithm::External {
        (src.clone(), reference.clone())
    } else {
        preprocess_pair(src, reference, config)?
    };
    t.report.stage_times.preprocess = seconds_ms(clock);

    let matches = if algorithm == Algorithm::External {
        let clock = Instant::now();
        let path = external.expect("checked by caller");
        let bounds = ((src.width(), src.height()), (reference.width(), reference.height()));
        let m = import_external_matches(&path, Some(bounds))?;
        t.report.stage_times.match_ = seconds_ms(clock);
        t.report.n_kp_a = m.keypoints_a.len();
        t.report.n_kp_b = m.keypoints_b.len();
        m
    } else {
        match_pair(
            src,
            reference,
            &pre_src,
            &pre_ref,
            algorithm,
            config,
            Some(&mut t.report),
        )?
    };
    t.report.n_matches = matches.len();
    t.matches = Some(matches.clone());

    let clock = Instant::now();
    let fit = ransac_homography(&matches, &config.ransac)?;
    t.report.n_inliers = fit.inlier_count();
    t.report.stage_times.estimate = seconds_ms(clock);

    let clock = Instant::now();
    let warped = if config.crop_to_reference {
        warp_onto(
            src,
            &fit.homography,
            config.interpolation,
            (0, 0),
            reference.width(),
            reference.height(),
        )?
    } else {
        warp_perspective(src, &fit.homography, config.interpolation)?
    };
    let integrated = match reference.meta() {
        Some(meta) => Some(integrate_coordinates(&warped, meta, config.restore_source_crs)?),
        None => None,
    };
    t.report.stage_times.warp = seconds_ms(clock);

    let control_points = match &input.truth {
        Some(truth) => ControlPointSet::new(
            truth
                .iter()
                .map(|&(s, r)| (r, fit.homography.apply(s.0, s.1)))
                .collect(),
        ),
        None => held_out_points(&matches.point_pairs(), &fit.inliers, config.ransac.seed)?,
    };
    let (rx, ry) = rmse_xy(&control_points)?;
    t.report.rmse_x = Some(rx);
    t.report.rmse_y = Some(ry);

    let composite = (warped.image.band_count() == reference.band_count())
        .then(|| composite(&warped, reference, config.composite))
        .transpose()?;
    Ok(RegistrationArtifacts {
        homography: fit.homography,
        matches,
        inliers: fit.inliers,
        warped,
        composite,
        integrated,
        control_points,
    })
}

//! JSON run configuration for `register`.

use std::path::{Path, PathBuf};

use lunareg::eval::{Algorithm, RegistrationConfig};
use lunareg::features::{AkazeParams, AsiftParams, Rift2Params, SiftParams};
use lunareg::geowarp::CompositeMode;
use lunareg::matching::RansacParams;
use lunareg::preprocess::PreprocessPlan;
use lunareg::{Error, Kernel, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacSection {
    pub threshold_px: f64,
    pub max_iters: usize,
    pub confidence: f64,
}

impl Default for RansacSection {
    fn default() -> Self {
        let d = RansacParams::default();
        Self {
            threshold_px: d.threshold_px,
            max_iters: d.max_iters,
            confidence: d.confidence,
        }
    }
}

/// Which artifacts `register` writes besides the homography.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub warped: bool,
    pub composite: bool,
    pub overlay: bool,
    pub report: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            warped: true,
            composite: true,
            overlay: true,
            report: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: PathBuf,
    pub reference: PathBuf,
    /// Overrides the `<image>.geo.json` next to the source.
    pub source_sidecar: Option<PathBuf>,
    pub reference_sidecar: Option<PathBuf>,
    pub dataset: String,
    pub algorithm: Algorithm,
    pub preprocess_source: PreprocessPlan,
    pub preprocess_reference: PreprocessPlan,
    pub sift: SiftParams,
    pub asift: AsiftParams,
    pub akaze: AkazeParams,
    pub rift2: Rift2Params,
    /// Ratio-test threshold; `null` uses 0.75 for float and 0.8 for binary descriptors.
    pub ratio: Option<f64>,
    pub cross_check: bool,
    pub ransac: RansacSection,
    /// Seeds RANSAC sampling and the held-out evaluation split.
    pub seed: u64,
    /// Correspondence CSV for `algorithm: external`.
    pub external_matches: Option<PathBuf>,
    /// Truth correspondence CSV; when set, RMSE is scored on it.
    pub truth: Option<PathBuf>,
    pub interpolation: Kernel,
    pub crop_to_reference: bool,
    pub composite: CompositeMode,
    pub restore_source_crs: bool,
    pub out_dir: PathBuf,
    pub emit: EmitFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        let r = RegistrationConfig::default();
        Self {
            source: PathBuf::new(),
            reference: PathBuf::new(),
            source_sidecar: None,
            reference_sidecar: None,
            dataset: "pair".into(),
            algorithm: Algorithm::Sift,
            preprocess_source: r.preprocess_source,
            preprocess_reference: r.preprocess_reference,
            sift: r.sift,
            asift: r.asift,
            akaze: r.akaze,
            rift2: r.rift2,
            ratio: r.ratio,
            cross_check: r.cross_check,
            ransac: RansacSection::default(),
            seed: r.ransac.seed,
            external_matches: None,
            truth: None,
            interpolation: r.interpolation,
            crop_to_reference: r.crop_to_reference,
            composite: r.composite,
            restore_source_crs: r.restore_source_crs,
            out_dir: PathBuf::from("out"),
            emit: EmitFlags::default(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn registration(&self) -> RegistrationConfig {
        RegistrationConfig {
            preprocess_source: self.preprocess_source.clone(),
            preprocess_reference: self.preprocess_reference.clone(),
            sift: self.sift,
            asift: self.asift,
            akaze: self.akaze,
            rift2: self.rift2,
            ratio: self.ratio,
            cross_check: self.cross_check,
            ransac: RansacParams {
                threshold_px: self.ransac.threshold_px,
                max_iters: self.ransac.max_iters,
                confidence: self.ransac.confidence,
                seed: self.seed,
            },
            external_matches: self.external_matches.clone(),
            interpolation: self.interpolation,
            crop_to_reference: self.crop_to_reference,
            composite: self.composite,
            restore_source_crs: self.restore_source_crs,
        }
    }

    /// Checks fields in declaration order and reports the first failure.
    pub fn validate(&self) -> Result<()> {
        if self.source.as_os_str().is_empty() {
            return Err(invalid("source", "path is empty"));
        }
        if self.reference.as_os_str().is_empty() {
            return Err(invalid("reference", "path is empty"));
        }
        if self.dataset.is_empty() {
            return Err(invalid("dataset", "must not be empty"));
        }
        if self.algorithm == Algorithm::External && self.external_matches.is_none() {
            return Err(invalid("external_matches", "required for algorithm external"));
        }
        self.registration().validate()?;
        if self.out_dir.as_os_str().is_empty() {
            return Err(invalid("out_dir", "path is empty"));
        }
        Ok(())
    }
}

/// Parses and validates a configuration document, resolving relative paths
/// against `base` when given.
pub fn parse_config_str(text: &str, base: Option<&Path>) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." { "config".to_string() } else { path };
        invalid(&field, inner.to_string())
    })?;
    if let Some(base) = base {
        for p in [
            Some(&mut config.source),
            Some(&mut config.reference),
            config.source_sidecar.as_mut(),
            config.reference_sidecar.as_mut(),
            config.external_matches.as_mut(),
            config.truth.as_mut(),
            Some(&mut config.out_dir),
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Reads a configuration file; relative paths inside it are taken relative to
/// the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InputUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_config_str(&text, path.parent())
}

/// Every default, as the JSON a fully spelled-out config would contain.
pub fn defaults_json() -> String {
    serde_json::to_string_pretty(&RunConfig::default()).expect("config serializes")
}

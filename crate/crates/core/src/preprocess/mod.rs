//! Radiometric and geometric conditioning applied before feature detection.
//!
//! Individual operations are exposed as free functions; [`PreprocessPlan`]
//! chains them in a JSON-serializable, ordered list of steps.

mod clahe;
mod intensity;
mod morphology;
mod pca;
mod resample;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use clahe::{clahe, equalization_lut, DEFAULT_CLIP_LIMIT, DEFAULT_TILES};
pub use intensity::{
    band_entropy, band_variance, histogram_match, histogram_match_lut, histogram_u8, invert, log_transform,
    normalize_u8, select_reference_band, shadow_normalize, BandStrategy,
};
pub use morphology::{dilate, StructuringElement};
pub use pca::{pca_stack, PcaResult};
pub use resample::resample;

use crate::error::{invalid_param, Error, Result};
use crate::raster::{GeoRaster, Kernel};

fn default_tiles() -> usize {
    DEFAULT_TILES
}
fn default_clip() -> f64 {
    DEFAULT_CLIP_LIMIT
}
fn default_radius() -> usize {
    1
}
fn default_keep() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreprocessStep {
    Resample {
        gsd: f64,
        #[serde(default)]
        kernel: Kernel,
    },
    NormalizeU8 {},
    Clahe {
        #[serde(default = "default_tiles")]
        tiles_x: usize,
        #[serde(default = "default_tiles")]
        tiles_y: usize,
        #[serde(default = "default_clip")]
        clip_limit: f64,
    },
    Invert {},
    Dilate {
        #[serde(default = "default_radius")]
        radius: usize,
        #[serde(default)]
        shape: StructuringElement,
    },
    /// PCA over earlier intermediate results, named by their step `op`
    /// (or `input` for the plan's input).
    PcaStack {
        inputs: Vec<String>,
        #[serde(default = "default_keep")]
        keep_components: usize,
    },
    HistogramMatch {
        reference_id: String,
    },
    ShadowNormalize {
        shadow_percentile: f64,
        target_gain_cap: f64,
    },
    LogTransform {},
    SelectBand {
        strategy: BandStrategy,
    },
}

impl PreprocessStep {
    pub fn name(&self) -> &'static str {
        match self {
            PreprocessStep::Resample { .. } => "resample",
            PreprocessStep::NormalizeU8 {} => "normalize_u8",
            PreprocessStep::Clahe { .. } => "clahe",
            PreprocessStep::Invert {} => "invert",
            PreprocessStep::Dilate { .. } => "dilate",
            PreprocessStep::PcaStack { .. } => "pca_stack",
            PreprocessStep::HistogramMatch { .. } => "histogram_match",
            PreprocessStep::ShadowNormalize { .. } => "shadow_normalize",
            PreprocessStep::LogTransform {} => "log_transform",
            PreprocessStep::SelectBand { .. } => "select_band",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            PreprocessStep::Resample { gsd, .. } if !(gsd > 0.0) => Err(invalid_param("gsd", "must be positive")),
            PreprocessStep::Clahe { tiles_x, tiles_y, .. } if tiles_x == 0 || tiles_y == 0 => {
                Err(invalid_param("tiles", "must be at least 1"))
            }
            PreprocessStep::Clahe { clip_limit, .. } if !(clip_limit >= 1.0) => {
                Err(invalid_param("clip_limit", "must be at least 1.0"))
            }
            PreprocessStep::Dilate { radius: 0, .. } => Err(invalid_param("radius", "must be at least 1")),
            PreprocessStep::PcaStack { keep_components: 0, .. } => {
                Err(invalid_param("keep_components", "must be at least 1"))
            }
            PreprocessStep::ShadowNormalize { shadow_percentile, .. }
                if !(shadow_percentile > 0.0 && shadow_percentile < 50.0) =>
            {
                Err(invalid_param("shadow_percentile", "must lie in (0, 50)"))
            }
            PreprocessStep::ShadowNormalize { target_gain_cap, .. } if !(target_gain_cap >= 1.0) => {
                Err(invalid_param("target_gain_cap", "must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Inputs a plan may need besides the image itself.
#[derive(Debug, Clone, Default)]
pub struct PlanContext {
    /// Rasters addressable by `HistogramMatch::reference_id`.
    pub references: HashMap<String, GeoRaster>,
    /// Ground sampling distance for plain images without metadata.
    pub source_gsd: Option<f64>,
}

/// Ordered preprocessing steps; serializes as a JSON array.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreprocessPlan {
    pub steps: Vec<PreprocessStep>,
}

impl PreprocessPlan {
    pub fn new(steps: Vec<PreprocessStep>) -> Result<Self> {
        let plan = Self { steps };
        plan.validate()?;
        Ok(plan)
    }

    /// Normalize, CLAHE, invert, dilate, then PCA over those four variants.
    pub fn optical_default() -> Self {
        Self {
            steps: vec![
                PreprocessStep::NormalizeU8 {},
                PreprocessStep::Clahe {
                    tiles_x: DEFAULT_TILES,
                    tiles_y: DEFAULT_TILES,
                    clip_limit: DEFAULT_CLIP_LIMIT,
                },
                PreprocessStep::Invert {},
                PreprocessStep::Dilate {
                    radius: 1,
                    shape: StructuringElement::Square,
                },
                PreprocessStep::PcaStack {
                    inputs: ["normalize_u8", "clahe", "invert", "dilate"].map(String::from).to_vec(),
                    keep_components: 1,
                },
            ],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.steps.iter().try_for_each(PreprocessStep::validate)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn apply(&self, input: &GeoRaster, ctx: &PlanContext) -> Result<GeoRaster> {
        self.validate()?;
        let mut named: HashMap<&str, GeoRaster> = HashMap::new();
        named.insert("input", input.clone());
        let mut current = input.clone();
        for step in &self.steps {
            current = match step {
                PreprocessStep::Resample { gsd, kernel } => resample(&current, *gsd, *kernel, ctx.source_gsd)?,
                PreprocessStep::NormalizeU8 {} => normalize_u8(&current)?,
                PreprocessStep::Clahe {
                    tiles_x,
                    tiles_y,
                    clip_limit,
                } => clahe(&current, *tiles_x, *tiles_y, *clip_limit)?,
                PreprocessStep::Invert {} => invert(&current)?,
                PreprocessStep::Dilate { radius, shape } => dilate(&current, *radius, *shape)?,
                PreprocessStep::PcaStack {
                    inputs,
                    keep_components,
                } => {
                    let stack = inputs
                        .iter()
                        .map(|name| {
                            named
                                .get(name.as_str())
                                .map(|r| r.extract_band(0))
                                .unwrap_or_else(|| Err(invalid_param("inputs", format!("no earlier step `{name}`"))))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let pca = pca_stack(&stack, *keep_components)?;
                    let bands = pca.components.iter().map(|c| c.band(0).to_vec()).collect();
                    pca.components[0].with_bands(pca.components[0].depth(), bands)?
                }
                PreprocessStep::HistogramMatch { reference_id } => {
                    let reference = ctx.references.get(reference_id).ok_or_else(|| {
                        invalid_param("reference_id", format!("no reference raster `{reference_id}`"))
                    })?;
                    histogram_match(&current, reference)?
                }
                PreprocessStep::ShadowNormalize {
                    shadow_percentile,
                    target_gain_cap,
                } => shadow_normalize(&current, *shadow_percentile, *target_gain_cap)?,
                PreprocessStep::LogTransform {} => log_transform(&current)?,
                PreprocessStep::SelectBand { strategy } => {
                    let band = select_reference_band(&current, *strategy)?;
                    current.extract_band(band)?
                }
            };
            named.insert(step.name(), current.clone());
        }
        if current.is_empty() {
            return Err(Error::EmptyValidRegion);
        }
        Ok(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::SampleDepth;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plan_json_round_trip() {
        let plan = PreprocessPlan::optical_default();
        let text = serde_json::to_string(&plan).unwrap();
        assert!(text.starts_with('['));
        assert_eq!(PreprocessPlan::from_json(&text).unwrap(), plan);
        let parsed = PreprocessPlan::from_json(r#"[{"op":"clahe"},{"op":"dilate","shape":"disk"}]"#).unwrap();
        assert_eq!(
            parsed.steps[0],
            PreprocessStep::Clahe {
                tiles_x: 8,
                tiles_y: 8,
                clip_limit: 2.0
            }
        );
    }

    #[test]
    fn plan_rejects_bad_parameters() {
        assert!(PreprocessPlan::from_json(r#"[{"op":"clahe","clip_limit":0.5}]"#).is_err());
        assert!(
            PreprocessPlan::from_json(r#"[{"op":"shadow_normalize","shadow_percentile":60,"target_gain_cap":2}]"#)
                .is_err()
        );
        assert!(PreprocessPlan::from_json(r#"[{"op":"sharpen"}]"#).is_err());
    }

    #[test]
    fn optical_default_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f32> = (0..64 * 64).map(|_| rng.random_range(100..4000) as f32).collect();
        let r = GeoRaster::new(64, 64, SampleDepth::U16, vec![data]).unwrap();
        let out = PreprocessPlan::optical_default()
            .apply(&r, &PlanContext::default())
            .unwrap();
        assert_eq!(out.depth(), SampleDepth::U8);
        assert_eq!(out.band_count(), 1);
        assert_eq!((out.width(), out.height()), (64, 64));
    }

    #[test]
    fn histogram_match_needs_reference() {
        let r = GeoRaster::filled(8, 8, SampleDepth::U8, 3.0).unwrap();
        let plan = PreprocessPlan::new(vec![PreprocessStep::HistogramMatch {
            reference_id: "wac".into(),
        }])
        .unwrap();
        assert!(plan.apply(&r, &PlanContext::default()).is_err());
        let mut ctx = PlanContext::default();
        ctx.references
            .insert("wac".into(), GeoRaster::filled(4, 4, SampleDepth::U8, 99.0).unwrap());
        assert!(plan.apply(&r, &ctx).unwrap().band(0).iter().all(|v| *v == 99.0));
    }

    #[test]
    fn eight_bit_steps_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let steps = [
            PreprocessStep::Clahe {
                tiles_x: 3,
                tiles_y: 2,
                clip_limit: 1.5,
            },
            PreprocessStep::Invert {},
            PreprocessStep::Dilate {
                radius: 2,
                shape: StructuringElement::Disk,
            },
            PreprocessStep::ShadowNormalize {
                shadow_percentile: 20.0,
                target_gain_cap: 3.0,
            },
            PreprocessStep::LogTransform {},
        ];
        for _ in 0..30 {
            let (w, h) = (rng.random_range(3..30), rng.random_range(3..30));
            let data: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..=255)).collect();
            let r = GeoRaster::from_u8(w, h, &data).unwrap();
            for step in &steps {
                let plan = PreprocessPlan::new(vec![step.clone()]).unwrap();
                let a = plan.apply(&r, &PlanContext::default()).unwrap();
                assert!(a.band(0).iter().all(|v| (0.0..=255.0).contains(v) && v.fract() == 0.0));
                assert_eq!(a, plan.apply(&r, &PlanContext::default()).unwrap());
            }
        }
    }
}

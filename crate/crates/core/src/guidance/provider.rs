//! Pluggable sources of guidance.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::FilterType;

use crate::bridge::read_feature_dump;
use crate::error::{Error, Result};
use crate::fields::{blur, Border};
use crate::geometry::Vec2;

use super::features::{FeatureField, FeatureSource};

/// Side length of fields produced by the silhouette provider.
pub const SILHOUETTE_SIDE: usize = 64;

/// Context handed to a provider on each refresh.
#[derive(Clone, Copy, Debug)]
pub struct GuidanceRequest {
    pub iteration: usize,
}

/// What a provider emits.
#[derive(Clone, Debug, PartialEq)]
pub enum GuidanceSample {
    /// A feature field; tensors and permission are derived from it.
    Features(FeatureField),
    /// A prescribed coherent (fast) axis and coherence everywhere, with
    /// full permission.
    Direct { coherent_axis: Vec2, coherence: f64 },
}

pub trait GuidanceProvider: Send {
    fn name(&self) -> String;
    fn sample(&mut self, request: &GuidanceRequest) -> Result<GuidanceSample>;
}

/// Uniform direction and coherence, with no features behind it.
#[derive(Clone, Debug)]
pub struct ConstantDirection {
    /// Angle of the coherent axis, radians from +x.
    pub angle: f64,
    pub coherence: f64,
}

impl ConstantDirection {
    pub fn new(angle: f64, coherence: f64) -> Result<Self> {
        if !angle.is_finite() || !(0.0..=1.0).contains(&coherence) {
            return Err(Error::Guidance(format!(
                "const-dir needs a finite angle and coherence in [0, 1], got {angle}, {coherence}"
            )));
        }
        Ok(Self { angle, coherence })
    }
}

impl GuidanceProvider for ConstantDirection {
    fn name(&self) -> String {
        format!("const-dir:{},{}", self.angle, self.coherence)
    }

    fn sample(&mut self, _request: &GuidanceRequest) -> Result<GuidanceSample> {
        Ok(GuidanceSample::Direct {
            coherent_axis: Vec2::from_angle(self.angle),
            coherence: self.coherence,
        })
    }
}

/// Blurred grayscale intensity of an image as a single feature channel.
/// The image is stretched over the scene domain.
#[derive(Clone, Debug)]
pub struct Silhouette {
    field: FeatureField,
}

impl Silhouette {
    pub const BLUR_SIGMA: f64 = 1.0;

    pub fn from_image(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Guidance(format!("cannot read image {}: {e}", path.display())))?
            .into_luma8();
        let side = SILHOUETTE_SIDE as u32;
        let small = image::imageops::resize(&img, side, side, FilterType::Triangle);
        let values: Vec<f64> = small.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
        Self::from_intensity(&values, SILHOUETTE_SIDE, SILHOUETTE_SIDE)
    }

    /// Row-major intensities, row 0 at the domain's minimum y.
    pub fn from_intensity(values: &[f64], width: usize, height: usize) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Guidance(format!(
                "intensity array holds {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        let blurred = blur(values, width, height, Self::BLUR_SIGMA, Border::Renormalize);
        Ok(Self {
            field: FeatureField::new(1, height, width, blurred, FeatureSource::Silhouette)?,
        })
    }

    pub fn field(&self) -> &FeatureField {
        &self.field
    }
}

impl GuidanceProvider for Silhouette {
    fn name(&self) -> String {
        "silhouette".into()
    }

    fn sample(&mut self, _request: &GuidanceRequest) -> Result<GuidanceSample> {
        Ok(GuidanceSample::Features(self.field.clone()))
    }
}

/// Reads a feature dump; the file is re-read on every refresh so an
/// external process can replace it between calls.
#[derive(Clone, Debug)]
pub struct FileFeatures {
    path: PathBuf,
}

impl FileFeatures {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl GuidanceProvider for FileFeatures {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn sample(&mut self, _request: &GuidanceRequest) -> Result<GuidanceSample> {
        Ok(GuidanceSample::Features(read_feature_dump(&self.path)?))
    }
}

/// Parsed form of `const-dir:θ,c`, `silhouette:<img>` or `file:<dump>`.
#[derive(Clone, Debug, PartialEq)]
pub enum GuidanceSpec {
    ConstantDirection { angle: f64, coherence: f64 },
    Silhouette(PathBuf),
    File(PathBuf),
}

impl FromStr for GuidanceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Guidance(format!("guidance spec `{s}` lacks a `kind:` prefix")))?;
        match kind {
            "const-dir" => {
                let (a, c) = arg
                    .split_once(',')
                    .ok_or_else(|| Error::Guidance(format!("const-dir expects `θ,c`, got `{arg}`")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Guidance(format!("bad number `{v}` in const-dir: {e}")))
                };
                let spec = GuidanceSpec::ConstantDirection {
                    angle: parse(a)?,
                    coherence: parse(c)?,
                };
                spec.build()?;
                Ok(spec)
            }
            "silhouette" if !arg.is_empty() => Ok(GuidanceSpec::Silhouette(arg.into())),
            "file" if !arg.is_empty() => Ok(GuidanceSpec::File(arg.into())),
            _ => Err(Error::Guidance(format!("unknown guidance spec `{s}`"))),
        }
    }
}

impl fmt::Display for GuidanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuidanceSpec::ConstantDirection { angle, coherence } => write!(f, "const-dir:{angle},{coherence}"),
            GuidanceSpec::Silhouette(p) => write!(f, "silhouette:{}", p.display()),
            GuidanceSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl GuidanceSpec {
    pub fn build(&self) -> Result<Box<dyn GuidanceProvider>> {
        Ok(match self {
            GuidanceSpec::ConstantDirection { angle, coherence } => {
                Box::new(ConstantDirection::new(*angle, *coherence)?)
            }
            GuidanceSpec::Silhouette(p) => Box::new(Silhouette::from_image(p)?),
            GuidanceSpec::File(p) => Box::new(FileFeatures::new(p.clone())),
        })
    }
}

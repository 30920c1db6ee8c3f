use crate::error::{Error, Result};
use crate::fields::{blur, gradient, Border};

use super::tensor::{project_spd, Sym2, TensorField};

/// Where a feature field came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Synthetic,
    Silhouette,
    File,
}

impl FeatureSource {
    pub fn tag(&self) -> &'static str {
        match self {
            FeatureSource::Synthetic => "synthetic",
            FeatureSource::Silhouette => "silhouette",
            FeatureSource::File => "file",
        }
    }
}

/// `C × H × W` features, channel-major then row-major. Rows run along +y
/// of the grid that the field covers.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
    source: FeatureSource,
}

pub const MIN_FEATURE_SIDE: usize = 8;

impl FeatureField {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
        source: FeatureSource,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Guidance("feature field has no channels".into()));
        }
        if height < MIN_FEATURE_SIDE || width < MIN_FEATURE_SIDE {
            return Err(Error::Guidance(format!(
                "feature field {height}×{width} is below the {MIN_FEATURE_SIDE}×{MIN_FEATURE_SIDE} minimum"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::Guidance(format!(
                "expected {} feature values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Guidance("feature field contains non-finite values".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
            source,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    /// Feature vector at one cell.
    pub fn vector_at(&self, cell: usize) -> Vec<f64> {
        let n = self.height * self.width;
        (0..self.channels).map(|c| self.values[c * n + cell]).collect()
    }
}

/// Per-channel standardization to zero mean and unit standard deviation,
/// with the deviation floored at `1e-6`.
pub fn standardize_features(f: &FeatureField) -> FeatureField {
    let mut out = f.clone();
    let n = f.height * f.width;
    for c in 0..f.channels {
        let ch = &mut out.values[c * n..(c + 1) * n];
        let mean = ch.iter().sum::<f64>() / n as f64;
        let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt().max(1e-6);
        ch.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    out
}

/// Gaussian-smoothed sum over channels of `∇f ∇fᵀ`, at the feature
/// resolution. Gradients are per feature cell.
pub fn structure_tensor(f: &FeatureField, sigma: f64) -> TensorField {
    let (w, h) = (f.width, f.height);
    let n = w * h;
    let mut sxx = vec![0.0; n];
    let mut sxy = vec![0.0; n];
    let mut syy = vec![0.0; n];
    for c in 0..f.channels {
        let (gx, gy) = gradient(f.channel(c), w, h);
        for k in 0..n {
            sxx[k] += gx[k] * gx[k];
            sxy[k] += gx[k] * gy[k];
            syy[k] += gy[k] * gy[k];
        }
    }
    let sxx = blur(&sxx, w, h, sigma, Border::Renormalize);
    let sxy = blur(&sxy, w, h, sigma, Border::Renormalize);
    let syy = blur(&syy, w, h, sigma, Border::Renormalize);
    TensorField {
        width: w,
        height: h,
        values: (0..n).map(|k| Sym2::new(sxx[k], sxy[k], syy[k])).collect(),
    }
}

/// Source coordinate and interpolation weight for one target index.
/// Cell centres of both grids are aligned over the same extent; the two
/// outermost half-cells are linearly extrapolated.
#[inline]
fn source_coord(target: usize, target_len: usize, source_len: usize) -> (usize, f64) {
    if source_len < 2 {
        return (0, 0.0);
    }
    let x = (target as f64 + 0.5) * source_len as f64 / target_len as f64 - 0.5;
    let i0 = (x.floor().max(0.0) as usize).min(source_len - 2);
    (i0, x - i0 as f64)
}

/// Bilinear resampling of a row-major array onto a different resolution
/// covering the same extent.
pub fn resample_scalar(
    values: &[f64],
    width: usize,
    height: usize,
    target_width: usize,
    target_height: usize,
) -> Vec<f64> {
    if width == target_width && height == target_height {
        return values.to_vec();
    }
    let at = |i: usize, j: usize| values[j * width + i];
    let mut out = Vec::with_capacity(target_width * target_height);
    for tj in 0..target_height {
        let (j0, ty) = source_coord(tj, target_height, height);
        let j1 = (j0 + 1).min(height - 1);
        for ti in 0..target_width {
            let (i0, tx) = source_coord(ti, target_width, width);
            let i1 = (i0 + 1).min(width - 1);
            let bottom = at(i0, j0) + (at(i1, j0) - at(i0, j0)) * tx;
            let top = at(i0, j1) + (at(i1, j1) - at(i0, j1)) * tx;
            out.push(bottom + (top - bottom) * ty);
        }
    }
    out
}

/// Resamples every channel onto `target_width × target_height`.
pub fn resample_features(f: &FeatureField, target_width: usize, target_height: usize) -> FeatureField {
    if f.width == target_width && f.height == target_height {
        return f.clone();
    }
    let mut values = Vec::with_capacity(f.channels * target_width * target_height);
    for c in 0..f.channels {
        values.extend(resample_scalar(f.channel(c), f.width, f.height, target_width, target_height));
    }
    FeatureField {
        channels: f.channels,
        height: target_height,
        width: target_width,
        values,
        source: f.source,
    }
}

/// Componentwise bilinear resampling followed by an eigenvalue clamp to
/// `[1/(1+β), 1]` so every output tensor is a valid diffusion tensor.
pub fn resample_tensors(t: &TensorField, target_width: usize, target_height: usize, beta: f64) -> TensorField {
    let lo = 1.0 / (1.0 + beta);
    if t.width == target_width && t.height == target_height {
        return TensorField {
            width: t.width,
            height: t.height,
            values: t.values.iter().map(|s| project_spd(s, lo, 1.0)).collect(),
        };
    }
    let comp = |sel: fn(&Sym2) -> f64| {
        let raw: Vec<f64> = t.values.iter().map(sel).collect();
        resample_scalar(&raw, t.width, t.height, target_width, target_height)
    };
    let xx = comp(|s| s.xx);
    let xy = comp(|s| s.xy);
    let yy = comp(|s| s.yy);
    TensorField {
        width: target_width,
        height: target_height,
        values: (0..xx.len())
            .map(|k| project_spd(&Sym2::new(xx[k], xy[k], yy[k]), lo, 1.0))
            .collect(),
    }
}

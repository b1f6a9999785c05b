//! Gray-level and shape normalization.
//!
//! Shape normalization is represented as a [`CoordinateMap`] from the source
//! plane onto the standard square; feature extraction decides whether it
//! resamples the image through the map or only maps coordinates of
//! decomposed direction mass. Gray-level normalization turns a scanned image
//! into a reversed, contrast-normalized intensity field with background 0.

mod curve;
mod fit;

pub use curve::{band_weights, AxisMap, CoordinateMap, Curve1};
pub use fit::{
    field_mass_points, fit_bimoment, fit_ldpi, fit_linear, fit_p2dbmn, trajectory_mass_points,
    Bounds, MassPoint,
};

use crate::error::{Error, Result};
use crate::sample_io::OfflineSample;
use ndarray::Array2;
use std::str::FromStr;

/// Gray-level normalization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrayNorm {
    /// Reversed gray scaled to [0, 1], no contrast stretch.
    None,
    /// Foreground min-max stretched to (0, 1].
    Linear,
    /// Square root of the linear stretch; lifts faint strokes.
    Nonlinear,
}

impl FromStr for GrayNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GrayNorm::None),
            "linear" => Ok(GrayNorm::Linear),
            "nonlinear" => Ok(GrayNorm::Nonlinear),
            other => Err(Error::Invalid(format!("unknown gray mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for GrayNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GrayNorm::None => "none",
            GrayNorm::Linear => "linear",
            GrayNorm::Nonlinear => "nonlinear",
        })
    }
}

/// Reverse the gray levels of a scanned sample (so that ink carries mass and
/// background is 0) and normalize contrast. Returns a (height, width) field
/// of values in [0, 1].
pub fn gray_normalize(sample: &OfflineSample, mode: GrayNorm) -> Array2<f64> {
    let (h, w) = (sample.height, sample.width);
    let mut field = Array2::<f64>::zeros((h, w));
    let reversed = |g: u8| 255u16 - g as u16;

    match mode {
        GrayNorm::None => {
            for ((r, c), v) in field.indexed_iter_mut() {
                *v = reversed(sample.level(c, r)) as f64 / 255.0;
            }
        }
        GrayNorm::Linear | GrayNorm::Nonlinear => {
            let mut lo = u16::MAX;
            let mut hi = 0u16;
            for &g in &sample.gray {
                let r = reversed(g);
                if r > 0 {
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            for ((r, c), v) in field.indexed_iter_mut() {
                let rev = reversed(sample.level(c, r));
                if rev == 0 {
                    continue;
                }
                let stretched = if hi > lo {
                    let t = (rev - lo) as f64 / (hi - lo) as f64;
                    (1.0 + 254.0 * t) / 255.0
                } else {
                    1.0
                };
                *v = if mode == GrayNorm::Nonlinear {
                    stretched.sqrt()
                } else {
                    stretched
                };
            }
        }
    }
    field
}

/// Aspect-ratio handling of the fitted map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aspect {
    /// Keep the source aspect ratio: shorter axis scaled by r and centered.
    Preserve,
    /// Stretch both axes to the full square.
    Fill,
    /// Aspect-ratio adaptive: shorter axis scaled by sqrt(sin(pi r / 2)).
    Adaptive,
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preserve" => Ok(Aspect::Preserve),
            "fill" => Ok(Aspect::Fill),
            "adaptive" => Ok(Aspect::Adaptive),
            other => Err(Error::Invalid(format!("unknown aspect mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Aspect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aspect::Preserve => "preserve",
            Aspect::Fill => "fill",
            Aspect::Adaptive => "adaptive",
        })
    }
}

/// Shape normalization method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    Linear,
    Bimoment,
    P2dbmn,
    Ldpi,
}

impl FromStr for NormMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(NormMethod::Linear),
            "bimoment" => Ok(NormMethod::Bimoment),
            "p2dbmn" => Ok(NormMethod::P2dbmn),
            "ldpi" => Ok(NormMethod::Ldpi),
            other => Err(Error::Invalid(format!(
                "unknown normalization method {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for NormMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormMethod::Linear => "linear",
            NormMethod::Bimoment => "bimoment",
            NormMethod::P2dbmn => "p2dbmn",
            NormMethod::Ldpi => "ldpi",
        })
    }
}

/// What the map is fitted from: an intensity field or trajectory mass points.
pub enum NormSource<'a> {
    Field(&'a Array2<f64>),
    Trajectory(&'a [MassPoint]),
}

/// Fit a coordinate map with the given method. Line-density projection needs
/// the image grid and rejects trajectory sources.
pub fn fit_map(
    method: NormMethod,
    source: &NormSource<'_>,
    n: usize,
    aspect: Aspect,
) -> Result<CoordinateMap> {
    let points_of = |source: &NormSource<'_>| match source {
        NormSource::Field(f) => field_mass_points(f),
        NormSource::Trajectory(p) => p.to_vec(),
    };
    match method {
        NormMethod::Linear => {
            let bounds = match source {
                NormSource::Field(f) => Bounds::of_field(f)?,
                NormSource::Trajectory(p) => Bounds::of_points(p)?,
            };
            fit_linear(bounds, n, aspect)
        }
        NormMethod::Bimoment => fit_bimoment(&points_of(source), n, aspect),
        NormMethod::P2dbmn => fit_p2dbmn(&points_of(source), n, aspect),
        NormMethod::Ldpi => match source {
            NormSource::Field(f) => fit_ldpi(f, n, aspect),
            NormSource::Trajectory(_) => Err(Error::Invalid(
                "line-density normalization needs an image, not a trajectory".into(),
            )),
        },
    }
}

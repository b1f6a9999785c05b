//! Piecewise-linear coordinate curves and the 2-D maps built from them.

use crate::error::{Error, Result};

/// Monotone piecewise-linear map defined by knots. Between knots the value is
/// interpolated; outside the knot range the end segments extend linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve1 {
    knots: Vec<(f64, f64)>,
}

impl Curve1 {
    /// Build from (src, dst) knots. Knots are sorted by source; duplicate
    /// sources are rejected, as are decreasing destinations.
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Degenerate("curve needs at least one knot".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if w[1].0 - w[0].0 <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "duplicate curve knot at source {}",
                    w[0].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Degenerate(format!(
                    "curve destination decreases at source {}",
                    w[1].0
                )));
            }
        }
        Ok(Curve1 { knots })
    }

    /// Straight line mapping [lo, hi] onto [0, n]. A near-zero source extent
    /// is widened to one unit around its center.
    pub fn from_bounds(lo: f64, hi: f64, n: f64) -> Result<Self> {
        let (lo, hi) = widen(lo, hi);
        Curve1::new(vec![(lo, 0.0), (hi, n)])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].1;
        }
        // index of the segment start: last knot with src <= x, clamped so an
        // out-of-range x extends the end segments
        let i = match k.partition_point(|&(s, _)| s <= x) {
            0 => 0,
            p => (p - 1).min(k.len() - 2),
        };
        let (x0, y0) = k[i];
        let (x1, y1) = k[i + 1];
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    /// Affinely rescale destinations: dst' = offset + ratio * dst.
    pub fn scale_dst(&mut self, ratio: f64, offset: f64) {
        for knot in &mut self.knots {
            knot.1 = offset + ratio * knot.1;
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }
}

/// Widen a degenerate interval to unit length around its center.
pub fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo >= 1e-9 {
        (lo, hi)
    } else {
        let c = 0.5 * (lo + hi);
        (c - 0.5, c + 0.5)
    }
}

/// One axis of a coordinate map: either a single curve or several curves
/// blended with Gaussian weights along the cross axis.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisMap {
    Separable(Curve1),
    Blended {
        curves: Vec<Curve1>,
        /// Band centers on the cross axis.
        centers: Vec<f64>,
        sigma: f64,
    },
}

impl AxisMap {
    /// Evaluate at position `v` on this axis, `cross` on the other.
    pub fn eval(&self, v: f64, cross: f64) -> f64 {
        match self {
            AxisMap::Separable(c) => c.eval(v),
            AxisMap::Blended {
                curves,
                centers,
                sigma,
            } => {
                let w = band_weights(centers, *sigma, cross);
                curves
                    .iter()
                    .zip(&w)
                    .map(|(c, &wi)| wi * c.eval(v))
                    .sum()
            }
        }
    }

    pub fn scale_dst(&mut self, ratio: f64, offset: f64) {
        match self {
            AxisMap::Separable(c) => c.scale_dst(ratio, offset),
            AxisMap::Blended { curves, .. } => {
                for c in curves {
                    c.scale_dst(ratio, offset);
                }
            }
        }
    }
}

/// Normalized Gaussian band weights at `cross`. Degenerate sigma falls back
/// to uniform weights.
pub fn band_weights(centers: &[f64], sigma: f64, cross: f64) -> Vec<f64> {
    let n = centers.len();
    if n == 1 || sigma <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let mut w: Vec<f64> = centers
        .iter()
        .map(|&c| (-(cross - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    for wi in &mut w {
        *wi /= total;
    }
    w
}

/// A fitted shape-normalization map onto the square [0, target]^2.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    pub x: AxisMap,
    pub y: AxisMap,
    pub target: usize,
}

impl CoordinateMap {
    /// Map a source-plane point into the standard plane.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (self.x.eval(x, y), self.y.eval(y, x))
    }
}

//! Fitting of coordinate maps from character mass distributions.
//!
//! All methods reduce the sample to weighted mass points: pixel centers
//! weighted by normalized intensity for images, arc-length samples for
//! trajectories. Line-density projection additionally needs the image grid
//! and therefore only accepts fields.

use super::curve::{AxisMap, CoordinateMap, Curve1};
use super::Aspect;
use crate::error::{Error, Result};
use crate::sample_io::OnlineSample;
use ndarray::Array2;

/// Bi-moment interval half-width in standard deviations.
const BIMOMENT_K: f64 = 2.0;
/// Pseudo-2D band count.
const BANDS: usize = 3;
/// Floor added to projected line densities so cumulative curves stay
/// strictly increasing.
const DENSITY_FLOOR: f64 = 1e-6;

/// A point mass in the source plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPoint {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

/// Pixel centers of a normalized intensity field, zero-mass pixels skipped.
/// The field is indexed (row, col); points use x = col + 0.5, y = row + 0.5.
pub fn field_mass_points(field: &Array2<f64>) -> Vec<MassPoint> {
    let mut points = Vec::new();
    for ((row, col), &mass) in field.indexed_iter() {
        if mass > 0.0 {
            points.push(MassPoint {
                x: col as f64 + 0.5,
                y: row as f64 + 0.5,
                mass,
            });
        }
    }
    points
}

/// Arc-length mass samples of the pen-down trajectory. Each segment is split
/// into sub-intervals no longer than `step` and contributes its length as
/// mass at the interval midpoints; an isolated dot contributes unit mass.
pub fn trajectory_mass_points(sample: &OnlineSample, step: f64) -> Vec<MassPoint> {
    let step = step.max(1e-6);
    let mut points = Vec::new();
    for stroke in &sample.strokes {
        if stroke.len() == 1 {
            points.push(MassPoint {
                x: stroke[0].0 as f64,
                y: stroke[0].1 as f64,
                mass: 1.0,
            });
            continue;
        }
        for w in stroke.windows(2) {
            let (ax, ay) = (w[0].0 as f64, w[0].1 as f64);
            let (bx, by) = (w[1].0 as f64, w[1].1 as f64);
            let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
            if len == 0.0 {
                continue;
            }
            let pieces = (len / step).ceil() as usize;
            let mass = len / pieces as f64;
            for i in 0..pieces {
                let t = (i as f64 + 0.5) / pieces as f64;
                points.push(MassPoint {
                    x: ax + t * (bx - ax),
                    y: ay + t * (by - ay),
                    mass,
                });
            }
        }
    }
    points
}

/// Axis-aligned bounding box in source coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Bounds {
    pub fn of_points(points: &[MassPoint]) -> Result<Bounds> {
        if points.is_empty() {
            return Err(Error::Degenerate("no mass to normalize".into()));
        }
        let mut b = Bounds {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for p in points {
            b.x0 = b.x0.min(p.x);
            b.x1 = b.x1.max(p.x);
            b.y0 = b.y0.min(p.y);
            b.y1 = b.y1.max(p.y);
        }
        Ok(b)
    }

    /// Foreground bounding box of a field, in continuous pixel coordinates
    /// (pixel (r, c) spans [c, c+1] x [r, r+1]).
    pub fn of_field(field: &Array2<f64>) -> Result<Bounds> {
        let mut b: Option<Bounds> = None;
        for ((row, col), &mass) in field.indexed_iter() {
            if mass > 0.0 {
                let e = b.get_or_insert(Bounds {
                    x0: f64::INFINITY,
                    x1: f64::NEG_INFINITY,
                    y0: f64::INFINITY,
                    y1: f64::NEG_INFINITY,
                });
                e.x0 = e.x0.min(col as f64);
                e.x1 = e.x1.max(col as f64 + 1.0);
                e.y0 = e.y0.min(row as f64);
                e.y1 = e.y1.max(row as f64 + 1.0);
            }
        }
        b.ok_or_else(|| Error::Degenerate("blank image".into()))
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Linear normalization: the bounding box is stretched onto the square.
pub fn fit_linear(bounds: Bounds, n: usize, aspect: Aspect) -> Result<CoordinateMap> {
    let m = n as f64;
    let mut map = CoordinateMap {
        x: AxisMap::Separable(Curve1::from_bounds(bounds.x0, bounds.x1, m)?),
        y: AxisMap::Separable(Curve1::from_bounds(bounds.y0, bounds.y1, m)?),
        target: n,
    };
    apply_aspect(&mut map, bounds.width(), bounds.height(), aspect);
    Ok(map)
}

enum Axis {
    X,
    Y,
}

fn coord(p: &MassPoint, axis: &Axis) -> (f64, f64) {
    match axis {
        Axis::X => (p.x, p.y),
        Axis::Y => (p.y, p.x),
    }
}

/// Weighted bi-moment interval of one axis: centroid plus `BIMOMENT_K`
/// standard deviations of the one-sided second moments. `weight` is an extra
/// per-point factor on top of the point mass.
fn bimoment_interval<F>(points: &[MassPoint], axis: &Axis, weight: F) -> Result<(f64, f64, f64)>
where
    F: Fn(&MassPoint) -> f64,
{
    let mut total = 0.0;
    let mut first = 0.0;
    for p in points {
        let (v, _) = coord(p, axis);
        let w = p.mass * weight(p);
        total += w;
        first += w * v;
    }
    if total <= 0.0 {
        return Err(Error::Degenerate("no mass to normalize".into()));
    }
    let c = first / total;
    let (mut w_lo, mut s_lo, mut w_hi, mut s_hi) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (v, _) = coord(p, axis);
        let w = p.mass * weight(p);
        let d = (v - c).powi(2);
        if v < c {
            w_lo += w;
            s_lo += w * d;
        } else {
            w_hi += w;
            s_hi += w * d;
        }
    }
    let mu_lo = if w_lo > 0.0 { s_lo / w_lo } else { 0.0 };
    let mu_hi = if w_hi > 0.0 { s_hi / w_hi } else { 0.0 };
    let mut lo = c - BIMOMENT_K * mu_lo.sqrt();
    let mut hi = c + BIMOMENT_K * mu_hi.sqrt();
    // keep the centroid strictly inside so the three-knot curve is valid
    if c - lo < 0.5 {
        lo = c - 0.5;
    }
    if hi - c < 0.5 {
        hi = c + 0.5;
    }
    Ok((lo, c, hi))
}

fn bimoment_curve<F>(points: &[MassPoint], axis: &Axis, n: f64, weight: F) -> Result<Curve1>
where
    F: Fn(&MassPoint) -> f64,
{
    let (lo, c, hi) = bimoment_interval(points, axis, weight)?;
    Curve1::new(vec![(lo, 0.0), (c, 0.5 * n), (hi, n)])
}

/// Bi-moment normalization: per axis, the centroid maps to the square center
/// and centroid +/- 2 sigma (one-sided) map to the square edges.
pub fn fit_bimoment(points: &[MassPoint], n: usize, aspect: Aspect) -> Result<CoordinateMap> {
    let m = n as f64;
    let (xl, _, xh) = bimoment_interval(points, &Axis::X, |_| 1.0)?;
    let (yl, _, yh) = bimoment_interval(points, &Axis::Y, |_| 1.0)?;
    let mut map = CoordinateMap {
        x: AxisMap::Separable(bimoment_curve(points, &Axis::X, m, |_| 1.0)?),
        y: AxisMap::Separable(bimoment_curve(points, &Axis::Y, m, |_| 1.0)?),
        target: n,
    };
    apply_aspect(&mut map, xh - xl, yh - yl, aspect);
    Ok(map)
}

/// Band centers and sigma over the cross-axis bi-moment extent.
fn band_layout(lo: f64, hi: f64, bands: usize) -> (Vec<f64>, f64) {
    let extent = hi - lo;
    let centers = (1..=bands)
        .map(|i| lo + extent * i as f64 / (bands + 1) as f64)
        .collect();
    (centers, extent / (bands + 1) as f64)
}

/// Soft band membership of a cross-axis position: normalized Gaussians.
fn membership(centers: &[f64], sigma: f64, cross: f64) -> Vec<f64> {
    super::curve::band_weights(centers, sigma, cross)
}

pub(crate) fn fit_p2dbmn_bands(
    points: &[MassPoint],
    n: usize,
    aspect: Aspect,
    bands: usize,
) -> Result<CoordinateMap> {
    let m = n as f64;
    let (xl, _, xh) = bimoment_interval(points, &Axis::X, |_| 1.0)?;
    let (yl, _, yh) = bimoment_interval(points, &Axis::Y, |_| 1.0)?;

    let axis_map = |axis: Axis, cross_lo: f64, cross_hi: f64| -> Result<AxisMap> {
        let (centers, sigma) = band_layout(cross_lo, cross_hi, bands);
        let curves = (0..bands)
            .map(|b| {
                bimoment_curve(points, &axis, m, |p| {
                    let (_, cross) = coord(p, &axis);
                    membership(&centers, sigma, cross)[b]
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AxisMap::Blended {
            curves,
            centers,
            sigma,
        })
    };

    let mut map = CoordinateMap {
        x: axis_map(Axis::X, yl, yh)?,
        y: axis_map(Axis::Y, xl, xh)?,
        target: n,
    };
    apply_aspect(&mut map, xh - xl, yh - yl, aspect);
    Ok(map)
}

/// Pseudo-2D bi-moment normalization: each axis curve is fitted per
/// cross-axis band and the bands are blended with Gaussian weights.
pub fn fit_p2dbmn(points: &[MassPoint], n: usize, aspect: Aspect) -> Result<CoordinateMap> {
    fit_p2dbmn_bands(points, n, aspect, BANDS)
}

/// Line density of one scanline: foreground pixels get density 1, background
/// pixels the reciprocal length of their background run, and scanlines with
/// no foreground stay zero.
fn scanline_density(line: &[f64], out: &mut [f64]) {
    if !line.iter().any(|&v| v > 0.0) {
        out.fill(0.0);
        return;
    }
    let mut i = 0;
    while i < line.len() {
        if line[i] > 0.0 {
            out[i] = 1.0;
            i += 1;
        } else {
            let start = i;
            while i < line.len() && line[i] <= 0.0 {
                i += 1;
            }
            let density = 1.0 / (i - start) as f64;
            out[start..i].fill(density);
        }
    }
}

/// Line-density projection normalization, pseudo-2D: per band, background
/// run-length densities are projected onto the axis, floored, accumulated,
/// and normalized into a curve on pixel boundaries.
pub fn fit_ldpi(field: &Array2<f64>, n: usize, aspect: Aspect) -> Result<CoordinateMap> {
    let bounds = Bounds::of_field(field)?;
    let (rows, cols) = field.dim();
    let m = n as f64;

    // density along x (per row) and along y (per column)
    let mut dx = Array2::<f64>::zeros((rows, cols));
    let mut buf = vec![0.0; cols];
    for r in 0..rows {
        let line: Vec<f64> = (0..cols).map(|c| field[[r, c]]).collect();
        scanline_density(&line, &mut buf);
        for c in 0..cols {
            dx[[r, c]] = buf[c];
        }
    }
    let mut dy = Array2::<f64>::zeros((rows, cols));
    let mut buf = vec![0.0; rows];
    for c in 0..cols {
        let line: Vec<f64> = (0..rows).map(|r| field[[r, c]]).collect();
        scanline_density(&line, &mut buf);
        for r in 0..rows {
            dy[[r, c]] = buf[r];
        }
    }

    // cumulative curve of one band: project the density with the band's
    // cross-axis weights, floor it, and accumulate over pixel boundaries
    let band_curve = |density: &Array2<f64>,
                      along_x: bool,
                      centers: &[f64],
                      sigma: f64,
                      b: usize|
     -> Result<Curve1> {
        let len = if along_x { cols } else { rows };
        let cross_len = if along_x { rows } else { cols };
        let mut projected = vec![DENSITY_FLOOR; len];
        for cross in 0..cross_len {
            let w = membership(centers, sigma, cross as f64 + 0.5)[b];
            for i in 0..len {
                let d = if along_x {
                    density[[cross, i]]
                } else {
                    density[[i, cross]]
                };
                projected[i] += w * d;
            }
        }
        let total: f64 = projected.iter().sum();
        let mut knots = Vec::with_capacity(len + 1);
        knots.push((0.0, 0.0));
        let mut acc = 0.0;
        for (i, d) in projected.iter().enumerate() {
            acc += d;
            knots.push((i as f64 + 1.0, m * acc / total));
        }
        Curve1::new(knots)
    };

    let (x_centers, x_sigma) = band_layout(0.0, rows as f64, BANDS);
    let x_curves = (0..BANDS)
        .map(|b| band_curve(&dx, true, &x_centers, x_sigma, b))
        .collect::<Result<Vec<_>>>()?;
    let (y_centers, y_sigma) = band_layout(0.0, cols as f64, BANDS);
    let y_curves = (0..BANDS)
        .map(|b| band_curve(&dy, false, &y_centers, y_sigma, b))
        .collect::<Result<Vec<_>>>()?;

    let mut map = CoordinateMap {
        x: AxisMap::Blended {
            curves: x_curves,
            centers: x_centers,
            sigma: x_sigma,
        },
        y: AxisMap::Blended {
            curves: y_curves,
            centers: y_centers,
            sigma: y_sigma,
        },
        target: n,
    };
    apply_aspect(&mut map, bounds.width(), bounds.height(), aspect);
    Ok(map)
}

/// Rescale the shorter axis according to the aspect mode and center it.
fn apply_aspect(map: &mut CoordinateMap, x_extent: f64, y_extent: f64, aspect: Aspect) {
    let (long, short) = if x_extent >= y_extent {
        (x_extent, y_extent)
    } else {
        (y_extent, x_extent)
    };
    if long <= 0.0 {
        return;
    }
    let r = (short / long).clamp(0.0, 1.0);
    let ratio = match aspect {
        Aspect::Fill => 1.0,
        Aspect::Preserve => r,
        Aspect::Adaptive => (std::f64::consts::FRAC_PI_2 * r).sin().sqrt(),
    };
    if (ratio - 1.0).abs() < 1e-15 {
        return;
    }
    let offset = map.target as f64 * (1.0 - ratio) / 2.0;
    if x_extent < y_extent {
        map.x.scale_dst(ratio, offset);
    } else {
        map.y.scale_dst(ratio, offset);
    }
}

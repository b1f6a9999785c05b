//! Feature-map extraction from offline images and online trajectories.
//!
//! Two regimes are supported. Normalization-cooperated extraction decomposes
//! direction on the original sample and uses the coordinate map only to
//! position the decomposed mass in the standard plane, so direction
//! information is never distorted by normalization. Normalization-based
//! extraction first produces a normalized sample (image resampling or point
//! mapping) and decomposes direction afterwards.

use super::decompose::{decompose, DIRECTIONS};
use super::splat::Splatter;
use super::{DirectMap, Modality};
use crate::error::Result;
use crate::sample_io::{OfflineSample, OnlineSample};
use crate::shape_norm::{
    fit_map, gray_normalize, trajectory_mass_points, Aspect, CoordinateMap, GrayNorm, NormMethod,
    NormSource,
};
use ndarray::Array2;

/// Weight of pen-up (imaginary) segments relative to pen-down ink.
const IMAGINARY_WEIGHT: f64 = 0.5;
/// Largest allowed gap between consecutive splat points on the plane.
const TRAJECTORY_STEP: f64 = 0.5;
/// Cap on adaptive re-sampling refinement per segment.
const MAX_REFINE: u32 = 12;

/// Extraction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    pub gray: GrayNorm,
    pub method: NormMethod,
    pub aspect: Aspect,
    /// Standard plane size (the feature maps are map_size x map_size).
    pub map_size: usize,
    /// Normalization-cooperated when true, normalization-based otherwise.
    pub cooperated: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            gray: GrayNorm::Nonlinear,
            method: NormMethod::P2dbmn,
            aspect: Aspect::Adaptive,
            map_size: 32,
            cooperated: true,
        }
    }
}

/// Mass bookkeeping of one extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractStats {
    /// Total decomposed direction mass sent to the planes.
    pub input_mass: f64,
    /// Mass retained on the planes.
    pub kept_mass: f64,
    /// Mass clipped at the plane borders.
    pub clipped_mass: f64,
}

fn finish(
    splatter: Splatter,
    modality: Modality,
    class: Option<u32>,
    writer: u32,
) -> (DirectMap, ExtractStats) {
    let stats = ExtractStats {
        input_mass: splatter.requested_mass(),
        kept_mass: splatter.kept_mass(),
        clipped_mass: splatter.clipped_mass(),
    };
    let map = DirectMap {
        data: splatter.finish(),
        modality,
        class,
        writer,
    };
    (map, stats)
}

/// Sobel gradient of a field at (row, col), zero-padded at the borders.
/// Returns (gx, gy) with x right and y down.
fn sobel(field: &Array2<f64>, row: usize, col: usize) -> (f64, f64) {
    let (h, w) = field.dim();
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            field[[r as usize, c as usize]]
        }
    };
    let (r, c) = (row as isize, col as isize);
    let gx = at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)
        - at(r - 1, c - 1)
        - 2.0 * at(r, c - 1)
        - at(r + 1, c - 1);
    let gy = at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)
        - at(r - 1, c - 1)
        - 2.0 * at(r - 1, c)
        - at(r - 1, c + 1);
    (gx, gy)
}

/// Forward-resample a field through a coordinate map onto an n x n grid.
/// Pixel mass is deposited bilinearly at the mapped pixel centers.
pub fn resample_field(field: &Array2<f64>, map: &CoordinateMap, n: usize) -> Array2<f64> {
    let mut splatter = Splatter::new(1, n);
    for ((row, col), &v) in field.indexed_iter() {
        if v > 0.0 {
            let (x, y) = map.map(col as f64 + 0.5, row as f64 + 0.5);
            splatter.splat(0, x, y, v);
        }
    }
    let out = splatter.finish();
    Array2::from_shape_fn((n, n), |(r, c)| out[[0, r, c]] as f64)
}

/// Extract the direction feature maps of an offline sample.
pub fn extract_offline(
    sample: &OfflineSample,
    config: &ExtractConfig,
) -> Result<(DirectMap, ExtractStats)> {
    let n = config.map_size;
    let field = gray_normalize(sample, config.gray);
    let map = fit_map(config.method, &NormSource::Field(&field), n, config.aspect)?;
    let mut splatter = Splatter::new(DIRECTIONS, n);

    let mut splat_gradients = |field: &Array2<f64>, map: Option<&CoordinateMap>| {
        let (h, w) = field.dim();
        for row in 0..h {
            for col in 0..w {
                let (gx, gy) = sobel(field, row, col);
                if gx == 0.0 && gy == 0.0 {
                    continue;
                }
                let d = decompose(gx, gy);
                let center = (col as f64 + 0.5, row as f64 + 0.5);
                let (x, y) = match map {
                    Some(m) => m.map(center.0, center.1),
                    None => center,
                };
                splatter.splat(d.dirs[0], x, y, d.weights[0]);
                splatter.splat(d.dirs[1], x, y, d.weights[1]);
            }
        }
    };

    if config.cooperated {
        splat_gradients(&field, Some(&map));
    } else {
        let normalized = resample_field(&field, &map, n);
        splat_gradients(&normalized, None);
    }
    Ok(finish(splatter, Modality::Offline, sample.class, sample.writer))
}

/// Pen-down and pen-up segments of a trajectory, in original coordinates.
fn segments(sample: &OnlineSample) -> Vec<((f64, f64), (f64, f64), f64)> {
    let mut out = Vec::new();
    let mut last_end: Option<(f64, f64)> = None;
    for stroke in &sample.strokes {
        let pts: Vec<(f64, f64)> = stroke.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
        if let (Some(prev), Some(&first)) = (last_end, pts.first()) {
            if prev != first {
                out.push((prev, first, IMAGINARY_WEIGHT));
            }
        }
        for w in pts.windows(2) {
            if w[0] != w[1] {
                out.push((w[0], w[1], 1.0));
            }
        }
        last_end = pts.last().copied();
    }
    out
}

/// Deposit one segment's direction mass. Direction and mass come from the
/// segment chord in the coordinates given; `map`, when present, only moves
/// the deposit positions. The segment is subdivided until consecutive
/// deposit points are close on the plane, so curved maps still produce
/// contiguous traces.
fn splat_segment(
    splatter: &mut Splatter,
    map: Option<&CoordinateMap>,
    a: (f64, f64),
    b: (f64, f64),
    weight: f64,
) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return;
    }
    let d = decompose(dx / len, dy / len);
    let mass = weight * len;

    let position = |t: f64| -> (f64, f64) {
        let x = a.0 + t * dx;
        let y = a.1 + t * dy;
        match map {
            Some(m) => m.map(x, y),
            None => (x, y),
        }
    };

    let mut pieces = 1usize;
    for _ in 0..MAX_REFINE {
        let mut widest: f64 = 0.0;
        let mut prev = position(0.0);
        for i in 1..=pieces {
            let cur = position(i as f64 / pieces as f64);
            let gap = ((cur.0 - prev.0).powi(2) + (cur.1 - prev.1).powi(2)).sqrt();
            widest = widest.max(gap);
            prev = cur;
        }
        if widest <= TRAJECTORY_STEP {
            break;
        }
        pieces *= 2;
    }

    let piece_mass = mass / pieces as f64;
    for i in 0..pieces {
        let t = (i as f64 + 0.5) / pieces as f64;
        let (x, y) = position(t);
        splatter.splat(d.dirs[0], x, y, piece_mass * d.weights[0]);
        splatter.splat(d.dirs[1], x, y, piece_mass * d.weights[1]);
    }
}

/// Extract the direction feature maps of an online trajectory. Pen-up
/// connectors between strokes contribute at half weight.
pub fn extract_online(
    sample: &OnlineSample,
    config: &ExtractConfig,
) -> Result<(DirectMap, ExtractStats)> {
    let n = config.map_size;
    let points = trajectory_mass_points(sample, 1.0);
    let map = fit_map(
        config.method,
        &NormSource::Trajectory(&points),
        n,
        config.aspect,
    )?;

    let mut splatter = Splatter::new(DIRECTIONS, n);
    for (a, b, weight) in segments(sample) {
        if config.cooperated {
            splat_segment(&mut splatter, Some(&map), a, b, weight);
        } else {
            // normalization-based: move the points first, then decompose the
            // normalized chord
            let a2 = map.map(a.0, a.1);
            let b2 = map.map(b.0, b.1);
            splat_segment(&mut splatter, None, a2, b2, weight);
        }
    }
    Ok(finish(splatter, Modality::Online, sample.class, sample.writer))
}

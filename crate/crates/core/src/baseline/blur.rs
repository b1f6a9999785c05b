//! Gaussian-blur sampling of direction maps and the Box-Cox power transform.

use crate::error::{Error, Result};
use ndarray::{Array1, Array3};

/// Sample grid edge: 8x8 points per plane.
pub const GRID: usize = 8;
/// Sampling interval in map pixels.
pub const STEP: usize = 4;
/// Blur bandwidth matched to the sampling interval.
pub fn blur_sigma() -> f64 {
    STEP as f64 * std::f64::consts::SQRT_2 / std::f64::consts::PI
}

/// Gaussian-weighted resampling of each plane at the centers of an 8x8 grid
/// (pixels 4i + 2). The kernel is cut off at radius 3 sigma and the weights
/// that land inside the map are normalized to sum one per sample point, so a
/// constant plane reproduces its constant and border points are not dimmed.
pub fn blur_sample(map: &Array3<f32>) -> Result<Array1<f64>> {
    let (planes, h, w) = map.dim();
    let n = GRID * STEP;
    if h != n || w != n {
        return Err(Error::Dimension(format!(
            "expected {n}x{n} planes for blur sampling, got {h}x{w}"
        )));
    }
    let sigma = blur_sigma();
    let cutoff2 = (3.0 * sigma) * (3.0 * sigma);
    let rad = (3.0 * sigma).floor() as isize;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    let mut features = Array1::zeros(planes * GRID * GRID);
    for p in 0..planes {
        for gy in 0..GRID {
            for gx in 0..GRID {
                let cy = (gy * STEP + STEP / 2) as isize;
                let cx = (gx * STEP + STEP / 2) as isize;
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for dy in -rad..=rad {
                    let py = cy + dy;
                    if py < 0 || py >= n as isize {
                        continue;
                    }
                    for dx in -rad..=rad {
                        let px = cx + dx;
                        if px < 0 || px >= n as isize {
                            continue;
                        }
                        let d2 = (dy * dy + dx * dx) as f64;
                        if d2 > cutoff2 {
                            continue;
                        }
                        let wt = (-d2 * inv_two_sigma2).exp();
                        acc += wt * map[[p, py as usize, px as usize]] as f64;
                        wsum += wt;
                    }
                }
                features[p * GRID * GRID + gy * GRID + gx] = acc / wsum;
            }
        }
    }
    Ok(features)
}

/// Elementwise square-root power transform; rejects negative components.
pub fn boxcox(features: &Array1<f64>) -> Result<Array1<f64>> {
    if let Some(v) = features.iter().find(|v| **v < 0.0) {
        return Err(Error::Invalid(format!(
            "negative feature {v} fed to the power transform"
        )));
    }
    Ok(features.mapv(f64::sqrt))
}

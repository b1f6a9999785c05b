//! Decomposition of planar vectors into the eight chaincode directions.
//!
//! Directions are unit vectors at multiples of 45 degrees in image
//! coordinates (x right, y down): index 0 is +x, index 2 is +y, and so on
//! counterclockwise in (x, y) terms, clockwise on screen. A vector falls
//! between two adjacent directions and splits exactly into a non-negative
//! combination of them.

use std::f64::consts::{FRAC_PI_4, PI};

pub const DIRECTIONS: usize = 8;

/// Unit vector of a chaincode direction.
pub fn direction_vector(index: usize) -> (f64, f64) {
    let a = index as f64 * FRAC_PI_4;
    (a.cos(), a.sin())
}

/// A vector split into two adjacent chaincode directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub dirs: [usize; 2],
    pub weights: [f64; 2],
}

impl Decomposition {
    pub const ZERO: Decomposition = Decomposition {
        dirs: [0, 1],
        weights: [0.0, 0.0],
    };

    /// Sum of the two direction weights (the decomposed mass).
    pub fn mass(&self) -> f64 {
        self.weights[0] + self.weights[1]
    }
}

/// Split (dx, dy) into its two neighboring chaincode directions with
/// non-negative weights a, b such that a*u_s + b*u_{s+1} = (dx, dy) exactly.
/// The zero vector decomposes to zero weights.
pub fn decompose(dx: f64, dy: f64) -> Decomposition {
    let norm = (dx * dx + dy * dy).sqrt();
    if norm == 0.0 {
        return Decomposition::ZERO;
    }
    let mut angle = dy.atan2(dx);
    if angle < 0.0 {
        angle += 2.0 * PI;
    }
    let mut sector = (angle / FRAC_PI_4).floor() as usize;
    if sector >= DIRECTIONS {
        // angle == 2*pi after rounding
        sector = 0;
        angle = 0.0;
    }
    let local = angle - sector as f64 * FRAC_PI_4;
    // exact two-vector split inside the 45-degree sector:
    // a = |v| sin(pi/4 - t) / sin(pi/4), b = |v| sin(t) / sin(pi/4)
    let inv_sin = 1.0 / FRAC_PI_4.sin();
    let a = (norm * (FRAC_PI_4 - local).sin() * inv_sin).max(0.0);
    let b = (norm * local.sin() * inv_sin).max(0.0);
    Decomposition {
        dirs: [sector, (sector + 1) % DIRECTIONS],
        weights: [a, b],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reconstruct(d: &Decomposition) -> (f64, f64) {
        let (x0, y0) = direction_vector(d.dirs[0]);
        let (x1, y1) = direction_vector(d.dirs[1]);
        (
            d.weights[0] * x0 + d.weights[1] * x1,
            d.weights[0] * y0 + d.weights[1] * y1,
        )
    }

    #[test]
    fn axis_aligned_vectors() {
        let d = decompose(5.0, 0.0);
        assert_eq!(d.dirs[0], 0);
        assert!((d.weights[0] - 5.0).abs() < 1e-12);
        assert!(d.weights[1].abs() < 1e-12);

        let d = decompose(0.0, 3.0);
        assert_eq!(d.dirs[0], 2);
        assert!((d.weights[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn known_split_in_first_sector() {
        // (2, 1) = 1 * (1, 0) + sqrt(2) * (s, s) with s = sqrt(2)/2
        let d = decompose(2.0, 1.0);
        assert_eq!(d.dirs, [0, 1]);
        assert!((d.weights[0] - 1.0).abs() < 1e-12);
        assert!((d.weights[1] - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_lands_on_single_direction() {
        let d = decompose(1.0, 1.0);
        assert_eq!(d.dirs[0], 1);
        assert!((d.weights[0] - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(d.weights[1].abs() < 1e-12);
    }

    #[test]
    fn reconstruction_is_exact_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let dx = rng.gen_range(-100.0..100.0);
            let dy = rng.gen_range(-100.0..100.0);
            let d = decompose(dx, dy);
            assert!(d.weights[0] >= 0.0 && d.weights[1] >= 0.0);
            let (rx, ry) = reconstruct(&d);
            assert!((rx - dx).abs() < 1e-12 && (ry - dy).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_by_45_degrees_shifts_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..1000 {
            let dx: f64 = rng.gen_range(-10.0..10.0);
            let dy: f64 = rng.gen_range(-10.0..10.0);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            let d = decompose(dx, dy);
            // rotate by +45 degrees in (x, y down) coordinates
            let rx = s * (dx - dy);
            let ry = s * (dx + dy);
            let r = decompose(rx, ry);
            assert_eq!(r.dirs[0], (d.dirs[0] + 1) % DIRECTIONS);
            assert!((r.weights[0] - d.weights[0]).abs() < 1e-9);
            assert!((r.weights[1] - d.weights[1]).abs() < 1e-9);
        }
    }
}

//! Bilinear mass accumulation into direction planes.

use ndarray::Array3;

/// Accumulates direction mass into a (planes, n, n) grid with bilinear
/// interpolation. Sums run in f64 and are cast to f32 only on `finish`.
/// Mass that falls outside the grid is discarded but tracked.
#[derive(Debug, Clone)]
pub struct Splatter {
    grid: Array3<f64>,
    requested: f64,
    clipped: f64,
}

impl Splatter {
    pub fn new(planes: usize, n: usize) -> Self {
        Splatter {
            grid: Array3::zeros((planes, n, n)),
            requested: 0.0,
            clipped: 0.0,
        }
    }

    /// Deposit `mass` at continuous position (x, y) in [0, n]^2 on `plane`.
    /// Cell (row, col) has its center at (col + 0.5, row + 0.5).
    pub fn splat(&mut self, plane: usize, x: f64, y: f64, mass: f64) {
        if mass == 0.0 {
            return;
        }
        self.requested += mass;
        let n = self.grid.shape()[1] as isize;
        let u = x - 0.5;
        let v = y - 0.5;
        let c0 = u.floor();
        let r0 = v.floor();
        let fx = u - c0;
        let fy = v - r0;
        let (c0, r0) = (c0 as isize, r0 as isize);
        for (dr, dc, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (0, 1, fx * (1.0 - fy)),
            (1, 0, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let r = r0 + dr;
            let c = c0 + dc;
            if r >= 0 && r < n && c >= 0 && c < n {
                self.grid[[plane, r as usize, c as usize]] += mass * w;
            } else {
                self.clipped += mass * w;
            }
        }
    }

    /// Total mass passed to `splat`.
    pub fn requested_mass(&self) -> f64 {
        self.requested
    }

    /// Mass that fell outside the grid.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped
    }

    /// Mass retained on the grid.
    pub fn kept_mass(&self) -> f64 {
        self.grid.sum()
    }

    pub fn finish(self) -> Array3<f32> {
        self.grid.mapv(|v| v as f32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_mass_bilinearly() {
        let mut s = Splatter::new(1, 4);
        // position (1.0, 1.5): between columns 0 and 1 at fx = 0.5, exactly
        // on row 1
        s.splat(0, 1.0, 1.5, 2.0);
        let g = s.finish();
        assert!((g[[0, 1, 0]] - 1.0).abs() < 1e-12);
        assert!((g[[0, 1, 1]] - 1.0).abs() < 1e-12);
        assert_eq!(g[[0, 0, 0]], 0.0);
    }

    #[test]
    fn cell_center_is_exact() {
        let mut s = Splatter::new(2, 4);
        s.splat(1, 2.5, 3.5, 1.0);
        let g = s.finish();
        assert_eq!(g[[1, 3, 2]], 1.0);
    }

    #[test]
    fn conserves_or_clips_all_mass() {
        let mut s = Splatter::new(1, 4);
        s.splat(0, 0.2, 0.2, 1.0); // partly off the top-left corner
        s.splat(0, 3.9, 2.0, 1.0); // partly off the right edge
        s.splat(0, -5.0, 1.0, 1.0); // fully outside
        let total = s.requested_mass();
        let sum = s.kept_mass() + s.clipped_mass();
        assert!((sum - total).abs() < 1e-12);
        assert!(s.clipped_mass() > 1.0);
    }
}

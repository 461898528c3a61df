//! Uniform grids, linear interpolation, finite differences and trapezoid sums.
//!
//! Everything in the crate samples on uniform grids, so these helpers work
//! directly on `(start, spacing)` pairs and avoid searching for cells.

use serde::{Deserialize, Serialize};

/// A uniform grid `start + j * spacing` for `j = 0..=cells`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub end: f64,
    pub cells: usize,
}

impl UniformGrid {
    pub fn new(start: f64, end: f64, cells: usize) -> Self {
        assert!(cells >= 1, "a grid needs at least one cell");
        assert!(end > start, "grid end must exceed start");
        Self { start, end, cells }
    }

    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / self.cells as f64
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `j`-th node. The last node is returned as `end` exactly.
    pub fn node(&self, j: usize) -> f64 {
        if j == self.cells {
            self.end
        } else {
            self.start + j as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Linear interpolation of `values` (sampled on this grid) at `x`.
    ///
    /// Points outside the grid are clamped to the end values.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let h = self.spacing();
        let s = (x - self.start) / h;
        if s <= 0.0 {
            return values[0];
        }
        if s >= self.cells as f64 {
            return values[self.cells];
        }
        let j = (s.floor() as usize).min(self.cells - 1);
        let w = s - j as f64;
        values[j] + w * (values[j + 1] - values[j])
    }

    /// Composite trapezoid rule for samples on this grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        trapezoid(values, self.spacing())
    }
}

pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            spacing * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Derivative of uniformly spaced samples: second-order centred differences
/// inside, first-order one-sided differences at the two end nodes.
pub fn derivative(values: &[f64], spacing: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 2, "need at least two samples to differentiate");
    let mut out = vec![0.0; n];
    out[0] = (values[1] - values[0]) / spacing;
    out[n - 1] = (values[n - 1] - values[n - 2]) / spacing;
    for j in 1..n - 1 {
        out[j] = (values[j + 1] - values[j - 1]) / (2.0 * spacing);
    }
    out
}

/// Relative discrete L2 distance `||a - b|| / ||b||` on a common grid.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

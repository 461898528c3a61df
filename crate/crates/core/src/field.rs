use serde::Serialize;

use crate::error::Result;
use crate::grid::UniformGrid;
use crate::model::StringParams;

/// `(phi, phi_x, phi_t)` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FieldPoint {
    pub phi: f64,
    pub phi_x: f64,
    pub phi_t: f64,
}

/// The solution sampled on a uniform grid over the moving interval at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    pub t: f64,
    pub grid: UniformGrid,
    pub phi: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_t: Vec<f64>,
}

impl FieldSlice {
    pub fn x(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Largest `|phi_x| + |phi_t|` on the slice.
    pub fn sup_gradient(&self) -> f64 {
        self.phi_x
            .iter()
            .zip(&self.phi_t)
            .map(|(a, b)| a.abs() + b.abs())
            .fold(0.0, f64::max)
    }
}

/// Common interface of the spectral and the characteristics solvers.
pub trait FieldSolver: Sync {
    fn params(&self) -> &StringParams;

    /// Field at one point of the moving interval.
    fn point(&self, x: f64, t: f64) -> Result<FieldPoint>;

    /// Field on `cells` uniform cells over the moving interval at time `t`.
    fn slice(&self, t: f64, cells: usize) -> Result<FieldSlice>;
}

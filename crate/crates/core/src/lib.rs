//! Axially travelling string with a dashpot at the moving end.
//!
//! The string occupies `(v t, L + v t)` and satisfies `phi_tt = phi_xx`, with a
//! damper at `x = v t` and a clamp at `x = L + v t`. Two solvers are provided:
//! a closed-form eigenfunction series ([`spectral`]) and a d'Alembert
//! reconstruction along characteristics ([`characteristics`]). [`energy`]
//! implements the energy functionals and decay estimates and [`verify`] checks
//! them against both solvers.

pub mod characteristics;
pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod field;
pub mod grid;
pub mod model;
pub mod spectral;
pub mod sweep;
pub mod verify;

pub use characteristics::{build_densities, CharacteristicDensities};
pub use error::{Error, Result};
pub use field::{FieldPoint, FieldSlice, FieldSolver};
pub use grid::UniformGrid;
pub use model::{extend_initial_data, ExtendedData, InitialData, Preset, StringParams};
pub use spectral::{compute_coefficients, ModeSet};

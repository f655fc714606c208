//! Synthesis, pattern prediction and control framing for a one-bit
//! reconfigurable intelligent surface.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: lattice layout, wavenumber and far-field distance
//! - [`unitcell`]: ON/OFF reflection response, ideal or tabulated
//! - [`synthesis`]: continuous phase maps and one-bit quantization
//! - [`pattern`]: illumination, scattered patterns, metrics, horn-to-horn link
//! - [`control`]: register frames and the serial command protocol
//! - [`cli`]: configuration and the `ristool` subcommands

pub mod cli;
pub mod control;
pub mod geometry;
pub mod pattern;
pub mod synthesis;
pub mod unitcell;

pub use geometry::{ArrayGeometry, FreqSpec, Vec3};
pub use pattern::{HornSpec, Pattern, PatternMetrics, Scenario};
pub use synthesis::{BitMap, FeedSpec, PhaseMap, SteeringTarget};
pub use unitcell::{CellState, UnitCellModel};

//! Ideal phase maps and their one-bit quantization.
//!
//! The continuous map compensates the feed path and adds the linear
//! progression that points the reflected beam along the target direction:
//!
//! ```text
//! φ_ij = k |r_ij − r_feed| − k (u0 · r_ij) + Δφ          (spherical feed)
//! φ_ij = −k (ŝ · r_ij)    − k (u0 · r_ij) + Δφ          (plane-wave feed)
//! ```
//!
//! Each element then takes whichever switch state has the circularly nearer
//! phase, with ties going to ON.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{circular_distance_deg, wrap_deg, ArrayGeometry, FreqSpec, Vec3};
use crate::pattern::{scattered_pattern, surface_reflection, ElementFactor, GridSpec, Illumination, PatternError};
use crate::unitcell::{CellError, CellState, UnitCellModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("near-field feed must sit above the surface (z = {0} m)")]
    FeedBelowSurface(f64),
    #[error("direction must be a finite unit vector in the reflection half-space")]
    BadDirection,
    #[error("ON and OFF phases coincide ({0} deg)")]
    DegenerateStates(f64),
    #[error("need at least 2 reference-phase samples, got {0}")]
    TooFewSamples(usize),
    #[error("map shape {found:?} does not match geometry {expected:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("bitmap text: {0}")]
    Parse(String),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Pattern(#[from] Box<PatternError>),
}

impl From<PatternError> for SynthesisError {
    fn from(e: PatternError) -> Self {
        SynthesisError::Pattern(Box::new(e))
    }
}

/// Where the illumination comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedSpec {
    /// Spherical wave from a phase center at `position`.
    NearField { position: Vec3 },
    /// Plane wave arriving from direction `arrival` (surface center toward source).
    FarField { arrival: Vec3 },
}

impl FeedSpec {
    pub fn near_field(position: Vec3) -> Result<Self, SynthesisError> {
        if !(position.z > 0.0 && position.norm().is_finite()) {
            return Err(SynthesisError::FeedBelowSurface(position.z));
        }
        Ok(FeedSpec::NearField { position })
    }

    pub fn far_field(arrival: Vec3) -> Result<Self, SynthesisError> {
        let n = arrival.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 || arrival.z <= 0.0 {
            return Err(SynthesisError::BadDirection);
        }
        Ok(FeedSpec::FarField { arrival })
    }
}

/// Desired reflected beam direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringTarget {
    u0: Vec3,
}

impl SteeringTarget {
    pub fn new(u0: Vec3) -> Result<Self, SynthesisError> {
        let n = u0.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 || u0.z < 0.0 {
            return Err(SynthesisError::BadDirection);
        }
        Ok(Self { u0 })
    }

    pub fn from_angles_deg(theta_deg: f64, phi_deg: f64) -> Result<Self, SynthesisError> {
        if !(0.0..=90.0).contains(&theta_deg) || !phi_deg.is_finite() {
            return Err(SynthesisError::BadDirection);
        }
        Self::new(Vec3::from_angles_deg(theta_deg, phi_deg))
    }

    pub fn broadside() -> Self {
        Self { u0: Vec3::Z }
    }

    pub fn direction(&self) -> Vec3 {
        self.u0
    }
}

/// Continuous per-element phase in degrees, row-major, wrapped to `[0, 360)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    rows: usize,
    cols: usize,
    phases_deg: Vec<f64>,
    pub freq: FreqSpec,
    pub reference_deg: f64,
}

impl PhaseMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn phases_deg(&self) -> &[f64] {
        &self.phases_deg
    }

    /// Phase at 1-based `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.phases_deg[(row - 1) * self.cols + (col - 1)]
    }

    /// Builds a map directly from a phase grid; values are wrapped.
    pub fn from_phases(rows: usize, cols: usize, phases_deg: Vec<f64>, freq: FreqSpec, reference_deg: f64) -> Result<Self, SynthesisError> {
        if phases_deg.len() != rows * cols {
            return Err(SynthesisError::Shape {
                expected: (rows, cols),
                found: (phases_deg.len(), 1),
            });
        }
        Ok(Self {
            rows,
            cols,
            phases_deg: phases_deg.into_iter().map(wrap_deg).collect(),
            freq,
            reference_deg,
        })
    }

    /// Unit-magnitude reflection coefficients `e^{jφ}`, the continuous-phase surface.
    pub fn continuous_gammas(&self) -> Vec<Complex64> {
        self.phases_deg
            .iter()
            .map(|p| Complex64::from_polar(1.0, p.to_radians()))
            .collect()
    }
}

/// One-bit surface configuration, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMap {
    rows: usize,
    cols: usize,
    states: Vec<CellState>,
}

impl BitMap {
    pub fn new(rows: usize, cols: usize, states: Vec<CellState>) -> Result<Self, SynthesisError> {
        if states.len() != rows * cols {
            return Err(SynthesisError::Shape {
                expected: (rows, cols),
                found: (states.len(), 1),
            });
        }
        Ok(Self { rows, cols, states })
    }

    pub fn filled(rows: usize, cols: usize, state: CellState) -> Self {
        Self {
            rows,
            cols,
            states: vec![state; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn states(&self) -> &[CellState] {
        &self.states
    }

    pub fn get(&self, row: usize, col: usize) -> CellState {
        self.states[(row - 1) * self.cols + (col - 1)]
    }

    pub fn count_on(&self) -> usize {
        self.states.iter().filter(|s| s.is_on()).count()
    }

    /// `'0'`/`'1'` text grid, one line per row, `'1'` = ON.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for row in self.states.chunks(self.cols) {
            out.extend(row.iter().map(|s| if s.is_on() { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }

    /// Parses the text grid; `#` lines and blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Self, SynthesisError> {
        let mut rows = 0;
        let mut cols = None;
        let mut states = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let before = states.len();
            for (c, ch) in line.chars().enumerate() {
                states.push(match ch {
                    '1' => CellState::On,
                    '0' => CellState::Off,
                    other => {
                        return Err(SynthesisError::Parse(format!(
                            "line {}, column {}: unexpected `{other}`",
                            n + 1,
                            c + 1
                        )))
                    }
                });
            }
            let width = states.len() - before;
            match cols {
                None => cols = Some(width),
                Some(w) if w != width => {
                    return Err(SynthesisError::Parse(format!(
                        "line {}: row has {width} cells, expected {w}",
                        n + 1
                    )))
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| SynthesisError::Parse("empty bitmap".into()))?;
        Self::new(rows, cols, states)
    }
}

impl fmt::Display for BitMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Continuous phase map for `feed` and `target` at `freq`, offset by `reference_deg`.
pub fn ideal_phase_map(geom: &ArrayGeometry, feed: &FeedSpec, target: &SteeringTarget, freq: FreqSpec, reference_deg: f64) -> PhaseMap {
    let k = freq.wavenumber();
    let u0 = target.direction();
    let phases_deg = geom
        .positions()
        .into_iter()
        .map(|r| {
            let path = match *feed {
                FeedSpec::NearField { position } => k * r.distance(position),
                FeedSpec::FarField { arrival } => -k * arrival.dot(r),
            };
            wrap_deg((path - k * u0.dot(r)).to_degrees() + reference_deg)
        })
        .collect();
    PhaseMap {
        rows: geom.rows(),
        cols: geom.cols(),
        phases_deg,
        freq,
        reference_deg,
    }
}

/// Picks ON where the phase is circularly no farther from `phase_on_deg`
/// than from `phase_off_deg`, OFF otherwise.
pub fn quantize_map(map: &PhaseMap, phase_on_deg: f64, phase_off_deg: f64) -> Result<BitMap, SynthesisError> {
    if circular_distance_deg(phase_on_deg, phase_off_deg) == 0.0 {
        return Err(SynthesisError::DegenerateStates(phase_on_deg));
    }
    let states = map
        .phases_deg
        .iter()
        .map(|&p| quantize_phase(p, phase_on_deg, phase_off_deg))
        .collect();
    Ok(BitMap {
        rows: map.rows,
        cols: map.cols,
        states,
    })
}

pub fn quantize_phase(phase_deg: f64, phase_on_deg: f64, phase_off_deg: f64) -> CellState {
    if circular_distance_deg(phase_deg, phase_on_deg) <= circular_distance_deg(phase_deg, phase_off_deg) {
        CellState::On
    } else {
        CellState::Off
    }
}

/// How candidate reference phases are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluationMode {
    /// One-bit surface from the quantized map.
    Quantized,
    /// Unit-magnitude continuous-phase surface (no quantization).
    Continuous,
}

/// Pattern-evaluation settings used when scoring reference phases.
#[derive(Debug, Clone)]
pub struct EvaluationSetup<'a> {
    pub illumination: &'a Illumination,
    pub element: ElementFactor,
    pub grid: GridSpec,
    pub mode: EvaluationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePhaseChoice {
    pub reference_deg: f64,
    pub bitmap: BitMap,
    /// Peak gain referenced to the feed, dBi.
    pub peak_gain_dbi: f64,
}

/// Peak gain (dBi) of the surface configured from `map`.
pub fn score_phase_map(geom: &ArrayGeometry, map: &PhaseMap, model: &UnitCellModel, setup: &EvaluationSetup<'_>) -> Result<(BitMap, f64), SynthesisError> {
    let (on, off) = model.phase_states(map.freq.hz())?;
    let bitmap = quantize_map(map, on, off)?;
    let gammas = match setup.mode {
        EvaluationMode::Quantized => surface_reflection(model, &bitmap, map.freq, &setup.illumination.incidence_deg)?,
        EvaluationMode::Continuous => map.continuous_gammas(),
    };
    let pattern = scattered_pattern(geom, &gammas, setup.illumination, setup.element, setup.grid, map.freq)?;
    Ok((bitmap, pattern.peak_gain_dbi()))
}

/// Sweeps `Δφ = n·360/samples` and keeps the candidate with the highest peak
/// gain; equal scores keep the smaller `Δφ`.
pub fn optimize_reference_phase(
    geom: &ArrayGeometry,
    feed: &FeedSpec,
    target: &SteeringTarget,
    freq: FreqSpec,
    model: &UnitCellModel,
    samples: usize,
    setup: &EvaluationSetup<'_>,
) -> Result<ReferencePhaseChoice, SynthesisError> {
    if samples < 2 {
        return Err(SynthesisError::TooFewSamples(samples));
    }
    let mut best: Option<ReferencePhaseChoice> = None;
    for n in 0..samples {
        let reference_deg = n as f64 * 360.0 / samples as f64;
        let map = ideal_phase_map(geom, feed, target, freq, reference_deg);
        let (bitmap, peak_gain_dbi) = score_phase_map(geom, &map, model, setup)?;
        if best.as_ref().is_none_or(|b| peak_gain_dbi > b.peak_gain_dbi) {
            best = Some(ReferencePhaseChoice {
                reference_deg,
                bitmap,
                peak_gain_dbi,
            });
        }
    }
    Ok(best.expect("samples >= 2"))
}

//! Scenario configuration files.
//!
//! A config is a JSON object whose keys all have defaults; an empty file
//! describes the reference surface (20×20 cells at 3.85 mm, Tx horn 0.2 m
//! away at 30° incidence, Rx horn 0.3 m away on the normal, 27.5 GHz,
//! broadside target). Unknown keys are rejected at every level.
//!
//! ```json
//! {
//!   "geometry": { "rows": 20, "cols": 20, "pitch_mm": 3.85 },
//!   "unit_cell": { "source": "table", "path": "cells.csv" },
//!   "tx": { "distance_m": 0.7, "incidence_theta_deg": 30 },
//!   "reference_phase": "optimize"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ProtocolLimits;
use crate::geometry::{ArrayGeometry, FreqSpec};
use crate::pattern::{ElementFactor, FeedModel, GridSpec, HornSpec, ReferencePhase, Scenario};
use crate::synthesis::{BitMap, SteeringTarget};
use crate::unitcell::{load_cell_table, CellState, UnitCellModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("{key}: {reason}")]
    Range { key: &'static str, reason: String },
    #[error("{key}: file {path} does not exist")]
    MissingFile { key: &'static str, path: PathBuf },
    #[error("{key}: {reason}")]
    Model { key: &'static str, reason: String },
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Read { .. } => "config_read",
            ConfigError::Schema(_) => "config_schema",
            ConfigError::Range { .. } => "config_range",
            ConfigError::MissingFile { .. } => "config_missing_file",
            ConfigError::Model { .. } => "config_model",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub rows: usize,
    pub cols: usize,
    pub pitch_mm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            pitch_mm: 3.85,
        }
    }
}

/// Where ON/OFF reflection data comes from. The field-less variants are
/// written with braces so that stray keys next to `source` are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum UnitCellSource {
    /// Lossless cells with a 180° state difference.
    Ideal {},
    /// The digitized table bundled with the tool.
    Builtin {},
    /// A CSV table on disk, resolved relative to the config file.
    Table { path: PathBuf },
}

impl Default for UnitCellSource {
    fn default() -> Self {
        UnitCellSource::Ideal {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxConfig {
    pub distance_m: f64,
    pub incidence_theta_deg: f64,
    pub azimuth_deg: f64,
    pub gain_dbi: f64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            distance_m: 0.2,
            incidence_theta_deg: 30.0,
            azimuth_deg: 0.0,
            gain_dbi: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxConfig {
    pub distance_m: f64,
    pub theta_deg: f64,
    pub azimuth_deg: f64,
    pub gain_dbi: f64,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            distance_m: 0.3,
            theta_deg: 0.0,
            azimuth_deg: 180.0,
            gain_dbi: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub theta_deg: f64,
    /// Azimuth of the steering plane; 180 puts the beam on the far side of
    /// the normal from a Tx at azimuth 0.
    pub phi_deg: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            theta_deg: 0.0,
            phi_deg: 180.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeKeyword {
    Optimize,
}

/// A fixed reference phase in degrees, or the string `"optimize"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferencePhaseConfig {
    Fixed(f64),
    Keyword(OptimizeKeyword),
}

impl Default for ReferencePhaseConfig {
    fn default() -> Self {
        ReferencePhaseConfig::Fixed(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitmapOverride {
    AllOff,
    AllOn,
}

impl BitmapOverride {
    pub fn bitmap(self, rows: usize, cols: usize) -> BitMap {
        let state = match self {
            BitmapOverride::AllOff => CellState::Off,
            BitmapOverride::AllOn => CellState::On,
        };
        BitMap::filled(rows, cols, state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub theta_step_deg: f64,
    pub phi_step_deg: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            theta_step_deg: 0.5,
            phi_step_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub phase_tolerance_deg: f64,
    pub magnitude_floor_db: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            phase_tolerance_deg: 20.0,
            magnitude_floor_db: -2.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub freq_min_ghz: f64,
    pub freq_max_ghz: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let d = ProtocolLimits::default();
        Self {
            freq_min_ghz: d.freq_min_ghz,
            freq_max_ghz: d.freq_max_ghz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub unit_cell: UnitCellSource,
    pub feed: FeedModel,
    pub tx: TxConfig,
    pub rx: RxConfig,
    pub frequency_ghz: f64,
    pub sweep_frequencies_ghz: Vec<f64>,
    pub target: TargetConfig,
    pub sweep_targets_theta_deg: Vec<f64>,
    pub reference_phase: ReferencePhaseConfig,
    pub optimizer_samples: usize,
    pub element_factor_q: f64,
    pub grid: GridConfig,
    pub bitmap_override: Option<BitmapOverride>,
    pub band: BandConfig,
    pub protocol: ProtocolConfig,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            unit_cell: UnitCellSource::default(),
            feed: FeedModel::NearField,
            tx: TxConfig::default(),
            rx: RxConfig::default(),
            frequency_ghz: 27.5,
            sweep_frequencies_ghz: (0..8).map(|n| 22.5 + n as f64).collect(),
            target: TargetConfig::default(),
            sweep_targets_theta_deg: (0..6).map(|n| 10.0 * n as f64).collect(),
            reference_phase: ReferencePhaseConfig::default(),
            optimizer_samples: 64,
            element_factor_q: 1.0,
            grid: GridConfig::default(),
            bitmap_override: None,
            band: BandConfig::default(),
            protocol: ProtocolConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn range(key: &'static str, ok: bool, reason: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range { key, reason: reason() })
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    range(key, v.is_finite() && v > 0.0, || format!("must be positive, got {v}"))
}

fn polar(key: &'static str, v: f64) -> Result<(), ConfigError> {
    range(key, v.is_finite() && (0.0..90.0).contains(&v), || format!("must lie in [0, 90), got {v}"))
}

fn finite(key: &'static str, v: f64) -> Result<(), ConfigError> {
    range(key, v.is_finite(), || format!("must be finite, got {v}"))
}

impl ScenarioConfig {
    /// Parses and validates config text. Blank text yields the defaults.
    /// Relative table paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ScenarioConfig = if text.trim().is_empty() {
            ScenarioConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?
        };
        if let UnitCellSource::Table { path } = &mut cfg.unit_cell {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        range("geometry.rows", g.rows > 0, || "must be at least 1".into())?;
        range("geometry.cols", g.cols > 0, || "must be at least 1".into())?;
        positive("geometry.pitch_mm", g.pitch_mm)?;
        positive("tx.distance_m", self.tx.distance_m)?;
        polar("tx.incidence_theta_deg", self.tx.incidence_theta_deg)?;
        finite("tx.azimuth_deg", self.tx.azimuth_deg)?;
        positive("rx.distance_m", self.rx.distance_m)?;
        polar("rx.theta_deg", self.rx.theta_deg)?;
        finite("rx.azimuth_deg", self.rx.azimuth_deg)?;
        // 2(q+1) with q >= 0
        let min_gain = 10.0 * 2f64.log10();
        for (key, gain) in [("tx.gain_dbi", self.tx.gain_dbi), ("rx.gain_dbi", self.rx.gain_dbi)] {
            range(key, gain.is_finite() && gain >= min_gain, || format!("must be at least {min_gain:.2} dBi, got {gain}"))?;
        }
        positive("frequency_ghz", self.frequency_ghz)?;
        range("sweep_frequencies_ghz", !self.sweep_frequencies_ghz.is_empty(), || "must not be empty".into())?;
        for &f in &self.sweep_frequencies_ghz {
            positive("sweep_frequencies_ghz", f)?;
        }
        polar("target.theta_deg", self.target.theta_deg)?;
        finite("target.phi_deg", self.target.phi_deg)?;
        range("sweep_targets_theta_deg", !self.sweep_targets_theta_deg.is_empty(), || "must not be empty".into())?;
        for &t in &self.sweep_targets_theta_deg {
            polar("sweep_targets_theta_deg", t)?;
        }
        if let ReferencePhaseConfig::Fixed(d) = self.reference_phase {
            finite("reference_phase", d)?;
        }
        range("optimizer_samples", self.optimizer_samples >= 2, || format!("must be at least 2, got {}", self.optimizer_samples))?;
        range("element_factor_q", self.element_factor_q.is_finite() && self.element_factor_q >= 0.0, || {
            format!("must be non-negative, got {}", self.element_factor_q)
        })?;
        GridSpec::new(self.grid.theta_step_deg, self.grid.phi_step_deg).map_err(|e| ConfigError::Range {
            key: "grid",
            reason: e.to_string(),
        })?;
        range("band.phase_tolerance_deg", self.band.phase_tolerance_deg.is_finite() && self.band.phase_tolerance_deg >= 0.0, || {
            format!("must be non-negative, got {}", self.band.phase_tolerance_deg)
        })?;
        finite("band.magnitude_floor_db", self.band.magnitude_floor_db)?;
        let p = &self.protocol;
        range("protocol.freq_min_ghz", p.freq_min_ghz.is_finite() && p.freq_min_ghz >= 0.0, || {
            format!("must be non-negative, got {}", p.freq_min_ghz)
        })?;
        range("protocol.freq_max_ghz", p.freq_max_ghz.is_finite() && p.freq_max_ghz > p.freq_min_ghz, || {
            format!("must exceed freq_min_ghz, got {}", p.freq_max_ghz)
        })?;
        if let UnitCellSource::Table { path } = &self.unit_cell {
            if !path.is_file() {
                return Err(ConfigError::MissingFile {
                    key: "unit_cell.path",
                    path: path.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<ArrayGeometry, ConfigError> {
        let g = &self.geometry;
        ArrayGeometry::new(g.rows, g.cols, g.pitch_mm * 1e-3).map_err(|e| ConfigError::Range {
            key: "geometry",
            reason: e.to_string(),
        })
    }

    pub fn frequency(&self) -> Result<FreqSpec, ConfigError> {
        FreqSpec::from_ghz(self.frequency_ghz).map_err(|e| ConfigError::Range {
            key: "frequency_ghz",
            reason: e.to_string(),
        })
    }

    pub fn target(&self) -> Result<SteeringTarget, ConfigError> {
        SteeringTarget::from_angles_deg(self.target.theta_deg, self.target.phi_deg).map_err(|e| ConfigError::Range {
            key: "target",
            reason: e.to_string(),
        })
    }

    pub fn unit_cell_model(&self) -> Result<UnitCellModel, ConfigError> {
        match &self.unit_cell {
            UnitCellSource::Ideal {} => Ok(UnitCellModel::ideal()),
            UnitCellSource::Builtin {} => Ok(UnitCellModel::builtin_table()),
            UnitCellSource::Table { path } => {
                let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                load_cell_table(&text).map_err(|e| ConfigError::Model {
                    key: "unit_cell.path",
                    reason: e.to_string(),
                })
            }
        }
    }

    pub fn protocol_limits(&self) -> ProtocolLimits {
        ProtocolLimits {
            freq_min_ghz: self.protocol.freq_min_ghz,
            freq_max_ghz: self.protocol.freq_max_ghz,
            ..ProtocolLimits::default()
        }
    }

    /// The physical scenario described by this config.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let horn = |key: &'static str, d: f64, th: f64, ph: f64, g: f64| {
            HornSpec::aimed_at_center(d, th, ph, g).map_err(|e| ConfigError::Range { key, reason: e.to_string() })
        };
        let reference = match self.reference_phase {
            ReferencePhaseConfig::Fixed(d) => ReferencePhase::Fixed(d),
            ReferencePhaseConfig::Keyword(OptimizeKeyword::Optimize) => ReferencePhase::Optimize {
                samples: self.optimizer_samples,
            },
        };
        Ok(Scenario {
            geometry: self.geometry()?,
            tx: horn("tx", self.tx.distance_m, self.tx.incidence_theta_deg, self.tx.azimuth_deg, self.tx.gain_dbi)?,
            rx: horn("rx", self.rx.distance_m, self.rx.theta_deg, self.rx.azimuth_deg, self.rx.gain_dbi)?,
            feed: self.feed,
            model: self.unit_cell_model()?,
            element: ElementFactor::new(self.element_factor_q).map_err(|e| ConfigError::Range {
                key: "element_factor_q",
                reason: e.to_string(),
            })?,
            grid: GridSpec::new(self.grid.theta_step_deg, self.grid.phi_step_deg).map_err(|e| ConfigError::Range {
                key: "grid",
                reason: e.to_string(),
            })?,
            reference,
        })
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    ScenarioConfig::from_json(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::from_json(text, Path::new("."))
    }

    #[test]
    fn blank_text_is_the_default_scenario() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(parse("{}").unwrap(), cfg);
        let s = cfg.scenario().unwrap();
        assert_eq!(s.geometry, ArrayGeometry::reference());
        assert!((s.tx.position.norm() - 0.2).abs() < 1e-12);
        assert!((s.tx.position.theta_deg() - 30.0).abs() < 1e-9);
        assert!((s.rx.position.norm() - 0.3).abs() < 1e-12);
        assert_eq!(cfg.sweep_frequencies_ghz, vec![22.5, 23.5, 24.5, 25.5, 26.5, 27.5, 28.5, 29.5]);
        assert_eq!(cfg.sweep_targets_theta_deg, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn negative_pitch_names_the_key() {
        let err = parse(r#"{"geometry": {"pitch_mm": -1}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Range { key: "geometry.pitch_mm", .. }));
        assert!(err.to_string().contains("pitch_mm"));
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [r#"{"pitch": 1}"#, r#"{"geometry": {"pitch": 1}}"#, r#"{"unit_cell": {"source": "ideal", "x": 1}}"#] {
            let err = parse(text).unwrap_err();
            assert!(matches!(err, ConfigError::Schema(_)), "{text}: {err}");
        }
    }

    #[test]
    fn reference_phase_forms() {
        let cfg = parse(r#"{"reference_phase": "optimize"}"#).unwrap();
        assert_eq!(cfg.reference_phase, ReferencePhaseConfig::Keyword(OptimizeKeyword::Optimize));
        assert!(matches!(cfg.scenario().unwrap().reference, ReferencePhase::Optimize { samples: 64 }));
        let cfg = parse(r#"{"reference_phase": 45.5}"#).unwrap();
        assert_eq!(cfg.reference_phase, ReferencePhaseConfig::Fixed(45.5));
        assert!(parse(r#"{"reference_phase": "best"}"#).is_err());
    }

    #[test]
    fn missing_table_file() {
        let err = parse(r#"{"unit_cell": {"source": "table", "path": "/nonexistent/cells.csv"}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::MissingFile { .. }));
    }

    #[test]
    fn range_violations() {
        for (text, key) in [
            (r#"{"geometry": {"rows": 0}}"#, "geometry.rows"),
            (r#"{"tx": {"incidence_theta_deg": 90}}"#, "tx.incidence_theta_deg"),
            (r#"{"tx": {"gain_dbi": 1}}"#, "tx.gain_dbi"),
            (r#"{"sweep_frequencies_ghz": []}"#, "sweep_frequencies_ghz"),
            (r#"{"grid": {"theta_step_deg": 0.7}}"#, "grid"),
            (r#"{"optimizer_samples": 1}"#, "optimizer_samples"),
        ] {
            match parse(text) {
                Err(ConfigError::Range { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn serialized_config_reloads_identically() {
        let cfg = parse(
            r#"{"geometry": {"rows": 8, "cols": 16, "pitch_mm": 5.1},
                "feed": "far_field", "reference_phase": 12.25,
                "bitmap_override": "all_on", "unit_cell": {"source": "builtin"},
                "sweep_frequencies_ghz": [24.1, 0.1]}"#,
        )
        .unwrap();
        assert_eq!(parse(&cfg.to_json()).unwrap(), cfg);
    }
}

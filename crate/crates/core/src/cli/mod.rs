//! The `ristool` command line: configuration loading, subcommand dispatch
//! and artifact export.
//!
//! Every subcommand reads one [`ScenarioConfig`] and writes its artifacts
//! into a single output directory. File names depend only on the config, so
//! two runs with the same config overwrite each other byte for byte.

pub mod artifacts;
pub mod config;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use crate::control::{encode_command, pack_frame, parse_command, FrameError};
use crate::geometry::FreqSpec;
use crate::pattern::{amplitude_db, PatternError, PatternMetrics};
use crate::synthesis::BitMap;
use crate::unitcell::{CellState, UnitCellModel};

pub use artifacts::{config_hash, ArtifactWriter};
pub use config::{load_config, ConfigError, ScenarioConfig, UnitCellSource};

#[derive(Debug, Parser)]
#[command(name = "ristool", version, about = "One-bit reflecting surface synthesis and prediction")]
pub struct Cli {
    /// Scenario config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress the list of written artifacts.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Hemispherical pattern and metrics at the configured frequency and target.
    Pattern,
    /// Per-frequency synthesis over `sweep_frequencies_ghz`.
    SweepFreq,
    /// Per-target synthesis over `sweep_targets_theta_deg`.
    SweepAngle,
    /// Configured versus all-OFF transmission at each sweep frequency.
    Contrast,
    /// Operating band of the unit-cell table.
    Band,
    /// Register frames for each sweep target.
    Codebook,
    /// Validates serial command lines from a file (`-` reads stdin).
    ProtocolCheck { input: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pattern => "pattern",
            Command::SweepFreq => "sweep-freq",
            Command::SweepAngle => "sweep-angle",
            Command::Contrast => "contrast",
            Command::Band => "band",
            Command::Codebook => "codebook",
            Command::ProtocolCheck { .. } => "protocol-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] PatternError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("{failed} of {total} entries failed; see {artifact}")]
    Partial { failed: usize, total: usize, artifact: PathBuf },
    #[error("no operating band at tolerance {tolerance_deg} deg and floor {floor_db} dB")]
    NoBand { tolerance_deg: f64, floor_db: f64 },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(e) => e.code(),
            CliError::Io { .. } => "io",
            CliError::Model(_) => "model",
            CliError::Frame(_) => "frame",
            CliError::Partial { .. } => "partial_failure",
            CliError::NoBand { .. } => "no_band",
        }
    }

    /// One line: `error code=<code> message=<JSON string>`.
    pub fn machine_line(&self) -> String {
        format!("error code={} message={}", self.code(), Value::String(self.to_string()))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Artifacts produced by a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
}

/// Resolves the config from the global flags.
pub fn resolve_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let cfg = resolve_config(cli)?;
    dispatch(&cli.command, &cfg)
}

/// Runs one subcommand. Artifacts already written when an entry fails stay
/// on disk and are listed in the error's artifact.
pub fn dispatch(command: &Command, cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let dir = cfg.output_dir.clone();
    let mut out = ArtifactWriter::new(&dir, cfg).map_err(io_err(&dir))?;
    match command {
        Command::Pattern => pattern(cfg, &mut out)?,
        Command::SweepFreq => sweep_freq(cfg, &mut out)?,
        Command::SweepAngle => sweep_angle(cfg, &mut out)?,
        Command::Contrast => contrast(cfg, &mut out)?,
        Command::Band => band(cfg, &mut out)?,
        Command::Codebook => codebook(cfg, &mut out)?,
        Command::ProtocolCheck { input } => protocol_check(cfg, input, &mut out)?,
    }
    Ok(RunReport {
        written: out.written().to_vec(),
    })
}

fn write_text(out: &mut ArtifactWriter, name: &str, body: &str) -> Result<PathBuf, CliError> {
    let path = PathBuf::from(name);
    out.write_text(name, body).map_err(io_err(&path))
}

fn write_json(out: &mut ArtifactWriter, name: &str, body: Value) -> Result<PathBuf, CliError> {
    let path = PathBuf::from(name);
    out.write_json(name, body).map_err(io_err(&path))
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn metrics_json(m: &PatternMetrics) -> Value {
    serde_json::to_value(m).expect("metrics serialize")
}

fn freq_of(ghz: f64) -> Result<FreqSpec, CliError> {
    FreqSpec::from_ghz(ghz).map_err(|e| CliError::Model(e.into()))
}

fn pattern(cfg: &ScenarioConfig, out: &mut ArtifactWriter) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let freq = cfg.frequency()?;
    let target = cfg.target()?;
    let ev = match cfg.bitmap_override {
        Some(o) => scenario.evaluate_fixed(freq, o.bitmap(cfg.geometry.rows, cfg.geometry.cols))?,
        None => scenario.evaluate(freq, &target)?,
    };
    let s21 = scenario.s21(freq, &ev.gammas, &scenario.rx)?;
    write_text(out, "pattern.csv", &ev.pattern.to_csv())?;
    write_text(out, "bitmap.txt", &ev.bitmap.to_text())?;
    let mut body = metrics_json(&ev.metrics);
    let extra = json!({
        "frequency_ghz": freq.ghz(),
        "target_theta_deg": cfg.target.theta_deg,
        "target_phi_deg": cfg.target.phi_deg,
        "reference_phase_deg": ev.reference_deg,
        "bitmap_override": cfg.bitmap_override,
        "s21_db": amplitude_db(s21),
        "normalization": ev.pattern.normalization_check(),
    });
    body.as_object_mut().expect("object").extend(extra.as_object().expect("object").clone());
    write_json(out, "metrics.json", body)?;
    Ok(())
}

const METRIC_COLUMNS: &str = "peak_theta_deg,peak_phi_deg,peak_dbi,peak_gain_dbi,sll_db,hpbw_theta_deg,hpbw_phi_deg";

fn metric_cells(m: &PatternMetrics) -> String {
    [
        num(m.peak_theta_deg),
        num(m.peak_phi_deg),
        num(m.peak_dbi),
        num(m.peak_gain_dbi),
        opt_num(m.sll_db),
        num(m.hpbw_theta_deg),
        num(m.hpbw_phi_deg),
    ]
    .join(",")
}

const EMPTY_METRICS: &str = ",,,,,,";

fn sweep_freq(cfg: &ScenarioConfig, out: &mut ArtifactWriter) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let target = cfg.target()?;
    let mut csv = format!("freq_ghz,status,reference_phase_deg,{METRIC_COLUMNS},s21_db,bitmap_file,error\n");
    let mut failed = 0;
    for &ghz in &cfg.sweep_frequencies_ghz {
        let row = freq_of(ghz).and_then(|freq| {
            let ev = match cfg.bitmap_override {
                Some(o) => scenario.evaluate_fixed(freq, o.bitmap(cfg.geometry.rows, cfg.geometry.cols))?,
                None => scenario.evaluate(freq, &target)?,
            };
            let s21 = scenario.s21(freq, &ev.gammas, &scenario.rx)?;
            Ok((ev.reference_deg, ev.bitmap, ev.metrics, s21))
        });
        match row {
            Ok((reference, bitmap, m, s21)) => {
                let file = format!("bitmap_{ghz:.2}ghz.txt");
                write_text(out, &file, &bitmap.to_text())?;
                csv.push_str(&format!(
                    "{},ok,{},{},{},{},\n",
                    num(ghz),
                    num(reference),
                    metric_cells(&m),
                    num(amplitude_db(s21)),
                    file
                ));
            }
            Err(e) => {
                failed += 1;
                csv.push_str(&format!("{},error,,{EMPTY_METRICS},,,{}\n", num(ghz), csv_quote(&e.to_string())));
            }
        }
    }
    let path = write_text(out, "sweep_freq.csv", &csv)?;
    partial(failed, cfg.sweep_frequencies_ghz.len(), path)
}

fn partial(failed: usize, total: usize, artifact: PathBuf) -> Result<(), CliError> {
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Partial { failed, total, artifact })
    }
}

fn theta_tag(theta: f64) -> String {
    format!("theta{theta:.1}")
}

fn sweep_angle(cfg: &ScenarioConfig, out: &mut ArtifactWriter) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let freq = cfg.frequency()?;
    let rows = scenario.steering_sweep(freq.hz(), &cfg.sweep_targets_theta_deg, cfg.target.phi_deg);
    let mut csv = format!(
        "target_theta_deg,target_phi_deg,status,reference_phase_deg,pointing_error_deg,{METRIC_COLUMNS},s21_db,bitmap_file,error\n"
    );
    let mut failed = 0;
    for (&theta, row) in cfg.sweep_targets_theta_deg.iter().zip(rows) {
        match row {
            Ok(r) => {
                let file = format!("bitmap_{}.txt", theta_tag(theta));
                write_text(out, &file, &r.bitmap.to_text())?;
                csv.push_str(&format!(
                    "{},{},ok,{},{},{},{},{},\n",
                    num(theta),
                    num(r.target_phi_deg),
                    num(r.reference_deg),
                    num(r.pointing_error_deg),
                    metric_cells(&r.metrics),
                    num(amplitude_db(r.s21)),
                    file
                ));
            }
            Err(e) => {
                failed += 1;
                csv.push_str(&format!(
                    "{},{},error,,,{EMPTY_METRICS},,,{}\n",
                    num(theta),
                    num(cfg.target.phi_deg),
                    csv_quote(&e.to_string())
                ));
            }
        }
    }
    let path = write_text(out, "sweep_angle.csv", &csv)?;
    partial(failed, cfg.sweep_targets_theta_deg.len(), path)
}

fn contrast(cfg: &ScenarioConfig, out: &mut ArtifactWriter) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let target = cfg.target()?;
    let off = BitMap::filled(cfg.geometry.rows, cfg.geometry.cols, CellState::Off);
    let mut csv = String::from("freq_ghz,status,reference_phase_deg,s21_configured_db,s21_all_off_db,contrast_db,bitmap_file,error\n");
    let mut contrasts = Vec::new();
    let mut failed = 0;
    for &ghz in &cfg.sweep_frequencies_ghz {
        let row = freq_of(ghz).and_then(|freq| {
            let (reference, bitmap) = scenario.synthesize(freq, &target)?;
            let on = scenario.s21(freq, &scenario.gammas(freq, &bitmap)?, &scenario.rx)?;
            let base = scenario.s21(freq, &scenario.gammas(freq, &off)?, &scenario.rx)?;
            Ok((reference, bitmap, amplitude_db(on), amplitude_db(base)))
        });
        match row {
            Ok((reference, bitmap, on_db, off_db)) => {
                let file = format!("bitmap_{ghz:.2}ghz.txt");
                write_text(out, &file, &bitmap.to_text())?;
                contrasts.push(on_db - off_db);
                csv.push_str(&format!(
                    "{},ok,{},{},{},{},{},\n",
                    num(ghz),
                    num(reference),
                    num(on_db),
                    num(off_db),
                    num(on_db - off_db),
                    file
                ));
            }
            Err(e) => {
                failed += 1;
                csv.push_str(&format!("{},error,,,,,,{}\n", num(ghz), csv_quote(&e.to_string())));
            }
        }
    }
    let path = write_text(out, "contrast.csv", &csv)?;
    let n = contrasts.len();
    let summary = if n == 0 {
        json!({ "entries": 0 })
    } else {
        json!({
            "entries": n,
            "mean_contrast_db": contrasts.iter().sum::<f64>() / n as f64,
            "min_contrast_db": contrasts.iter().cloned().fold(f64::INFINITY, f64::min),
            "max_contrast_db": contrasts.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    };
    write_json(out, "contrast.json", summary)?;
    partial(failed, cfg.sweep_frequencies_ghz.len(), path)
}

fn band(cfg: &ScenarioConfig, out: &mut ArtifactWriter) -> Result<(), CliError> {
    // an ideal cell has no band edges, so the bundled table stands in
    let (model, source) = match &cfg.unit_cell {
        UnitCellSource::Ideal {} | UnitCellSource::Builtin {} => (UnitCellModel::builtin_table(), json!("builtin")),
        UnitCellSource::Table { path } => (cfg.unit_cell_model()?, json!(path)),
    };
    let tol = cfg.band.phase_tolerance_deg;
    let floor = cfg.band.magnitude_floor_db;
    let found = model.operating_band(tol, floor).map_err(|e| CliError::Model(e.into()))?;
    let mut body = json!({
        "source": source,
        "phase_tolerance_deg": tol,
        "magnitude_floor_db": floor,
        "f_low_ghz": null,
        "f_high_ghz": null,
        "fractional": null,
    });
    if let Some(b) = found {
        body["f_low_ghz"] = json!(b.f_low_hz / 1e9);
        body["f_high_ghz"] = json!(b.f_high_hz / 1e9);
        body["fractional"] = json!(b.fractional);
    }
    write_json(out, "band.json", body)?;
    match found {
        Some(_) => Ok(()),
        None => Err(CliError::NoBand {
            tolerance_deg: tol,
            floor_db: floor,
        }),
    }
}

fn codebook(cfg: &ScenarioConfig, out: &mut ArtifactWriter) -> Result<(), CliError> {
    let (rows, cols) = (cfg.geometry.rows, cfg.geometry.cols);
    if let Some(o) = cfg.bitmap_override {
        let frame = pack_frame(&o.bitmap(rows, cols))?;
        write_text(out, "frame.hex", &frame.to_file_text())?;
        return Ok(());
    }
    let scenario = cfg.scenario()?;
    let freq = cfg.frequency()?;
    let limits = cfg.protocol_limits();
    let mut csv = String::from("target_theta_deg,target_phi_deg,reference_phase_deg,on_count,frame_file,set_command\n");
    for &theta in &cfg.sweep_targets_theta_deg {
        let target = crate::synthesis::SteeringTarget::from_angles_deg(theta, cfg.target.phi_deg).map_err(PatternError::from)?;
        let (reference, bitmap) = scenario.synthesize(freq, &target)?;
        let frame = pack_frame(&bitmap)?;
        let file = format!("frame_{}.hex", theta_tag(theta));
        write_text(out, &file, &frame.to_file_text())?;
        // SET lines only exist for the register chain's frame size
        let set = if frame.len() == limits.frame_bytes {
            encode_command(&crate::control::Command::SetFrame(frame), &limits)
                .map(|l| l.trim_end().to_string())
                .unwrap_or_default()
        } else {
            String::new()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(theta),
            num(cfg.target.phi_deg),
            num(reference),
            bitmap.count_on(),
            file,
            set
        ));
    }
    write_text(out, "codebook.csv", &csv)?;
    Ok(())
}

fn protocol_check(cfg: &ScenarioConfig, input: &Path, out: &mut ArtifactWriter) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    if input == Path::new("-") {
        std::io::stdin().read_to_end(&mut bytes).map_err(io_err(input))?;
    } else {
        bytes = fs::read(input).map_err(io_err(input))?;
    }
    let limits = cfg.protocol_limits();
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if bytes.ends_with(b"\n") {
        lines.pop();
    }
    let mut csv = String::from("line,status,kind,offset,canonical,message\n");
    let mut invalid = 0;
    for (n, line) in lines.iter().enumerate() {
        match parse_command(line, &limits) {
            Ok(cmd) => {
                let canonical = encode_command(&cmd, &limits).map(|l| l.trim_end().to_string()).unwrap_or_default();
                csv.push_str(&format!("{},ok,,,{},\n", n + 1, canonical));
            }
            Err(e) => {
                invalid += 1;
                let offset = e.offset().map(|o| o.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},error,{},{},,{}\n", n + 1, e.kind(), offset, csv_quote(&e.to_string())));
            }
        }
    }
    let path = write_text(out, "protocol_check.csv", &csv)?;
    write_json(
        out,
        "protocol_check.json",
        json!({ "lines": lines.len(), "valid": lines.len() - invalid, "invalid": invalid }),
    )?;
    partial(invalid, lines.len(), path)
}

/// Binary entry point: runs the parsed command line and returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    match run(&cli) {
        Ok(report) => {
            if !cli.quiet {
                for p in &report.written {
                    println!("wrote {}", p.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.machine_line());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_is_single_line() {
        let e = CliError::Io {
            path: PathBuf::from("a\nb"),
            reason: "bad \"x\"".into(),
        };
        let line = e.machine_line();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("error code=io message=\""));
    }

    #[test]
    fn command_names() {
        assert_eq!(Command::SweepFreq.name(), "sweep-freq");
        assert_eq!(Command::ProtocolCheck { input: "-".into() }.name(), "protocol-check");
    }
}

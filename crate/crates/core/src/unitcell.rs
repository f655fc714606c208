//! One-bit unit-cell reflection response.
//!
//! A cell is either an idealized two-phase reflector or a tabulated response
//! loaded from CSV (`freq_ghz,state,incidence_deg,mag_db,phase_deg`).
//! Tables are interpolated bilinearly in frequency and incidence angle, on
//! magnitude in dB and on phase unwrapped along each `(state, angle)` series.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::wrap_deg;

pub const CELL_TABLE_HEADER: &str = "freq_ghz,state,incidence_deg,mag_db,phase_deg";

/// Digitized approximation of the wideband cell response, shipped with the crate.
pub const DEFAULT_CELL_TABLE: &str = include_str!("../data/unit_cell_default.csv");

/// Switch state of a cell. `On` means the PIN switch conducts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellState {
    On,
    Off,
}

impl CellState {
    pub fn is_on(self) -> bool {
        matches!(self, CellState::On)
    }

    pub fn flipped(self) -> Self {
        match self {
            CellState::On => CellState::Off,
            CellState::Off => CellState::On,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            CellState::On => "ON",
            CellState::Off => "OFF",
        }
    }
}

impl fmt::Display for CellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for CellState {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "ON" => Ok(CellState::On),
            "OFF" => Ok(CellState::Off),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("frequency {freq_ghz} GHz outside table span [{min_ghz}, {max_ghz}] GHz")]
    OutOfRange {
        freq_ghz: f64,
        min_ghz: f64,
        max_ghz: f64,
    },
    #[error("incidence angle {0} deg outside [0, 60]")]
    BadIncidence(f64),
    #[error("bad header: expected `{CELL_TABLE_HEADER}`, found `{found}`")]
    Header { found: String },
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("line {line}: unknown state token `{token}` (expected ON or OFF)")]
    UnknownState { line: usize, token: String },
    #[error("line {line}: duplicate sample for {freq_ghz} GHz, state {state}, incidence {incidence}")]
    Duplicate {
        line: usize,
        freq_ghz: f64,
        state: CellState,
        incidence: String,
    },
    #[error("table has no samples for state {0}")]
    MissingState(CellState),
    #[error("ideal cell magnitudes must lie in (0, 1]")]
    BadMagnitude,
    #[error("operation needs a tabulated cell model")]
    NotTabulated,
}

/// One row of a cell table. `incidence_deg = None` marks an angle-independent sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSample {
    pub freq_ghz: f64,
    pub state: CellState,
    pub incidence_deg: Option<f64>,
    pub mag_db: f64,
    pub phase_deg: f64,
}

impl CellSample {
    fn angle_key(&self) -> f64 {
        self.incidence_deg.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealCell {
    pub magnitude_on: f64,
    pub magnitude_off: f64,
    /// ON-state reference phase; OFF is offset by exactly 180°.
    pub phase_on_deg: f64,
}

impl Default for IdealCell {
    fn default() -> Self {
        Self {
            magnitude_on: 1.0,
            magnitude_off: 1.0,
            phase_on_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Series {
    angle_deg: f64,
    angle_free: bool,
    freqs_ghz: Vec<f64>,
    mag_db: Vec<f64>,
    phase_unwrapped: Vec<f64>,
}

impl Series {
    fn span(&self) -> (f64, f64) {
        (self.freqs_ghz[0], *self.freqs_ghz.last().unwrap())
    }

    fn contains(&self, f_ghz: f64) -> bool {
        let (lo, hi) = self.span();
        f_ghz >= lo && f_ghz <= hi
    }

    /// (mag dB, unwrapped phase deg) at `f_ghz`, which must be inside the span.
    fn at(&self, f_ghz: f64) -> (f64, f64) {
        let fs = &self.freqs_ghz;
        let hi = fs.partition_point(|&x| x < f_ghz);
        if hi < fs.len() && fs[hi] == f_ghz {
            return (self.mag_db[hi], self.phase_unwrapped[hi]);
        }
        let lo = hi - 1;
        let t = (f_ghz - fs[lo]) / (fs[hi] - fs[lo]);
        (
            lerp(self.mag_db[lo], self.mag_db[hi], t),
            lerp(self.phase_unwrapped[lo], self.phase_unwrapped[hi], t),
        )
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Unwraps a phase sequence in degrees so consecutive samples differ by at most 180°.
pub fn unwrap_deg(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (n, &p) in phases.iter().enumerate() {
        if n > 0 {
            let prev = phases[n - 1];
            let jump = p - prev;
            offset -= 360.0 * (jump / 360.0).round();
        }
        out.push(p + offset);
    }
    out
}

/// Tabulated cell response.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    samples: Vec<CellSample>,
    on: Vec<Series>,
    off: Vec<Series>,
}

impl CellTable {
    pub fn from_samples(mut samples: Vec<CellSample>) -> Result<Self, CellError> {
        samples.sort_by(|a, b| {
            a.state
                .cmp(&b.state)
                .then(a.angle_key().total_cmp(&b.angle_key()))
                .then(a.freq_ghz.total_cmp(&b.freq_ghz))
        });
        for w in samples.windows(2) {
            if w[0].state == w[1].state
                && w[0].angle_key() == w[1].angle_key()
                && w[0].freq_ghz == w[1].freq_ghz
            {
                return Err(CellError::Duplicate {
                    line: 0,
                    freq_ghz: w[1].freq_ghz,
                    state: w[1].state,
                    incidence: fmt_angle(w[1].incidence_deg),
                });
            }
        }
        let on = build_series(&samples, CellState::On)?;
        let off = build_series(&samples, CellState::Off)?;
        Ok(Self { samples, on, off })
    }

    pub fn samples(&self) -> &[CellSample] {
        &self.samples
    }

    fn series(&self, state: CellState) -> &[Series] {
        match state {
            CellState::On => &self.on,
            CellState::Off => &self.off,
        }
    }

    /// Frequency span (GHz) over which both states are defined at every tabulated angle.
    pub fn span_ghz(&self) -> (f64, f64) {
        let mut lo = f64::MIN;
        let mut hi = f64::MAX;
        for s in self.on.iter().chain(self.off.iter()) {
            let (a, b) = s.span();
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    }

    fn lookup(&self, state: CellState, f_ghz: f64, incidence_deg: f64) -> Result<(f64, f64, bool), CellError> {
        let series = self.series(state);
        let check = |s: &Series| {
            if s.contains(f_ghz) {
                Ok(())
            } else {
                let (min_ghz, max_ghz) = s.span();
                Err(CellError::OutOfRange {
                    freq_ghz: f_ghz,
                    min_ghz,
                    max_ghz,
                })
            }
        };
        if series.len() == 1 {
            let s = &series[0];
            check(s)?;
            let (m, p) = s.at(f_ghz);
            let clamped = !s.angle_free && incidence_deg != s.angle_deg;
            return Ok((m, p, clamped));
        }
        let first = &series[0];
        let last = series.last().unwrap();
        if incidence_deg <= first.angle_deg || incidence_deg >= last.angle_deg {
            let s = if incidence_deg <= first.angle_deg { first } else { last };
            check(s)?;
            let (m, p) = s.at(f_ghz);
            return Ok((m, p, incidence_deg != s.angle_deg));
        }
        let hi = series.partition_point(|s| s.angle_deg < incidence_deg);
        let (a, b) = (&series[hi - 1], &series[hi]);
        check(a)?;
        check(b)?;
        let (ma, pa) = a.at(f_ghz);
        let (mb, pb) = b.at(f_ghz);
        // align the second series onto the branch of the first
        let pb = pa + (pb - pa + 180.0).rem_euclid(360.0) - 180.0;
        let t = (incidence_deg - a.angle_deg) / (b.angle_deg - a.angle_deg);
        Ok((lerp(ma, mb, t), lerp(pa, pb, t), false))
    }

    /// Serializes the table back to the CSV interchange format.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CELL_TABLE_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.freq_ghz,
                s.state,
                s.incidence_deg.map(|a| a.to_string()).unwrap_or_default(),
                s.mag_db,
                s.phase_deg
            ));
        }
        out
    }
}

fn fmt_angle(a: Option<f64>) -> String {
    a.map(|v| format!("{v} deg")).unwrap_or_else(|| "unspecified".into())
}

fn build_series(samples: &[CellSample], state: CellState) -> Result<Vec<Series>, CellError> {
    let mut out: Vec<Series> = Vec::new();
    let mut free_flags: Vec<bool> = Vec::new();
    for s in samples.iter().filter(|s| s.state == state) {
        let key = s.angle_key();
        match out.last_mut() {
            Some(series) if series.angle_deg == key => {
                series.freqs_ghz.push(s.freq_ghz);
                series.mag_db.push(s.mag_db);
                series.phase_unwrapped.push(s.phase_deg);
                if s.incidence_deg.is_some() {
                    *free_flags.last_mut().unwrap() = false;
                }
            }
            _ => {
                out.push(Series {
                    angle_deg: key,
                    angle_free: false,
                    freqs_ghz: vec![s.freq_ghz],
                    mag_db: vec![s.mag_db],
                    phase_unwrapped: vec![s.phase_deg],
                });
                free_flags.push(s.incidence_deg.is_none());
            }
        }
    }
    if out.is_empty() {
        return Err(CellError::MissingState(state));
    }
    let single = out.len() == 1;
    for (series, free) in out.iter_mut().zip(free_flags) {
        series.phase_unwrapped = unwrap_deg(&series.phase_unwrapped);
        series.angle_free = free && single;
    }
    Ok(out)
}

/// Result of a reflection query. `angle_clamped` is set when the incidence
/// angle fell outside the tabulated angles and the nearest series was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub gamma: Complex64,
    pub angle_clamped: bool,
}

/// Contiguous frequency interval satisfying the one-bit operating criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    /// `2 (f_high - f_low) / (f_high + f_low)`.
    pub fractional: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitCellModel {
    Ideal(IdealCell),
    Table(CellTable),
}

impl UnitCellModel {
    pub fn ideal() -> Self {
        UnitCellModel::Ideal(IdealCell::default())
    }

    pub fn ideal_with(cell: IdealCell) -> Result<Self, CellError> {
        let ok = |m: f64| m > 0.0 && m <= 1.0;
        if !ok(cell.magnitude_on) || !ok(cell.magnitude_off) {
            return Err(CellError::BadMagnitude);
        }
        Ok(UnitCellModel::Ideal(cell))
    }

    /// The shipped digitized table.
    pub fn builtin_table() -> Self {
        load_cell_table(DEFAULT_CELL_TABLE).expect("shipped cell table is valid")
    }

    pub fn table(&self) -> Option<&CellTable> {
        match self {
            UnitCellModel::Table(t) => Some(t),
            UnitCellModel::Ideal(_) => None,
        }
    }

    /// Complex reflection coefficient for `state` at `frequency_hz` and
    /// incidence angle `incidence_deg` (0..=60).
    pub fn reflection(&self, state: CellState, frequency_hz: f64, incidence_deg: f64) -> Result<Reflection, CellError> {
        if !(0.0..=60.0).contains(&incidence_deg) {
            return Err(CellError::BadIncidence(incidence_deg));
        }
        match self {
            UnitCellModel::Ideal(c) => {
                let (mag, ph) = match state {
                    CellState::On => (c.magnitude_on, c.phase_on_deg),
                    CellState::Off => (c.magnitude_off, c.phase_on_deg + 180.0),
                };
                Ok(Reflection {
                    gamma: Complex64::from_polar(mag, ph.to_radians()),
                    angle_clamped: false,
                })
            }
            UnitCellModel::Table(t) => {
                let (mag_db, phase, angle_clamped) = t.lookup(state, frequency_hz / 1e9, incidence_deg)?;
                let mag = 10f64.powf(mag_db / 20.0).min(1.0);
                Ok(Reflection {
                    gamma: Complex64::from_polar(mag, wrap_deg(phase).to_radians()),
                    angle_clamped,
                })
            }
        }
    }

    /// `(φ_on, φ_off)` at normal incidence, each wrapped to `[0, 360)`.
    pub fn phase_states(&self, frequency_hz: f64) -> Result<(f64, f64), CellError> {
        match self {
            UnitCellModel::Ideal(c) => Ok((wrap_deg(c.phase_on_deg), wrap_deg(c.phase_on_deg + 180.0))),
            UnitCellModel::Table(t) => {
                let f = frequency_hz / 1e9;
                let (_, on, _) = t.lookup(CellState::On, f, 0.0)?;
                let (_, off, _) = t.lookup(CellState::Off, f, 0.0)?;
                Ok((wrap_deg(on), wrap_deg(off)))
            }
        }
    }

    /// Widest contiguous band where the ON/OFF phase difference stays within
    /// `180 ± phase_tolerance_deg` and both magnitudes are at or above
    /// `magnitude_floor_db`, evaluated at normal incidence. `Ok(None)` when no
    /// frequency qualifies.
    pub fn operating_band(&self, phase_tolerance_deg: f64, magnitude_floor_db: f64) -> Result<Option<Band>, CellError> {
        let table = self.table().ok_or(CellError::NotTabulated)?;
        let (lo, hi) = table.span_ghz();
        if lo > hi {
            return Ok(None);
        }
        let ok = |f_ghz: f64| -> bool {
            let on = table.lookup(CellState::On, f_ghz, 0.0);
            let off = table.lookup(CellState::Off, f_ghz, 0.0);
            match (on, off) {
                (Ok((m_on, p_on, _)), Ok((m_off, p_off, _))) => {
                    let diff = wrap_deg(p_off - p_on);
                    (diff - 180.0).abs() <= phase_tolerance_deg && m_on >= magnitude_floor_db && m_off >= magnitude_floor_db
                }
                _ => false,
            }
        };

        let mut grid: Vec<f64> = table
            .samples()
            .iter()
            .map(|s| s.freq_ghz)
            .filter(|f| *f >= lo && *f <= hi)
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let flags: Vec<bool> = grid.iter().map(|&f| ok(f)).collect();
        let mut best: Option<(f64, f64)> = None;
        let mut n = 0;
        while n < grid.len() {
            if !flags[n] {
                n += 1;
                continue;
            }
            let start = n;
            while n + 1 < grid.len() && flags[n + 1] {
                n += 1;
            }
            let end = n;
            let f_low = if start == 0 {
                grid[0]
            } else {
                refine_edge(&ok, grid[start - 1], grid[start])
            };
            let f_high = if end + 1 == grid.len() {
                grid[end]
            } else {
                refine_edge(&ok, grid[end + 1], grid[end])
            };
            if best.is_none_or(|(a, b)| f_high - f_low > b - a) {
                best = Some((f_low, f_high));
            }
            n += 1;
        }
        Ok(best.map(|(a, b)| Band {
            f_low_hz: a * 1e9,
            f_high_hz: b * 1e9,
            fractional: 2.0 * (b - a) / (b + a),
        }))
    }
}

/// Bisects between a failing frequency and a passing one; returns the passing side.
fn refine_edge(ok: &impl Fn(f64) -> bool, mut bad: f64, mut good: f64) -> f64 {
    for _ in 0..64 {
        let mid = 0.5 * (bad + good);
        if mid == bad || mid == good {
            break;
        }
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Parses the cell table CSV. Lines starting with `#` and blank lines are skipped;
/// the first remaining line must be the exact header.
pub fn load_cell_table(csv_text: &str) -> Result<UnitCellModel, CellError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut header_seen = false;
    let mut samples = Vec::new();
    let mut lines_of = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CellError::Row {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<&str> = record.iter().collect();
        if !header_seen {
            let found = fields.join(",");
            if found != CELL_TABLE_HEADER {
                return Err(CellError::Header { found });
            }
            header_seen = true;
            continue;
        }
        if fields.len() != 5 {
            return Err(CellError::Row {
                line: line_no,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64, CellError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CellError::Row {
                    line: line_no,
                    reason: format!("invalid {what} `{s}`"),
                })
        };
        let freq_ghz = num(fields[0], "freq_ghz")?;
        if freq_ghz <= 0.0 {
            return Err(CellError::Row {
                line: line_no,
                reason: format!("freq_ghz must be positive, found {freq_ghz}"),
            });
        }
        let state: CellState = fields[1].parse().map_err(|_| CellError::UnknownState {
            line: line_no,
            token: fields[1].to_string(),
        })?;
        let incidence_deg = if fields[2].is_empty() {
            None
        } else {
            let a = num(fields[2], "incidence_deg")?;
            if !(0.0..=90.0).contains(&a) {
                return Err(CellError::Row {
                    line: line_no,
                    reason: format!("incidence_deg {a} outside [0, 90]"),
                });
            }
            Some(a)
        };
        let mag_db = num(fields[3], "mag_db")?;
        if mag_db > 0.0 {
            return Err(CellError::Row {
                line: line_no,
                reason: format!("mag_db {mag_db} exceeds 0 dB (passive cell)"),
            });
        }
        let phase_deg = num(fields[4], "phase_deg")?;
        samples.push(CellSample {
            freq_ghz,
            state,
            incidence_deg,
            mag_db,
            phase_deg,
        });
        lines_of.push(line_no);
    }
    if !header_seen {
        return Err(CellError::Header { found: String::new() });
    }

    // report duplicates against the original line numbers
    let mut keyed: Vec<(usize, &CellSample)> = lines_of.iter().copied().zip(samples.iter()).collect();
    keyed.sort_by(|(la, a), (lb, b)| {
        a.state
            .cmp(&b.state)
            .then(a.angle_key().total_cmp(&b.angle_key()))
            .then(a.freq_ghz.total_cmp(&b.freq_ghz))
            .then(la.cmp(lb))
    });
    for w in keyed.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if a.state == b.state && a.angle_key() == b.angle_key() && a.freq_ghz == b.freq_ghz {
            return Err(CellError::Duplicate {
                line: w[1].0,
                freq_ghz: b.freq_ghz,
                state: b.state,
                incidence: fmt_angle(b.incidence_deg),
            });
        }
    }
    CellTable::from_samples(samples).map(UnitCellModel::Table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(body: &str) -> Result<UnitCellModel, CellError> {
        load_cell_table(&format!("{CELL_TABLE_HEADER}\n{body}"))
    }

    #[test]
    fn ideal_states() {
        let m = UnitCellModel::ideal();
        let on = m.reflection(CellState::On, 27.5e9, 0.0).unwrap().gamma;
        let off = m.reflection(CellState::Off, 5e9, 45.0).unwrap().gamma;
        assert!((on - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((off - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(m.phase_states(1e9).unwrap(), (0.0, 180.0));
        assert!(matches!(m.operating_band(20.0, -2.8), Err(CellError::NotTabulated)));
    }

    #[test]
    fn ideal_rejects_active_magnitude() {
        let bad = IdealCell {
            magnitude_on: 1.2,
            ..IdealCell::default()
        };
        assert!(UnitCellModel::ideal_with(bad).is_err());
    }

    #[test]
    fn single_point_table() {
        let m = table("27.5,ON,0,-1,10\n27.5,OFF,0,-2,190\n").unwrap();
        let r = m.reflection(CellState::Off, 27.5e9, 0.0).unwrap();
        assert!((r.gamma.norm() - 10f64.powf(-0.1)).abs() < 1e-12);
        assert!(!r.angle_clamped);
        assert!(matches!(
            m.reflection(CellState::On, 27.6e9, 0.0),
            Err(CellError::OutOfRange { .. })
        ));
        let (on, off) = m.phase_states(27.5e9).unwrap();
        assert!((on - 10.0).abs() < 1e-12 && (off - 190.0).abs() < 1e-12);
    }

    #[test]
    fn header_and_row_errors() {
        let e = load_cell_table("freq_ghz,state,incidence,mag_db,phase_deg\n").unwrap_err();
        match e {
            CellError::Header { found } => assert!(found.contains("incidence,")),
            other => panic!("{other:?}"),
        }
        let e = table("27.5,MAYBE,0,-1,0\n").unwrap_err();
        assert_eq!(
            e,
            CellError::UnknownState {
                line: 2,
                token: "MAYBE".into()
            }
        );
        let e = table("27.5,ON,0,-1\n").unwrap_err();
        assert!(matches!(e, CellError::Row { line: 2, .. }));
        let e = table("27.5,ON,0,abc,0\n").unwrap_err();
        assert!(matches!(e, CellError::Row { line: 2, .. }));
        let e = table("27.5,ON,0,0.5,0\n27.5,OFF,0,-1,180\n").unwrap_err();
        assert!(matches!(e, CellError::Row { line: 2, .. }));
        let e = table("27.5,ON,0,-1,0\n28,OFF,0,-1,0\n27.5,ON,0,-2,5\n").unwrap_err();
        assert!(matches!(e, CellError::Duplicate { line: 4, .. }), "{e:?}");
        let e = table("27.5,ON,0,-1,0\n").unwrap_err();
        assert_eq!(e, CellError::MissingState(CellState::Off));
    }

    #[test]
    fn comments_and_unsorted_rows() {
        let m = load_cell_table(&format!(
            "# comment\n\n{CELL_TABLE_HEADER}\n# mid\n28,ON,,-1,20\n27,ON,,-1,0\n27,OFF,,-1,180\n28,OFF,,-1,200\n"
        ))
        .unwrap();
        let t = m.table().unwrap();
        assert_eq!(t.samples()[0].freq_ghz, 27.0);
        let r = m.reflection(CellState::On, 27.5e9, 30.0).unwrap();
        assert!(!r.angle_clamped, "angle-free table never clamps");
        assert!((r.gamma.arg().to_degrees() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_crosses_seam_on_unwrapped_phase() {
        // 350° -> 10° is a +20° step, midpoint must be 0°, not 180°
        let m = table("27,ON,0,-1,350\n28,ON,0,-1,10\n27,OFF,0,-1,170\n28,OFF,0,-1,190\n").unwrap();
        let (on, off) = m.phase_states(27.5e9).unwrap();
        assert!(on.abs() < 1e-9 || (on - 360.0).abs() < 1e-9, "{on}");
        assert!((off - 180.0).abs() < 1e-9);
        let (on, _) = m.phase_states(27.25e9).unwrap();
        assert!((on - 355.0).abs() < 1e-9, "{on}");
    }

    #[test]
    fn adjacent_samples_interpolate_linearly() {
        let m = UnitCellModel::builtin_table();
        let t = m.table().unwrap();
        let pick = |f: f64, s: CellState| {
            t.samples()
                .iter()
                .find(|x| x.freq_ghz == f && x.state == s && x.incidence_deg == Some(0.0))
                .copied()
                .unwrap()
        };
        let a = pick(26.0, CellState::On);
        let b = pick(26.25, CellState::On);
        let step = (b.phase_deg - a.phase_deg + 180.0).rem_euclid(360.0) - 180.0;
        let manual = wrap_deg(a.phase_deg + 0.4 * step);
        let (on, _) = m.phase_states(26.1e9).unwrap();
        assert!((on - manual).abs() < 1e-9, "{on} vs {manual}");
    }

    #[test]
    fn angle_interpolation_and_clamp() {
        let m = table(
            "27,ON,0,-1,0\n28,ON,0,-1,0\n27,ON,30,-3,60\n28,ON,30,-3,60\n\
             27,OFF,0,-1,180\n28,OFF,0,-1,180\n27,OFF,30,-1,180\n28,OFF,30,-1,180\n",
        )
        .unwrap();
        let r = m.reflection(CellState::On, 27.5e9, 15.0).unwrap();
        assert!(!r.angle_clamped);
        assert!((r.gamma.arg().to_degrees() - 30.0).abs() < 1e-9);
        assert!((20.0 * r.gamma.norm().log10() + 2.0).abs() < 1e-9);
        let r = m.reflection(CellState::On, 27.5e9, 45.0).unwrap();
        assert!(r.angle_clamped);
        assert!((r.gamma.arg().to_degrees() - 60.0).abs() < 1e-9);
        assert!(m.reflection(CellState::On, 27.5e9, 61.0).is_err());
    }

    #[test]
    fn shipped_table_anchors() {
        let m = UnitCellModel::builtin_table();
        for state in [CellState::On, CellState::Off] {
            let r = m.reflection(state, 27.5e9, 0.0).unwrap();
            assert!(20.0 * r.gamma.norm().log10() >= -2.8);
        }
        let mut f = 22.8;
        while f <= 30.4 {
            let (on, off) = m.phase_states(f * 1e9).unwrap();
            let d = wrap_deg(off - on);
            assert!((160.0 - 1e-6..=200.0 + 1e-6).contains(&d), "{f}: {d}");
            f += 0.1;
        }
    }

    #[test]
    fn shipped_band() {
        let band = UnitCellModel::builtin_table().operating_band(20.0, -2.8).unwrap().unwrap();
        assert!((band.f_low_hz / 1e9 - 22.7).abs() < 0.3);
        assert!((band.f_high_hz / 1e9 - 30.5).abs() < 0.3);
        assert!((band.fractional - 0.293).abs() < 0.015);
    }

    #[test]
    fn ideal_like_table_whole_span_and_forced_quadrature_empty() {
        let mut body = String::new();
        for f in [20.0, 24.0, 28.0, 32.0] {
            body.push_str(&format!("{f},ON,0,0,0\n{f},OFF,0,0,180\n"));
        }
        let band = table(&body).unwrap().operating_band(20.0, -2.8).unwrap().unwrap();
        assert_eq!((band.f_low_hz, band.f_high_hz), (20e9, 32e9));

        let mut body = String::new();
        for f in [20.0, 24.0, 28.0, 32.0] {
            body.push_str(&format!("{f},ON,0,0,0\n{f},OFF,0,0,90\n"));
        }
        assert_eq!(table(&body).unwrap().operating_band(20.0, -2.8).unwrap(), None);
    }

    #[test]
    fn shipped_table_round_trips() {
        let a = UnitCellModel::builtin_table();
        let csv = a.table().unwrap().to_csv();
        let b = load_cell_table(&csv).unwrap();
        assert_eq!(a.table().unwrap().samples(), b.table().unwrap().samples());
    }

    #[test]
    fn unwrap_handles_multiple_turns() {
        let u = unwrap_deg(&[170.0, -170.0, -10.0, 160.0, -170.0]);
        assert_eq!(u, vec![170.0, 190.0, 350.0, 520.0, 550.0]);
    }
}

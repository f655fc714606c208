//! Shift-register frames and the line-based serial control protocol.
//!
//! Frame layout: byte `b` holds the cells with row-major linear index
//! `8b ..= 8b+7`, most significant bit first, `1` = PIN ON. The hardware
//! chain is fed last byte first: byte `len-1` is shifted in first and ends up
//! in the farthest register.
//!
//! Protocol lines (ASCII, one `\n` terminator):
//!
//! ```text
//! SET <hex>        full frame, 2 hex digits per byte
//! STEER <θ> <φ>    degrees, θ in [0, 90), φ in [0, 360)
//! FREQ <ghz>       within the configured band
//! GET              query current state
//! RST              reset
//! ```
//!
//! Numbers carry at most two decimal places.

use std::fmt;

use thiserror::Error;

use crate::synthesis::BitMap;
use crate::unitcell::CellState;

/// Byte count of the 20×20 surface frame (50 eight-bit registers).
pub const FRAME_BYTES: usize = 50;

/// Longest accepted protocol line, terminator included.
pub const MAX_LINE_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("element count {0} is not a multiple of 8")]
    NotByteAligned(usize),
    #[error("frame of {bytes} bytes cannot hold a {rows}x{cols} map")]
    SizeMismatch { bytes: usize, rows: usize, cols: usize },
    #[error("frame text: {0}")]
    Text(String),
}

/// Packed switch states, one bit per cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame(Vec<u8>);

impl Frame {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Frame(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bytes in hardware emission order: last byte first.
    pub fn shift_order(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().rev().copied()
    }

    /// Uppercase hex, two characters per byte.
    pub fn to_hex(&self) -> String {
        hex::encode_upper(&self.0)
    }

    /// Parses hex digits (either case). Returns the offending byte offset on error.
    pub fn from_hex(digits: &[u8]) -> Result<Self, (usize, u8)> {
        if let Some(pos) = digits.iter().position(|c| !c.is_ascii_hexdigit()) {
            return Err((pos, digits[pos]));
        }
        hex::decode(digits).map(Frame).map_err(|_| (digits.len(), 0))
    }

    /// Frame file contents: the hex line plus `\n`.
    pub fn to_file_text(&self) -> String {
        format!("{}\n", self.to_hex())
    }

    /// Reads a frame file; `#` comment lines and blank lines are skipped.
    pub fn from_file_text(text: &str) -> Result<Self, FrameError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let hex = lines.next().ok_or_else(|| FrameError::Text("no frame line".into()))?;
        if lines.next().is_some() {
            return Err(FrameError::Text("more than one frame line".into()));
        }
        Frame::from_hex(hex.as_bytes())
            .map_err(|(pos, _)| FrameError::Text(format!("invalid hex at offset {pos}")))
    }
}

/// Packs a bitmap into register bytes.
pub fn pack_frame(bits: &BitMap) -> Result<Frame, FrameError> {
    let n = bits.rows() * bits.cols();
    if !n.is_multiple_of(8) {
        return Err(FrameError::NotByteAligned(n));
    }
    let bytes = bits
        .states()
        .chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .fold(0u8, |acc, s| (acc << 1) | u8::from(s.is_on()))
        })
        .collect();
    Ok(Frame(bytes))
}

/// Inverse of [`pack_frame`].
pub fn unpack_frame(frame: &Frame, rows: usize, cols: usize) -> Result<BitMap, FrameError> {
    if rows * cols != 8 * frame.len() {
        return Err(FrameError::SizeMismatch {
            bytes: frame.len(),
            rows,
            cols,
        });
    }
    let states = frame
        .0
        .iter()
        .flat_map(|b| (0..8).rev().map(move |bit| if (b >> bit) & 1 == 1 { CellState::On } else { CellState::Off }))
        .collect();
    Ok(BitMap::new(rows, cols, states).expect("length checked"))
}

/// A decoded control command.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    SetFrame(Frame),
    Steer { theta_deg: f64, phi_deg: f64 },
    Freq { ghz: f64 },
    QueryState,
    Reset,
}

/// Parameter ranges enforced by the codec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolLimits {
    pub frame_bytes: usize,
    pub freq_min_ghz: f64,
    pub freq_max_ghz: f64,
}

impl Default for ProtocolLimits {
    fn default() -> Self {
        Self {
            frame_bytes: FRAME_BYTES,
            freq_min_ghz: 22.0,
            freq_max_ghz: 33.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("empty line")]
    Empty,
    #[error("line of {len} bytes exceeds the {MAX_LINE_LEN}-byte limit")]
    LineTooLong { len: usize },
    #[error("byte {offset}: non-ASCII byte 0x{byte:02X}")]
    NonAscii { offset: usize, byte: u8 },
    #[error("byte {offset}: unknown verb `{verb}`")]
    UnknownVerb { offset: usize, verb: String },
    #[error("byte {offset}: missing {what}")]
    MissingArgument { offset: usize, what: &'static str },
    #[error("byte {offset}: unexpected trailing input")]
    TrailingInput { offset: usize },
    #[error("byte {offset}: hex payload length {len} != {expected}")]
    HexLength { offset: usize, len: usize, expected: usize },
    #[error("byte {offset}: non-hex character 0x{byte:02X}")]
    NonHex { offset: usize, byte: u8 },
    #[error("byte {offset}: malformed number `{text}`")]
    BadNumber { offset: usize, text: String },
    #[error("byte {offset}: {field} = {value} outside [{min}, {max})")]
    OutOfRange {
        offset: usize,
        field: &'static str,
        value: String,
        min: String,
        max: String,
    },
}

impl ProtocolError {
    /// Short stable identifier for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolError::Empty => "empty",
            ProtocolError::LineTooLong { .. } => "line_too_long",
            ProtocolError::NonAscii { .. } => "non_ascii",
            ProtocolError::UnknownVerb { .. } => "unknown_verb",
            ProtocolError::MissingArgument { .. } => "missing_argument",
            ProtocolError::TrailingInput { .. } => "trailing_input",
            ProtocolError::HexLength { .. } => "hex_length",
            ProtocolError::NonHex { .. } => "non_hex",
            ProtocolError::BadNumber { .. } => "bad_number",
            ProtocolError::OutOfRange { .. } => "out_of_range",
        }
    }

    pub fn offset(&self) -> Option<usize> {
        match self {
            ProtocolError::Empty | ProtocolError::LineTooLong { .. } => None,
            ProtocolError::NonAscii { offset, .. }
            | ProtocolError::UnknownVerb { offset, .. }
            | ProtocolError::MissingArgument { offset, .. }
            | ProtocolError::TrailingInput { offset }
            | ProtocolError::HexLength { offset, .. }
            | ProtocolError::NonHex { offset, .. }
            | ProtocolError::BadNumber { offset, .. }
            | ProtocolError::OutOfRange { offset, .. } => Some(*offset),
        }
    }
}

/// Formats with at most two decimals, trailing zeros trimmed.
fn fmt_num(v: f64) -> String {
    let s = format!("{:.2}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn range_check(field: &'static str, value: f64, min: f64, max: f64, max_inclusive: bool, offset: usize) -> Result<(), ProtocolError> {
    let ok = value >= min && if max_inclusive { value <= max } else { value < max };
    if ok {
        Ok(())
    } else {
        Err(ProtocolError::OutOfRange {
            offset,
            field,
            value: fmt_num(value),
            min: fmt_num(min),
            max: fmt_num(max),
        })
    }
}

/// Encodes a command as one protocol line. Values are rounded to two
/// decimals.
pub fn encode_command(cmd: &Command, limits: &ProtocolLimits) -> Result<String, ProtocolError> {
    Ok(match cmd {
        Command::SetFrame(frame) => {
            if frame.len() != limits.frame_bytes {
                return Err(ProtocolError::HexLength {
                    offset: 4,
                    len: frame.len() * 2,
                    expected: limits.frame_bytes * 2,
                });
            }
            format!("SET {}\n", frame.to_hex())
        }
        Command::Steer { theta_deg, phi_deg } => {
            let (t, p) = (round2(*theta_deg), round2(*phi_deg));
            range_check("theta", t, 0.0, 90.0, false, 6)?;
            range_check("phi", p, 0.0, 360.0, false, 6)?;
            format!("STEER {} {}\n", fmt_num(t), fmt_num(p))
        }
        Command::Freq { ghz } => {
            let g = round2(*ghz);
            range_check("freq", g, limits.freq_min_ghz, limits.freq_max_ghz, true, 5)?;
            format!("FREQ {}\n", fmt_num(g))
        }
        Command::QueryState => "GET\n".into(),
        Command::Reset => "RST\n".into(),
    })
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Splits on single spaces, yielding `(offset, token)`.
fn tokens(line: &[u8]) -> Vec<(usize, &[u8])> {
    let mut out = Vec::new();
    let mut start = 0;
    for (n, &c) in line.iter().enumerate() {
        if c == b' ' {
            out.push((start, &line[start..n]));
            start = n + 1;
        }
    }
    out.push((start, &line[start..]));
    out
}

/// Unsigned decimal with at most two fractional digits.
fn parse_number(offset: usize, tok: &[u8]) -> Result<f64, ProtocolError> {
    let bad = || ProtocolError::BadNumber {
        offset,
        text: String::from_utf8_lossy(tok).into_owned(),
    };
    let (int, frac) = match tok.iter().position(|&c| c == b'.') {
        Some(dot) => (&tok[..dot], Some(&tok[dot + 1..])),
        None => (tok, None),
    };
    if int.is_empty() || int.len() > 6 || !int.iter().all(u8::is_ascii_digit) {
        return Err(bad());
    }
    if let Some(f) = frac {
        if f.is_empty() || f.len() > 2 || !f.iter().all(u8::is_ascii_digit) {
            return Err(bad());
        }
    }
    // validated ASCII digits only
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(bad)
}

/// Parses one protocol line. Total over arbitrary input: every byte string
/// yields a command or a structured error. A single trailing `\n` (or
/// `\r\n`) is accepted.
pub fn parse_command(line: &[u8], limits: &ProtocolLimits) -> Result<Command, ProtocolError> {
    if line.len() > MAX_LINE_LEN {
        return Err(ProtocolError::LineTooLong { len: line.len() });
    }
    let body = line.strip_suffix(b"\n").unwrap_or(line);
    let body = body.strip_suffix(b"\r").unwrap_or(body);
    if let Some(offset) = body.iter().position(|c| !c.is_ascii()) {
        return Err(ProtocolError::NonAscii {
            offset,
            byte: body[offset],
        });
    }
    if body.is_empty() {
        return Err(ProtocolError::Empty);
    }
    let toks = tokens(body);
    let (_, verb) = toks[0];
    let expect_args = |n: usize, what: &'static str| -> Result<(), ProtocolError> {
        if toks.len() - 1 < n {
            return Err(ProtocolError::MissingArgument {
                offset: body.len(),
                what,
            });
        }
        if toks.len() - 1 > n {
            return Err(ProtocolError::TrailingInput {
                offset: toks[n + 1].0 - 1,
            });
        }
        Ok(())
    };
    match verb {
        b"GET" => {
            expect_args(0, "")?;
            Ok(Command::QueryState)
        }
        b"RST" => {
            expect_args(0, "")?;
            Ok(Command::Reset)
        }
        b"SET" => {
            expect_args(1, "hex payload")?;
            let (offset, hex) = toks[1];
            if let Some(p) = hex.iter().position(|c| !c.is_ascii_hexdigit()) {
                return Err(ProtocolError::NonHex {
                    offset: offset + p,
                    byte: hex[p],
                });
            }
            let expected = limits.frame_bytes * 2;
            if hex.len() != expected {
                return Err(ProtocolError::HexLength {
                    offset,
                    len: hex.len(),
                    expected,
                });
            }
            let frame = Frame::from_hex(hex).map_err(|(p, b)| ProtocolError::NonHex { offset: offset + p, byte: b })?;
            Ok(Command::SetFrame(frame))
        }
        b"STEER" => {
            expect_args(2, "angle")?;
            let (ot, t) = toks[1];
            let (op, p) = toks[2];
            let theta = parse_number(ot, t)?;
            let phi = parse_number(op, p)?;
            range_check("theta", theta, 0.0, 90.0, false, ot)?;
            range_check("phi", phi, 0.0, 360.0, false, op)?;
            Ok(Command::Steer {
                theta_deg: theta,
                phi_deg: phi,
            })
        }
        b"FREQ" => {
            expect_args(1, "frequency")?;
            let (of, f) = toks[1];
            let ghz = parse_number(of, f)?;
            range_check("freq", ghz, limits.freq_min_ghz, limits.freq_max_ghz, true, of)?;
            Ok(Command::Freq { ghz })
        }
        other => Err(ProtocolError::UnknownVerb {
            offset: 0,
            verb: String::from_utf8_lossy(&other[..other.len().min(32)]).into_owned(),
        }),
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::SetFrame(fr) => write!(f, "SET {}", fr.to_hex()),
            Command::Steer { theta_deg, phi_deg } => write!(f, "STEER {} {}", fmt_num(*theta_deg), fmt_num(*phi_deg)),
            Command::Freq { ghz } => write!(f, "FREQ {}", fmt_num(*ghz)),
            Command::QueryState => f.write_str("GET"),
            Command::Reset => f.write_str("RST"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(on: &[usize]) -> BitMap {
        let mut states = vec![CellState::Off; 400];
        for &n in on {
            states[n] = CellState::On;
        }
        BitMap::new(20, 20, states).unwrap()
    }

    #[test]
    fn frame_conventions() {
        let f = pack_frame(&map_with(&[])).unwrap();
        assert_eq!(f.as_bytes(), &[0u8; 50]);
        let f = pack_frame(&map_with(&[0])).unwrap();
        assert_eq!(f.as_bytes()[0], 0x80);
        assert!(f.as_bytes()[1..].iter().all(|&b| b == 0));
        let f = pack_frame(&map_with(&[7, 8, 399])).unwrap();
        assert_eq!(f.as_bytes()[0], 0x01);
        assert_eq!(f.as_bytes()[1], 0x80);
        assert_eq!(f.as_bytes()[49], 0x01);
        assert_eq!(f.shift_order().next(), Some(0x01));
        assert_eq!(f.shift_order().last(), Some(0x01));
    }

    #[test]
    fn unpack_constant_frames() {
        let off = unpack_frame(&Frame::from_bytes(vec![0; 50]), 20, 20).unwrap();
        assert_eq!(off.count_on(), 0);
        let on = unpack_frame(&Frame::from_bytes(vec![0xFF; 50]), 20, 20).unwrap();
        assert_eq!(on.count_on(), 400);
        assert!(unpack_frame(&Frame::from_bytes(vec![0; 49]), 20, 20).is_err());
    }

    #[test]
    fn pack_requires_byte_alignment() {
        let bm = BitMap::filled(3, 3, CellState::On);
        assert_eq!(pack_frame(&bm), Err(FrameError::NotByteAligned(9)));
        let bm = BitMap::filled(2, 4, CellState::On);
        assert_eq!(pack_frame(&bm).unwrap().as_bytes(), &[0xFF]);
    }

    #[test]
    fn encode_examples() {
        let l = ProtocolLimits::default();
        assert_eq!(encode_command(&Command::Reset, &l).unwrap(), "RST\n");
        assert_eq!(encode_command(&Command::QueryState, &l).unwrap(), "GET\n");
        assert_eq!(
            encode_command(&Command::Steer { theta_deg: 30.0, phi_deg: 0.0 }, &l).unwrap(),
            "STEER 30 0\n"
        );
        assert_eq!(encode_command(&Command::Freq { ghz: 27.5 }, &l).unwrap(), "FREQ 27.5\n");
        let all_on = Command::SetFrame(Frame::from_bytes(vec![0xFF; 50]));
        assert_eq!(encode_command(&all_on, &l).unwrap(), format!("SET {}\n", "F".repeat(100)));
        assert!(encode_command(&Command::Steer { theta_deg: 90.0, phi_deg: 0.0 }, &l).is_err());
        assert!(encode_command(&Command::Freq { ghz: 40.0 }, &l).is_err());
        assert!(encode_command(&Command::SetFrame(Frame::from_bytes(vec![0; 3])), &l).is_err());
    }

    #[test]
    fn parse_examples() {
        let l = ProtocolLimits::default();
        assert_eq!(parse_command(b"GET\n", &l), Ok(Command::QueryState));
        assert_eq!(parse_command(b"RST", &l), Ok(Command::Reset));
        assert_eq!(
            parse_command(b"SET ABC\n", &l),
            Err(ProtocolError::HexLength {
                offset: 4,
                len: 3,
                expected: 100
            })
        );
        let mut line = b"SET ".to_vec();
        line.extend(std::iter::repeat_n(b'0', 50));
        line.push(b'G');
        line.extend(std::iter::repeat_n(b'0', 49));
        assert_eq!(
            parse_command(&line, &l),
            Err(ProtocolError::NonHex { offset: 54, byte: b'G' })
        );
        assert!(matches!(parse_command(b"JUMP 1\n", &l), Err(ProtocolError::UnknownVerb { offset: 0, .. })));
        assert!(matches!(parse_command(b"STEER 30\n", &l), Err(ProtocolError::MissingArgument { .. })));
        assert!(matches!(parse_command(b"STEER 30 0 1\n", &l), Err(ProtocolError::TrailingInput { offset: 10 })));
        assert!(matches!(parse_command(b"STEER 91 0\n", &l), Err(ProtocolError::OutOfRange { offset: 6, .. })));
        assert!(matches!(parse_command(b"STEER 1.234 0\n", &l), Err(ProtocolError::BadNumber { offset: 6, .. })));
        assert!(matches!(parse_command(b"STEER -1 0\n", &l), Err(ProtocolError::BadNumber { .. })));
        assert!(matches!(parse_command(b"FREQ 12\n", &l), Err(ProtocolError::OutOfRange { .. })));
        assert_eq!(parse_command(b"FREQ 27.50\r\n", &l), Ok(Command::Freq { ghz: 27.5 }));
        assert_eq!(parse_command(b"\n", &l), Err(ProtocolError::Empty));
        assert!(matches!(parse_command("GET\u{e9}".as_bytes(), &l), Err(ProtocolError::NonAscii { offset: 3, .. })));
        assert!(matches!(parse_command(&vec![b'A'; 5000], &l), Err(ProtocolError::LineTooLong { len: 5000 })));
        assert!(matches!(parse_command(b"GET  \n", &l), Err(ProtocolError::TrailingInput { .. })));
    }

    #[test]
    fn frame_file_text() {
        let f = Frame::from_bytes(vec![0x12, 0xAB]);
        assert_eq!(f.to_file_text(), "12AB\n");
        assert_eq!(Frame::from_file_text("# meta\n12ab\n").unwrap(), f);
        assert!(Frame::from_file_text("12\n34\n").is_err());
    }
}

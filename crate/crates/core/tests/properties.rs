use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use ris_core::control::{encode_command, pack_frame, parse_command, unpack_frame, Command, Frame, ProtocolLimits, FRAME_BYTES};
use ris_core::geometry::{ArrayGeometry, FreqSpec, Vec3};
use ris_core::pattern::{link_s21, metrics, scattered_pattern, ElementFactor, GridSpec, HornSpec, Illumination};
use ris_core::synthesis::{
    ideal_phase_map, optimize_reference_phase, quantize_phase, score_phase_map, BitMap, EvaluationMode, EvaluationSetup, FeedSpec,
    SteeringTarget,
};
use ris_core::unitcell::{CellState, UnitCellModel};

fn bitmap_strategy() -> impl Strategy<Value = BitMap> {
    (1usize..12, 1usize..4)
        .prop_flat_map(|(rows, bytes)| {
            // rows·cols divisible by 8
            let cols = 8 * bytes;
            (Just(rows), Just(cols), proptest::collection::vec(any::<bool>(), rows * cols))
        })
        .prop_map(|(rows, cols, bits)| {
            let states = bits.into_iter().map(|b| if b { CellState::On } else { CellState::Off }).collect();
            BitMap::new(rows, cols, states).unwrap()
        })
}

fn command_strategy() -> impl Strategy<Value = Command> {
    prop_oneof![
        proptest::collection::vec(any::<u8>(), FRAME_BYTES).prop_map(|b| Command::SetFrame(Frame::from_bytes(b))),
        (0u32..9000, 0u32..36000).prop_map(|(t, p)| Command::Steer {
            theta_deg: t as f64 / 100.0,
            phi_deg: p as f64 / 100.0,
        }),
        (2200u32..=3300).prop_map(|g| Command::Freq { ghz: g as f64 / 100.0 }),
        Just(Command::QueryState),
        Just(Command::Reset),
    ]
}

fn small_grid() -> GridSpec {
    GridSpec::new(1.0, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frames_round_trip(bm in bitmap_strategy()) {
        let frame = pack_frame(&bm).unwrap();
        prop_assert_eq!(frame.len() * 8, bm.rows() * bm.cols());
        prop_assert_eq!(unpack_frame(&frame, bm.rows(), bm.cols()).unwrap(), bm);
    }

    #[test]
    fn frame_hex_round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..80)) {
        let frame = Frame::from_bytes(bytes);
        let hex = frame.to_hex();
        prop_assert!(hex.bytes().all(|c| c.is_ascii_digit() || c.is_ascii_uppercase()));
        prop_assert_eq!(Frame::from_hex(hex.as_bytes()).unwrap(), frame.clone());
        prop_assert_eq!(Frame::from_file_text(&format!("# header\n{}", frame.to_file_text())).unwrap(), frame);
    }

    #[test]
    fn commands_round_trip(cmd in command_strategy()) {
        let limits = ProtocolLimits::default();
        let line = encode_command(&cmd, &limits).unwrap();
        prop_assert!(line.ends_with('\n') && line.matches('\n').count() == 1);
        prop_assert_eq!(parse_command(line.as_bytes(), &limits).unwrap(), cmd);
    }

    #[test]
    fn parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let limits = ProtocolLimits::default();
        if let Err(e) = parse_command(&bytes, &limits) {
            prop_assert!(!e.kind().is_empty());
            if let Some(offset) = e.offset() {
                prop_assert!(offset <= bytes.len());
            }
        }
    }

    /// Rotating every phase by the same whole-degree amount keeps each
    /// decision, ties included.
    #[test]
    fn quantizer_commutes_with_rotation(phi in 0i32..360, on in 0i32..360, gap in 1i32..360, shift in -720i32..720) {
        let off = (on + gap) % 360;
        let base = quantize_phase(phi as f64, on as f64, off as f64);
        let s = shift as f64;
        let rotated = quantize_phase(phi as f64 + s, on as f64 + s, off as f64 + s);
        prop_assert_eq!(base, rotated);
    }

    #[test]
    fn quantizer_swap_flips_unless_tied(phi in 0.0f64..360.0, on in 0.0f64..360.0, gap in 1.0f64..359.0) {
        let off = (on + gap) % 360.0;
        let a = quantize_phase(phi, on, off);
        let b = quantize_phase(phi, off, on);
        if a == b {
            // a tie resolves to ON under both labelings
            prop_assert_eq!(a, CellState::On);
        }
    }

    #[test]
    fn tabulated_reflection_is_passive(f in 20.0f64..34.0, angle in 0.0f64..=60.0, on in any::<bool>()) {
        let model = UnitCellModel::builtin_table();
        let state = if on { CellState::On } else { CellState::Off };
        let r = model.reflection(state, f * 1e9, angle).unwrap();
        prop_assert!(r.gamma.norm() <= 1.0);
        prop_assert_eq!(r.angle_clamped, angle > 30.0);
    }

    #[test]
    fn band_grows_with_looser_criteria(tol in 5.0f64..40.0, extra_tol in 0.0f64..20.0, floor in -4.0f64..-0.5, extra_floor in 0.0f64..3.0) {
        let model = UnitCellModel::builtin_table();
        let tight = model.operating_band(tol, floor).unwrap();
        let loose = model.operating_band(tol + extra_tol, floor - extra_floor).unwrap();
        if let Some(t) = tight {
            let l = loose.expect("looser criteria keep the band");
            prop_assert!(l.f_high_hz - l.f_low_hz >= t.f_high_hz - t.f_low_hz - 1.0);
        }
    }

    #[test]
    fn link_is_reciprocal(
        t_dist in 0.05f64..2.0, t_theta in 0.0f64..80.0, t_phi in 0.0f64..360.0,
        r_dist in 0.05f64..2.0, r_theta in 0.0f64..80.0, r_phi in 0.0f64..360.0,
        seed in any::<u64>(),
    ) {
        let geom = ArrayGeometry::new(6, 7, 4e-3).unwrap();
        let tx = HornSpec::aimed_at_center(t_dist, t_theta, t_phi, 15.0).unwrap();
        let rx = HornSpec::aimed_at_center(r_dist, r_theta, r_phi, 22.0).unwrap();
        let gammas: Vec<Complex64> = (0..42u64)
            .map(|n| Complex64::from_polar(1.0, ((seed ^ n.wrapping_mul(0x9E37_79B9)) % 360) as f64))
            .collect();
        let f = FreqSpec::from_ghz(27.5).unwrap();
        let a = link_s21(&tx, &rx, &geom, &gammas, f, ElementFactor::default()).unwrap();
        let b = link_s21(&rx, &tx, &geom, &gammas, f, ElementFactor::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// A common complex factor on every reflection leaves the pattern shape alone.
    #[test]
    fn metrics_ignore_global_scaling(mag in 0.01f64..10.0, arg in -PI..PI, theta in 0.0f64..40.0, phi in 0.0f64..360.0) {
        let geom = ArrayGeometry::new(10, 10, 5.4e-3).unwrap();
        let f = FreqSpec::from_ghz(27.5).unwrap();
        let feed = FeedSpec::far_field(Vec3::from_angles_deg(30.0, 0.0)).unwrap();
        let map = ideal_phase_map(&geom, &feed, &SteeringTarget::from_angles_deg(theta, phi).unwrap(), f, 0.0);
        let gammas = map.continuous_gammas();
        let c = Complex64::from_polar(mag, arg);
        let scaled: Vec<Complex64> = gammas.iter().map(|g| g * c).collect();
        let il = Illumination::uniform(geom.len());
        let a = metrics(&scattered_pattern(&geom, &gammas, &il, ElementFactor::default(), small_grid(), f).unwrap()).unwrap();
        let b = metrics(&scattered_pattern(&geom, &scaled, &il, ElementFactor::default(), small_grid(), f).unwrap()).unwrap();
        prop_assert_eq!((a.peak_theta_deg, a.peak_phi_deg), (b.peak_theta_deg, b.peak_phi_deg));
        prop_assert!((a.peak_dbi - b.peak_dbi).abs() < 1e-9);
        prop_assert!((a.hpbw_theta_deg - b.hpbw_theta_deg).abs() < 1e-9);
        prop_assert!((a.hpbw_phi_deg - b.hpbw_phi_deg).abs() < 1e-9);
        match (a.sll_db, b.sll_db) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    /// Continuous maps only differ by a global phase across reference phases.
    #[test]
    fn continuous_score_ignores_reference_phase(reference in 0.0f64..360.0) {
        let geom = ArrayGeometry::new(8, 8, 3.85e-3).unwrap();
        let f = FreqSpec::from_ghz(27.5).unwrap();
        let horn = HornSpec::aimed_at_center(0.2, 30.0, 0.0, 20.0).unwrap();
        let feed = FeedSpec::near_field(horn.position).unwrap();
        let il = ris_core::pattern::illuminate(&horn, &geom, f).unwrap();
        let setup = EvaluationSetup { illumination: &il, element: ElementFactor::default(), grid: small_grid(), mode: EvaluationMode::Continuous };
        let target = SteeringTarget::broadside();
        let model = UnitCellModel::ideal();
        let (_, g0) = score_phase_map(&geom, &ideal_phase_map(&geom, &feed, &target, f, 0.0), &model, &setup).unwrap();
        let (_, g1) = score_phase_map(&geom, &ideal_phase_map(&geom, &feed, &target, f, reference), &model, &setup).unwrap();
        let (l0, l1) = (10f64.powf(g0 / 10.0), 10f64.powf(g1 / 10.0));
        prop_assert!(((l0 - l1) / l0).abs() < 1e-9);
    }
}

#[test]
fn optimizer_never_loses_to_zero_reference() {
    let geom = ArrayGeometry::new(10, 10, 3.85e-3).unwrap();
    let f = FreqSpec::from_ghz(26.0).unwrap();
    let horn = HornSpec::aimed_at_center(0.15, 30.0, 0.0, 20.0).unwrap();
    let feed = FeedSpec::near_field(horn.position).unwrap();
    let il = ris_core::pattern::illuminate(&horn, &geom, f).unwrap();
    let setup = EvaluationSetup {
        illumination: &il,
        element: ElementFactor::default(),
        grid: small_grid(),
        mode: EvaluationMode::Quantized,
    };
    let model = UnitCellModel::builtin_table();
    for theta in [0.0, 25.0] {
        let target = SteeringTarget::from_angles_deg(theta, 180.0).unwrap();
        let best = optimize_reference_phase(&geom, &feed, &target, f, &model, 16, &setup).unwrap();
        let (bm0, g0) = score_phase_map(&geom, &ideal_phase_map(&geom, &feed, &target, f, 0.0), &model, &setup).unwrap();
        assert!(best.peak_gain_dbi >= g0);
        if best.reference_deg == 0.0 {
            assert_eq!(best.bitmap, bm0);
        }
        assert_eq!(best.reference_deg % 22.5, 0.0);
    }
}

#[test]
fn optimizer_ties_keep_smallest_reference() {
    // a single ideal cell scores the same for every reference phase
    let geom = ArrayGeometry::new(1, 1, 3.85e-3).unwrap();
    let f = FreqSpec::from_ghz(27.5).unwrap();
    let feed = FeedSpec::far_field(Vec3::Z).unwrap();
    let il = Illumination::uniform(1);
    let setup = EvaluationSetup {
        illumination: &il,
        element: ElementFactor::default(),
        grid: small_grid(),
        mode: EvaluationMode::Quantized,
    };
    let best = optimize_reference_phase(&geom, &feed, &SteeringTarget::broadside(), f, &UnitCellModel::ideal(), 64, &setup).unwrap();
    assert_eq!(best.reference_deg, 0.0);
}

#[test]
fn fast_and_direct_sums_agree() {
    let f = FreqSpec::from_ghz(29.0).unwrap();
    let geom = ArrayGeometry::new(8, 8, 4.4e-3).unwrap();
    let gammas: Vec<Complex64> = (0..64).map(|n| Complex64::from_polar(0.5 + (n % 5) as f64 * 0.1, n as f64 * 0.7)).collect();
    let il = Illumination {
        amplitude: (0..64).map(|n| Complex64::from_polar(1.0 + (n % 3) as f64, -(n as f64) * 0.3)).collect(),
        incidence_deg: (0..64).map(|n| (n % 50) as f64).collect(),
    };
    let p = scattered_pattern(&geom, &gammas, &il, ElementFactor::new(1.5).unwrap(), small_grid(), f).unwrap();
    let src = p.source();
    let mut scale: f64 = 0.0;
    let mut diff: f64 = 0.0;
    for it in 0..=18 {
        for ip in 0..36 {
            let u = Vec3::from_angles_deg(it as f64 * 5.0, ip as f64 * 10.0);
            scale = scale.max(src.field_naive(u).norm());
            diff = diff.max((src.field(u) - src.field_naive(u)).norm());
        }
    }
    assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
    assert!((p.normalization_check() - 1.0).abs() < 1e-3);
}

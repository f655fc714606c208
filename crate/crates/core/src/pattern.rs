//! Illumination, scattered far-field patterns, pattern metrics and the
//! two-horn link used to emulate bench measurements.
//!
//! The scattered field is a scalar coherent sum over cells,
//!
//! ```text
//! F(û) = e_f(θ) Σ_ij a_ij Γ_ij e_f(θ_inc,ij) e^{+jk û·r_ij},     û_z ≥ 0
//! ```
//!
//! with element factor `e_f(θ) = cos^q θ` and `F = 0` below the surface
//! plane. Because cells sit on a rectangular lattice the phase factor
//! separates into a row term and a column term, which is what the fast
//! evaluation path exploits; [`SurfaceSource::field_naive`] keeps the direct
//! double sum as a reference.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ArrayGeometry, FreqSpec, GeometryError, Vec3};
use crate::synthesis::{
    ideal_phase_map, optimize_reference_phase, quantize_map, BitMap, EvaluationMode, EvaluationSetup, FeedSpec,
    SteeringTarget, SynthesisError,
};
use crate::unitcell::{CellError, UnitCellModel};

/// Incidence angles above this are queried from the cell model at this value.
pub const MAX_MODEL_INCIDENCE_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatternError {
    #[error("horn must sit above the surface plane (z = {0} m)")]
    HornBelowSurface(f64),
    #[error("horn phase center coincides with element {0}")]
    HornOnElement(usize),
    #[error("horn gain {0} dBi is below the 3.01 dBi hemispherical minimum")]
    BadHornGain(f64),
    #[error("boresight must be a nonzero finite vector")]
    BadBoresight,
    #[error("element factor exponent must be finite and >= 0 (got {0})")]
    BadElementFactor(f64),
    #[error("grid step {step} deg does not divide {range} deg")]
    BadGrid { step: f64, range: f64 },
    #[error("expected {expected} per-element values, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("pattern is identically zero")]
    ZeroPattern,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// Field pattern `cos^q θ` of a single cell about the surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementFactor {
    q: f64,
}

impl Default for ElementFactor {
    fn default() -> Self {
        Self { q: 1.0 }
    }
}

impl ElementFactor {
    pub fn new(q: f64) -> Result<Self, PatternError> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(PatternError::BadElementFactor(q));
        }
        Ok(Self { q })
    }

    pub fn isotropic() -> Self {
        Self { q: 0.0 }
    }

    pub fn exponent(&self) -> f64 {
        self.q
    }

    /// Value for a direction whose cosine to the normal is `cos_theta`.
    pub fn value(&self, cos_theta: f64) -> f64 {
        if cos_theta < 0.0 {
            0.0
        } else if self.q == 0.0 {
            1.0
        } else {
            cos_theta.powf(self.q)
        }
    }
}

/// Horn antenna with a `G0 cos^q α` power pattern, `G0 = 2(q + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HornSpec {
    pub position: Vec3,
    boresight: Vec3,
    q: f64,
}

impl HornSpec {
    pub fn new(position: Vec3, boresight: Vec3, gain_dbi: f64) -> Result<Self, PatternError> {
        if !(position.z > 0.0 && position.norm().is_finite()) {
            return Err(PatternError::HornBelowSurface(position.z));
        }
        let n = boresight.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(PatternError::BadBoresight);
        }
        let q = 10f64.powf(gain_dbi / 10.0) / 2.0 - 1.0;
        if !(q.is_finite() && q >= 0.0) {
            return Err(PatternError::BadHornGain(gain_dbi));
        }
        Ok(Self {
            position,
            boresight: boresight.normalized(),
            q,
        })
    }

    /// Horn at `distance` along `(theta, phi)` from the surface center, aimed at the center.
    pub fn aimed_at_center(distance_m: f64, theta_deg: f64, phi_deg: f64, gain_dbi: f64) -> Result<Self, PatternError> {
        let position = Vec3::from_angles_deg(theta_deg, phi_deg) * distance_m;
        Self::new(position, -position, gain_dbi)
    }

    pub fn boresight(&self) -> Vec3 {
        self.boresight
    }

    pub fn exponent(&self) -> f64 {
        self.q
    }

    pub fn peak_gain(&self) -> f64 {
        2.0 * (self.q + 1.0)
    }

    pub fn peak_gain_dbi(&self) -> f64 {
        10.0 * self.peak_gain().log10()
    }

    /// Linear power gain toward unit direction `dir` (from the horn outward).
    pub fn gain(&self, dir: Vec3) -> f64 {
        let c = self.boresight.dot(dir);
        if c <= 0.0 {
            0.0
        } else {
            self.peak_gain() * c.powf(self.q)
        }
    }

    fn toward(&self, point: Vec3) -> (f64, Vec3) {
        let d = point - self.position;
        let r = d.norm();
        (r, d * (1.0 / r))
    }
}

/// Complex incident amplitude and incidence angle at every cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Illumination {
    pub amplitude: Vec<Complex64>,
    pub incidence_deg: Vec<f64>,
}

impl Illumination {
    /// Unit, in-phase, normally incident illumination.
    pub fn uniform(n: usize) -> Self {
        Self {
            amplitude: vec![Complex64::new(1.0, 0.0); n],
            incidence_deg: vec![0.0; n],
        }
    }
}

/// Spherical-wave illumination from `horn`:
/// `sqrt(g(α)) e^{−jkR} / R` with `R` the horn-to-cell distance.
pub fn illuminate(horn: &HornSpec, geom: &ArrayGeometry, freq: FreqSpec) -> Result<Illumination, PatternError> {
    if horn.position.z <= 0.0 {
        return Err(PatternError::HornBelowSurface(horn.position.z));
    }
    let k = freq.wavenumber();
    let mut amplitude = Vec::with_capacity(geom.len());
    let mut incidence_deg = Vec::with_capacity(geom.len());
    for (n, r) in geom.positions().into_iter().enumerate() {
        let (dist, dir) = horn.toward(r);
        if dist < 1e-12 {
            return Err(PatternError::HornOnElement(n));
        }
        let g = horn.gain(dir);
        amplitude.push(Complex64::from_polar(g.sqrt() / dist, -k * dist));
        incidence_deg.push((horn.position.z / dist).clamp(-1.0, 1.0).acos().to_degrees());
    }
    Ok(Illumination {
        amplitude,
        incidence_deg,
    })
}

/// Plane wave arriving from `arrival`: unit amplitude with the phase of the
/// spherical wave's far limit, `e^{+jk ŝ·r}` (constant `e^{−jkR}` dropped).
pub fn illuminate_plane_wave(arrival: Vec3, geom: &ArrayGeometry, freq: FreqSpec) -> Illumination {
    let k = freq.wavenumber();
    let s = arrival.normalized();
    let theta = s.theta_deg();
    let amplitude = geom
        .positions()
        .into_iter()
        .map(|r| Complex64::from_polar(1.0, k * s.dot(r)))
        .collect();
    Illumination {
        amplitude,
        incidence_deg: vec![theta; geom.len()],
    }
}

/// Per-cell reflection coefficients for a bitmap. The incidence angle is
/// capped at [`MAX_MODEL_INCIDENCE_DEG`] before querying the model.
pub fn surface_reflection(model: &UnitCellModel, bitmap: &BitMap, freq: FreqSpec, incidence_deg: &[f64]) -> Result<Vec<Complex64>, PatternError> {
    let n = bitmap.rows() * bitmap.cols();
    if incidence_deg.len() != n {
        return Err(PatternError::Shape {
            expected: n,
            found: incidence_deg.len(),
        });
    }
    bitmap
        .states()
        .iter()
        .zip(incidence_deg)
        .map(|(&s, &a)| {
            Ok(model
                .reflection(s, freq.hz(), a.clamp(0.0, MAX_MODEL_INCIDENCE_DEG))?
                .gamma)
        })
        .collect()
}

/// Sampling of the upper hemisphere: `theta` in `[0, 90]` inclusive,
/// `phi` in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    theta_step_deg: f64,
    phi_step_deg: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            theta_step_deg: 0.5,
            phi_step_deg: 1.0,
        }
    }
}

impl GridSpec {
    pub fn new(theta_step_deg: f64, phi_step_deg: f64) -> Result<Self, PatternError> {
        for (step, range) in [(theta_step_deg, 90.0), (phi_step_deg, 360.0)] {
            let n = range / step;
            if !(step > 0.0 && n.is_finite() && (n - n.round()).abs() < 1e-9) {
                return Err(PatternError::BadGrid { step, range });
            }
        }
        Ok(Self {
            theta_step_deg,
            phi_step_deg,
        })
    }

    pub fn n_theta(&self) -> usize {
        (90.0 / self.theta_step_deg).round() as usize + 1
    }

    pub fn n_phi(&self) -> usize {
        (360.0 / self.phi_step_deg).round() as usize
    }

    pub fn theta_deg(&self, it: usize) -> f64 {
        it as f64 * self.theta_step_deg
    }

    pub fn phi_deg(&self, ip: usize) -> f64 {
        ip as f64 * self.phi_step_deg
    }

    pub fn theta_step_deg(&self) -> f64 {
        self.theta_step_deg
    }

    pub fn phi_step_deg(&self) -> f64 {
        self.phi_step_deg
    }

    /// Composite Simpson weights for `∫ f(θ) sinθ dθ` over `[0, π/2]`; the
    /// last interval falls back to the trapezoid rule when the interval
    /// count is odd.
    fn theta_weights_simpson(&self) -> Vec<f64> {
        let n = self.n_theta();
        let h = self.theta_step_deg.to_radians();
        let mut w = vec![0.0; n];
        let intervals = n - 1;
        let even = intervals - intervals % 2;
        add_simpson(&mut w, 0, even, h);
        if even < intervals {
            w[n - 2] += h / 2.0;
            w[n - 1] += h / 2.0;
        }
        self.apply_sin(w)
    }

    /// Composite Simpson 3/8 weights for the same integral. Interval counts
    /// not divisible by three start with one or two Simpson panels. This is
    /// the independent rule behind [`Pattern::normalization_check`].
    fn theta_weights_three_eighths(&self) -> Vec<f64> {
        let n = self.n_theta();
        let h = self.theta_step_deg.to_radians();
        let intervals = n - 1;
        let lead = match intervals % 3 {
            0 => 0,
            1 => 4,
            _ => 2,
        };
        if intervals < lead + 3 {
            return self.theta_weights_simpson();
        }
        let mut w = vec![0.0; n];
        add_simpson(&mut w, 0, lead, h);
        let mut i = lead;
        while i < intervals {
            for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                w[i + o] += 3.0 * h / 8.0 * c;
            }
            i += 3;
        }
        self.apply_sin(w)
    }

    fn apply_sin(&self, mut w: Vec<f64>) -> Vec<f64> {
        for (it, wi) in w.iter_mut().enumerate() {
            *wi *= self.theta_deg(it).to_radians().sin();
        }
        w
    }
}

/// Adds Simpson 1/3 panels covering intervals `start..start + count`.
fn add_simpson(w: &mut [f64], start: usize, count: usize, h: f64) {
    let mut i = start;
    while i < start + count {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
}

/// Surface currents ready for field evaluation at arbitrary directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSource {
    rows: usize,
    cols: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Vec<Complex64>,
    k: f64,
    cell_area: f64,
    element: ElementFactor,
}

impl SurfaceSource {
    /// Combines illumination, reflection and the incidence-side element factor.
    pub fn new(geom: &ArrayGeometry, gammas: &[Complex64], illumination: &Illumination, element: ElementFactor, freq: FreqSpec) -> Result<Self, PatternError> {
        let n = geom.len();
        for len in [gammas.len(), illumination.amplitude.len(), illumination.incidence_deg.len()] {
            if len != n {
                return Err(PatternError::Shape { expected: n, found: len });
            }
        }
        let weights = gammas
            .iter()
            .zip(&illumination.amplitude)
            .zip(&illumination.incidence_deg)
            .map(|((g, a), th)| a * g * element.value(th.to_radians().cos()))
            .collect();
        Ok(Self {
            rows: geom.rows(),
            cols: geom.cols(),
            xs: geom.row_coords(),
            ys: geom.col_coords(),
            weights,
            k: freq.wavenumber(),
            cell_area: geom.pitch() * geom.pitch(),
            element,
        })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    /// Field toward unit direction `u` using row/column phase factorization.
    pub fn field(&self, u: Vec3) -> Complex64 {
        if u.z < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let ef = self.element.value(u.z);
        if ef == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let col_phase: Vec<Complex64> = self
            .ys
            .iter()
            .map(|y| Complex64::from_polar(1.0, self.k * u.y * y))
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for (i, x) in self.xs.iter().enumerate() {
            let row = &self.weights[i * self.cols..(i + 1) * self.cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (w, b) in row.iter().zip(&col_phase) {
                acc += w * b;
            }
            total += acc * Complex64::from_polar(1.0, self.k * u.x * x);
        }
        total * ef
    }

    /// Direct double sum with one complex exponential per cell.
    pub fn field_naive(&self, u: Vec3) -> Complex64 {
        if u.z < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut total = Complex64::new(0.0, 0.0);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let arg = self.k * (u.x * self.xs[i] + u.y * self.ys[j]);
                total += self.weights[i * self.cols + j] * Complex64::from_polar(1.0, arg);
            }
        }
        total * self.element.value(u.z)
    }

    fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= c);
        out
    }
}

/// Hemispherical far-field samples with their power normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub grid: GridSpec,
    pub freq: FreqSpec,
    source: SurfaceSource,
    /// `θ`-major samples: index `it * n_phi + ip`.
    field: Vec<Complex64>,
    /// `∫∫ |F|² dΩ` over the upper hemisphere.
    total_power: f64,
}

impl Pattern {
    pub fn from_source(source: SurfaceSource, grid: GridSpec, freq: FreqSpec) -> Self {
        let n_phi = grid.n_phi();
        let rows: Vec<Vec<Complex64>> = (0..grid.n_theta())
            .into_par_iter()
            .map(|it| {
                let th = grid.theta_deg(it);
                (0..n_phi)
                    .map(|ip| source.field(Vec3::from_angles_deg(th, grid.phi_deg(ip))))
                    .collect()
            })
            .collect();
        let field: Vec<Complex64> = rows.into_iter().flatten().collect();
        let total_power = integrate(&grid, &field, &grid.theta_weights_simpson(), |f| f.norm_sqr());
        Self {
            grid,
            freq,
            source,
            field,
            total_power,
        }
    }

    pub fn source(&self) -> &SurfaceSource {
        &self.source
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.field
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    pub fn sample(&self, it: usize, ip: usize) -> Complex64 {
        self.field[it * self.grid.n_phi() + ip]
    }

    /// Directivity (linear) toward an arbitrary direction.
    pub fn directivity_toward(&self, u: Vec3) -> f64 {
        4.0 * PI * self.source.field(u).norm_sqr() / self.total_power
    }

    pub fn directivity(&self, it: usize, ip: usize) -> f64 {
        4.0 * PI * self.sample(it, ip).norm_sqr() / self.total_power
    }

    /// Grid index of the strongest sample (first one on ties).
    pub fn peak_index(&self) -> (usize, usize) {
        let n_phi = self.grid.n_phi();
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (n, f) in self.field.iter().enumerate() {
            let p = f.norm_sqr();
            if p > best_p {
                best_p = p;
                best = n;
            }
        }
        (best / n_phi, best % n_phi)
    }

    pub fn peak_directivity_dbi(&self) -> f64 {
        let (it, ip) = self.peak_index();
        to_db(self.directivity(it, ip))
    }

    /// Gain (linear) referenced to the power radiated by the feed,
    /// `G = A²|F|²/λ²` with `A` the cell area.
    ///
    /// Illumination amplitudes are power densities normalized by `P/4π`, so
    /// this is the same bistatic scattering that [`link_s21`] uses: for a
    /// distant receiver `|S21|² = G · G_r · (λ/4πr)²`. Unlike directivity it
    /// counts power that the surface fails to redirect into visible space.
    pub fn gain(&self, it: usize, ip: usize) -> f64 {
        let a = self.source.cell_area;
        let lambda = self.freq.wavelength();
        a * a * self.sample(it, ip).norm_sqr() / (lambda * lambda)
    }

    pub fn peak_gain_dbi(&self) -> f64 {
        let (it, ip) = self.peak_index();
        to_db(self.gain(it, ip))
    }

    /// `∫∫ D dΩ / 4π` evaluated with the Simpson 3/8 rule in `θ`, independent
    /// of the Simpson 1/3 rule used for normalization. Should be 1.
    pub fn normalization_check(&self) -> f64 {
        let w = self.grid.theta_weights_three_eighths();
        let total = integrate(&self.grid, &self.field, &w, |f| 4.0 * PI * f.norm_sqr() / self.total_power);
        total / (4.0 * PI)
    }

    /// CSV with columns `theta_deg,phi_deg,directivity_dbi,field_re,field_im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,phi_deg,directivity_dbi,field_re,field_im\n");
        for it in 0..self.grid.n_theta() {
            for ip in 0..self.grid.n_phi() {
                let f = self.sample(it, ip);
                out.push_str(&format!(
                    "{},{},{:.6},{:.9e},{:.9e}\n",
                    self.grid.theta_deg(it),
                    self.grid.phi_deg(ip),
                    to_db(self.directivity(it, ip)),
                    f.re,
                    f.im
                ));
            }
        }
        out
    }
}

fn integrate(grid: &GridSpec, field: &[Complex64], theta_w: &[f64], f: impl Fn(&Complex64) -> f64) -> f64 {
    let n_phi = grid.n_phi();
    let dphi = grid.phi_step_deg().to_radians();
    let mut total = 0.0;
    for (it, w) in theta_w.iter().enumerate() {
        let ring: f64 = field[it * n_phi..(it + 1) * n_phi].iter().map(&f).sum();
        total += w * ring * dphi;
    }
    total
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Coherent scattered pattern of the surface.
pub fn scattered_pattern(
    geom: &ArrayGeometry,
    gammas: &[Complex64],
    illumination: &Illumination,
    element: ElementFactor,
    grid: GridSpec,
    freq: FreqSpec,
) -> Result<Pattern, PatternError> {
    let source = SurfaceSource::new(geom, gammas, illumination, element, freq)?;
    Ok(Pattern::from_source(source, grid, freq))
}

/// Summary figures of merit for a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    pub peak_theta_deg: f64,
    pub peak_phi_deg: f64,
    /// Peak directivity.
    pub peak_dbi: f64,
    /// Peak gain referenced to the feed's radiated power.
    pub peak_gain_dbi: f64,
    /// Peak minus strongest level outside the main-lobe mask; `None` when
    /// nothing lies outside the mask.
    pub sll_db: Option<f64>,
    pub hpbw_theta_deg: f64,
    pub hpbw_phi_deg: f64,
}

impl PatternMetrics {
    pub fn peak_direction(&self) -> Vec3 {
        Vec3::from_angles_deg(self.peak_theta_deg, self.peak_phi_deg)
    }
}

/// Sampling step of the principal cuts, degrees.
pub const CUT_STEP_DEG: f64 = 0.1;

struct Cut {
    offsets_deg: Vec<f64>,
    power: Vec<f64>,
    dirs: Vec<Vec3>,
}

fn principal_cut(source: &SurfaceSource, peak: Vec3, axis: Vec3) -> Cut {
    let half = (180.0 / CUT_STEP_DEG).round() as i64;
    let offsets_deg: Vec<f64> = (-half..=half).map(|n| n as f64 * CUT_STEP_DEG).collect();
    let dirs: Vec<Vec3> = offsets_deg
        .iter()
        .map(|t| {
            let (s, c) = t.to_radians().sin_cos();
            peak * c + axis * s
        })
        .collect();
    let power = dirs.par_iter().map(|u| source.field(*u).norm_sqr()).collect();
    Cut {
        offsets_deg,
        power,
        dirs,
    }
}

/// Full width between the half-power points on either side of the cut center.
fn half_power_width(cut: &Cut, reference: f64) -> f64 {
    let center = cut.offsets_deg.len() / 2;
    let half = 0.5 * reference;
    let walk = |step: isize| -> f64 {
        let mut n = center as isize;
        loop {
            let next = n + step;
            if next < 0 || next as usize >= cut.power.len() {
                return 180.0;
            }
            let (p0, p1) = (cut.power[n as usize], cut.power[next as usize]);
            if p1 <= half {
                let t = if p0 > p1 { (p0 - half) / (p0 - p1) } else { 0.0 };
                let a = cut.offsets_deg[n as usize];
                let b = cut.offsets_deg[next as usize];
                return (a + (b - a) * t).abs();
            }
            n = next;
        }
    };
    walk(1) + walk(-1)
}

/// Local tangent frame at `peak`: (θ-direction, φ-direction).
fn tangent_frame(theta_deg: f64, phi_deg: f64) -> (Vec3, Vec3) {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    (Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-sp, cp, 0.0))
}

/// Peak, half-power beamwidths and side-lobe level.
///
/// Beamwidths are measured on the two principal cuts through the grid peak
/// (the elevation cut along `e_θ` and the orthogonal cut along `e_φ`),
/// sampled every [`CUT_STEP_DEG`]. The main-lobe mask keeps directions in
/// front of the peak whose angular offset along each principal axis is at
/// most that axis' full HPBW, i.e. twice the half-power half-width. Side
/// lobes are searched over the hemisphere grid and both cuts.
pub fn metrics(pattern: &Pattern) -> Result<PatternMetrics, PatternError> {
    let (it, ip) = pattern.peak_index();
    let peak_power = pattern.sample(it, ip).norm_sqr();
    if peak_power.is_nan() || peak_power <= 0.0 {
        return Err(PatternError::ZeroPattern);
    }
    let theta = pattern.grid.theta_deg(it);
    let phi = pattern.grid.phi_deg(ip);
    let p_hat = Vec3::from_angles_deg(theta, phi);
    let (e_theta, e_phi) = tangent_frame(theta, phi);

    let cut_theta = principal_cut(&pattern.source, p_hat, e_theta);
    let cut_phi = principal_cut(&pattern.source, p_hat, e_phi);
    let hpbw_theta = half_power_width(&cut_theta, peak_power);
    let hpbw_phi = half_power_width(&cut_phi, peak_power);

    let in_main_lobe = |u: Vec3| -> bool {
        if u.dot(p_hat) <= 0.0 {
            return false;
        }
        let a = u.dot(e_theta).clamp(-1.0, 1.0).asin().to_degrees().abs();
        let b = u.dot(e_phi).clamp(-1.0, 1.0).asin().to_degrees().abs();
        a <= hpbw_theta && b <= hpbw_phi
    };

    let grid = pattern.grid;
    let mut outside_max: Option<f64> = None;
    let mut consider = |u: Vec3, p: f64| {
        if !in_main_lobe(u) {
            outside_max = Some(outside_max.map_or(p, |m| m.max(p)));
        }
    };
    for jt in 0..grid.n_theta() {
        for jp in 0..grid.n_phi() {
            let u = Vec3::from_angles_deg(grid.theta_deg(jt), grid.phi_deg(jp));
            consider(u, pattern.sample(jt, jp).norm_sqr());
        }
    }
    for cut in [&cut_theta, &cut_phi] {
        for (u, p) in cut.dirs.iter().zip(&cut.power) {
            if u.z >= 0.0 {
                consider(*u, *p);
            }
        }
    }
    let sll_db = outside_max.map(|m| if m > 0.0 { to_db(peak_power / m) } else { f64::INFINITY });

    Ok(PatternMetrics {
        peak_theta_deg: theta,
        peak_phi_deg: phi,
        peak_dbi: to_db(pattern.directivity(it, ip)),
        peak_gain_dbi: to_db(pattern.gain(it, ip)),
        sll_db: sll_db.filter(|s| s.is_finite()),
        hpbw_theta_deg: hpbw_theta,
        hpbw_phi_deg: hpbw_phi,
    })
}

/// Transmission between two horns via the surface: a sum of per-cell
/// bistatic legs,
///
/// ```text
/// S21 = Σ (λ²/(4π)²) · (4π p²/λ²) · sqrt(g_t g_r) · e_f(θ_t) e_f(θ_r) · Γ · e^{−jk(R_t + R_r)} / (R_t R_r)
///     = Σ (p²/4π) · sqrt(g_t g_r) · e_f(θ_t) e_f(θ_r) · Γ · e^{−jk(R_t + R_r)} / (R_t R_r)
/// ```
///
/// where `p` is the pitch. For a single cell `|S21|²` equals the product of
/// the two Friis legs with the cell's effective-area gain `4π p²/λ²`.
pub fn link_s21(
    tx: &HornSpec,
    rx: &HornSpec,
    geom: &ArrayGeometry,
    gammas: &[Complex64],
    freq: FreqSpec,
    element: ElementFactor,
) -> Result<Complex64, PatternError> {
    for h in [tx, rx] {
        if h.position.z <= 0.0 {
            return Err(PatternError::HornBelowSurface(h.position.z));
        }
    }
    if gammas.len() != geom.len() {
        return Err(PatternError::Shape {
            expected: geom.len(),
            found: gammas.len(),
        });
    }
    let k = freq.wavenumber();
    let lambda = freq.wavelength();
    let scale = (lambda * lambda / (16.0 * PI * PI)) * (4.0 * PI * geom.pitch() * geom.pitch() / (lambda * lambda));
    let mut total = Complex64::new(0.0, 0.0);
    for (n, (r, g)) in geom.positions().into_iter().zip(gammas).enumerate() {
        let (rt, dt) = tx.toward(r);
        let (rr, dr) = rx.toward(r);
        if rt < 1e-12 || rr < 1e-12 {
            return Err(PatternError::HornOnElement(n));
        }
        let horns = (tx.gain(dt) * rx.gain(dr)).sqrt();
        // cosines at the cell toward each horn
        let cells = element.value(-dt.z) * element.value(-dr.z);
        let path = Complex64::from_polar(1.0, -k * (rt + rr)) / (rt * rr);
        total += g * path * (scale * horns * cells);
    }
    Ok(total)
}

pub fn amplitude_db(s21: Complex64) -> f64 {
    20.0 * s21.norm().log10()
}

/// How the reference phase of each synthesized map is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferencePhase {
    Fixed(f64),
    Optimize { samples: usize },
}

/// Illumination geometry used for synthesis and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedModel {
    /// Spherical wave from the Tx horn phase center.
    NearField,
    /// Plane wave from the Tx direction.
    FarField,
}

/// Everything needed to synthesize a configuration and predict its response.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub tx: HornSpec,
    pub rx: HornSpec,
    pub feed: FeedModel,
    pub model: UnitCellModel,
    pub element: ElementFactor,
    pub grid: GridSpec,
    pub reference: ReferencePhase,
}

/// Result of synthesizing and evaluating one (frequency, target) pair.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub freq: FreqSpec,
    pub target: SteeringTarget,
    pub reference_deg: f64,
    pub bitmap: BitMap,
    pub gammas: Vec<Complex64>,
    pub illumination: Illumination,
    pub pattern: Pattern,
    pub metrics: PatternMetrics,
}

#[derive(Debug, Clone)]
pub struct FrequencyRow {
    pub freq: FreqSpec,
    pub reference_deg: f64,
    pub bitmap: BitMap,
    pub metrics: PatternMetrics,
    pub s21: Complex64,
}

#[derive(Debug, Clone)]
pub struct SteeringRow {
    pub target_theta_deg: f64,
    pub target_phi_deg: f64,
    pub reference_deg: f64,
    pub bitmap: BitMap,
    pub metrics: PatternMetrics,
    pub pointing_error_deg: f64,
    /// Transmission with the Rx horn moved onto the target direction.
    pub s21: Complex64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{label}: {source}")]
pub struct SweepError {
    pub label: String,
    #[source]
    pub source: PatternError,
}

impl Scenario {
    /// The 20×20 surface with the Tx horn 0.2 m away at 30° incidence and
    /// the Rx horn 0.3 m away on the normal, ideal cells, cosine elements.
    pub fn reference() -> Self {
        Self {
            geometry: ArrayGeometry::reference(),
            tx: HornSpec::aimed_at_center(0.2, 30.0, 0.0, 20.0).expect("valid horn"),
            rx: HornSpec::aimed_at_center(0.3, 0.0, 180.0, 20.0).expect("valid horn"),
            feed: FeedModel::NearField,
            model: UnitCellModel::ideal(),
            element: ElementFactor::default(),
            grid: GridSpec::default(),
            reference: ReferencePhase::Fixed(0.0),
        }
    }

    pub fn feed_spec(&self) -> Result<FeedSpec, PatternError> {
        Ok(match self.feed {
            FeedModel::NearField => FeedSpec::near_field(self.tx.position)?,
            FeedModel::FarField => FeedSpec::far_field(self.tx.position.normalized())?,
        })
    }

    pub fn illumination(&self, freq: FreqSpec) -> Result<Illumination, PatternError> {
        match self.feed {
            FeedModel::NearField => illuminate(&self.tx, &self.geometry, freq),
            FeedModel::FarField => {
                // plane wave carrying the horn's power density at the center
                let (r, dir) = self.tx.toward(Vec3::ZERO);
                let scale = self.tx.gain(dir).sqrt() / r;
                let mut il = illuminate_plane_wave(self.tx.position, &self.geometry, freq);
                il.amplitude.iter_mut().for_each(|a| *a *= scale);
                Ok(il)
            }
        }
    }

    /// Chooses the reference phase and quantized configuration for `target`.
    pub fn synthesize(&self, freq: FreqSpec, target: &SteeringTarget) -> Result<(f64, BitMap), PatternError> {
        let feed = self.feed_spec()?;
        match self.reference {
            ReferencePhase::Fixed(d) => {
                let map = ideal_phase_map(&self.geometry, &feed, target, freq, d);
                let (on, off) = self.model.phase_states(freq.hz())?;
                Ok((d, quantize_map(&map, on, off)?))
            }
            ReferencePhase::Optimize { samples } => {
                let illumination = self.illumination(freq)?;
                let setup = EvaluationSetup {
                    illumination: &illumination,
                    element: self.element,
                    grid: self.grid,
                    mode: EvaluationMode::Quantized,
                };
                let choice = optimize_reference_phase(&self.geometry, &feed, target, freq, &self.model, samples, &setup)?;
                Ok((choice.reference_deg, choice.bitmap))
            }
        }
    }

    /// Synthesizes the quantized surface for `target` and predicts its pattern.
    pub fn evaluate(&self, freq: FreqSpec, target: &SteeringTarget) -> Result<Evaluation, PatternError> {
        let (reference_deg, bitmap) = self.synthesize(freq, target)?;
        let illumination = self.illumination(freq)?;
        self.evaluate_bitmap(freq, *target, reference_deg, bitmap, illumination)
    }

    fn evaluate_bitmap(
        &self,
        freq: FreqSpec,
        target: SteeringTarget,
        reference_deg: f64,
        bitmap: BitMap,
        illumination: Illumination,
    ) -> Result<Evaluation, PatternError> {
        let gammas = surface_reflection(&self.model, &bitmap, freq, &illumination.incidence_deg)?;
        let pattern = scattered_pattern(&self.geometry, &gammas, &illumination, self.element, self.grid, freq)?;
        let metrics = metrics(&pattern)?;
        Ok(Evaluation {
            freq,
            target,
            reference_deg,
            bitmap,
            gammas,
            illumination,
            pattern,
            metrics,
        })
    }

    /// Evaluates a fixed bitmap (e.g. all-OFF) under this scenario.
    pub fn evaluate_fixed(&self, freq: FreqSpec, bitmap: BitMap) -> Result<Evaluation, PatternError> {
        let illumination = self.illumination(freq)?;
        self.evaluate_bitmap(freq, SteeringTarget::broadside(), 0.0, bitmap, illumination)
    }

    /// Per-cell reflection for a bitmap under this scenario's illumination.
    pub fn gammas(&self, freq: FreqSpec, bitmap: &BitMap) -> Result<Vec<Complex64>, PatternError> {
        let illumination = self.illumination(freq)?;
        surface_reflection(&self.model, bitmap, freq, &illumination.incidence_deg)
    }

    pub fn s21(&self, freq: FreqSpec, gammas: &[Complex64], rx: &HornSpec) -> Result<Complex64, PatternError> {
        link_s21(&self.tx, rx, &self.geometry, gammas, freq, self.element)
    }

    /// One row per frequency, each with its own synthesized configuration.
    /// Failures are reported per row and do not stop the sweep.
    pub fn frequency_sweep(&self, freqs_hz: &[f64], target: &SteeringTarget) -> Vec<Result<FrequencyRow, SweepError>> {
        freqs_hz
            .iter()
            .map(|&f| {
                let label = format!("{} GHz", f / 1e9);
                let run = || -> Result<FrequencyRow, PatternError> {
                    let freq = FreqSpec::new(f)?;
                    let ev = self.evaluate(freq, target)?;
                    let s21 = self.s21(freq, &ev.gammas, &self.rx)?;
                    Ok(FrequencyRow {
                        freq,
                        reference_deg: ev.reference_deg,
                        bitmap: ev.bitmap,
                        metrics: ev.metrics,
                        s21,
                    })
                };
                run().map_err(|source| SweepError { label, source })
            })
            .collect()
    }

    /// One row per target polar angle (azimuth `phi_deg`) at a fixed frequency.
    pub fn steering_sweep(&self, freq_hz: f64, targets_theta_deg: &[f64], phi_deg: f64) -> Vec<Result<SteeringRow, SweepError>> {
        let rx_distance = self.rx.position.norm();
        let rx_gain = self.rx.peak_gain_dbi();
        targets_theta_deg
            .iter()
            .map(|&theta| {
                let label = format!("target {theta} deg");
                let run = || -> Result<SteeringRow, PatternError> {
                    if !(0.0..90.0).contains(&theta) {
                        return Err(SynthesisError::BadDirection.into());
                    }
                    let freq = FreqSpec::new(freq_hz)?;
                    let target = SteeringTarget::from_angles_deg(theta, phi_deg)?;
                    let ev = self.evaluate(freq, &target)?;
                    let rx = HornSpec::aimed_at_center(rx_distance, theta, phi_deg, rx_gain)?;
                    let s21 = self.s21(freq, &ev.gammas, &rx)?;
                    let pointing_error_deg = ev.metrics.peak_direction().angle_to_deg(target.direction());
                    Ok(SteeringRow {
                        target_theta_deg: theta,
                        target_phi_deg: phi_deg,
                        reference_deg: ev.reference_deg,
                        bitmap: ev.bitmap,
                        metrics: ev.metrics,
                        pointing_error_deg,
                        s21,
                    })
                };
                run().map_err(|source| SweepError { label, source })
            })
            .collect()
    }
}

/// Metrics of the same source scaled by a complex constant (used by
/// invariance checks).
pub fn scaled_pattern(pattern: &Pattern, c: Complex64) -> Pattern {
    Pattern::from_source(pattern.source.scaled(c), pattern.grid, pattern.freq)
}

//! Surface layout, frequency conversions and the near/far-field boundary.
//!
//! Conventions shared by every module: the surface lies in the `z = 0`
//! plane, reflected fields live in `z > 0`, polar angles are measured from
//! the `+z` normal and azimuth from `+x`. Row index `i` runs along `x`,
//! column index `j` along `y`. Lengths are meters and frequencies Hz.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum (m/s), exact.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("array must have at least one row and one column (got {rows}x{cols})")]
    EmptyArray { rows: usize, cols: usize },
    #[error("pitch must be positive and finite (got {0} m)")]
    BadPitch(f64),
    #[error("frequency must be positive and finite (got {0} Hz)")]
    BadFrequency(f64),
    #[error("length must be positive and finite (got {0} m)")]
    BadLength(f64),
}

/// Plain 3-vector in meters (or dimensionless for directions).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Unit vector for polar angle `theta` and azimuth `phi`, both in degrees.
    pub fn from_angles_deg(theta_deg: f64, phi_deg: f64) -> Self {
        let (st, ct) = theta_deg.to_radians().sin_cos();
        let (sp, cp) = phi_deg.to_radians().sin_cos();
        Self::new(st * cp, st * sp, ct)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Polar angle from `+z`, degrees.
    pub fn theta_deg(self) -> f64 {
        (self.z / self.norm()).clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Azimuth from `+x` wrapped to `[0, 360)`, degrees.
    pub fn phi_deg(self) -> f64 {
        wrap_deg(self.y.atan2(self.x).to_degrees())
    }

    /// Angle between two directions, degrees.
    pub fn angle_to_deg(self, other: Vec3) -> f64 {
        // atan2 form stays accurate for nearly parallel vectors
        let c = self.dot(other);
        let s = self.cross(other).norm();
        s.atan2(c).to_degrees()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps an angle in degrees to `[0, 360)`.
pub fn wrap_deg(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Geodesic distance between two angles on the 360° circle, in `[0, 180]`.
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// 1-based element index; `row` runs along `x`, `col` along `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementIndex {
    pub row: usize,
    pub col: usize,
}

/// Uniform rectangular lattice of unit cells centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    rows: usize,
    cols: usize,
    pitch: f64,
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize, pitch_m: f64) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::EmptyArray { rows, cols });
        }
        if !(pitch_m.is_finite() && pitch_m > 0.0) {
            return Err(GeometryError::BadPitch(pitch_m));
        }
        Ok(Self {
            rows,
            cols,
            pitch: pitch_m,
        })
    }

    /// The 20×20, 3.85 mm surface.
    pub fn reference() -> Self {
        Self {
            rows: 20,
            cols: 20,
            pitch: 3.85e-3,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical extent `(x, y)` of the aperture, pitch times element count.
    pub fn extent(&self) -> (f64, f64) {
        (self.rows as f64 * self.pitch, self.cols as f64 * self.pitch)
    }

    pub fn area(&self) -> f64 {
        let (a, b) = self.extent();
        a * b
    }

    pub fn diagonal(&self) -> f64 {
        let (a, b) = self.extent();
        a.hypot(b)
    }

    /// Centered `x` coordinate of each row.
    pub fn row_coords(&self) -> Vec<f64> {
        centered_coords(self.rows, self.pitch)
    }

    /// Centered `y` coordinate of each column.
    pub fn col_coords(&self) -> Vec<f64> {
        centered_coords(self.cols, self.pitch)
    }

    pub fn position(&self, index: ElementIndex) -> Vec3 {
        let half_r = (self.rows as f64 - 1.0) / 2.0;
        let half_c = (self.cols as f64 - 1.0) / 2.0;
        Vec3::new(
            (index.row as f64 - 1.0 - half_r) * self.pitch,
            (index.col as f64 - 1.0 - half_c) * self.pitch,
            0.0,
        )
    }

    /// Element positions in row-major order.
    pub fn element_positions(&self) -> Vec<(ElementIndex, Vec3)> {
        let xs = self.row_coords();
        let ys = self.col_coords();
        let mut out = Vec::with_capacity(self.len());
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                out.push((ElementIndex { row: i + 1, col: j + 1 }, Vec3::new(x, y, 0.0)));
            }
        }
        out
    }

    /// Positions only, row-major.
    pub fn positions(&self) -> Vec<Vec3> {
        self.element_positions().into_iter().map(|(_, p)| p).collect()
    }

    pub fn transposed(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            pitch: self.pitch,
        }
    }
}

fn centered_coords(n: usize, pitch: f64) -> Vec<f64> {
    let half = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - half) * pitch).collect()
}

/// A validated operating frequency with its derived wavelength and wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqSpec {
    frequency: f64,
}

impl FreqSpec {
    pub fn new(frequency_hz: f64) -> Result<Self, GeometryError> {
        check_frequency(frequency_hz)?;
        Ok(Self {
            frequency: frequency_hz,
        })
    }

    pub fn from_ghz(ghz: f64) -> Result<Self, GeometryError> {
        Self::new(ghz * 1e9)
    }

    pub fn hz(&self) -> f64 {
        self.frequency
    }

    pub fn ghz(&self) -> f64 {
        self.frequency / 1e9
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.frequency / SPEED_OF_LIGHT
    }
}

fn check_frequency(f: f64) -> Result<(), GeometryError> {
    if f.is_finite() && f > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::BadFrequency(f))
    }
}

/// Free-space wavenumber `2πf/c` in rad/m.
pub fn wavenumber(frequency_hz: f64) -> Result<f64, GeometryError> {
    check_frequency(frequency_hz)?;
    Ok(2.0 * PI * frequency_hz / SPEED_OF_LIGHT)
}

/// Far-field (Fraunhofer) distance `2D²/λ` for an aperture of largest
/// dimension `D`. For rectangular horns `D` is the aperture diagonal.
pub fn far_field_distance(aperture: f64, frequency_hz: f64) -> Result<f64, GeometryError> {
    if !(aperture.is_finite() && aperture > 0.0) {
        return Err(GeometryError::BadLength(aperture));
    }
    check_frequency(frequency_hz)?;
    let lambda = SPEED_OF_LIGHT / frequency_hz;
    Ok(2.0 * aperture * aperture / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_sits_at_origin() {
        let g = ArrayGeometry::new(1, 1, 0.01).unwrap();
        let p = g.element_positions();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].1, Vec3::ZERO);
        assert_eq!(p[0].0, ElementIndex { row: 1, col: 1 });
    }

    #[test]
    fn two_rows_straddle_origin_along_x() {
        let g = ArrayGeometry::new(2, 1, 3.85e-3).unwrap();
        let p = g.positions();
        assert!((p[0].x + 1.925e-3).abs() < 1e-15);
        assert!((p[1].x - 1.925e-3).abs() < 1e-15);
        assert!(p.iter().all(|v| v.y == 0.0 && v.z == 0.0));
    }

    #[test]
    fn reference_extremes() {
        let g = ArrayGeometry::reference();
        let expected = 19.0 / 2.0 * 3.85e-3;
        let p = g.positions();
        let max_x = p.iter().map(|v| v.x).fold(f64::MIN, f64::max);
        let min_y = p.iter().map(|v| v.y).fold(f64::MAX, f64::min);
        assert!((max_x - expected).abs() < 1e-15);
        assert!((min_y + expected).abs() < 1e-15);
        assert!((max_x - 36.575e-3).abs() < 1e-12);
        let (ex, ey) = g.extent();
        assert!((ex - 0.077).abs() < 1e-12 && (ey - 0.077).abs() < 1e-12);
        assert_eq!(p.len(), 400);
    }

    #[test]
    fn centroid_is_origin() {
        for (r, c) in [(1, 7), (3, 4), (20, 20), (5, 1)] {
            let g = ArrayGeometry::new(r, c, 3.85e-3).unwrap();
            let p = g.positions();
            let n = p.len() as f64;
            let cx: f64 = p.iter().map(|v| v.x).sum::<f64>() / n;
            let cy: f64 = p.iter().map(|v| v.y).sum::<f64>() / n;
            assert!(cx.abs() < 1e-12 && cy.abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_swaps_axes() {
        let g = ArrayGeometry::new(3, 5, 2e-3).unwrap();
        let t = g.transposed();
        for (idx, p) in g.element_positions() {
            let q = t.position(ElementIndex { row: idx.col, col: idx.row });
            assert_eq!((p.x, p.y), (q.y, q.x));
        }
    }

    #[test]
    fn nearest_neighbour_spacing_is_pitch() {
        let g = ArrayGeometry::new(6, 5, 3.85e-3).unwrap();
        let p = g.positions();
        for (a, pa) in p.iter().enumerate() {
            let nn = p
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, pb)| pa.distance(*pb))
                .fold(f64::MAX, f64::min);
            assert!((nn - 3.85e-3).abs() < 1e-15, "{nn}");
        }
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(ArrayGeometry::new(0, 3, 1.0).is_err());
        assert!(ArrayGeometry::new(3, 0, 1.0).is_err());
        assert!(ArrayGeometry::new(3, 3, 0.0).is_err());
        assert!(ArrayGeometry::new(3, 3, -1.0).is_err());
        assert!(ArrayGeometry::new(3, 3, f64::NAN).is_err());
    }

    #[test]
    fn wavenumber_values() {
        assert_eq!(wavenumber(1.0).unwrap(), 2.0 * PI / SPEED_OF_LIGHT);
        let k = wavenumber(27.5e9).unwrap();
        assert!((k - 576.36).abs() < 0.01, "{k}");
        let f = FreqSpec::new(27.5e9).unwrap();
        assert!((f.wavelength() - 10.9015e-3).abs() < 1e-7);
        assert!((f.wavenumber() * f.wavelength() - 2.0 * PI).abs() < 1e-12);
        let ratio = wavenumber(29.5e9).unwrap() / wavenumber(24.25e9).unwrap();
        assert!((ratio - 29.5 / 24.25).abs() < 1e-15);
        assert!(wavenumber(0.0).is_err());
        assert!(wavenumber(-5.0).is_err());
    }

    #[test]
    fn far_field_distance_of_horn_aperture() {
        let d = (0.0347f64).hypot(0.047);
        assert!((d - 0.05842).abs() < 1e-5);
        let r = far_field_distance(d, 27.5e9).unwrap();
        assert!((r - 0.626).abs() < 0.005, "{r}");
        let r2 = far_field_distance(2.0 * d, 27.5e9).unwrap();
        assert!((r2 / r - 4.0).abs() < 1e-12);
        // surface diagonal
        let rd = far_field_distance(0.077 * 2f64.sqrt(), 27.5e9).unwrap();
        let oracle = 2.0 * (0.077f64 * 0.077 * 2.0) / (SPEED_OF_LIGHT / 27.5e9);
        assert!((rd - oracle).abs() < 1e-12);
        assert!((rd - 2.18).abs() < 0.01);
        assert!(far_field_distance(0.0, 1e9).is_err());
        assert!(far_field_distance(1.0, -1e9).is_err());
    }

    #[test]
    fn wrap_and_circular_distance() {
        assert_eq!(wrap_deg(-1e-18), 0.0);
        assert_eq!(wrap_deg(360.0), 0.0);
        assert_eq!(wrap_deg(-90.0), 270.0);
        assert_eq!(circular_distance_deg(300.0, 0.0), 60.0);
        assert_eq!(circular_distance_deg(10.0, 350.0), 20.0);
        assert_eq!(circular_distance_deg(0.0, 180.0), 180.0);
    }

    #[test]
    fn angles_round_trip() {
        let u = Vec3::from_angles_deg(40.0, 200.0);
        assert!((u.theta_deg() - 40.0).abs() < 1e-12);
        assert!((u.phi_deg() - 200.0).abs() < 1e-12);
        assert!((u.norm() - 1.0).abs() < 1e-15);
    }
}

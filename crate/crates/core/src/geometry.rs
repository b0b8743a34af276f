//! Shapes, discretized orientations and separating-axis tests.
//!
//! Everything here is exact continuous geometry evaluated in the chosen
//! scalar type. The model builder encodes the same tests as mixed-integer
//! constraints; the verifier uses these functions as ground truth.
//!
//! Angles are in degrees. A rectangle's axes are `u1 = (cos θ, sin θ)` and
//! `u2 = (-sin θ, cos θ)`; `width` runs along `u1`, `height` along `u2`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floating-point scalar the geometric and physical routines are generic over.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Absolute tolerance (m) used by every geometric comparison.
pub const GEOMETRY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("number of rectangle angles must be even and positive, got {0}")]
    OddAngleCount(usize),
    #[error("number of projected angles must be at least 2, got {0}")]
    TooFewProjectedAngles(usize),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("angle {0}° outside [0, 180)")]
    AngleOutOfRange(f64),
    #[error("projected angle {0}° outside [0, 180]")]
    ProjectedAngleOutOfRange(f64),
    #[error("empty interval [{lo}, {hi}] for {axis}")]
    EmptyInterval { axis: &'static str, lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    /// Rotates counter-clockwise about the origin.
    pub fn rotated(self, angle_deg: T) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// `(cos θ, sin θ)` for an angle in degrees.
pub fn unit_vector<T: Scalar>(angle_deg: T) -> Point<T> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    Point::new(c, s)
}

/// Wraps an angle into `[0, 180)`; a rectangle is symmetric under half turns.
pub fn normalize_half_turn<T: Scalar>(angle_deg: T) -> T {
    let half = T::lit(180.0);
    let mut a = angle_deg % half;
    if a < T::zero() {
        a = a + half;
    }
    if a >= half {
        a = a - half;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub width: T,
    pub height: T,
    pub center: Point<T>,
    pub angle_deg: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(width: T, height: T, center: Point<T>, angle_deg: T) -> Result<Self, GeometryError> {
        if !(width > T::zero()) {
            return Err(GeometryError::NonPositive { what: "rectangle width", value: width.to_f64_lossy() });
        }
        if !(height > T::zero()) {
            return Err(GeometryError::NonPositive { what: "rectangle height", value: height.to_f64_lossy() });
        }
        if !(angle_deg >= T::zero() && angle_deg < T::lit(180.0)) {
            return Err(GeometryError::AngleOutOfRange(angle_deg.to_f64_lossy()));
        }
        Ok(Self { width, height, center, angle_deg })
    }

    /// Axis-aligned rectangle centred at `(x, y)`.
    pub fn axis_aligned(width: T, height: T, x: T, y: T) -> Self {
        Self { width, height, center: Point::new(x, y), angle_deg: T::zero() }
    }

    pub fn axes(&self) -> (Point<T>, Point<T>) {
        let u1 = unit_vector(self.angle_deg);
        (u1, Point::new(-u1.y, u1.x))
    }

    /// Half of the rectangle's projected length on a unit direction.
    pub fn half_extent_along(&self, dir: Point<T>) -> T {
        let (u1, u2) = self.axes();
        let two = T::lit(2.0);
        self.width / two * u1.dot(dir).abs() + self.height / two * u2.dot(dir).abs()
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_bbox(&self) -> (T, T) {
        (
            self.half_extent_along(Point::new(T::one(), T::zero())),
            self.half_extent_along(Point::new(T::zero(), T::one())),
        )
    }

    pub fn corners(&self) -> [Point<T>; 4] {
        let (u1, u2) = self.axes();
        let two = T::lit(2.0);
        let a = u1.scale(self.width / two);
        let b = u2.scale(self.height / two);
        let c = self.center;
        [c.sub(a).sub(b), c.add(a).sub(b), c.add(a).add(b), c.sub(a).add(b)]
    }

    /// Expresses a world point in the rectangle's frame (origin at its centre).
    pub fn to_local(&self, p: Point<T>) -> Point<T> {
        let (u1, u2) = self.axes();
        let d = p.sub(self.center);
        Point::new(d.dot(u1), d.dot(u2))
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance_to(&self, p: Point<T>) -> T {
        let local = self.to_local(p);
        let two = T::lit(2.0);
        let dx = (local.x.abs() - self.width / two).max(T::zero());
        let dy = (local.y.abs() - self.height / two).max(T::zero());
        dx.hypot(dy)
    }

    pub fn contains(&self, p: Point<T>, tol: T) -> bool {
        let local = self.to_local(p);
        let two = T::lit(2.0);
        local.x.abs() <= self.width / two + tol && local.y.abs() <= self.height / two + tol
    }

    /// The same rectangle rotated with its centre about the origin.
    pub fn rotated_about_origin(&self, angle_deg: T) -> Self {
        Self {
            center: self.center.rotated(angle_deg),
            angle_deg: normalize_half_turn(self.angle_deg + angle_deg),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle<T> {
    pub radius: T,
    pub center: Point<T>,
    /// Orientation of the projection axis used by the discretized test.
    pub projected_angle_deg: T,
}

impl<T: Scalar> Circle<T> {
    pub fn new(radius: T, center: Point<T>, projected_angle_deg: T) -> Result<Self, GeometryError> {
        if !(radius > T::zero()) {
            return Err(GeometryError::NonPositive { what: "circle radius", value: radius.to_f64_lossy() });
        }
        if !(projected_angle_deg >= T::zero() && projected_angle_deg <= T::lit(180.0)) {
            return Err(GeometryError::ProjectedAngleOutOfRange(projected_angle_deg.to_f64_lossy()));
        }
        Ok(Self { radius, center, projected_angle_deg })
    }

    pub fn at(radius: T, x: T, y: T) -> Self {
        Self { radius, center: Point::new(x, y), projected_angle_deg: T::zero() }
    }

    pub fn rotated_about_origin(&self, angle_deg: T) -> Self {
        Self { center: self.center.rotated(angle_deg), ..*self }
    }
}

/// Either shape; the verifier and renderer treat elements uniformly through it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape<T> {
    Rect(Rect<T>),
    Circle(Circle<T>),
}

impl<T: Scalar> Shape<T> {
    pub fn center(&self) -> Point<T> {
        match self {
            Shape::Rect(r) => r.center,
            Shape::Circle(c) => c.center,
        }
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_bbox(&self) -> (T, T) {
        match self {
            Shape::Rect(r) => r.half_bbox(),
            Shape::Circle(c) => (c.radius, c.radius),
        }
    }
}

/// Exact separation of any two shapes (touching counts as separated).
pub fn shapes_separated<T: Scalar>(a: &Shape<T>, b: &Shape<T>) -> bool {
    penetration_depth(a, b) <= T::lit(GEOMETRY_TOLERANCE)
}

/// Overlap depth of two shapes; zero or negative when they are apart.
pub fn penetration_depth<T: Scalar>(a: &Shape<T>, b: &Shape<T>) -> T {
    match (a, b) {
        (Shape::Rect(a), Shape::Rect(b)) => rect_rect_penetration(a, b),
        (Shape::Rect(d), Shape::Circle(z)) | (Shape::Circle(z), Shape::Rect(d)) => rect_circle_penetration(d, z),
        (Shape::Circle(a), Shape::Circle(b)) => circle_circle_penetration(a, b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpace<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

impl<T: Scalar> DesignSpace<T> {
    pub fn new(x_min: T, x_max: T, y_min: T, y_max: T) -> Result<Self, GeometryError> {
        if !(x_min < x_max) {
            return Err(GeometryError::EmptyInterval { axis: "x", lo: x_min.to_f64_lossy(), hi: x_max.to_f64_lossy() });
        }
        if !(y_min < y_max) {
            return Err(GeometryError::EmptyInterval { axis: "y", lo: y_min.to_f64_lossy(), hi: y_max.to_f64_lossy() });
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    /// How far the shape sticks out of the space; zero or negative when inside.
    pub fn protrusion(&self, shape: &Shape<T>) -> T {
        let c = shape.center();
        let (ex, ey) = shape.half_bbox();
        [
            self.x_min - (c.x - ex),
            (c.x + ex) - self.x_max,
            self.y_min - (c.y - ey),
            (c.y + ey) - self.y_max,
        ]
        .into_iter()
        .fold(T::neg_infinity(), T::max)
    }

    pub fn contains(&self, shape: &Shape<T>) -> bool {
        self.protrusion(shape) <= T::lit(GEOMETRY_TOLERANCE)
    }
}

/// Rectangle angle count `N_a` and projected angle count `N_pa`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleScheme {
    rect_angles: usize,
    projected_angles: usize,
}

impl AngleScheme {
    pub fn new(rect_angles: usize, projected_angles: usize) -> Result<Self, GeometryError> {
        if rect_angles == 0 || rect_angles % 2 != 0 {
            return Err(GeometryError::OddAngleCount(rect_angles));
        }
        if projected_angles < 2 {
            return Err(GeometryError::TooFewProjectedAngles(projected_angles));
        }
        Ok(Self { rect_angles, projected_angles })
    }

    pub fn rect_angle_count(&self) -> usize {
        self.rect_angles
    }

    pub fn projected_angle_count(&self) -> usize {
        self.projected_angles
    }

    pub fn rect_angles<T: Scalar>(&self) -> Vec<T> {
        discretize_angles(self.rect_angles).expect("validated at construction")
    }

    pub fn projected_angles<T: Scalar>(&self) -> Vec<T> {
        discretize_projected_angles(self.projected_angles).expect("validated at construction")
    }

    pub fn rect_angle<T: Scalar>(&self, k: usize) -> T {
        T::lit(180.0 * k as f64 / self.rect_angles as f64)
    }

    /// Index of the angle 90° away from index `k`.
    pub fn perpendicular(&self, k: usize) -> usize {
        (k + self.rect_angles / 2) % self.rect_angles
    }

    /// Index of a discretized rectangle angle, if `angle_deg` is one.
    pub fn rect_angle_index(&self, angle_deg: f64) -> Option<usize> {
        let a = normalize_half_turn(angle_deg);
        (0..self.rect_angles).find(|&k| {
            let d = (self.rect_angle::<f64>(k) - a).abs();
            d < 1e-9 || (180.0 - d) < 1e-9
        })
    }

    /// Distinct projection directions among the projected angles (0° and 180°
    /// span the same axis).
    pub fn distinct_projected_angles(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for a in self.projected_angles::<f64>() {
            let n = normalize_half_turn(a);
            if !out.iter().any(|&b| (b - n).abs() < 1e-9) {
                out.push(n);
            }
        }
        out
    }
}

impl Default for AngleScheme {
    fn default() -> Self {
        Self { rect_angles: 4, projected_angles: 3 }
    }
}

/// `θ_k = 180° · k / N_a` for `k = 0..N_a`.
pub fn discretize_angles<T: Scalar>(n_a: usize) -> Result<Vec<T>, GeometryError> {
    if n_a == 0 || n_a % 2 != 0 {
        return Err(GeometryError::OddAngleCount(n_a));
    }
    Ok((0..n_a).map(|k| T::lit(180.0 * k as f64 / n_a as f64)).collect())
}

/// `θ_kp = 180° · k_p / (N_pa - 1)` for `k_p = 0..N_pa`; both ends included.
pub fn discretize_projected_angles<T: Scalar>(n_pa: usize) -> Result<Vec<T>, GeometryError> {
    if n_pa < 2 {
        return Err(GeometryError::TooFewProjectedAngles(n_pa));
    }
    Ok((0..n_pa).map(|k| T::lit(180.0 * k as f64 / (n_pa - 1) as f64)).collect())
}

/// Left- and right-hand sides of the four rectangle SAT conditions, in order:
/// `u1` of `d`, `u2` of `d`, `u1` of `z`, `u2` of `z`.
pub fn rect_sat_terms<T: Scalar>(d: &Rect<T>, z: &Rect<T>) -> [(T, T); 4] {
    let v = z.center.sub(d.center);
    let (u1d, u2d) = d.axes();
    let (u1z, u2z) = z.axes();
    let two = T::lit(2.0);
    let cond = |axis: Point<T>, own_half: T, other: &Rect<T>, ou1: Point<T>, ou2: Point<T>| {
        let lhs = v.dot(axis).abs();
        let rhs = own_half + (other.width / two * ou1.dot(axis)).abs() + (other.height / two * ou2.dot(axis)).abs();
        (lhs, rhs)
    };
    [
        cond(u1d, d.width / two, z, u1z, u2z),
        cond(u2d, d.height / two, z, u1z, u2z),
        cond(u1z, z.width / two, d, u1d, u2d),
        cond(u2z, z.height / two, d, u1d, u2d),
    ]
}

/// True iff one of the four separating-axis conditions holds.
pub fn rects_separated<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> bool {
    let tol = T::lit(GEOMETRY_TOLERANCE);
    rect_sat_terms(a, b).iter().any(|&(lhs, rhs)| lhs >= rhs - tol)
}

/// Smallest overlap over the four face normals; non-positive when separated.
pub fn rect_rect_penetration<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> T {
    rect_sat_terms(a, b).iter().map(|&(lhs, rhs)| rhs - lhs).fold(T::infinity(), T::min)
}

/// Exact rectangle–circle separation via the closest point on the rectangle.
pub fn rect_circle_separated<T: Scalar>(d: &Rect<T>, z: &Circle<T>) -> bool {
    rect_circle_penetration(d, z) <= T::lit(GEOMETRY_TOLERANCE)
}

pub fn rect_circle_penetration<T: Scalar>(d: &Rect<T>, z: &Circle<T>) -> T {
    z.radius - d.distance_to(z.center)
}

/// Projected-axis test for one projected angle: the centre vector in the
/// rectangle frame, projected on `u_p`, must clear the radius plus the
/// rectangle's support along `u_p`.
pub fn rect_circle_projected<T: Scalar>(d: &Rect<T>, z: &Circle<T>, projected_angle_deg: T) -> bool {
    let (lhs, rhs) = rect_circle_projected_terms(d, z, projected_angle_deg);
    lhs >= rhs - T::lit(GEOMETRY_TOLERANCE)
}

pub fn rect_circle_projected_terms<T: Scalar>(d: &Rect<T>, z: &Circle<T>, projected_angle_deg: T) -> (T, T) {
    let rotated = d.to_local(z.center);
    let up = unit_vector(projected_angle_deg);
    let two = T::lit(2.0);
    let lhs = rotated.dot(up).abs();
    let rhs = z.radius + d.width / two * up.x.abs() + d.height / two * up.y.abs();
    (lhs, rhs)
}

/// Discretized rectangle–circle test: some projected angle of the scheme separates.
pub fn rect_circle_separated_discrete<T: Scalar>(d: &Rect<T>, z: &Circle<T>, scheme: &AngleScheme) -> bool {
    scheme.projected_angles::<T>().into_iter().any(|a| rect_circle_projected(d, z, a))
}

pub fn circles_separated<T: Scalar>(a: &Circle<T>, b: &Circle<T>) -> bool {
    circle_circle_penetration(a, b) <= T::lit(GEOMETRY_TOLERANCE)
}

pub fn circle_circle_penetration<T: Scalar>(a: &Circle<T>, b: &Circle<T>) -> T {
    a.radius + b.radius - b.center.sub(a.center).norm()
}

/// Discretized circle–circle test: the centre vector projected on one of the
/// scheme's projected directions clears the sum of radii.
pub fn circles_separated_discrete<T: Scalar>(a: &Circle<T>, b: &Circle<T>, scheme: &AngleScheme) -> bool {
    let v = b.center.sub(a.center);
    let tol = T::lit(GEOMETRY_TOLERANCE);
    scheme
        .projected_angles::<T>()
        .into_iter()
        .any(|ang| v.dot(unit_vector(ang)).abs() >= a.radius + b.radius - tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sq(x: f64, y: f64, angle: f64) -> Rect<f64> {
        Rect::new(1.0, 1.0, Point::new(x, y), angle).unwrap()
    }

    /// Grid sampling of `a`'s interior; separated iff no sample lies strictly in `b`.
    fn sampled_overlap(a: &Rect<f64>, b: &Shape<f64>, step: f64) -> bool {
        let (u1, u2) = a.axes();
        let nx = (a.width / step).round() as i64;
        let ny = (a.height / step).round() as i64;
        for i in 0..=nx {
            for j in 0..=ny {
                let s = -a.width / 2.0 + i as f64 * a.width / nx as f64;
                let t = -a.height / 2.0 + j as f64 * a.height / ny as f64;
                let p = a.center.add(u1.scale(s)).add(u2.scale(t));
                let inside = match b {
                    Shape::Rect(r) => r.contains(p, -1e-6),
                    Shape::Circle(c) => p.sub(c.center).norm() < c.radius - 1e-6,
                };
                if inside {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn angle_lists() {
        assert_eq!(discretize_angles::<f64>(2).unwrap(), vec![0.0, 90.0]);
        assert_eq!(discretize_angles::<f64>(4).unwrap(), vec![0.0, 45.0, 90.0, 135.0]);
        assert_eq!(discretize_angles::<f64>(3), Err(GeometryError::OddAngleCount(3)));
        assert!(discretize_angles::<f64>(0).is_err());
        assert_eq!(discretize_projected_angles::<f64>(3).unwrap(), vec![0.0, 90.0, 180.0]);
        assert_eq!(discretize_projected_angles::<f64>(2).unwrap(), vec![0.0, 180.0]);
        assert_eq!(discretize_projected_angles::<f64>(5).unwrap(), vec![0.0, 45.0, 90.0, 135.0, 180.0]);
        assert!(discretize_projected_angles::<f64>(1).is_err());
        assert_eq!(discretize_angles::<f32>(4).unwrap(), vec![0.0f32, 45.0, 90.0, 135.0]);
    }

    #[test]
    fn scheme_helpers() {
        let s = AngleScheme::new(8, 3).unwrap();
        assert_eq!(s.perpendicular(0), 4);
        assert_eq!(s.perpendicular(6), 2);
        assert_eq!(s.rect_angle_index(157.5), Some(7));
        assert_eq!(s.rect_angle_index(180.0), Some(0));
        assert_eq!(s.rect_angle_index(10.0), None);
        assert_eq!(s.distinct_projected_angles(), vec![0.0, 90.0]);
    }

    #[test]
    fn axis_aligned_squares() {
        assert!(rects_separated(&sq(0.0, 0.0, 0.0), &sq(2.0, 0.0, 0.0)));
        assert!(!rects_separated(&sq(0.0, 0.0, 0.0), &sq(0.9, 0.0, 0.0)));
        // touching counts as separated
        assert!(rects_separated(&sq(0.0, 0.0, 0.0), &sq(1.0, 0.3, 0.0)));
    }

    #[test]
    fn rotated_square_against_sampling_oracle() {
        let a = sq(0.0, 0.0, 0.0);
        let b = sq(1.2, 0.0, 45.0);
        // The 45° square reaches 0.7071 left of its centre, i.e. x = 0.4929 < 0.5.
        let oracle = sampled_overlap(&a, &Shape::Rect(b), 1e-3);
        assert!(oracle);
        assert_eq!(rects_separated(&a, &b), !oracle);
        let c = sq(1.25, 0.0, 45.0);
        assert_eq!(rects_separated(&a, &c), !sampled_overlap(&a, &Shape::Rect(c), 1e-3));
    }

    #[test]
    fn rect_circle_examples() {
        let d = sq(0.0, 0.0, 0.0);
        assert!(rect_circle_separated(&d, &Circle::at(0.5, 2.0, 0.0)));
        assert!(!rect_circle_separated(&d, &Circle::at(0.5, 0.8, 0.0)));
        assert_relative_eq!(d.distance_to(Point::new(0.8, 0.0)), 0.3, epsilon = 1e-12);

        // 45° square, circle r = 0.3 at (1, 0): in the square's frame the
        // centre sits at (cos45, -sin45) = (0.7071, -0.7071); the nearest
        // corner is (0.5, -0.5) at distance sqrt(2)·0.2071 = 0.2929 < 0.3.
        let d45 = sq(0.0, 0.0, 45.0);
        let z = Circle::at(0.3, 1.0, 0.0);
        let local = Point::new(1.0 * 45f64.to_radians().cos(), -(45f64.to_radians().sin()));
        let dx = local.x.abs() - 0.5;
        let dy = local.y.abs() - 0.5;
        let oracle_dist = dx.max(0.0).hypot(dy.max(0.0));
        assert_relative_eq!(oracle_dist, 0.292_893_218_8, epsilon = 1e-9);
        assert!(!rect_circle_separated(&d45, &z));
        assert!(rect_circle_separated(&d45, &Circle::at(0.29, 1.0, 0.0)));
    }

    #[test]
    fn circle_examples() {
        assert!(circles_separated(&Circle::at(1.0, 0.0, 0.0), &Circle::at(1.0, 2.0, 0.0)));
        assert!(!circles_separated(&Circle::at(1.0, 0.0, 0.0), &Circle::at(1.0, 1.9, 0.0)));
        // sqrt(0.36 + 0.16) = 0.72111 < 0.75
        assert_relative_eq!((0.36f64 + 0.16).sqrt(), 0.721_110_255, epsilon = 1e-9);
        assert!(!circles_separated(&Circle::at(0.5, 0.0, 0.0), &Circle::at(0.25, 0.6, 0.4)));
    }

    #[test]
    fn discrete_tests_are_sufficient_examples() {
        let scheme = AngleScheme::new(4, 3).unwrap();
        let d = sq(0.0, 0.0, 0.0);
        // diagonal placement: exact says apart, axis tests do not
        let z = Circle::at(0.3, 0.75, 0.75);
        assert!(rect_circle_separated(&d, &z));
        assert!(!rect_circle_separated_discrete(&d, &z, &scheme));
        let fine = AngleScheme::new(4, 5).unwrap();
        assert!(rect_circle_separated_discrete(&d, &z, &fine));
        let a = Circle::at(0.5, 0.0, 0.0);
        let b = Circle::at(0.5, 0.8, 0.8);
        assert!(circles_separated(&a, &b));
        assert!(!circles_separated_discrete(&a, &b, &scheme));
    }

    #[test]
    fn design_space_containment() {
        let space = DesignSpace::new(0.0, 2.0, 0.0, 1.0).unwrap();
        assert!(space.contains(&Shape::Rect(sq(0.5, 0.5, 0.0))));
        assert!(!space.contains(&Shape::Rect(sq(0.5, 0.5, 45.0))));
        assert!(space.contains(&Shape::Circle(Circle::at(0.5, 1.5, 0.5))));
        assert!(DesignSpace::new(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert!(Rect::new(0.0, 1.0, Point::new(0.0, 0.0), 0.0).is_err());
        assert!(Rect::new(1.0, 1.0, Point::new(0.0, 0.0), 180.0).is_err());
        assert!(Circle::new(1.0, Point::new(0.0, 0.0), 180.0).is_ok());
        assert!(Circle::new(-1.0, Point::new(0.0, 0.0), 0.0).is_err());
    }

    fn arb_rect() -> impl Strategy<Value = Rect<f64>> {
        (0.1f64..1.5, 0.1f64..1.5, -1.5f64..1.5, -1.5f64..1.5, 0usize..8)
            .prop_map(|(w, h, x, y, k)| Rect::new(w, h, Point::new(x, y), 22.5 * k as f64).unwrap())
    }

    fn arb_circle() -> impl Strategy<Value = Circle<f64>> {
        (0.05f64..0.8, -1.5f64..1.5, -1.5f64..1.5).prop_map(|(r, x, y)| Circle::at(r, x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sat_matches_sampling(a in arb_rect(), b in arb_rect()) {
            let pen = rect_rect_penetration(&a, &b);
            // stay clear of the grazing band where a 1 cm grid cannot decide
            prop_assume!(pen.abs() > 0.02);
            let oracle = sampled_overlap(&a, &Shape::Rect(b), 0.005) || sampled_overlap(&b, &Shape::Rect(a), 0.005);
            prop_assert_eq!(rects_separated(&a, &b), !oracle);
        }

        #[test]
        fn separation_is_symmetric(a in arb_rect(), b in arb_rect(), c in arb_circle(), e in arb_circle()) {
            prop_assert_eq!(rects_separated(&a, &b), rects_separated(&b, &a));
            prop_assert_eq!(circles_separated(&c, &e), circles_separated(&e, &c));
            let sa = Shape::Rect(a);
            let sc = Shape::Circle(c);
            prop_assert_eq!(shapes_separated(&sa, &sc), shapes_separated(&sc, &sa));
        }

        #[test]
        fn rotation_preserves_verdict(a in arb_rect(), b in arb_rect(), c in arb_circle(), phi in 0.0f64..360.0) {
            prop_assume!(rect_rect_penetration(&a, &b).abs() > 1e-6);
            prop_assert_eq!(
                rects_separated(&a, &b),
                rects_separated(&a.rotated_about_origin(phi), &b.rotated_about_origin(phi))
            );
            prop_assume!(rect_circle_penetration(&a, &c).abs() > 1e-6);
            prop_assert_eq!(
                rect_circle_separated(&a, &c),
                rect_circle_separated(&a.rotated_about_origin(phi), &c.rotated_about_origin(phi))
            );
        }

        #[test]
        fn discrete_circle_tests_are_conservative(d in arb_rect(), z in arb_circle(), w in arb_circle(), n_pa in 2usize..7) {
            let scheme = AngleScheme::new(4, n_pa).unwrap();
            if rect_circle_separated_discrete(&d, &z, &scheme) {
                prop_assert!(rect_circle_separated(&d, &z));
            }
            if circles_separated_discrete(&z, &w, &scheme) {
                prop_assert!(circles_separated(&z, &w));
            }
        }

        #[test]
        fn f32_agrees_with_f64(a in arb_rect(), b in arb_rect()) {
            prop_assume!(rect_rect_penetration(&a, &b).abs() > 1e-3);
            let to32 = |r: &Rect<f64>| Rect::<f32>::new(
                r.width as f32, r.height as f32,
                Point::new(r.center.x as f32, r.center.y as f32), r.angle_deg as f32,
            ).unwrap();
            prop_assert_eq!(rects_separated(&a, &b), rects_separated(&to32(&a), &to32(&b)));
        }
    }
}

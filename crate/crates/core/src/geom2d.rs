//! Planar point and affine-transform algebra.
//!
//! Translation, scaling, rotation and shear are all stored in one affine form
//! (a 2x2 linear part plus a translation vector) so that they compose and
//! invert uniformly. Angles are radians, positive counter-clockwise.

use std::ops::{Add, Mul, Sub};

/// A point (or free vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product `self x other`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector at `angle` radians from +x.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Point2 { x: c, y: s }
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Affine map `p -> M p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Transform2 {
    fn default() -> Self {
        Transform2::IDENTITY
    }
}

impl Transform2 {
    pub const IDENTITY: Transform2 = Transform2 {
        m11: 1.0,
        m12: 0.0,
        m21: 0.0,
        m22: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Transform2 {
            tx: dx,
            ty: dy,
            ..Transform2::IDENTITY
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Transform2 {
            m11: sx,
            m22: sy,
            ..Transform2::IDENTITY
        }
    }

    /// Counter-clockwise rotation about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Transform2 {
            m11: c,
            m12: -s,
            m21: s,
            m22: c,
            tx: 0.0,
            ty: 0.0,
        }
    }

    /// `(x, y) -> (x + a*y, y)`
    pub fn shear_x(a: f64) -> Self {
        Transform2 {
            m12: a,
            ..Transform2::IDENTITY
        }
    }

    /// `(x, y) -> (x, b*x + y)`
    pub fn shear_y(b: f64) -> Self {
        Transform2 {
            m21: b,
            ..Transform2::IDENTITY
        }
    }

    /// Rigid motion placing a local frame at `origin` with its +x axis at `heading`.
    /// Maps local coordinates into the parent frame.
    pub fn rigid(origin: Point2, heading: f64) -> Self {
        Transform2::translation(origin.x, origin.y).compose(&Transform2::rotation(heading))
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.m11 * p.x + self.m12 * p.y + self.tx,
            self.m21 * p.x + self.m22 * p.y + self.ty,
        )
    }

    /// Applies only the linear part (for direction vectors).
    pub fn apply_vector(&self, v: Point2) -> Point2 {
        Point2::new(self.m11 * v.x + self.m12 * v.y, self.m21 * v.x + self.m22 * v.y)
    }

    /// Returns the transform equivalent to applying `inner` first, then `self`.
    pub fn compose(&self, inner: &Transform2) -> Transform2 {
        Transform2 {
            m11: self.m11 * inner.m11 + self.m12 * inner.m21,
            m12: self.m11 * inner.m12 + self.m12 * inner.m22,
            m21: self.m21 * inner.m11 + self.m22 * inner.m21,
            m22: self.m21 * inner.m12 + self.m22 * inner.m22,
            tx: self.m11 * inner.tx + self.m12 * inner.ty + self.tx,
            ty: self.m21 * inner.tx + self.m22 * inner.ty + self.ty,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// `None` when the linear part is singular.
    pub fn inverse(&self) -> Option<Transform2> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let (i11, i12, i21, i22) = (
            self.m22 / det,
            -self.m12 / det,
            -self.m21 / det,
            self.m11 / det,
        );
        Some(Transform2 {
            m11: i11,
            m12: i12,
            m21: i21,
            m22: i22,
            tx: -(i11 * self.tx + i12 * self.ty),
            ty: -(i21 * self.tx + i22 * self.ty),
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.m11, self.m12, self.m21, self.m22, self.tx, self.ty]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn make_translation(dx: f64, dy: f64) -> Transform2 {
    Transform2::translation(dx, dy)
}

pub fn make_scaling(sx: f64, sy: f64) -> Transform2 {
    Transform2::scaling(sx, sy)
}

pub fn make_rotation(theta: f64) -> Transform2 {
    Transform2::rotation(theta)
}

pub fn make_shear_x(a: f64) -> Transform2 {
    Transform2::shear_x(a)
}

pub fn make_shear_y(b: f64) -> Transform2 {
    Transform2::shear_y(b)
}

/// `apply(compose(outer, inner), p) == apply(outer, apply(inner, p))`
pub fn compose(outer: &Transform2, inner: &Transform2) -> Transform2 {
    outer.compose(inner)
}

pub fn apply(t: &Transform2, p: Point2) -> Point2 {
    t.apply(p)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const TOL: f64 = 1e-12;

    fn close(a: Point2, b: Point2) -> bool {
        (a.x - b.x).abs() <= TOL && (a.y - b.y).abs() <= TOL
    }

    #[test]
    fn translation_examples() {
        assert_eq!(apply(&make_translation(0.0, 0.0), Point2::new(3.0, 7.0)), Point2::new(3.0, 7.0));
        assert_eq!(apply(&make_translation(2.0, -1.0), Point2::new(1.0, 1.0)), Point2::new(3.0, 0.0));
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(apply(&make_scaling(1.0, 1.0), Point2::new(4.0, 5.0)), Point2::new(4.0, 5.0));
        assert_eq!(apply(&make_scaling(2.0, 3.0), Point2::new(1.0, 1.0)), Point2::new(2.0, 3.0));
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(apply(&make_rotation(0.0), Point2::new(1.0, 2.0)), Point2::new(1.0, 2.0));
        assert!(close(apply(&make_rotation(FRAC_PI_2), Point2::new(1.0, 0.0)), Point2::new(0.0, 1.0)));
    }

    #[test]
    fn shear_examples() {
        assert_eq!(apply(&make_shear_x(0.0), Point2::new(2.0, 3.0)), Point2::new(2.0, 3.0));
        assert_eq!(apply(&make_shear_x(1.0), Point2::new(0.0, 2.0)), Point2::new(2.0, 2.0));
        assert_eq!(apply(&make_shear_y(2.0), Point2::new(3.0, 1.0)), Point2::new(3.0, 7.0));
        assert_eq!(make_shear_x(0.7).determinant(), 1.0);
    }

    #[test]
    fn compose_identity_is_neutral() {
        let t = Transform2 { m11: 1.5, m12: -0.2, m21: 0.3, m22: 0.9, tx: 4.0, ty: -2.0 };
        assert_eq!(compose(&Transform2::IDENTITY, &t), t);
        assert_eq!(compose(&t, &Transform2::IDENTITY), t);
    }

    #[test]
    fn inverse_of_singular_is_none() {
        assert!(make_scaling(0.0, 1.0).inverse().is_none());
        let r = make_rotation(0.3).compose(&make_translation(1.0, 2.0));
        let back = r.inverse().unwrap().compose(&r);
        assert!(close(back.apply(Point2::new(5.0, -3.0)), Point2::new(5.0, -3.0)));
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < TOL);
        assert!((normalize_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < TOL);
        assert_eq!(normalize_angle(0.25), 0.25);
    }

    #[test]
    fn rigid_maps_local_forward_to_heading() {
        let t = Transform2::rigid(Point2::new(1.0, 1.0), FRAC_PI_2);
        assert!(close(t.apply(Point2::new(2.0, 0.0)), Point2::new(1.0, 3.0)));
    }
}

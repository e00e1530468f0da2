use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Planar point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (*self - *other).norm()
    }

    pub fn norm(&self) -> T {
        self.x.hypot(self.y)
    }

    pub fn cross(&self, other: &Self) -> T {
        self.x * other.y - self.y * other.x
    }

    /// Clockwise perpendicular: the "right-hand" side of a heading.
    pub fn right(&self) -> Self {
        Self::new(self.y, -self.x)
    }
}

impl<T: Scalar> Add for Point<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Point<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Mul<T> for Point<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

pub(crate) fn polyline_length<T: Scalar>(points: &[Point<T>]) -> T {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

pub(crate) fn point_at_arc_length<T: Scalar>(points: &[Point<T>], s: T) -> Point<T> {
    let mut walked = T::zero();
    for w in points.windows(2) {
        let len = w[0].distance(&w[1]);
        if s <= walked + len && len > T::zero() {
            let f = ((s - walked) / len).max(T::zero()).min(T::one());
            return w[0] + (w[1] - w[0]) * f;
        }
        walked = walked + len;
    }
    *points.last().expect("non-empty polyline")
}

/// Proper crossings of two polylines as `(point, arc length on a, arc length on b)`.
///
/// Parallel segments never report a crossing.
pub(crate) fn polyline_crossings<T: Scalar>(
    a: &[Point<T>],
    b: &[Point<T>],
) -> Vec<(Point<T>, T, T)> {
    let mut out: Vec<(Point<T>, T, T)> = Vec::new();
    let eps = T::lit(1e-12);
    let mut sa = T::zero();
    for wa in a.windows(2) {
        let da = wa[1] - wa[0];
        let la = da.norm();
        let mut sb = T::zero();
        for wb in b.windows(2) {
            let db = wb[1] - wb[0];
            let lb = db.norm();
            let denom = da.cross(&db);
            if denom.abs() > eps * la * lb {
                let w = wb[0] - wa[0];
                let u = w.cross(&db) / denom;
                let v = w.cross(&da) / denom;
                let range = |x: T| x >= -eps && x <= T::one() + eps;
                if range(u) && range(v) {
                    let u = u.max(T::zero()).min(T::one());
                    let v = v.max(T::zero()).min(T::one());
                    let p = wa[0] + da * u;
                    let hit = (p, sa + la * u, sb + lb * v);
                    // A crossing at a shared vertex shows up on adjacent segments.
                    if !out.iter().any(|q| q.0.distance(&p) < T::lit(1e-6)) {
                        out.push(hit);
                    }
                }
            }
            sb = sb + lb;
        }
        sa = sa + la;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perpendicular_segments_cross_once() {
        let a = [Point::new(-1.0f64, 0.0), Point::new(1.0, 0.0)];
        let b = [Point::new(0.0, -2.0), Point::new(0.0, 2.0)];
        let hits = polyline_crossings(&a, &b);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
        assert!((hits[0].2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_segments_do_not_cross() {
        let a = [Point::new(0.0f64, 0.0), Point::new(1.0, 0.0)];
        let b = [Point::new(0.0, 1.0), Point::new(1.0, 1.0)];
        assert!(polyline_crossings(&a, &b).is_empty());
    }

    #[test]
    fn arc_length_lookup() {
        let pts = [Point::new(0.0f64, 0.0), Point::new(3.0, 0.0), Point::new(3.0, 4.0)];
        assert_eq!(polyline_length(&pts), 7.0);
        let p = point_at_arc_length(&pts, 5.0);
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
    }
}

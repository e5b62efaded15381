//! Planar geometry for the simulators: ray casting, segment tests and
//! swept-point collision against axis-aligned boxes.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// Line segment between two points, used as a wall in the lidar world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    /// Distance along the unit ray `origin + t·dir` to the first hit, if any.
    pub fn ray_hit(&self, origin: Point, dir: Point) -> Option<f64> {
        let e = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let denom = cross(dir, e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = [self.a[0] - origin[0], self.a[1] - origin[1]];
        let t = cross(w, e) / denom;
        let u = cross(w, dir) / denom;
        (t >= 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let e = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - self.a[0]) * e[0] + (p[1] - self.a[1]) * e[1]) / len2).clamp(0.0, 1.0)
        };
        let q = [self.a[0] + t * e[0], self.a[1] + t * e[1]];
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    /// True when the closed segments `self` and `p0→p1` share a point.
    pub fn intersects(&self, p0: Point, p1: Point) -> bool {
        let o1 = orient(self.a, self.b, p0);
        let o2 = orient(self.a, self.b, p1);
        let o3 = orient(p0, p1, self.a);
        let o4 = orient(p0, p1, self.b);
        if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
            return true;
        }
        (o1 == 0.0 && on_segment(self.a, self.b, p0))
            || (o2 == 0.0 && on_segment(self.a, self.b, p1))
            || (o3 == 0.0 && on_segment(p0, p1, self.a))
            || (o4 == 0.0 && on_segment(p0, p1, self.b))
    }
}

fn cross(u: Point, v: Point) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Distance to the nearest segment hit by the unit ray, clipped to `max_range`.
pub fn cast_ray(walls: &[Segment], origin: Point, angle: f64, max_range: f64) -> f64 {
    let dir = [angle.cos(), angle.sin()];
    walls
        .iter()
        .filter_map(|w| w.ray_hit(origin, dir))
        .fold(max_range, f64::min)
}

/// Axis-aligned box with open interior `(min, max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn contains_interior(&self, p: Point) -> bool {
        (0..2).all(|k| p[k] > self.min[k] && p[k] < self.max[k])
    }

    /// Fraction `t ∈ [0, 1)` of the move `p → p + delta` at which the point
    /// first enters the interior. Moves that start inside are ignored.
    pub fn entry_fraction(&self, p: Point, delta: Point) -> Option<f64> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..2 {
            if delta[k] == 0.0 {
                if p[k] <= self.min[k] || p[k] >= self.max[k] {
                    return None;
                }
            } else {
                let a = (self.min[k] - p[k]) / delta[k];
                let b = (self.max[k] - p[k]) / delta[k];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 >= 0.0 && t0 < 1.0 && t0 < t1).then_some(t0)
    }
}

/// Fraction of the move `p → p + delta` at which the point leaves the
/// closed box `[lo, hi]²`, if it does.
pub fn exit_fraction(lo: Point, hi: Point, p: Point, delta: Point) -> Option<f64> {
    let mut t = f64::INFINITY;
    for k in 0..2 {
        let end = p[k] + delta[k];
        if end > hi[k] {
            t = t.min((hi[k] - p[k]) / delta[k]);
        } else if end < lo[k] {
            t = t.min((lo[k] - p[k]) / delta[k]);
        }
    }
    t.is_finite().then_some(t.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_8;

    #[test]
    fn ray_hits_perpendicular_wall() {
        let wall = Segment::new([2.0, -100.0], [2.0, 100.0]);
        for k in -3..=3 {
            let theta = k as f64 * FRAC_PI_8;
            let r = cast_ray(&[wall], [0.0, 0.0], theta, 5.0);
            let expect = (2.0 / theta.cos()).min(5.0);
            assert!((r - expect).abs() < 1e-12, "k={k}: {r} vs {expect}");
        }
    }

    #[test]
    fn ray_misses_behind_and_parallel() {
        let wall = Segment::new([-2.0, -1.0], [-2.0, 1.0]);
        assert_eq!(cast_ray(&[wall], [0.0, 0.0], 0.0, 5.0), 5.0);
        let par = Segment::new([0.0, 1.0], [4.0, 1.0]);
        assert_eq!(cast_ray(&[par], [0.0, 0.0], 0.0, 5.0), 5.0);
    }

    #[test]
    fn segment_distance_and_intersection() {
        let s = Segment::new([0.0, 0.0], [4.0, 0.0]);
        assert!((s.distance_to([2.0, 3.0]) - 3.0).abs() < 1e-12);
        assert!((s.distance_to([7.0, 4.0]) - 5.0).abs() < 1e-12);
        assert!(s.intersects([1.0, -1.0], [1.0, 1.0]));
        assert!(!s.intersects([5.0, -1.0], [5.0, 1.0]));
    }

    #[test]
    fn box_entry() {
        let b = Aabb {
            min: [4.5, 0.0],
            max: [5.5, 10.0],
        };
        let t = b.entry_fraction([3.0, 3.0], [2.0, 0.0]).unwrap();
        assert!((t - 0.75).abs() < 1e-12);
        assert!(b.entry_fraction([3.0, 3.0], [1.0, 0.0]).is_none());
        assert!(b.entry_fraction([4.5, 3.0], [0.0, 1.0]).is_none());
        assert_eq!(b.entry_fraction([4.5, 3.0], [1.0, 0.0]), Some(0.0));
    }

    #[test]
    fn bounds_exit() {
        let t = exit_fraction([-0.5, -0.5], [20.5, 20.5], [20.0, 3.0], [1.0, 0.0]).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert!(exit_fraction([-0.5, -0.5], [20.5, 20.5], [3.0, 3.0], [1.0, 0.0]).is_none());
    }
}

//! Planar geometry: vectors, poses, oriented boxes, polylines.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Normalize an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the cross product; positive when `o` is to the left.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn unit(angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c, s)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Position plus heading. Headings are kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Express a world point in this pose's frame (x forward, y left).
    pub fn to_local(self, world: Vec2) -> Vec2 {
        (world - self.position()).rotate(-self.heading)
    }

    /// Map a point from this pose's frame back to world coordinates.
    pub fn to_world(self, local: Vec2) -> Vec2 {
        self.position() + local.rotate(self.heading)
    }
}

/// Oriented bounding box, axis-aligned to `heading`.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub center: Vec2,
    pub half_length: f64,
    pub half_width: f64,
    pub heading: f64,
}

impl Obb {
    pub fn new(pose: Pose, length: f64, width: f64) -> Self {
        Obb {
            center: pose.position(),
            half_length: length * 0.5,
            half_width: width * 0.5,
            heading: pose.heading,
        }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let fwd = Vec2::unit(self.heading).scale(self.half_length);
        let left = Vec2::unit(self.heading + PI / 2.0).scale(self.half_width);
        [
            self.center + fwd + left,
            self.center + fwd - left,
            self.center - fwd - left,
            self.center - fwd + left,
        ]
    }

    fn axes(&self) -> [Vec2; 2] {
        [Vec2::unit(self.heading), Vec2::unit(self.heading + PI / 2.0)]
    }
}

fn projection_interval(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corners {
        let p = c.dot(axis);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

/// Separating-axis overlap test for two oriented boxes. Touching edges
/// count as overlap.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (a_lo, a_hi) = projection_interval(&ca, axis);
        let (b_lo, b_hi) = projection_interval(&cb, axis);
        if a_hi < b_lo || b_hi < a_lo {
            return false;
        }
    }
    true
}

/// Where a point lands on a polyline.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub lateral: f64,
    pub segment: usize,
}

/// A piecewise-linear path with cached cumulative arc length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    /// Requires at least two points and strictly positive segment lengths.
    pub fn new(points: Vec<Vec2>) -> crate::Result<Self> {
        if points.len() < 2 {
            return Err(crate::Error::invalid(
                "polyline",
                format!("need at least 2 points, got {}", points.len()),
            ));
        }
        let mut cum = Vec::with_capacity(points.len());
        cum.push(0.0);
        for w in points.windows(2) {
            let d = (w[1] - w[0]).norm();
            if !(d > 1e-9) {
                return Err(crate::Error::invalid(
                    "polyline",
                    format!("degenerate segment of length {d}"),
                ));
            }
            cum.push(cum.last().unwrap() + d);
        }
        Ok(Polyline { points, cum })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn total_length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    /// Index of the segment containing arc length `s` (clamped).
    fn segment_at(&self, s: f64) -> usize {
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        }
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.total_length());
        let i = self.segment_at(s);
        let t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        self.points[i] + (self.points[i + 1] - self.points[i]).scale(t)
    }

    /// Tangent heading of the segment containing `s`.
    pub fn segment_heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s.clamp(0.0, self.total_length()));
        let d = self.points[i + 1] - self.points[i];
        d.y.atan2(d.x)
    }

    /// Closest point on the polyline, by exhaustive segment scan.
    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            lateral: 0.0,
            segment: 0,
        };
        let mut best_d2 = f64::INFINITY;
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let d = self.points[i + 1] - a;
            let len = self.cum[i + 1] - self.cum[i];
            let t = ((p - a).dot(d) / (len * len)).clamp(0.0, 1.0);
            let q = a + d.scale(t);
            let d2 = (p - q).norm().powi(2);
            if d2 < best_d2 - 1e-12 {
                best_d2 = d2;
                let along = d.scale(1.0 / len);
                best = Projection {
                    s: self.cum[i] + t * len,
                    lateral: along.cross(p - q),
                    segment: i,
                };
            }
        }
        best
    }
}

//! The ego's reference path: a centerline polyline with lane width, speed
//! limit, and smooth heading/curvature lookups by arc length.

use crate::geom::{normalize_angle, Polyline, Projection, Vec2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Route {
    line: Polyline,
    /// Unwrapped tangent heading at each vertex (continuous across the
    /// +-pi seam, so linear interpolation is safe).
    headings: Vec<f64>,
    /// Signed curvature at each vertex, 1/m, positive for left turns.
    curvatures: Vec<f64>,
    pub lane_half_width: f64,
    pub speed_limit: f64,
}

impl Route {
    pub fn new(points: Vec<Vec2>, lane_half_width: f64, speed_limit: f64) -> Result<Self> {
        if !(lane_half_width > 0.0) {
            return Err(Error::invalid(
                "route",
                format!("lane_half_width {lane_half_width}"),
            ));
        }
        if !(speed_limit > 0.0) {
            return Err(Error::invalid("route", format!("speed_limit {speed_limit}")));
        }
        let line = Polyline::new(points)?;
        let pts = line.points();
        let n = pts.len();

        // Per-segment headings, then unwrap so consecutive values differ by
        // less than pi.
        let mut seg = Vec::with_capacity(n - 1);
        for w in pts.windows(2) {
            let d = w[1] - w[0];
            seg.push(d.y.atan2(d.x));
        }
        let mut unwrapped = Vec::with_capacity(n - 1);
        unwrapped.push(seg[0]);
        for &h in &seg[1..] {
            let prev = *unwrapped.last().unwrap();
            unwrapped.push(prev + normalize_angle(h - prev));
        }

        // Vertex headings: endpoint segments at the ends, averages inside.
        let mut headings = Vec::with_capacity(n);
        headings.push(unwrapped[0]);
        for i in 1..n - 1 {
            headings.push(0.5 * (unwrapped[i - 1] + unwrapped[i]));
        }
        headings.push(unwrapped[n - 2]);

        // Central-difference curvature over arc length; one-sided at ends.
        let cum = line.cumulative();
        let mut curvatures = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            let ds = cum[hi] - cum[lo];
            curvatures.push((headings[hi] - headings[lo]) / ds);
        }

        Ok(Route {
            line,
            headings,
            curvatures,
            lane_half_width,
            speed_limit,
        })
    }

    /// Straight route along +x starting at the origin.
    pub fn straight(length: f64, spacing: f64, lane_half_width: f64, speed_limit: f64) -> Result<Self> {
        let n = (length / spacing).ceil() as usize;
        let pts = (0..=n).map(|i| Vec2::new(i as f64 * spacing, 0.0)).collect();
        Route::new(pts, lane_half_width, speed_limit)
    }

    pub fn total_length(&self) -> f64 {
        self.line.total_length()
    }

    pub fn points(&self) -> &[Vec2] {
        self.line.points()
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        self.line.point_at(s)
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.line.project(p)
    }

    fn interp(&self, values: &[f64], s: f64) -> f64 {
        let cum = self.line.cumulative();
        let s = s.clamp(0.0, self.total_length());
        let i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(cum.len() - 2),
            Err(i) => i.saturating_sub(1).min(cum.len() - 2),
        };
        let t = (s - cum[i]) / (cum[i + 1] - cum[i]);
        values[i] + t * (values[i + 1] - values[i])
    }

    /// Tangent heading at arc length `s`, in `(-pi, pi]`.
    pub fn heading_at(&self, s: f64) -> f64 {
        normalize_angle(self.interp(&self.headings, s))
    }

    /// Signed curvature at arc length `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.interp(&self.curvatures, s)
    }
}

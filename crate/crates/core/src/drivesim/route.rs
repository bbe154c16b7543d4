//! Waypoint routes: validation, procedural generation, and projection queries.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::{cross, dist, dot, menger_curvature, norm, project_on_segment, sub, wrap_angle, Point};

/// Largest path curvature (1/m) generated routes may contain.
pub const DRIVABLE_CURVATURE: f64 = 0.1;

fn default_half_width() -> f64 {
    1.75
}

fn default_goal_radius() -> f64 {
    2.0
}

/// A route as an ordered waypoint polyline. The polyline is the lane centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub waypoints: Vec<Point>,
    #[serde(default = "default_half_width")]
    pub lane_half_width: f64,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RouteSpec {
    pub fn new(waypoints: Vec<Point>, lane_half_width: f64, goal_radius: f64) -> Result<Self> {
        let r = Self { waypoints, lane_half_width, goal_radius, seed: None };
        r.validate()?;
        Ok(r)
    }

    /// Checks the route invariants: at least two finite waypoints, distinct
    /// consecutive points, positive widths, and no two parts of the polyline
    /// that are far apart along the route coming within a lane width of each other.
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return contract("a route needs at least 2 waypoints");
        }
        if !(self.lane_half_width > 0.0) || !(self.goal_radius > 0.0) {
            return contract("lane half-width and goal radius must be positive");
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return contract("non-finite waypoint");
        }
        for (i, w) in self.waypoints.windows(2).enumerate() {
            if w[0] == w[1] {
                return contract(format!("waypoints {i} and {} coincide", i + 1));
            }
        }
        // Sample the centerline densely; no sample may come within a lane
        // width of a part of the route that is far away along the route.
        let cum = cumulative_lengths(&self.waypoints);
        let clearance = 2.0 * self.lane_half_width;
        let spacing = self.lane_half_width / 4.0;
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let seg_len = cum[i + 1] - cum[i];
            let samples = (seg_len / spacing).ceil() as usize;
            for k in 0..=samples {
                let t = k as f64 / samples as f64;
                let p = [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
                let s = cum[i] + t * seg_len;
                for (j, v) in self.waypoints.windows(2).enumerate() {
                    let (d, u, _) = project_on_segment(p, v[0], v[1]);
                    let s_foot = cum[j] + u * (cum[j + 1] - cum[j]);
                    if d < clearance && (s_foot - s).abs() > 2.0 * clearance {
                        return contract(format!(
                            "route passes within {clearance} m of itself (segments {i} and {j})"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        *cumulative_lengths(&self.waypoints).last().expect("non-empty")
    }

    pub fn goal(&self) -> Point {
        *self.waypoints.last().expect("validated route")
    }

    /// Reflection across the x axis (used for symmetry checks).
    pub fn mirrored(&self) -> Self {
        Self { waypoints: self.waypoints.iter().map(|p| [p[0], -p[1]]).collect(), ..self.clone() }
    }
}

fn cumulative_lengths(pts: &[Point]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(pts.len());
    let mut s = 0.0;
    cum.push(0.0);
    for w in pts.windows(2) {
        s += dist(w[0], w[1]);
        cum.push(s);
    }
    cum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    Straight,
    Curvy,
}

/// Knobs for [`generate_route`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouteParams {
    pub kind: RouteKind,
    pub min_length: f64,
    pub max_length: f64,
    pub max_curvature: f64,
    pub spacing: f64,
    /// Bound on the heading deviation from the initial direction (rad),
    /// which keeps routes from folding back onto themselves.
    pub max_heading_change: f64,
    pub lane_half_width: f64,
    pub goal_radius: f64,
}

impl Default for RouteParams {
    fn default() -> Self {
        Self {
            kind: RouteKind::Curvy,
            min_length: 100.0,
            max_length: 300.0,
            max_curvature: DRIVABLE_CURVATURE,
            spacing: 2.0,
            max_heading_change: 1.3,
            lane_half_width: default_half_width(),
            goal_radius: default_goal_radius(),
        }
    }
}

impl RouteParams {
    pub fn straight() -> Self {
        Self { kind: RouteKind::Straight, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_length > 0.0 && self.min_length <= self.max_length && self.max_length.is_finite()) {
            return contract(format!("route length bounds [{}, {}] are infeasible", self.min_length, self.max_length));
        }
        if !(self.spacing > 0.0 && self.spacing <= self.min_length / 2.0) {
            return contract(format!("waypoint spacing {} is infeasible", self.spacing));
        }
        if !(0.0..=DRIVABLE_CURVATURE).contains(&self.max_curvature) {
            return contract(format!(
                "max curvature {} outside [0, {DRIVABLE_CURVATURE}]",
                self.max_curvature
            ));
        }
        if !(self.max_heading_change > 0.0 && self.max_heading_change < PI / 2.0) {
            return contract("max heading change must lie in (0, π/2)");
        }
        if !(self.lane_half_width > 0.0 && self.goal_radius > 0.0) {
            return contract("lane half-width and goal radius must be positive");
        }
        Ok(())
    }
}

/// Procedural route: a random start pose and length, then a chain of arcs
/// and straights with bounded curvature, sampled every `spacing` metres.
/// Deterministic in `seed`.
pub fn generate_route(seed: u64, params: &RouteParams) -> Result<RouteSpec> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = if params.max_length > params.min_length {
        rng.random_range(params.min_length..=params.max_length)
    } else {
        params.min_length
    };
    let start_heading = rng.random_range(-PI..PI);
    let origin: Point = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];

    let n = (length / params.spacing).ceil() as usize;
    let step = length / n as f64;
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(origin);

    match params.kind {
        RouteKind::Straight => {
            let dir = [start_heading.cos(), start_heading.sin()];
            for i in 1..=n {
                let s = i as f64 * step;
                pts.push([origin[0] + s * dir[0], origin[1] + s * dir[1]]);
            }
        }
        RouteKind::Curvy => {
            // Curvature is piecewise constant over pieces of 15-40 m. Points
            // are advanced along exact arcs, with the chord taken at the
            // mid-step heading.
            let kappa_cap = 0.9 * params.max_curvature;
            let mut heading = start_heading;
            let mut piece_left = 0.0;
            let mut kappa = 0.0;
            let mut p = origin;
            for _ in 0..n {
                if piece_left <= 0.0 {
                    piece_left = rng.random_range(15.0..40.0);
                    kappa = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-kappa_cap..=kappa_cap) };
                }
                let dev = wrap_angle(heading - start_heading);
                if (dev + kappa * step).abs() > params.max_heading_change {
                    kappa = -kappa;
                }
                let turn = kappa * step;
                let chord = if turn.abs() > 1e-12 { 2.0 * (turn / 2.0).sin() / kappa } else { step };
                let mid = heading + turn / 2.0;
                p = [p[0] + chord * mid.cos(), p[1] + chord * mid.sin()];
                pts.push(p);
                heading += turn;
                piece_left -= step;
            }
        }
    }

    let route = RouteSpec {
        waypoints: pts,
        lane_half_width: params.lane_half_width,
        goal_radius: params.goal_radius,
        seed: Some(seed),
    };
    route.validate()?;
    Ok(route)
}

/// Largest absolute Menger curvature over consecutive waypoint triples.
pub fn max_abs_curvature(route: &RouteSpec) -> f64 {
    route
        .waypoints
        .windows(3)
        .map(|w| menger_curvature(w[0], w[1], w[2]).abs())
        .fold(0.0, f64::max)
}

/// Closest-point query result against a route polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub segment: usize,
    pub foot: Point,
    pub distance: f64,
    /// Left-positive signed lateral offset.
    pub signed_offset: f64,
    /// Arclength of the foot point along the route.
    pub arclength: f64,
    /// Direction of the segment containing the foot point.
    pub tangent_angle: f64,
}

/// Precomputed route geometry for projection and curvature lookups.
#[derive(Debug, Clone)]
pub struct RouteGeometry {
    points: Vec<Point>,
    cum: Vec<f64>,
    vertex_curvature: Vec<f64>,
}

impl RouteGeometry {
    pub fn new(route: &RouteSpec) -> Self {
        let points = route.waypoints.clone();
        let cum = cumulative_lengths(&points);
        let mut vertex_curvature = vec![0.0; points.len()];
        for i in 1..points.len().saturating_sub(1) {
            vertex_curvature[i] = menger_curvature(points[i - 1], points[i], points[i + 1]);
        }
        Self { points, cum, vertex_curvature }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn total_length(&self) -> f64 {
        *self.cum.last().expect("non-empty")
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn segment(&self, i: usize) -> (Point, Point) {
        (self.points[i], self.points[i + 1])
    }

    /// Exact nearest point over all segments (first segment wins ties).
    pub fn project(&self, p: Point) -> Projection {
        let mut best: Option<(f64, usize, f64, Point)> = None;
        for i in 0..self.segment_count() {
            let (d, t, foot) = project_on_segment(p, self.points[i], self.points[i + 1]);
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, i, t, foot));
            }
        }
        let (distance, segment, t, foot) = best.expect("route has segments");
        let (a, b) = self.segment(segment);
        let dir = sub(b, a);
        let side = cross(dir, sub(p, foot));
        let signed_offset = if side < 0.0 { -distance } else { distance };
        let seg_len = norm(dir);
        Projection {
            segment,
            foot,
            distance,
            signed_offset,
            arclength: self.cum[segment] + t * seg_len,
            tangent_angle: dir[1].atan2(dir[0]),
        }
    }

    /// Signed curvature at arclength `s`, linearly interpolated between
    /// vertex curvatures and held constant past the ends.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total_length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.vertex_curvature[i],
            Err(i) => i,
        };
        let (s0, s1) = (self.cum[i - 1], self.cum[i]);
        let w = (s - s0) / (s1 - s0);
        self.vertex_curvature[i - 1] * (1.0 - w) + self.vertex_curvature[i] * w
    }

    /// Unit tangent at arclength `s`.
    pub fn tangent_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.total_length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) | Err(i) => i.clamp(1, self.segment_count()) - 1,
        };
        let (a, b) = self.segment(i);
        let d = sub(b, a);
        let n = norm(d);
        [d[0] / n, d[1] / n]
    }

    /// Point at arclength `s`, clamped to the route ends.
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.total_length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i,
        };
        let (a, b) = self.segment(i - 1);
        let w = (s - self.cum[i - 1]) / (self.cum[i] - self.cum[i - 1]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }

    /// Segments whose distance from `p` is at most `radius`.
    pub fn segments_near(&self, p: Point, radius: f64) -> Vec<(Point, Point)> {
        (0..self.segment_count())
            .filter(|&i| project_on_segment(p, self.points[i], self.points[i + 1]).0 <= radius)
            .map(|i| self.segment(i))
            .collect()
    }

    pub fn arclength_of_vertex(&self, i: usize) -> f64 {
        self.cum[i]
    }
}

/// Dot product of consecutive segment directions, used by tests to detect kinks.
pub fn min_turn_cosine(route: &RouteSpec) -> f64 {
    route
        .waypoints
        .windows(3)
        .map(|w| {
            let a = sub(w[1], w[0]);
            let b = sub(w[2], w[1]);
            dot(a, b) / (norm(a) * norm(b))
        })
        .fold(1.0, f64::min)
}

//! Planar point/segment helpers shared by the simulator and the evaluator.

pub type Point = [f64; 2];

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Closest point on segment `[a, b]` to `p`: `(distance, t, foot)` with
/// `foot = a + t·(b − a)`, `t ∈ [0, 1]`.
pub fn project_on_segment(p: Point, a: Point, b: Point) -> (f64, f64, Point) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let foot = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (dist(p, foot), t, foot)
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Signed curvature of the circle through three points (Menger curvature),
/// positive for left turns.
pub fn menger_curvature(a: Point, b: Point, c: Point) -> f64 {
    let denom = dist(a, b) * dist(b, c) * dist(a, c);
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * cross(sub(b, a), sub(c, a)) / denom
}

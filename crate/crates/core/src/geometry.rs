//! Planar geometry helpers: polygons, segments, triangles.

use crate::{Error, Result};

pub type Point = [f64; 2];

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Twice the signed area of the triangle (a, b, c); positive when
/// counter-clockwise.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross(poly[i], poly[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

pub fn diameter(points: &[Point]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    dist(lo, hi)
}

/// Distance from `p` to the closed segment [a, b].
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2;
    let t = t.clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Point in the closed polygon, with boundary tolerance `tol`.
pub fn contains_closed(poly: &[Point], p: Point, tol: f64) -> bool {
    let n = poly.len();
    for i in 0..n {
        if segment_distance(p, poly[i], poly[(i + 1) % n]) <= tol {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point, tol: f64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol))
        && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
    {
        return true;
    }
    // Touching or collinear overlap.
    let l = tol.sqrt().max(tol);
    segment_distance(a, c, d) <= l
        || segment_distance(b, c, d) <= l
        || segment_distance(c, a, b) <= l
        || segment_distance(d, a, b) <= l
}

/// Rejects polygons with fewer than 3 vertices, zero area, repeated
/// vertices, or self-intersections.
pub fn validate_polygon(poly: &[Point]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::Geometry(format!("polygon needs at least 3 vertices, got {n}")));
    }
    if poly.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Geometry("non-finite vertex coordinate".into()));
    }
    let diam = diameter(poly);
    let tol = 1e-12 * diam;
    let area = polygon_area(poly);
    if area.abs() <= tol * diam {
        return Err(Error::Geometry("polygon has zero area".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist(poly[i], poly[j]) <= tol {
                return Err(Error::Geometry(format!("vertices {i} and {j} coincide")));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_cross(a, b, c, d, tol * diam) {
                return Err(Error::Geometry(format!(
                    "polygon is self-intersecting (segments {i} and {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Per-triangle geometric quantities.
#[derive(Clone, Copy, Debug)]
pub struct TriGeom {
    pub x: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_bary: [Point; 3],
    /// Diameter (longest edge).
    pub h: f64,
}

impl TriGeom {
    pub fn new(x: [Point; 3]) -> Self {
        let det = orient(x[0], x[1], x[2]);
        let g = |i: usize, j: usize| [(x[i][1] - x[j][1]) / det, (x[j][0] - x[i][0]) / det];
        let grad_bary = [g(1, 2), g(2, 0), g(0, 1)];
        let h = dist(x[0], x[1]).max(dist(x[1], x[2])).max(dist(x[2], x[0]));
        TriGeom { x, area: 0.5 * det, grad_bary, h }
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        [
            bary[0] * self.x[0][0] + bary[1] * self.x[1][0] + bary[2] * self.x[2][0],
            bary[0] * self.x[0][1] + bary[1] * self.x[1][1] + bary[2] * self.x[2][1],
        ]
    }

    pub fn centroid(&self) -> Point {
        self.point([1.0 / 3.0; 3])
    }

    /// Smallest interior angle in radians.
    pub fn min_angle(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..3 {
            let a = sub(self.x[(i + 1) % 3], self.x[i]);
            let b = sub(self.x[(i + 2) % 3], self.x[i]);
            let c = (a[0] * b[0] + a[1] * b[1]) / (a[0].hypot(a[1]) * b[0].hypot(b[1]));
            m = m.min(c.clamp(-1.0, 1.0).acos());
        }
        m
    }
}

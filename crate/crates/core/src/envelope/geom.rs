//! Planar polygon helpers for the phase-plane envelopes.

/// A point in the (beta, r) plane.
pub type Point = (f64, f64);

/// Shoelace area of a closed polygon (vertices in order, not repeated).
pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice.abs()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let (px, py) = p;
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        if (y0 > py) != (y1 > py) {
            let t = (py - y0) / (y1 - y0);
            let x_cross = x0 + t * (x1 - x0);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Distance from a point to a segment.
fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (px, py) = p;
    let (ax, ay) = a;
    let (bx, by) = b;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (px - cx).hypot(py - cy)
}

/// Unsigned distance from a point to a closed polygon's boundary.
pub fn polygon_boundary_distance(p: Point, poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        best = best.min(segment_distance(p, poly[i], poly[(i + 1) % n]));
    }
    best
}

/// Signed distance: positive inside the polygon, negative outside.
pub fn signed_distance_inside(p: Point, poly: &[Point]) -> f64 {
    let d = polygon_boundary_distance(p, poly);
    if point_in_polygon(p, poly) {
        d
    } else {
        -d
    }
}

/// A half-plane `a*beta + b*r <= c` used for convex clipping.
#[derive(Clone, Copy, Debug)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    fn inside(&self, p: Point) -> bool {
        self.a * p.0 + self.b * p.1 <= self.c + 1e-12
    }

    fn intersect(&self, p: Point, q: Point) -> Point {
        let fp = self.a * p.0 + self.b * p.1 - self.c;
        let fq = self.a * q.0 + self.b * q.1 - self.c;
        let t = fp / (fp - fq);
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    }
}

/// Sutherland-Hodgman clip of a convex polygon by a half-plane.
pub fn clip_convex(poly: &[Point], hp: HalfPlane) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let cur = poly[i];
        let nxt = poly[(i + 1) % n];
        let cur_in = hp.inside(cur);
        let nxt_in = hp.inside(nxt);
        if cur_in {
            out.push(cur);
            if !nxt_in {
                out.push(hp.intersect(cur, nxt));
            }
        } else if nxt_in {
            out.push(hp.intersect(cur, nxt));
        }
    }
    out
}

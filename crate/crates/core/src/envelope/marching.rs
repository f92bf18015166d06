//! Marching-squares extraction of the zero contour of a scalar field sampled
//! on a rectilinear grid.
//!
//! Crossings are computed once per grid edge and segments are chained through
//! shared edge ids, so the output polylines are watertight and deterministic.

use super::geom::Point;

/// Scalar field samples: `values[iy * nx + ix]` at `(xs[ix], ys[iy])`.
pub struct GridField<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub values: &'a [f64],
}

/// Edge identifier: horizontal edges then vertical edges, row-major.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeId {
    H(usize, usize), // between (ix, iy) and (ix+1, iy)
    V(usize, usize), // between (ix, iy) and (ix, iy+1)
}

fn interp(x0: f64, x1: f64, f0: f64, f1: f64) -> f64 {
    let t = if (f1 - f0).abs() < 1e-300 {
        0.5
    } else {
        (f0 / (f0 - f1)).clamp(0.0, 1.0)
    };
    x0 + t * (x1 - x0)
}

/// Extract all zero-contour polylines; closed loops repeat no vertex but are
/// flagged. Positive field values are "inside".
pub fn zero_contours(field: &GridField) -> Vec<Vec<Point>> {
    use std::collections::HashMap;
    let nx = field.xs.len();
    let ny = field.ys.len();
    let value = |ix: usize, iy: usize| field.values[iy * nx + ix];

    // Crossing points per edge.
    let mut crossings: HashMap<EdgeId, Point> = HashMap::new();
    for iy in 0..ny {
        for ix in 0..nx.saturating_sub(1) {
            let (f0, f1) = (value(ix, iy), value(ix + 1, iy));
            if (f0 > 0.0) != (f1 > 0.0) {
                let x = interp(field.xs[ix], field.xs[ix + 1], f0, f1);
                crossings.insert(EdgeId::H(ix, iy), (x, field.ys[iy]));
            }
        }
    }
    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx {
            let (f0, f1) = (value(ix, iy), value(ix, iy + 1));
            if (f0 > 0.0) != (f1 > 0.0) {
                let y = interp(field.ys[iy], field.ys[iy + 1], f0, f1);
                crossings.insert(EdgeId::V(ix, iy), (field.xs[ix], y));
            }
        }
    }

    // Per cell, connect the crossed edges into segments.
    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx.saturating_sub(1) {
            let bottom = EdgeId::H(ix, iy);
            let top = EdgeId::H(ix, iy + 1);
            let left = EdgeId::V(ix, iy);
            let right = EdgeId::V(ix + 1, iy);
            let mut crossed: Vec<EdgeId> = [bottom, right, top, left]
                .into_iter()
                .filter(|e| crossings.contains_key(e))
                .collect();
            match crossed.len() {
                0 => {}
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    // Saddle cell: orient by the cell-centre sign.
                    let centre = 0.25
                        * (value(ix, iy)
                            + value(ix + 1, iy)
                            + value(ix, iy + 1)
                            + value(ix + 1, iy + 1));
                    let corner = value(ix, iy);
                    if (centre > 0.0) == (corner > 0.0) {
                        segments.push((bottom, left));
                        segments.push((top, right));
                    } else {
                        segments.push((bottom, right));
                        segments.push((top, left));
                    }
                    crossed.clear();
                }
                _ => {
                    // Degenerate (a corner exactly at zero rounds one edge
                    // out); connect what is there pairwise.
                    for pair in crossed.chunks(2) {
                        if pair.len() == 2 {
                            segments.push((pair[0], pair[1]));
                        }
                    }
                }
            }
        }
    }

    // Chain segments through shared edge ids.
    let mut adjacency: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(i);
        adjacency.entry(*b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut contours = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a0, b0) = segments[start];
        let mut chain = vec![a0, b0];
        // Extend forward from the tail, then from the head.
        for end in 0..2 {
            loop {
                let tip = if end == 0 {
                    *chain.last().unwrap()
                } else {
                    chain[0]
                };
                let next = adjacency
                    .get(&tip)
                    .and_then(|ids| ids.iter().find(|&&i| !used[i]).copied());
                match next {
                    Some(i) => {
                        used[i] = true;
                        let (a, b) = segments[i];
                        let other = if a == tip { b } else { a };
                        if end == 0 {
                            chain.push(other);
                        } else {
                            chain.insert(0, other);
                        }
                    }
                    None => break,
                }
            }
        }
        let pts: Vec<Point> = chain.iter().map(|e| crossings[e]).collect();
        if pts.len() >= 2 {
            contours.push(pts);
        }
    }
    contours
}

/// The zero contour with the largest enclosed area, as a closed polygon.
pub fn largest_closed_contour(field: &GridField) -> Option<Vec<Point>> {
    let mut best: Option<(f64, Vec<Point>)> = None;
    for c in zero_contours(field) {
        if c.len() < 3 {
            continue;
        }
        let area = super::geom::polygon_area(&c);
        if best.as_ref().map_or(true, |(a, _)| area > *a) {
            best = Some((area, c));
        }
    }
    best.map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::geom::polygon_area;

    #[test]
    fn circle_contour_area_converges() {
        let n = 201;
        let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let ys = xs.clone();
        let mut values = vec![0.0; n * n];
        for (iy, &y) in ys.iter().enumerate() {
            for (ix, &x) in xs.iter().enumerate() {
                values[iy * n + ix] = 1.0 - (x * x + y * y);
            }
        }
        let field = GridField {
            xs: &xs,
            ys: &ys,
            values: &values,
        };
        let poly = largest_closed_contour(&field).expect("contour");
        let area = polygon_area(&poly);
        assert!(
            (area - std::f64::consts::PI).abs() < 0.01,
            "area {area} should be close to pi"
        );
    }

    #[test]
    fn refinement_self_converges() {
        // Hausdorff-style check: doubling the resolution moves the contour
        // by no more than one coarse cell.
        let make = |n: usize| {
            let xs: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
            let ys = xs.clone();
            let mut values = vec![0.0; n * n];
            for (iy, &y) in ys.iter().enumerate() {
                for (ix, &x) in xs.iter().enumerate() {
                    values[iy * n + ix] = 1.0 - (x.powi(2) + 0.5 * y.powi(2) + 0.3 * x * y);
                }
            }
            let field = GridField {
                xs: &xs,
                ys: &ys,
                values: &values,
            };
            largest_closed_contour(&field).expect("contour")
        };
        let coarse = make(61);
        let fine = make(121);
        let cell = 4.0 / 60.0;
        for p in &coarse {
            let d = fine
                .iter()
                .map(|q| (p.0 - q.0).hypot(p.1 - q.1))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= cell, "contour moved by {d} > one coarse cell {cell}");
        }
    }
}

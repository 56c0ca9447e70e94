//! Geometric clipping: segments against mesh cells, triangles against lines.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Part of a segment lying in the closure of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPiece {
    pub cell: usize,
    pub start: Point,
    pub end: Point,
}

impl SegmentPiece {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

/// Parameter interval `[t0, t1]` of `a + t (b - a)` inside the closed
/// triangle, widened by `tol` (absolute distance).
fn clip_to_triangle(a: &Point, d: &Point, tri: &[Point; 3], tol: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for e in 0..3 {
        let v = tri[e];
        let t = tri[(e + 1) % 3] - v;
        let n = Point::new(t.y, -t.x) / t.norm();
        // inside: n·(a + s d - v) <= tol
        let num = tol - n.dot(&(a - v));
        let den = n.dot(d);
        if den.abs() < 1e-300 {
            if num < 0.0 {
                return None;
            }
        } else if den > 0.0 {
            t1 = t1.min(num / den);
        } else {
            t0 = t0.max(num / den);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Splits segment `[a, b]` into pieces, one per cell it crosses.
///
/// Pieces are ordered from `a` to `b`, non-overlapping, and cover the whole
/// segment. A piece running along a mesh face is attributed to the
/// lower-indexed adjacent cell. Pieces shorter than `1e-12` times the owning
/// cell's diameter are dropped.
pub fn clip_segment_to_cells(mesh: &Mesh, a: Point, b: Point) -> Result<Vec<SegmentPiece>> {
    let domain = mesh.domain();
    let scale = (domain.x1 - domain.x0).abs().max((domain.y1 - domain.y0).abs());
    let dtol = 1e-12 * scale;
    if !domain.contains(&a, dtol) || !domain.contains(&b, dtol) {
        return Err(Error::Input(format!(
            "segment ({}, {})-({}, {}) leaves the domain",
            a.x, a.y, b.x, b.y
        )));
    }
    let d = b - a;
    let len = d.norm();
    if len <= dtol {
        return Ok(Vec::new());
    }

    let (sx0, sx1) = (a.x.min(b.x) - dtol, a.x.max(b.x) + dtol);
    let (sy0, sy1) = (a.y.min(b.y) - dtol, a.y.max(b.y) + dtol);
    let mut hits: Vec<(usize, f64, f64)> = Vec::new();
    for cell in 0..mesh.num_cells() {
        let tri = mesh.cell_vertices(cell);
        let (cx0, cx1) = (tri[0].x.min(tri[1].x).min(tri[2].x), tri[0].x.max(tri[1].x).max(tri[2].x));
        let (cy0, cy1) = (tri[0].y.min(tri[1].y).min(tri[2].y), tri[0].y.max(tri[1].y).max(tri[2].y));
        if cx1 < sx0 || cx0 > sx1 || cy1 < sy0 || cy0 > sy1 {
            continue;
        }
        let h = mesh.cell_geometry(cell).diameter;
        if let Some((t0, t1)) = clip_to_triangle(&a, &d, &tri, 1e-12 * h) {
            hits.push((cell, t0.max(0.0), t1.min(1.0)));
        }
    }

    let mut breaks: Vec<f64> = hits.iter().flat_map(|&(_, t0, t1)| [t0, t1]).collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    // Each cell interval is widened by its tolerance, so the two ends of
    // neighbouring intervals straddle the true crossing. Collapse each
    // cluster to one breakpoint, keeping the exact endpoints 0 and 1.
    let ctol = 1e-10 * scale / len;
    let mut clustered: Vec<f64> = Vec::new();
    let mut group: Vec<f64> = Vec::new();
    let flush = |group: &mut Vec<f64>, out: &mut Vec<f64>| {
        if group.is_empty() {
            return;
        }
        let rep = if group.contains(&0.0) {
            0.0
        } else if group.contains(&1.0) {
            1.0
        } else {
            group.iter().sum::<f64>() / group.len() as f64
        };
        out.push(rep);
        group.clear();
    };
    for &t in &breaks {
        if group.last().is_some_and(|&l| t - l > ctol) {
            flush(&mut group, &mut clustered);
        }
        group.push(t);
    }
    flush(&mut group, &mut clustered);
    let breaks = clustered;

    let mut pieces: Vec<(usize, f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let mid = 0.5 * (s0 + s1);
        let owner = hits
            .iter()
            .filter(|&&(_, t0, t1)| t0 <= mid && mid <= t1)
            .map(|&(c, _, _)| c)
            .min();
        let Some(owner) = owner else { continue };
        match pieces.last_mut() {
            Some(last) if last.0 == owner && last.2 == s0 => last.2 = s1,
            _ => pieces.push((owner, s0, s1)),
        }
    }

    Ok(pieces
        .into_iter()
        .filter(|&(cell, s0, s1)| (s1 - s0) * len >= 1e-12 * mesh.cell_geometry(cell).diameter)
        .map(|(cell, s0, s1)| SegmentPiece { cell, start: a + d * s0, end: a + d * s1 })
        .collect())
}

/// Straight line `{x : normal·x = offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub normal: Point,
    pub offset: f64,
}

impl Line {
    pub fn vertical(x: f64) -> Self {
        Self { normal: Point::new(1.0, 0.0), offset: x }
    }

    pub fn side(&self, p: &Point) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Splits a triangle by a line into at most three sub-triangles, each lying
/// on one side of the line. A triangle that is not cut is returned whole.
pub fn split_triangle(tri: &[Point; 3], line: &Line) -> Vec<[Point; 3]> {
    let scale = (tri[1] - tri[0]).norm().max((tri[2] - tri[0]).norm());
    let s: Vec<f64> = tri
        .iter()
        .map(|p| {
            let v = line.side(p);
            if v.abs() <= 1e-13 * scale { 0.0 } else { v }
        })
        .collect();
    if s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0) {
        return vec![*tri];
    }
    let cut = |i: usize, j: usize| -> Point {
        let t = s[i] / (s[i] - s[j]);
        tri[i] + (tri[j] - tri[i]) * t
    };
    // One vertex exactly on the line: two sub-triangles.
    if let Some(z) = (0..3).find(|&i| s[i] == 0.0) {
        let (i, j) = ((z + 1) % 3, (z + 2) % 3);
        let p = cut(i, j);
        return vec![[tri[z], tri[i], p], [tri[z], p, tri[j]]];
    }
    // The lone vertex is the one whose sign differs from the other two.
    let lone = (0..3)
        .find(|&i| s[i].signum() != s[(i + 1) % 3].signum() && s[i].signum() != s[(i + 2) % 3].signum())
        .expect("a cut triangle has a vertex alone on its side");
    let (i, j) = ((lone + 1) % 3, (lone + 2) % 3);
    let pi = cut(lone, i);
    let pj = cut(lone, j);
    vec![[tri[lone], pi, pj], [pi, tri[i], tri[j]], [pi, tri[j], pj]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Diagonal, Rectangle};
    use approx::assert_abs_diff_eq;

    fn square(n: usize) -> Mesh {
        Mesh::generate_structured(n, Rectangle::new(-1.0, 1.0, -1.0, 1.0), Diagonal::default())
    }

    #[test]
    fn gridline_segment_on_aligned_mesh() {
        let m = square(4);
        let pieces = clip_segment_to_cells(&m, Point::new(0.0, -1.0), Point::new(0.0, 1.0)).unwrap();
        assert_eq!(pieces.len(), 4);
        for p in &pieces {
            assert_abs_diff_eq!(p.length(), 0.5, epsilon = 1e-14);
            assert!(p.start.x.abs() < 1e-14 && p.end.x.abs() < 1e-14);
            // lower of the two adjacent cells
            let owners: Vec<usize> = m
                .faces()
                .iter()
                .filter(|f| {
                    let (a, b) = (m.vertices()[f.endpoints[0]], m.vertices()[f.endpoints[1]]);
                    a.x.abs() < 1e-14 && b.x.abs() < 1e-14 && (a.y.min(b.y) - p.start.y.min(p.end.y)).abs() < 1e-12
                })
                .map(|f| f.cells.0.min(f.cells.1.unwrap()))
                .collect();
            assert_eq!(owners, vec![p.cell]);
        }
    }

    /// Dense sampling oracle: each sample point along the segment must be in
    /// the closure of the cell owning the piece that covers it.
    #[test]
    fn nonaligned_segment_total_length() {
        let m = square(5);
        let (a, b) = (Point::new(0.0, -1.0), Point::new(0.0, 1.0));
        let pieces = clip_segment_to_cells(&m, a, b).unwrap();
        let total: f64 = pieces.iter().map(SegmentPiece::length).sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
        for i in 0..2000 {
            let t = (i as f64 + 0.5) / 2000.0;
            let p = a + (b - a) * t;
            let piece = pieces
                .iter()
                .find(|pc| {
                    let lo = pc.start.y.min(pc.end.y);
                    let hi = pc.start.y.max(pc.end.y);
                    lo <= p.y && p.y <= hi
                })
                .expect("sample point covered");
            let tri = m.cell_vertices(piece.cell);
            let map = crate::mesh::AffineMap::from_vertices(&tri);
            let xi = map.to_reference(&p);
            assert!(xi.x >= -1e-12 && xi.y >= -1e-12 && xi.x + xi.y <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn zero_length_segment() {
        let m = square(2);
        let p = Point::new(0.3, 0.1);
        assert!(clip_segment_to_cells(&m, p, p).unwrap().is_empty());
    }

    #[test]
    fn outside_segment_rejected() {
        let m = square(2);
        let r = clip_segment_to_cells(&m, Point::new(0.0, 0.0), Point::new(2.0, 0.0));
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn split_preserves_area_and_sides() {
        let tri = [Point::new(-0.3, 0.0), Point::new(0.5, 0.1), Point::new(0.1, 0.7)];
        let area = |t: &[Point; 3]| 0.5 * (t[1] - t[0]).perp(&(t[2] - t[0]));
        let parts = split_triangle(&tri, &Line::vertical(0.0));
        assert_eq!(parts.len(), 3);
        let total: f64 = parts.iter().map(area).sum();
        assert_abs_diff_eq!(total, area(&tri), epsilon = 1e-15);
        for p in &parts {
            assert!(area(p) > 0.0);
            let c = (p[0] + p[1] + p[2]) / 3.0;
            let side = c.x.signum();
            assert!(p.iter().all(|v| v.x * side >= -1e-15));
        }
        // vertex on the line
        let tri2 = [Point::new(0.0, 0.0), Point::new(0.5, 0.5), Point::new(-0.5, 0.5)];
        let parts2 = split_triangle(&tri2, &Line::vertical(0.0));
        assert_eq!(parts2.len(), 2);
        assert_abs_diff_eq!(parts2.iter().map(area).sum::<f64>(), area(&tri2), epsilon = 1e-15);
        // untouched
        let tri3 = [Point::new(0.1, 0.0), Point::new(0.5, 0.5), Point::new(0.2, 0.5)];
        assert_eq!(split_triangle(&tri3, &Line::vertical(0.0)).len(), 1);
    }
}

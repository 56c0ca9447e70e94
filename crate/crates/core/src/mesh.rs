//! Conforming triangulations of rectangles with full cell/face/vertex
//! connectivity.
//!
//! Cells are stored counter-clockwise. Local edge `e` of a cell joins local
//! vertices `e` and `(e + 1) % 3`. Every face stores its endpoints sorted by
//! global vertex index and a fixed unit normal `n_F`, which is the outward
//! normal of the lowest-indexed adjacent cell (for boundary faces this is the
//! outward normal of the domain).

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rectangle {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit_square() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }
}

/// Diagonal used to split each square of a structured grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    #[default]
    LowerLeftToUpperRight,
    LowerRightToUpperLeft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    /// Global vertex indices, lower index first.
    pub endpoints: [usize; 2],
    /// Unit normal `n_F`, outward for `cells.0`.
    pub normal: Point,
    pub cells: (usize, Option<usize>),
    pub length: f64,
    pub is_boundary: bool,
}

/// A face as seen from one of its cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFace {
    pub face: usize,
    /// `n_F · n_K`, either `+1` or `-1`.
    pub sign: f64,
    /// True when the local edge direction (local vertex `e` to `e + 1`)
    /// runs from the lower to the higher global vertex index.
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    /// Longest edge length.
    pub diameter: f64,
    pub area: f64,
    /// Outward unit normals per local edge.
    pub normals: [Point; 3],
    pub lengths: [f64; 3],
}

/// Affine map `x = origin + jacobian * ξ` from the reference triangle
/// `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: Point,
    pub jacobian: Matrix2<f64>,
    pub inverse: Matrix2<f64>,
    pub det: f64,
}

impl AffineMap {
    pub fn from_vertices(v: &[Point; 3]) -> Self {
        let jacobian = Matrix2::from_columns(&[v[1] - v[0], v[2] - v[0]]);
        let det = jacobian.determinant();
        let inverse = Matrix2::new(
            jacobian[(1, 1)],
            -jacobian[(0, 1)],
            -jacobian[(1, 0)],
            jacobian[(0, 0)],
        ) / det;
        Self { origin: v[0], jacobian, inverse, det }
    }

    pub fn to_physical(&self, xi: &Point) -> Point {
        self.origin + self.jacobian * xi
    }

    pub fn to_reference(&self, x: &Point) -> Point {
        self.inverse * (x - self.origin)
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    faces: Vec<FaceRecord>,
    cell_faces: Vec<[CellFace; 3]>,
    domain: Rectangle,
}

impl Mesh {
    /// Builds the connectivity of a triangulation. Cells must be
    /// counter-clockwise with positive area.
    pub fn from_parts(vertices: Vec<Point>, cells: Vec<[usize; 3]>, domain: Rectangle) -> Result<Self> {
        let nv = vertices.len();
        for (c, tri) in cells.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::Input(format!("cell {c} references a vertex out of range")));
            }
            let a = vertices[tri[1]] - vertices[tri[0]];
            let b = vertices[tri[2]] - vertices[tri[0]];
            if a.perp(&b) <= 0.0 {
                return Err(Error::Input(format!("cell {c} is not counter-clockwise or is degenerate")));
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(cells.len() * 2);
        let mut faces: Vec<FaceRecord> = Vec::with_capacity(cells.len() * 3 / 2 + nv);
        let mut cell_faces = Vec::with_capacity(cells.len());
        for (c, tri) in cells.iter().enumerate() {
            let mut local = [CellFace { face: 0, sign: 1.0, forward: true }; 3];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let forward = a < b;
                match lookup.get(&key) {
                    Some(&f) => {
                        let rec = &mut faces[f];
                        if rec.cells.1.is_some() {
                            return Err(Error::Input(format!(
                                "edge ({}, {}) is shared by more than two cells",
                                key.0, key.1
                            )));
                        }
                        rec.cells.1 = Some(c);
                        local[e] = CellFace { face: f, sign: -1.0, forward };
                    }
                    None => {
                        let t = vertices[b] - vertices[a];
                        let length = t.norm();
                        let normal = Point::new(t.y, -t.x) / length;
                        lookup.insert(key, faces.len());
                        local[e] = CellFace { face: faces.len(), sign: 1.0, forward };
                        faces.push(FaceRecord {
                            endpoints: [key.0, key.1],
                            normal,
                            cells: (c, None),
                            length,
                            is_boundary: true,
                        });
                    }
                }
            }
            cell_faces.push(local);
        }
        for f in &mut faces {
            f.is_boundary = f.cells.1.is_none();
        }
        Ok(Self { vertices, cells, faces, cell_faces, domain })
    }

    /// `n × n` grid of squares over `domain`, each square split by one
    /// diagonal into two triangles.
    pub fn generate_structured(n: usize, domain: Rectangle, diagonal: Diagonal) -> Self {
        assert!(n >= 1, "structured mesh needs at least one cell per side");
        let hx = (domain.x1 - domain.x0) / n as f64;
        let hy = (domain.y1 - domain.y0) / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // Snap the last gridline onto the boundary exactly.
                let x = if i == n { domain.x1 } else { domain.x0 + i as f64 * hx };
                let y = if j == n { domain.y1 } else { domain.y0 + j as f64 * hy };
                vertices.push(Point::new(x, y));
            }
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                match diagonal {
                    Diagonal::LowerLeftToUpperRight => {
                        cells.push([v00, v10, v11]);
                        cells.push([v00, v11, v01]);
                    }
                    Diagonal::LowerRightToUpperLeft => {
                        cells.push([v00, v10, v01]);
                        cells.push([v10, v11, v01]);
                    }
                }
            }
        }
        Self::from_parts(vertices, cells, domain).expect("structured mesh is valid by construction")
    }

    /// Parses the plain-text format: `V E C`, then `V` lines `x y`, then `C`
    /// lines `i j k` (0-based, counter-clockwise). Faces are derived and the
    /// stated `E` must match.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Input("empty mesh file".into()))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("bad mesh header '{header}': {e}")))?;
        let [nv, ne, nc] = counts[..] else {
            return Err(Error::Input(format!("mesh header must be 'V E C', got '{header}'")));
        };
        let mut vertices = Vec::with_capacity(nv);
        for i in 0..nv {
            let line = lines.next().ok_or_else(|| Error::Input(format!("missing vertex line {i}")))?;
            let xy: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Input(format!("bad vertex line '{line}': {e}")))?;
            if xy.len() != 2 {
                return Err(Error::Input(format!("vertex line must hold two numbers: '{line}'")));
            }
            vertices.push(Point::new(xy[0], xy[1]));
        }
        let mut cells = Vec::with_capacity(nc);
        for i in 0..nc {
            let line = lines.next().ok_or_else(|| Error::Input(format!("missing cell line {i}")))?;
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(str::parse::<usize>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Input(format!("bad cell line '{line}': {e}")))?;
            if ids.len() != 3 {
                return Err(Error::Input(format!("cell line must hold three indices: '{line}'")));
            }
            cells.push([ids[0], ids[1], ids[2]]);
        }
        if vertices.is_empty() {
            return Err(Error::Input("mesh has no vertices".into()));
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for v in &vertices {
            x0 = x0.min(v.x);
            x1 = x1.max(v.x);
            y0 = y0.min(v.y);
            y1 = y1.max(v.y);
        }
        let mesh = Self::from_parts(vertices, cells, Rectangle::new(x0, x1, y0, y1))?;
        if mesh.num_faces() != ne {
            return Err(Error::Input(format!(
                "header states {ne} edges but the cells define {}",
                mesh.num_faces()
            )));
        }
        Ok(mesh)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.num_vertices(), self.num_faces(), self.num_cells());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v.x, v.y);
        }
        for c in &self.cells {
            let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
        }
        out
    }

    /// Checks that the cells tile `domain`: total area matches and every
    /// boundary edge lies on the rectangle's boundary.
    pub fn check_covers(&self, domain: Rectangle) -> Result<()> {
        let scale = (domain.x1 - domain.x0).max(domain.y1 - domain.y0);
        let tol = 1e-10 * scale;
        let area: f64 = (0..self.num_cells()).map(|c| self.cell_geometry(c).area).sum();
        if (area - domain.area()).abs() > 1e-10 * domain.area() {
            return Err(Error::Input(format!("cells cover area {area}, domain area is {}", domain.area())));
        }
        for (f, rec) in self.faces.iter().enumerate().filter(|(_, r)| r.is_boundary) {
            let [a, b] = rec.endpoints.map(|v| self.vertices[v]);
            let on_side = |x0: f64, x1: f64| (x0 - x1).abs() <= tol;
            let same_side = (on_side(a.x, domain.x0) && on_side(b.x, domain.x0))
                || (on_side(a.x, domain.x1) && on_side(b.x, domain.x1))
                || (on_side(a.y, domain.y0) && on_side(b.y, domain.y0))
                || (on_side(a.y, domain.y1) && on_side(b.y, domain.y1));
            if !same_side {
                return Err(Error::Input(format!("boundary edge {f} does not lie on the domain boundary")));
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn faces(&self) -> &[FaceRecord] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &FaceRecord {
        &self.faces[f]
    }

    pub fn cell_faces(&self, cell: usize) -> &[CellFace; 3] {
        &self.cell_faces[cell]
    }

    pub fn domain(&self) -> Rectangle {
        self.domain
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point; 3] {
        let c = self.cells[cell];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    pub fn cell_map(&self, cell: usize) -> AffineMap {
        AffineMap::from_vertices(&self.cell_vertices(cell))
    }

    pub fn cell_geometry(&self, cell: usize) -> CellGeometry {
        let v = self.cell_vertices(cell);
        let mut normals = [Point::zeros(); 3];
        let mut lengths = [0.0; 3];
        for e in 0..3 {
            let t = v[(e + 1) % 3] - v[e];
            lengths[e] = t.norm();
            normals[e] = Point::new(t.y, -t.x) / lengths[e];
        }
        let area = 0.5 * (v[1] - v[0]).perp(&(v[2] - v[0]));
        let diameter = lengths.iter().copied().fold(0.0, f64::max);
        CellGeometry { diameter, area, normals, lengths }
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_geometry(c).diameter).fold(0.0, f64::max)
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary).count()
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut flags = vec![false; self.num_vertices()];
        for f in self.faces.iter().filter(|f| f.is_boundary) {
            flags[f.endpoints[0]] = true;
            flags[f.endpoints[1]] = true;
        }
        flags
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn structured_counts_n4() {
        let m = Mesh::generate_structured(4, Rectangle::unit_square(), Diagonal::default());
        assert_eq!(m.num_cells(), 32);
        assert_eq!(m.num_vertices(), 25);
        assert_eq!(m.num_faces(), 56);
        assert_eq!(m.num_boundary_faces(), 16);
    }

    #[test]
    fn structured_counts_n128() {
        let m = Mesh::generate_structured(128, Rectangle::unit_square(), Diagonal::default());
        assert_eq!((m.num_cells(), m.num_faces(), m.num_vertices()), (32768, 49408, 16641));
    }

    #[test]
    fn odd_grid_avoids_center_line() {
        let m = Mesh::generate_structured(5, Rectangle::new(-1.0, 1.0, -1.0, 1.0), Diagonal::default());
        assert_eq!(m.num_cells(), 50);
        assert!(m.vertices().iter().all(|v| v.x.abs() > 1e-12));
        for f in m.faces() {
            let (a, b) = (m.vertices()[f.endpoints[0]], m.vertices()[f.endpoints[1]]);
            assert!(!(a.x.abs() < 1e-12 && b.x.abs() < 1e-12));
        }
    }

    #[test]
    fn reference_cell_geometry() {
        let m = Mesh::from_parts(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            vec![[0, 1, 2]],
            Rectangle::unit_square(),
        )
        .unwrap();
        let g = m.cell_geometry(0);
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(g.diameter, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.area, 0.5, epsilon = 1e-15);
        let expect = [Point::new(0.0, -1.0), Point::new(s, s), Point::new(-1.0, 0.0)];
        for e in 0..3 {
            assert_abs_diff_eq!((g.normals[e] - expect[e]).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn structured_cell_diameter() {
        let m = Mesh::generate_structured(4, Rectangle::unit_square(), Diagonal::default());
        for c in 0..m.num_cells() {
            assert_abs_diff_eq!(m.cell_geometry(c).diameter, 2f64.sqrt() / 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn diameter_translation_invariant() {
        let tri = vec![Point::new(0.1, 0.2), Point::new(0.9, 0.3), Point::new(0.4, 0.8)];
        let shift = Point::new(-3.7, 11.25);
        let a = Mesh::from_parts(tri.clone(), vec![[0, 1, 2]], Rectangle::unit_square()).unwrap();
        let b = Mesh::from_parts(tri.iter().map(|p| p + shift).collect(), vec![[0, 1, 2]], Rectangle::unit_square())
            .unwrap();
        assert_abs_diff_eq!(a.cell_geometry(0).diameter, b.cell_geometry(0).diameter, epsilon = 1e-13);
    }

    #[test]
    fn rejects_clockwise_cells() {
        let err = Mesh::from_parts(
            vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)],
            vec![[0, 1, 2]],
            Rectangle::unit_square(),
        );
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn coverage_check_detects_missing_cell() {
        let m = Mesh::generate_structured(3, Rectangle::unit_square(), Diagonal::default());
        assert!(m.check_covers(Rectangle::unit_square()).is_ok());
        assert!(m.check_covers(Rectangle::new(0.0, 2.0, 0.0, 1.0)).is_err());
        let mut cells = m.cells().to_vec();
        cells.remove(8);
        let holed = Mesh::from_parts(m.vertices().to_vec(), cells, Rectangle::unit_square()).unwrap();
        assert!(holed.check_covers(Rectangle::unit_square()).is_err());
    }

    #[test]
    fn text_round_trip_and_edge_check() {
        let m = Mesh::generate_structured(3, Rectangle::new(0.0, 2.0, -1.0, 1.0), Diagonal::default());
        let text = m.to_text();
        let back = Mesh::from_text(&text).unwrap();
        assert_eq!(back.cells(), m.cells());
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.domain(), m.domain());

        let bad = text.replacen(&format!(" {} ", m.num_faces()), " 7 ", 1);
        assert!(matches!(Mesh::from_text(&bad), Err(Error::Input(_))));
        assert!(Mesh::from_text("3 3").is_err());
    }
}

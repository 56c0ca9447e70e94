//! Manufactured solutions. Each exact solution is written once over jets;
//! the load `Δ²u`, boundary data, and error-norm derivatives all come from
//! the same expression.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::clip::Line;
use crate::error::{Error, Result};
use crate::fe_space::BcType;
use crate::jet::Jet;
use crate::mesh::{Diagonal, Mesh, Point, Rectangle};
use crate::system::{BoundaryFn, LineSource, LoadSpec};

type Branch = fn(Jet, Jet) -> Jet;

/// Smooth or two-branch (split by a vertical line) exact solution.
#[derive(Clone, Copy)]
pub struct ExactSolution {
    left: Branch,
    /// `(x_split, right branch)`; the right branch applies for `x > x_split`.
    right: Option<(f64, Branch)>,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactSolution").field("split", &self.right.map(|r| r.0)).finish()
    }
}

impl ExactSolution {
    pub fn smooth(u: Branch) -> Self {
        Self { left: u, right: None }
    }

    pub fn piecewise(x_split: f64, left: Branch, right: Branch) -> Self {
        Self { left, right: Some((x_split, right)) }
    }

    pub fn jet(&self, p: Point) -> Jet {
        let branch = match self.right {
            Some((xs, r)) if p.x > xs => r,
            _ => self.left,
        };
        branch(Jet::x(p.x), Jet::y(p.y))
    }

    /// Jet of one branch regardless of the point's side.
    pub fn branch_jet(&self, right: bool, p: Point) -> Jet {
        let b = match (right, self.right) {
            (true, Some((_, r))) => r,
            _ => self.left,
        };
        b(Jet::x(p.x), Jet::y(p.y))
    }

    pub fn value(&self, p: Point) -> f64 {
        self.jet(p).value()
    }

    pub fn gradient(&self, p: Point) -> Point {
        self.jet(p).gradient()
    }

    pub fn interface(&self) -> Option<Line> {
        self.right.map(|(xs, _)| Line::vertical(xs))
    }
}

fn poly_u(x: Jet, y: Jet) -> Jet {
    ((PI * x).sin() * (PI * y).sin()).powi(2)
}

fn bump_u(x: Jet, y: Jet) -> Jet {
    poly_u(x, y) + (-((x - 0.5) * (x - 0.5)) - (y - 0.5) * (y - 0.5)).exp()
}

fn singular_left(x: Jet, y: Jet) -> Jet {
    (PI * y).sin() * (x * x / (4.0 * PI) + ((2.0 * PI * x).cos() - 1.0) / (8.0 * PI.powi(3)))
}

fn singular_right(x: Jet, y: Jet) -> Jet {
    (PI * y).sin() * (x / (4.0 * PI * PI) - (2.0 * PI * x).sin() / (8.0 * PI.powi(3)))
}

fn cubic_u(x: Jet, y: Jet) -> Jet {
    x * x * y
}

/// Sequence of structured meshes for a case.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshFamily {
    pub diagonal: Diagonal,
    /// Grid sizes `n` (an `n × n` grid has `2n²` cells), coarse to fine.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub domain: Rectangle,
    pub bc: BcType,
    pub exact: ExactSolution,
    /// Segment and density of the line part of `f`.
    pub line_source: Option<(Point, Point, fn(Point) -> f64)>,
    pub family: MeshFamily,
    pub regularity: &'static str,
}

pub const CASE_NAMES: [&str; 6] =
    ["poly_I", "bump_I", "singular_II_aligned", "singular_II_nonaligned", "exactness_P3_I", "exactness_P3_II"];

fn line_density(p: Point) -> f64 {
    (PI * p.y).sin()
}

impl ManufacturedCase {
    pub fn by_name(name: &str) -> Result<Self> {
        let unit = Rectangle::unit_square();
        let square = Rectangle::new(-1.0, 1.0, -1.0, 1.0);
        let smooth_levels = MeshFamily { diagonal: Diagonal::default(), levels: vec![4, 8, 16, 32, 64, 128] };
        let singular = |aligned: bool| ManufacturedCase {
            name: if aligned { "singular_II_aligned" } else { "singular_II_nonaligned" },
            domain: square,
            bc: BcType::SimplySupported,
            exact: ExactSolution::piecewise(0.0, singular_left, singular_right),
            line_source: Some((Point::new(0.0, -1.0), Point::new(0.0, 1.0), line_density)),
            family: MeshFamily {
                diagonal: Diagonal::default(),
                levels: if aligned { vec![4, 8, 16, 32, 64, 128] } else { vec![5, 9, 17, 33, 65, 129, 257] },
            },
            regularity: "u in H^(3.5-eps); f has a line density sin(pi y) on x = 0",
        };
        let case = match name {
            "poly_I" => ManufacturedCase {
                name: "poly_I",
                domain: unit,
                bc: BcType::Clamped,
                exact: ExactSolution::smooth(poly_u),
                line_source: None,
                family: smooth_levels,
                regularity: "entire; homogeneous clamped data",
            },
            "bump_I" => ManufacturedCase {
                name: "bump_I",
                domain: unit,
                bc: BcType::Clamped,
                exact: ExactSolution::smooth(bump_u),
                line_source: None,
                family: smooth_levels,
                regularity: "entire; non-homogeneous clamped data",
            },
            "singular_II_aligned" => singular(true),
            "singular_II_nonaligned" => singular(false),
            "exactness_P3_I" | "exactness_P3_II" => ManufacturedCase {
                name: if name.ends_with("_I") { "exactness_P3_I" } else { "exactness_P3_II" },
                domain: unit,
                bc: if name.ends_with("_I") { BcType::Clamped } else { BcType::SimplySupported },
                exact: ExactSolution::smooth(cubic_u),
                line_source: None,
                family: MeshFamily { diagonal: Diagonal::default(), levels: vec![4, 16] },
                regularity: "cubic polynomial",
            },
            _ => {
                return Err(Error::Input(format!(
                    "unknown case '{name}' (expected one of: {})",
                    CASE_NAMES.join(", ")
                )))
            }
        };
        Ok(case)
    }

    pub fn library() -> Vec<Self> {
        CASE_NAMES.iter().map(|n| Self::by_name(n).expect("library names are valid")).collect()
    }

    pub fn mesh(&self, n: usize) -> Mesh {
        Mesh::generate_structured(n, self.domain, self.family.diagonal)
    }

    /// Load and boundary data read from the exact solution. Without
    /// `include_line_source` the line part of `f` is dropped.
    pub fn load_spec(&self, include_line_source: bool) -> LoadSpec {
        let ex = self.exact;
        let g1: Option<BoundaryFn> = match self.bc {
            BcType::Clamped => Some(Arc::new(move |p, n| n.dot(&ex.gradient(p)))),
            BcType::SimplySupported => None,
        };
        let g2: Option<BoundaryFn> = match self.bc {
            BcType::Clamped => None,
            BcType::SimplySupported => Some(Arc::new(move |p, n| n.dot(&(ex.jet(p).hessian() * n)))),
        };
        LoadSpec {
            f_reg: Arc::new(move |p| ex.jet(p).bilaplacian()),
            interface: ex.interface(),
            line_source: self
                .line_source
                .filter(|_| include_line_source)
                .map(|(a, b, d)| LineSource { a, b, density: Arc::new(d) }),
            g0: Arc::new(move |p| ex.value(p)),
            g1,
            g2,
        }
    }
}

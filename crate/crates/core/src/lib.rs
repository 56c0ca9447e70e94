//! C⁰ hybrid high-order (HHO) and C⁰ interior-penalty (IPDG) discretizations
//! of the biharmonic problem `Δ²u = f` on triangulated rectangles, with
//! clamped or simply supported boundary conditions.

pub mod basis;
pub mod cases;
pub mod clip;
pub mod error;
pub mod fe_space;
pub mod hho_local;
pub mod ipdg;
pub mod jet;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod study;
pub mod system;

pub use error::{Error, Result};

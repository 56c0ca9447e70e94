//! Error norms, empirical orders of convergence, and the convergence runner
//! with CSV and markdown output.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::basis::{CellBasis, PointEval};
use crate::cases::{ExactSolution, ManufacturedCase};
use crate::clip::split_triangle;
use crate::error::Result;
use crate::fe_space::physical_derivatives;
use crate::ipdg::{assemble_ipdg, jump_seminorm};
use crate::mesh::{AffineMap, Mesh};
use crate::quadrature::cell_quadrature;
use crate::system::{assemble, condition_numbers, reconstruct_field, solve, AssemblyOptions, HybridVector, LinearSystem, Method};

/// The four tracked error quantities.
pub const NORMS: [&str; 4] = ["H2", "H1", "L2", "stab"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormTriple {
    pub h2: f64,
    pub h1: f64,
    pub l2: f64,
}

/// Errors and bookkeeping for one mesh level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub level: usize,
    pub n: usize,
    pub cells: usize,
    /// All unknowns, including bubbles and essential ones.
    pub dofs: usize,
    pub h: f64,
    /// `u − R_K(û_K)` (HHO) or `u − u_h` (IPDG).
    pub reconstruction: NormTriple,
    /// `u − u_K`.
    pub cell: NormTriple,
    /// `(Σ_K S_∂K(û_K, û_K))^{1/2}` for HHO; the penalty-weighted jump
    /// seminorm for IPDG.
    pub stab: f64,
    pub kappa_full: Option<f64>,
    pub kappa_cond: Option<f64>,
    pub kappa_converged: bool,
    pub assembly_s: f64,
    pub factor_s: f64,
    pub solve_s: f64,
    pub residual: f64,
    /// `None` for a successful level, otherwise the failure message.
    pub failure: Option<String>,
}

impl ErrorReport {
    pub fn value(&self, norm: usize) -> f64 {
        match norm {
            0 => self.reconstruction.h2,
            1 => self.reconstruction.h1,
            2 => self.reconstruction.l2,
            _ => self.stab,
        }
    }
}

/// Squared `H²`-, `H¹`-seminorm and `L²`-norm errors of per-cell nodal
/// fields against `exact`, with cells cut along the exact solution's
/// interface integrated piecewise.
pub fn field_errors(mesh: &Mesh, basis: &CellBasis, fields: &[DVector<f64>], exact: &ExactSolution, degree: usize) -> Result<NormTriple> {
    let rule = cell_quadrature(degree)?;
    let ref_evals: Vec<PointEval> = rule.points.iter().map(|x| basis.eval(x)).collect();
    let interface = exact.interface();
    let sums: Vec<[f64; 3]> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let tri = mesh.cell_vertices(c);
            let map = mesh.cell_map(c);
            let coef = &fields[c];
            let mut acc = [0.0; 3];
            let mut add = |ev: &PointEval, xw: nalgebra::Vector2<f64>, w: f64| {
                let (grads, hess) = physical_derivatives(&map, ev);
                let mut v = 0.0;
                let mut g = nalgebra::Vector2::zeros();
                let mut hm = nalgebra::Matrix2::zeros();
                for i in 0..coef.len() {
                    v += coef[i] * ev.value[i];
                    g += grads[i] * coef[i];
                    hm += hess[i] * coef[i];
                }
                let jet = exact.jet(xw);
                acc[0] += w * (hm - jet.hessian()).norm_squared();
                acc[1] += w * (g - jet.gradient()).norm_squared();
                acc[2] += w * (v - jet.value()).powi(2);
            };
            let pieces = interface.map(|l| split_triangle(&tri, &l)).unwrap_or_else(|| vec![tri]);
            if pieces.len() == 1 {
                let jac = map.det.abs();
                for ((xi, w), ev) in rule.points.iter().zip(&rule.weights).zip(&ref_evals) {
                    add(ev, map.to_physical(xi), w * jac);
                }
            } else {
                for piece in pieces {
                    let sub = AffineMap::from_vertices(&piece);
                    let jac = sub.det.abs();
                    for (xi, w) in rule.points.iter().zip(&rule.weights) {
                        let x = sub.to_physical(xi);
                        add(&basis.eval(&map.to_reference(&x)), x, w * jac);
                    }
                }
            }
            acc
        })
        .collect();
    let mut tot = [0.0; 3];
    for s in sums {
        for i in 0..3 {
            tot[i] += s[i];
        }
    }
    Ok(NormTriple { h2: tot[0].sqrt(), h1: tot[1].sqrt(), l2: tot[2].sqrt() })
}

/// Norms of the exact solution itself, used as scales for the stagnation
/// guard.
pub fn exact_norms(mesh: &Mesh, exact: &ExactSolution, degree: usize) -> Result<NormTriple> {
    let basis = CellBasis::new(1, Default::default());
    let zeros = vec![DVector::zeros(basis.dim()); mesh.num_cells()];
    field_errors(mesh, &basis, &zeros, exact, degree)
}

/// Error report of a solved system against `case`.
pub fn error_norms(mesh: &Mesh, sys: &LinearSystem, x: &HybridVector, case: &ManufacturedCase, quad_boost: usize) -> Result<ErrorReport> {
    let p = sys.dofmap.cell_degree();
    let basis = CellBasis::new(p, sys.options.node_set);
    let degree = 2 * p + quad_boost;
    let rec = reconstruct_field(sys, x);
    let reconstruction = field_errors(mesh, &basis, &rec, &case.exact, degree)?;
    let cell_fields: Vec<DVector<f64>> = (0..mesh.num_cells())
        .map(|c| {
            let nodes = sys.dofmap.cell_nodes(c);
            DVector::from_iterator(nodes.len(), nodes.iter().map(|&g| x.values[g]))
        })
        .collect();
    let cell = field_errors(mesh, &basis, &cell_fields, &case.exact, degree)?;
    let stab = match sys.method {
        Method::Hho => (0..mesh.num_cells())
            .map(|c| {
                let v = sys.local_vector(x, c);
                (&sys.cells[c].d * &v).norm_squared()
            })
            .sum::<f64>()
            .sqrt(),
        Method::Ipdg => jump_seminorm(mesh, sys, x, &case.load_spec(true))?,
    };
    Ok(ErrorReport {
        cells: mesh.num_cells(),
        dofs: sys.num_unknowns(),
        h: mesh.mesh_size(),
        reconstruction,
        cell,
        stab,
        ..Default::default()
    })
}

/// Rate between two consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rate {
    pub h: Option<f64>,
    pub dof: Option<f64>,
    /// Set when the finer error is below the stagnation threshold.
    pub suppressed: bool,
}

/// `log(e0/e1) / log(h0/h1)` and `log(e0/e1) / log(sqrt(N1/N0))`; undefined
/// for zero or non-finite errors.
pub fn eoc(e0: f64, e1: f64, h0: f64, h1: f64, n0: usize, n1: usize) -> Rate {
    if !(e0.is_finite() && e1.is_finite()) || e0 <= 0.0 || e1 <= 0.0 {
        return Rate::default();
    }
    let l = (e0 / e1).ln();
    Rate {
        h: Some(l / (h0 / h1).ln()).filter(|r| r.is_finite()),
        dof: Some(l / (0.5 * (n1 as f64 / n0 as f64).ln())).filter(|r| r.is_finite()),
        suppressed: false,
    }
}

/// Relative threshold below which errors are treated as stagnated.
pub const STAGNATION_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub case: String,
    pub method: Method,
    pub bc: crate::fe_space::BcType,
    pub k: usize,
    pub rows: Vec<ErrorReport>,
    /// `rates[i][norm]` for the transition into level `i`; row 0 has none.
    pub rates: Vec<[Rate; 4]>,
    /// Norms of the exact solution (H², H¹, L²) used by the stagnation guard.
    pub scales: NormTriple,
}

impl ConvergenceTable {
    pub fn new(case: &ManufacturedCase, method: Method, k: usize, rows: Vec<ErrorReport>, scales: NormTriple) -> Self {
        let mut rates = vec![[Rate::default(); 4]; rows.len()];
        let scale = [scales.h2, scales.h1, scales.l2, scales.h2];
        for i in 1..rows.len() {
            let (a, b) = (&rows[i - 1], &rows[i]);
            if a.failure.is_some() || b.failure.is_some() {
                continue;
            }
            for norm in 0..4 {
                let e1 = b.value(norm);
                if e1 < STAGNATION_FACTOR * scale[norm] {
                    rates[i][norm] = Rate { suppressed: true, ..Default::default() };
                } else {
                    rates[i][norm] = eoc(a.value(norm), e1, a.h, b.h, a.dofs, b.dofs);
                }
            }
        }
        Self { case: case.name.to_string(), method, bc: case.bc, k, rows, rates, scales }
    }

    /// Last defined rate (by `h`) for `norm`.
    pub fn final_rate(&self, norm: usize) -> Option<f64> {
        self.rates.iter().rev().find_map(|r| r[norm].h)
    }

    pub fn csv_header() -> &'static str {
        "case,method,bc,k,level,n,cells,dofs,h,err_H2,err_H1,err_L2,err_stab,rate_H2_h,rate_H2_dof,rate_H1_h,rate_H1_dof,rate_L2_h,rate_L2_dof,rate_stab_h,rate_stab_dof,err_H2_uK,err_H1_uK,err_L2_uK,kappa_full,kappa_cond,assembly_s,factor_s,solve_s,status"
    }

    /// CSV rows. With `timings = false` the timing columns are left empty so
    /// identical runs produce identical bytes.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut out = String::new();
        out.push_str(Self::csv_header());
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let sci = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        for (row, rates) in self.rows.iter().zip(&self.rates) {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{:.6e}",
                self.case, self.method, self.bc, self.k, row.level, row.n, row.cells, row.dofs, row.h
            );
            for norm in 0..4 {
                let _ = write!(out, ",{}", if row.failure.is_some() { String::new() } else { format!("{:.6e}", row.value(norm)) });
            }
            for r in rates {
                let _ = write!(out, ",{},{}", opt(r.h), opt(r.dof));
            }
            let c = &row.cell;
            if row.failure.is_some() {
                out.push_str(",,,");
            } else {
                let _ = write!(out, ",{:.6e},{:.6e},{:.6e}", c.h2, c.h1, c.l2);
            }
            let _ = write!(out, ",{},{}", sci(row.kappa_full), sci(row.kappa_cond));
            if timings {
                let _ = write!(out, ",{:.4},{:.4},{:.4}", row.assembly_s, row.factor_s, row.solve_s);
            } else {
                out.push_str(",,,");
            }
            let mut status = match &row.failure {
                None => "ok".to_string(),
                Some(m) => format!("failed: {}", m.replace([',', '\n'], ";")),
            };
            if row.failure.is_none() && rates.iter().any(|r| r.suppressed) {
                status.push_str(" (stagnation guard)");
            }
            if row.kappa_full.is_some() && !row.kappa_converged {
                status.push_str(" (kappa not converged)");
            }
            let _ = writeln!(out, ",{status}");
        }
        out
    }

    /// Per-norm blocks of `cells | DoFs | error | rate`.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "## {} ({}, BC {}, k = {})\n", self.case, self.method, self.bc, self.k);
        let titles = ["H2 error", "H1 error", "L2 error", "Stab error"];
        for (norm, title) in titles.iter().enumerate() {
            let _ = writeln!(out, "| {title} | # DoFs | error | rate (h) | rate (DoFs^1/2) |");
            out.push_str("|---:|---:|---:|---:|---:|\n");
            for (row, rates) in self.rows.iter().zip(&self.rates) {
                let r = rates[norm];
                let fmt = |v: Option<f64>| match v {
                    Some(x) => format!("{x:.2}"),
                    None if r.suppressed => "stag.".into(),
                    None => "---".into(),
                };
                let err = if row.failure.is_some() { "failed".into() } else { format!("{:.3e}", row.value(norm)) };
                let _ = writeln!(out, "| {} | {} | {} | {} | {} |", row.cells, row.dofs, err, fmt(r.h), fmt(r.dof));
            }
            out.push('\n');
        }
        out
    }
}

/// Settings of one convergence run.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub case: ManufacturedCase,
    pub method: Method,
    pub k: usize,
    /// Grid sizes `n`.
    pub levels: Vec<usize>,
    pub options: AssemblyOptions,
    pub condense: bool,
    pub estimate_kappa: bool,
    pub kappa_tol: f64,
    pub kappa_max_iter: usize,
    /// Seed of the power-iteration start vectors; `None` uses a fixed one.
    pub kappa_seed: Option<u64>,
    pub quad_boost: usize,
    pub include_line_source: bool,
}

impl StudyConfig {
    pub fn new(case: ManufacturedCase, method: Method, k: usize, levels: Vec<usize>) -> Self {
        Self {
            case,
            method,
            k,
            levels,
            options: AssemblyOptions::default(),
            condense: true,
            estimate_kappa: false,
            kappa_tol: 1e-2,
            kappa_max_iter: 500,
            kappa_seed: None,
            quad_boost: 4,
            include_line_source: true,
        }
    }
}

/// Assembles the configured method on one mesh.
pub fn assemble_case(mesh: &Mesh, config: &StudyConfig) -> Result<LinearSystem> {
    let load = config.case.load_spec(config.include_line_source);
    match config.method {
        Method::Hho => assemble(mesh, config.k, config.case.bc, &load, &config.options),
        Method::Ipdg => assemble_ipdg(mesh, config.k + 2, config.case.bc, &load, &config.options),
    }
}

/// Solves one level and evaluates its errors.
pub fn run_level(level: usize, n: usize, config: &StudyConfig) -> Result<ErrorReport> {
    let mesh = config.case.mesh(n);
    let t = Instant::now();
    let sys = assemble_case(&mesh, config)?;
    let assembly_s = t.elapsed().as_secs_f64();
    evaluate_level(&mesh, &sys, config, level, n, assembly_s)
}

/// Solves an assembled system and evaluates its errors (and condition
/// numbers when requested).
pub fn evaluate_level(
    mesh: &Mesh,
    sys: &LinearSystem,
    config: &StudyConfig,
    level: usize,
    n: usize,
    assembly_s: f64,
) -> Result<ErrorReport> {
    let (x, report) = solve(sys, config.condense)?;
    let mut row = error_norms(mesh, sys, &x, &config.case, config.quad_boost)?;
    row.level = level;
    row.n = n;
    row.assembly_s = assembly_s;
    row.factor_s = report.factor_seconds + report.condense_seconds;
    row.solve_s = report.solve_seconds;
    row.residual = report.residual;
    if config.estimate_kappa {
        let (full, cond) = condition_numbers(sys, config.kappa_tol, config.kappa_max_iter, config.kappa_seed)?;
        row.kappa_full = Some(full.kappa);
        row.kappa_cond = cond.map(|c| c.kappa);
        row.kappa_converged = full.converged && cond.is_none_or(|c| c.converged);
    }
    Ok(row)
}

/// Runs every level in order. A failing level is recorded and the run
/// continues with the next one.
pub fn run_convergence(config: &StudyConfig) -> Result<ConvergenceTable> {
    let mut rows = Vec::with_capacity(config.levels.len());
    for (level, &n) in config.levels.iter().enumerate() {
        let row = match run_level(level, n, config) {
            Ok(r) => r,
            Err(e) => {
                let mesh = config.case.mesh(n);
                ErrorReport {
                    level,
                    n,
                    cells: mesh.num_cells(),
                    h: mesh.mesh_size(),
                    failure: Some(e.to_string()),
                    ..Default::default()
                }
            }
        };
        rows.push(row);
    }
    let coarse = config.case.mesh(config.levels.first().copied().unwrap_or(4));
    let scales = exact_norms(&coarse, &config.case.exact, 2 * (config.k + 2) + config.quad_boost + 4)?;
    Ok(ConvergenceTable::new(&config.case, config.method, config.k, rows, scales))
}

//! `c0hho`: single solves, convergence studies, and condition-number studies
//! on the manufactured biharmonic cases.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage error, 3 I/O error,
//! 4 invalid mesh. Failures print one line `error[kind]: message` on stderr.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use c0hho::basis::NodeSet;
use c0hho::cases::{ManufacturedCase, CASE_NAMES};
use c0hho::hho_local::WeightMode;
use c0hho::mesh::Mesh;
use c0hho::study::{assemble_case, evaluate_level, run_convergence, ConvergenceTable, ErrorReport, StudyConfig};
use c0hho::system::{LinearSystem, Method};
use clap::builder::PossibleValuesParser;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "C0HHO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "c0hho", version, about = "C0-HHO and C0-IPDG solvers for the biharmonic problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one case on one mesh and report its errors.
    Solve(SolveArgs),
    /// Run a convergence study over a mesh sequence.
    Converge(StudyArgs),
    /// Estimate condition numbers of the full and condensed systems.
    Condition(StudyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Hho,
    Ipdg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightArg {
    #[value(name = "weighted_k")]
    WeightedK,
    #[value(name = "h_inv")]
    HInv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NodeSetArg {
    Warped,
    Equispaced,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Manufactured case.
    #[arg(long, value_parser = PossibleValuesParser::new(CASE_NAMES))]
    case: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Hho)]
    method: MethodArg,
    /// Boundary condition type; must agree with the case.
    #[arg(long, value_parser = ["I", "II"])]
    bc: Option<String>,
    /// Face degree k (IPDG uses cell degree k + 2).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=4))]
    k: u8,
    #[arg(long, value_enum, default_value_t = WeightArg::WeightedK)]
    weight_mode: WeightArg,
    #[arg(long, value_enum, default_value_t = NodeSetArg::Warped)]
    node_set: NodeSetArg,
    /// Extra quadrature degree for error integrals.
    #[arg(long, default_value_t = 4)]
    quad_boost: usize,
    /// Extra load quadrature degree on top of the cell degree p (default p + 4).
    #[arg(long)]
    q_rhs: Option<usize>,
    /// IPDG penalty factor.
    #[arg(long, default_value_t = 4.0)]
    ipdg_penalty: f64,
    /// Solve the full system instead of the condensed one.
    #[arg(long)]
    no_condense: bool,
    /// Drop the line-source part of the load (negative control).
    #[arg(long)]
    no_line_source: bool,
    /// Estimate condition numbers by power iteration.
    #[arg(long)]
    estimate_kappa: bool,
    #[arg(long, default_value_t = 1e-2)]
    kappa_tol: f64,
    #[arg(long, default_value_t = 500)]
    kappa_max_iter: usize,
    /// Seed of the power-iteration start vectors.
    #[arg(long)]
    seed: Option<u64>,
    /// Fill the timing columns of the CSV.
    #[arg(long)]
    timings: bool,
    /// Omit the timestamp comment line from the CSV.
    #[arg(long)]
    no_timestamp: bool,
    /// CSV output file (stdout when absent).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Markdown table output file.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid size of the generated mesh (default: the case's coarsest).
    #[arg(long, conflicts_with = "mesh")]
    n: Option<usize>,
    /// Mesh file: `V E C` header, V lines `x y`, C lines `a b c`.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Write the eliminated system to `<PREFIX>_A.txt` (lower triplets)
    /// and `<PREFIX>_b.txt`.
    #[arg(long, value_name = "PREFIX")]
    dump_system: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of levels taken from the case's mesh family.
    #[arg(long, conflicts_with = "n")]
    levels: Option<usize>,
    /// Explicit comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
}

#[derive(Debug)]
enum Failure {
    Numerical(String),
    Usage(String),
    Io(String),
    Mesh(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Mesh(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Failure::Numerical(m) => ("numerical", m),
            Failure::Usage(m) => ("usage", m),
            Failure::Io(m) => ("io", m),
            Failure::Mesh(m) => ("mesh", m),
        };
        write!(f, "error[{kind}]: {}", msg.replace('\n', " "))
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

/// Collapses a clap error to one line: the message and any value hints,
/// without the usage block.
fn clap_one_line(e: &clap::Error) -> String {
    let rendered = e.render().to_string();
    let parts: Vec<&str> = rendered
        .lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:"))
        .filter(|l| !l.is_empty() && !l.starts_with("For more information"))
        .collect();
    parts.join(" ").trim_start_matches("error: ").to_string()
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure {threads} threads: {e}")))
}

fn study_config(common: &CommonArgs, levels: Vec<usize>) -> Result<StudyConfig, Failure> {
    let case = ManufacturedCase::by_name(&common.case).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(bc) = &common.bc {
        if *bc != case.bc.to_string() {
            return Err(Failure::Usage(format!("case {} uses bc {}, got --bc {bc}", case.name, case.bc)));
        }
    }
    let method = match common.method {
        MethodArg::Hho => Method::Hho,
        MethodArg::Ipdg => Method::Ipdg,
    };
    let mut config = StudyConfig::new(case, method, common.k as usize, levels);
    config.options.weight_mode = match common.weight_mode {
        WeightArg::WeightedK => WeightMode::WeightedK,
        WeightArg::HInv => WeightMode::HInv,
    };
    config.options.node_set = match common.node_set {
        NodeSetArg::Warped => NodeSet::Warped,
        NodeSetArg::Equispaced => NodeSet::Equispaced,
    };
    config.options.q_rhs = common.q_rhs;
    config.options.ipdg_penalty = common.ipdg_penalty;
    config.condense = !common.no_condense;
    config.estimate_kappa = common.estimate_kappa;
    config.kappa_tol = common.kappa_tol;
    config.kappa_max_iter = common.kappa_max_iter;
    config.kappa_seed = common.seed;
    config.quad_boost = common.quad_boost;
    config.include_line_source = !common.no_line_source;
    Ok(config)
}

fn level_name(row: &ErrorReport) -> String {
    format!("level {} (n={}, cells={})", row.level, row.n, row.cells)
}

/// Rows that failed, or whose condition estimate did not converge.
fn check_rows(table: &ConvergenceTable, kappa: bool) -> Result<(), Failure> {
    for row in &table.rows {
        if let Some(msg) = &row.failure {
            return Err(Failure::Numerical(format!("{}: {msg}", level_name(row))));
        }
        if kappa && !row.kappa_converged {
            return Err(Failure::Numerical(format!("{}: condition estimate did not converge", level_name(row))));
        }
    }
    Ok(())
}

fn csv_text(table: &ConvergenceTable, common: &CommonArgs) -> String {
    let mut out = String::new();
    if !common.no_timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        out.push_str(&format!("# c0hho {} generated at unix time {secs}\n", env!("CARGO_PKG_VERSION")));
    }
    out.push_str(&table.to_csv(common.timings));
    out
}

fn write_outputs(table: &ConvergenceTable, common: &CommonArgs) -> Result<(), Failure> {
    let csv = csv_text(table, common);
    match &common.output {
        Some(path) => fs::write(path, csv).map_err(io_failure(path))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &common.markdown {
        fs::write(path, table.to_markdown()).map_err(io_failure(path))?;
    }
    Ok(())
}

fn load_mesh(path: &Path, case: &ManufacturedCase) -> Result<Mesh, Failure> {
    let text = fs::read_to_string(path).map_err(io_failure(path))?;
    let mesh = Mesh::from_text(&text).map_err(|e| Failure::Mesh(format!("{}: {e}", path.display())))?;
    mesh.check_covers(case.domain)
        .map_err(|e| Failure::Mesh(format!("{}: not a mesh of the {} domain: {e}", path.display(), case.name)))?;
    Ok(mesh)
}

fn dump_system(sys: &LinearSystem, prefix: &Path) -> Result<(), Failure> {
    let with_suffix = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    };
    let a_path = with_suffix("_A.txt");
    let file = fs::File::create(&a_path).map_err(io_failure(&a_path))?;
    let mut w = BufWriter::new(file);
    sys.matrix.write_lower_triplets(&mut w).and_then(|_| w.flush()).map_err(io_failure(&a_path))?;

    let b_path = with_suffix("_b.txt");
    let file = fs::File::create(&b_path).map_err(io_failure(&b_path))?;
    let mut w = BufWriter::new(file);
    sys.rhs
        .iter()
        .try_for_each(|v| writeln!(w, "{v:.17e}"))
        .and_then(|_| w.flush())
        .map_err(io_failure(&b_path))
}

fn run_solve(args: &SolveArgs) -> Result<(), Failure> {
    let probe = study_config(&args.common, Vec::new())?;
    let (mesh, n) = match &args.mesh {
        Some(path) => (load_mesh(path, &probe.case)?, 0),
        None => {
            let n = args.n.unwrap_or(probe.case.family.levels[0]);
            if n == 0 {
                return Err(Failure::Usage("--n must be positive".into()));
            }
            (probe.case.mesh(n), n)
        }
    };
    let config = study_config(&args.common, vec![n])?;
    let numerical = |e: c0hho::Error| match e {
        c0hho::Error::Io(e) => Failure::Io(e.to_string()),
        e => Failure::Numerical(format!("level 0 (n={n}, cells={}): {e}", mesh.num_cells())),
    };
    let t = Instant::now();
    let sys = assemble_case(&mesh, &config).map_err(numerical)?;
    let assembly_s = t.elapsed().as_secs_f64();
    for w in &sys.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(prefix) = &args.dump_system {
        dump_system(&sys, prefix)?;
    }
    let row = evaluate_level(&mesh, &sys, &config, 0, n, assembly_s).map_err(numerical)?;

    println!("case: {} method: {} bc: {} k: {}", config.case.name, config.method, config.case.bc, config.k);
    println!("cells: {} dofs: {} unknowns: {}", row.cells, row.dofs, sys.free.len());
    println!("err_H2: {:.6e}", row.reconstruction.h2);
    println!("err_H1: {:.6e}", row.reconstruction.h1);
    println!("err_L2: {:.6e}", row.reconstruction.l2);
    println!("err_stab: {:.6e}", row.stab);
    println!("residual: {:.3e}", row.residual);
    if let Some(kf) = row.kappa_full {
        println!("kappa_full: {kf:.4e}");
    }
    if let Some(kc) = row.kappa_cond {
        println!("kappa_cond: {kc:.4e}");
    }
    if args.common.timings {
        println!("assembly_s: {:.3} factor_s: {:.3} solve_s: {:.3}", row.assembly_s, row.factor_s, row.solve_s);
    }

    let table = ConvergenceTable::new(&config.case, config.method, config.k, vec![row], config_scales(&config)?);
    if args.common.output.is_some() || args.common.markdown.is_some() {
        write_outputs(&table, &args.common)?;
    }
    check_rows(&table, config.estimate_kappa)
}

fn config_scales(config: &StudyConfig) -> Result<c0hho::study::NormTriple, Failure> {
    let coarse = config.case.mesh(config.case.family.levels[0]);
    c0hho::study::exact_norms(&coarse, &config.case.exact, 2 * (config.k + 2) + config.quad_boost + 4)
        .map_err(|e| Failure::Numerical(e.to_string()))
}

fn study_levels(args: &StudyArgs, family: &[usize]) -> Result<Vec<usize>, Failure> {
    let levels = if !args.n.is_empty() {
        args.n.clone()
    } else if let Some(count) = args.levels {
        if count == 0 || count > family.len() {
            return Err(Failure::Usage(format!("--levels must be in 1..={} for this case, got {count}", family.len())));
        }
        family[..count].to_vec()
    } else {
        family.to_vec()
    };
    if levels.contains(&0) {
        return Err(Failure::Usage("grid sizes must be positive".into()));
    }
    Ok(levels)
}

fn run_study(args: &StudyArgs, force_kappa: bool) -> Result<(), Failure> {
    let probe = study_config(&args.common, Vec::new())?;
    let levels = study_levels(args, &probe.case.family.levels)?;
    let mut config = study_config(&args.common, levels)?;
    config.estimate_kappa |= force_kappa;
    let table = run_convergence(&config).map_err(|e| Failure::Numerical(e.to_string()))?;
    write_outputs(&table, &args.common)?;
    if force_kappa && args.common.output.is_some() {
        println!("cells,dofs,kappa_full,kappa_cond,ratio_cond");
        let mut previous: Option<f64> = None;
        for row in &table.rows {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_default();
            let ratio = match (previous, row.kappa_cond) {
                (Some(p), Some(c)) => format!("{:.2}", c / p),
                _ => String::new(),
            };
            println!("{},{},{},{},{ratio}", row.cells, row.dofs, fmt(row.kappa_full), fmt(row.kappa_cond));
            previous = row.kappa_cond;
        }
    }
    check_rows(&table, config.estimate_kappa)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Converge(args) => run_study(args, false),
        Command::Condition(args) => run_study(args, true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    eprintln!("{}", Failure::Usage("expected a subcommand: solve, converge, condition".into()));
                    ExitCode::from(2)
                }
                _ => {
                    eprintln!("{}", Failure::Usage(clap_one_line(&e)));
                    ExitCode::from(2)
                }
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}

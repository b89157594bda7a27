//! Command-line front end: `solve`, `convergence` and `condition`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{convergence_rates, energy_balance, energy_series, dg_norm_error, l2_final_error};
use crate::assembly::default_quadrature_points;
use crate::basis::SpaceKind;
use crate::config::RunConfig;
use crate::error::{invalid, Error, Result};
use crate::linalg::{condition_number, BlockMatrix};
use crate::mesh::{build_cartesian_mesh, FacetKind, SpaceTimeMesh};
use crate::problems::BenchmarkProblem;
use crate::solver::{first_slab_system, solve, DiscreteSolution, SolverOptions};

#[derive(Debug, Parser)]
#[command(name = "qtdg", version, about = "Space-time DG benchmarks for the Schrödinger equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single run; the configuration must name one space, degree and mesh.
    Solve(RunArgs),
    /// Error table over the mesh sweep for every space and degree.
    Convergence(RunArgs),
    /// Condition number of the first slab matrix over the sweep.
    Condition(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// CSV destination (overrides `output.csv`).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Write the first slab matrix next to the CSV (`solve` only).
    #[arg(long)]
    pub dump_matrices: bool,
}

pub const CONVERGENCE_HEADER: [&str; 10] =
    ["h", "p", "space", "dofs", "dg_error", "dg_rate", "l2T_error", "l2T_rate", "energy_loss", "wall_ms"];
pub const CONDITION_HEADER: [&str; 4] = ["h", "p", "space", "kappa2"];
pub const ENERGY_HEADER: [&str; 2] = ["t", "energy"];

/// Full double precision: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One line of the error table.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub p: usize,
    pub space: SpaceKind,
    pub dofs: usize,
    pub dg_error: Option<f64>,
    pub dg_rate: Option<f64>,
    pub l2_final: Option<f64>,
    pub l2_rate: Option<f64>,
    pub energy_loss: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionRow {
    pub h: f64,
    pub p: usize,
    pub space: SpaceKind,
    pub kappa2: f64,
}

/// Outcome of a single run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub row: ErrorRow,
    pub solution: DiscreteSolution,
}

fn build_mesh(cfg: &RunConfig, problem: &BenchmarkProblem, entry: usize) -> Result<Arc<SpaceTimeMesh>> {
    let cells = cfg.cells(entry, problem.dim());
    Ok(Arc::new(build_cartesian_mesh(&problem.domain, &cells, cfg.mesh.sweep[entry].slabs)?))
}

fn analysis_points(cfg: &RunConfig, p: usize, problem: &BenchmarkProblem) -> usize {
    cfg.quadrature.map_or_else(|| default_quadrature_points(p, problem), |q| q.points)
}

/// Solves on sweep entry `entry` and evaluates the errors.
pub fn run_one(
    cfg: &RunConfig,
    problem: &BenchmarkProblem,
    kind: SpaceKind,
    p: usize,
    entry: usize,
    options: &SolverOptions,
) -> Result<RunOutput> {
    let start = Instant::now();
    let mesh = build_mesh(cfg, problem, entry)?;
    let sol = solve(mesh.clone(), problem, kind, p, options)?;
    let points = analysis_points(cfg, p, problem);
    let norm = cfg.error_stabilization();
    let (dg_error, l2_final) = match &problem.exact {
        Some(exact) => (Some(dg_norm_error(&sol, problem, &norm, points)?), Some(l2_final_error(&sol, exact, points)?)),
        None => (None, None),
    };
    let robin = mesh.facets().iter().any(|f| f.kind == FacetKind::Robin);
    let energy_loss = if robin {
        None
    } else {
        Some(energy_balance(&sol, problem, &cfg.stabilization, points)?.loss)
    };
    let row = ErrorRow {
        h: mesh.max_h_k(),
        p,
        space: kind,
        dofs: sol.dofs(),
        dg_error,
        dg_rate: None,
        l2_final,
        l2_rate: None,
        energy_loss,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(RunOutput { row, solution: sol })
}

fn fill_rates(rows: &mut [ErrorRow], pick: fn(&ErrorRow) -> Option<f64>, set: fn(&mut ErrorRow, Option<f64>)) {
    for i in 1..rows.len() {
        let (a, b) = (&rows[i - 1], &rows[i]);
        let rate = match (pick(a), pick(b)) {
            (Some(ea), Some(eb)) => convergence_rates(&[(a.h, ea), (b.h, eb)]).ok().and_then(|r| r[0]),
            _ => None,
        };
        set(&mut rows[i], rate);
    }
}

/// Rows ordered by space, then degree, then sweep entry. Rates compare
/// consecutive entries of one (space, degree) group.
pub fn convergence_rows(cfg: &RunConfig) -> Result<Vec<ErrorRow>> {
    let problem = cfg.build_problem()?;
    let options = cfg.solver_options();
    let mut rows = Vec::new();
    for kind in cfg.kinds() {
        for &p in &cfg.space.degree {
            let mut group = Vec::with_capacity(cfg.mesh.sweep.len());
            for entry in 0..cfg.mesh.sweep.len() {
                group.push(run_one(cfg, &problem, kind, p, entry, &options)?.row);
            }
            fill_rates(&mut group, |r| r.dg_error, |r, x| r.dg_rate = x);
            fill_rates(&mut group, |r| r.l2_final, |r, x| r.l2_rate = x);
            rows.extend(group);
        }
    }
    Ok(rows)
}

pub fn condition_rows(cfg: &RunConfig) -> Result<Vec<ConditionRow>> {
    let problem = cfg.build_problem()?;
    if !RunConfig::potential_is_zero(&problem) {
        return Err(Error::Config("the condition study needs a problem with zero potential".into()));
    }
    let options = cfg.solver_options();
    let mut rows = Vec::new();
    for kind in cfg.kinds() {
        for &p in &cfg.space.degree {
            for entry in 0..cfg.mesh.sweep.len() {
                let mesh = build_mesh(cfg, &problem, entry)?;
                let sys = first_slab_system(&mesh, &problem, kind, p, &options.assembly)?;
                rows.push(ConditionRow { h: mesh.max_h_k(), p, space: kind, kappa2: condition_number(&sys.k)? });
            }
        }
    }
    Ok(rows)
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn error_csv(rows: &[ErrorRow], omit_timing: bool) -> Result<String> {
    csv_string(
        &CONVERGENCE_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.h),
                r.p.to_string(),
                r.space.label().to_string(),
                r.dofs.to_string(),
                fmt_opt(r.dg_error),
                fmt_opt(r.dg_rate),
                fmt_opt(r.l2_final),
                fmt_opt(r.l2_rate),
                fmt_opt(r.energy_loss),
                if omit_timing { String::new() } else { format!("{:.3}", r.wall_ms) },
            ]
        }),
    )
}

pub fn condition_csv(rows: &[ConditionRow]) -> Result<String> {
    csv_string(
        &CONDITION_HEADER,
        rows.iter().map(|r| vec![fmt_f64(r.h), r.p.to_string(), r.space.label().to_string(), fmt_f64(r.kappa2)]),
    )
}

pub fn energy_csv(series: &[(f64, f64)]) -> Result<String> {
    csv_string(&ENERGY_HEADER, series.iter().map(|(t, e)| vec![fmt_f64(*t), fmt_f64(*e)]))
}

/// Text dump: `rows cols`, then `row col re im` per stored entry
/// (0-based indices, row-major order).
pub fn matrix_dump(m: &BlockMatrix) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for (r, c, v) in m.entries() {
        s.push_str(&format!("{r} {c} {} {}\n", fmt_f64(v.re), fmt_f64(v.im)));
    }
    s
}

/// `dir/stem.csv` → `dir/stem<suffix>`.
pub fn sibling_path(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}{suffix}"))
}

/// Files produced by one command, keyed by destination (`None` is
/// standard output).
pub type Outputs = Vec<(Option<PathBuf>, String)>;

pub fn execute(command: &Command) -> Result<Outputs> {
    let (args, kind) = match command {
        Command::Solve(a) => (a, 0),
        Command::Convergence(a) => (a, 1),
        Command::Condition(a) => (a, 2),
    };
    let cfg = RunConfig::from_path(&args.config)?;
    let out = args.out.clone().or_else(|| cfg.output.csv.clone());
    let run = || -> Result<Outputs> {
        match kind {
            0 => solve_outputs(&cfg, out.as_deref(), args.dump_matrices || cfg.output.dump_matrices),
            1 => Ok(vec![(out.clone(), error_csv(&convergence_rows(&cfg)?, cfg.output.omit_timing)?)]),
            _ => Ok(vec![(out.clone(), condition_csv(&condition_rows(&cfg)?)?)]),
        }
    };
    match args.threads {
        Some(0) => Err(invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

fn solve_outputs(cfg: &RunConfig, out: Option<&Path>, dump: bool) -> Result<Outputs> {
    if cfg.space.kind.len() != 1 || cfg.space.degree.len() != 1 || cfg.mesh.sweep.len() != 1 {
        return Err(Error::Config("`solve` needs exactly one space kind, one degree and one mesh entry".into()));
    }
    if (dump || cfg.output.energy_series) && out.is_none() {
        return Err(Error::Config("matrix and energy output need a CSV path (--out or output.csv)".into()));
    }
    let problem = cfg.build_problem()?;
    let (kind, p) = (cfg.kinds()[0], cfg.space.degree[0]);
    let mut options = cfg.solver_options();
    options.keep_first_system = dump;
    let run = run_one(cfg, &problem, kind, p, 0, &options)?;
    let mut files = vec![(out.map(Path::to_path_buf), error_csv(std::slice::from_ref(&run.row), cfg.output.omit_timing)?)];
    if let Some(path) = out {
        if dump {
            let sys = run.solution.first_system().ok_or_else(|| Error::Numerical("first slab system missing".into()))?;
            files.push((Some(sibling_path(path, "_matrix.txt")), matrix_dump(&sys.k)));
        }
        if cfg.output.energy_series {
            let series = energy_series(&run.solution, analysis_points(cfg, p, &problem))?;
            files.push((Some(sibling_path(path, "_energy.csv")), energy_csv(&series)?));
        }
    }
    Ok(files)
}

/// Writes the outputs of [`execute`].
pub fn write_outputs(outputs: &Outputs) -> Result<()> {
    for (dest, text) in outputs {
        match dest {
            Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockMatrix;
    use nalgebra::DMatrix;
    use num_complex::Complex64 as C64;

    #[test]
    fn numbers_use_seventeen_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn dump_lists_every_block_entry() {
        let mut m = BlockMatrix::new(1, 1, 2);
        m.add_block(0, 0, &DMatrix::from_element(2, 2, C64::new(1.0, -0.5)));
        let text = matrix_dump(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "2 2");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0 1 "));
    }

    #[test]
    fn rates_are_empty_on_group_start() {
        let row = |h: f64, e: f64| ErrorRow {
            h,
            p: 1,
            space: SpaceKind::QuasiTrefftz,
            dofs: 1,
            dg_error: Some(e),
            dg_rate: None,
            l2_final: None,
            l2_rate: None,
            energy_loss: None,
            wall_ms: 0.0,
        };
        let mut rows = vec![row(1.0, 1.0), row(0.5, 0.25)];
        fill_rates(&mut rows, |r| r.dg_error, |r, x| r.dg_rate = x);
        assert_eq!(rows[0].dg_rate, None);
        assert!((rows[1].dg_rate.unwrap() - 2.0).abs() < 1e-14);
        let csv = error_csv(&rows, true).unwrap();
        assert!(csv.starts_with("h,p,space,dofs,dg_error,dg_rate,l2T_error,l2T_rate,energy_loss,wall_ms\n"));
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling_path(Path::new("/a/run.csv"), "_energy.csv"), PathBuf::from("/a/run_energy.csv"));
    }
}

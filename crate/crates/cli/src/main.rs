mod plot;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use twopatch::adaptivity::{run_problem, AdaptiveRecord, RefineMode};
use twopatch::bspline::UnivariateSplineSpace;
use twopatch::geometry::{self, compute_gluing, gluing_residual, TwoPatchGeometry};
use twopatch::problems::Problem;
use twopatch::space::{CoupledSpace, Smoothness};

use plot::Series;
use table::ConvergenceTable;

/// Adaptive C1 isogeometric solver on two-patch domains.
#[derive(Parser)]
#[command(name = "twopatch", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one of the benchmark problems and write CSV + SVG output.
    Run(RunArgs),
    /// Check a two-patch geometry file for analysis-suitable gluing data.
    VerifyGeometry { path: PathBuf },
    /// Print basis dimensions for a coupled space.
    DumpSpace(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Benchmark problem id (1-4).
    #[arg(long)]
    example: u32,
    /// Spline degree (3 or 4); interior regularity is degree - 2.
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Interface smoothness of the discrete space.
    #[arg(long, value_enum, default_value_t = Smooth::C1)]
    smoothness: Smooth,
    /// Refinement strategy; defaults to adaptive, or corner for example 4.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Doerfler marking parameter in (0, 1]; defaults per problem.
    #[arg(long)]
    theta: Option<f64>,
    /// Stop refining once NDOF reaches this count.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    /// Output directory for CSV and SVG files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, value_enum, default_value_t = Smooth::C1)]
    smoothness: Smooth,
    /// Elements per direction per patch.
    #[arg(long, default_value_t = 4)]
    elements: usize,
    /// Geometry file; bundled L-shape when omitted.
    #[arg(long)]
    geometry: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Smooth {
    C1,
    C0,
}

impl From<Smooth> for Smoothness {
    fn from(s: Smooth) -> Smoothness {
        match s {
            Smooth::C1 => Smoothness::C1,
            Smooth::C0 => Smoothness::C0,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    Adaptive,
    Uniform,
    Corner,
}

impl From<Mode> for RefineMode {
    fn from(m: Mode) -> RefineMode {
        match m {
            Mode::Adaptive => RefineMode::Adaptive,
            Mode::Uniform => RefineMode::Uniform,
            Mode::Corner => RefineMode::CornerBlock,
        }
    }
}

/// Refinement cap protecting against budgets the marking never reaches.
const MAX_REFINEMENTS: usize = 60;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::VerifyGeometry { path } => cmd_verify(&path),
        Cmd::DumpSpace(args) => cmd_dump(args),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<twopatch::Error>() {
                Some(twopatch::Error::Numerical(_)) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let problem = Problem::from_id(args.example)
        .ok_or_else(|| twopatch::Error::validation("--example must be 1, 2, 3, or 4"))?;
    if !(3..=4).contains(&args.degree) {
        return Err(twopatch::Error::validation("--degree must be 3 or 4").into());
    }
    let mode = args.mode.unwrap_or(if problem.fourth_order() { Mode::Corner } else { Mode::Adaptive });
    let theta = args.theta.unwrap_or_else(|| problem.default_theta());

    let records = run_problem(
        problem,
        args.degree,
        args.smoothness.into(),
        mode.into(),
        theta,
        args.budget,
        MAX_REFINEMENTS,
    )?;
    let rows: Vec<(usize, f64, f64)> =
        records.iter().map(|r| (r.ndof, reported_error(problem, r), r.estimator)).collect();
    let tab = ConvergenceTable::new(rows)?;

    let stem = format!(
        "ex{}_p{}_{}{}",
        problem.id(),
        args.degree,
        match args.smoothness {
            Smooth::C1 => "C1",
            Smooth::C0 => "C0",
        },
        if mode == Mode::Uniform { "_glob" } else { "" }
    );
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    let csv = tab.emit();
    anyhow::ensure!(
        ConvergenceTable::parse(&csv)?.rows == tab.rows,
        "CSV round-trip drifted from the in-memory table"
    );
    let csv_path = args.out.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, &csv).with_context(|| format!("writing {}", csv_path.display()))?;

    let mut series = vec![Series {
        label: "error",
        color: "#1f77b4",
        points: tab.rows.iter().map(|&(n, e, _)| (n as f64, e)).collect(),
    }];
    if tab.rows.iter().any(|&(_, _, eta)| eta > 0.0) {
        series.push(Series {
            label: "estimator",
            color: "#d62728",
            points: tab.rows.iter().map(|&(n, _, eta)| (n as f64, eta)).collect(),
        });
    }
    let slope = reference_slope(problem, args.degree);
    let title = format!(
        "Example {}, p={}, {}, {}",
        problem.id(),
        args.degree,
        match args.smoothness {
            Smooth::C1 => "C1",
            Smooth::C0 => "C0",
        },
        match mode {
            Mode::Adaptive => "adaptive",
            Mode::Uniform => "uniform",
            Mode::Corner => "corner-block",
        }
    );
    let svg_path = args.out.join(format!("{stem}.svg"));
    std::fs::write(&svg_path, plot::emit_plot(&series, slope, &title)?)
        .with_context(|| format!("writing {}", svg_path.display()))?;

    print_summary(&tab, &records);
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(())
}

/// The column reported as "error": H1 seminorm for the second-order
/// problems (relative for example 2), H2 seminorm for the bilaplacian.
fn reported_error(problem: Problem, r: &AdaptiveRecord) -> f64 {
    if problem.fourth_order() {
        r.error.h2
    } else if problem.relative_error() {
        r.error.h1 / r.exact.h1
    } else {
        r.error.h1
    }
}

/// Expected asymptotic order vs NDOF, drawn as the plot's slope triangle:
/// p/2 for the H1 error, (p-1)/2 for the bilaplacian's H2 error.
fn reference_slope(problem: Problem, degree: usize) -> f64 {
    if problem.fourth_order() {
        (degree - 1) as f64 / 2.0
    } else {
        degree as f64 / 2.0
    }
}

fn print_summary(tab: &ConvergenceTable, records: &[AdaptiveRecord]) {
    let rates = tab.eoc();
    println!("{:>5} {:>9} {:>14} {:>14} {:>8} {:>7} {:>8}", "iter", "ndof", "error", "estimator", "eoc", "marked", "seconds");
    for (i, (&(n, e, eta), r)) in tab.rows.iter().zip(records).enumerate() {
        let rate = match i.checked_sub(1).and_then(|k| rates[k]) {
            Some(q) => format!("{q:8.3}"),
            None => format!("{:>8}", "--"),
        };
        println!(
            "{i:>5} {n:>9} {e:>14.6e} {eta:>14.6e} {rate} {:>7} {:>8.3}",
            r.marked, r.seconds
        );
    }
    match tab.tail_order(5) {
        Some(q) => println!("tail EOC (last {} solves): {:.3}", 5.min(tab.rows.len()), q),
        None => println!("tail EOC: undefined (non-positive errors)"),
    }
}

fn cmd_verify(path: &std::path::Path) -> anyhow::Result<()> {
    let geo = geometry::load_geometry(path)?;
    println!("loaded two-patch geometry from {}", path.display());
    match compute_gluing(&geo) {
        Ok(glue) => {
            let res = gluing_residual(&geo, &glue);
            println!("analysis-suitable G1: yes");
            println!("  gluing residual (relative sup norm): {res:.3e}");
            println!("  alpha_L(t) = {:+.6} {:+.6} t", glue.alpha_l.0, glue.alpha_l.1);
            println!("  alpha_R(t) = {:+.6} {:+.6} t", glue.alpha_r.0, glue.alpha_r.1);
            println!(
                "  beta(t)    = {:+.6} {:+.6} t {:+.6} t^2",
                glue.beta.0, glue.beta.1, glue.beta.2
            );
            println!("  beta_L(t)  = {:+.6} {:+.6} t", glue.beta_l.0, glue.beta_l.1);
            println!("  beta_R(t)  = {:+.6} {:+.6} t", glue.beta_r.0, glue.beta_r.1);
            Ok(())
        }
        Err(e) => {
            println!("analysis-suitable G1: no ({e})");
            Err(anyhow::Error::new(e).context("geometry is not analysis-suitable"))
        }
    }
}

fn cmd_dump(args: DumpArgs) -> anyhow::Result<()> {
    if args.degree < 3 {
        return Err(twopatch::Error::validation("--degree must be at least 3").into());
    }
    if args.elements == 0 {
        return Err(twopatch::Error::validation("--elements must be positive").into());
    }
    let geo: TwoPatchGeometry = match &args.geometry {
        Some(p) => geometry::load_geometry(p)?,
        None => geometry::lshape(),
    };
    let glue = compute_gluing(&geo)?;
    let p = args.degree;
    let r = p - 2;
    let brk: Vec<f64> = (1..args.elements).map(|i| i as f64 / args.elements as f64).collect();
    let space = UnivariateSplineSpace::make(p, r, &brk)?;
    let coupled = CoupledSpace::new(space, &glue, args.smoothness.into())?;

    let uni = coupled.univariate();
    println!("univariate direction: degree {p}, regularity {r}, {} elements", uni.num_elements());
    println!("  dim S_p^r      = {}", uni.dim());
    if let Some(s0) = coupled.trace_space() {
        println!("  dim S_p^(r+1)  = {} (interface value traces)", s0.dim());
    }
    if let Some(s1) = coupled.derivative_trace_space() {
        println!("  dim S_(p-1)^r  = {} (interface derivative traces)", s1.dim());
    }
    let nv = coupled.num_interface_value();
    let nd = coupled.num_interface_derivative();
    let interior = (coupled.dim() - nv - nd) / 2;
    println!(
        "coupled space ({}):",
        match coupled.smoothness() {
            Smoothness::C1 => "C1 across the interface",
            Smoothness::C0 => "C0 across the interface",
        }
    );
    println!("  interface value functions      = {nv}");
    println!("  interface derivative functions = {nd}");
    println!("  interior functions per patch   = {interior}");
    println!("  total dim                      = {}", coupled.dim());
    Ok(())
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fde_core::bench::{
    q_candidates, run_case, scan_qopt, table1_default_grid, table1_sweep, table_sweep,
    write_qopt_csv, write_table_csv, CaseConfig, MeshConfig, QChoice, Solver, TableRow,
};
use fde_core::meshgen::CompositeRule;
use fde_core::spectral::{
    eig_vs_symbol, glt5_region, glt5_sequence, write_region_csv, write_sequence_csv, SampleGrid,
    SymbolP,
};
use fde_core::{FdeError, GmresOptions, SourceQuadrature};

#[derive(Parser)]
#[command(name = "fde", version, about = "Fractional diffusion FVE solver and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Uniform,
    Graded,
    Composite,
}

#[derive(Clone, Copy, ValueEnum)]
enum Quadrature {
    CellMidpoint,
    Nodal,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Coarse,
    Fine,
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct Solve {
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "graded")]
    mesh: MeshKind,
    /// Grading exponent; defaults to (1+β)/(1−β) capped so that h_1 ≥ 1e-16.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    eps1: f64,
    #[arg(long, default_value_t = 0.0)]
    eps2: f64,
    #[arg(long, default_value_t = 255)]
    n: usize,
    #[arg(long, default_value = "sqrt")]
    rule: CompositeRule,
    #[arg(long, default_value = "pgmres")]
    solver: Solver,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    maxit: usize,
    /// Where the source term is sampled in each control volume.
    #[arg(long, value_enum, default_value = "cell-midpoint")]
    quadrature: Quadrature,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Table {
    /// 1 is the q scan; 2, 3 and 4 are convergence tables.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4))]
    id: u32,
    /// Largest k with N + 1 = 2^k (convergence tables only).
    #[arg(long)]
    max_exponent: Option<u32>,
    /// Restrict the q scan to these γ values.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Size of the q scan.
    #[arg(long, default_value_t = 1023)]
    n: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    maxit: usize,
    /// Append wall-clock seconds per row.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Qopt {
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    eps1: f64,
    #[arg(long, default_value_t = 0.0)]
    eps2: f64,
    #[arg(long, default_value_t = 1023)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    q_min: f64,
    #[arg(long, default_value_t = 9.0)]
    q_max: f64,
    #[arg(long, default_value_t = 0.1)]
    q_step: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Symbol {
    #[arg(long)]
    beta: f64,
    /// Number of cosine terms.
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Number of θ samples in [0, π].
    #[arg(long, default_value_t = 201)]
    points: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Glt5 {
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Sizes N of the sequence.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256,512")]
    n: Vec<usize>,
    /// Sign map of s(16) − s(32) over β ∈ {0.1..0.9} and q ∈ [1, 10].
    #[arg(long)]
    region: bool,
    #[arg(long, default_value_t = 0.25)]
    q_step: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Eigcmp {
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, value_enum, default_value = "fine")]
    grid: GridKind,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the benchmark problem u = x^{1-β} once.
    Solve(Solve),
    /// Reproduce one of the experiment tables.
    Table(Table),
    /// Error-minimising grading exponent for one configuration.
    Qopt(Qopt),
    /// Sample the generating function p^β on [0, π].
    Symbol(Symbol),
    /// Trace-norm sequence s(N) of the antisymmetric part, or its sign map.
    Glt5(Glt5),
    /// Sorted eigenvalues against sorted symbol samples.
    Eigcmp(Eigcmp),
}

/// Exit status: success, a configuration error, or partial results.
enum Outcome {
    Done,
    Partial,
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn json<T: serde::Serialize>(value: &T, out: &mut dyn Write) -> fde_core::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| FdeError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn check_gmres(tol: f64, maxit: usize) -> fde_core::Result<GmresOptions> {
    if !(tol > 0.0) || maxit == 0 {
        return Err(FdeError::InvalidParameter(format!(
            "need tol > 0 and maxit > 0, got tol = {tol}, maxit = {maxit}"
        )));
    }
    Ok(GmresOptions { tol, maxit })
}

fn solve(a: Solve) -> fde_core::Result<Outcome> {
    let mesh = match a.mesh {
        MeshKind::Uniform => MeshConfig::Uniform,
        MeshKind::Composite => MeshConfig::Composite { rule: a.rule },
        MeshKind::Graded => MeshConfig::Graded {
            q: a.q.map_or(QChoice::Auto, QChoice::Fixed),
            eps1: a.eps1,
            eps2: a.eps2,
        },
    };
    let mut cfg = CaseConfig::new(a.beta, a.gamma, mesh, a.n, a.solver);
    cfg.gmres = check_gmres(a.tol, a.maxit)?;
    cfg.quadrature = match a.quadrature {
        Quadrature::CellMidpoint => SourceQuadrature::CellMidpoint,
        Quadrature::Nodal => SourceQuadrature::Nodal,
    };
    let res = run_case(&cfg)?;
    let grid = mesh.build(a.beta, a.n)?;
    let mut out = sink(&a.output.out)?;
    match a.output.format {
        Format::Json => json(&res, &mut out)?,
        Format::Csv => {
            writeln!(out, "x,u,exact")?;
            for (i, u) in res.solution.iter().enumerate() {
                let x = grid.x(i + 1);
                writeln!(out, "{x:.16e},{u:.16e},{:.16e}", x.powf(1.0 - a.beta))?;
            }
        }
    }
    out.flush()?;
    eprintln!(
        "It = {}, e_inf = {:.6e}, e_rel = {:.6e}",
        res.it_cell(),
        res.e_inf,
        res.e_rel
    );
    Ok(if res.converged {
        Outcome::Done
    } else {
        Outcome::Partial
    })
}

fn table(a: Table) -> fde_core::Result<Outcome> {
    let mut out = sink(&a.output.out)?;
    let partial = if a.id == 1 {
        let (mut gammas, betas, eps) = table1_default_grid();
        if let Some(g) = a.gamma {
            gammas = g;
        }
        let rows = table1_sweep(a.n, &gammas, &betas, &eps, &q_candidates(1.0, 9.0, 0.1));
        match a.output.format {
            Format::Csv => write_qopt_csv(&rows, &mut out)?,
            Format::Json => json(&rows, &mut out)?,
        }
        rows.iter().any(|r| r.result.is_none())
    } else {
        let mut template = CaseConfig::new(0.5, 0.5, MeshConfig::Uniform, 0, Solver::PGmres);
        template.gmres = check_gmres(a.tol, a.maxit)?;
        let rows = table_sweep(a.id, &template, a.max_exponent)?;
        match a.output.format {
            Format::Csv => write_table_csv(&rows, a.timing, &mut out)?,
            Format::Json => json(&rows, &mut out)?,
        }
        rows.iter().any(|r: &TableRow| r.result.is_none())
    };
    out.flush()?;
    Ok(if partial {
        Outcome::Partial
    } else {
        Outcome::Done
    })
}

fn qopt(a: Qopt) -> fde_core::Result<Outcome> {
    let cands = q_candidates(a.q_min, a.q_max, a.q_step);
    let res = scan_qopt(a.beta, a.gamma, (a.eps1, a.eps2), a.n, &cands)?;
    let mut out = sink(&a.output.out)?;
    match a.output.format {
        Format::Json => json(&res, &mut out)?,
        Format::Csv => {
            writeln!(out, "q,e_inf")?;
            for (q, e) in &res.curve {
                writeln!(out, "{q:.6},{e:.16e}")?;
            }
        }
    }
    out.flush()?;
    eprintln!(
        "q_opt = {:.1} (e = {:.6e}), q_beta = {:.6} (e = {:.6e})",
        res.q_opt, res.e_opt, res.q_beta, res.e_beta
    );
    Ok(Outcome::Done)
}

fn symbol(a: Symbol) -> fde_core::Result<Outcome> {
    if a.points < 2 || a.n == 0 {
        return Err(FdeError::InvalidParameter(
            "need at least 2 points and 1 term".into(),
        ));
    }
    let p = SymbolP::new(a.n, a.beta);
    let samples: Vec<(f64, f64)> = (0..a.points)
        .map(|j| {
            let t = j as f64 * std::f64::consts::PI / (a.points - 1) as f64;
            (t, p.eval(t))
        })
        .collect();
    let mut out = sink(&a.output.out)?;
    match a.output.format {
        Format::Json => json(&samples, &mut out)?,
        Format::Csv => {
            writeln!(out, "theta,p")?;
            for (t, v) in &samples {
                writeln!(out, "{t:.16e},{v:.16e}")?;
            }
        }
    }
    out.flush()?;
    Ok(Outcome::Done)
}

fn glt5(a: Glt5) -> fde_core::Result<Outcome> {
    let mut out = sink(&a.output.out)?;
    if a.region {
        let betas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let qs = q_candidates(1.0, 10.0, a.q_step);
        let cells = glt5_region(&betas, &qs)?;
        match a.output.format {
            Format::Csv => write_region_csv(&cells, &mut out)?,
            Format::Json => json(&cells, &mut out)?,
        }
    } else {
        let s = glt5_sequence(a.beta, a.q, &a.n)?;
        match a.output.format {
            Format::Csv => write_sequence_csv(&a.n, &s, &mut out)?,
            Format::Json => json(&a.n.iter().zip(&s).collect::<Vec<_>>(), &mut out)?,
        }
    }
    out.flush()?;
    Ok(Outcome::Done)
}

fn eigcmp(a: Eigcmp) -> fde_core::Result<Outcome> {
    let tag = match a.grid {
        GridKind::Coarse => SampleGrid::Coarse,
        GridKind::Fine => SampleGrid::Fine,
    };
    let rep = eig_vs_symbol(a.beta, a.q, a.n, tag)?;
    let mut out = sink(&a.output.out)?;
    match a.output.format {
        Format::Json => json(&rep, &mut out)?,
        Format::Csv => rep.write_csv(&mut out)?,
    }
    out.flush()?;
    eprintln!(
        "sup gap = {:.6e} ({:.3}% of the spectral radius)",
        rep.sup_gap,
        100.0 * rep.rel_gap()
    );
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Table(a) => table(a),
        Command::Qopt(a) => qopt(a),
        Command::Symbol(a) => symbol(a),
        Command::Glt5(a) => glt5(a),
        Command::Eigcmp(a) => eigcmp(a),
    };
    match res {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

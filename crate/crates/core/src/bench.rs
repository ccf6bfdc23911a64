//! Experiment driver for the benchmark problem `u(x) = x^{1-β}`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_dense, assemble_rhs, row_weights, FdeProblem, LinearOperator, SourceQuadrature,
};
use crate::dense::lu_solve;
use crate::error::{FdeError, Result};
use crate::krylov::{gmres, GmresOptions, LinearMap};
use crate::meshgen::{
    blend_coefficients, composite_grid, composite_grid_counts, graded_grid, q_cap, q_for_beta,
    uniform_grid, CompositeRule, Grid,
};
use crate::multigrid::{MgHierarchy, MgOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QChoice {
    /// `min((1+β)/(1−β), cap(N))`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeshConfig {
    Uniform,
    Graded { q: QChoice, eps1: f64, eps2: f64 },
    Composite { rule: CompositeRule },
    CompositeCounts { n1: usize, n2: usize },
}

impl MeshConfig {
    pub fn graded(eps1: f64, eps2: f64) -> Self {
        MeshConfig::Graded {
            q: QChoice::Auto,
            eps1,
            eps2,
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeshConfig::Uniform => "uniform".into(),
            MeshConfig::Graded { eps1, eps2, .. } => format!("eps({eps1}/{eps2})"),
            MeshConfig::Composite { rule } => format!("composite-{rule}"),
            MeshConfig::CompositeCounts { n1, n2 } => format!("composite({n1}/{n2})"),
        }
    }

    /// Grading exponent actually used for `β` and `n`.
    pub fn q(&self, beta: f64, n: usize) -> Option<f64> {
        match self {
            MeshConfig::Graded { q: QChoice::Auto, .. } => Some(q_for_beta(beta, n)),
            MeshConfig::Graded {
                q: QChoice::Fixed(q),
                ..
            } => Some(*q),
            _ => None,
        }
    }

    /// Builds the grid; `n` is ignored for explicit composite counts.
    pub fn build(&self, beta: f64, n: usize) -> Result<Grid> {
        match self {
            MeshConfig::Uniform => uniform_grid(n),
            MeshConfig::Graded { eps1, eps2, .. } => {
                let q = self.q(beta, n).unwrap();
                graded_grid(n, &blend_coefficients(q, *eps1, *eps2)?)
            }
            MeshConfig::Composite { rule } => composite_grid(n, *rule),
            MeshConfig::CompositeCounts { n1, n2 } => composite_grid_counts(*n1, *n2),
        }
    }
}

/// The six `(ε₁, ε₂)` pairs of the experiments, `ε^(1)..ε^(6)`.
pub const EPS: [(f64, f64); 6] = [
    (0.1, 0.05),
    (0.2, 0.05),
    (0.25, 0.0),
    (0.45, 0.05),
    (0.5, 0.0),
    (1.0, 0.0),
];

pub fn eps_mesh(index: usize) -> MeshConfig {
    let (e1, e2) = EPS[index - 1];
    MeshConfig::graded(e1, e2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// GMRES preconditioned by one V-cycle.
    PGmres,
    Gmres,
    Direct,
}

impl std::str::FromStr for Solver {
    type Err = FdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgmres" => Ok(Solver::PGmres),
            "gmres" => Ok(Solver::Gmres),
            "direct" => Ok(Solver::Direct),
            _ => Err(FdeError::InvalidParameter(format!("unknown solver {s:?}"))),
        }
    }
}

/// Which system GMRES iterates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemForm {
    /// `H A x = H b` with `H = diag(1/h_i)`; the residual test uses `H b`.
    Scaled,
    /// `A x = b`, preconditioned by `r ↦ V(H r)`.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub beta: f64,
    pub gamma: f64,
    pub mesh: MeshConfig,
    pub n: usize,
    pub solver: Solver,
    pub gmres: GmresOptions,
    #[serde(skip)]
    pub mg: MgOptions,
    pub form: SystemForm,
    pub quadrature: SourceQuadrature,
}

impl CaseConfig {
    pub fn new(beta: f64, gamma: f64, mesh: MeshConfig, n: usize, solver: Solver) -> Self {
        Self {
            beta,
            gamma,
            mesh,
            n,
            solver,
            gmres: GmresOptions::default(),
            mg: MgOptions::default(),
            form: SystemForm::Scaled,
            quadrature: SourceQuadrature::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub beta: f64,
    pub gamma: f64,
    pub mesh: String,
    pub n: usize,
    pub q: Option<f64>,
    /// `None` for the direct solver.
    pub iterations: Option<usize>,
    pub converged: bool,
    pub omega: Option<f64>,
    pub e_inf: f64,
    pub e_rel: f64,
    pub ord: Option<f64>,
    pub wall_time: f64,
    #[serde(skip)]
    pub solution: Vec<f64>,
}

impl CaseResult {
    /// Iteration count as printed in the tables: `-` past the limit.
    pub fn it_cell(&self) -> String {
        match (self.iterations, self.converged) {
            (_, false) => "-".into(),
            (Some(k), true) => k.to_string(),
            (None, true) => String::new(),
        }
    }
}

/// Max and relative 2-norm errors against `x^{1-β}` on the interior nodes.
pub fn errors(grid: &Grid, beta: f64, u: &[f64]) -> (f64, f64) {
    let mut e_inf = 0.0f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (x, ui) in grid.interior().iter().zip(u) {
        let exact = FdeProblem::benchmark_solution(beta, *x);
        let d = exact - ui;
        e_inf = e_inf.max(d.abs());
        num += d * d;
        den += exact * exact;
    }
    (e_inf, (num / den).sqrt())
}

/// `r ↦ V(H r)`, a preconditioner for the unscaled system.
struct ScaledVcycle<'a> {
    hier: &'a MgHierarchy,
    weights: Vec<f64>,
}

impl LinearMap for ScaledVcycle<'_> {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = v.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        self.hier.vcycle(&scaled)
    }
}

pub fn run_case(cfg: &CaseConfig) -> Result<CaseResult> {
    let start = Instant::now();
    let problem = FdeProblem::benchmark(cfg.beta, cfg.gamma)?.with_quadrature(cfg.quadrature);
    let grid = cfg.mesh.build(cfg.beta, cfg.n)?;
    let rhs = assemble_rhs(&grid, &problem)?;
    let weights = row_weights(&grid);

    let (u, iterations, converged, omega) = match cfg.solver {
        Solver::Direct => {
            let a = assemble_dense(&grid, &problem)?;
            (lu_solve(&a, &rhs)?, None, true, None)
        }
        Solver::Gmres => {
            let a = assemble_dense(&grid, &problem)?;
            let (op, b) = system(a, rhs, &weights, cfg.form);
            let rep = gmres(&op, &b, None, &cfg.gmres)?;
            (rep.solution, Some(rep.iterations), rep.converged, None)
        }
        Solver::PGmres => {
            let hier = MgHierarchy::with_options(grid.clone(), &problem, &cfg.mg)?;
            let rep = match cfg.form {
                SystemForm::Scaled => {
                    let b: Vec<f64> = rhs.iter().zip(&weights).map(|(v, w)| v * w).collect();
                    gmres(&hier.levels[0].operator, &b, Some(&hier), &cfg.gmres)?
                }
                SystemForm::Unscaled => {
                    let op = LinearOperator::Dense(assemble_dense(&grid, &problem)?);
                    let prec = ScaledVcycle {
                        hier: &hier,
                        weights: weights.clone(),
                    };
                    gmres(&op, &rhs, Some(&prec), &cfg.gmres)?
                }
            };
            (rep.solution, Some(rep.iterations), rep.converged, Some(hier.omega))
        }
    };
    let (e_inf, e_rel) = errors(&grid, cfg.beta, &u);
    Ok(CaseResult {
        beta: cfg.beta,
        gamma: cfg.gamma,
        mesh: cfg.mesh.label(),
        n: grid.n(),
        q: cfg.mesh.q(cfg.beta, cfg.n),
        iterations,
        converged,
        omega,
        e_inf,
        e_rel,
        ord: None,
        wall_time: start.elapsed().as_secs_f64(),
        solution: u,
    })
}

fn system(
    mut a: nalgebra::DMatrix<f64>,
    mut b: Vec<f64>,
    weights: &[f64],
    form: SystemForm,
) -> (LinearOperator, Vec<f64>) {
    if form == SystemForm::Scaled {
        for (i, w) in weights.iter().enumerate() {
            a.row_mut(i).scale_mut(*w);
            b[i] *= w;
        }
    }
    (LinearOperator::Dense(a), b)
}

#[derive(Debug, Clone, Serialize)]
pub struct QoptResult {
    pub q_opt: f64,
    pub e_opt: f64,
    pub q_beta: f64,
    pub e_beta: f64,
    /// `(q, e_inf)` for every candidate.
    pub curve: Vec<(f64, f64)>,
}

/// `q ∈ {lo, lo + step, …, hi}` built from integer multiples of `step`.
pub fn q_candidates(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|k| ((lo / step).round() + k as f64) * step)
        .collect()
}

/// Direct-solve error for every candidate `q` whose first step stays above
/// `MIN_FIRST_STEP`, plus the error at `q_for_beta`.
pub fn scan_qopt(
    beta: f64,
    gamma: f64,
    eps: (f64, f64),
    n: usize,
    candidates: &[f64],
) -> Result<QoptResult> {
    let err_at = |q: f64| -> Result<f64> {
        let mesh = MeshConfig::Graded {
            q: QChoice::Fixed(q),
            eps1: eps.0,
            eps2: eps.1,
        };
        Ok(run_case(&CaseConfig::new(beta, gamma, mesh, n, Solver::Direct))?.e_inf)
    };
    let cap = q_cap(n);
    let mut curve = Vec::with_capacity(candidates.len());
    for &q in candidates.iter().filter(|&&q| q <= cap) {
        curve.push((q, err_at(q)?));
    }
    let &(q_opt, e_opt) = curve
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| FdeError::InvalidParameter("empty candidate list".into()))?;
    let q_beta = q_for_beta(beta, n);
    let e_beta = match curve.iter().find(|(q, _)| (q - q_beta).abs() < 1e-12) {
        Some(&(_, e)) => e,
        None => err_at(q_beta)?,
    };
    Ok(QoptResult {
        q_opt,
        e_opt,
        q_beta,
        e_beta,
        curve,
    })
}

/// One `(β, γ, mesh)` column of a convergence table over `N + 1 = 2^k`.
pub fn run_column(
    beta: f64,
    gamma: f64,
    mesh: MeshConfig,
    exponents: std::ops::RangeInclusive<u32>,
    template: &CaseConfig,
) -> Vec<Result<CaseResult>> {
    let mut out: Vec<Result<CaseResult>> = exponents
        .map(|k| {
            let cfg = CaseConfig {
                beta,
                gamma,
                mesh,
                n: (1usize << k) - 1,
                ..*template
            };
            run_case(&cfg)
        })
        .collect();
    let mut ok: Vec<usize> = Vec::new();
    for (i, r) in out.iter().enumerate() {
        if r.is_ok() {
            ok.push(i);
        }
    }
    for w in ok.windows(2) {
        let (a, b) = (w[0], w[1]);
        let prev = out[a].as_ref().map(|r| (r.e_inf, r.n, r.converged)).ok();
        if let (Some((e_prev, n_prev, c_prev)), Ok(cur)) = (prev, out[b].as_mut()) {
            if c_prev && cur.converged && cur.n + 1 == 2 * (n_prev + 1) {
                cur.ord = Some((e_prev / cur.e_inf).log2());
            }
        }
    }
    out
}

/// Parameter grid of a table.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub id: u32,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, Copy)]
pub struct TableCell {
    pub beta: f64,
    pub gamma: f64,
    pub mesh: MeshConfig,
    pub exponents: (u32, u32),
}

const TABLE1_GAMMAS: [f64; 3] = [0.3, 0.5, 0.7];
const TABLE1_BETAS: [f64; 3] = [0.2, 0.5, 0.8];

fn convergence_meshes(eps: &[usize]) -> Vec<MeshConfig> {
    let mut v = vec![
        MeshConfig::Composite {
            rule: CompositeRule::Sqrt,
        },
        MeshConfig::Composite {
            rule: CompositeRule::Log2,
        },
    ];
    v.extend(eps.iter().map(|&i| eps_mesh(i)));
    v
}

/// Cells of the convergence tables 2, 3 and 4.
pub fn table_spec(id: u32) -> Result<TableSpec> {
    let mut cells = Vec::new();
    match id {
        2 => {
            for beta in [0.2, 0.5, 0.8] {
                for mesh in convergence_meshes(&[1, 2, 4, 6]) {
                    cells.push(TableCell {
                        beta,
                        gamma: 0.5,
                        mesh,
                        exponents: (4, 10),
                    });
                }
            }
        }
        3 => {
            for (n1, n2) in [(8, 256), (16, 512), (32, 1024)] {
                cells.push(TableCell {
                    beta: 0.9,
                    gamma: 0.5,
                    mesh: MeshConfig::CompositeCounts { n1, n2 },
                    exponents: (0, 0),
                });
            }
            for mesh in convergence_meshes(&[1, 2, 4, 6]) {
                cells.push(TableCell {
                    beta: 0.9,
                    gamma: 0.5,
                    mesh,
                    exponents: (4, 10),
                });
            }
        }
        4 => {
            for gamma in [0.0, 1.0] {
                for beta in [0.1, 0.3, 0.7] {
                    for mesh in convergence_meshes(&[1, 4, 6]) {
                        cells.push(TableCell {
                            beta,
                            gamma,
                            mesh,
                            exponents: (5, 10),
                        });
                    }
                }
            }
        }
        _ => {
            return Err(FdeError::InvalidParameter(format!(
                "no convergence table with id {id}"
            )))
        }
    }
    Ok(TableSpec { id, cells })
}

/// One table row, or the reason it could not be produced.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub table: u32,
    pub result: Option<CaseResult>,
    pub error: Option<String>,
    pub beta: f64,
    pub gamma: f64,
    pub mesh: String,
    pub n: usize,
}

/// Runs a convergence table; `max_exponent` truncates the `N` range.
pub fn table_sweep(id: u32, template: &CaseConfig, max_exponent: Option<u32>) -> Result<Vec<TableRow>> {
    let spec = table_spec(id)?;
    let mut rows = Vec::new();
    for cell in spec.cells {
        let (lo, mut hi) = cell.exponents;
        if let Some(m) = max_exponent {
            hi = hi.min(m);
        }
        if lo == 0 {
            // explicit point counts: a single solve
            let n = match cell.mesh {
                MeshConfig::CompositeCounts { n1, n2 } => n1 + n2,
                _ => unreachable!(),
            };
            let cfg = CaseConfig {
                beta: cell.beta,
                gamma: cell.gamma,
                mesh: cell.mesh,
                n,
                ..*template
            };
            rows.push(row_from(id, &cfg, run_case(&cfg)));
            continue;
        }
        if lo > hi {
            continue;
        }
        let column = run_column(cell.beta, cell.gamma, cell.mesh, lo..=hi, template);
        for (k, res) in (lo..=hi).zip(column) {
            let cfg = CaseConfig {
                beta: cell.beta,
                gamma: cell.gamma,
                mesh: cell.mesh,
                n: (1usize << k) - 1,
                ..*template
            };
            rows.push(row_from(id, &cfg, res));
        }
    }
    Ok(rows)
}

fn row_from(table: u32, cfg: &CaseConfig, res: Result<CaseResult>) -> TableRow {
    let (result, error) = match res {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    TableRow {
        table,
        result,
        error,
        beta: cfg.beta,
        gamma: cfg.gamma,
        mesh: cfg.mesh.label(),
        n: cfg.n,
    }
}

fn sig6(v: f64) -> String {
    format!("{v:.5e}")
}

/// CSV in table column order; the timing column is opt-in so that repeated
/// runs produce identical files.
pub fn write_table_csv<W: Write>(rows: &[TableRow], timing: bool, mut out: W) -> Result<()> {
    let mut header = "table,beta,gamma,mesh,N,q,omega,It,e_inf,e_rel,ord,status".to_string();
    if timing {
        header.push_str(",wall_time");
    }
    writeln!(out, "{header}")?;
    for row in rows {
        let mut line = format!("{},{},{},{},{}", row.table, row.beta, row.gamma, row.mesh, row.n);
        match (&row.result, &row.error) {
            (Some(r), _) => {
                let (e_inf, e_rel) = if r.converged {
                    (sig6(r.e_inf), sig6(r.e_rel))
                } else {
                    ("-".into(), "-".into())
                };
                line.push_str(&format!(
                    ",{},{},{},{},{},{},ok",
                    r.q.map(sig6).unwrap_or_default(),
                    r.omega.map(|w| format!("{w:.3}")).unwrap_or_default(),
                    r.it_cell(),
                    e_inf,
                    e_rel,
                    r.ord.map(|o| format!("{o:.2}")).unwrap_or_default(),
                ));
                if timing {
                    line.push_str(&format!(",{:.3}", r.wall_time));
                }
            }
            (None, err) => {
                let msg = err.clone().unwrap_or_default().replace(',', ";");
                line.push_str(&format!(",,,,,,,error: {msg}"));
                if timing {
                    line.push(',');
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// A row of the `q` scan table.
#[derive(Debug, Clone, Serialize)]
pub struct QoptRow {
    pub gamma: f64,
    pub beta: f64,
    pub eps: (f64, f64),
    pub result: Option<QoptResult>,
    pub error: Option<String>,
}

/// The `q` scan over `γ × β × ε` at a single `N`.
pub fn table1_sweep(
    n: usize,
    gammas: &[f64],
    betas: &[f64],
    eps: &[(f64, f64)],
    candidates: &[f64],
) -> Vec<QoptRow> {
    let mut rows = Vec::new();
    for &gamma in gammas {
        for &beta in betas {
            for &e in eps {
                let res = scan_qopt(beta, gamma, e, n, candidates);
                let (result, error) = match res {
                    Ok(r) => (Some(r), None),
                    Err(err) => (None, Some(err.to_string())),
                };
                rows.push(QoptRow {
                    gamma,
                    beta,
                    eps: e,
                    result,
                    error,
                });
            }
        }
    }
    rows
}

pub fn table1_default_grid() -> (Vec<f64>, Vec<f64>, Vec<(f64, f64)>) {
    (TABLE1_GAMMAS.to_vec(), TABLE1_BETAS.to_vec(), EPS.to_vec())
}

pub fn write_qopt_csv<W: Write>(rows: &[QoptRow], mut out: W) -> Result<()> {
    writeln!(out, "gamma,beta,eps1,eps2,q_beta,q_opt,e_opt,e_beta,status")?;
    for r in rows {
        match (&r.result, &r.error) {
            (Some(q), _) => writeln!(
                out,
                "{},{},{},{},{},{:.1},{},{},ok",
                r.gamma,
                r.beta,
                r.eps.0,
                r.eps.1,
                sig6(q.q_beta),
                q.q_opt,
                sig6(q.e_opt),
                sig6(q.e_beta)
            )?,
            (None, err) => writeln!(
                out,
                "{},{},{},{},,,,,error: {}",
                r.gamma,
                r.beta,
                r.eps.0,
                r.eps.1,
                err.clone().unwrap_or_default().replace(',', ";")
            )?,
        }
    }
    Ok(())
}

//! Geometric V-cycle on rediscretized, row-scaled operators.
//!
//! Level `ℓ + 1` keeps the endpoints and the even interior points of level
//! `ℓ`, so `N^{ℓ+1} = ⌊N^ℓ / 2⌋`, until `N ≤ 3`. Every level holds
//! `H A` with `H = diag(1/h_i)`, which makes the operators on different
//! levels comparable without extra scaling factors.

use std::io::Write;

use log::warn;
use nalgebra::Complex;
use serde::Serialize;

use crate::assembly::{assemble_dense, row_weights, FdeProblem, LinearOperator};
use crate::dense::{eigenvalues, DenseLu};
use crate::error::{FdeError, Result};
use crate::meshgen::{Grid, MeshSpec};

/// Largest `Ñ` used for the smoother weight estimate.
pub const OMEGA_PROBE_MAX_N: usize = 16;
pub const OMEGA_FALLBACK: f64 = 2.0 / 3.0;

/// Keeps `x_0`, `x_{N+1}` and the even interior points.
pub fn coarsen(grid: &Grid) -> Result<Grid> {
    let n = grid.n();
    if n < 4 {
        return Err(FdeError::InvalidGrid(format!(
            "cannot coarsen a grid with N = {n} < 4"
        )));
    }
    let pts = grid.points();
    let mut coarse: Vec<f64> = (0..=n / 2).map(|k| pts[2 * k]).collect();
    coarse.push(1.0);
    Grid::from_points(coarse)
}

/// Sparse interpolation from a coarse grid to the fine grid it came from.
/// Fine point `i` (one-based) has at most two coarse contributors.
#[derive(Debug, Clone)]
pub struct Prolongation {
    /// Per fine interior point: `(coarse index, weight)` pairs, zero-based.
    rows: Vec<Vec<(usize, f64)>>,
    n_coarse: usize,
}

impl Prolongation {
    pub fn new(fine: &Grid, coarse: &Grid) -> Result<Self> {
        let (nf, nc) = (fine.n(), coarse.n());
        if nc != nf / 2 || (1..=nc).any(|k| coarse.x(k) != fine.x(2 * k)) {
            return Err(FdeError::InvalidGrid(
                "coarse grid is not the even subsampling of the fine grid".into(),
            ));
        }
        let rows = (1..=nf)
            .map(|i| {
                if i % 2 == 0 {
                    return vec![(i / 2 - 1, 1.0)];
                }
                // bracketing coarse points are fine points i-1 and i+1
                let (xl, x, xr) = (fine.x(i - 1), fine.x(i), fine.x(i + 1));
                let w_left = (xr - x) / (xr - xl);
                let w_right = (x - xl) / (xr - xl);
                let mut row = Vec::with_capacity(2);
                if i > 1 {
                    row.push(((i - 1) / 2 - 1, w_left));
                }
                if i + 1 <= 2 * nc {
                    row.push(((i + 1) / 2 - 1, w_right));
                }
                row
            })
            .collect();
        Ok(Self { rows, n_coarse: nc })
    }

    pub fn n_fine(&self) -> usize {
        self.rows.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// `P v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * v[k]).sum())
            .collect()
    }

    /// `Pᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_coarse];
        for (row, &vi) in self.rows.iter().zip(v) {
            for &(k, w) in row {
                out[k] += w * vi;
            }
        }
        out
    }
}

/// Residual transfer to the coarse level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Restriction {
    /// `Pᵀ`.
    Transpose,
    /// `Pᵀ / 2`, full weighting on every level.
    HalfTranspose,
}

/// Containment region `O = {x + iy : x ∈ I, |y| < õ(x)}` for the
/// eigenvalues of the Jacobi iteration matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmootherRegion {
    pub c: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for SmootherRegion {
    fn default() -> Self {
        Self {
            c: 0.475,
            x_min: -1239.0 / 1961.0,
            x_max: 1.0,
        }
    }
}

impl SmootherRegion {
    /// `õ(x) = √(1 − x²) + c x − c`.
    pub fn boundary(&self, x: f64) -> f64 {
        (1.0 - x * x).max(0.0).sqrt() + self.c * x - self.c
    }

    pub fn contains(&self, z: Complex<f64>) -> bool {
        z.re >= self.x_min && z.re <= self.x_max && z.im.abs() < self.boundary(z.re)
    }
}

/// Largest `ω` of the descending scan `1.995, 1.990, …, 0.005` such that
/// every `1 − ωλ` lies in the region.
pub fn omega_from_spectrum(lambdas: &[Complex<f64>], region: &SmootherRegion) -> Option<f64> {
    (1..=399)
        .rev()
        .map(|k| k as f64 / 200.0)
        .find(|&w| {
            lambdas
                .iter()
                .all(|&l| region.contains(Complex::new(1.0, 0.0) - l * w))
        })
}

/// Eigenvalues of `D⁻¹ A` for a dense `A`.
pub fn jacobi_spectrum(a: &nalgebra::DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        let d = a[(i, i)];
        if d == 0.0 {
            return Err(FdeError::Singular(format!("zero diagonal in row {}", i + 1)));
        }
        m.row_mut(i).scale_mut(1.0 / d);
    }
    eigenvalues(&m)
}

/// Weight from the Jacobi spectrum of the row-scaled system on `grid`.
pub fn estimate_omega_on(grid: &Grid, problem: &FdeProblem, region: &SmootherRegion) -> Result<f64> {
    let a = assemble_dense(grid, problem)?;
    // row scaling does not change D⁻¹A
    let lambdas = jacobi_spectrum(&a)?;
    Ok(match omega_from_spectrum(&lambdas, region) {
        Some(w) => w,
        None => {
            warn!(
                "no relaxation weight keeps the Jacobi spectrum inside the region (N = {}); using {OMEGA_FALLBACK}",
                grid.n()
            );
            OMEGA_FALLBACK
        }
    })
}

/// Weight estimated on the mesh family `spec` at size `n_tilde`.
pub fn estimate_omega(
    problem: &FdeProblem,
    spec: &MeshSpec,
    region: &SmootherRegion,
    n_tilde: usize,
) -> Result<f64> {
    if !(4..=OMEGA_PROBE_MAX_N).contains(&n_tilde) {
        return Err(FdeError::InvalidParameter(format!(
            "probe size {n_tilde} must lie in [4, {OMEGA_PROBE_MAX_N}]"
        )));
    }
    estimate_omega_on(&spec.build(n_tilde)?, problem, region)
}

#[derive(Debug, Clone)]
pub struct MgLevel {
    pub grid: Grid,
    pub operator: LinearOperator,
    inv_diag: Vec<f64>,
}

impl MgLevel {
    fn new(grid: Grid, problem: &FdeProblem) -> Result<Self> {
        let mut a = assemble_dense(&grid, problem)?;
        for (i, w) in row_weights(&grid).iter().enumerate() {
            a.row_mut(i).scale_mut(*w);
        }
        let operator = LinearOperator::Dense(a);
        let diag = operator.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(FdeError::Singular(format!("zero diagonal in row {}", i + 1)));
        }
        Ok(Self {
            grid,
            operator,
            inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgOptions {
    pub restriction: Restriction,
    /// Fixed weight; estimated from the hierarchy when `None`.
    pub omega: Option<f64>,
    pub region: SmootherRegion,
}

impl Default for MgOptions {
    fn default() -> Self {
        Self {
            restriction: Restriction::HalfTranspose,
            omega: None,
            region: SmootherRegion::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MgHierarchy {
    pub levels: Vec<MgLevel>,
    pub prolongations: Vec<Prolongation>,
    pub omega: f64,
    pub restriction: Restriction,
    coarse_lu: DenseLu,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n: usize,
    pub omega: f64,
    /// Largest absolute row sum of the level operator.
    pub norm_inf: f64,
}

impl MgHierarchy {
    pub fn build(grid: Grid, problem: &FdeProblem) -> Result<Self> {
        Self::with_options(grid, problem, &MgOptions::default())
    }

    pub fn with_options(grid: Grid, problem: &FdeProblem, opts: &MgOptions) -> Result<Self> {
        if grid.n() < 4 {
            return Err(FdeError::InvalidGrid(format!(
                "multigrid needs N >= 4, got {}",
                grid.n()
            )));
        }
        let mut grids = vec![grid];
        while grids.last().unwrap().n() > 3 {
            let next = coarsen(grids.last().unwrap())?;
            grids.push(next);
        }
        let prolongations = grids
            .windows(2)
            .map(|w| Prolongation::new(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        let levels = grids
            .into_iter()
            .map(|g| MgLevel::new(g, problem))
            .collect::<Result<Vec<_>>>()?;

        let omega = match opts.omega {
            Some(w) => w,
            None => {
                let probe = levels
                    .iter()
                    .find(|l| l.n() <= OMEGA_PROBE_MAX_N)
                    .expect("coarsest level has N <= 3");
                estimate_omega_on(&probe.grid, problem, &opts.region)?
            }
        };
        if !(omega > 0.0 && omega < 2.0) {
            return Err(FdeError::InvalidParameter(format!(
                "omega = {omega} must lie in (0, 2)"
            )));
        }
        let coarse_lu = DenseLu::new(levels.last().unwrap().operator.to_dense())?;
        Ok(Self {
            levels,
            prolongations,
            omega,
            restriction: opts.restriction,
            coarse_lu,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn n(&self) -> usize {
        self.levels[0].n()
    }

    /// One V-cycle with zero initial guess for `(H A) e = r` on the finest level.
    pub fn vcycle(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n() {
            return Err(FdeError::DimensionMismatch {
                expected: self.n(),
                got: r.len(),
            });
        }
        Ok(self.cycle(0, r))
    }

    fn cycle(&self, l: usize, r: &[f64]) -> Vec<f64> {
        let level = &self.levels[l];
        if l + 1 == self.levels.len() {
            return self.coarse_lu.solve(r);
        }
        let w = self.omega;
        let mut x: Vec<f64> = r.iter().zip(&level.inv_diag).map(|(ri, d)| w * d * ri).collect();
        let res = self.residual(level, r, &x);

        let p = &self.prolongations[l];
        let rc = match self.restriction {
            Restriction::Transpose => p.apply_transpose(&res),
            Restriction::HalfTranspose => p.apply_transpose(&res).iter().map(|v| 0.5 * v).collect(),
        };
        let ec = self.cycle(l + 1, &rc);
        for (xi, e) in x.iter_mut().zip(p.apply(&ec)) {
            *xi += e;
        }

        let res = self.residual(level, r, &x);
        for ((xi, ri), d) in x.iter_mut().zip(&res).zip(&level.inv_diag) {
            *xi += w * d * ri;
        }
        x
    }

    fn residual(&self, level: &MgLevel, r: &[f64], x: &[f64]) -> Vec<f64> {
        let ax = level
            .operator
            .matvec(x)
            .expect("level operator dimension matches");
        r.iter().zip(ax).map(|(ri, a)| ri - a).collect()
    }

    pub fn summary(&self) -> Vec<LevelSummary> {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let a = l.operator.to_dense();
                let norm_inf = a
                    .row_iter()
                    .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                LevelSummary {
                    level: i,
                    n: l.n(),
                    omega: self.omega,
                    norm_inf,
                }
            })
            .collect()
    }

    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.summary())
            .map_err(|e| FdeError::Io(e.to_string()))
    }
}

//! Finite volume element assembly of `A_N u = b` on an arbitrary grid.
//!
//! Every entry of the coefficient matrix is a combination of difference
//! quotients of `t ↦ t^β`,
//!
//! ```text
//! dq(s, d) = ((s + d)^β - s^β) / d,
//! ```
//!
//! where `s` is a distance from a cell midpoint to a node (a partial sum of
//! steps) and `d` a single step. Evaluating `dq` through `expm1`/`ln1p`
//! keeps it accurate when `d ≪ s`, which happens on graded meshes whose
//! first step is close to `1e-16`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{FdeError, Result};
use crate::meshgen::Grid;
use crate::special::gamma;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Diffusion coefficient `K(x) > 0`.
#[derive(Clone)]
pub enum Diffusion {
    Constant(f64),
    Variable(ScalarFn),
}

impl Diffusion {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Diffusion::Constant(k) => *k,
            Diffusion::Variable(f) => f(x),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Diffusion::Constant(k) => Some(*k),
            Diffusion::Variable(_) => None,
        }
    }
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Constant(k) => write!(f, "Constant({k})"),
            Diffusion::Variable(_) => f.write_str("Variable(..)"),
        }
    }
}

/// Data of the two-sided problem: order parameter `β`, anisotropy `γ`,
/// diffusion `K`, source `f` and Dirichlet values.
#[derive(Clone)]
pub struct FdeProblem {
    pub beta: f64,
    pub gamma: f64,
    pub diffusion: Diffusion,
    pub source: ScalarFn,
    pub u_left: f64,
    pub u_right: f64,
    pub quadrature: SourceQuadrature,
}

/// Sample point of the one-point rule `∫_{Ω_i} f ≈ f(ξ_i) (h_i + h_{i+1}) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceQuadrature {
    /// `ξ_i = (x_{i-1/2} + x_{i+1/2}) / 2`. Stays accurate next to a `1/x`
    /// source on strongly graded meshes.
    #[default]
    CellMidpoint,
    /// `ξ_i = x_i`.
    Nodal,
}

impl fmt::Debug for FdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FdeProblem")
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .field("diffusion", &self.diffusion)
            .field("u_left", &self.u_left)
            .field("u_right", &self.u_right)
            .field("quadrature", &self.quadrature)
            .finish_non_exhaustive()
    }
}

impl FdeProblem {
    /// Validated constructor, `0 < β < 1` and `0 ≤ γ ≤ 1`.
    pub fn new(
        beta: f64,
        gamma: f64,
        diffusion: Diffusion,
        source: ScalarFn,
        u_left: f64,
        u_right: f64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(FdeError::InvalidParameter(format!(
                "beta = {beta} must lie in (0, 1)"
            )));
        }
        Self::limit(beta, gamma, diffusion, source, u_left, u_right)
    }

    /// Like [`FdeProblem::new`] but also admits the limit orders `β = 0`
    /// (discrete Laplacian) and `β = 1` (skew-symmetric operator).
    pub fn limit(
        beta: f64,
        gamma: f64,
        diffusion: Diffusion,
        source: ScalarFn,
        u_left: f64,
        u_right: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(FdeError::InvalidParameter(format!(
                "beta = {beta} must lie in [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(FdeError::InvalidParameter(format!(
                "gamma = {gamma} must lie in [0, 1]"
            )));
        }
        if let Diffusion::Constant(k) = diffusion {
            if !(k > 0.0) {
                return Err(FdeError::InvalidParameter(format!("K = {k} must be > 0")));
            }
        }
        Ok(Self {
            beta,
            gamma,
            diffusion,
            source,
            u_left,
            u_right,
            quadrature: SourceQuadrature::default(),
        })
    }

    pub fn with_quadrature(mut self, quadrature: SourceQuadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    /// Homogeneous problem with constant `K` and zero source, used for the
    /// operator-only computations (spectra, smoother estimation).
    pub fn operator_only(beta: f64, gamma: f64, k: f64) -> Result<Self> {
        Self::limit(
            beta,
            gamma,
            Diffusion::Constant(k),
            Arc::new(|_| 0.0),
            0.0,
            0.0,
        )
    }

    /// Source `(1-γ)(1-β) / (Γ(β) x (1-x)^{1-β})`, `K = 1`, `u(0) = 0`,
    /// `u(1) = 1`, whose exact solution is `u(x) = x^{1-β}`.
    pub fn benchmark(beta: f64, gamma: f64) -> Result<Self> {
        let scale = (1.0 - gamma) * (1.0 - beta) / crate::special::gamma(beta);
        let source: ScalarFn = Arc::new(move |x: f64| scale / (x * (1.0 - x).powf(1.0 - beta)));
        Self::new(beta, gamma, Diffusion::Constant(1.0), source, 0.0, 1.0)
    }

    /// Exact solution of [`FdeProblem::benchmark`].
    pub fn benchmark_solution(beta: f64, x: f64) -> f64 {
        x.powf(1.0 - beta)
    }
}

/// Difference quotient `((s + d)^β - s^β) / d` for `s ≥ 0`, `d > 0`.
#[inline]
pub(crate) fn dq(s: f64, d: f64, beta: f64) -> f64 {
    if s <= 0.0 {
        return d.powf(beta) / d;
    }
    s.powf(beta) * (beta * (d / s).ln_1p()).exp_m1() / d
}

/// Coefficient operator, either a dense matrix or a scaled symmetric
/// Toeplitz matrix applied through circulant embedding.
#[derive(Debug, Clone)]
pub enum LinearOperator {
    Dense(DMatrix<f64>),
    SymToeplitz(SymToeplitz),
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.nrows(),
            LinearOperator::SymToeplitz(t) => t.dim(),
        }
    }

    /// `y = A v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(v, &mut y)?;
        Ok(y)
    }

    pub fn apply_into(&self, v: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.dim();
        if v.len() != n {
            return Err(FdeError::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if y.len() != n {
            return Err(FdeError::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        match self {
            LinearOperator::Dense(m) => dense_matvec(m, v, y),
            LinearOperator::SymToeplitz(t) => t.apply(v, y),
        }
        Ok(())
    }

    /// Dense copy of the operator.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinearOperator::Dense(m) => m.clone(),
            LinearOperator::SymToeplitz(t) => t.to_dense(),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            LinearOperator::Dense(m) => (0..m.nrows()).map(|i| m[(i, i)]).collect(),
            LinearOperator::SymToeplitz(t) => vec![t.scale * t.first_row[0]; t.dim()],
        }
    }

    /// Writes the operator in Matrix Market array format.
    pub fn write_matrix_market<W: std::io::Write>(&self, out: W) -> Result<()> {
        crate::io::write_matrix_market(&self.to_dense(), out)
    }
}

fn dense_matvec(m: &DMatrix<f64>, v: &[f64], y: &mut [f64]) {
    // column-major storage: accumulate column by column
    y.iter_mut().for_each(|e| *e = 0.0);
    let n = m.nrows();
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        let col = &m.as_slice()[j * n..(j + 1) * n];
        for (yi, &a) in y.iter_mut().zip(col) {
            *yi += a * vj;
        }
    }
}

/// `scale · T` with `T` symmetric Toeplitz given by its first row.
#[derive(Clone)]
pub struct SymToeplitz {
    first_row: Vec<f64>,
    scale: f64,
    spectrum: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SymToeplitz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymToeplitz")
            .field("n", &self.first_row.len())
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

impl SymToeplitz {
    pub fn new(first_row: Vec<f64>, scale: f64) -> Self {
        let n = first_row.len();
        let len = (2 * n).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        // first column of the circulant: t_0, t_1, .., t_{n-1}, 0.., t_{n-1}, .., t_1
        let mut col = vec![Complex64::new(0.0, 0.0); len];
        for (k, &t) in first_row.iter().enumerate() {
            col[k].re = t;
            if k > 0 {
                col[len - k].re = t;
            }
        }
        fft.process(&mut col);
        Self {
            first_row,
            scale,
            spectrum: col,
            fft,
            ifft,
        }
    }

    pub fn dim(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale *= factor;
        out
    }

    fn apply(&self, v: &[f64], y: &mut [f64]) {
        let len = self.spectrum.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (b, &x) in buf.iter_mut().zip(v) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.ifft.process(&mut buf);
        let norm = self.scale / len as f64;
        for (yi, b) in y.iter_mut().zip(&buf) {
            *yi = b.re * norm;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.scale * self.first_row[i.abs_diff(j)])
    }
}

/// Assembles the dense coefficient matrix on `grid`.
pub fn assemble_matrix(grid: &Grid, problem: &FdeProblem) -> Result<LinearOperator> {
    Ok(LinearOperator::Dense(assemble_dense(grid, problem)?))
}

/// Dense assembly; `O(N²)` entries, each from `O(1)` prefix-sum lookups.
pub fn assemble_dense(grid: &Grid, problem: &FdeProblem) -> Result<DMatrix<f64>> {
    let n = grid.n();
    let beta = problem.beta;
    let gam = problem.gamma;
    let inv_g = 1.0 / gamma(beta + 1.0);
    // (h/2)^β / h
    let pw = |h: f64| (0.5 * h).powf(beta) / h;
    let dq = |s: f64, d: f64| dq(s, d, beta);
    let h = |i: usize| grid.h(i);
    // Σ_{j=a}^{b} h_{i-j} = x_{i-a} - x_{i-b-1}
    let back = |i: usize, a: usize, b: usize| -> f64 {
        if b < a {
            0.0
        } else {
            grid.span(i - b - 1, i - a)
        }
    };
    // Σ_{j=a}^{b} h_{i+j} = x_{i+b} - x_{i+a-1}
    let fwd = |i: usize, a: usize, b: usize| -> f64 {
        if b < a {
            0.0
        } else {
            grid.span(i + a - 1, i + b)
        }
    };

    let mut mat = DMatrix::<f64>::zeros(n, n);
    for i in 1..=n {
        let km = problem.diffusion.at(grid.midpoint(i)) * inv_g;
        let kp = problem.diffusion.at(grid.midpoint(i + 1)) * inv_g;
        let (hi, hi1) = (h(i), h(i + 1));
        let (half_i, half_i1) = (0.5 * hi, 0.5 * hi1);
        let row = i - 1;

        if gam != 0.0 {
            for k in 2..i {
                let left = dq(half_i + back(i, 1, k - 1), h(i - k))
                    - dq(half_i + back(i, 1, k - 2), h(i - k + 1));
                let right = dq(half_i1 + back(i, 0, k - 1), h(i - k))
                    - dq(half_i1 + back(i, 0, k - 2), h(i - k + 1));
                mat[(row, i - k - 1)] = gam * (km * left - kp * right);
            }
        }
        if i >= 2 {
            let left = gam * dq(half_i, h(i - 1)) - pw(hi);
            let right = gam * (dq(hi + half_i1, h(i - 1)) - dq(half_i1, hi));
            mat[(row, i - 2)] = km * left - kp * right;
        }
        {
            let left = pw(hi) - (1.0 - gam) * dq(half_i, hi1);
            let right = gam * dq(half_i1, hi) - pw(hi1);
            mat[(row, row)] = km * left - kp * right;
        }
        if i < n {
            let left = (1.0 - gam) * (dq(half_i, hi1) - dq(hi1 + half_i, h(i + 2)));
            let right = pw(hi1) - (1.0 - gam) * dq(half_i1, h(i + 2));
            mat[(row, i)] = km * left - kp * right;
        }
        if gam != 1.0 {
            for k in 2..=(n - i) {
                let left = dq(half_i + fwd(i, 1, k - 1), h(i + k))
                    - dq(half_i + fwd(i, 1, k), h(i + k + 1));
                let right = dq(half_i1 + fwd(i, 2, k - 1), h(i + k))
                    - dq(half_i1 + fwd(i, 2, k), h(i + k + 1));
                mat[(row, i + k - 1)] = (1.0 - gam) * (km * left - kp * right);
            }
        }
    }
    if let Some((idx, v)) = mat.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(FdeError::NonFinite {
            index: idx % n.max(1) + 1,
            value: *v,
        });
    }
    Ok(mat)
}

/// Flux of the boundary part `u_l φ_0 + u_r φ_{N+1}` at the midpoint of
/// cell `c` (`c = 1..=N+1`), without the factor `K / Γ(β+1)`.
fn boundary_flux(grid: &Grid, problem: &FdeProblem, c: usize) -> f64 {
    let n = grid.n();
    let beta = problem.beta;
    let gam = problem.gamma;
    let (h1, hr) = (grid.h(1), grid.h(n + 1));
    let half = 0.5 * grid.h(c);
    let pw = |t: f64| t.powf(beta);

    // φ_0 has slope -1/h_1 on the first cell
    let (left0, right0) = if c == 1 {
        (-pw(half) / h1, -pw(half) / h1)
    } else {
        (-dq(half + grid.span(1, c - 1), h1, beta), 0.0)
    };
    // φ_{N+1} has slope 1/h_{N+1} on the last cell
    let (left_r, right_r) = if c == n + 1 {
        (pw(half) / hr, pw(half) / hr)
    } else {
        (0.0, dq(half + grid.span(c, n), hr, beta))
    };
    gam * (problem.u_left * left0 + problem.u_right * left_r)
        + (1.0 - gam) * (problem.u_left * right0 + problem.u_right * right_r)
}

/// Right-hand side `b`: the source sampled per [`SourceQuadrature`] and
/// weighted by the control-volume length `(h_i + h_{i+1}) / 2`.
pub fn assemble_rhs(grid: &Grid, problem: &FdeProblem) -> Result<Vec<f64>> {
    let n = grid.n();
    let inv_g = 1.0 / gamma(problem.beta + 1.0);
    let fluxes: Vec<f64> = (1..=n + 1)
        .map(|c| {
            let k = problem.diffusion.at(grid.midpoint(c)) * inv_g;
            k * boundary_flux(grid, problem, c)
        })
        .collect();
    let mut b = Vec::with_capacity(n);
    for i in 1..=n {
        let xi = match problem.quadrature {
            SourceQuadrature::CellMidpoint => 0.5 * (grid.midpoint(i) + grid.midpoint(i + 1)),
            SourceQuadrature::Nodal => grid.x(i),
        };
        let fi = (problem.source)(xi);
        if !fi.is_finite() {
            return Err(FdeError::NonFinite { index: i, value: fi });
        }
        let val = fi * 0.5 * (grid.h(i) + grid.h(i + 1)) + fluxes[i] - fluxes[i - 1];
        if !val.is_finite() {
            return Err(FdeError::NonFinite { index: i, value: val });
        }
        b.push(val);
    }
    Ok(b)
}

/// Normalised Toeplitz coefficients `t_k = a_{1,k+1} / c` for
/// `k = 0..n-1` on a uniform mesh with `γ = 1/2`.
pub fn toeplitz_coefficients(beta: f64, n: usize) -> Vec<f64> {
    let p = |t: f64| t.powf(beta);
    (0..n)
        .map(|k| match k {
            0 => 0.5 * (6.0 - 2.0 * 3f64.powf(beta)),
            1 => 0.5 * (3f64.powf(beta + 1.0) - 4.0 - 5f64.powf(beta)),
            _ => {
                let k = k as f64;
                0.5 * (3.0 * p(2.0 * k + 1.0) - 3.0 * p(2.0 * k - 1.0) + p(2.0 * k - 3.0)
                    - p(2.0 * k + 3.0))
            }
        })
        .collect()
}

/// `c = K h^{β-1} / (2^β Γ(β+1))`.
pub fn toeplitz_scale(n: usize, beta: f64, k: f64) -> f64 {
    let h = 1.0 / (n + 1) as f64;
    k * h.powf(beta - 1.0) / (2f64.powf(beta) * gamma(beta + 1.0))
}

/// Symmetric Toeplitz operator for a uniform mesh, constant `K` and
/// `γ = 1/2`.
pub fn uniform_toeplitz(n: usize, beta: f64, k: f64) -> Result<LinearOperator> {
    if n == 0 {
        return Err(FdeError::InvalidParameter("N must be at least 1".into()));
    }
    Ok(LinearOperator::SymToeplitz(SymToeplitz::new(
        toeplitz_coefficients(beta, n),
        toeplitz_scale(n, beta, k),
    )))
}

/// Assembled linear system together with the data it came from.
#[derive(Debug, Clone)]
pub struct FveSystem {
    pub operator: LinearOperator,
    pub rhs: Vec<f64>,
    pub grid: Grid,
    pub problem: FdeProblem,
    pub scaled: bool,
}

impl FveSystem {
    /// Assembles operator and right-hand side. Uses the Toeplitz
    /// representation when `prefer_toeplitz` is set and the mesh is
    /// uniform with constant `K` and `γ = 1/2`.
    pub fn assemble(grid: Grid, problem: FdeProblem, prefer_toeplitz: bool) -> Result<Self> {
        let toeplitz_ok = grid.is_uniform(1e-12) && problem.gamma == 0.5;
        let operator = match (prefer_toeplitz && toeplitz_ok, problem.diffusion.constant()) {
            (true, Some(k)) => uniform_toeplitz(grid.n(), problem.beta, k)?,
            _ => assemble_matrix(&grid, &problem)?,
        };
        let rhs = assemble_rhs(&grid, &problem)?;
        Ok(Self {
            operator,
            rhs,
            grid,
            problem,
            scaled: false,
        })
    }

    /// Multiplies rows and right-hand side by `diag(1/h_i)`.
    pub fn row_scale(self) -> Result<Self> {
        if self.scaled {
            return Err(FdeError::AlreadyScaled);
        }
        let weights = row_weights(&self.grid);
        let operator = scale_rows(self.operator, &weights, &self.grid);
        let rhs = self.rhs.iter().zip(&weights).map(|(b, w)| b * w).collect();
        Ok(Self {
            operator,
            rhs,
            scaled: true,
            ..self
        })
    }
}

/// `1/h_i`, `i = 1..=N`.
pub fn row_weights(grid: &Grid) -> Vec<f64> {
    (1..=grid.n()).map(|i| 1.0 / grid.h(i)).collect()
}

fn scale_rows(op: LinearOperator, weights: &[f64], grid: &Grid) -> LinearOperator {
    match op {
        LinearOperator::Dense(mut m) => {
            for (i, w) in weights.iter().enumerate() {
                m.row_mut(i).scale_mut(*w);
            }
            LinearOperator::Dense(m)
        }
        LinearOperator::SymToeplitz(t) => {
            LinearOperator::SymToeplitz(t.scaled((grid.n() + 1) as f64))
        }
    }
}

//! Grids on `[0, 1]`: uniform, power-graded through a C¹ blend map, and
//! composite dyadic meshes.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FdeError, Result};

/// Smallest admissible first step of a graded mesh.
pub const MIN_FIRST_STEP: f64 = 1e-16;

/// Strictly increasing partition `0 = x_0 < x_1 < ... < x_{N+1} = 1`.
///
/// `steps[i - 1] = h_i = x_i - x_{i-1}` for `i = 1..=N+1` and `prefix[j]` is
/// the running sum `h_1 + ... + h_j` (`prefix[0] = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    steps: Vec<f64>,
    prefix: Vec<f64>,
}

impl Grid {
    /// Builds a grid from all `N + 2` points, endpoints included.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(FdeError::InvalidGrid(format!(
                "need at least one interior point, got {} points",
                points.len()
            )));
        }
        let last = points.len() - 1;
        if points[0] != 0.0 || points[last] != 1.0 {
            return Err(FdeError::InvalidGrid(format!(
                "endpoints must be 0 and 1, got {} and {}",
                points[0], points[last]
            )));
        }
        let mut steps = Vec::with_capacity(last);
        for i in 1..=last {
            let h = points[i] - points[i - 1];
            if !(h > 0.0) {
                return Err(FdeError::StepCollapse { index: i, step: h });
            }
            steps.push(h);
        }
        let mut prefix = Vec::with_capacity(last + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &h in &steps {
            acc += h;
            prefix.push(acc);
        }
        Ok(Self {
            points,
            steps,
            prefix,
        })
    }

    /// Number of interior points `N`.
    pub fn n(&self) -> usize {
        self.points.len() - 2
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Interior points `x_1..x_N`.
    pub fn interior(&self) -> &[f64] {
        &self.points[1..self.points.len() - 1]
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// `x_i`, `i = 0..=N+1`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// `h_i`, `i = 1..=N+1` (one-based, as in the scheme).
    #[inline]
    pub fn h(&self, i: usize) -> f64 {
        self.steps[i - 1]
    }

    /// `h_{i+1} + ... + h_j` from the prefix sums; zero when `j <= i`.
    #[inline]
    pub fn span(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            0.0
        } else {
            self.prefix[j] - self.prefix[i]
        }
    }

    /// Cell midpoint `x_{i-1/2} = (x_{i-1} + x_i) / 2`, `i = 1..=N+1`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.points[i - 1] + self.points[i])
    }

    /// True when every step equals `1/(N+1)` to `rel_tol`.
    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let h = 1.0 / (self.n() + 1) as f64;
        self.steps.iter().all(|&s| (s - h).abs() <= rel_tol * h)
    }

    /// Checks the structural invariants: endpoints, monotonicity and the
    /// step sum.
    pub fn validate(&self) -> Result<()> {
        let last = self.points.len() - 1;
        if self.points[0] != 0.0 || self.points[last] != 1.0 {
            return Err(FdeError::InvalidGrid("bad endpoints".into()));
        }
        if let Some((i, &h)) = self.steps.iter().enumerate().find(|(_, &h)| !(h > 0.0)) {
            return Err(FdeError::StepCollapse {
                index: i + 1,
                step: h,
            });
        }
        let total: f64 = self.steps.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FdeError::InvalidGrid(format!("step sum {total} != 1")));
        }
        Ok(())
    }

    /// Writes one point per line with 17 significant digits.
    pub fn write_points<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.points.len() * 26);
        for &x in &self.points {
            writeln!(buf, "{x:.16e}").expect("writing to a String cannot fail");
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Parses the format written by [`Grid::write_points`].
    pub fn read_points(text: &str) -> Result<Self> {
        let points = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| FdeError::InvalidGrid(format!("cannot parse {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_points(points)
    }
}

/// `x_i = i / (N + 1)`.
pub fn uniform_grid(n: usize) -> Result<Grid> {
    if n == 0 {
        return Err(FdeError::InvalidParameter("N must be at least 1".into()));
    }
    let m = (n + 1) as f64;
    let mut points: Vec<f64> = (0..=n + 1).map(|i| i as f64 / m).collect();
    points[n + 1] = 1.0;
    Grid::from_points(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendMode {
    /// `g(x) = x^q` on the whole interval.
    FullPower,
    /// Power, quadratic and linear segments joined with C¹ continuity.
    C1Blend,
    /// Power and linear segments joined with C⁰ continuity only.
    C0Join,
    /// Power and quadratic segments, the quadratic reaching `g(1) = 1`.
    QuadToOne,
}

/// Coefficients of the grading map
///
/// ```text
///          ⎧ x^q             0 ≤ x ≤ ε₁
/// g(x) =   ⎨ a x² + b x + c  ε₁ ≤ x ≤ ε₁ + ε₂
///          ⎩ m x + p         ε₁ + ε₂ ≤ x ≤ 1
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendCoeffs {
    pub q: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub m: f64,
    pub p: f64,
    pub mode: BlendMode,
}

/// Matrix of the five matching conditions for `(a, b, c, m, p)`.
pub fn blend_matrix(eps1: f64, eps2: f64) -> DMatrix<f64> {
    let s = eps1 + eps2;
    DMatrix::from_row_slice(
        5,
        5,
        &[
            eps1 * eps1, eps1, 1.0, 0.0, 0.0, //
            s * s, s, 1.0, -s, -1.0, //
            2.0 * eps1, 1.0, 0.0, 0.0, 0.0, //
            2.0 * s, 1.0, 0.0, -1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, 1.0,
        ],
    )
}

/// Right-hand side matching [`blend_matrix`].
pub fn blend_rhs(q: f64, eps1: f64) -> DVector<f64> {
    DVector::from_column_slice(&[
        eps1.powf(q),
        0.0,
        q * eps1.powf(q - 1.0),
        0.0,
        1.0,
    ])
}

/// Solves for the segment coefficients of the grading map.
pub fn blend_coefficients(q: f64, eps1: f64, eps2: f64) -> Result<BlendCoeffs> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(FdeError::InvalidParameter(format!("q = {q} must be >= 1")));
    }
    if eps2 < 0.0 {
        return Err(FdeError::InvalidParameter(format!("eps2 = {eps2} < 0")));
    }
    if !(eps1 > 0.0) {
        return Err(FdeError::InvalidParameter(format!("eps1 = {eps1} <= 0")));
    }
    let s = eps1 + eps2;
    // tolerate representation error in e.g. 0.95 + 0.05
    let total_is_one = (s - 1.0).abs() <= 1e-14;
    if s > 1.0 && !total_is_one {
        return Err(FdeError::InvalidParameter(format!(
            "eps1 + eps2 = {s} exceeds 1"
        )));
    }
    let mut out = BlendCoeffs {
        q,
        eps1,
        eps2,
        a: 0.0,
        b: 0.0,
        c: 0.0,
        m: 1.0,
        p: 0.0,
        mode: BlendMode::FullPower,
    };
    if eps2 == 0.0 {
        if total_is_one {
            out.eps1 = 1.0;
            out.mode = BlendMode::FullPower;
        } else {
            out.m = (1.0 - eps1.powf(q)) / (1.0 - eps1);
            out.p = 1.0 - out.m;
            out.mode = BlendMode::C0Join;
        }
        return Ok(out);
    }
    if total_is_one {
        let mat = DMatrix::from_row_slice(
            3,
            3,
            &[eps1 * eps1, eps1, 1.0, 2.0 * eps1, 1.0, 0.0, 1.0, 1.0, 1.0],
        );
        let rhs = DVector::from_column_slice(&[eps1.powf(q), q * eps1.powf(q - 1.0), 1.0]);
        let sol = mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| FdeError::Singular("quadratic-to-one blend system".into()))?;
        out.a = sol[0];
        out.b = sol[1];
        out.c = sol[2];
        out.mode = BlendMode::QuadToOne;
        return Ok(out);
    }
    let mat = blend_matrix(eps1, eps2);
    let rhs = blend_rhs(q, eps1);
    let sol = mat
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| FdeError::Singular("blend system".into()))?;
    let residual = (&mat * &sol - &rhs).amax();
    if residual > 1e-10 {
        return Err(FdeError::Singular(format!(
            "blend residual {residual:e} too large"
        )));
    }
    out.a = sol[0];
    out.b = sol[1];
    out.c = sol[2];
    out.m = sol[3];
    out.p = sol[4];
    out.mode = BlendMode::C1Blend;
    Ok(out)
}

impl BlendCoeffs {
    /// Pure power map `x^q`.
    pub fn full_power(q: f64) -> Result<Self> {
        blend_coefficients(q, 1.0, 0.0)
    }

    /// `g(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FdeError::Domain { value: x });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        if x == 1.0 {
            return 1.0;
        }
        match self.mode {
            BlendMode::FullPower => x.powf(self.q),
            BlendMode::C0Join => {
                if x <= self.eps1 {
                    x.powf(self.q)
                } else {
                    self.m * x + self.p
                }
            }
            BlendMode::QuadToOne => {
                if x <= self.eps1 {
                    x.powf(self.q)
                } else {
                    (self.a * x + self.b) * x + self.c
                }
            }
            BlendMode::C1Blend => {
                if x <= self.eps1 {
                    x.powf(self.q)
                } else if x <= self.eps1 + self.eps2 {
                    (self.a * x + self.b) * x + self.c
                } else {
                    self.m * x + self.p
                }
            }
        }
    }

    /// `g'(x)`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FdeError::Domain { value: x });
        }
        let power = |x: f64| self.q * x.powf(self.q - 1.0);
        Ok(match self.mode {
            BlendMode::FullPower => power(x),
            BlendMode::C0Join => {
                if x <= self.eps1 {
                    power(x)
                } else {
                    self.m
                }
            }
            BlendMode::QuadToOne => {
                if x <= self.eps1 {
                    power(x)
                } else {
                    2.0 * self.a * x + self.b
                }
            }
            BlendMode::C1Blend => {
                if x <= self.eps1 {
                    power(x)
                } else if x <= self.eps1 + self.eps2 {
                    2.0 * self.a * x + self.b
                } else {
                    self.m
                }
            }
        })
    }

    /// Residuals of the five C¹ matching conditions (zero vector for the
    /// other modes' unused conditions).
    pub fn matching_residuals(&self) -> [f64; 5] {
        let (e1, s, q) = (self.eps1, self.eps1 + self.eps2, self.q);
        let quad = |x: f64| (self.a * x + self.b) * x + self.c;
        let dquad = |x: f64| 2.0 * self.a * x + self.b;
        match self.mode {
            BlendMode::C1Blend => [
                e1.powf(q) - quad(e1),
                quad(s) - (self.m * s + self.p),
                q * e1.powf(q - 1.0) - dquad(e1),
                dquad(s) - self.m,
                self.m + self.p - 1.0,
            ],
            BlendMode::QuadToOne => [
                e1.powf(q) - quad(e1),
                0.0,
                q * e1.powf(q - 1.0) - dquad(e1),
                0.0,
                quad(1.0) - 1.0,
            ],
            BlendMode::C0Join => [
                e1.powf(q) - (self.m * e1 + self.p),
                0.0,
                0.0,
                0.0,
                self.m + self.p - 1.0,
            ],
            BlendMode::FullPower => [0.0; 5],
        }
    }
}

/// Grading exponent `(1+β)/(1-β)`, capped so that the first step of the
/// pure-power segment `h^q` stays above `1e-16`.
pub fn q_for_beta(beta: f64, n: usize) -> f64 {
    let q_beta = (1.0 + beta) / (1.0 - beta);
    q_beta.min(q_cap(n))
}

/// `ln(1e-16) / -ln(N+1)`.
pub fn q_cap(n: usize) -> f64 {
    MIN_FIRST_STEP.ln() / -((n + 1) as f64).ln()
}

/// `x_i = g(i / (N+1))`.
pub fn graded_grid(n: usize, coeffs: &BlendCoeffs) -> Result<Grid> {
    if n == 0 {
        return Err(FdeError::InvalidParameter("N must be at least 1".into()));
    }
    let m = (n + 1) as f64;
    let h = 1.0 / m;
    if coeffs.mode != BlendMode::FullPower && h > coeffs.eps1 {
        return Err(FdeError::InvalidParameter(format!(
            "uniform step 1/(N+1) = {h} exceeds eps1 = {}",
            coeffs.eps1
        )));
    }
    let mut points = Vec::with_capacity(n + 2);
    for i in 0..=n + 1 {
        points.push(coeffs.eval_unchecked(i as f64 / m));
    }
    points[0] = 0.0;
    points[n + 1] = 1.0;
    for i in 1..=n + 1 {
        let step = points[i] - points[i - 1];
        if !(step > 0.0) {
            return Err(FdeError::StepCollapse { index: i, step });
        }
    }
    Grid::from_points(points)
}

/// Number of dyadically refined points of a composite mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeRule {
    /// `N₁ = ⌊√N⌋`
    Sqrt,
    /// `N₁ = ⌊log₂ N⌋`
    Log2,
}

impl CompositeRule {
    pub fn refined_count(self, n: usize) -> usize {
        match self {
            CompositeRule::Sqrt => {
                let mut r = (n as f64).sqrt() as usize;
                while (r + 1) * (r + 1) <= n {
                    r += 1;
                }
                while r * r > n {
                    r -= 1;
                }
                r
            }
            CompositeRule::Log2 => {
                if n == 0 {
                    0
                } else {
                    (usize::BITS - 1 - n.leading_zeros()) as usize
                }
            }
        }
    }
}

impl std::fmt::Display for CompositeRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompositeRule::Sqrt => "sqrt",
            CompositeRule::Log2 => "log2",
        })
    }
}

impl std::str::FromStr for CompositeRule {
    type Err = FdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(CompositeRule::Sqrt),
            "log2" => Ok(CompositeRule::Log2),
            other => Err(FdeError::InvalidParameter(format!(
                "unknown composite rule {other:?}"
            ))),
        }
    }
}

/// Composite mesh whose refined part `(0, h]` holds `N₁ = rule(N)` points,
/// `h` included: `N₁ - 1` dyadic points below `h` and `N - N₁ + 1` uniform
/// points `h, 2h, ...`, so `h = 1/(N - N₁ + 2)`.
pub fn composite_grid(n: usize, rule: CompositeRule) -> Result<Grid> {
    let n1 = rule.refined_count(n);
    if n1 == 0 || n1 >= n {
        return Err(FdeError::InvalidParameter(format!(
            "refined count N1 = {n1} must lie in [1, N) for N = {n}"
        )));
    }
    composite_grid_counts(n1 - 1, n - n1 + 1)
}

/// Composite mesh from explicit counts: `h = 1/(N₂+1)`,
/// `x_i = 2^{i-1-N₁} h` for `i = 1..=N₁` and `x_{N₁+i} = i h`.
pub fn composite_grid_counts(n1: usize, n2: usize) -> Result<Grid> {
    if n2 == 0 {
        return Err(FdeError::InvalidParameter(format!(
            "composite mesh needs N2 > 0, got N1 = {n1}, N2 = {n2}"
        )));
    }
    let h = 1.0 / (n2 + 1) as f64;
    let mut points = Vec::with_capacity(n1 + n2 + 2);
    points.push(0.0);
    for i in 1..=n1 {
        points.push(h * 2f64.powi(i as i32 - 1 - n1 as i32));
    }
    for i in 1..=n2 {
        points.push(i as f64 * h);
    }
    points.push(1.0);
    Grid::from_points(points)
}

/// A mesh family, i.e. a recipe producing a grid for any size `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeshSpec {
    Uniform,
    Graded { coeffs: BlendCoeffs },
    Composite { rule: CompositeRule },
}

impl MeshSpec {
    pub fn build(&self, n: usize) -> Result<Grid> {
        match self {
            MeshSpec::Uniform => uniform_grid(n),
            MeshSpec::Graded { coeffs } => graded_grid(n, coeffs),
            MeshSpec::Composite { rule } => composite_grid(n, *rule),
        }
    }
}

//! Generating function `p^β_N`, the symbol `f_β(x, θ)` of `h^{1-β} A_N`
//! on meshes `x = g(x̂)`, and the numerical distribution checks built on
//! them.

use std::io::Write;

use serde::Serialize;

use crate::assembly::{assemble_dense, toeplitz_coefficients, FdeProblem};
use crate::dense::{eigenvalues, trace_norm};
use crate::error::{FdeError, Result};
use crate::meshgen::{graded_grid, BlendCoeffs};
use crate::special::gamma;

/// Truncation used for the limit symbol `p^β`.
pub const DEFAULT_SYMBOL_TERMS: usize = 4096;

/// `p^β_N(θ) = t_0 + 2 Σ_{k=1}^{N-1} t_k cos(kθ)`.
pub fn symbol_p(n: usize, beta: f64, theta: f64) -> f64 {
    let t = toeplitz_coefficients(beta, n.max(1));
    eval_cosine_series(&t, theta)
}

fn eval_cosine_series(t: &[f64], theta: f64) -> f64 {
    // sum the small tail first
    let tail: f64 = t
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .map(|(k, tk)| tk * (k as f64 * theta).cos())
        .sum();
    t[0] + 2.0 * tail
}

/// Cached cosine series for repeated evaluation at a fixed `(N, β)`.
#[derive(Debug, Clone)]
pub struct SymbolP {
    coeffs: Vec<f64>,
}

impl SymbolP {
    pub fn new(n: usize, beta: f64) -> Self {
        Self {
            coeffs: toeplitz_coefficients(beta, n.max(1)),
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        eval_cosine_series(&self.coeffs, theta)
    }
}

/// `K / (2^β Γ(β+1) g'(x)^{1-β})`.
pub fn diagonal_factor(beta: f64, k: f64, gprime: f64) -> Result<f64> {
    if !(gprime > 0.0) {
        return Err(FdeError::InvalidParameter(format!(
            "g'(x) = {gprime} must be positive"
        )));
    }
    Ok(k / (2f64.powf(beta) * gamma(beta + 1.0) * gprime.powf(1.0 - beta)))
}

/// `f_β(x, θ)` with `p^β` truncated at `n_sym` terms.
pub fn symbol_f(
    x: f64,
    theta: f64,
    beta: f64,
    k: f64,
    gprime: &dyn Fn(f64) -> f64,
    n_sym: usize,
) -> Result<f64> {
    Ok(diagonal_factor(beta, k, gprime(x))? * symbol_p(n_sym, beta, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SampleGrid {
    /// `√N × √N` samples.
    Coarse,
    /// `N² × N²` samples, compared through `N` quantiles.
    Fine,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionReport {
    pub sorted_eigs: Vec<f64>,
    pub sorted_samples: Vec<f64>,
    pub sup_gap: f64,
    pub spectral_radius: f64,
    /// Largest `|Im λ|` relative to the spectral radius.
    pub max_rel_imag: f64,
    pub complex: bool,
    pub grid_tag: SampleGrid,
}

impl DistributionReport {
    pub fn rel_gap(&self) -> f64 {
        self.sup_gap / self.spectral_radius
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,eig,sample")?;
        for (i, (e, s)) in self.sorted_eigs.iter().zip(&self.sorted_samples).enumerate() {
            writeln!(out, "{i},{e:.16e},{s:.16e}")?;
        }
        Ok(())
    }
}

fn pure_power_matrix(beta: f64, q: f64, n: usize) -> Result<nalgebra::DMatrix<f64>> {
    let grid = graded_grid(n, &BlendCoeffs::full_power(q)?)?;
    let problem = FdeProblem::operator_only(beta, 0.5, 1.0)?;
    let h = 1.0 / (n + 1) as f64;
    Ok(assemble_dense(&grid, &problem)? * h.powf(1.0 - beta))
}

/// Sorted eigenvalues of `h^{1-β} A_N` on the mesh `x̂^q` against sorted
/// samples of `f_β`.
pub fn eig_vs_symbol(beta: f64, q: f64, n: usize, tag: SampleGrid) -> Result<DistributionReport> {
    let a = pure_power_matrix(beta, q, n)?;
    let eigs = eigenvalues(&a)?;
    let radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_imag = eigs.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let max_rel_imag = max_imag / radius;
    let mut sorted_eigs: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    sorted_eigs.sort_by(f64::total_cmp);

    let m = match tag {
        SampleGrid::Coarse => (n as f64).sqrt().floor() as usize,
        SampleGrid::Fine => n * n,
    };
    let p = SymbolP::new(DEFAULT_SYMBOL_TERMS, beta);
    let thetas: Vec<f64> = (1..=m)
        .map(|j| p.eval(j as f64 * std::f64::consts::PI / (m as f64 + 1.0)))
        .collect();
    let mut diag = Vec::with_capacity(m);
    for i in 1..=m {
        let x = i as f64 / m as f64;
        diag.push(diagonal_factor(beta, 1.0, q * x.powf(q - 1.0))?);
    }
    let mut samples = Vec::with_capacity(m * m);
    for d in &diag {
        samples.extend(thetas.iter().map(|t| d * t));
    }
    samples.sort_by(f64::total_cmp);

    let sorted_samples = if samples.len() == n {
        samples
    } else {
        let total = samples.len();
        (0..n)
            .map(|k| samples[((k as f64 + 0.5) * total as f64 / n as f64) as usize])
            .collect()
    };
    let sup_gap = sorted_eigs
        .iter()
        .zip(&sorted_samples)
        .map(|(e, s)| (e - s).abs())
        .fold(0.0, f64::max);
    Ok(DistributionReport {
        sorted_eigs,
        sorted_samples,
        sup_gap,
        spectral_radius: radius,
        max_rel_imag,
        complex: max_rel_imag >= 1e-8,
        grid_tag: tag,
    })
}

/// `s(N) = h^{1-β} ‖A_N − A_Nᵀ‖_tr / N` on the mesh `x̂^q`, `γ = 1/2`, `K = 1`.
pub fn glt5_value(beta: f64, q: f64, n: usize) -> Result<f64> {
    let a = pure_power_matrix(beta, q, n)?;
    let skew = &a - a.transpose();
    Ok(trace_norm(&skew)? / n as f64)
}

pub fn glt5_sequence(beta: f64, q: f64, ns: &[usize]) -> Result<Vec<f64>> {
    ns.iter().map(|&n| glt5_value(beta, q, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCell {
    pub beta: f64,
    pub q: f64,
    /// `s(16) − s(32)`.
    pub diff: f64,
    pub sign: i8,
}

/// Sign of `s(16) − s(32)` over a `(β, q)` grid.
pub fn glt5_region(betas: &[f64], qs: &[f64]) -> Result<Vec<RegionCell>> {
    let mut out = Vec::with_capacity(betas.len() * qs.len());
    for &beta in betas {
        for &q in qs {
            let diff = glt5_value(beta, q, 16)? - glt5_value(beta, q, 32)?;
            // symmetric case: both values are rounding noise
            let sign = if diff.abs() < 1e-12 { 0 } else { diff.signum() as i8 };
            out.push(RegionCell { beta, q, diff, sign });
        }
    }
    Ok(out)
}

/// Smallest `q` per `β` where the sign turns negative, `None` if it never does.
pub fn region_boundary(cells: &[RegionCell], beta: f64) -> Option<f64> {
    cells
        .iter()
        .filter(|c| c.beta == beta && c.sign < 0)
        .map(|c| c.q)
        .min_by(f64::total_cmp)
}

pub fn write_sequence_csv<W: Write>(ns: &[usize], s: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "N,s")?;
    for (n, v) in ns.iter().zip(s) {
        writeln!(out, "{n},{v:.16e}")?;
    }
    Ok(())
}

pub fn write_region_csv<W: Write>(cells: &[RegionCell], mut out: W) -> Result<()> {
    writeln!(out, "beta,q,sign")?;
    for c in cells {
        writeln!(out, "{},{},{}", c.beta, c.q, c.sign)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_symbol() {
        assert!(symbol_p(64, 0.0, 0.0).abs() < 1e-14);
        assert!((symbol_p(1024, 0.0, PI) - 4.0).abs() < 1e-12);
        assert!((symbol_p(32, 0.0, 1.0) - (2.0 - 2.0 * 1f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn symbol_even_and_positive() {
        let p = SymbolP::new(256, 0.5);
        for k in 1..50 {
            let t = k as f64 * 0.0613;
            assert!((p.eval(t) - p.eval(-t)).abs() < 1e-12);
            assert!(p.eval(t) > 0.0);
        }
    }

    #[test]
    fn symbol_f_normalisation() {
        let beta = 0.3;
        let k = 2f64.powf(beta) * gamma(beta + 1.0);
        let one = |_: f64| 1.0;
        let v = symbol_f(0.4, 1.1, beta, k, &one, 512).unwrap();
        assert!((v - symbol_p(512, beta, 1.1)).abs() < 1e-13);
        assert_eq!(symbol_f(0.4, 0.0, 0.0, 1.0, &one, 64).unwrap(), 0.0);
        let flat = |x: f64| x - 0.5;
        assert!(symbol_f(0.5, 1.0, beta, 1.0, &flat, 64).is_err());
    }

    #[test]
    fn uniform_mesh_is_symmetric() {
        assert!(glt5_value(0.5, 1.0, 16).unwrap() < 1e-12);
    }
}

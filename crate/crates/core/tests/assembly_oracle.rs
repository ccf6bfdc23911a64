//! The assembled matrix and right-hand side against a direct evaluation of
//! the fractional flux of each hat function.

use std::sync::Arc;

use fde_core::assembly::{assemble_dense, assemble_rhs, Diffusion, FdeProblem, SourceQuadrature};
use fde_core::meshgen::{
    blend_coefficients, composite_grid, graded_grid, uniform_grid, BlendCoeffs, CompositeRule,
    Grid,
};
use fde_core::special::gamma;
use proptest::prelude::*;

fn pow0(t: f64, beta: f64) -> f64 {
    if t > 0.0 {
        t.powf(beta)
    } else {
        0.0
    }
}

/// Linear pieces `(a, b, slope)` of the hat function at node `j`.
fn pieces(grid: &Grid, j: usize) -> Vec<(f64, f64, f64)> {
    let pts = grid.points();
    let n1 = pts.len() - 1;
    let mut out = Vec::new();
    if j > 0 {
        out.push((pts[j - 1], pts[j], 1.0 / (pts[j] - pts[j - 1])));
    }
    if j < n1 {
        out.push((pts[j], pts[j + 1], -1.0 / (pts[j + 1] - pts[j])));
    }
    out
}

/// `γ I^β φ'` from the left plus `(1-γ)` times the mirrored right term,
/// without `K`.
fn flux(grid: &Grid, j: usize, x: f64, beta: f64, gam: f64) -> f64 {
    let mut left = 0.0;
    let mut right = 0.0;
    for (a, b, s) in pieces(grid, j) {
        if a < x {
            left += s * (pow0(x - a, beta) - pow0(x - b.min(x), beta));
        }
        if b > x {
            right += s * (pow0(b - x, beta) - pow0(a.max(x) - x, beta));
        }
    }
    (gam * left + (1.0 - gam) * right) / gamma(beta + 1.0)
}

fn oracle_matrix(grid: &Grid, beta: f64, gam: f64, k: &dyn Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let n = grid.n();
    (1..=n)
        .map(|i| {
            let (ml, mr) = (grid.midpoint(i), grid.midpoint(i + 1));
            (1..=n)
                .map(|j| k(ml) * flux(grid, j, ml, beta, gam) - k(mr) * flux(grid, j, mr, beta, gam))
                .collect()
        })
        .collect()
}

fn oracle_rhs(grid: &Grid, p: &FdeProblem) -> Vec<f64> {
    let n = grid.n();
    let gb = |x: f64| {
        p.diffusion.at(x)
            * (p.u_left * flux(grid, 0, x, p.beta, p.gamma)
                + p.u_right * flux(grid, n + 1, x, p.beta, p.gamma))
    };
    let pts = grid.points();
    (1..=n)
        .map(|i| {
            let xi = match p.quadrature {
                SourceQuadrature::CellMidpoint => 0.25 * (pts[i - 1] + 2.0 * pts[i] + pts[i + 1]),
                SourceQuadrature::Nodal => pts[i],
            };
            (p.source)(xi) * 0.5 * (grid.h(i) + grid.h(i + 1)) + gb(grid.midpoint(i + 1))
                - gb(grid.midpoint(i))
        })
        .collect()
}

fn check(grid: &Grid, p: &FdeProblem, tol: f64) {
    let k = |x: f64| p.diffusion.at(x);
    let want = oracle_matrix(grid, p.beta, p.gamma, &k);
    let got = assemble_dense(grid, p).unwrap();
    let scale = want.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            assert!(
                (got[(i, j)] - w).abs() <= tol * scale,
                "a[{i},{j}] = {} vs {w}",
                got[(i, j)]
            );
        }
    }
    let want_b = oracle_rhs(grid, p);
    let got_b = assemble_rhs(grid, p).unwrap();
    let bscale = want_b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (i, (g, w)) in got_b.iter().zip(&want_b).enumerate() {
        assert!((g - w).abs() <= tol * bscale, "b[{i}] = {g} vs {w}");
    }
}

fn problem(beta: f64, gam: f64, variable_k: bool) -> FdeProblem {
    let diffusion = if variable_k {
        Diffusion::Variable(Arc::new(|x: f64| 1.0 + x * x))
    } else {
        Diffusion::Constant(1.0)
    };
    FdeProblem::new(beta, gam, diffusion, Arc::new(|x: f64| x.sin() + 2.0), 0.3, 1.2).unwrap()
}

#[test]
fn uniform_grids() {
    for &(beta, gam) in &[(0.5, 0.5), (0.2, 0.0), (0.8, 1.0), (0.35, 0.7)] {
        check(&uniform_grid(13).unwrap(), &problem(beta, gam, false), 1e-11);
    }
}

#[test]
fn graded_grids() {
    let full = BlendCoeffs::full_power(2.5).unwrap();
    check(&graded_grid(20, &full).unwrap(), &problem(0.6, 0.3, true), 1e-10);
    let blend = blend_coefficients(3.0, 0.25, 0.35).unwrap();
    check(&graded_grid(24, &blend).unwrap(), &problem(0.4, 0.5, false), 1e-10);
    let nodal = problem(0.4, 0.5, false).with_quadrature(SourceQuadrature::Nodal);
    check(&graded_grid(24, &blend).unwrap(), &nodal, 1e-10);
}

#[test]
fn composite_grid_matches() {
    let g = composite_grid(15, CompositeRule::Sqrt).unwrap();
    check(&g, &problem(0.7, 0.9, true), 1e-10);
}

#[test]
fn strongly_graded_grid_stays_finite() {
    let g = graded_grid(255, &BlendCoeffs::full_power(5.3).unwrap()).unwrap();
    let p = FdeProblem::benchmark(0.8, 0.5).unwrap();
    let a = assemble_dense(&g, &p).unwrap();
    assert!(a.iter().all(|v| v.is_finite()));
    assert!(assemble_rhs(&g, &p).unwrap().iter().all(|v| v.is_finite()));
}

fn random_grid(gaps: &[f64]) -> Grid {
    let total: f64 = gaps.iter().sum();
    let mut pts = vec![0.0];
    let mut acc = 0.0;
    for g in &gaps[..gaps.len() - 1] {
        acc += g / total;
        pts.push(acc);
    }
    pts.push(1.0);
    Grid::from_points(pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_grids_match_oracle(
        gaps in prop::collection::vec(0.05f64..1.0, 3..14),
        beta in 0.05f64..0.95,
        gam in 0.0f64..1.0,
    ) {
        check(&random_grid(&gaps), &problem(beta, gam, true), 1e-9);
    }

    // constants have zero flux, so A·1 equals the boundary load of u ≡ 1
    #[test]
    fn constants_are_in_the_kernel(
        gaps in prop::collection::vec(0.05f64..1.0, 3..20),
        beta in 0.05f64..0.95,
        gam in 0.0f64..1.0,
    ) {
        let g = random_grid(&gaps);
        let p = FdeProblem::new(beta, gam, Diffusion::Constant(1.3), Arc::new(|_| 0.0), 1.0, 1.0).unwrap();
        let a = assemble_dense(&g, &p).unwrap();
        let b = assemble_rhs(&g, &p).unwrap();
        let ones = vec![1.0; g.n()];
        let av = fde_core::LinearOperator::Dense(a).matvec(&ones).unwrap();
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in av.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10 * scale);
        }
    }

    // γ = 1 only couples to the left beyond the first superdiagonal
    #[test]
    fn left_sided_is_hessenberg(
        gaps in prop::collection::vec(0.05f64..1.0, 4..14),
        beta in 0.05f64..0.95,
    ) {
        let g = random_grid(&gaps);
        let a = assemble_dense(&g, &problem(beta, 1.0, false)).unwrap();
        for i in 0..g.n() {
            for j in i + 2..g.n() {
                prop_assert_eq!(a[(i, j)], 0.0);
            }
        }
    }
}

use fde_core::assembly::{assemble_dense, assemble_rhs, row_weights};
use fde_core::bench::{errors, eps_mesh};
use fde_core::dense::{lu_solve, singular_values};
use fde_core::meshgen::{
    composite_grid, graded_grid, q_cap, q_for_beta, uniform_grid, BlendCoeffs, CompositeRule,
};
use fde_core::multigrid::{coarsen, Prolongation};
use fde_core::{gmres, FdeProblem, Grid, GmresOptions, LinearOperator, MgHierarchy};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn scaled_system(grid: &Grid, problem: &FdeProblem) -> (DMatrix<f64>, Vec<f64>) {
    let mut a = assemble_dense(grid, problem).unwrap();
    let mut b = assemble_rhs(grid, problem).unwrap();
    for (i, w) in row_weights(grid).iter().enumerate() {
        a.row_mut(i).scale_mut(*w);
        b[i] *= w;
    }
    (a, b)
}

#[test]
fn preconditioned_and_plain_gmres_agree() {
    let tol = 1e-9;
    let opts = GmresOptions { tol, maxit: 200 };
    for (beta, gamma) in [(0.5, 0.5), (0.3, 0.1), (0.8, 0.9)] {
        let problem = FdeProblem::benchmark(beta, gamma).unwrap();
        let grid = eps_mesh(2).build(beta, 127).unwrap();
        let (a, b) = scaled_system(&grid, &problem);
        let sv = singular_values(&a).unwrap();
        let kappa = sv.iter().cloned().fold(0.0, f64::max) / sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let op = LinearOperator::Dense(a);
        let hier = MgHierarchy::build(grid, &problem).unwrap();
        let plain = gmres(&op, &b, None, &opts).unwrap();
        let prec = gmres(&op, &b, Some(&hier), &opts).unwrap();
        assert!(plain.converged && prec.converged);
        // near-skew operators are the known weak spot of the smoother
        let skewed = beta > 0.7 && (gamma - 0.5).abs() > 0.3;
        assert!(
            skewed || prec.iterations < plain.iterations,
            "beta = {beta}, gamma = {gamma}: {} vs {}",
            prec.iterations,
            plain.iterations
        );
        let d = rel_diff(&prec.solution, &plain.solution);
        // both residuals are below tol, so the solutions differ by at most 2 κ tol
        assert!(d < 2.0 * kappa * tol, "beta = {beta}, gamma = {gamma}: {d:e}, kappa = {kappa:e}");
    }
}

#[test]
fn laplacian_gmres_matches_direct_solve() {
    let n = 255;
    let grid = uniform_grid(n).unwrap();
    let problem = FdeProblem::operator_only(0.0, 0.5, 1.0).unwrap();
    let a = assemble_dense(&grid, &problem).unwrap();
    let b: Vec<f64> = (1..=n).map(|i| (i as f64 * 0.37).sin()).collect();
    let want = lu_solve(&a, &b).unwrap();
    let hier = MgHierarchy::build(grid.clone(), &problem).unwrap();
    let mut bs = b.clone();
    let mut sa = a.clone();
    for (i, w) in row_weights(&grid).iter().enumerate() {
        sa.row_mut(i).scale_mut(*w);
        bs[i] *= w;
    }
    let rep = gmres(
        &LinearOperator::Dense(sa),
        &bs,
        Some(&hier),
        &GmresOptions { tol: 1e-12, maxit: 100 },
    )
    .unwrap();
    assert!(rep.converged);
    assert!(rel_diff(&rep.solution, &want) < 1e-9);
}

#[test]
fn benchmark_error_shrinks_on_graded_meshes() {
    let beta = 0.5;
    let problem = FdeProblem::benchmark(beta, 0.5).unwrap();
    let mut last = f64::INFINITY;
    for n in [31, 63, 127] {
        let grid = eps_mesh(6).build(beta, n).unwrap();
        let (a, b) = scaled_system(&grid, &problem);
        let u = lu_solve(&a, &b).unwrap();
        let (e_inf, _) = errors(&grid, beta, &u);
        assert!(e_inf < 0.5 * last, "N = {n}: {e_inf} after {last}");
        last = e_inf;
    }
}

#[test]
fn composite_hierarchies_coarsen_to_three() {
    for rule in [CompositeRule::Sqrt, CompositeRule::Log2] {
        let grid = composite_grid(255, rule).unwrap();
        let hier = MgHierarchy::build(grid, &FdeProblem::benchmark(0.2, 0.5).unwrap()).unwrap();
        let ns: Vec<usize> = hier.levels.iter().map(|l| l.n()).collect();
        assert_eq!(ns, vec![255, 127, 63, 31, 15, 7, 3]);
        assert!(hier.omega > 0.0 && hier.omega < 2.0);
    }
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
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_history_is_monotone(
        seed in proptest::collection::vec(-1.0f64..1.0, 36),
        b in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        prop_assume!(b.iter().any(|v| v.abs() > 1e-3));
        let mut a = DMatrix::from_row_slice(6, 6, &seed);
        for i in 0..6 {
            a[(i, i)] += 4.0;
        }
        let rep = gmres(&LinearOperator::Dense(a), &b, None, &GmresOptions { tol: 1e-12, maxit: 6 })
            .unwrap();
        for w in rep.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-14);
        }
        prop_assert!(rep.converged);
    }

    #[test]
    fn prolongation_interpolates_on_random_grids(
        gaps in proptest::collection::vec(0.05f64..1.0, 10..40),
        slope in -3.0f64..3.0,
    ) {
        let fine = random_grid(&gaps);
        prop_assume!(fine.n() >= 4);
        let coarse = coarsen(&fine).unwrap();
        let p = Prolongation::new(&fine, &coarse).unwrap();
        for row in p.rows() {
            let s: f64 = row.iter().map(|(_, w)| w).sum();
            prop_assert!(s > 0.0 && s <= 1.0 + 1e-14);
        }
        // u(x) = slope x vanishes at the left end, so it is exact up to the last coarse node
        let vc: Vec<f64> = coarse.interior().iter().map(|x| slope * x).collect();
        let last = *coarse.interior().last().unwrap();
        for (x, v) in fine.interior().iter().zip(p.apply(&vc)) {
            if *x <= last {
                prop_assert!((v - slope * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vcycle_is_linear(
        beta in 0.1f64..0.9,
        gamma in 0.0f64..1.0,
        r in proptest::collection::vec(-1.0f64..1.0, 31),
        s in -2.0f64..2.0,
    ) {
        let problem = FdeProblem::operator_only(beta, gamma, 1.0).unwrap();
        let hier = MgHierarchy::build(
            graded_grid(31, &BlendCoeffs::full_power(2.0).unwrap()).unwrap(),
            &problem,
        ).unwrap();
        let v = hier.vcycle(&r).unwrap();
        let scaled: Vec<f64> = r.iter().map(|x| s * x).collect();
        let vs = hier.vcycle(&scaled).unwrap();
        let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        for (a, b) in vs.iter().zip(&v) {
            prop_assert!((a - s * b).abs() <= 1e-11 * m * s.abs().max(1.0));
        }
    }

    #[test]
    fn graded_exponent_keeps_first_step_representable(beta in 0.0f64..0.99, k in 3u32..11) {
        let n = (1usize << k) - 1;
        let q = q_for_beta(beta, n);
        prop_assert!(q <= q_cap(n) + 1e-12);
        let grid = graded_grid(n, &BlendCoeffs::full_power(q).unwrap()).unwrap();
        prop_assert!(grid.x(1) >= 1e-16 * (1.0 - 1e-9));
        prop_assert!(grid.steps().iter().all(|&h| h > 0.0));
    }
}

//! Branched-cover Dirichlet solve from a boundary trace, with a branch-point search.

use branchlab::fields::AnalyticTwoValuedField;
use branchlab::minimizer::{
    energy, optimize_branch_points, solve_branched_laplace, BoundaryData, BranchConfiguration, CoverGrid, SearchBudget,
};
use num_complex::Complex64;

fn main() {
    let s = 0.5f64.sqrt();
    let u = AnalyticTwoValuedField::cylindrical(2, vec![Complex64::new(s, s)], 1).unwrap();
    let b = BoundaryData::from_field(&u, 1.0, 1024).unwrap();
    let cfg = BranchConfiguration::Single([0.0, 0.0]);
    for n in [8, 16, 32] {
        let grid = CoverGrid::new(1.0, n, 4 * n).unwrap();
        let (f, stats) = solve_branched_laplace(&b, &cfg, grid).unwrap();
        println!("{n:>3} x {:<3} energy {:.6} L2 error {:.3e} ({} iterations)", 4 * n, energy(&f), f.l2_error_sq(&u).sqrt(), stats.iterations);
    }

    // local refinement of a perturbed start for the field branched at (±0.3, 0)
    let t = 0.3;
    let pair = AnalyticTwoValuedField::two_point_branch(2, t).unwrap();
    let b = BoundaryData::from_field(&pair, 1.0, 1024).unwrap();
    let grid = CoverGrid::new(1.0, 32, 128).unwrap();
    let h = 0.015;
    let init = BranchConfiguration::Pair([t + 1.5 * h, 0.5 * h], [-t - h, -0.5 * h]);
    let budget = SearchBudget { max_evaluations: 400, initial_step: 2.0 * h, min_step: h / 4.0 };
    let res = optimize_branch_points(&b, grid, &init, budget).unwrap();
    println!("search: {:?} energy {:.6} after {} evaluations", res.config, res.energy, res.evaluations);
    println!("offset from (±{t}, 0): {:.3} and {:.3}, grid cell {:.3}", (res.config.points()[0][0] - t).abs(), (res.config.points()[1][0] + t).abs(), grid.cell_size());
}

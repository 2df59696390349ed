//! Monotone frequency for a stationary power sum, and a non-stationary field that breaks it.

use branchlab::fields::{AnalyticTwoValuedField, AngularMode};
use branchlab::frequency::{check_monotonicity, frequency_profile, new_monotonicity_residual};
use branchlab::quadrature::QuadLevel;
use num_complex::Complex64;

fn main() {
    let s = 0.5f64.sqrt();
    let w = |a: f64| vec![Complex64::new(a * s, 0.0), Complex64::new(0.0, a * s)];
    let u = AnalyticTwoValuedField::power_sum(2, vec![(w(1.0), 1), (w(0.3), 3)]).unwrap();
    let radii: Vec<f64> = (0..12).map(|i| 0.05 * 1.3f64.powi(i)).collect();
    let prof = frequency_profile(&u, &[0.0, 0.0], &radii, QuadLevel::MEDIUM).unwrap();
    let rep = check_monotonicity(&prof, 1e-8).unwrap();
    println!("power sum: N from {:.4} to {:.4}, violations {}", prof.n[0], prof.n[prof.n.len() - 1], rep.violations.len());
    for row in new_monotonicity_residual(&u, &[0.0, 0.0], 0.5, &[0.3, 0.6, 0.9], QuadLevel::FINE).unwrap() {
        println!("  rho {:.1}: lhs {:.6e} rhs {:.6e}", row.rho, row.lhs, row.rhs);
    }

    let modes = vec![
        AngularMode { power: 0.5, half_freq: 5, a: vec![0.2], b: vec![0.0] },
        AngularMode { power: 1.5, half_freq: 1, a: vec![1.0], b: vec![0.0] },
    ];
    let v = AnalyticTwoValuedField::from_modes(2, 1, modes).unwrap();
    let prof = frequency_profile(&v, &[0.0, 0.0], &radii, QuadLevel::MEDIUM).unwrap();
    let rep = check_monotonicity(&prof, 1e-8).unwrap();
    println!("non-stationary control: {} slope violations", rep.violations.len());
}

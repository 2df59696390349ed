//! Fitting a cylindrical profile and evaluating the inequality ratios.

use branchlab::fields::AnalyticTwoValuedField;
use branchlab::profiles::{corollary_checks, excess, fit_profile, CorollaryParams, CylindricalProfile};
use branchlab::quadrature::QuadLevel;
use num_complex::Complex64;

fn main() {
    let c = vec![Complex64::new(0.8, 0.6)];
    let u = AnalyticTwoValuedField::power_sum(3, vec![(c.clone(), 1), (vec![Complex64::new(0.05, 0.0)], 3)]).unwrap();
    let guess = CylindricalProfile::new(3, vec![Complex64::new(1.0, 0.0)], 1).unwrap();
    let fit = fit_profile(&u, &guess, 0.3, 1.0, QuadLevel::MEDIUM).unwrap();
    println!("excess {:.3e} -> {:.3e}, fitted c = {:?}", fit.initial_excess, fit.excess, fit.profile.c());
    let exact = CylindricalProfile::new(3, c, 1).unwrap();
    println!("excess to the leading term: {:.3e}", excess(&u, &exact, &[0.0; 3], 1.0, QuadLevel::MEDIUM));

    let params = CorollaryParams { gamma: 0.5, sigma: 0.5, delta: 0.05, level: QuadLevel::MEDIUM };
    for row in corollary_checks(&u, &exact, &[0.0; 3], params) {
        println!("{:<32} lhs {:.4e} rhs {:.4e} ratio {:.4}", row.name, row.lhs, row.rhs, row.ratio);
    }
}

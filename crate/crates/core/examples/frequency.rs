//! Frequency profile and doubling ratios of a cylindrical profile.

use branchlab::fields::AnalyticTwoValuedField;
use branchlab::frequency::{frequency_at_point, frequency_profile, height_ratio};
use branchlab::quadrature::QuadLevel;
use num_complex::Complex64;

fn main() {
    let c = vec![Complex64::new(0.8, -0.6)];
    for k in 1..=4 {
        let u = AnalyticTwoValuedField::cylindrical(2, c.clone(), k).unwrap();
        let prof = frequency_profile(&u, &[0.0, 0.0], &[0.25, 0.5, 1.0], QuadLevel::FINE).unwrap();
        let ratio = height_ratio(&u, &[0.0, 0.0], 0.25, 1.0, QuadLevel::FINE);
        println!("k = {k}: N = {:?}, H(1/4)/H(1) = {ratio:.6e} (expected {:.6e})", prof.n, 0.25f64.powi(k as i32));
    }
    let u = AnalyticTwoValuedField::two_point_branch(2, 0.3).unwrap();
    for y in [[0.3, 0.0], [0.0, 0.0], [0.5, 0.2]] {
        let e = frequency_at_point(&u, &y, 0.1, 6, QuadLevel::MEDIUM).unwrap();
        println!("two-point field at {y:?}: frequency {:.4} +- {:.1e}", e.value, e.uncertainty);
    }
}

//! Projection onto the linearized kernel and the per-scale decay check.

use branchlab::fields::AnalyticTwoValuedField;
use branchlab::profiles::CylindricalProfile;
use branchlab::quadrature::QuadLevel;
use branchlab::spectral::{decay_check, project_l, DecayCheckOptions, GraphLift, LBasis};
use num_complex::Complex64;

fn main() {
    let c = vec![Complex64::new(1.0, 0.0)];
    let u = AnalyticTwoValuedField::power_sum(3, vec![(c.clone(), 1), (vec![Complex64::new(0.02, 0.01)], 3)]).unwrap();
    let phi = CylindricalProfile::new(3, c, 1).unwrap();
    let basis = LBasis::from_profile(&phi).unwrap();
    let w = GraphLift::difference(&u, &phi, 1.0);
    for rho in [0.5, 0.25, 0.125] {
        let p = project_l(&w, &basis, rho, QuadLevel::MEDIUM).unwrap();
        println!(
            "rho {rho:<5}: |w|^2 {:.4e} = |psi|^2 {:.4e} + |rest|^2 {:.4e} (residual {:.1e})",
            p.norm_sq_w, p.norm_sq_psi, p.norm_sq_remainder, p.pythagoras_residual
        );
    }
    let rep = decay_check(&w, &basis, &DecayCheckOptions { level: QuadLevel::MEDIUM, ..Default::default() }).unwrap();
    for r in &rep.rows {
        println!("rho {:.4}: radial ratio {:.4}", r.rho, r.radial_ratio);
    }
    println!("decay exponent {:?}", rep.decay_exponent);
}

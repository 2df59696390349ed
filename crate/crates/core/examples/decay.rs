//! Excess decay across scales and the remainder tables around a branch point.

use branchlab::decay::{iterate, tangent_expansion, DecayOptions, TangentOptions};
use branchlab::fields::AnalyticTwoValuedField;
use branchlab::profiles::CylindricalProfile;
use num_complex::Complex64;

fn main() {
    let c = vec![Complex64::new(0.8, 0.6)];
    let u = AnalyticTwoValuedField::power_sum(2, vec![(c.clone(), 1), (vec![Complex64::new(0.05, 0.0)], 3)]).unwrap();
    let guess = CylindricalProfile::new(2, vec![Complex64::new(1.0, 0.0)], 1).unwrap();
    let run = iterate(&u, &[0.0, 0.0], &guess, &DecayOptions::default()).unwrap();
    print!("{}", run.to_csv());
    println!("stop: {:?}, limit c = {:?}", run.stop, run.limit().unwrap().c());
    let t = tangent_expansion(&u, &run, &TangentOptions::default()).unwrap();
    print!("{}", t.to_csv());
    println!("L2 slope {:?}, sup slope {:?}", t.l2_slope, t.sup_slope);
}

//! Locating the branch points of {±(z^2 - t^2)^{1/2}}.

use branchlab::decay::{detect_branch_set, DetectOptions};
use branchlab::fields::AnalyticTwoValuedField;

fn main() {
    for t in [0.1, 0.3] {
        let u = AnalyticTwoValuedField::two_point_branch(2, t).unwrap();
        let rep = detect_branch_set(&u, &DetectOptions::new(2)).unwrap();
        println!("t = {t}: cell size {:.3}", rep.cell_size);
        for c in rep.branch_points() {
            println!("  branch point at ({:+.5}, {:+.5}), frequency {:.4}", c.position[0], c.position[1], c.frequency);
        }
    }
}

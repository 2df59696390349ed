//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use branchlab::decay::{detect_branch_set, DetectOptions};
use branchlab::experiment::{parse_config, run_config, CheckStatus, ExperimentConfig, RunOutcome};
use branchlab::fields::{AnalyticTwoValuedField, AngularMode};
use branchlab::frequency::{
    frequency_profile, height_integral, height_ratio, new_monotonicity_residual, stationarity_residuals, TestFunction,
};
use branchlab::quadrature::QuadLevel;
use branchlab::spectral::{decay_check, project_l, CoverFn, CoverFunction, DecayCheckOptions, LBasis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> (ExperimentConfig, PathBuf) {
    let dir = configs_dir();
    let text = std::fs::read_to_string(dir.join(name)).expect("config present");
    (parse_config(&text).expect("config parses"), dir)
}

fn scratch(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("branchlab-acceptance-{}-{tag}", std::process::id()))
}

fn run(name: &str, tag: &str) -> RunOutcome {
    let (cfg, base) = load(name);
    run_config(&cfg, &base, &scratch(tag)).expect("run completes")
}

fn check_status(o: &RunOutcome, name: &str) -> Option<(CheckStatus, Option<f64>)> {
    o.summary.checks.iter().find(|c| c.name == name).map(|c| (c.status, c.value))
}

fn all_green(o: &RunOutcome) -> bool {
    o.summary.all_green()
}

fn cz(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn stationary_c() -> Vec<Complex64> {
    let s = 0.5f64.sqrt();
    vec![cz(s, 0.0), cz(0.0, s)]
}

fn c1_frequency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for k in 1..=6u32 {
        let c: Vec<Complex64> = (0..2).map(|_| cz(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let u = AnalyticTwoValuedField::cylindrical(2, c, k).unwrap();
        let t = Instant::now();
        let prof = frequency_profile(&u, &[0.0, 0.0], &[0.25, 0.5, 1.0], QuadLevel::FINE).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let want = k as f64 / 2.0;
        for v in &prof.n {
            worst = worst.max((v - want).abs() / want);
        }
    }
    outcome(worst <= 1e-6 && slowest < 10.0, format!("max rel dev {worst:.2e} (tol 1e-6), slowest case {slowest:.3}s (< 10s)"))
}

fn c2_doubling() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 1..=6u32 {
        let u = AnalyticTwoValuedField::cylindrical(2, vec![cz(0.6, -0.8)], k).unwrap();
        for rho in [0.5, 1.0] {
            for q in [0.5, 0.25] {
                let r = height_ratio(&u, &[0.0, 0.0], q * rho, rho, QuadLevel::FINE);
                worst = worst.max((r / q.powi(k as i32) - 1.0).abs());
            }
        }
    }
    outcome(worst <= 1e-8, format!("max rel dev {worst:.2e} (tol 1e-8)"))
}

/// Least-squares slope of `log r` against `log 2^level`, over residuals above the roundoff floor.
fn refinement_order(res: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = res
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > floor)
        .map(|(i, r)| ((i as f64) * 2f64.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

fn c3_stationarity() -> Outcome {
    let tests = vec![
        TestFunction { center: vec![0.1, -0.05], support: 0.5 },
        TestFunction { center: vec![-0.2, 0.15], support: 0.4 },
    ];
    let levels: Vec<QuadLevel> = (1..=5).map(QuadLevel::ladder).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for k in [1u32, 3] {
        let u = AnalyticTwoValuedField::cylindrical(2, stationary_c(), k).unwrap();
        let rows: Vec<_> = levels
            .iter()
            .map(|l| stationarity_residuals(&u, &[0.0, 0.0], 1.0, &tests, &[0.5], *l).unwrap())
            .collect();
        let scale = rows.last().unwrap().energy_scale;
        let floor = 1e-12 * scale;
        for (name, series) in [
            ("squash", rows.iter().map(|r| r.squash).collect::<Vec<_>>()),
            ("squeeze", rows.iter().map(|r| r.squeeze).collect()),
            ("radial", rows.iter().map(|r| r.radial[0].1.abs()).collect()),
        ] {
            let last = *series.last().unwrap();
            match refinement_order(&series, floor) {
                Some(p) => {
                    pass &= p >= 2.0 && last <= 1e-6 * scale;
                    parts.push(format!("k={k} {name} order {p:.2}"));
                }
                None => {
                    pass &= last <= floor;
                    parts.push(format!("k={k} {name} at roundoff ({last:.1e})"));
                }
            }
        }
    }
    let md = AngularMode { power: 1.0, half_freq: 1, a: vec![1.0], b: vec![0.0] };
    let v = AnalyticTwoValuedField::from_modes(2, 1, vec![md]).unwrap();
    let bad = stationarity_residuals(&v, &[0.0, 0.0], 1.0, &tests, &[0.5], QuadLevel::ladder(5)).unwrap();
    let rel = bad.squeeze / bad.energy_scale;
    pass &= rel > 1e-2;
    parts.push(format!("control squeeze/energy {rel:.2e}"));
    outcome(pass, parts.join(", "))
}

fn c4_new_monotonicity() -> Outcome {
    let radii = [0.2, 0.4, 0.6, 0.8];
    let c = stationary_c();
    let mut worst: f64 = 0.0;
    for k in [1u32, 3] {
        let alpha = k as f64 / 2.0;
        for ratio in [1e-1, 1e-2] {
            let d: Vec<Complex64> = c.iter().map(|x| x * cz(0.0, ratio)).collect();
            let u = AnalyticTwoValuedField::power_sum(2, vec![(c.clone(), k), (d, k + 2)]).unwrap();
            let norm = height_integral(&u, &[0.0, 0.0], 1.0, QuadLevel::FINE);
            for row in new_monotonicity_residual(&u, &[0.0, 0.0], alpha, &radii, QuadLevel::FINE).unwrap() {
                worst = worst.max(row.residual.abs() / norm);
            }
        }
    }
    let mut homogeneous: f64 = 0.0;
    for k in 1..=4u32 {
        let u = AnalyticTwoValuedField::cylindrical(2, stationary_c(), k).unwrap();
        let norm = height_integral(&u, &[0.0, 0.0], 1.0, QuadLevel::FINE);
        for row in new_monotonicity_residual(&u, &[0.0, 0.0], k as f64 / 2.0, &radii, QuadLevel::FINE).unwrap() {
            homogeneous = homogeneous.max(row.lhs.abs().max(row.rhs.abs()) / norm);
        }
    }
    outcome(
        worst <= 1e-6 && homogeneous <= 1e-10,
        format!("max |lhs - rhs| {worst:.2e} (tol 1e-6), homogeneous max |side| {homogeneous:.2e}"),
    )
}

fn c5_monotonicity() -> Outcome {
    let (mut cfg, base) = load("monotonicity.json");
    if let branchlab::experiment::Experiment::Monotonicity(p) = &mut cfg.experiment {
        p.random_fields = 20;
        p.rho_min = 0.05;
        p.rho_max = 0.9;
    }
    let good = run_config(&cfg, &base, &scratch("c5")).unwrap();
    let control = run("monotonicity_control.json", "c5-control");
    let randoms = check_status(&good, "monotone:random_fields");
    let ctl = check_status(&control, "monotone:configured");
    let pass = matches!(randoms, Some((CheckStatus::Pass, _))) && matches!(ctl, Some((CheckStatus::ExpectedFail, _)));
    outcome(
        pass,
        format!(
            "20 random fields: {:?}, control steepest slope {:.2e} ({:?})",
            randoms.map(|r| r.0),
            ctl.and_then(|c| c.1).unwrap_or(f64::NAN),
            ctl.map(|c| c.0)
        ),
    )
}

fn c6_detection() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [0.1, 0.3] {
        let u = AnalyticTwoValuedField::two_point_branch(2, t).unwrap();
        let rep = detect_branch_set(&u, &DetectOptions::new(2)).unwrap();
        let mut b: Vec<_> = rep.branch_points().collect();
        b.sort_by(|p, q| p.position[0].total_cmp(&q.position[0]));
        let ok_count = b.len() == 2;
        let mut max_off: f64 = 0.0;
        let mut max_dn: f64 = 0.0;
        for (c, x) in b.iter().zip([-t, t]) {
            max_off = max_off.max(((c.position[0] - x).powi(2) + c.position[1].powi(2)).sqrt());
            max_dn = max_dn.max((c.frequency - 0.5).abs());
        }
        let isolated = rep.cluster_sizes.iter().all(|&s| s == 1);
        pass &= ok_count && max_off <= rep.cell_size && max_dn <= 0.02 && isolated;
        parts.push(format!(
            "t={t}: {} branch points, offset {:.1e} (cell {:.1e}), |N-1/2| {:.1e}, isolated {isolated}",
            b.len(),
            max_off,
            rep.cell_size,
            max_dn
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c7_minimizer() -> Outcome {
    let t = Instant::now();
    let o = run("minimize.json", "c7");
    let secs = t.elapsed().as_secs_f64();
    let order = check_status(&o, "l2_error_order").and_then(|c| c.1).unwrap_or(f64::NAN);
    let freq = check_status(&o, "center_frequency").and_then(|c| c.1).unwrap_or(f64::NAN);
    let pass = all_green(&o) && order >= 1.0 && (0.48..=0.52).contains(&freq) && secs < 60.0;
    outcome(pass, format!("L2 order {order:.3} (>= 1), center frequency {freq:.4} in [0.48, 0.52], {secs:.1}s (< 60s)"))
}

fn c8_c9_decay() -> (Outcome, Outcome) {
    let o = run("decay.json", "c8");
    let get = |n: &str| check_status(&o, n);
    let green = |n: &str| get(n).map(|c| c.0 == CheckStatus::Pass).unwrap_or(false);
    let val = |n: &str| get(n).and_then(|c| c.1).unwrap_or(f64::NAN);
    let c8 = outcome(
        green("decay_ratio") && green("limit_c") && green("tangent_uniqueness"),
        format!(
            "|ratio/theta^2 - 1| {:.2e} (tol 0.2), |c - c_true| {:.2e} (tol 1e-4), uniqueness excess {:.2e}",
            val("decay_ratio"),
            val("limit_c"),
            val("tangent_uniqueness")
        ),
    );
    let c9 = outcome(
        green("l2_slope") && green("sup_slope"),
        format!("L2 slope {:.4} (k + 2 = 3 +- 0.1), sup slope {:.4} (>= k = 1)", val("l2_slope"), val("sup_slope")),
    );
    (c8, c9)
}

fn c10_spectral() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let lb = LBasis::new(3, vec![cz(0.6, -0.2), cz(0.1, 0.5)], 3).unwrap();
    let coeffs: Vec<f64> = (0..lb.len()).map(|i| 0.3 + 0.17 * i as f64).collect();
    let member = lb.combination(coeffs);
    let p = project_l(&member, &lb, 0.7, QuadLevel::MEDIUM).unwrap();
    let exact = p.norm_sq_remainder / p.norm_sq_w;
    pass &= exact <= 1e-20;
    parts.push(format!("member remainder {exact:.1e}"));

    let lb1 = LBasis::new(3, vec![cz(1.0, 0.0)], 1).unwrap();
    let mut c = vec![0.0; lb1.len()];
    c[0] = 1.0;
    c[1] = 0.4;
    let psi = lb1.combination(c);
    let w = CoverFn::new(3, 1, move |r: f64, t: f64, y: &[f64]| vec![psi.eval(r, t, y)[0] + 0.1 * r.powf(1.5) * (1.5 * t).cos()]);
    let rep = decay_check(&w, &lb1, &DecayCheckOptions { level: QuadLevel::MEDIUM, ..Default::default() }).unwrap();
    let worst_ratio = rep.rows.iter().map(|r| r.radial_ratio).fold(0.0, f64::max);
    pass &= worst_ratio < 1.0 && rep.hypothesis_violation.is_none();
    parts.push(format!("constructed family radial ratio {worst_ratio:.4} (< 1)"));

    let o = run("spectral.json", "c10");
    let pyth = check_status(&o, "pythagoras").and_then(|c| c.1).unwrap_or(f64::NAN);
    let bt = check_status(&o, "boundary_term_vanishes");
    pass &= all_green(&o);
    parts.push(format!("pythagoras {pyth:.1e} (tol 1e-10), boundary term {:?}", bt.map(|b| b.0)));
    outcome(pass, parts.join(", "))
}

fn c11_corollaries() -> Outcome {
    let o = run("corollaries.json", "c11");
    let spreads: Vec<(String, f64)> = o
        .summary
        .checks
        .iter()
        .filter(|c| c.name.starts_with("ratio_stability"))
        .map(|c| (c.name.trim_start_matches("ratio_stability:").to_string(), c.value.unwrap_or(f64::INFINITY)))
        .collect();
    let pass = all_green(&o) && spreads.len() >= 3;
    let detail = spreads.iter().map(|(n, s)| format!("{n} spread {s:.3}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("{detail} (< 3)"))
}

fn c12_determinism() -> Outcome {
    let mut mismatched = Vec::new();
    let mut files = 0;
    for name in ["frequency.json", "monotonicity.json", "decay.json", "corollaries.json", "full_pipeline.json"] {
        let a = run(name, "c12a");
        let b = run(name, "c12b");
        for (ea, eb) in a.manifest.files.iter().zip(&b.manifest.files) {
            files += 1;
            let da = std::fs::read(a.dir.join(&ea.path)).unwrap();
            let db = std::fs::read(b.dir.join(&eb.path)).unwrap();
            if ea.path != eb.path || da != db {
                mismatched.push(format!("{name}:{}", ea.path));
            }
        }
        if a.manifest != b.manifest {
            mismatched.push(format!("{name}:manifest"));
        }
    }
    outcome(mismatched.is_empty(), format!("{files} files compared, mismatches: {mismatched:?}"))
}

fn main() {
    let mut rows: Vec<(usize, &str, Outcome)> = vec![
        (1, "frequency of model solutions", c1_frequency()),
        (2, "doubling equality", c2_doubling()),
        (3, "stationarity identities", c3_stationarity()),
        (4, "radial excess identity", c4_new_monotonicity()),
        (5, "frequency monotonicity", c5_monotonicity()),
        (6, "branch detection in the plane", c6_detection()),
        (7, "minimizer recovery", c7_minimizer()),
    ];
    let (c8, c9) = c8_c9_decay();
    rows.push((8, "decay iteration rates", c8));
    rows.push((9, "remainder exponent table", c9));
    rows.push((10, "spectral projection", c10_spectral()));
    rows.push((11, "inequality ratio stability", c11_corollaries()));
    rows.push((12, "determinism", c12_determinism()));
    for tag in ["c5", "c5-control", "c7", "c8", "c10", "c11", "c12a", "c12b"] {
        let _ = std::fs::remove_dir_all(scratch(tag));
    }
    let mut failed = 0;
    for (i, name, o) in &rows {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} criterion {i:>2} {name}: {}", o.detail);
    }
    println!("{}/{} criteria pass", rows.len() - failed, rows.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! One decay step, the scale-by-scale iteration with gap probing, and the
//! frequency-pinching check near a candidate.

use super::detect::{detect_branch_set, gap_probe, DetectOptions};
use super::{middle_slope, DecayError};
use crate::fields::{l2_norm_sq, Transformed, TwoValuedField};
use crate::frequency::{check_monotonicity, frequency_profile};
use crate::profiles::{excess, fit_profile, CylindricalProfile, ProfileRecord};
use crate::quadrature::QuadLevel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub profile: CylindricalProfile,
    /// `int_{B_1} G(u, phi_prev)^2`.
    pub excess_before: f64,
    /// `theta^{-n-2 alpha} int_{B_theta} G(u, phi_new)^2`.
    pub excess_after: f64,
    pub ratio: f64,
}

/// Rescales `u` about the center of `phi_prev` to scale `theta`, fits a new
/// profile there, and returns the normalized excess ratio. The new profile
/// is centered like `phi_prev`; by homogeneity it is the same profile at
/// every scale.
pub fn decay_step<F: TwoValuedField + ?Sized>(
    u: &F,
    phi_prev: &CylindricalProfile,
    theta: f64,
    tilt_bound: f64,
    level: QuadLevel,
) -> Result<StepResult, DecayError> {
    let n = u.dim();
    if !(theta > 0.0 && theta < 1.0) {
        return Err(DecayError::InvalidInput(format!("scale ratio {theta} outside (0, 1)")));
    }
    let z = phi_prev.center().to_vec();
    let alpha = phi_prev.alpha();
    let before = excess(u, phi_prev, &z, 1.0, level);
    let ut = Transformed::new(u, z.clone(), theta, theta.powf(-alpha));
    let guess = phi_prev.with_center(vec![0.0; n])?;
    let fit = fit_profile(&ut, &guess, tilt_bound, 1.0, level)?;
    let ratio = if before > 0.0 { fit.excess / before } else { 0.0 };
    Ok(StepResult { profile: fit.profile.with_center(z)?, excess_before: before, excess_after: fit.excess, ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayOptions {
    pub theta: f64,
    /// Radius of the axis balls in the gap probe; defaults to `theta / 2`.
    pub delta0: Option<f64>,
    pub j_max: usize,
    pub tilt_bound: f64,
    pub level: QuadLevel,
    /// Run the gap probe before every step.
    pub gap_check: bool,
    /// Detection grid of the gap probe, in rescaled coordinates.
    pub detect: Option<DetectOptions>,
    /// Stop once the excess falls below `floor * int_{B_1} |u_j|^2`.
    pub floor: f64,
    /// Stop before a step whose scale `theta^j` falls below this value.
    pub min_scale: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            theta: 0.125,
            delta0: None,
            j_max: 4,
            tilt_bound: 0.3,
            level: QuadLevel::MEDIUM,
            gap_check: false,
            detect: None,
            floor: 1e-24,
            min_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    Decay,
    Gap { y0: Vec<f64>, delta0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayStepRecord {
    pub j: usize,
    pub scale: f64,
    pub profile: ProfileRecord,
    /// Normalized excess `E_j^2` at this scale.
    pub excess: f64,
    /// `E_j^2 / E_{j-1}^2`.
    pub ratio: Option<f64>,
    /// `int_{B_1} G(phi_j, phi_{j-1})^2`.
    pub drift: Option<f64>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    MaxSteps,
    Gap,
    FitFailure(String),
    Truncated(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRun {
    pub center: Vec<f64>,
    pub theta: f64,
    pub alpha: f64,
    pub steps: Vec<DecayStepRecord>,
    pub stop: StopReason,
    /// Slope of `log E_j^2` against `log theta^j`.
    pub decay_exponent: Option<f64>,
    /// `max_j E_j^2 / (E_0^2 theta^{j * exponent})`.
    pub constant: Option<f64>,
}

impl DecayRun {
    /// Profile of the last completed decay step, centered at the run's center.
    pub fn limit(&self) -> Result<CylindricalProfile, DecayError> {
        let rec = self
            .steps
            .iter()
            .rev()
            .find(|s| s.outcome == StepOutcome::Decay)
            .ok_or_else(|| DecayError::InvalidInput("run has no decay step".into()))?;
        Ok(CylindricalProfile::from_record(&rec.profile)?.with_center(self.center.clone())?)
    }

    pub fn excesses(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| s.outcome == StepOutcome::Decay).map(|s| s.excess).collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.ratio).collect()
    }

    /// Every step decayed and the run reached `j_max`.
    pub fn is_pure_decay(&self) -> bool {
        self.stop == StopReason::MaxSteps && self.steps.iter().all(|s| s.outcome == StepOutcome::Decay)
    }

    /// CSV with columns `j,scale,excess,ratio,drift`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("j,scale,excess,ratio,drift\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.steps {
            writeln!(s, "{},{:e},{:e},{},{}", r.j, r.scale, r.excess, opt(r.ratio), opt(r.drift)).unwrap();
        }
        s
    }
}

/// Runs the gap/decay alternative at scales `theta^j` about `z`, starting
/// from a profile fitted to `u` on `B_1(z)` from `guess`.
pub fn iterate<F: TwoValuedField + ?Sized>(
    u: &F,
    z: &[f64],
    guess: &CylindricalProfile,
    opts: &DecayOptions,
) -> Result<DecayRun, DecayError> {
    let n = u.dim();
    if z.len() != n || guess.dim() != n {
        return Err(DecayError::InvalidInput("center and profile must match the field dimension".into()));
    }
    if !(opts.theta > 0.0 && opts.theta < 0.25) {
        return Err(DecayError::InvalidInput(format!("scale ratio {} outside (0, 1/4)", opts.theta)));
    }
    let alpha = guess.alpha();
    let delta0 = opts.delta0.unwrap_or(opts.theta / 2.0);
    let zero = vec![0.0; n];
    let fit0 = fit_profile(u, &guess.with_center(z.to_vec())?, opts.tilt_bound, 1.0, opts.level)?;
    let mut steps = vec![DecayStepRecord {
        j: 0,
        scale: 1.0,
        profile: fit0.profile.with_center(zero.clone())?.to_record(),
        excess: fit0.excess,
        ratio: None,
        drift: None,
        outcome: StepOutcome::Decay,
    }];
    let mut phi_local = fit0.profile.with_center(zero.clone())?;
    let mut stop = StopReason::MaxSteps;
    for j in 1..=opts.j_max {
        let s_prev = opts.theta.powi(j as i32 - 1);
        let u_prev = Transformed::new(u, z.to_vec(), s_prev, s_prev.powf(-alpha));
        if opts.gap_check {
            let dopts = opts.detect.clone().unwrap_or_else(|| DetectOptions::new(n));
            let report = detect_branch_set(&u_prev, &dopts)?;
            if let Some(y0) = gap_probe(&report, &phi_local, delta0, alpha) {
                steps.push(DecayStepRecord {
                    j,
                    scale: s_prev,
                    profile: phi_local.to_record(),
                    excess: steps[steps.len() - 1].excess,
                    ratio: None,
                    drift: None,
                    outcome: StepOutcome::Gap { y0, delta0 },
                });
                stop = StopReason::Gap;
                break;
            }
        }
        let scale = opts.theta.powi(j as i32);
        if scale < opts.min_scale {
            stop = StopReason::Truncated(format!("scale {scale:e} below resolution {:e}", opts.min_scale));
            break;
        }
        let step = match decay_step(&u_prev, &phi_local, opts.theta, opts.tilt_bound, opts.level) {
            Ok(s) => s,
            Err(e) => {
                stop = StopReason::FitFailure(e.to_string());
                break;
            }
        };
        let drift = excess(&step.profile, &phi_local, &zero, 1.0, opts.level);
        steps.push(DecayStepRecord {
            j,
            scale,
            profile: step.profile.to_record(),
            excess: step.excess_after,
            ratio: (step.excess_before > 0.0).then_some(step.ratio),
            drift: Some(drift),
            outcome: StepOutcome::Decay,
        });
        phi_local = step.profile;
        let u_j = Transformed::new(u, z.to_vec(), scale, scale.powf(-alpha));
        let size = l2_norm_sq(&u_j, &zero, 1.0, opts.level);
        if step.excess_after > 0.0 && step.excess_after < opts.floor * size {
            stop = StopReason::Truncated("excess reached the roundoff floor".into());
            break;
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = steps
        .iter()
        .filter(|s| s.outcome == StepOutcome::Decay)
        .map(|s| (s.scale, s.excess))
        .unzip();
    let decay_exponent = middle_slope(&xs, &ys);
    let constant = decay_exponent.filter(|_| ys[0] > 0.0).map(|p| {
        xs.iter().zip(&ys).map(|(x, y)| y / (ys[0] * x.powf(p))).fold(0.0, f64::max)
    });
    Ok(DecayRun { center: z.to_vec(), theta: opts.theta, alpha, steps, stop, decay_exponent, constant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingOptions {
    /// Radius of the ball about the origin on which `u` is defined.
    pub domain_radius: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub count: usize,
    pub level: QuadLevel,
    /// Slack of the monotonicity test.
    pub slack: f64,
}

impl Default for PinchingOptions {
    fn default() -> Self {
        Self { domain_radius: 4.0, rho_min: 0.05, rho_max: 2.0, count: 12, level: QuadLevel::MEDIUM, slack: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    pub x1: Vec<f64>,
    pub alpha: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_rho (N(rho) - alpha)`.
    pub max_excess: f64,
    pub min_excess: f64,
    /// `eps^2`.
    pub bound: f64,
    pub within_bound: bool,
    pub monotone: bool,
}

/// `N_{u,X1}(rho)` on a geometric range of radii with `B_rho(X1)` inside the
/// domain ball, compared with `alpha` and `alpha + eps^2`.
pub fn pinching_check<F: TwoValuedField + ?Sized>(
    u: &F,
    x1: &[f64],
    alpha: f64,
    eps: f64,
    opts: &PinchingOptions,
) -> Result<PinchingReport, DecayError> {
    let dist = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dist + opts.rho_max > opts.domain_radius {
        return Err(DecayError::InvalidInput(format!(
            "domain radius {} too small for |X1| + rho_max = {}",
            opts.domain_radius,
            dist + opts.rho_max
        )));
    }
    if opts.count < 3 || !(opts.rho_min > 0.0 && opts.rho_min < opts.rho_max) {
        return Err(DecayError::InvalidInput("need at least 3 radii with 0 < rho_min < rho_max".into()));
    }
    let q = (opts.rho_max / opts.rho_min).powf(1.0 / (opts.count - 1) as f64);
    let radii: Vec<f64> = (0..opts.count).map(|i| opts.rho_min * q.powi(i as i32)).collect();
    let prof = frequency_profile(u, x1, &radii, opts.level)?;
    let mono = check_monotonicity(&prof, opts.slack)?;
    let ex: Vec<f64> = prof.n.iter().map(|v| v - alpha).collect();
    let max_excess = ex.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_excess = ex.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(PinchingReport {
        x1: x1.to_vec(),
        alpha,
        radii,
        values: prof.n,
        max_excess,
        min_excess,
        bound: eps * eps,
        within_bound: max_excess < eps * eps,
        monotone: mono.passed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticTwoValuedField;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exact_profile_has_zero_ratio() {
        let phi = CylindricalProfile::new(2, vec![c(0.8, 0.3)], 1).unwrap();
        let s = decay_step(&phi, &phi, 0.125, 0.3, QuadLevel::COARSE).unwrap();
        assert_eq!(s.excess_before, 0.0);
        assert_eq!(s.ratio, 0.0);
    }

    #[test]
    fn ratio_follows_extra_homogeneity() {
        // a degree alpha + q term shrinks by theta^{2q} relative to the profile
        let c0 = c(1.0, 0.0);
        let phi = CylindricalProfile::new(2, vec![c0], 1).unwrap();
        let theta = 0.125;
        for (extra_k, q) in [(3u32, 1.0), (5, 2.0)] {
            for t in [1e-2, 1e-3] {
                let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c0], 1), (vec![c(t, 0.0)], extra_k)]).unwrap();
                let s = decay_step(&u, &phi, theta, 0.3, QuadLevel::MEDIUM).unwrap();
                let expect = theta.powf(2.0 * q);
                assert!((s.ratio / expect - 1.0).abs() < 1e-6, "k={extra_k} t={t}: {} vs {expect}", s.ratio);
            }
        }
    }

    #[test]
    fn exact_profile_run_has_zero_excess() {
        let phi = CylindricalProfile::new(3, vec![c(1.0, 0.0)], 1).unwrap();
        let opts = DecayOptions { j_max: 3, level: QuadLevel::COARSE, ..Default::default() };
        let run = iterate(&phi, &[0.0; 3], &phi, &opts).unwrap();
        assert!(matches!(run.stop, StopReason::MaxSteps | StopReason::Truncated(_)), "{:?}", run.stop);
        assert!(run.excesses().iter().all(|e| *e < 1e-28), "{:?}", run.excesses());
    }

    #[test]
    fn perturbed_profile_run_converges() {
        let c0 = c(0.6, -0.8);
        let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c0], 1), (vec![c(0.01, 0.02)], 3)]).unwrap();
        let guess = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        let run = iterate(&u, &[0.0, 0.0], &guess, &DecayOptions::default()).unwrap();
        assert!(run.is_pure_decay(), "{:?}", run.stop);
        for r in run.ratios() {
            assert!((r / 0.125f64.powi(2) - 1.0).abs() < 0.2, "{r}");
        }
        let lim = run.limit().unwrap();
        let d = (lim.c()[0] - c0).norm().min((lim.c()[0] + c0).norm());
        assert!(d < 1e-4, "{:?}", lim.c());
        assert!((run.decay_exponent.unwrap() - 2.0).abs() < 0.05);
        assert!(run.to_csv().starts_with("j,scale,excess,ratio,drift\n"));
    }

    #[test]
    fn gap_stops_the_run() {
        // branch points at +-0.3: the center is far from every high-frequency point
        let u = AnalyticTwoValuedField::two_point_branch(2, 0.3).unwrap();
        let guess = CylindricalProfile::new(2, vec![c(1.0, 0.0), c(0.0, -1.0)], 1).unwrap();
        let opts = DecayOptions { gap_check: true, ..Default::default() };
        let run = iterate(&u, &[0.0, 0.0], &guess, &opts).unwrap();
        assert_eq!(run.stop, StopReason::Gap);
        assert!(matches!(run.steps.last().unwrap().outcome, StepOutcome::Gap { .. }));
    }

    #[test]
    fn theta_out_of_range_is_rejected() {
        let phi = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        let opts = DecayOptions { theta: 0.3, ..Default::default() };
        assert!(iterate(&phi, &[0.0, 0.0], &phi, &opts).is_err());
    }

    #[test]
    fn pinching_for_homogeneous_and_translated_centers() {
        let u = AnalyticTwoValuedField::cylindrical(2, vec![c(1.0, 0.0)], 3).unwrap();
        let opts = PinchingOptions::default();
        let rep = pinching_check(&u, &[0.0, 0.0], 1.5, 0.1, &opts).unwrap();
        assert!(rep.max_excess.abs() < 1e-9 && rep.min_excess.abs() < 1e-9);
        assert!(rep.within_bound && rep.monotone);

        let off = pinching_check(&u, &[0.3, 0.0], 1.5, 0.1, &opts).unwrap();
        assert!(off.max_excess <= 1e-9, "{:?}", off.values);
        assert!(off.monotone);
        assert!(off.values.last().unwrap() > &off.values[0]);
        assert!((off.values.last().unwrap() - 1.5).abs() < 0.2);

        let far = PinchingOptions { domain_radius: 1.0, ..opts };
        assert!(pinching_check(&u, &[0.3, 0.0], 1.5, 0.1, &far).is_err());
    }

    #[test]
    fn perturbed_field_stays_within_pinching_bound() {
        let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c(1.0, 0.0)], 1), (vec![c(1e-3, 0.0)], 3)]).unwrap();
        let opts = PinchingOptions { rho_max: 1.0, ..Default::default() };
        let rep = pinching_check(&u, &[0.0, 0.0], 0.5, 0.05, &opts).unwrap();
        assert!(rep.min_excess > 0.0);
        assert!(rep.within_bound, "{}", rep.max_excess);
    }
}

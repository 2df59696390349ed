//! Energy `D`, height `H` and frequency `N = D / H` by quadrature, with
//! checks of the variational identities, monotonicity, doubling, and the
//! radial monotonicity formula for `rho^{-2 alpha} (D - alpha H)`.

use crate::fields::{FieldError, PairGradient, TwoValuedField};
use crate::pairspace::{dot, UnorderedPair};
use crate::quadrature::{ball_nodes, integrate, integrate_vec, sphere_nodes, QuadLevel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrequencyError {
    #[error("height vanishes (H = {height:e}) at radius {radius}")]
    DegenerateHeight { radius: f64, height: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `sum over sheets of u_s . (Du_s v)` and `|Du v|^2` for a direction `v`.
fn radial_terms(p: &UnorderedPair, g: &PairGradient, v: &[f64]) -> (f64, f64, f64) {
    let n = v.len();
    let m = p.dim();
    let mut u_dr = 0.0;
    let mut dr_sq = 0.0;
    for (a, gs) in [(&p.a1, &g.g1), (&p.a2, &g.g2)] {
        for k in 0..m {
            let d: f64 = (0..n).map(|i| gs[k * n + i] * v[i]).sum();
            u_dr += a[k] * d;
            dr_sq += d * d;
        }
    }
    (p.norm_sq(), u_dr, dr_sq)
}

fn unit_from(x: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let r = dot(&d, &d).sqrt();
    (d.iter().map(|v| v / r).collect(), r)
}

/// `integral over B_rho(Y) of |Du|^2`; nodes where the gradient is singular
/// contribute nothing (they have measure zero).
pub fn dirichlet_integral<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], rho: f64, level: QuadLevel) -> f64 {
    let nodes = ball_nodes(y, rho, level);
    integrate(&nodes, u.dim(), |x, _| u.eval_gradient(x).map(|g| g.norm_sq()).unwrap_or(0.0))
}

/// `integral over dB_rho(Y) of |u|^2`.
pub fn height_integral<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], rho: f64, level: QuadLevel) -> f64 {
    let nodes = sphere_nodes(y, rho, level);
    integrate(&nodes, u.dim(), |x, _| u.eval(x).norm_sq())
}

/// `(D(rho), H(rho))`.
pub fn energy_and_height<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], rho: f64, level: QuadLevel) -> (f64, f64) {
    let n = u.dim() as f64;
    (
        rho.powf(2.0 - n) * dirichlet_integral(u, y, rho, level),
        rho.powf(1.0 - n) * height_integral(u, y, rho, level),
    )
}

/// Per-radius table of `D`, `H` and `N` about a center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub n: Vec<f64>,
    pub level: QuadLevel,
}

/// Computes `D`, `H`, `N` at each radius (increasing, positive).
pub fn frequency_profile<F: TwoValuedField + ?Sized>(
    u: &F,
    y: &[f64],
    radii: &[f64],
    level: QuadLevel,
) -> Result<FrequencyProfile, FrequencyError> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FrequencyError::InvalidInput("radii must be positive and increasing".into()));
    }
    if y.len() != u.dim() {
        return Err(FrequencyError::InvalidInput("center dimension does not match the field".into()));
    }
    let dh: Vec<(f64, f64)> = radii.par_iter().map(|&r| energy_and_height(u, y, r, level)).collect();
    let rmax = *radii.last().unwrap();
    let nd = u.dim() as f64;
    let floor = 1e-14 * rmax.powf(-nd) * crate::fields::l2_norm_sq(u, y, rmax, level);
    let mut out = FrequencyProfile {
        center: y.to_vec(),
        radii: radii.to_vec(),
        d: Vec::new(),
        h: Vec::new(),
        n: Vec::new(),
        level,
    };
    for (&r, &(d, h)) in radii.iter().zip(&dh) {
        if !(h > floor) {
            return Err(FrequencyError::DegenerateHeight { radius: r, height: h });
        }
        out.d.push(d);
        out.h.push(h);
        out.n.push(d / h);
    }
    Ok(out)
}

/// Derivative of tabulated values by the three-point formula on a
/// nonuniform grid (one-sided at the ends).
pub(crate) fn nonuniform_derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let k = x.len();
    if k < 2 {
        return vec![0.0; k];
    }
    if k == 2 {
        let s = (f[1] - f[0]) / (x[1] - x[0]);
        return vec![s, s];
    }
    let three = |x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64, at: f64| {
        // derivative of the interpolating quadratic
        f0 * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + f1 * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + f2 * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    (0..k)
        .map(|i| {
            let j = i.clamp(1, k - 2);
            three(x[j - 1], x[j], x[j + 1], f[j - 1], f[j], f[j + 1], x[i])
        })
        .collect()
}

impl FrequencyProfile {
    pub fn dn_drho(&self) -> Vec<f64> {
        nonuniform_derivative(&self.radii, &self.n)
    }

    /// CSV with columns `rho,D,H,N,dN_drho`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,D,H,N,dN_drho\n");
        for (i, dn) in self.dn_drho().iter().enumerate() {
            writeln!(s, "{:e},{:e},{:e},{:e},{:e}", self.radii[i], self.d[i], self.h[i], self.n[i], dn).unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `(midpoint, secant slope of N)` between consecutive radii.
    pub slopes: Vec<(f64, f64)>,
    /// Radii where the slope is below `-slack * max(1, |N|)`.
    pub violations: Vec<(f64, f64)>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Secant slopes of `N` and the intervals where `N` decreases.
pub fn check_monotonicity(profile: &FrequencyProfile, slack: f64) -> Result<MonotonicityReport, FrequencyError> {
    if profile.radii.len() < 3 {
        return Err(FrequencyError::InvalidInput("monotonicity check needs at least 3 radii".into()));
    }
    let r = &profile.radii;
    let v = &profile.n;
    // secant slopes between consecutive radii, placed at midpoints
    let slopes: Vec<(f64, f64)> = (1..r.len())
        .map(|i| (0.5 * (r[i] + r[i - 1]), (v[i] - v[i - 1]) / (r[i] - r[i - 1])))
        .collect();
    let violations = slopes
        .iter()
        .zip(v)
        .filter(|((_, s), n)| *s < -slack * n.abs().max(1.0))
        .map(|(p, _)| *p)
        .collect();
    Ok(MonotonicityReport { slopes, violations })
}

/// The sphere integrals in the Cauchy-Schwarz form of `N'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchySchwarzTerms {
    /// `integral |u|^2`
    pub u_sq: f64,
    /// `integral R^2 |D_R u|^2`
    pub r2_dru_sq: f64,
    /// `integral R u . D_R u`
    pub r_u_dru: f64,
    /// `u_sq * r2_dru_sq - r_u_dru^2`, nonnegative by Cauchy-Schwarz
    pub gap: f64,
    /// `2 rho^{1-2n} gap / H^2`
    pub dn_drho: f64,
}

pub fn cauchy_schwarz_terms<F: TwoValuedField + ?Sized>(
    u: &F,
    y: &[f64],
    rho: f64,
    level: QuadLevel,
) -> Result<CauchySchwarzTerms, FrequencyError> {
    let n = u.dim();
    let nodes = sphere_nodes(y, rho, level);
    let v = integrate_vec(&nodes, n, 3, |x, r| {
        let (nu, _) = unit_from(x, y);
        match u.eval_with_gradient(x) {
            Ok((p, g)) => {
                let (a, b, c) = radial_terms(&p, &g, &nu);
                vec![a, r * b, r * r * c]
            }
            Err(_) => vec![0.0; 3],
        }
    });
    let (u_sq, r_u_dru, r2_dru_sq) = (v[0], v[1], v[2]);
    let h = rho.powf(1.0 - n as f64) * u_sq;
    if !(h > 0.0) {
        return Err(FrequencyError::DegenerateHeight { radius: rho, height: h });
    }
    let gap = u_sq * r2_dru_sq - r_u_dru * r_u_dru;
    let dn_drho = 2.0 * rho.powf(1.0 - 2.0 * n as f64) * gap / (h * h);
    Ok(CauchySchwarzTerms { u_sq, r2_dru_sq, r_u_dru, gap, dn_drho })
}

/// Both sides of the two-sided doubling bound for `rho^{-n} integral_{B_rho} |u|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub sigma: f64,
    pub rho: f64,
    /// `(sigma/rho)^{2 N(rho)} rho^{-n} integral_{B_rho} |u|^2`
    pub lower: f64,
    /// `sigma^{-n} integral_{B_sigma} |u|^2`
    pub middle: f64,
    /// `(sigma/rho)^{2 N_hat} rho^{-n} integral_{B_rho} |u|^2`
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// Evaluates the doubling inequalities with `frequency` as the estimate of
/// the frequency at `Y`. Both sides are allowed a relative slack `rel_tol`.
pub fn doubling_check<F: TwoValuedField + ?Sized>(
    u: &F,
    y: &[f64],
    sigma: f64,
    rho: f64,
    frequency: f64,
    rel_tol: f64,
    level: QuadLevel,
) -> Result<DoublingReport, FrequencyError> {
    if !(sigma > 0.0 && sigma <= rho) {
        return Err(FrequencyError::InvalidInput("doubling needs 0 < sigma <= rho".into()));
    }
    let n = u.dim() as f64;
    let (d, h) = energy_and_height(u, y, rho, level);
    if !(h > 0.0) {
        return Err(FrequencyError::DegenerateHeight { radius: rho, height: h });
    }
    let big = rho.powf(-n) * crate::fields::l2_norm_sq(u, y, rho, level);
    let middle = sigma.powf(-n) * crate::fields::l2_norm_sq(u, y, sigma, level);
    let q = sigma / rho;
    let lower = q.powf(2.0 * d / h) * big;
    let upper = q.powf(2.0 * frequency) * big;
    Ok(DoublingReport {
        sigma,
        rho,
        lower,
        middle,
        upper,
        lower_ok: lower <= middle * (1.0 + rel_tol),
        upper_ok: middle <= upper * (1.0 + rel_tol),
    })
}

/// The height ratio `H(sigma) / H(rho)`.
pub fn height_ratio<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], sigma: f64, rho: f64, level: QuadLevel) -> f64 {
    let n = u.dim() as f64;
    let hs = sigma.powf(1.0 - n) * height_integral(u, y, sigma, level);
    let hr = rho.powf(1.0 - n) * height_integral(u, y, rho, level);
    hs / hr
}

/// `zeta(X) = (1 - |X - c|^2 / s^2)^3` on `B_s(c)`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub support: f64,
}

impl TestFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        let q = crate::pairspace::dist_sq(x, &self.center) / (self.support * self.support);
        if q >= 1.0 {
            0.0
        } else {
            (1.0 - q).powi(3)
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let q = crate::pairspace::dist_sq(x, &self.center) / (self.support * self.support);
        if q >= 1.0 {
            return vec![0.0; x.len()];
        }
        let f = -6.0 * (1.0 - q).powi(2) / (self.support * self.support);
        x.iter().zip(&self.center).map(|(a, c)| f * (a - c)).collect()
    }
}

/// Residuals of the squash, squeeze and radial identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityResiduals {
    /// Max over test functions of `|int |Du|^2 zeta + int u^k D_i u^k D_i zeta|`.
    pub squash: f64,
    /// Max over test functions and vector fields `zeta e_j`, `zeta (X - c)` of
    /// `|int (|Du|^2 delta_ij / 2 - D_i u . D_j u) D_i zeta^j|`.
    pub squeeze: f64,
    /// `(rho, int_{B_rho} |Du|^2 - int_{dB_rho} u . D_R u)` about the domain center.
    pub radial: Vec<(f64, f64)>,
    /// Scale used for relative comparisons: `int_{B_1} |Du|^2` over the domain.
    pub energy_scale: f64,
}

/// Evaluates the three stationarity identities on the domain ball
/// `B_radius(center)`. Every test function support and radius must lie in it.
///
/// The domain center should lie on the singular axis of `u`: the rules are
/// graded toward it, and test functions centered elsewhere then converge
/// algebraically, limited by the smoothness of `zeta`.
pub fn stationarity_residuals<F: TwoValuedField + ?Sized>(
    u: &F,
    center: &[f64],
    radius: f64,
    tests: &[TestFunction],
    radii: &[f64],
    level: QuadLevel,
) -> Result<StationarityResiduals, FrequencyError> {
    let n = u.dim();
    for t in tests {
        let reach = crate::pairspace::dist_sq(&t.center, center).sqrt() + t.support;
        if t.center.len() != n || reach > radius {
            return Err(FrequencyError::InvalidInput(format!(
                "test function support B_{}({:?}) leaves the domain",
                t.support, t.center
            )));
        }
    }
    if radii.iter().any(|r| !(*r > 0.0 && *r <= radius)) {
        return Err(FrequencyError::InvalidInput("radii must lie in (0, radius]".into()));
    }
    let mut squash = 0.0f64;
    let mut squeeze = 0.0f64;
    // integrate over the whole domain ball so that the rule stays graded
    // toward the axis through its center
    let nodes = ball_nodes(center, radius, level);
    for t in tests {
        // squash: 1 value; squeeze: n constant fields + the dilation field
        let vals = integrate_vec(&nodes, n, 2 + n, |x, _| {
            let Ok((p, g)) = u.eval_with_gradient(x) else {
                return vec![0.0; 2 + n];
            };
            let z = t.value(x);
            let dz = t.gradient(x);
            let m = p.dim();
            let e = g.norm_sq();
            let mut u_du_dz = 0.0;
            // stress tensor T_ij = |Du|^2 delta_ij / 2 - D_i u . D_j u
            let mut tij = vec![0.0; n * n];
            for (a, gs) in [(&p.a1, &g.g1), (&p.a2, &g.g2)] {
                for k in 0..m {
                    for i in 0..n {
                        u_du_dz += a[k] * gs[k * n + i] * dz[i];
                        for j in 0..n {
                            tij[i * n + j] -= gs[k * n + i] * gs[k * n + j];
                        }
                    }
                }
            }
            for i in 0..n {
                tij[i * n + i] += 0.5 * e;
            }
            let mut out = vec![e * z + u_du_dz];
            // zeta^j = zeta e_j: D_i zeta^j = dz_i delta_{j,l}
            for l in 0..n {
                out.push((0..n).map(|i| tij[i * n + l] * dz[i]).sum());
            }
            // zeta^j = zeta (x_j - c_j): D_i zeta^j = dz_i (x_j - c_j) + zeta delta_ij
            let mut dil = 0.0;
            for i in 0..n {
                for j in 0..n {
                    dil += tij[i * n + j] * dz[i] * (x[j] - t.center[j]);
                }
                dil += tij[i * n + i] * z;
            }
            out.push(dil);
            out
        });
        squash = squash.max(vals[0].abs());
        for v in &vals[1..] {
            squeeze = squeeze.max(v.abs());
        }
    }
    let radial = radii
        .iter()
        .map(|&r| {
            let lhs = dirichlet_integral(u, center, r, level);
            let nodes = sphere_nodes(center, r, level);
            let rhs = integrate(&nodes, n, |x, _| {
                let (nu, _) = unit_from(x, center);
                u.eval_with_gradient(x).map(|(p, g)| radial_terms(&p, &g, &nu).1).unwrap_or(0.0)
            });
            (r, lhs - rhs)
        })
        .collect();
    let energy_scale = dirichlet_integral(u, center, radius, level);
    Ok(StationarityResiduals { squash, squeeze, radial, energy_scale })
}

/// One radius of the radial monotonicity identity for `rho^{-2 alpha}(D - alpha H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewMonotonicityRow {
    pub rho: f64,
    /// `d/drho (rho^{-2 alpha} (D - alpha H))` by finite differences
    pub lhs: f64,
    /// `2 rho^{2-n} int_{dB_rho} |d_R (u / R^alpha)|^2`
    pub rhs: f64,
    pub residual: f64,
}

fn scaled_excess_energy<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], alpha: f64, rho: f64, level: QuadLevel) -> f64 {
    let (d, h) = energy_and_height(u, y, rho, level);
    rho.powf(-2.0 * alpha) * (d - alpha * h)
}

/// `int_{dB_rho(Y)} |d_R (u / R^alpha)|^2`.
pub fn radial_quotient_sphere<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], alpha: f64, rho: f64, level: QuadLevel) -> f64 {
    let n = u.dim();
    let nodes = sphere_nodes(y, rho, level);
    integrate(&nodes, n, |x, r| radial_quotient_density(u, y, alpha, x, r))
}

/// `|d_R (u / R^alpha)|^2 = R^{-2 alpha} |D_R u - alpha u / R|^2` at `x`, or 0 where singular.
fn radial_quotient_density<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], alpha: f64, x: &[f64], r: f64) -> f64 {
    let (nu, _) = unit_from(x, y);
    let Ok((p, g)) = u.eval_with_gradient(x) else {
        return 0.0;
    };
    let n = nu.len();
    let m = p.dim();
    let mut s = 0.0;
    for (a, gs) in [(&p.a1, &g.g1), (&p.a2, &g.g2)] {
        for k in 0..m {
            let d: f64 = (0..n).map(|i| gs[k * n + i] * nu[i]).sum();
            let q = d - alpha * a[k] / r;
            s += q * q;
        }
    }
    r.powf(-2.0 * alpha) * s
}

/// Both sides of the radial monotonicity identity at each radius; the left
/// side uses a five-point difference with step `1e-3 rho`.
pub fn new_monotonicity_residual<F: TwoValuedField + ?Sized>(
    u: &F,
    y: &[f64],
    alpha: f64,
    radii: &[f64],
    level: QuadLevel,
) -> Result<Vec<NewMonotonicityRow>, FrequencyError> {
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(FrequencyError::InvalidInput("radii must be positive".into()));
    }
    let n = u.dim() as f64;
    radii
        .par_iter()
        .map(|&rho| {
            let h = 1e-3 * rho;
            let f = |r: f64| scaled_excess_energy(u, y, alpha, r, level);
            let lhs = (f(rho - 2.0 * h) - 8.0 * f(rho - h) + 8.0 * f(rho + h) - f(rho + 2.0 * h)) / (12.0 * h);
            let rhs = 2.0 * rho.powf(2.0 - n) * radial_quotient_sphere(u, y, alpha, rho, level);
            let hh = rho.powf(1.0 - n) * height_integral(u, y, rho, level);
            if !(hh > 0.0) {
                return Err(FrequencyError::DegenerateHeight { radius: rho, height: hh });
            }
            Ok(NewMonotonicityRow { rho, lhs, rhs, residual: lhs - rhs })
        })
        .collect()
}

/// `int_{B_gamma(Y)} R^{2-n} |d_R (u / R^alpha)|^2`.
pub fn radial_quotient_energy<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], alpha: f64, gamma: f64, level: QuadLevel) -> f64 {
    let n = u.dim();
    let nodes = ball_nodes(y, gamma, level);
    integrate(&nodes, n, |x, r| r.powf(2.0 - n as f64) * radial_quotient_density(u, y, alpha, x, r))
}

/// `int_{B_gamma(Y)} |D_y u|^2`, the energy in the axis directions `x_3..x_n`.
pub fn axial_energy<F: TwoValuedField + ?Sized>(u: &F, y: &[f64], gamma: f64, level: QuadLevel) -> f64 {
    let n = u.dim();
    let m = u.codim();
    let nodes = ball_nodes(y, gamma, level);
    integrate(&nodes, n, |x, _| {
        let Ok(g) = u.eval_gradient(x) else {
            return 0.0;
        };
        let mut s = 0.0;
        for gs in [&g.g1, &g.g2] {
            for k in 0..m {
                for i in 2..n {
                    s += gs[k * n + i] * gs[k * n + i];
                }
            }
        }
        s
    })
}

/// Extrapolated frequency at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub value: f64,
    pub uncertainty: f64,
    /// The sampled tail of `N` decreased by more than the slack.
    pub low_confidence: bool,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

/// Estimates `lim_{rho -> 0} N(rho)` from radii `rho0 2^{-i}`, `i < count`,
/// with an Aitken step on the three smallest radii. The uncertainty is the
/// distance between the extrapolated and the smallest-radius value plus a
/// floor of `1e-9`.
pub fn frequency_at_point<F: TwoValuedField + ?Sized>(
    u: &F,
    y: &[f64],
    rho0: f64,
    count: usize,
    level: QuadLevel,
) -> Result<FrequencyEstimate, FrequencyError> {
    if count < 3 || !(rho0 > 0.0) {
        return Err(FrequencyError::InvalidInput("need rho0 > 0 and at least 3 radii".into()));
    }
    let mut radii: Vec<f64> = (0..count).map(|i| rho0 * 0.5f64.powi(i as i32)).collect();
    radii.reverse();
    let prof = frequency_profile(u, y, &radii, level)?;
    let v = &prof.n;
    let (a, b, c) = (v[2], v[1], v[0]); // decreasing radius order a, b, c
    let denom = c - 2.0 * b + a;
    let mut value = c;
    if denom.abs() > 1e-14 {
        let aitken = c - (c - b) * (c - b) / denom;
        // accept the step only when it stays within a few increments of the data
        if (aitken - c).abs() <= 4.0 * (c - b).abs().max(1e-12) {
            value = aitken;
        }
    }
    let slack = 1e-8;
    let low_confidence = v.windows(2).any(|w| w[1] < w[0] - slack * w[0].abs().max(1.0));
    Ok(FrequencyEstimate {
        value,
        uncertainty: (value - c).abs() + 1e-9,
        low_confidence,
        radii,
        values: prof.n,
    })
}

//! The small-`r` boundary term for `alpha = 1/2` and the scale-by-scale
//! decay check of cover functions against `L`.

use super::{cover_integrate, cover_nodes, project_l, CoverFunction, LBasis, LProjection, Remainder, SpectralError};
use crate::quadrature::{pairwise_sum, QuadLevel};
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTermOptions {
    /// Largest radius of the sequence `r0 2^{-j}`.
    pub r0: f64,
    pub count: usize,
    /// Axis point where the `y_p` derivative is taken.
    pub y0: Vec<f64>,
    /// Relative radial step of the mixed difference.
    pub h_r: f64,
    pub h_y: f64,
    pub angular_samples: usize,
}

impl BoundaryTermOptions {
    pub fn new(n: usize) -> Self {
        Self { r0: 0.2, count: 8, y0: vec![0.0; n.saturating_sub(2)], h_r: 0.05, h_y: 1e-2, angular_samples: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTermEstimate {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: f64,
    pub uncertainty: f64,
    /// Successive values stopped contracting before the smallest radius.
    pub low_confidence: bool,
}

impl BoundaryTermEstimate {
    /// `|limit| <= uncertainty + abs_tol`.
    pub fn vanishes(&self, abs_tol: f64) -> bool {
        self.limit.abs() <= self.uncertainty + abs_tol
    }
}

/// `d^2/(dr dy_p) of r int_0^{4pi} w . D_i phi d theta` at `(r, y0)` for
/// `r = r0 2^{-j}`, by a centred mixed difference. The limit is the value at
/// the smallest radius; the uncertainty is its distance to the previous one.
/// `p` counts axis coordinates from 0, `i` is 1 or 2.
pub fn half_case_boundary_term<W: CoverFunction + ?Sized>(
    w: &W,
    basis: &LBasis,
    p: usize,
    i: usize,
    opts: &BoundaryTermOptions,
) -> Result<BoundaryTermEstimate, SpectralError> {
    let n = basis.dim();
    if (basis.alpha() - 0.5).abs() > 1e-12 {
        return Err(SpectralError::InvalidInput("the boundary term is defined for alpha = 1/2".into()));
    }
    if n < 3 || p >= n - 2 || opts.y0.len() != n - 2 {
        return Err(SpectralError::InvalidInput("needs an axis coordinate y_p".into()));
    }
    if !(i == 1 || i == 2) || opts.count < 2 || opts.angular_samples < 8 {
        return Err(SpectralError::InvalidInput("i must be 1 or 2, with at least two radii".into()));
    }
    let k = opts.angular_samples;
    let thetas: Vec<f64> = (0..k).map(|j| 4.0 * PI * j as f64 / k as f64).collect();
    let q = |r: f64, y: &[f64]| -> f64 {
        let terms: Vec<f64> = thetas
            .par_iter()
            .map(|&t| {
                let a = w.eval(r, t, y);
                let b = basis.d_phi(i, r, t);
                a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
            })
            .collect();
        r * pairwise_sum(&terms) * 4.0 * PI / k as f64
    };
    let mut radii = Vec::with_capacity(opts.count);
    let mut values = Vec::with_capacity(opts.count);
    for j in 0..opts.count {
        let r = opts.r0 * 0.5f64.powi(j as i32);
        let hr = opts.h_r * r;
        let hy = opts.h_y;
        let mut yp = opts.y0.clone();
        let mut ym = opts.y0.clone();
        yp[p] += hy;
        ym[p] -= hy;
        let v = (q(r + hr, &yp) - q(r + hr, &ym) - q(r - hr, &yp) + q(r - hr, &ym)) / (4.0 * hr * hy);
        radii.push(r);
        values.push(v);
    }
    let c = values.len();
    let limit = values[c - 1];
    let d_last = (values[c - 1] - values[c - 2]).abs();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = 1e-12 * scale.max(1.0);
    let low_confidence = c < 3 || (d_last > floor && d_last > (values[c - 2] - values[c - 3]).abs());
    Ok(BoundaryTermEstimate { radii, values, limit, uncertainty: d_last + floor, low_confidence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheckOptions {
    /// The decay is measured from radius 1 down to `theta`.
    pub theta: f64,
    /// Scales `rho` at which the hypotheses are checked.
    pub scales: Vec<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub sigma: f64,
    pub level: QuadLevel,
}

impl Default for DecayCheckOptions {
    fn default() -> Self {
        Self {
            theta: 1.0 / 16.0,
            scales: vec![0.25, 0.125, 1.0 / 16.0],
            beta1: None,
            beta2: None,
            sigma: 0.5,
            level: QuadLevel::MEDIUM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub rho: f64,
    pub projection: LProjection,
    /// `rho^{-n-2 alpha} int_{B_rho} |w_rho|^2`.
    pub normalized_remainder: f64,
    /// `int_{B_rho} R^{2-n} |d/dR (w / R^alpha)|^2`.
    pub radial_outer: f64,
    /// Same over `B_{rho/4}`.
    pub radial_inner: f64,
    pub radial_ratio: f64,
    /// `radial_inner / normalized_remainder`, the quantity bounded by `beta_2`.
    pub radial_bound_ratio: f64,
    /// Largest weighted-excess ratio over the sampled axis points, bounded by `beta_1`.
    pub weighted_ratio: f64,
    /// Largest `(|lambda_1|^2 + |lambda_2|^2) / normalized_remainder`, bounded by `beta_2`.
    pub lambda_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheckReport {
    pub rows: Vec<ScaleRow>,
    pub beta1: f64,
    pub beta2: f64,
    /// `w` lies in `L` up to roundoff: every left side vanishes.
    pub trivial: bool,
    pub hypothesis_violation: Option<String>,
    /// `theta^{-n-2 alpha} int_{B_theta} |w_theta|^2`.
    pub lhs: Option<f64>,
    /// `int_{B_1} |w_1|^2`.
    pub rhs: Option<f64>,
    /// Largest per-scale radial ratio.
    pub gamma: Option<f64>,
    /// Least-squares slope of `log normalized_remainder` against `log rho`.
    pub decay_exponent: Option<f64>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `d/dR (f / R^alpha)` along the ray through a cover point, by a centred
/// difference in the dilation factor.
fn radial_derivative<W: CoverFunction + ?Sized>(w: &W, alpha: f64, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
    let rr = (r * r + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let h = 1e-4;
    let at = |s: f64| -> Vec<f64> {
        let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
        let scale = (s * rr).powf(-alpha);
        w.eval(s * r, theta, &ys).into_iter().map(|v| v * scale).collect()
    };
    let p = at(1.0 + h);
    let m = at(1.0 - h);
    p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h * rr)).collect()
}

fn radial_integral<W: CoverFunction + ?Sized>(w: &W, alpha: f64, rho: f64, level: QuadLevel) -> f64 {
    let n = w.dim();
    let nodes = cover_nodes(&vec![0.0; n], rho, level);
    cover_integrate(&nodes, |nd| {
        if nd.dist == 0.0 {
            return 0.0;
        }
        let d = radial_derivative(w, alpha, nd.r, nd.theta, nd.y(n));
        nd.dist.powi(2 - n as i32) * d.iter().map(|v| v * v).sum::<f64>()
    })
}

/// Fits `lambda_1, lambda_2` minimizing the weighted integral over
/// `B_{rho/4}((0, z))` and returns `(weighted integral, |lambda|^2)`.
fn weighted_excess<W: CoverFunction + ?Sized>(
    w: &W,
    basis: &LBasis,
    rho: f64,
    z: &[f64],
    sigma: f64,
    level: QuadLevel,
) -> (f64, f64) {
    let n = basis.dim();
    let alpha = basis.alpha();
    let mut center = vec![0.0; 2];
    center.extend_from_slice(z);
    let nodes = cover_nodes(&center, rho / 4.0, level);
    let expo = n as f64 + 2.0 * alpha - sigma;
    let per: Vec<[f64; 6]> = nodes
        .par_iter()
        .map(|nd| {
            if nd.dist == 0.0 {
                return [0.0; 6];
            }
            let y = nd.y(n);
            let wt = nd.w * nd.dist.powf(-expo);
            let a = w.eval(nd.r, nd.theta, y);
            let d1: Vec<f64> = basis.d_phi(1, nd.r, nd.theta).iter().map(|v| v * rho).collect();
            let d2: Vec<f64> = basis.d_phi(2, nd.r, nd.theta).iter().map(|v| v * rho).collect();
            let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
            [
                wt * dot(&d1, &d1),
                wt * dot(&d1, &d2),
                wt * dot(&d2, &d2),
                wt * dot(&d1, &a),
                wt * dot(&d2, &a),
                wt * dot(&a, &a),
            ]
        })
        .collect();
    let s: Vec<f64> = (0..6).map(|j| pairwise_sum(&per.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
    let g = Matrix2::new(s[0], s[1], s[1], s[2]);
    let b = Vector2::new(s[3], s[4]);
    let lam = g.try_inverse().map(|gi| gi * b).unwrap_or_else(Vector2::zeros);
    let value = (s[5] - 2.0 * lam.dot(&b) + (lam.transpose() * g * lam)[(0, 0)]).max(0.0);
    (rho.powf(expo) * value, lam.norm_squared())
}

fn axis_samples(n: usize, rho: f64) -> Vec<Vec<f64>> {
    let d = n - 2;
    let mut out = vec![vec![0.0; d]];
    for j in 0..d {
        for s in [-1.0, 1.0] {
            let mut z = vec![0.0; d];
            z[j] = s * rho / 4.0;
            out.push(z);
        }
    }
    out
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Evaluates the hypotheses of the decay estimate scale by scale and, when
/// they hold, both sides of
/// `theta^{-n-2a} int_{B_theta} |w_theta|^2 <= C theta^{2mu} int_{B_1} |w_1|^2`.
/// Unset `beta1`, `beta2` default to the largest observed ratio plus 50%.
pub fn decay_check<W: CoverFunction + ?Sized>(
    w: &W,
    basis: &LBasis,
    opts: &DecayCheckOptions,
) -> Result<DecayCheckReport, SpectralError> {
    let n = basis.dim();
    let alpha = basis.alpha();
    if !(opts.theta > 0.0 && opts.theta < 1.0) || opts.scales.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(SpectralError::InvalidInput("theta and scales must lie in (0, 1]".into()));
    }
    if !(opts.sigma > 0.0 && opts.sigma < 1.0) {
        return Err(SpectralError::InvalidInput("sigma must lie in (0, 1)".into()));
    }
    let norm = |rho: f64| rho.powf(-(n as f64) - 2.0 * alpha);
    let outer = project_l(w, basis, 1.0, opts.level)?;
    let at_theta = project_l(w, basis, opts.theta, opts.level)?;
    let tiny = 1e-20 * outer.norm_sq_w.max(f64::MIN_POSITIVE);
    let trivial = outer.norm_sq_remainder <= tiny;

    let mut rows = Vec::with_capacity(opts.scales.len());
    for &rho in &opts.scales {
        let proj = project_l(w, basis, rho, opts.level)?;
        let rem = Remainder::new(w, proj.psi(basis));
        let normalized = norm(rho) * proj.norm_sq_remainder;
        let (radial_outer, radial_inner, weighted, lam) = if trivial {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            let ro = radial_integral(&rem, alpha, rho, opts.level);
            let ri = radial_integral(&rem, alpha, rho / 4.0, opts.level);
            let mut wmax = 0.0f64;
            let mut lmax = 0.0f64;
            for z in axis_samples(n, rho) {
                let (v, l) = weighted_excess(&rem, basis, rho, &z, opts.sigma, opts.level);
                wmax = wmax.max(ratio(v, proj.norm_sq_remainder));
                lmax = lmax.max(ratio(l, normalized));
            }
            (ro, ri, wmax, lmax)
        };
        rows.push(ScaleRow {
            rho,
            normalized_remainder: normalized,
            radial_outer,
            radial_inner,
            radial_ratio: ratio(radial_inner, radial_outer),
            radial_bound_ratio: ratio(radial_inner, normalized),
            weighted_ratio: weighted,
            lambda_ratio: lam,
            projection: proj,
        });
    }

    let observed1 = rows.iter().map(|r| r.weighted_ratio).fold(0.0, f64::max);
    let observed2 = rows.iter().map(|r| r.radial_bound_ratio.max(r.lambda_ratio)).fold(0.0, f64::max);
    let beta1 = opts.beta1.unwrap_or(1.5 * observed1);
    let beta2 = opts.beta2.unwrap_or(1.5 * observed2);
    let mut violation = None;
    for r in &rows {
        if !r.weighted_ratio.is_finite() || r.weighted_ratio > beta1 {
            violation = Some(format!("weighted excess ratio {:e} exceeds beta1 = {beta1:e} at rho = {}", r.weighted_ratio, r.rho));
        } else if !r.radial_bound_ratio.is_finite() || r.radial_bound_ratio > beta2 {
            violation =
                Some(format!("radial derivative ratio {:e} exceeds beta2 = {beta2:e} at rho = {}", r.radial_bound_ratio, r.rho));
        } else if !r.lambda_ratio.is_finite() || r.lambda_ratio > beta2 {
            violation = Some(format!("lambda ratio {:e} exceeds beta2 = {beta2:e} at rho = {}", r.lambda_ratio, r.rho));
        }
        if violation.is_some() {
            break;
        }
    }
    if violation.is_some() {
        return Ok(DecayCheckReport {
            rows,
            beta1,
            beta2,
            trivial,
            hypothesis_violation: violation,
            lhs: None,
            rhs: None,
            gamma: None,
            decay_exponent: None,
        });
    }
    let lhs = if trivial { 0.0 } else { norm(opts.theta) * at_theta.norm_sq_remainder };
    let rhs = outer.norm_sq_remainder;
    let gamma = rows.iter().map(|r| r.radial_ratio).fold(0.0, f64::max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.rho, r.normalized_remainder)).unzip();
    Ok(DecayCheckReport {
        rows,
        beta1,
        beta2,
        trivial,
        hypothesis_violation: None,
        lhs: Some(lhs),
        rhs: Some(rhs),
        gamma: Some(gamma),
        decay_exponent: if trivial { None } else { log_log_slope(&xs, &ys) },
    })
}

#[cfg(test)]
mod tests {
    use super::super::{CoverFn, GraphLift};
    use super::*;
    use crate::profiles::CylindricalProfile;
    use num_complex::Complex64;

    fn half_basis() -> LBasis {
        LBasis::new(3, vec![Complex64::new(1.0, 0.0)], 1).unwrap()
    }

    #[test]
    fn y_independent_mode_gives_exactly_zero() {
        let lb = half_basis();
        let w = CoverFn::new(3, 1, |r: f64, t: f64, _: &[f64]| vec![r.sqrt() * (t / 2.0).cos()]);
        let est = half_case_boundary_term(&w, &lb, 0, 1, &BoundaryTermOptions::new(3)).unwrap();
        assert!(est.values.iter().all(|v| *v == 0.0));
        assert!(est.vanishes(0.0));
    }

    #[test]
    fn axis_rotation_term_vanishes() {
        // D_1 phi y_1 lies in L; the bracket is y-linear but r-independent
        let lb = half_basis();
        let w = CoverFn::new(3, 1, |r: f64, t: f64, y: &[f64]| lb.element(2, r, t, y));
        for i in [1, 2] {
            let est = half_case_boundary_term(&w, &lb, 0, i, &BoundaryTermOptions::new(3)).unwrap();
            assert!(est.vanishes(1e-8), "i={i}: {:?}", est.values);
        }
    }

    #[test]
    fn axis_linear_control_is_detected() {
        // r y_1 D_1 phi: the bracket equals y_1 r int |D_1 phi|^2 = 2 pi alpha^2 y_1 r
        let lb = half_basis();
        let w = CoverFn::new(3, 1, |r: f64, t: f64, y: &[f64]| {
            lb.d_phi(1, r, t).into_iter().map(|v| v * r * y[0]).collect()
        });
        let est = half_case_boundary_term(&w, &lb, 0, 1, &BoundaryTermOptions::new(3)).unwrap();
        let expect = 2.0 * PI * 0.25;
        assert!((est.limit - expect).abs() < 1e-6, "{}", est.limit);
        assert!(!est.vanishes(1e-6));
        assert!(!est.low_confidence);
    }

    #[test]
    fn tilted_profile_blowup_vanishes() {
        let c = Complex64::new(1.0, 0.0);
        let phi = CylindricalProfile::new(3, vec![c], 1).unwrap();
        let t = 1e-4;
        let mut a = vec![0.0; 9];
        a[2] = t;
        a[6] = -t;
        let u = phi.with_a(a).unwrap();
        let w = GraphLift::difference(&u, &phi, 1.0 / t);
        let lb = LBasis::from_profile(&phi).unwrap();
        let opts = BoundaryTermOptions { r0: 0.1, count: 6, ..BoundaryTermOptions::new(3) };
        for i in [1, 2] {
            let est = half_case_boundary_term(&w, &lb, 0, i, &opts).unwrap();
            assert!(est.vanishes(1e-3), "i={i}: {est:?}");
        }
    }

    #[test]
    fn rejects_wrong_homogeneity_and_planar_domain() {
        let w = CoverFn::new(3, 1, |_: f64, _: f64, _: &[f64]| vec![0.0]);
        let lb = LBasis::new(3, vec![Complex64::new(1.0, 0.0)], 3).unwrap();
        assert!(half_case_boundary_term(&w, &lb, 0, 1, &BoundaryTermOptions::new(3)).is_err());
        let planar = LBasis::new(2, vec![Complex64::new(1.0, 0.0)], 1).unwrap();
        let w2 = CoverFn::new(2, 1, |_: f64, _: f64, _: &[f64]| vec![0.0]);
        assert!(half_case_boundary_term(&w2, &planar, 0, 1, &BoundaryTermOptions::new(2)).is_err());
    }

    #[test]
    fn member_of_l_is_trivial() {
        let lb = half_basis();
        let w = lb.combination(vec![1.0, -0.5, 0.3, 0.2]);
        let opts = DecayCheckOptions { level: QuadLevel::COARSE, ..Default::default() };
        let rep = decay_check(&w, &lb, &opts).unwrap();
        assert!(rep.trivial);
        assert_eq!(rep.lhs, Some(0.0));
        assert!(rep.rows.iter().all(|r| r.normalized_remainder < 1e-20));
    }

    #[test]
    fn perturbed_member_has_constant_radial_ratio() {
        // the remainder is homogeneous of degree alpha + 1, so every
        // radial ratio is 4^{-2} and the normalized remainder scales like rho^2
        for n in [2usize, 3] {
            let lb = LBasis::new(n, vec![Complex64::new(1.0, 0.0)], 1).unwrap();
            let mut coeffs = vec![0.0; lb.len()];
            coeffs[0] = 1.0;
            coeffs[1] = 0.4;
            let psi = lb.combination(coeffs);
            let w = CoverFn::new(n, 1, move |r: f64, t: f64, y: &[f64]| {
                vec![psi.eval(r, t, y)[0] + 0.1 * r.powf(1.5) * (1.5 * t).cos()]
            });
            let opts = DecayCheckOptions { level: QuadLevel::MEDIUM, ..Default::default() };
            let rep = decay_check(&w, &lb, &opts).unwrap();
            assert!(rep.hypothesis_violation.is_none());
            for r in &rep.rows {
                assert!((r.radial_ratio - 1.0 / 16.0).abs() < 1e-3, "n={n}: {}", r.radial_ratio);
            }
            let slope = rep.decay_exponent.unwrap();
            assert!((slope - 2.0).abs() < 1e-3, "n={n}: {slope}");
            assert!(rep.lhs.unwrap() < rep.rhs.unwrap());
        }
    }

    #[test]
    fn tight_beta_reports_violation() {
        let lb = LBasis::new(2, vec![Complex64::new(1.0, 0.0)], 1).unwrap();
        let w = CoverFn::new(2, 1, |r: f64, t: f64, _: &[f64]| vec![r.powf(1.5) * (1.5 * t).sin()]);
        let opts = DecayCheckOptions { beta2: Some(1e-6), level: QuadLevel::COARSE, ..Default::default() };
        let rep = decay_check(&w, &lb, &opts).unwrap();
        assert!(rep.hypothesis_violation.is_some());
        assert!(rep.lhs.is_none() && rep.rhs.is_none());
    }
}

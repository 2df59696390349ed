//! Cylindrical profiles `{±Re(c ((e^A X)_1 + i (e^A X)_2)^{k/2})}`, the
//! excess of a field against a profile, and least-squares fitting of `c`
//! and of the tilt `A`.

mod corollaries;
mod graph;

pub use corollaries::{corollary_checks, corollary_csv, CorollaryParams, CorollaryRow};
pub use graph::{graphical_decompose, GraphGrid, GraphRepresentation};

use crate::fields::{AnalyticTwoValuedField, FieldError, PairGradient, TwoValuedField};
use crate::pairspace::{decompose, dist_sq, UnorderedPair};
use crate::quadrature::{ball_nodes, integrate, QuadLevel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile coefficient c vanishes")]
    DegenerateProfile,
    #[error("normal equations are ill-conditioned (relative determinant {0:e})")]
    IllConditioned(f64),
    #[error("pairing around the ring r = {radius}, y = {y:?} is inconsistent with the profile holonomy")]
    DecompositionFailure { radius: f64, y: Vec<f64> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A rotated, translated cylindrical profile. `a` is an `n x n` skew matrix
/// (row-major) whose only nonzero entries couple `x1, x2` with `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalProfile {
    c: Vec<Complex64>,
    k: u32,
    a: Vec<f64>,
    center: Vec<f64>,
    q: Vec<f64>,
    base: AnalyticTwoValuedField,
}

/// JSON record of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub m: usize,
    pub n: usize,
    pub k: u32,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    #[serde(rename = "A_entries")]
    pub a_entries: Vec<f64>,
    pub center: Vec<f64>,
}

/// `e^A` for a row-major square matrix.
pub fn expm(a: &[f64], n: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, a);
    let e = m.exp();
    (0..n * n).map(|i| e[(i / n, i % n)]).collect()
}

fn check_skew_s(a: &[f64], n: usize) -> Result<(), ProfileError> {
    if a.len() != n * n {
        return Err(ProfileError::InvalidProfile(format!("A must have {} entries", n * n)));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[i * n + j];
            if (v + a[j * n + i]).abs() > 1e-14 * (1.0 + v.abs()) {
                return Err(ProfileError::InvalidProfile("A is not skew".into()));
            }
            if v != 0.0 && ((i < 2) == (j < 2)) {
                return Err(ProfileError::InvalidProfile(format!("entry ({i}, {j}) of A must vanish")));
            }
        }
    }
    Ok(())
}

/// Free entries `a_{0j}, a_{1j}` for `j >= 2` packed into a skew matrix.
pub fn skew_from_params(p: &[f64], n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    let d = n - 2;
    for j in 2..n {
        for (row, off) in [(0, 0), (1, d)] {
            a[row * n + j] = p[off + j - 2];
            a[j * n + row] = -p[off + j - 2];
        }
    }
    a
}

fn params_from_skew(a: &[f64], n: usize) -> Vec<f64> {
    let d = n - 2;
    let mut p = vec![0.0; 2 * d];
    for j in 2..n {
        p[j - 2] = a[j];
        p[d + j - 2] = a[n + j];
    }
    p
}

fn frob(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl CylindricalProfile {
    pub fn new(n: usize, c: Vec<Complex64>, k: u32) -> Result<Self, ProfileError> {
        Self::with_frame(n, c, k, vec![0.0; n * n], vec![0.0; n])
    }

    pub fn with_frame(n: usize, c: Vec<Complex64>, k: u32, a: Vec<f64>, center: Vec<f64>) -> Result<Self, ProfileError> {
        if c.iter().all(|z| z.norm() == 0.0) {
            return Err(ProfileError::DegenerateProfile);
        }
        if center.len() != n {
            return Err(ProfileError::InvalidProfile("center has the wrong dimension".into()));
        }
        check_skew_s(&a, n)?;
        let base = AnalyticTwoValuedField::cylindrical(n, c.clone(), k)?;
        let q = expm(&a, n);
        Ok(Self { c, k, a, center, q, base })
    }

    pub fn c(&self) -> &[Complex64] {
        &self.c
    }
    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn alpha(&self) -> f64 {
        self.k as f64 / 2.0
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    /// `e^A`, row-major.
    pub fn rotation(&self) -> &[f64] {
        &self.q
    }

    pub fn with_c(&self, c: Vec<Complex64>) -> Result<Self, ProfileError> {
        Self::with_frame(self.base.n, c, self.k, self.a.clone(), self.center.clone())
    }

    pub fn with_a(&self, a: Vec<f64>) -> Result<Self, ProfileError> {
        Self::with_frame(self.base.n, self.c.clone(), self.k, a, self.center.clone())
    }

    pub fn with_center(&self, center: Vec<f64>) -> Result<Self, ProfileError> {
        Self::with_frame(self.base.n, self.c.clone(), self.k, self.a.clone(), center)
    }

    /// `e^A (X - Z)`.
    pub fn frame(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|i| (0..n).map(|j| self.q[i * n + j] * (x[j] - self.center[j])).sum()).collect()
    }

    /// `Re(c w^{k/2})` with the angle of `w1 + i w2` taken in `[0, 2 pi)`.
    pub fn principal_value(&self, x: &[f64]) -> Vec<f64> {
        let w = self.frame(x);
        let (r, th) = polar(&w);
        let z = Complex64::from_polar(r.powf(self.alpha()), self.alpha() * th);
        self.c.iter().map(|c| (c * z).re).collect()
    }

    pub fn to_record(&self) -> ProfileRecord {
        ProfileRecord {
            m: self.c.len(),
            n: self.base.n,
            k: self.k,
            c_re: self.c.iter().map(|c| c.re).collect(),
            c_im: self.c.iter().map(|c| c.im).collect(),
            a_entries: self.a.clone(),
            center: self.center.clone(),
        }
    }

    pub fn from_record(r: &ProfileRecord) -> Result<Self, ProfileError> {
        if r.c_re.len() != r.m || r.c_im.len() != r.m {
            return Err(ProfileError::InvalidProfile("c has the wrong length".into()));
        }
        let c = r.c_re.iter().zip(&r.c_im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        Self::with_frame(r.n, c, r.k, r.a_entries.clone(), r.center.clone())
    }
}

/// `(r, theta)` of `(w1, w2)` with `theta in [0, 2 pi)`.
pub(crate) fn polar(w: &[f64]) -> (f64, f64) {
    (w[0].hypot(w[1]), w[1].atan2(w[0]).rem_euclid(2.0 * PI))
}

impl TwoValuedField for CylindricalProfile {
    fn dim(&self) -> usize {
        self.base.n
    }
    fn codim(&self) -> usize {
        self.base.m
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        self.base.eval(&self.frame(x))
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        let (p, g) = self.base.eval_with_gradient(&self.frame(x))?;
        let n = self.dim();
        let m = self.codim();
        let chain = |g: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; m * n];
            for k in 0..m {
                for j in 0..n {
                    out[k * n + j] = (0..n).map(|i| g[k * n + i] * self.q[i * n + j]).sum();
                }
            }
            out
        };
        Ok((p, PairGradient { g1: chain(&g.g1), g2: chain(&g.g2) }))
    }
}

/// `int over B_radius(center) of G(u, phi)^2`.
pub fn excess<U, V>(u: &U, phi: &V, center: &[f64], radius: f64, level: QuadLevel) -> f64
where
    U: TwoValuedField + ?Sized,
    V: TwoValuedField + ?Sized,
{
    crate::fields::l2_distance_sq(u, phi, center, radius, level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CFit {
    pub c: Vec<Complex64>,
    /// `int |s - Re(c w^alpha)|^2` for the paired selection `s` of the symmetric part.
    pub residual: f64,
    pub iterations: usize,
}

/// Pairing-free starting value: a continuous selection of the symmetric
/// part around one circle, fitted by the two angular modes.
fn initial_c<F: TwoValuedField + ?Sized>(u: &F, frame: &CylindricalProfile, radius: f64) -> Vec<Complex64> {
    let n = u.dim();
    let m = u.codim();
    let alpha = frame.alpha();
    let rho = 0.5 * radius;
    let count = 256;
    let thetas: Vec<f64> = (0..count).map(|j| 2.0 * PI * (j as f64 + 0.5) / count as f64).collect();
    let pairs: Vec<UnorderedPair> = thetas
        .iter()
        .map(|th| {
            // point with frame coordinates (rho cos, rho sin, 0, ...)
            let mut w = vec![0.0; n];
            w[0] = rho * th.cos();
            w[1] = rho * th.sin();
            let x: Vec<f64> =
                (0..n).map(|i| frame.center[i] + (0..n).map(|l| frame.q[l * n + i] * w[l]).sum::<f64>()).collect();
            decompose(&u.eval(&x)).1
        })
        .collect();
    let sel = crate::pairspace::continuous_selection(&pairs);
    let ra = rho.powf(alpha);
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for &th in &thetas {
        let (s, c) = (alpha * th).sin_cos();
        g11 += c * c;
        g12 += c * s;
        g22 += s * s;
    }
    let det = g11 * g22 - g12 * g12;
    (0..m)
        .map(|k| {
            let (mut b1, mut b2) = (0.0, 0.0);
            for (v, &th) in sel.iter().zip(&thetas) {
                let (s, c) = (alpha * th).sin_cos();
                b1 += v[k] * c;
                b2 += v[k] * s;
            }
            let a = (g22 * b1 - g12 * b2) / det / ra;
            let b = (g11 * b2 - g12 * b1) / det / ra;
            Complex64::new(a, -b)
        })
        .collect()
}

/// Least-squares fit of `c` for fixed `k`, tilt and center (taken from
/// `frame`) over `B_radius(center)`. The symmetric part of `u` is paired
/// against the current profile at each quadrature node, and the fit is
/// repeated until the pairing is stable.
pub fn fit_c<F: TwoValuedField + ?Sized>(
    u: &F,
    frame: &CylindricalProfile,
    initial: Option<&[Complex64]>,
    radius: f64,
    level: QuadLevel,
) -> Result<CFit, ProfileError> {
    let n = u.dim();
    let m = u.codim();
    if n != frame.dim() || m != frame.codim() {
        return Err(ProfileError::InvalidInput("field and profile shapes differ".into()));
    }
    let alpha = frame.alpha();
    let nodes = ball_nodes(&frame.center, radius, level);
    // per node: weight, basis (cos, sin) * r^alpha, symmetric value
    let data: Vec<(f64, f64, f64, Vec<f64>)> = nodes
        .par_iter()
        .map(|nd| {
            let x = &nd.x[..n];
            let (r, th) = polar(&frame.frame(x));
            let ra = r.powf(alpha);
            let (s, c) = (alpha * th).sin_cos();
            (nd.w, ra * c, ra * s, decompose(&u.eval(x)).1.a1)
        })
        .collect();
    let mut c: Vec<Complex64> = match initial {
        Some(c) => c.to_vec(),
        None => initial_c(u, frame, radius),
    };
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for (w, b1, b2, _) in &data {
        g11 += w * b1 * b1;
        g12 += w * b1 * b2;
        g22 += w * b2 * b2;
    }
    let det = g11 * g22 - g12 * g12;
    let rel = det / (g11 + g22).powi(2);
    if !(rel > 1e-12) {
        return Err(ProfileError::IllConditioned(rel));
    }
    let mut signs: Vec<f64> = Vec::new();
    for it in 1..=20 {
        let new_signs: Vec<f64> = data
            .iter()
            .map(|(_, b1, b2, s)| {
                let dot: f64 = (0..m).map(|k| s[k] * (c[k].re * b1 - c[k].im * b2)).sum();
                if dot < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect();
        let stable = new_signs == signs;
        signs = new_signs;
        if !stable || it == 1 {
            c = (0..m)
                .map(|k| {
                    let (mut r1, mut r2) = (0.0, 0.0);
                    for ((w, b1, b2, s), sg) in data.iter().zip(&signs) {
                        r1 += w * sg * s[k] * b1;
                        r2 += w * sg * s[k] * b2;
                    }
                    let a = (g22 * r1 - g12 * r2) / det;
                    let b = (g11 * r2 - g12 * r1) / det;
                    Complex64::new(a, -b)
                })
                .collect();
        }
        if stable {
            let residual = data
                .iter()
                .zip(&signs)
                .map(|((w, b1, b2, s), sg)| {
                    w * (0..m).map(|k| (sg * s[k] - (c[k].re * b1 - c[k].im * b2)).powi(2)).sum::<f64>()
                })
                .sum();
            if c.iter().all(|z| z.norm() == 0.0) {
                return Err(ProfileError::DegenerateProfile);
            }
            return Ok(CFit { c, residual, iterations: it });
        }
    }
    Err(ProfileError::InvalidInput("pairing against the profile did not stabilize".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationFit {
    pub profile: CylindricalProfile,
    /// Excess after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    /// Set when a Gauss-Newton step could not be improved by backtracking.
    pub stalled: bool,
}

fn paired_residuals(
    u_vals: &[UnorderedPair],
    weights: &[f64],
    xs: &[Vec<f64>],
    phi: &CylindricalProfile,
    swap: Option<&[bool]>,
) -> (Vec<f64>, Vec<bool>) {
    let parts: Vec<(Vec<f64>, bool)> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let p = phi.eval(x);
            let u = &u_vals[i];
            let sw = match swap {
                Some(s) => s[i],
                None => dist_sq(&u.a1, &p.a2) + dist_sq(&u.a2, &p.a1) < dist_sq(&u.a1, &p.a1) + dist_sq(&u.a2, &p.a2),
            };
            let (b1, b2) = if sw { (&u.a2, &u.a1) } else { (&u.a1, &u.a2) };
            let sw_ = weights[i].sqrt();
            let r = b1.iter().zip(&p.a1).chain(b2.iter().zip(&p.a2)).map(|(a, b)| sw_ * (a - b)).collect();
            (r, sw)
        })
        .collect();
    let mut res = Vec::new();
    let mut flags = Vec::with_capacity(parts.len());
    for (r, s) in parts {
        res.extend(r);
        flags.push(s);
    }
    (res, flags)
}

/// Gauss-Newton fit of the tilt `A` (with `|A| <= bound`) minimizing the
/// excess over `B_radius(center)`. For `n = 2` the tilt space is trivial.
pub fn fit_rotation<F: TwoValuedField + ?Sized>(
    u: &F,
    phi: &CylindricalProfile,
    bound: f64,
    radius: f64,
    level: QuadLevel,
) -> Result<RotationFit, ProfileError> {
    let n = u.dim();
    let zero_a = vec![0.0; n * n];
    if n == 2 {
        let profile = phi.with_a(zero_a)?;
        let e = excess(u, &profile, &phi.center, radius, level);
        return Ok(RotationFit { profile, trace: vec![e], stalled: false });
    }
    let nodes = ball_nodes(&phi.center, radius, level);
    let xs: Vec<Vec<f64>> = nodes.iter().map(|nd| nd.x[..n].to_vec()).collect();
    let weights: Vec<f64> = nodes.iter().map(|nd| nd.w).collect();
    let u_vals: Vec<UnorderedPair> = xs.par_iter().map(|x| u.eval(x)).collect();
    let objective = |p: &[f64]| -> Result<f64, ProfileError> {
        let prof = phi.with_a(skew_from_params(p, n))?;
        let (r, _) = paired_residuals(&u_vals, &weights, &xs, &prof, None);
        Ok(r.iter().map(|v| v * v).sum())
    };
    let clamp = |p: Vec<f64>| -> Vec<f64> {
        let norm = frob(&skew_from_params(&p, n));
        if norm > bound {
            p.iter().map(|v| v * bound / norm).collect()
        } else {
            p
        }
    };
    let mut p = clamp(params_from_skew(&phi.a, n));
    let mut f = objective(&p)?;
    let mut trace = vec![f];
    let mut stalled = false;
    let np = p.len();
    for _ in 0..50 {
        if f < 1e-30 {
            break;
        }
        let prof = phi.with_a(skew_from_params(&p, n))?;
        let (r0, swap) = paired_residuals(&u_vals, &weights, &xs, &prof, None);
        let h = 1e-7;
        let cols: Vec<Vec<f64>> = (0..np)
            .map(|j| {
                let mut pp = p.clone();
                pp[j] += h;
                let mut pm = p.clone();
                pm[j] -= h;
                let fp = phi.with_a(skew_from_params(&pp, n)).expect("skew by construction");
                let fm = phi.with_a(skew_from_params(&pm, n)).expect("skew by construction");
                let rp = paired_residuals(&u_vals, &weights, &xs, &fp, Some(&swap)).0;
                let rm = paired_residuals(&u_vals, &weights, &xs, &fm, Some(&swap)).0;
                rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let mut jtj = DMatrix::<f64>::zeros(np, np);
        let mut jtr = DVector::<f64>::zeros(np);
        for a in 0..np {
            for b in 0..np {
                jtj[(a, b)] = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
            }
            jtr[a] = cols[a].iter().zip(&r0).map(|(x, y)| x * y).sum();
        }
        let ridge = 1e-12 * jtj.trace().max(1e-300);
        for a in 0..np {
            jtj[(a, a)] += ridge;
        }
        let Some(delta) = jtj.clone().cholesky().map(|ch| ch.solve(&(-jtr))) else {
            stalled = true;
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = clamp(p.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect());
            let ft = objective(&trial)?;
            if ft < f {
                let step: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                p = trial;
                f = ft;
                trace.push(f);
                accepted = true;
                if step < 1e-13 * (1.0 + frob(&p)) {
                    return Ok(RotationFit { profile: phi.with_a(skew_from_params(&p, n))?, trace, stalled: false });
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no decrease: either converged to noise level or a genuine stall
            stalled = delta.norm() > 1e-9 * (1.0 + frob(&p));
            break;
        }
    }
    Ok(RotationFit { profile: phi.with_a(skew_from_params(&p, n))?, trace, stalled })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFit {
    pub profile: CylindricalProfile,
    pub initial_excess: f64,
    pub excess: f64,
    pub c_residual: f64,
}

/// Alternates [`fit_c`] and (for `n >= 3`) [`fit_rotation`] starting from
/// `guess`, over `B_radius(guess.center)`.
pub fn fit_profile<F: TwoValuedField + ?Sized>(
    u: &F,
    guess: &CylindricalProfile,
    tilt_bound: f64,
    radius: f64,
    level: QuadLevel,
) -> Result<ProfileFit, ProfileError> {
    let initial_excess = excess(u, guess, &guess.center, radius, level);
    let mut prof = guess.clone();
    let rounds = if u.dim() == 2 { 1 } else { 3 };
    let mut c_residual = 0.0;
    for _ in 0..rounds {
        let fit = fit_c(u, &prof, Some(&prof.c), radius, level)?;
        c_residual = fit.residual;
        prof = prof.with_c(fit.c)?;
        if u.dim() >= 3 {
            prof = fit_rotation(u, &prof, tilt_bound, radius, level)?.profile;
        }
    }
    if u.dim() >= 3 {
        let fit = fit_c(u, &prof, Some(&prof.c), radius, level)?;
        c_residual = fit.residual;
        prof = prof.with_c(fit.c)?;
    }
    let mut e = excess(u, &prof, &prof.center, radius, level);
    if e > initial_excess {
        // the least-squares selection can lose to the guess when pairings are ambiguous
        prof = guess.clone();
        e = initial_excess;
    }
    Ok(ProfileFit { profile: prof, initial_excess, excess: e, c_residual })
}

/// `int 2 |phi_1 - phi_1'|^2` with both profiles on their principal
/// branches; equals the excess when no pairing swap occurs.
pub fn excess_same_branch(a: &CylindricalProfile, b: &CylindricalProfile, radius: f64, level: QuadLevel) -> f64 {
    let nodes = ball_nodes(&a.center, radius, level);
    integrate(&nodes, a.dim(), |x, _| {
        2.0 * dist_sq(&a.principal_value(x), &b.principal_value(x))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairspace::metric_g_sq;
    use crate::fields::AngularMode;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn skew_structure_enforced() {
        let mut a = vec![0.0; 9];
        a[1] = 0.1;
        a[3] = -0.1;
        assert!(CylindricalProfile::with_frame(3, vec![c(1.0, 0.0)], 1, a, vec![0.0; 3]).is_err());
        let a = skew_from_params(&[0.1, -0.2], 3);
        assert_eq!(a[2], 0.1);
        assert_eq!(a[6], -0.1);
        assert_eq!(a[5], -0.2);
        assert!(CylindricalProfile::with_frame(3, vec![c(1.0, 0.0)], 1, a, vec![0.0; 3]).is_ok());
        assert_eq!(CylindricalProfile::new(2, vec![c(0.0, 0.0)], 1), Err(ProfileError::DegenerateProfile));
    }

    #[test]
    fn expm_of_plane_rotation() {
        let t: f64 = 0.3;
        let e = expm(&[0.0, -t, t, 0.0], 2);
        assert!((e[0] - t.cos()).abs() < 1e-14 && (e[2] - t.sin()).abs() < 1e-14);
    }

    #[test]
    fn matches_analytic_field_in_standard_frame() {
        let cs = vec![c(0.6, -0.3), c(0.1, 0.9)];
        let p = CylindricalProfile::new(3, cs.clone(), 3).unwrap();
        let u = AnalyticTwoValuedField::cylindrical(3, cs, 3).unwrap();
        for x in [[0.3, -0.2, 0.5], [-0.7, 0.1, -0.1]] {
            assert!(metric_g_sq(&p.eval(&x), &u.eval(&x)).unwrap() < 1e-28);
        }
    }

    #[test]
    fn record_round_trip() {
        let a = skew_from_params(&[0.05, 0.02], 3);
        let p = CylindricalProfile::with_frame(3, vec![c(1.0, 2.0)], 2, a, vec![0.1, 0.0, -0.2]).unwrap();
        let json = serde_json::to_string(&p.to_record()).unwrap();
        assert!(json.contains("A_entries"));
        let back: ProfileRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(CylindricalProfile::from_record(&back).unwrap(), p);
    }

    #[test]
    fn excess_closed_form() {
        // same principal branch: G^2 = 2 |Re((c - c') w^alpha)|^2, integral over
        // the disk = 2 * pi |c - c'|^2 / (2 alpha + 2) for scalar c
        let (k, c0, c1) = (3u32, c(1.0, 0.5), c(1.1, 0.3));
        let a = CylindricalProfile::new(2, vec![c0], k).unwrap();
        let b = CylindricalProfile::new(2, vec![c1], k).unwrap();
        let alpha = 1.5;
        let expected = 2.0 * PI * (c0 - c1).norm_sqr() / (2.0 * alpha + 2.0);
        let got = excess_same_branch(&a, &b, 1.0, QuadLevel::FINE);
        assert!((got - expected).abs() < 1e-10 * expected, "{got} {expected}");
        assert!(excess(&a, &b, &[0.0, 0.0], 1.0, QuadLevel::FINE) <= got + 1e-12);
        assert_eq!(excess(&a, &a, &[0.0, 0.0], 1.0, QuadLevel::MEDIUM), 0.0);
    }

    #[test]
    fn fit_c_exact_for_all_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=6u32 {
            let c0: Vec<Complex64> = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let u = AnalyticTwoValuedField::cylindrical(2, c0.clone(), k).unwrap();
            let frame = CylindricalProfile::new(2, vec![c(1.0, 0.0); 2], k).unwrap();
            let fit = fit_c(&u, &frame, None, 1.0, QuadLevel::MEDIUM).unwrap();
            // c and -c give the same field
            let s = if (fit.c[0] - c0[0]).norm() < (fit.c[0] + c0[0]).norm() { 1.0 } else { -1.0 };
            for (a, b) in fit.c.iter().zip(&c0) {
                assert!((a * s - b).norm() < 1e-10, "k = {k}: {a} vs {b}");
            }
            assert!(fit.residual < 1e-20);
        }
    }

    #[test]
    fn fit_c_second_order_in_orthogonal_perturbation() {
        let c0 = c(0.8, -0.4);
        let mut errs = Vec::new();
        for t in [1e-1, 1e-2] {
            let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c0], 1), (vec![c(0.5, 0.5) * t], 3)]).unwrap();
            let frame = CylindricalProfile::new(2, vec![c0], 1).unwrap();
            let fit = fit_c(&u, &frame, Some(&[c0]), 1.0, QuadLevel::FINE).unwrap();
            errs.push((fit.c[0] - c0).norm());
        }
        // angular modes alpha and alpha + 1 are orthogonal on each circle
        assert!(errs[1] < 1e-9 || errs[1] < errs[0] * 0.02, "{errs:?}");
    }

    #[test]
    fn fit_c_with_noise() {
        use crate::fields::{GridSpec, SampledField};
        let c0 = c(0.7, 0.2);
        let u = AnalyticTwoValuedField::cylindrical(2, vec![c0], 2).unwrap();
        let grid = GridSpec::Polar { radius: 1.0, n_r: 24, n_theta: 96, grading: 1.0 };
        let clean = SampledField::sample(&u, grid.clone()).unwrap();
        let sigma = 1e-3;
        let mut errs = Vec::new();
        for seed in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals = clean
                .values()
                .iter()
                .map(|p| {
                    let e = sigma * rng.gen_range(-1.0..1.0);
                    UnorderedPair::symmetric(vec![p.a1[0] + e])
                })
                .collect();
            let noisy = SampledField::from_values(grid.clone(), 1, vals, true).unwrap();
            let frame = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 2).unwrap();
            let fit = fit_c(&noisy, &frame, None, 0.95, QuadLevel::MEDIUM).unwrap();
            let e = (fit.c[0] - c0).norm().min((fit.c[0] + c0).norm());
            errs.push(e);
            assert!(fit.residual > 0.0);
        }
        // interpolation error of the grid plus noise, both well below 10 sigma
        assert!(errs.iter().all(|e| *e < 10.0 * sigma + 5e-3), "{errs:?}");
    }

    #[test]
    fn degenerate_fit_rejected() {
        let u = crate::fields::ZeroField { n: 2, m: 1 };
        let frame = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        assert_eq!(fit_c(&u, &frame, None, 1.0, QuadLevel::COARSE), Err(ProfileError::DegenerateProfile));
    }

    #[test]
    fn rotation_round_trip() {
        let a0 = skew_from_params(&[0.02, -0.015], 3);
        let truth = CylindricalProfile::with_frame(3, vec![c(1.0, 0.0), c(0.0, 1.0)], 2, a0.clone(), vec![0.0; 3])
            .unwrap();
        let start = truth.with_a(vec![0.0; 9]).unwrap();
        let fit = fit_rotation(&truth, &start, 0.1, 1.0, QuadLevel::COARSE).unwrap();
        for (a, b) in fit.profile.a().iter().zip(&a0) {
            assert!((a - b).abs() < 1e-6, "{:?}", fit.profile.a());
        }
        assert!(fit.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rotation_respects_bound_and_trivial_cases() {
        let u = CylindricalProfile::new(3, vec![c(1.0, 0.0)], 2).unwrap();
        let fit = fit_rotation(&u, &u, 0.1, 1.0, QuadLevel::COARSE).unwrap();
        assert!(fit.profile.a().iter().all(|v| *v == 0.0));
        let u2 = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        assert!(fit_rotation(&u2, &u2, 0.1, 1.0, QuadLevel::COARSE).unwrap().profile.a().iter().all(|v| *v == 0.0));
        let tilted =
            CylindricalProfile::with_frame(3, vec![c(1.0, 0.0)], 2, skew_from_params(&[0.3, 0.0], 3), vec![0.0; 3])
                .unwrap();
        let fit = fit_rotation(&tilted, &u, 0.05, 1.0, QuadLevel::COARSE).unwrap();
        assert!(frob(fit.profile.a()) <= 0.05 + 1e-12);
    }

    #[test]
    fn fit_profile_reduces_excess() {
        let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c(1.0, 0.0)], 2), (vec![c(0.1, 0.0)], 4)]).unwrap();
        let guess = CylindricalProfile::new(2, vec![c(0.8, 0.1)], 2).unwrap();
        let fit = fit_profile(&u, &guess, 0.1, 1.0, QuadLevel::MEDIUM).unwrap();
        assert!(fit.excess < fit.initial_excess);
    }

    #[test]
    fn odd_and_even_holonomy() {
        // continuous selection around the axis returns with sign (-1)^k
        for k in 1..=4u32 {
            let p = CylindricalProfile::new(2, vec![c(0.3, 1.0)], k).unwrap();
            let path: Vec<UnorderedPair> = (0..=400)
                .map(|j| {
                    let th = 2.0 * PI * j as f64 / 400.0;
                    p.eval(&[th.cos(), th.sin()])
                })
                .collect();
            let sel = crate::pairspace::continuous_selection(&path);
            let (start, prev) = (&sel[0], &sel[400]);
            let expected = if k % 2 == 1 { -1.0 } else { 1.0 };
            assert!((prev[0] - expected * start[0]).abs() < 1e-9, "k = {k}");
        }
    }

    #[test]
    fn modes_match_profile_convention() {
        let p = CylindricalProfile::new(2, vec![c(0.4, -0.7)], 3).unwrap();
        let u = AnalyticTwoValuedField::from_modes(
            2,
            1,
            vec![AngularMode { power: 1.5, half_freq: 3, a: vec![0.4], b: vec![0.7] }],
        )
        .unwrap();
        assert!(metric_g_sq(&p.eval(&[0.2, 0.5]), &u.eval(&[0.2, 0.5])).unwrap() < 1e-28);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gauge_invariance(k in 1u32..7, re in -1.0f64..1.0, im in -1.0f64..1.0, t0 in 0.0f64..6.28,
                            x in -1.0f64..1.0, y in -1.0f64..1.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let alpha = k as f64 / 2.0;
            let p = CylindricalProfile::new(2, vec![c(re, im)], k).unwrap();
            let q = CylindricalProfile::new(2, vec![c(re, im) * Complex64::from_polar(1.0, alpha * t0)], k).unwrap();
            // q evaluated in the frame rotated by -t0
            let (s, co) = t0.sin_cos();
            let xr = [co * x + s * y, -s * x + co * y];
            let d = metric_g_sq(&p.eval(&[x, y]), &q.eval(&xr)).unwrap();
            prop_assert!(d < 1e-20);
        }
    }
}

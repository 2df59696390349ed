//! Two-valued fields on balls in R^n: analytic model solutions, affine
//! rescalings, sampled fields, and L^2 distances.

mod analytic;
mod sampled;

pub use analytic::{AnalyticTwoValuedField, AngularMode, BranchCoefficient, Monomial, SymmetricPart};
pub use sampled::{GridSpec, SampledField};

use crate::pairspace::{metric_g_sq, UnorderedPair};
use crate::quadrature::{ball_nodes, integrate, QuadLevel};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("gradient is singular at {point:?}")]
    SingularEvaluation { point: Vec<f64> },
    #[error("cannot rescale: L2 norm on B_{radius}({center:?}) vanishes")]
    DegenerateRescale { center: Vec<f64>, radius: f64 },
    #[error("invalid field specification: {0}")]
    InvalidSpec(String),
    #[error("malformed sampled-field data: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(String),
}

/// Derivative of a two-valued field: the pair of `m x n` matrices (row-major,
/// entry `[k * n + i] = d_i u^k`) matching the storage order of `eval`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradient {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl PairGradient {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { g1: vec![0.0; m * n], g2: vec![0.0; m * n] }
    }

    /// `|Du|^2 = |Du_1|^2 + |Du_2|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.g1.iter().chain(&self.g2).map(|x| x * x).sum()
    }

    pub fn swapped(&self) -> Self {
        Self { g1: self.g2.clone(), g2: self.g1.clone() }
    }
}

/// A map from (a ball in) R^n into unordered pairs of R^m vectors.
pub trait TwoValuedField: Send + Sync {
    /// Domain dimension n.
    fn dim(&self) -> usize;
    /// Target dimension m.
    fn codim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> UnorderedPair;
    /// Value and derivative with consistent storage order.
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError>;

    fn eval_gradient(&self, x: &[f64]) -> Result<PairGradient, FieldError> {
        self.eval_with_gradient(x).map(|(_, g)| g)
    }
}

impl<T: TwoValuedField + ?Sized> TwoValuedField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn codim(&self) -> usize {
        (**self).codim()
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        (**self).eval(x)
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        (**self).eval_with_gradient(x)
    }
}

impl<T: TwoValuedField + ?Sized> TwoValuedField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn codim(&self) -> usize {
        (**self).codim()
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        (**self).eval(x)
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        (**self).eval_with_gradient(x)
    }
}

impl<T: TwoValuedField + ?Sized> TwoValuedField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn codim(&self) -> usize {
        (**self).codim()
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        (**self).eval(x)
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        (**self).eval_with_gradient(x)
    }
}

/// `X -> scale * u(center + rho * Q X)` for an optional orthogonal `Q` (row-major n x n).
#[derive(Debug, Clone)]
pub struct Transformed<F> {
    pub inner: F,
    pub center: Vec<f64>,
    pub rho: f64,
    pub rotation: Option<Vec<f64>>,
    pub scale: f64,
}

impl<F: TwoValuedField> Transformed<F> {
    pub fn new(inner: F, center: Vec<f64>, rho: f64, scale: f64) -> Self {
        Self { inner, center, rho, rotation: None, scale }
    }

    pub fn with_rotation(mut self, q: Vec<f64>) -> Self {
        self.rotation = Some(q);
        self
    }

    fn map_point(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match &self.rotation {
            None => (0..n).map(|i| self.center[i] + self.rho * x[i]).collect(),
            Some(q) => (0..n)
                .map(|i| {
                    let qx: f64 = (0..n).map(|j| q[i * n + j] * x[j]).sum();
                    self.center[i] + self.rho * qx
                })
                .collect(),
        }
    }
}

impl<F: TwoValuedField> TwoValuedField for Transformed<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn codim(&self) -> usize {
        self.inner.codim()
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        self.inner.eval(&self.map_point(x)).scaled(self.scale)
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        let (p, g) = self.inner.eval_with_gradient(&self.map_point(x))?;
        let n = self.dim();
        let m = self.codim();
        let f = self.scale * self.rho;
        let chain = |g: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; m * n];
            for k in 0..m {
                for j in 0..n {
                    out[k * n + j] = f * match &self.rotation {
                        None => g[k * n + j],
                        Some(q) => (0..n).map(|i| g[k * n + i] * q[i * n + j]).sum(),
                    };
                }
            }
            out
        };
        Ok((p.scaled(self.scale), PairGradient { g1: chain(&g.g1), g2: chain(&g.g2) }))
    }
}

/// `integral over B_radius(center) of |u|^2`.
pub fn l2_norm_sq<F: TwoValuedField + ?Sized>(u: &F, center: &[f64], radius: f64, level: QuadLevel) -> f64 {
    let nodes = ball_nodes(center, radius, level);
    integrate(&nodes, u.dim(), |x, _| u.eval(x).norm_sq())
}

/// The normalized blow-up `u_{Y,rho}(X) = u(Y + rho X) / (rho^{-n/2} ||u||_{L2(B_rho(Y))})`.
///
/// The result is evaluated lazily; use [`SampledField::sample`] to tabulate it.
pub fn rescale<F: TwoValuedField>(
    u: F,
    center: &[f64],
    rho: f64,
    level: QuadLevel,
) -> Result<Transformed<F>, FieldError> {
    let n = u.dim();
    let norm_sq = l2_norm_sq(&u, center, rho, level);
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(FieldError::DegenerateRescale { center: center.to_vec(), radius: rho });
    }
    let scale = rho.powf(n as f64 / 2.0) / norm_sq.sqrt();
    Ok(Transformed::new(u, center.to_vec(), rho, scale))
}

/// `integral over B_radius(center) of G(u, v)^2`.
pub fn l2_distance_sq<U, V>(u: &U, v: &V, center: &[f64], radius: f64, level: QuadLevel) -> f64
where
    U: TwoValuedField + ?Sized,
    V: TwoValuedField + ?Sized,
{
    let nodes = ball_nodes(center, radius, level);
    integrate(&nodes, u.dim(), |x, _| {
        metric_g_sq(&u.eval(x), &v.eval(x)).expect("fields must share the target dimension")
    })
}

/// The zero field `{0, 0}`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField {
    pub n: usize,
    pub m: usize,
}

impl TwoValuedField for ZeroField {
    fn dim(&self) -> usize {
        self.n
    }
    fn codim(&self) -> usize {
        self.m
    }
    fn eval(&self, _x: &[f64]) -> UnorderedPair {
        UnorderedPair::zero(self.m)
    }
    fn eval_with_gradient(&self, _x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        Ok((UnorderedPair::zero(self.m), PairGradient::zeros(self.m, self.n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn phi(n: usize, c: Vec<Complex64>, k: u32) -> AnalyticTwoValuedField {
        AnalyticTwoValuedField::cylindrical(n, c, k).unwrap()
    }

    #[test]
    fn rescaled_norm_is_one() {
        let u = phi(3, vec![Complex64::new(0.3, -1.1)], 3);
        let r = rescale(&u, &[0.1, 0.0, -0.2], 0.3, QuadLevel::MEDIUM).unwrap();
        let nrm = l2_norm_sq(&r, &[0.0; 3], 1.0, QuadLevel::MEDIUM);
        assert!((nrm - 1.0).abs() < 1e-8, "{nrm}");
    }

    #[test]
    fn rescaling_homogeneous_field_is_scale_free() {
        let u = phi(2, vec![Complex64::new(1.0, 0.5)], 1);
        let a = rescale(&u, &[0.0, 0.0], 0.9, QuadLevel::MEDIUM).unwrap();
        let b = rescale(&u, &[0.0, 0.0], 0.01, QuadLevel::MEDIUM).unwrap();
        for x in [[0.3, 0.2], [-0.5, 0.1], [0.0, -0.7]] {
            let d = crate::pairspace::metric_g(&a.eval(&x), &b.eval(&x)).unwrap();
            assert!(d < 1e-10);
        }
    }

    #[test]
    fn rescale_of_zero_field_is_degenerate() {
        let z = ZeroField { n: 2, m: 1 };
        assert!(matches!(
            rescale(z, &[0.0, 0.0], 0.5, QuadLevel::COARSE),
            Err(FieldError::DegenerateRescale { .. })
        ));
    }

    #[test]
    fn blowups_of_perturbed_profile_converge() {
        // u = phi + z^{5/2}-term; L2 distance of blow-ups to normalized phi ~ rho^2
        let c = Complex64::new(1.0, 0.0);
        let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c], 1), (vec![Complex64::new(0.5, 0.0)], 5)]).unwrap();
        let p = phi(2, vec![c], 1);
        let pn = rescale(&p, &[0.0, 0.0], 1.0, QuadLevel::FINE).unwrap();
        let mut prev = f64::INFINITY;
        for rho in [0.5, 0.25, 0.125, 0.0625] {
            let b = rescale(&u, &[0.0, 0.0], rho, QuadLevel::FINE).unwrap();
            let d = l2_distance_sq(&b, &pn, &[0.0, 0.0], 1.0, QuadLevel::FINE);
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn distance_to_self_and_zero() {
        let u = phi(3, vec![Complex64::new(0.2, 0.9), Complex64::new(-1.0, 0.1)], 2);
        assert_eq!(l2_distance_sq(&u, &u, &[0.0; 3], 1.0, QuadLevel::COARSE), 0.0);
        let z = ZeroField { n: 3, m: 2 };
        let a = l2_distance_sq(&u, &z, &[0.0; 3], 1.0, QuadLevel::MEDIUM);
        let b = l2_norm_sq(&u, &[0.0; 3], 1.0, QuadLevel::MEDIUM);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn distance_between_equal_degree_profiles_closed_form() {
        // If pairings never swap, G(phi_c, phi_c')^2 = 2 |Re((c-c')z^a)|^2, and on B_1 in R^2
        // integral = 2 * |c-c'|^2 * pi / (2a+2) (the cos^2/sin^2 average is 1/2 each).
        let k = 3;
        let a = k as f64 / 2.0;
        let c = Complex64::new(1.0, 0.0);
        let cp = Complex64::new(1.01, -0.005);
        let u = phi(2, vec![c], k);
        let v = phi(2, vec![cp], k);
        let q = l2_distance_sq(&u, &v, &[0.0, 0.0], 1.0, QuadLevel::FINE);
        let exact = 2.0 * (c - cp).norm_sqr() * PI / (2.0 * a + 2.0);
        assert!((q - exact).abs() < 1e-12, "{q} vs {exact}");
    }

    #[test]
    fn quadrature_converges_under_refinement() {
        // a pair with a pairing swap region has a kink; refinement still converges
        let u = phi(2, vec![Complex64::new(1.0, 0.0)], 1);
        let v = phi(2, vec![Complex64::new(0.0, 1.0)], 1);
        let vals: Vec<f64> = (1..6)
            .map(|k| l2_distance_sq(&u, &v, &[0.0, 0.0], 1.0, QuadLevel::ladder(k)))
            .collect();
        let reference = l2_distance_sq(&u, &v, &[0.0, 0.0], 1.0, QuadLevel::ladder(8));
        let errs: Vec<f64> = vals.iter().map(|v| (v - reference).abs()).collect();
        // log-log slope over the last three levels (halving node spacing)
        let slope = (errs[1] / errs[4]).log2() / 3.0;
        assert!(slope > 1.0, "errors {errs:?}, slope {slope}");
    }
}

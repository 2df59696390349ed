//! Linear theory on the branched double cover of a cylindrical profile:
//! the half-integer Fourier basis on `[0, 4 pi)`, the kernel span `L` of
//! homogeneous degree-`alpha` solutions, orthogonal projection onto it, and
//! the boundary-term and decay checks for cover functions.

mod checks;

pub use checks::{
    decay_check, half_case_boundary_term, BoundaryTermEstimate, BoundaryTermOptions, DecayCheckOptions, DecayCheckReport,
    ScaleRow,
};

use crate::fields::TwoValuedField;
use crate::profiles::CylindricalProfile;
use crate::quadrature::{ball_nodes, pairwise_sum, QuadLevel};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("Gram matrix has numerical rank {rank}, expected {expected}")]
    GramSingular { rank: usize, expected: usize },
}

/// A function on the cover parameterized by `(r, theta, y)` with
/// `theta in [0, 4 pi)`.
pub trait CoverFunction: Sync {
    fn dim(&self) -> usize;
    fn codim(&self) -> usize;
    fn eval(&self, r: f64, theta: f64, y: &[f64]) -> Vec<f64>;
}

impl<T: CoverFunction + ?Sized> CoverFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn codim(&self) -> usize {
        (**self).codim()
    }
    fn eval(&self, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
        (**self).eval(r, theta, y)
    }
}

/// Closure adaptor.
pub struct CoverFn<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> CoverFn<F>
where
    F: Fn(f64, f64, &[f64]) -> Vec<f64> + Sync,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F> CoverFunction for CoverFn<F>
where
    F: Fn(f64, f64, &[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn codim(&self) -> usize {
        self.m
    }
    fn eval(&self, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
        (self.f)(r, theta, y)
    }
}

/// The sheet of a two-valued field `u` over the graph of a profile, read in
/// the profile's frame: at `(r, theta, y)` the entry of `u` nearest to the
/// profile's cover value `Re(c r^alpha e^{i alpha theta})` is taken. Value
/// and angular derivative are both matched, so the choice stays correct
/// across zero lines of the profile. With `subtract` the profile value is
/// removed; the result is multiplied by `scale`.
pub struct GraphLift<U> {
    u: U,
    phi: CylindricalProfile,
    subtract: bool,
    scale: f64,
}

impl<U: TwoValuedField> GraphLift<U> {
    pub fn value(u: U, phi: &CylindricalProfile) -> Self {
        Self { u, phi: phi.clone(), subtract: false, scale: 1.0 }
    }

    /// `scale (u - phi)` on the cover.
    pub fn difference(u: U, phi: &CylindricalProfile, scale: f64) -> Self {
        Self { u, phi: phi.clone(), subtract: true, scale }
    }

    fn to_domain(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let q = self.phi.rotation();
        let z = self.phi.center();
        (0..n).map(|j| z[j] + (0..n).map(|i| q[i * n + j] * w[i]).sum::<f64>()).collect()
    }
}

impl<U: TwoValuedField> CoverFunction for GraphLift<U> {
    fn dim(&self) -> usize {
        self.u.dim()
    }
    fn codim(&self) -> usize {
        self.u.codim()
    }
    fn eval(&self, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
        let n = self.u.dim();
        let alpha = self.phi.alpha();
        let (s, c) = theta.sin_cos();
        let mut w = vec![r * c, r * s];
        w.extend_from_slice(y);
        let x = self.to_domain(&w);
        let e = Complex64::from_polar(r.powf(alpha), alpha * theta);
        let target: Vec<f64> = self.phi.c().iter().map(|ck| (ck * e).re).collect();
        let target_dt: Vec<f64> = self.phi.c().iter().map(|ck| (Complex64::i() * alpha * ck * e).re).collect();

        let (pair, grad) = match self.u.eval_with_gradient(&x) {
            Ok((p, g)) => (p, Some(g)),
            Err(_) => (self.u.eval(&x), None),
        };
        let mut tangent = vec![0.0; n];
        tangent[0] = -r * s;
        tangent[1] = r * c;
        let t_dom: Vec<f64> = {
            let q = self.phi.rotation();
            (0..n).map(|j| (0..n).map(|i| q[i * n + j] * tangent[i]).sum()).collect()
        };
        let score = |a: &[f64], g: Option<&Vec<f64>>| -> f64 {
            let mut d: f64 = a.iter().zip(&target).map(|(p, q)| (p - q) * (p - q)).sum();
            if let Some(g) = g {
                for k in 0..a.len() {
                    let dt: f64 = (0..n).map(|j| g[k * n + j] * t_dom[j]).sum();
                    d += (dt - target_dt[k]).powi(2);
                }
            }
            d
        };
        let s1 = score(&pair.a1, grad.as_ref().map(|g| &g.g1));
        let s2 = score(&pair.a2, grad.as_ref().map(|g| &g.g2));
        let pick = if s2 < s1 { &pair.a2 } else { &pair.a1 };
        pick.iter()
            .zip(&target)
            .map(|(a, t)| self.scale * if self.subtract { a - t } else { *a })
            .collect()
    }
}

/// Orthonormal eigenbasis of `-d^2/d theta^2` on 4 pi-periodic scalar
/// functions with inner product `(1/4pi) int_0^{4pi}`: `1`, then
/// `sqrt2 cos(j theta/2)`, `sqrt2 sin(j theta/2)` for `j = 1..=max_half_freq`,
/// with eigenvalue `(j/2)^2`. Vector-valued functions use it per component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverFourierBasis {
    pub max_half_freq: usize,
}

impl CoverFourierBasis {
    pub fn new(max_half_freq: usize) -> Self {
        Self { max_half_freq }
    }

    pub fn len(&self) -> usize {
        2 * self.max_half_freq + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-frequency `j` of element `l`.
    pub fn half_freq(&self, l: usize) -> usize {
        l.div_ceil(2)
    }

    pub fn lambda(&self, l: usize) -> f64 {
        let j = self.half_freq(l) as f64;
        j * j / 4.0
    }

    pub fn value(&self, l: usize, theta: f64) -> f64 {
        let j = self.half_freq(l) as f64;
        match l {
            0 => 1.0,
            l if l % 2 == 1 => SQRT_2 * (j * theta / 2.0).cos(),
            _ => SQRT_2 * (j * theta / 2.0).sin(),
        }
    }

    pub fn second_derivative(&self, l: usize, theta: f64) -> f64 {
        -self.lambda(l) * self.value(l, theta)
    }

    /// Smallest index with eigenvalue `(alpha - 1)^2`.
    pub fn l0(&self, alpha: f64) -> Option<usize> {
        let j = (2.0 * (alpha - 1.0)).abs().round() as usize;
        if ((j as f64) / 2.0 - (alpha - 1.0).abs()).abs() > 1e-12 || j > self.max_half_freq {
            return None;
        }
        Some(if j == 0 { 0 } else { 2 * j - 1 })
    }

    /// Number of equispaced samples used by [`fourier_coefficients`].
    pub fn samples(&self) -> usize {
        2 * self.max_half_freq + 2
    }

    /// `max_theta |phi_l'' + lambda_l phi_l|` with the second derivative
    /// taken by a five-point difference of step `h`.
    pub fn eigen_residual(&self, l: usize, thetas: &[f64], h: f64) -> f64 {
        thetas
            .iter()
            .map(|&t| {
                let f = |s: f64| self.value(l, s);
                let d2 = (-f(t + 2.0 * h) + 16.0 * f(t + h) - 30.0 * f(t) + 16.0 * f(t - h) - f(t - 2.0 * h))
                    / (12.0 * h * h);
                (d2 + self.lambda(l) * f(t)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Gram matrix under the trapezoid rule with `samples()` points.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let k = self.samples();
        let thetas: Vec<f64> = (0..k).map(|i| 4.0 * PI * i as f64 / k as f64).collect();
        (0..self.len())
            .map(|a| {
                (0..self.len())
                    .map(|b| thetas.iter().map(|&t| self.value(a, t) * self.value(b, t)).sum::<f64>() / k as f64)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    pub r: f64,
    pub y: Vec<f64>,
    /// `coeffs[l][kappa]`.
    pub coeffs: Vec<Vec<f64>>,
    /// `|sum_l |w_l|^2 - (1/4pi) int |w|^2|`.
    pub parseval_residual: f64,
    pub mean_square: f64,
}

/// `w_l(r, y) = (1/4pi) int_0^{4pi} w(r, theta, y) phi_l(theta) d theta` by the
/// trapezoid rule, exact for half-frequencies up to `max_half_freq`.
pub fn fourier_coefficients<W: CoverFunction + ?Sized>(
    w: &W,
    basis: &CoverFourierBasis,
    r: f64,
    y: &[f64],
) -> FourierCoefficients {
    let k = basis.samples();
    let m = w.codim();
    let thetas: Vec<f64> = (0..k).map(|i| 4.0 * PI * i as f64 / k as f64).collect();
    let vals: Vec<Vec<f64>> = thetas.par_iter().map(|&t| w.eval(r, t, y)).collect();
    let coeffs: Vec<Vec<f64>> = (0..basis.len())
        .map(|l| {
            (0..m)
                .map(|c| {
                    let terms: Vec<f64> = thetas.iter().zip(&vals).map(|(&t, v)| v[c] * basis.value(l, t)).collect();
                    pairwise_sum(&terms) / k as f64
                })
                .collect()
        })
        .collect();
    let sq: Vec<f64> = vals.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
    let mean_square = pairwise_sum(&sq) / k as f64;
    let total: f64 = coeffs.iter().flatten().map(|x| x * x).sum();
    FourierCoefficients { r, y: y.to_vec(), coeffs, parseval_residual: (total - mean_square).abs(), mean_square }
}

/// CSV with columns `l,r,y1..,kappa,w_l` over a grid of radii and axis points.
pub fn coefficient_table_csv<W: CoverFunction + ?Sized>(
    w: &W,
    basis: &CoverFourierBasis,
    radii: &[f64],
    ys: &[Vec<f64>],
) -> String {
    let d = w.dim().saturating_sub(2);
    let mut s = String::from("l,r");
    for j in 0..d {
        write!(s, ",y{}", j + 1).unwrap();
    }
    s.push_str(",kappa,w_l\n");
    for &r in radii {
        for y in ys {
            let fc = fourier_coefficients(w, basis, r, y);
            for (l, row) in fc.coeffs.iter().enumerate() {
                for (kappa, v) in row.iter().enumerate() {
                    write!(s, "{l},{r:e}").unwrap();
                    for yj in y {
                        write!(s, ",{yj:e}").unwrap();
                    }
                    writeln!(s, ",{},{v:e}", kappa + 1).unwrap();
                }
            }
        }
    }
    s
}

/// The kernel span `L` for the profile `Re(c z^alpha)`: `e_kappa r^alpha cos(alpha theta)`,
/// `e_kappa r^alpha sin(alpha theta)` for each target component, and
/// `D_1 phi y_j`, `D_2 phi y_j` for each axis coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct LBasis {
    n: usize,
    alpha: f64,
    c: Vec<Complex64>,
}

impl LBasis {
    pub fn new(n: usize, c: Vec<Complex64>, k: u32) -> Result<Self, SpectralError> {
        if !(2..=4).contains(&n) {
            return Err(SpectralError::InvalidInput(format!("dimension {n} outside 2..=4")));
        }
        if k == 0 || c.is_empty() || c.iter().all(|z| z.norm() == 0.0) {
            return Err(SpectralError::InvalidInput("profile must have k >= 1 and c != 0".into()));
        }
        Ok(Self { n, alpha: k as f64 / 2.0, c })
    }

    pub fn from_profile(phi: &CylindricalProfile) -> Result<Self, SpectralError> {
        Self::new(phi.dim(), phi.c().to_vec(), phi.k())
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn codim(&self) -> usize {
        self.c.len()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn c(&self) -> &[Complex64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        2 * self.codim() + 2 * (self.n - 2)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dimension of the span. It falls short of `len()` only for
    /// `alpha = 1`, where `D_1 phi` and `D_2 phi` are the constant vectors
    /// `Re c` and `-Im c`.
    pub fn expected_rank(&self) -> usize {
        let m = self.codim();
        let d = self.n - 2;
        if (self.alpha - 1.0).abs() > 1e-12 || d == 0 {
            return 2 * m + 2 * d;
        }
        let u: Vec<f64> = self.c.iter().map(|z| z.re).collect();
        let v: Vec<f64> = self.c.iter().map(|z| -z.im).collect();
        let uu: f64 = u.iter().map(|x| x * x).sum();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let scale = uu.max(vv);
        let rank = if scale == 0.0 {
            0
        } else if (uu * vv - uv * uv).abs() <= 1e-12 * scale * scale {
            1
        } else {
            2
        };
        2 * m + rank * d
    }

    /// The profile's cover value `Re(c r^alpha e^{i alpha theta})`.
    pub fn phi(&self, r: f64, theta: f64) -> Vec<f64> {
        let e = Complex64::from_polar(r.powf(self.alpha), self.alpha * theta);
        self.c.iter().map(|c| (c * e).re).collect()
    }

    /// `D_i phi` on the cover, `i` in `{1, 2}`: `Re(alpha c z^{alpha-1})` and
    /// `Re(i alpha c z^{alpha-1})`.
    pub fn d_phi(&self, i: usize, r: f64, theta: f64) -> Vec<f64> {
        let a = self.alpha;
        let e = Complex64::from_polar(a * r.powf(a - 1.0), (a - 1.0) * theta);
        let rot = if i == 1 { Complex64::new(1.0, 0.0) } else { Complex64::i() };
        self.c.iter().map(|c| (rot * c * e).re).collect()
    }

    pub fn element(&self, idx: usize, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
        let m = self.codim();
        if idx < 2 * m {
            let mut v = vec![0.0; m];
            let ang = self.alpha * theta;
            let radial = r.powf(self.alpha);
            v[idx % m] = radial * if idx < m { ang.cos() } else { ang.sin() };
            return v;
        }
        let j = (idx - 2 * m) / 2;
        let i = 1 + (idx - 2 * m) % 2;
        self.d_phi(i, r, theta).into_iter().map(|x| x * y[j]).collect()
    }

    pub fn combination(&self, coeffs: Vec<f64>) -> LCombination {
        LCombination { basis: self.clone(), coeffs }
    }
}

/// `sum_a coeffs[a] * element_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LCombination {
    basis: LBasis,
    coeffs: Vec<f64>,
}

impl LCombination {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

impl CoverFunction for LCombination {
    fn dim(&self) -> usize {
        self.basis.n
    }
    fn codim(&self) -> usize {
        self.basis.codim()
    }
    fn eval(&self, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.codim()];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca != 0.0 {
                for (o, e) in out.iter_mut().zip(self.basis.element(a, r, theta, y)) {
                    *o += ca * e;
                }
            }
        }
        out
    }
}

/// `w - psi`.
pub struct Remainder<'a, W: ?Sized> {
    w: &'a W,
    psi: LCombination,
}

impl<'a, W: CoverFunction + ?Sized> Remainder<'a, W> {
    pub fn new(w: &'a W, psi: LCombination) -> Self {
        Self { w, psi }
    }
}

impl<W: CoverFunction + ?Sized> CoverFunction for Remainder<'_, W> {
    fn dim(&self) -> usize {
        self.w.dim()
    }
    fn codim(&self) -> usize {
        self.w.codim()
    }
    fn eval(&self, r: f64, theta: f64, y: &[f64]) -> Vec<f64> {
        let a = self.w.eval(r, theta, y);
        let b = self.psi.eval(r, theta, y);
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
    }
}

/// A quadrature node on the cover: both sheets of a ball node appear, at
/// `theta` and `theta + 2 pi`, with the ball weight.
#[derive(Debug, Clone, Copy)]
pub struct CoverNode {
    pub r: f64,
    pub theta: f64,
    pub y: [f64; 2],
    pub w: f64,
    /// Distance to the rule's center.
    pub dist: f64,
}

impl CoverNode {
    pub fn y(&self, n: usize) -> &[f64] {
        &self.y[..n - 2]
    }
}

/// Nodes for `int over graph phi |_{B_rho(center)}`, center on the axis
/// given by its `n` coordinates.
pub fn cover_nodes(center: &[f64], rho: f64, level: QuadLevel) -> Vec<CoverNode> {
    let n = center.len();
    let mut out = Vec::new();
    for nd in ball_nodes(center, rho, level) {
        let r = nd.x[0].hypot(nd.x[1]);
        let th = nd.x[1].atan2(nd.x[0]).rem_euclid(2.0 * PI);
        let mut y = [0.0; 2];
        y[..(n - 2)].copy_from_slice(&nd.x[2..n]);
        for sheet in [th, th + 2.0 * PI] {
            out.push(CoverNode { r, theta: sheet, y, w: nd.w, dist: nd.dist });
        }
    }
    out
}

/// `int over the graph of sum f(node)` with per-node values computed in
/// parallel and summed in a fixed order.
pub fn cover_integrate<F>(nodes: &[CoverNode], f: F) -> f64
where
    F: Fn(&CoverNode) -> f64 + Sync,
{
    let vals: Vec<f64> = nodes.par_iter().map(|nd| nd.w * f(nd)).collect();
    pairwise_sum(&vals)
}

/// `int over graph phi |_{B_rho} of |w|^2`.
pub fn cover_norm_sq<W: CoverFunction + ?Sized>(w: &W, rho: f64, level: QuadLevel) -> f64 {
    let n = w.dim();
    let nodes = cover_nodes(&vec![0.0; n], rho, level);
    cover_integrate(&nodes, |nd| w.eval(nd.r, nd.theta, nd.y(n)).iter().map(|x| x * x).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LProjection {
    pub rho: f64,
    pub coefficients: Vec<f64>,
    pub rank: usize,
    pub norm_sq_w: f64,
    pub norm_sq_psi: f64,
    pub norm_sq_remainder: f64,
    /// `|int |w|^2 - int |psi|^2 - int |w_rho|^2| / int |w|^2`.
    pub pythagoras_residual: f64,
    /// `max_a |<w_rho, e_a>| / (|w| |e_a|)`.
    pub orthogonality_residual: f64,
}

impl LProjection {
    pub fn psi(&self, basis: &LBasis) -> LCombination {
        basis.combination(self.coefficients.clone())
    }
}

/// Orthogonal projection of `w` onto `L` in `L^2(graph phi |_{B_rho})`.
/// The Gram matrix is inverted on the span of its eigenvectors above a
/// relative cutoff; a numerical rank below the span's dimension means the
/// rule cannot resolve `L` and is an error.
pub fn project_l<W: CoverFunction + ?Sized>(
    w: &W,
    basis: &LBasis,
    rho: f64,
    level: QuadLevel,
) -> Result<LProjection, SpectralError> {
    let n = basis.dim();
    if w.dim() != n || w.codim() != basis.codim() {
        return Err(SpectralError::InvalidInput("function and basis dimensions differ".into()));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(SpectralError::InvalidInput(format!("radius {rho} must be positive")));
    }
    let d = basis.len();
    let nodes = cover_nodes(&vec![0.0; n], rho, level);
    // per node: Gram upper triangle, right-hand side, |w|^2
    let tri = d * (d + 1) / 2;
    let per_node: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|nd| {
            let y = nd.y(n);
            let wv = w.eval(nd.r, nd.theta, y);
            let es: Vec<Vec<f64>> = (0..d).map(|a| basis.element(a, nd.r, nd.theta, y)).collect();
            let dotv = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
            let mut out = Vec::with_capacity(tri + d + 1);
            for a in 0..d {
                for b in a..d {
                    out.push(nd.w * dotv(&es[a], &es[b]));
                }
            }
            for e in &es {
                out.push(nd.w * dotv(e, &wv));
            }
            out.push(nd.w * dotv(&wv, &wv));
            out
        })
        .collect();
    let sums: Vec<f64> = (0..tri + d + 1)
        .map(|j| pairwise_sum(&per_node.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect();
    let mut g = DMatrix::<f64>::zeros(d, d);
    let mut t = 0;
    for a in 0..d {
        for b in a..d {
            g[(a, b)] = sums[t];
            g[(b, a)] = sums[t];
            t += 1;
        }
    }
    let rhs = DVector::from_column_slice(&sums[tri..tri + d]);
    let norm_sq_w = sums[tri + d];

    let eig = SymmetricEigen::new(g.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-10 * top;
    let mut coeffs = DVector::<f64>::zeros(d);
    let mut rank = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if top > 0.0 && lam > cutoff {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            coeffs += v * (v.dot(&rhs) / lam);
        }
    }
    let expected = basis.expected_rank();
    if rank < expected {
        return Err(SpectralError::GramSingular { rank, expected });
    }
    let psi = basis.combination(coeffs.iter().cloned().collect());
    let norm_sq_psi = (coeffs.transpose() * &g * &coeffs)[(0, 0)];
    let norm_sq_remainder = cover_integrate(&nodes, |nd| {
        let y = nd.y(n);
        let a = w.eval(nd.r, nd.theta, y);
        let b = psi.eval(nd.r, nd.theta, y);
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum()
    });
    let pythagoras_residual = if norm_sq_w > 0.0 {
        (norm_sq_w - norm_sq_psi - norm_sq_remainder).abs() / norm_sq_w
    } else {
        0.0
    };
    let cross = &rhs - &g * &coeffs;
    let orthogonality_residual = (0..d)
        .map(|a| {
            let den = (norm_sq_w * g[(a, a)]).sqrt();
            if den > 0.0 {
                cross[a].abs() / den
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(LProjection {
        rho,
        coefficients: coeffs.iter().cloned().collect(),
        rank,
        norm_sq_w,
        norm_sq_psi,
        norm_sq_remainder,
        pythagoras_residual,
        orthogonality_residual,
    })
}

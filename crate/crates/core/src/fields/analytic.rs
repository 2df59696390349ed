use super::{FieldError, PairGradient, TwoValuedField};
use crate::pairspace::UnorderedPair;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// `coef * prod_i x_i^{powers[i]}` with `coef in R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: Vec<f64>,
    pub powers: Vec<u32>,
}

/// `r^power (a cos(j theta/2) + b sin(j theta/2))` with `a, b in R^m`, where
/// `(r, theta)` are polar coordinates of `(x1, x2)` and `j = half_freq`.
///
/// The mode is harmonic exactly when `power = j/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMode {
    pub power: f64,
    pub half_freq: u32,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Coefficient `p + q * x3` of `z^d` in a branch polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCoefficient {
    pub constant: Complex64,
    pub axis_slope: Complex64,
}

impl BranchCoefficient {
    pub fn constant(c: Complex64) -> Self {
        Self { constant: c, axis_slope: Complex64::new(0.0, 0.0) }
    }
}

/// The symmetric part `s` of `u = {h + s, h - s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SymmetricPart {
    Zero,
    /// Sum of angular modes; all `half_freq` share a parity.
    Modes(Vec<AngularMode>),
    /// `s = Re(c * P(z, x3)^{1/2})` with `P = sum_d coeffs[d] z^d`.
    BranchPolynomial { c: Vec<Complex64>, coeffs: Vec<BranchCoefficient> },
}

/// An analytic two-valued field `{h + s, h - s}` on R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTwoValuedField {
    pub n: usize,
    pub m: usize,
    pub average: Vec<Monomial>,
    pub symmetric: SymmetricPart,
}

fn check_n(n: usize) -> Result<(), FieldError> {
    if !(2..=4).contains(&n) {
        return Err(FieldError::InvalidSpec(format!("ambient dimension {n} not in 2..=4")));
    }
    Ok(())
}

impl AnalyticTwoValuedField {
    /// `{± Re(c (x1 + i x2)^{k/2})}`.
    pub fn cylindrical(n: usize, c: Vec<Complex64>, k: u32) -> Result<Self, FieldError> {
        Self::power_sum(n, vec![(c, k)])
    }

    /// `{± Re(sum_j c_j (x1 + i x2)^{k_j/2})}`; all `k_j` must share a parity.
    pub fn power_sum(n: usize, terms: Vec<(Vec<Complex64>, u32)>) -> Result<Self, FieldError> {
        let m = terms
            .first()
            .map(|t| t.0.len())
            .ok_or_else(|| FieldError::InvalidSpec("power sum needs at least one term".into()))?;
        let modes = terms
            .into_iter()
            .map(|(c, k)| {
                if k == 0 {
                    return Err(FieldError::InvalidSpec("power index k must be positive".into()));
                }
                Ok(AngularMode {
                    power: k as f64 / 2.0,
                    half_freq: k,
                    a: c.iter().map(|c| c.re).collect(),
                    b: c.iter().map(|c| -c.im).collect(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_modes(n, m, modes)
    }

    /// Symmetric part given directly as angular modes (harmonic or not).
    pub fn from_modes(n: usize, m: usize, modes: Vec<AngularMode>) -> Result<Self, FieldError> {
        check_n(n)?;
        if m == 0 {
            return Err(FieldError::InvalidSpec("target dimension must be positive".into()));
        }
        let parity = modes.first().map(|md| md.half_freq % 2);
        for md in &modes {
            if md.a.len() != m || md.b.len() != m {
                return Err(FieldError::InvalidSpec("mode coefficients must have length m".into()));
            }
            if Some(md.half_freq % 2) != parity {
                return Err(FieldError::InvalidSpec(
                    "mixing odd and even half-frequencies does not define a two-valued field".into(),
                ));
            }
            if md.power < 0.0 || (md.power == 0.0 && md.half_freq != 0) {
                return Err(FieldError::InvalidSpec(format!("mode power {} not allowed", md.power)));
            }
        }
        Ok(Self { n, m, average: Vec::new(), symmetric: SymmetricPart::Modes(modes) })
    }

    /// `{± Re(c * P(z, x3)^{1/2})}` (a fixed branch of the root per point).
    pub fn branch_polynomial(
        n: usize,
        c: Vec<Complex64>,
        coeffs: Vec<BranchCoefficient>,
    ) -> Result<Self, FieldError> {
        check_n(n)?;
        if c.is_empty() || coeffs.is_empty() {
            return Err(FieldError::InvalidSpec("branch polynomial needs c and coefficients".into()));
        }
        let m = c.len();
        Ok(Self { n, m, average: Vec::new(), symmetric: SymmetricPart::BranchPolynomial { c, coeffs } })
    }

    /// `{± (z^2 - t^2)^{1/2}}` as an R^2-valued field (real and imaginary parts).
    pub fn two_point_branch(n: usize, t: f64) -> Result<Self, FieldError> {
        let one = Complex64::new(1.0, 0.0);
        Self::branch_polynomial(
            n,
            vec![one, Complex64::new(0.0, -1.0)],
            vec![
                BranchCoefficient::constant(Complex64::new(-t * t, 0.0)),
                BranchCoefficient::constant(Complex64::new(0.0, 0.0)),
                BranchCoefficient::constant(one),
            ],
        )
    }

    /// A single-valued average `h` with zero symmetric part.
    pub fn single_valued(n: usize, m: usize, average: Vec<Monomial>) -> Result<Self, FieldError> {
        check_n(n)?;
        let f = Self { n, m, average: Vec::new(), symmetric: SymmetricPart::Zero };
        f.with_average(average)
    }

    /// Adds a polynomial average `h`.
    pub fn with_average(mut self, average: Vec<Monomial>) -> Result<Self, FieldError> {
        for mono in &average {
            if mono.coef.len() != self.m || mono.powers.len() != self.n {
                return Err(FieldError::InvalidSpec("monomial shape mismatch".into()));
            }
        }
        self.average = average;
        Ok(self)
    }

    /// Degree of homogeneity when the symmetric part is a single harmonic mode.
    pub fn homogeneity(&self) -> Option<f64> {
        match &self.symmetric {
            SymmetricPart::Modes(modes) if modes.len() == 1 && self.average.is_empty() => Some(modes[0].power),
            _ => None,
        }
    }

    fn average_at(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.m];
        for mono in &self.average {
            let v: f64 = mono.powers.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product();
            for k in 0..self.m {
                h[k] += mono.coef[k] * v;
            }
        }
        h
    }

    fn average_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; self.m * n];
        for mono in &self.average {
            for i in 0..n {
                let p = mono.powers[i];
                if p == 0 {
                    continue;
                }
                let mut v = p as f64 * x[i].powi(p as i32 - 1);
                for (j, (&pj, &xj)) in mono.powers.iter().zip(x).enumerate() {
                    if j != i {
                        v *= xj.powi(pj as i32);
                    }
                }
                for k in 0..self.m {
                    g[k * n + i] += mono.coef[k] * v;
                }
            }
        }
        g
    }

    fn symmetric_at(&self, x: &[f64]) -> Vec<f64> {
        match &self.symmetric {
            SymmetricPart::Zero => vec![0.0; self.m],
            SymmetricPart::Modes(modes) => {
                let r = x[0].hypot(x[1]);
                let th = x[1].atan2(x[0]);
                let mut s = vec![0.0; self.m];
                for md in modes {
                    let rp = if md.power == 0.0 { 1.0 } else { r.powf(md.power) };
                    if rp == 0.0 {
                        continue;
                    }
                    let (sn, cs) = (0.5 * md.half_freq as f64 * th).sin_cos();
                    for k in 0..self.m {
                        s[k] += rp * (md.a[k] * cs + md.b[k] * sn);
                    }
                }
                s
            }
            SymmetricPart::BranchPolynomial { c, .. } => {
                let g = self.branch_root(x).0;
                c.iter().map(|ck| (ck * g).re).collect()
            }
        }
    }

    /// `(sqrt(P), dP/dz, dP/dx3)`.
    fn branch_root(&self, x: &[f64]) -> (Complex64, Complex64, Complex64) {
        let SymmetricPart::BranchPolynomial { coeffs, .. } = &self.symmetric else {
            unreachable!()
        };
        let z = Complex64::new(x[0], x[1]);
        let y = if self.n >= 3 { x[2] } else { 0.0 };
        let mut p = Complex64::new(0.0, 0.0);
        let mut pz = Complex64::new(0.0, 0.0);
        let mut py = Complex64::new(0.0, 0.0);
        for bc in coeffs.iter().rev() {
            let a = bc.constant + bc.axis_slope * y;
            pz = pz * z + p;
            p = p * z + a;
            py = py * z + bc.axis_slope;
        }
        (p.sqrt(), pz, py)
    }

    fn symmetric_gradient(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        let n = self.n;
        let m = self.m;
        let mut g = vec![0.0; m * n];
        match &self.symmetric {
            SymmetricPart::Zero => {}
            SymmetricPart::Modes(modes) => {
                let r = x[0].hypot(x[1]);
                let th = x[1].atan2(x[0]);
                let (st, ct) = th.sin_cos();
                for md in modes {
                    if md.power == 0.0 {
                        continue;
                    }
                    if r == 0.0 && md.power < 1.0 {
                        if md.a.iter().chain(&md.b).any(|v| *v != 0.0) {
                            return Err(FieldError::SingularEvaluation { point: x.to_vec() });
                        }
                        continue;
                    }
                    let rpm1 = if md.power == 1.0 { 1.0 } else { r.powf(md.power - 1.0) };
                    let half = 0.5 * md.half_freq as f64;
                    let (sn, cs) = (half * th).sin_cos();
                    for k in 0..m {
                        // d_r s and (1/r) d_theta s
                        let dr = md.power * rpm1 * (md.a[k] * cs + md.b[k] * sn);
                        let dth = rpm1 * half * (-md.a[k] * sn + md.b[k] * cs);
                        g[k * n] += ct * dr - st * dth;
                        g[k * n + 1] += st * dr + ct * dth;
                    }
                }
            }
            SymmetricPart::BranchPolynomial { c, .. } => {
                let (root, pz, py) = self.branch_root(x);
                if root.norm() < 1e-300 {
                    return Err(FieldError::SingularEvaluation { point: x.to_vec() });
                }
                let gz = pz / (2.0 * root);
                let gy = py / (2.0 * root);
                let i = Complex64::new(0.0, 1.0);
                for (k, ck) in c.iter().enumerate() {
                    g[k * n] = (ck * gz).re;
                    g[k * n + 1] = (ck * gz * i).re;
                    if n >= 3 {
                        g[k * n + 2] = (ck * gy).re;
                    }
                }
            }
        }
        Ok(g)
    }

    /// `(h(X), s(X))` for the branch fixed at `X`.
    pub fn average_and_symmetric(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.average_at(x), self.symmetric_at(x))
    }
}

impl TwoValuedField for AnalyticTwoValuedField {
    fn dim(&self) -> usize {
        self.n
    }
    fn codim(&self) -> usize {
        self.m
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        let (h, s) = self.average_and_symmetric(x);
        UnorderedPair::from_average_symmetric(&h, &s)
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        let ds = self.symmetric_gradient(x)?;
        let dh = self.average_gradient(x);
        let (h, s) = self.average_and_symmetric(x);
        let g1 = dh.iter().zip(&ds).map(|(a, b)| a + b).collect();
        let g2 = dh.iter().zip(&ds).map(|(a, b)| a - b).collect();
        Ok((UnorderedPair::from_average_symmetric(&h, &s), PairGradient { g1, g2 }))
    }
}

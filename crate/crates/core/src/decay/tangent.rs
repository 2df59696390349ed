//! Tangent extraction at a branch point: subtract a harmonic fit of the
//! average and the limit profile, then tabulate the remainder across scales.

use super::iteration::DecayRun;
use super::{middle_slope, DecayError};
use crate::fields::{l2_norm_sq, TwoValuedField};
use crate::pairspace::{decompose, metric_g_sq, UnorderedPair};
use crate::quadrature::{ball_nodes, integrate, QuadLevel};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `sum coef * x^powers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPolynomial {
    pub n: usize,
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl HarmonicPolynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(p, c)| c * p.iter().zip(x).map(|(e, v)| v.powi(*e as i32)).product::<f64>())
            .sum()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(p, _)| p.iter().sum()).max().unwrap_or(0)
    }

    /// Exact Laplacian, as a polynomial.
    pub fn laplacian(&self) -> HarmonicPolynomial {
        let mut terms: Vec<(Vec<u32>, f64)> = Vec::new();
        for (p, c) in &self.terms {
            for i in 0..self.n {
                if p[i] >= 2 {
                    let mut q = p.clone();
                    q[i] -= 2;
                    let v = c * (p[i] * (p[i] - 1)) as f64;
                    match terms.iter_mut().find(|t| t.0 == q) {
                        Some(t) => t.1 += v,
                        None => terms.push((q, v)),
                    }
                }
            }
        }
        HarmonicPolynomial { n: self.n, terms }
    }
}

fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    (0..=d)
        .rev()
        .flat_map(|first| {
            monomials(n - 1, d - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Orthonormal (in coefficient space) basis of harmonic polynomials of
/// degree at most `degree`, ordered by degree.
pub fn harmonic_basis(n: usize, degree: u32) -> Vec<HarmonicPolynomial> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mons = monomials(n, d);
        if d < 2 {
            out.extend(mons.into_iter().map(|p| HarmonicPolynomial { n, terms: vec![(p, 1.0)] }));
            continue;
        }
        let low = monomials(n, d - 2);
        let mut lap = DMatrix::<f64>::zeros(low.len(), mons.len());
        for (j, p) in mons.iter().enumerate() {
            for i in 0..n {
                if p[i] >= 2 {
                    let mut q = p.clone();
                    q[i] -= 2;
                    let row = low.iter().position(|m| *m == q).expect("degree d-2 monomial");
                    lap[(row, j)] += (p[i] * (p[i] - 1)) as f64;
                }
            }
        }
        let eig = SymmetricEigen::new(lap.transpose() * &lap);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut null: Vec<usize> = (0..mons.len()).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top).collect();
        null.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        for i in null {
            let v = eig.eigenvectors.column(i);
            let terms = mons
                .iter()
                .zip(v.iter())
                .filter(|(_, c)| c.abs() > 1e-14)
                .map(|(p, c)| (p.clone(), *c))
                .collect();
            out.push(HarmonicPolynomial { n, terms });
        }
    }
    out
}

/// Least-squares harmonic fit of the average `(u_1 + u_2)/2` in the scaled
/// coordinates `(x - center)/radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub center: Vec<f64>,
    pub radius: f64,
    pub basis: Vec<HarmonicPolynomial>,
    /// `coefficients[kappa][i]` multiplies `basis[i]` in component `kappa`.
    pub coefficients: Vec<Vec<f64>>,
    /// `int |avg - h|^2 / int |avg|^2` over the fit ball (0 when the average vanishes).
    pub residual: f64,
}

impl HarmonicFit {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| (a - c) / self.radius).collect();
        let vals: Vec<f64> = self.basis.iter().map(|p| p.eval(&s)).collect();
        self.coefficients.iter().map(|co| co.iter().zip(&vals).map(|(a, b)| a * b).sum()).collect()
    }
}

pub fn fit_average<F: TwoValuedField + ?Sized>(
    u: &F,
    center: &[f64],
    radius: f64,
    degree: u32,
    level: QuadLevel,
) -> Result<HarmonicFit, DecayError> {
    let n = u.dim();
    let m = u.codim();
    if center.len() != n || !(radius > 0.0) {
        return Err(DecayError::InvalidInput("fit ball must have a positive radius and match the field".into()));
    }
    let basis = harmonic_basis(n, degree);
    let b = basis.len();
    let nodes = ball_nodes(center, radius, level);
    let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = nodes
        .par_iter()
        .map(|nd| {
            let x = &nd.x[..n];
            let s: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / radius).collect();
            let (avg, _) = decompose(&u.eval(x));
            (nd.w, basis.iter().map(|p| p.eval(&s)).collect(), avg)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(b, b);
    let mut rhs = DMatrix::<f64>::zeros(b, m);
    let mut total = 0.0;
    for (w, phi, avg) in &rows {
        for i in 0..b {
            for j in 0..b {
                gram[(i, j)] += w * phi[i] * phi[j];
            }
            for k in 0..m {
                rhs[(i, k)] += w * phi[i] * avg[k];
            }
        }
        total += w * avg.iter().map(|v| v * v).sum::<f64>();
    }
    let chol = gram.cholesky().ok_or_else(|| DecayError::InvalidInput("harmonic Gram matrix is singular".into()))?;
    let coef = chol.solve(&rhs);
    let coefficients: Vec<Vec<f64>> = (0..m).map(|k| coef.column(k).iter().cloned().collect()).collect();
    let fit = HarmonicFit { center: center.to_vec(), radius, basis, coefficients, residual: 0.0 };
    let resid: f64 = rows
        .iter()
        .zip(&nodes)
        .map(|((w, _, avg), nd)| {
            let h = fit.eval(&nd.x[..n]);
            w * avg.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum();
    let residual = if total > 0.0 { resid / total } else { 0.0 };
    Ok(HarmonicFit { residual, ..fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentOptions {
    /// Largest scale of the remainder tables.
    pub sigma0: f64,
    /// Number of halvings below `sigma0`.
    pub count: usize,
    pub level: QuadLevel,
    /// Degree of the harmonic fit of the average.
    pub degree: u32,
    pub fit_radius: f64,
    /// Relative size of `c` below which the point is not a branch point.
    pub c_tol: f64,
}

impl Default for TangentOptions {
    fn default() -> Self {
        Self { sigma0: 0.5, count: 8, level: QuadLevel::MEDIUM, degree: 4, fit_radius: 1.0, c_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentResult {
    pub center: Vec<f64>,
    pub k: u32,
    pub c: Vec<Complex64>,
    /// `e^A`, row-major.
    pub rotation: Vec<f64>,
    pub a: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// `sigma^{-n} int_{B_sigma} |eps|^2`.
    pub l2_table: Vec<f64>,
    /// `max over B_sigma of |eps|^2`, sampled on the quadrature nodes.
    pub sup_table: Vec<f64>,
    pub l2_slope: Option<f64>,
    pub sup_slope: Option<f64>,
    /// `l2_slope - k`.
    pub gamma: Option<f64>,
    /// `max sigma^{-k-gamma} * l2_table`.
    pub constant: Option<f64>,
    pub average_residual: f64,
    /// The remainder vanished to roundoff at every scale.
    pub exact: bool,
}

impl TangentResult {
    /// CSV with columns `sigma,l2,sup`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("sigma,l2,sup\n");
        for ((a, b), c) in self.sigmas.iter().zip(&self.l2_table).zip(&self.sup_table) {
            writeln!(s, "{a:e},{b:e},{c:e}").unwrap();
        }
        s
    }
}

/// `u = h + phi_Z + eps` about the run's center, with the remainder measured
/// by `|eps| = G(u - h, phi_Z)`.
pub fn tangent_expansion<F: TwoValuedField + ?Sized>(
    u: &F,
    run: &DecayRun,
    opts: &TangentOptions,
) -> Result<TangentResult, DecayError> {
    let n = u.dim();
    let z = run.center.clone();
    let phi = run.limit()?;
    let c_norm = phi.c().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let u_norm = l2_norm_sq(u, &z, 1.0, opts.level).sqrt();
    if c_norm <= opts.c_tol * u_norm || c_norm == 0.0 {
        return Err(DecayError::NotABranchPoint(c_norm));
    }
    let h = fit_average(u, &z, opts.fit_radius, opts.degree, opts.level)?;
    let eps_sq = |x: &[f64]| -> f64 {
        let p = u.eval(x);
        let hv = h.eval(x);
        let shifted = UnorderedPair::new(
            p.a1.iter().zip(&hv).map(|(a, b)| a - b).collect(),
            p.a2.iter().zip(&hv).map(|(a, b)| a - b).collect(),
        );
        metric_g_sq(&shifted, &phi.eval(x)).unwrap_or(f64::NAN)
    };
    let sigmas: Vec<f64> = (0..opts.count).map(|i| opts.sigma0 * 0.5f64.powi(i as i32)).collect();
    let mut l2_table = Vec::with_capacity(sigmas.len());
    let mut sup_table = Vec::with_capacity(sigmas.len());
    for &s in &sigmas {
        let nodes = ball_nodes(&z, s, opts.level);
        let vals: Vec<f64> = nodes.par_iter().map(|nd| eps_sq(&nd.x[..n])).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DecayError::InvalidInput("field and profile target dimensions differ".into()));
        }
        let l2 = integrate(&nodes, n, |x, _| eps_sq(x)) / s.powi(n as i32);
        l2_table.push(l2);
        sup_table.push(vals.iter().cloned().fold(0.0, f64::max));
    }
    let scale = u_norm * u_norm;
    let exact = l2_table.iter().all(|v| *v <= 1e-26 * scale);
    let (l2_slope, sup_slope) = if exact {
        (None, None)
    } else {
        (middle_slope(&sigmas, &l2_table), middle_slope(&sigmas, &sup_table))
    };
    let k = phi.k();
    let gamma = l2_slope.map(|s| s - k as f64);
    let constant = l2_slope.map(|p| sigmas.iter().zip(&l2_table).map(|(s, v)| v / s.powf(p)).fold(0.0, f64::max));
    Ok(TangentResult {
        center: z,
        k,
        c: phi.c().to_vec(),
        rotation: phi.rotation().to_vec(),
        a: phi.a().to_vec(),
        sigmas,
        l2_table,
        sup_table,
        l2_slope,
        sup_slope,
        gamma,
        constant,
        average_residual: h.residual,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::super::iteration::{iterate, DecayOptions};
    use super::*;
    use crate::fields::{AnalyticTwoValuedField, Monomial};
    use crate::profiles::{excess, CylindricalProfile};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_counts_match_spherical_harmonics() {
        // sum over d <= 4 of dim H_d: 2d+1 choose-style counts
        assert_eq!(harmonic_basis(2, 4).len(), 9);
        assert_eq!(harmonic_basis(3, 4).len(), 25);
        assert_eq!(harmonic_basis(4, 2).len(), 1 + 4 + 9);
    }

    #[test]
    fn basis_elements_are_harmonic() {
        for n in [2, 3] {
            for p in harmonic_basis(n, 4) {
                let lap = p.laplacian();
                assert!(lap.terms.iter().all(|(_, c)| c.abs() < 1e-10), "{p:?}");
            }
        }
    }

    #[test]
    fn average_fit_recovers_harmonic_polynomial() {
        // h = 1 + x1 x2 + x1^2 - x2^2 (+ x3 in 3d)
        let avg = vec![
            Monomial { coef: vec![1.0], powers: vec![0, 0, 0] },
            Monomial { coef: vec![1.0], powers: vec![1, 1, 0] },
            Monomial { coef: vec![1.0], powers: vec![2, 0, 0] },
            Monomial { coef: vec![-1.0], powers: vec![0, 2, 0] },
            Monomial { coef: vec![0.5], powers: vec![0, 0, 1] },
        ];
        let u = AnalyticTwoValuedField::cylindrical(3, vec![c(1.0, 0.0)], 1).unwrap().with_average(avg).unwrap();
        let fit = fit_average(&u, &[0.0; 3], 1.0, 4, QuadLevel::MEDIUM).unwrap();
        for x in [[0.1, 0.2, -0.3], [-0.5, 0.1, 0.4]] {
            let want = 1.0 + x[0] * x[1] + x[0] * x[0] - x[1] * x[1] + 0.5 * x[2];
            assert!((fit.eval(&x)[0] - want).abs() < 1e-10);
        }
        assert!(fit.residual < 1e-20);
    }

    #[test]
    fn exact_profile_has_vanishing_remainder() {
        let phi = CylindricalProfile::new(2, vec![c(0.6, 0.8)], 3).unwrap();
        let opts = DecayOptions { j_max: 2, level: QuadLevel::COARSE, ..Default::default() };
        let run = iterate(&phi, &[0.0, 0.0], &phi, &opts).unwrap();
        let t = tangent_expansion(&phi, &run, &TangentOptions { level: QuadLevel::COARSE, ..Default::default() })
            .unwrap();
        assert!(t.exact);
        assert_eq!(t.gamma, None);
    }

    #[test]
    fn remainder_slopes_for_next_order_term() {
        for k in [1u32, 3] {
            let c0 = c(1.0, 0.5);
            let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c0], k), (vec![c(0.02, 0.0)], k + 2)]).unwrap();
            let guess = CylindricalProfile::new(2, vec![c(1.0, 0.0)], k).unwrap();
            let run = iterate(&u, &[0.0, 0.0], &guess, &DecayOptions::default()).unwrap();
            let t = tangent_expansion(&u, &run, &TangentOptions::default()).unwrap();
            let l2 = t.l2_slope.unwrap();
            assert!((l2 - (k as f64 + 2.0)).abs() < 0.1, "k={k}: {l2} {:?}", t.l2_table);
            assert!(t.sup_slope.unwrap() >= k as f64, "k={k}: {:?}", t.sup_slope);
            assert!((t.gamma.unwrap() - 2.0).abs() < 0.1);
            assert!(t.to_csv().lines().count() == t.sigmas.len() + 1);
        }
    }

    #[test]
    fn limit_profiles_agree_across_scale_ratios() {
        let c0 = c(0.3, 0.9);
        let u = AnalyticTwoValuedField::power_sum(3, vec![(vec![c0], 1), (vec![c(0.01, 0.0)], 3)]).unwrap();
        let guess = CylindricalProfile::new(3, vec![c(1.0, 0.0)], 1).unwrap();
        let mut limits = Vec::new();
        for theta in [0.125, 0.0625] {
            let opts = DecayOptions { theta, j_max: 3, ..Default::default() };
            let run = iterate(&u, &[0.0; 3], &guess, &opts).unwrap();
            limits.push(run.limit().unwrap());
        }
        let d = excess(&limits[0], &limits[1], &[0.0; 3], 1.0, QuadLevel::MEDIUM);
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn vanishing_coefficient_is_not_a_branch_point() {
        // a single-valued field with a negligible two-valued part
        let avg = vec![Monomial { coef: vec![1.0], powers: vec![1, 0] }, Monomial { coef: vec![0.5], powers: vec![0, 0] }];
        let u = AnalyticTwoValuedField::cylindrical(2, vec![c(1e-12, 0.0)], 1).unwrap().with_average(avg).unwrap();
        let phi = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        let opts = DecayOptions { j_max: 1, level: QuadLevel::COARSE, ..Default::default() };
        let run = iterate(&u, &[0.0, 0.0], &phi, &opts).unwrap();
        let err = tangent_expansion(&u, &run, &TangentOptions::default()).unwrap_err();
        assert!(matches!(err, DecayError::NotABranchPoint(_)), "{err:?}");
    }
}

//! Quadrature on balls and spheres adapted to fields that are singular along
//! the axis `{0} x R^{n-2}`.
//!
//! Spheres use axis-adapted coordinates
//! `X = (cos(psi) e^{i phi}, sin(psi) * omega)` so the axis sits at the ends of
//! the Gauss interval in `psi`; balls add a radial Gauss rule in `t` with
//! `s = rho t^2`, which turns the half-integer radial powers of model fields
//! into polynomials.

use rayon::prelude::*;
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    if n == 1 {
        (x, 1.0)
    } else {
        (p1, d)
    }
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|x| mid + half * x).collect(),
        w.iter().map(|w| w * half).collect(),
    )
}

/// Pairwise (tree) summation in a fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Resolution of the ball and sphere rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QuadLevel {
    pub radial: usize,
    pub polar: usize,
    pub azimuth: usize,
}

impl QuadLevel {
    pub const COARSE: QuadLevel = QuadLevel { radial: 12, polar: 8, azimuth: 24 };
    pub const MEDIUM: QuadLevel = QuadLevel { radial: 24, polar: 16, azimuth: 48 };
    pub const FINE: QuadLevel = QuadLevel { radial: 40, polar: 24, azimuth: 96 };

    /// Level `k` of a doubling ladder starting from `COARSE`-like sizes.
    pub fn ladder(k: u32) -> QuadLevel {
        let f = 1usize << k;
        QuadLevel { radial: 6 * f, polar: 4 * f, azimuth: 12 * f }
    }
}

impl Default for QuadLevel {
    fn default() -> Self {
        QuadLevel::MEDIUM
    }
}

/// Nodes on the unit sphere `S^{n-1}` with surface weights.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub n: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n: usize, level: QuadLevel) -> Self {
        assert!((2..=4).contains(&n), "sphere rules support n in 2..=4");
        let na = level.azimuth;
        let dphi = 2.0 * PI / na as f64;
        let phis: Vec<f64> = (0..na).map(|j| (j as f64 + 0.5) * dphi).collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match n {
            2 => {
                for &phi in &phis {
                    points.push([phi.cos(), phi.sin(), 0.0, 0.0]);
                    weights.push(dphi);
                }
            }
            3 => {
                let (psi, wpsi) = gauss_interval(level.polar, -PI / 2.0, PI / 2.0);
                for (p, wp) in psi.iter().zip(&wpsi) {
                    let (sp, cp) = p.sin_cos();
                    for &phi in &phis {
                        points.push([cp * phi.cos(), cp * phi.sin(), sp, 0.0]);
                        weights.push(wp * cp * dphi);
                    }
                }
            }
            _ => {
                let (psi, wpsi) = gauss_interval(level.polar, 0.0, PI / 2.0);
                let nc = (na / 2).max(4);
                let dchi = 2.0 * PI / nc as f64;
                for (p, wp) in psi.iter().zip(&wpsi) {
                    let (sp, cp) = p.sin_cos();
                    for &phi in &phis {
                        for l in 0..nc {
                            let chi = (l as f64 + 0.5) * dchi;
                            points.push([
                                cp * phi.cos(),
                                cp * phi.sin(),
                                sp * chi.cos(),
                                sp * chi.sin(),
                            ]);
                            weights.push(wp * cp * sp * dphi * dchi);
                        }
                    }
                }
            }
        }
        Self { n, points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A quadrature node: absolute position, weight, and distance to the rule's
/// center.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: [f64; 4],
    pub w: f64,
    pub dist: f64,
}

/// Rule for `integral over dB_rho(center)`.
pub fn sphere_nodes(center: &[f64], rho: f64, level: QuadLevel) -> Vec<Node> {
    let n = center.len();
    let rule = SphereRule::new(n, level);
    let scale = rho.powi(n as i32 - 1);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let mut x = [0.0; 4];
            for i in 0..n {
                x[i] = center[i] + rho * p[i];
            }
            Node { x, w: w * scale, dist: rho }
        })
        .collect()
}

/// Rule for `integral over B_rho(center)`, graded toward the center.
pub fn ball_nodes(center: &[f64], rho: f64, level: QuadLevel) -> Vec<Node> {
    let n = center.len();
    let rule = SphereRule::new(n, level);
    let (t, wt) = gauss_interval(level.radial, 0.0, 1.0);
    let mut out = Vec::with_capacity(t.len() * rule.len());
    for (ti, wti) in t.iter().zip(&wt) {
        let s = rho * ti * ti;
        let jac = 2.0 * rho * ti * s.powi(n as i32 - 1);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 4];
            for i in 0..n {
                x[i] = center[i] + s * p[i];
            }
            out.push(Node { x, w: wti * jac * w, dist: s });
        }
    }
    out
}

/// `sum w_i f(x_i)` with values computed in parallel and summed in a fixed order.
pub fn integrate<F>(nodes: &[Node], n: usize, f: F) -> f64
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    let vals: Vec<f64> = nodes.par_iter().map(|nd| nd.w * f(&nd.x[..n], nd.dist)).collect();
    pairwise_sum(&vals)
}

/// Vector-valued variant of [`integrate`]; every call of `f` must return `k` values.
pub fn integrate_vec<F>(nodes: &[Node], n: usize, k: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    let vals: Vec<Vec<f64>> = nodes.par_iter().map(|nd| f(&nd.x[..n], nd.dist)).collect();
    (0..k)
        .map(|j| {
            let col: Vec<f64> = vals.iter().zip(nodes).map(|(v, nd)| nd.w * v[j]).collect();
            pairwise_sum(&col)
        })
        .collect()
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        _ => {
            let nf = n as f64;
            PI.powf(nf / 2.0) / gamma_half_integer(nf / 2.0 + 1.0)
        }
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    // x is an integer or half-integer > 0
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut y = 0.5;
        while y < x - 0.25 {
            g *= y;
            y += 1.0;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn sphere_areas() {
        let areas = [2.0 * PI, 4.0 * PI, 2.0 * PI * PI];
        for (n, area) in (2..=4).zip(areas) {
            let nodes = sphere_nodes(&vec![0.0; n], 1.0, QuadLevel::MEDIUM);
            let a: f64 = nodes.iter().map(|nd| nd.w).sum();
            assert!((a - area).abs() < 1e-12, "n={n}: {a}");
        }
    }

    #[test]
    fn ball_moments() {
        // integral |X|^2 over B_rho = |S^{n-1}| rho^{n+2}/(n+2)
        let areas = [2.0 * PI, 4.0 * PI, 2.0 * PI * PI];
        for (n, area) in (2..=4).zip(areas) {
            let rho = 0.7;
            let center = vec![0.1; n];
            let nodes = ball_nodes(&center, rho, QuadLevel::MEDIUM);
            let v = integrate(&nodes, n, |x, _| {
                x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
            });
            let exact = area * rho.powi(n as i32 + 2) / (n as f64 + 2.0);
            assert!((v - exact).abs() < 1e-12 * exact.max(1.0), "n={n}");
            let vol = integrate(&nodes, n, |_, _| 1.0);
            assert!((vol - unit_ball_volume(n) * rho.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn half_integer_axis_powers_are_exact() {
        // integral over B_1 in R^3 of |x|^{1} (distance to axis) = 2 * integral_{-1}^{1} 2 pi (1-y^2)^{3/2}/3 dy
        let nodes = ball_nodes(&[0.0; 3], 1.0, QuadLevel::MEDIUM);
        let v = integrate(&nodes, 3, |x, _| x[0].hypot(x[1]));
        let exact = PI * PI / 4.0;
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-12);
    }
}

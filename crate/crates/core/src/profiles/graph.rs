//! Coarse graphical representation of `u` over the graph of a profile on a
//! cylindrical grid `(r, theta, y)` in the profile's frame.

use super::{CylindricalProfile, ProfileError};
use crate::fields::TwoValuedField;
use crate::pairspace::{dist_sq, UnorderedPair};
use crate::quadrature::QuadLevel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

/// Midpoint cylindrical grid of `B_gamma`: `n_r` radii, `n_theta` angles and
/// (for `n = 3`) `n_y` axis layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_y: usize,
}

impl Default for GraphGrid {
    fn default() -> Self {
        Self { n_r: 40, n_theta: 96, n_y: 24 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphRepresentation {
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Node coordinates in the ambient space.
    pub coords: Vec<Vec<f64>>,
    /// `r = |x|` in the profile frame.
    pub radii: Vec<f64>,
    /// `(radial index, axis index)` of the ring containing each node.
    pub ring: Vec<(usize, usize)>,
    pub in_u: Vec<bool>,
    /// `{v(X, phi_1(X)), v(X, -phi_1(X))}` on `U`.
    pub v_hat: Vec<Option<UnorderedPair>>,
    pub sup_v: f64,
    pub sup_dv: f64,
    /// `int_U (|v|^2 + r^2 |Dv|^2)`.
    pub integral_graph: f64,
    /// `int_{B_gamma minus U} (|u|^2 + r^2 |Du|^2)`.
    pub integral_complement: f64,
    /// `int_{B_1} G(u, phi)^2`.
    pub excess: f64,
}

impl GraphRepresentation {
    /// The two integral bounds against the excess.
    pub fn integral_ratio(&self) -> f64 {
        (self.integral_graph + self.integral_complement) / self.excess
    }

    /// `{phi_1 + v(X, phi_1), -phi_1 + v(X, -phi_1)}` at node `i` in `U`.
    pub fn reconstruct(&self, i: usize, phi: &CylindricalProfile) -> Option<UnorderedPair> {
        let v = self.v_hat[i].as_ref()?;
        let p = phi.principal_value(&self.coords[i]);
        Some(UnorderedPair::new(
            p.iter().zip(&v.a1).map(|(a, b)| a + b).collect(),
            p.iter().zip(&v.a2).map(|(a, b)| -a + b).collect(),
        ))
    }
}

/// Pairs `u` against `±phi_1` ring by ring. A ring belongs to `U` when every
/// node satisfies `r^{-alpha} |v| <= beta` and the continuous selection of
/// `u` around it has the profile's holonomy `(-1)^k`. Rings with `r > tau`
/// are seeded into `U`; rings inside the tube join by flood fill from
/// neighbouring rings. A ring outside the tube that passes the smallness
/// test but has the wrong holonomy is a decomposition failure.
pub fn graphical_decompose<F: TwoValuedField + ?Sized>(
    u: &F,
    phi: &CylindricalProfile,
    tau: f64,
    gamma: f64,
    beta: f64,
    grid: GraphGrid,
    level: QuadLevel,
) -> Result<GraphRepresentation, ProfileError> {
    let n = u.dim();
    if !(2..=3).contains(&n) || phi.dim() != n || phi.codim() != u.codim() {
        return Err(ProfileError::InvalidInput("graphical decomposition runs in n = 2 or 3 with matching shapes".into()));
    }
    if !(0.0 < tau && tau < gamma && gamma <= 1.0 && beta > 0.0) {
        return Err(ProfileError::InvalidInput("need 0 < tau < gamma <= 1 and beta > 0".into()));
    }
    let alpha = phi.alpha();
    let n_y = if n == 2 { 1 } else { grid.n_y.max(2) };
    let (nr, nt) = (grid.n_r.max(4), grid.n_theta.max(8));
    let dr = gamma / nr as f64;
    let dth = 2.0 * PI / nt as f64;
    let dy = 2.0 * gamma / n_y as f64;
    let q = phi.rotation();
    let z = phi.center();
    let to_world = |w: &[f64]| -> Vec<f64> { (0..n).map(|i| z[i] + (0..n).map(|l| q[l * n + i] * w[l]).sum::<f64>()).collect() };

    // rings (i, l) that lie inside B_gamma
    let mut rings: Vec<(usize, usize, f64, f64)> = Vec::new();
    for l in 0..n_y {
        let y = if n == 2 { 0.0 } else { -gamma + (l as f64 + 0.5) * dy };
        for i in 0..nr {
            let r = (i as f64 + 0.5) * dr;
            if r * r + y * y < gamma * gamma {
                rings.push((i, l, r, y));
            }
        }
    }
    struct RingData {
        nodes: Vec<Vec<f64>>,
        u_vals: Vec<UnorderedPair>,
        v_hat: Vec<UnorderedPair>,
        small: bool,
        holonomy_ok: bool,
    }
    let hol_phi = if phi.k() % 2 == 1 { -1.0 } else { 1.0 };
    let data: Vec<RingData> = rings
        .par_iter()
        .map(|&(_, _, r, y)| {
            let nodes: Vec<Vec<f64>> = (0..nt)
                .map(|j| {
                    let th = (j as f64 + 0.5) * dth;
                    let mut w = vec![r * th.cos(), r * th.sin()];
                    if n == 3 {
                        w.push(y);
                    }
                    to_world(&w)
                })
                .collect();
            let u_vals: Vec<UnorderedPair> = nodes.iter().map(|x| u.eval(x)).collect();
            let mut small = true;
            let v_hat: Vec<UnorderedPair> = nodes
                .iter()
                .zip(&u_vals)
                .map(|(x, p)| {
                    let f = phi.principal_value(x);
                    let neg: Vec<f64> = f.iter().map(|v| -v).collect();
                    let keep = dist_sq(&p.a1, &f) + dist_sq(&p.a2, &neg);
                    let swap = dist_sq(&p.a2, &f) + dist_sq(&p.a1, &neg);
                    let (b1, b2) = if swap < keep { (&p.a2, &p.a1) } else { (&p.a1, &p.a2) };
                    let v = UnorderedPair::new(
                        b1.iter().zip(&f).map(|(a, b)| a - b).collect(),
                        b2.iter().zip(&neg).map(|(a, b)| a - b).collect(),
                    );
                    if r.powf(-alpha) * v.norm() > beta {
                        small = false;
                    }
                    v
                })
                .collect();
            // continuous selection of u once around the ring and one step further
            let mut path = u_vals.clone();
            path.push(u_vals[0].clone());
            let sel = crate::pairspace::continuous_selection(&path);
            let (start, end) = (&sel[0], &sel[nt]);
            let back: Vec<f64> = u_vals[0].a2.clone();
            let hol_u = if dist_sq(end, start) <= dist_sq(end, &back) { 1.0 } else { -1.0 };
            // for coinciding values the test is vacuous
            let holonomy_ok = hol_u == hol_phi || dist_sq(start, &back) < 1e-24;
            RingData { nodes, u_vals, v_hat, small, holonomy_ok }
        })
        .collect();

    for (rd, &(_, _, r, y)) in data.iter().zip(&rings) {
        if r > tau && rd.small && !rd.holonomy_ok {
            return Err(ProfileError::DecompositionFailure { radius: r, y: if n == 3 { vec![y] } else { vec![] } });
        }
    }
    let index: std::collections::HashMap<(usize, usize), usize> =
        rings.iter().enumerate().map(|(k, &(i, l, _, _))| ((i, l), k)).collect();
    let good: Vec<bool> = data.iter().map(|d| d.small && d.holonomy_ok).collect();
    let mut member = vec![false; rings.len()];
    let mut queue = VecDeque::new();
    for (k, &(_, _, r, _)) in rings.iter().enumerate() {
        if r > tau && good[k] {
            member[k] = true;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (i, l, _, _) = rings[k];
        let nbrs = [(i.wrapping_sub(1), l), (i + 1, l), (i, l.wrapping_sub(1)), (i, l + 1)];
        for key in nbrs {
            if let Some(&kk) = index.get(&key) {
                if !member[kk] && good[kk] {
                    member[kk] = true;
                    queue.push_back(kk);
                }
            }
        }
    }

    // flatten
    let mut coords = Vec::new();
    let mut radii = Vec::new();
    let mut ring = Vec::new();
    let mut in_u = Vec::new();
    let mut v_hat = Vec::new();
    let mut u_vals = Vec::new();
    for (k, rd) in data.iter().enumerate() {
        let (i, l, r, _) = rings[k];
        for j in 0..nt {
            coords.push(rd.nodes[j].clone());
            radii.push(r);
            ring.push((i, l));
            in_u.push(member[k]);
            v_hat.push(if member[k] { Some(rd.v_hat[j].clone()) } else { None });
            u_vals.push(rd.u_vals[j].clone());
        }
    }
    let node_of = |i: usize, l: usize, j: usize| -> Option<usize> { index.get(&(i, l)).map(|&k| k * nt + j % nt) };

    // finite differences of v on U with pair alignment
    let derivs: Vec<f64> = (0..coords.len())
        .into_par_iter()
        .map(|a| {
            let Some(v) = &v_hat[a] else { return 0.0 };
            let (i, l) = ring[a];
            let j = (a % nt) as isize;
            let r = radii[a];
            let diff = |nb: Option<usize>| -> Option<UnorderedPair> {
                let nb = nb?;
                let w = v_hat[nb].as_ref()?;
                Some(w.aligned_to(v).expect("same target dimension"))
            };
            let dir = |minus: Option<usize>, plus: Option<usize>, h: f64| -> f64 {
                let (m, p) = (diff(minus), diff(plus));
                let sq = |x: &UnorderedPair, y: &UnorderedPair, s: f64| {
                    (dist_sq(&x.a1, &y.a1) + dist_sq(&x.a2, &y.a2)) / (s * s)
                };
                match (m, p) {
                    (Some(m), Some(p)) => sq(&p, &m, 2.0 * h),
                    (Some(m), None) => sq(v, &m, h),
                    (None, Some(p)) => sq(&p, v, h),
                    (None, None) => 0.0,
                }
            };
            let jm = ((j - 1).rem_euclid(nt as isize)) as usize;
            let jp = ((j + 1).rem_euclid(nt as isize)) as usize;
            let mut g2 = dir(
                if i > 0 { node_of(i - 1, l, j as usize) } else { None },
                node_of(i + 1, l, j as usize),
                dr,
            );
            g2 += dir(node_of(i, l, jm), node_of(i, l, jp), r * dth);
            if n == 3 {
                g2 += dir(if l > 0 { node_of(i, l - 1, j as usize) } else { None }, node_of(i, l + 1, j as usize), dy);
            }
            g2
        })
        .collect();

    let vol = |r: f64| r * dr * dth * if n == 3 { dy } else { 1.0 };
    let mut sup_v = 0.0f64;
    let mut sup_dv = 0.0f64;
    let mut integral_graph = 0.0;
    let mut integral_complement = 0.0;
    for a in 0..coords.len() {
        let r = radii[a];
        match &v_hat[a] {
            Some(v) => {
                let vn = v.norm();
                sup_v = sup_v.max(r.powf(-alpha) * vn);
                sup_dv = sup_dv.max(r.powf(1.0 - alpha) * derivs[a].sqrt());
                integral_graph += vol(r) * (vn * vn + r * r * derivs[a]);
            }
            None => {
                let du = u.eval_gradient(&coords[a]).map(|g| g.norm_sq()).unwrap_or(0.0);
                integral_complement += vol(r) * (u_vals[a].norm_sq() + r * r * du);
            }
        }
    }
    let excess = super::excess(u, phi, z, 1.0, level);
    Ok(GraphRepresentation {
        tau,
        beta,
        gamma,
        coords,
        radii,
        ring,
        in_u,
        v_hat,
        sup_v,
        sup_dv,
        integral_graph,
        integral_complement,
        excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::polar;
    use crate::fields::AnalyticTwoValuedField;
    use crate::pairspace::metric_g_sq;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid() -> GraphGrid {
        GraphGrid { n_r: 20, n_theta: 48, n_y: 8 }
    }

    #[test]
    fn exact_profile_has_zero_graph() {
        for (n, k) in [(2usize, 1u32), (3, 1), (2, 2), (3, 4)] {
            let phi = CylindricalProfile::new(n, vec![c(1.0, 0.3), c(0.0, 1.0)], k).unwrap();
            let g = graphical_decompose(&phi, &phi, 0.1, 0.9, 0.5, grid(), QuadLevel::COARSE).unwrap();
            assert!(g.in_u.iter().all(|b| *b));
            assert!(g.v_hat.iter().flatten().all(|v| v.norm() < 1e-12));
            assert!(g.sup_v < 1e-12);
        }
    }

    #[test]
    fn small_perturbation_is_recovered() {
        let c0 = c(1.0, 0.0);
        let d = c(0.3, -0.2);
        let t = 1e-4;
        let u = AnalyticTwoValuedField::power_sum(2, vec![(vec![c0], 1), (vec![d * t], 5)]).unwrap();
        let phi = CylindricalProfile::new(2, vec![c0], 1).unwrap();
        let g = graphical_decompose(&u, &phi, 0.1, 0.9, 0.5, grid(), QuadLevel::MEDIUM).unwrap();
        let mut worst = 0.0f64;
        for (i, v) in g.v_hat.iter().enumerate() {
            let v = v.as_ref().unwrap();
            let x = &g.coords[i];
            let (r, th) = polar(x);
            let pert = (d * t * Complex64::from_polar(r.powf(2.5), 2.5 * th)).re;
            // v(X, phi_1) = +pert and v(X, -phi_1) = -pert on the principal branch
            worst = worst.max((v.a1[0] - pert).abs()).max((v.a2[0] + pert).abs());
            let rec = g.reconstruct(i, &phi).unwrap();
            assert!(metric_g_sq(&rec, &u.eval(x)).unwrap() < 1e-26);
        }
        assert!(worst < 1e-14, "{worst}");
        assert!(g.integral_ratio().is_finite());
    }

    #[test]
    fn displaced_branch_point_is_excluded() {
        let xi = 0.3;
        let phi = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        let u = phi.with_center(vec![xi, 0.0]).unwrap();
        let g = graphical_decompose(&u, &phi, 0.05, 0.9, 0.5, grid(), QuadLevel::COARSE).unwrap();
        for (i, x) in g.coords.iter().enumerate() {
            if (x[0] - xi).hypot(x[1]) < 0.05 {
                assert!(!g.in_u[i], "node {x:?} should be outside U");
            }
        }
        assert!(g.in_u.iter().any(|b| *b));
        assert!(g.integral_complement > 0.0);
    }

    #[test]
    fn rotational_symmetry_of_u() {
        let phi = CylindricalProfile::new(3, vec![c(1.0, 0.0)], 1).unwrap();
        let u = phi.with_center(vec![0.2, 0.0, 0.0]).unwrap();
        let g = graphical_decompose(&u, &phi, 0.05, 0.9, 0.5, grid(), QuadLevel::COARSE).unwrap();
        let mut by_ring: std::collections::HashMap<(usize, usize), Vec<bool>> = Default::default();
        for (k, key) in g.ring.iter().enumerate() {
            by_ring.entry(*key).or_default().push(g.in_u[k]);
        }
        assert!(by_ring.values().all(|v| v.iter().all(|b| *b == v[0])));
    }

    #[test]
    fn wrong_holonomy_is_reported() {
        // an even-k field decomposed over an odd-k profile of comparable size
        let phi = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        let u = CylindricalProfile::new(2, vec![c(1e-3, 0.0)], 2).unwrap();
        let r = graphical_decompose(&u, &phi, 0.1, 0.9, 5.0, grid(), QuadLevel::COARSE);
        assert!(matches!(r, Err(ProfileError::DecompositionFailure { .. })));
    }

    #[test]
    fn rejects_bad_parameters() {
        let phi = CylindricalProfile::new(2, vec![c(1.0, 0.0)], 1).unwrap();
        assert!(graphical_decompose(&phi, &phi, 0.95, 0.9, 0.5, grid(), QuadLevel::COARSE).is_err());
    }
}

//! Discrete Dirichlet minimization for symmetric two-valued functions on the
//! unit disk via sign bookkeeping on a graded polar grid.
//!
//! A symmetric function `{±v}` is stored through one selection `v`. Every
//! grid edge that crosses a cut of the branch configuration relates the two
//! endpoint selections with a sign flip, so the energy is the quadratic form
//! of a signed graph Laplacian. With a single branch point at the center this
//! is the anti-periodic Laplace problem on the double cover `theta in [0, 4 pi)`.

use crate::fields::{FieldError, GridSpec, SampledField, TwoValuedField};
use crate::linalg::{conjugate_gradient, CsrMatrix, LinalgError};
use crate::pairspace::{metric_g_sq, UnorderedPair};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

const GRADING: f64 = 2.0;
const CG_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinimizerError {
    #[error("boundary data cannot be lifted: {0}")]
    BoundaryNotLiftable(String),
    #[error("invalid branch configuration: {0}")]
    InvalidConfiguration(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Solver(#[from] LinalgError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Polar grid on the disk of radius `radius`: node 0 at the center, ring `i`
/// at `radius (i/n_r)^2`, `n_theta` angles `2 pi j / n_theta` per ring.
/// Ring `n_r` is the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverGrid {
    pub radius: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl CoverGrid {
    pub fn new(radius: f64, n_r: usize, n_theta: usize) -> Result<Self, MinimizerError> {
        if !(radius > 0.0) || n_r < 3 || n_theta < 8 || n_theta % 4 != 0 {
            return Err(MinimizerError::InvalidGrid(
                "need radius > 0, n_r >= 3, n_theta >= 8 and divisible by 4".into(),
            ));
        }
        Ok(Self { radius, n_r, n_theta })
    }

    pub fn len(&self) -> usize {
        1 + self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ring_radius(&self, i: usize) -> f64 {
        self.radius * (i as f64 / self.n_r as f64).powf(GRADING)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * self.n_theta + j % self.n_theta
        }
    }

    fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn node(&self, idx: usize) -> [f64; 2] {
        if idx == 0 {
            return [0.0, 0.0];
        }
        let i = 1 + (idx - 1) / self.n_theta;
        let j = (idx - 1) % self.n_theta;
        let r = self.ring_radius(i);
        let th = self.dtheta() * j as f64;
        [r * th.cos(), r * th.sin()]
    }

    fn is_boundary(&self, idx: usize) -> bool {
        idx > (self.n_r - 1) * self.n_theta
    }

    /// The matching sampled-field layout.
    pub fn polar_spec(&self) -> GridSpec {
        GridSpec::Polar { radius: self.radius, n_r: self.n_r, n_theta: self.n_theta, grading: GRADING }
    }

    /// Largest local cell size, `max(dr, r dtheta)` over the grid.
    pub fn cell_size(&self) -> f64 {
        let dr = self.radius - self.ring_radius(self.n_r - 1);
        dr.max(self.radius * self.dtheta())
    }

    fn half_width(&self, i: usize) -> f64 {
        let up = if i < self.n_r { self.ring_radius(i + 1) } else { self.ring_radius(i) };
        0.5 * (up - self.ring_radius(i - 1))
    }

    /// Finite-volume control areas.
    fn control_area(&self, idx: usize) -> f64 {
        if idx == 0 {
            let r1 = self.ring_radius(1);
            return PI * r1 * r1 / 4.0;
        }
        let i = 1 + (idx - 1) / self.n_theta;
        self.half_width(i) * self.ring_radius(i) * self.dtheta()
    }

    /// `(a, b, weight)` for every edge of the five-point stencil.
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        let (nr, nt, dth) = (self.n_r, self.n_theta, self.dtheta());
        let mut e = Vec::with_capacity(2 * self.len());
        for j in 0..nt {
            e.push((0, self.index(1, j), 0.5 * dth));
        }
        for i in 1..=nr {
            let r = self.ring_radius(i);
            for j in 0..nt {
                if i < nr {
                    let rp = self.ring_radius(i + 1);
                    e.push((self.index(i, j), self.index(i + 1, j), 0.5 * (r + rp) * dth / (rp - r)));
                }
                e.push((self.index(i, j), self.index(i, j + 1), self.half_width(i) / (r * dth)));
            }
        }
        e
    }
}

/// Branch points of a symmetric function on the disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BranchConfiguration {
    /// `{±v}` with `v` single-valued.
    Unbranched,
    /// One branch point; the cut runs from it in the `+x1` direction to the boundary.
    Single([f64; 2]),
    /// Two branch points joined by a straight cut.
    Pair([f64; 2], [f64; 2]),
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Whether the segment `a b` crosses the cut `p q`. Points on the cut's line
/// count as lying on its left (`+`) side.
fn crosses(a: [f64; 2], b: [f64; 2], p: [f64; 2], q: [f64; 2]) -> bool {
    let d = sub(q, p);
    let da = cross(d, sub(a, p));
    let db = cross(d, sub(b, p));
    if (da >= 0.0) == (db >= 0.0) {
        return false;
    }
    let t = da / (da - db);
    let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let s = (sub(x, p)[0] * d[0] + sub(x, p)[1] * d[1]) / (d[0] * d[0] + d[1] * d[1]);
    (0.0..=1.0).contains(&s)
}

impl BranchConfiguration {
    pub fn points(&self) -> Vec<[f64; 2]> {
        match self {
            BranchConfiguration::Unbranched => vec![],
            BranchConfiguration::Single(p) => vec![*p],
            BranchConfiguration::Pair(p, q) => vec![*p, *q],
        }
    }

    /// Sign picked up by a selection along the boundary circle.
    pub fn holonomy(&self) -> f64 {
        if self.points().len() % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn validate(&self, radius: f64) -> Result<(), MinimizerError> {
        let pts = self.points();
        for p in &pts {
            if !(p[0].hypot(p[1]) < radius) {
                return Err(MinimizerError::InvalidConfiguration(format!("branch point {p:?} is not inside the disk")));
            }
        }
        if pts.len() == 2 && sub(pts[0], pts[1]) == [0.0, 0.0] {
            return Err(MinimizerError::InvalidConfiguration("branch points coincide".into()));
        }
        Ok(())
    }

    fn cuts(&self, radius: f64) -> Vec<([f64; 2], [f64; 2])> {
        match *self {
            BranchConfiguration::Unbranched => vec![],
            BranchConfiguration::Single(p) => vec![(p, [p[0] + 4.0 * radius, p[1]])],
            BranchConfiguration::Pair(p, q) => vec![(p, q)],
        }
    }

    /// Angle where the cut of a single branch point meets the boundary circle.
    fn boundary_cut_angle(&self, radius: f64) -> f64 {
        match *self {
            BranchConfiguration::Single(p) => p[1].atan2((radius * radius - p[1] * p[1]).sqrt()),
            _ => 0.0,
        }
    }

    fn params(&self) -> Vec<f64> {
        self.points().into_iter().flatten().collect()
    }

    fn with_params(&self, v: &[f64]) -> Self {
        match self {
            BranchConfiguration::Unbranched => BranchConfiguration::Unbranched,
            BranchConfiguration::Single(_) => BranchConfiguration::Single([v[0], v[1]]),
            BranchConfiguration::Pair(..) => BranchConfiguration::Pair([v[0], v[1]], [v[2], v[3]]),
        }
    }
}

/// Signed edge list for a configuration: `(a, b, weight, sign)`.
pub fn signed_edges(grid: &CoverGrid, config: &BranchConfiguration) -> Vec<(usize, usize, f64, f64)> {
    let cuts = config.cuts(grid.radius);
    grid.edges()
        .into_par_iter()
        .map(|(a, b, w)| {
            let (xa, xb) = (grid.node(a), grid.node(b));
            let flips = cuts.iter().filter(|(p, q)| crosses(xa, xb, *p, *q)).count();
            (a, b, w, if flips % 2 == 1 { -1.0 } else { 1.0 })
        })
        .collect()
}

/// A continuous selection of symmetric boundary values on the double cover
/// of the boundary circle, sampled at `theta_k in [0, 4 pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub m: usize,
    pub theta: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl BoundaryData {
    /// Builds a table from sorted samples on `[0, 4 pi)`.
    pub fn from_table(theta: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, MinimizerError> {
        let bad = |s: String| Err(MinimizerError::BoundaryNotLiftable(s));
        if theta.len() < 16 || theta.len() != values.len() {
            return bad("need at least 16 samples with one value each".into());
        }
        let m = values[0].len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return bad("values must share a positive dimension".into());
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) || theta[0] < 0.0 || *theta.last().unwrap() >= 4.0 * PI {
            return bad("angles must increase within [0, 4 pi)".into());
        }
        Ok(Self { m, theta, values })
    }

    /// Samples the trace of a symmetric field on the circle of radius
    /// `radius`, following the selection continuously (with linear
    /// prediction so transversal zeros are crossed correctly).
    pub fn from_field<F: TwoValuedField + ?Sized>(u: &F, radius: f64, samples: usize) -> Result<Self, MinimizerError> {
        if u.dim() != 2 {
            return Err(MinimizerError::InvalidConfiguration("boundary traces are taken in n = 2".into()));
        }
        let k = samples.max(16);
        let theta: Vec<f64> = (0..k).map(|s| 4.0 * PI * s as f64 / k as f64).collect();
        let mut pairs = Vec::with_capacity(k);
        for &th in &theta {
            let p = u.eval(&[radius * th.cos(), radius * th.sin()]);
            if !p.is_symmetric(1e-10 * (1.0 + p.norm())) {
                return Err(MinimizerError::BoundaryNotLiftable(format!("trace is not symmetric at theta = {th}")));
            }
            pairs.push(p);
        }
        let values = crate::pairspace::continuous_selection(&pairs);
        Self::from_table(theta, values)
    }

    /// Linear interpolation, 4 pi periodic.
    pub fn eval(&self, th: f64) -> Vec<f64> {
        let t = th.rem_euclid(4.0 * PI);
        let k = self.theta.len();
        let hi = self.theta.partition_point(|&x| x <= t);
        let (i0, i1) = if hi == 0 || hi == k { (k - 1, 0) } else { (hi - 1, hi) };
        let (t0, mut t1) = (self.theta[i0], self.theta[i1]);
        let mut tt = t;
        if i1 == 0 {
            t1 += 4.0 * PI;
            if tt < t0 {
                tt += 4.0 * PI;
            }
        }
        let f = if t1 > t0 { (tt - t0) / (t1 - t0) } else { 0.0 };
        self.values[i0].iter().zip(&self.values[i1]).map(|(a, b)| a + f * (b - a)).collect()
    }

    fn scale(&self) -> f64 {
        self.values.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    /// Checks continuity and returns the sign `h` with `v(theta + 2 pi) = h v(theta)`.
    pub fn holonomy(&self) -> Result<f64, MinimizerError> {
        let scale = self.scale();
        if scale == 0.0 {
            return Ok(-1.0);
        }
        let k = self.theta.len();
        let mut jumps: Vec<f64> = (0..k)
            .map(|i| crate::pairspace::dist_sq(&self.values[i], &self.values[(i + 1) % k]).sqrt())
            .collect();
        let max_jump = jumps.iter().cloned().fold(0.0, f64::max);
        jumps.sort_by(f64::total_cmp);
        let median = jumps[k / 2];
        if max_jump > 8.0 * median + 1e-12 * scale && max_jump > 0.05 * scale {
            return Err(MinimizerError::BoundaryNotLiftable(format!(
                "selection jumps by {max_jump:e} (median step {median:e})"
            )));
        }
        let tol = 1e-6 * scale + max_jump;
        let defect = |h: f64| {
            self.theta
                .iter()
                .map(|&t| {
                    let a = self.eval(t);
                    let b = self.eval(t + 2.0 * PI);
                    a.iter().zip(&b).map(|(a, b)| (b - h * a).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        };
        let (anti, per) = (defect(-1.0), defect(1.0));
        if anti <= tol {
            Ok(-1.0)
        } else if per <= tol {
            Ok(1.0)
        } else {
            Err(MinimizerError::BoundaryNotLiftable(format!(
                "neither anti-periodic (defect {anti:e}) nor periodic (defect {per:e}) under theta -> theta + 2 pi"
            )))
        }
    }

    /// CSV with header `theta,v1,...,vm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta");
        for k in 0..self.m {
            write!(s, ",v{}", k + 1).unwrap();
        }
        s.push('\n');
        for (t, v) in self.theta.iter().zip(&self.values) {
            write!(s, "{t:e}").unwrap();
            for x in v {
                write!(s, ",{x:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, MinimizerError> {
        let bad = |s: String| MinimizerError::BoundaryNotLiftable(s);
        let mut theta = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with("theta") || line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad(format!("line {}: bad number {t}", i + 1))))
                .collect::<Result<_, _>>()?;
            if nums.len() < 2 {
                return Err(bad(format!("line {}: need theta and at least one value", i + 1)));
            }
            theta.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        Self::from_table(theta, values)
    }
}

/// A selection `v` per grid node of a symmetric function `{±v}`, with the
/// branch configuration that fixes the sign bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverField {
    pub grid: CoverGrid,
    pub config: BranchConfiguration,
    pub m: usize,
    pub values: Vec<Vec<f64>>,
}

impl CoverField {
    /// Values on ring `i` over the cover angles `theta_j = 2 pi j / n_theta`,
    /// `j < 2 n_theta`, when the configuration is unbranched or has its
    /// single branch point at the center.
    pub fn cover_ring(&self, i: usize) -> Option<Vec<Vec<f64>>> {
        let wrap = match self.config {
            BranchConfiguration::Unbranched => 1.0,
            BranchConfiguration::Single(p) if p == [0.0, 0.0] => -1.0,
            _ => return None,
        };
        let nt = self.grid.n_theta;
        Some(
            (0..2 * nt)
                .map(|j| {
                    let v = &self.values[self.grid.index(i, j % nt)];
                    let s = if j >= nt { wrap } else { 1.0 };
                    v.iter().map(|x| s * x).collect()
                })
                .collect(),
        )
    }

    /// `max |c(theta + 2 pi) - h c(theta)|` over the cover representation,
    /// with `h` the configuration's holonomy.
    pub fn antiperiodicity_defect(&self) -> Option<f64> {
        let h = self.config.holonomy();
        let nt = self.grid.n_theta;
        let mut worst = 0.0f64;
        for i in 1..=self.grid.n_r {
            let ring = self.cover_ring(i)?;
            for j in 0..nt {
                for k in 0..self.m {
                    worst = worst.max((ring[j + nt][k] - h * ring[j][k]).abs());
                }
            }
        }
        Some(worst)
    }

    /// Node-based `sum_i area_i G({±v_i}, u(x_i))^2`.
    pub fn l2_error_sq<F: TwoValuedField + ?Sized>(&self, u: &F) -> f64 {
        let vals: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let x = self.grid.node(i);
                let p = UnorderedPair::symmetric(self.values[i].clone());
                self.grid.control_area(i) * metric_g_sq(&p, &u.eval(&x)).expect("target dimensions agree")
            })
            .collect();
        crate::quadrature::pairwise_sum(&vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub unknowns: usize,
}

/// Boundary value at boundary node angle `th` for the configuration.
fn boundary_value(boundary: &BoundaryData, config: &BranchConfiguration, radius: f64, th: f64) -> Vec<f64> {
    let tc = config.boundary_cut_angle(radius);
    // representative of th in [tc, tc + 2 pi)
    let t = tc + (th - tc).rem_euclid(2.0 * PI);
    boundary.eval(t)
}

fn forced_zero(grid: &CoverGrid, config: &BranchConfiguration) -> Vec<bool> {
    let pts = config.points();
    (0..grid.len())
        .map(|i| {
            let x = grid.node(i);
            pts.iter().any(|p| (x[0] - p[0]).hypot(x[1] - p[1]) < 1e-12 * grid.radius)
        })
        .collect()
}

/// Minimizes the discrete energy with the boundary selection prescribed on
/// the outer ring and the sign bookkeeping of `config`.
pub fn solve_branched_laplace(
    boundary: &BoundaryData,
    config: &BranchConfiguration,
    grid: CoverGrid,
) -> Result<(CoverField, SolveStats), MinimizerError> {
    config.validate(grid.radius)?;
    let h = boundary.holonomy()?;
    if h != config.holonomy() {
        return Err(MinimizerError::BoundaryNotLiftable(format!(
            "boundary selection has holonomy {h} but the configuration with {} branch point(s) needs {}",
            config.points().len(),
            config.holonomy()
        )));
    }
    let m = boundary.m;
    let nt = grid.n_theta;
    let zero = forced_zero(&grid, config);
    let mut values = vec![vec![0.0; m]; grid.len()];
    for j in 0..nt {
        let idx = grid.index(grid.n_r, j);
        values[idx] = boundary_value(boundary, config, grid.radius, 2.0 * PI * j as f64 / nt as f64);
    }
    // unknown numbering
    let mut slot = vec![usize::MAX; grid.len()];
    let mut count = 0;
    for i in 0..grid.len() {
        if !grid.is_boundary(i) && !zero[i] {
            slot[i] = count;
            count += 1;
        }
    }
    let edges = signed_edges(&grid, config);
    let mut trip = Vec::with_capacity(4 * edges.len());
    let mut rhs = vec![vec![0.0; count]; m];
    for &(a, b, w, s) in &edges {
        for (x, y) in [(a, b), (b, a)] {
            if slot[x] == usize::MAX {
                continue;
            }
            trip.push((slot[x], slot[x], w));
            if slot[y] != usize::MAX {
                trip.push((slot[x], slot[y], -s * w));
            } else {
                for k in 0..m {
                    rhs[k][slot[x]] += s * w * values[y][k];
                }
            }
        }
    }
    let mut stats = SolveStats { iterations: 0, residual: 0.0, unknowns: count };
    if count > 0 {
        let a = CsrMatrix::from_triplets(count, trip);
        for (k, b) in rhs.iter().enumerate() {
            let (x, st) = conjugate_gradient(&a, b, None, CG_TOL, 20 * count + 100)?;
            stats.iterations = stats.iterations.max(st.iterations);
            stats.residual = stats.residual.max(st.residual);
            for i in 0..grid.len() {
                if slot[i] != usize::MAX {
                    values[i][k] = x[slot[i]];
                }
            }
        }
    }
    Ok((CoverField { grid, config: config.clone(), m, values }, stats))
}

/// Discrete two-valued energy `int |Du_1|^2 + |Du_2|^2 = 2 int |Dv|^2`,
/// which equals the energy of the selection over the double cover.
pub fn energy(cf: &CoverField) -> f64 {
    let terms: Vec<f64> = signed_edges(&cf.grid, &cf.config)
        .par_iter()
        .map(|&(a, b, w, s)| {
            let d: f64 = cf.values[a].iter().zip(&cf.values[b]).map(|(x, y)| (x - s * y).powi(2)).sum();
            2.0 * w * d
        })
        .collect();
    crate::quadrature::pairwise_sum(&terms)
}

/// Samples a symmetric field at the grid nodes, choosing each selection by
/// breadth-first propagation from the boundary so that edge signs are honored.
pub fn sample_cover<F: TwoValuedField + ?Sized>(
    u: &F,
    grid: CoverGrid,
    config: &BranchConfiguration,
) -> Result<CoverField, MinimizerError> {
    config.validate(grid.radius)?;
    let pairs: Vec<UnorderedPair> = (0..grid.len()).into_par_iter().map(|i| u.eval(&grid.node(i))).collect();
    let m = u.codim();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); grid.len()];
    for (a, b, _, s) in signed_edges(&grid, config) {
        adj[a].push((b, s));
        adj[b].push((a, s));
    }
    let mut values: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
    let seed = grid.index(grid.n_r, 0);
    values[seed] = Some(pairs[seed].a1.clone());
    let mut queue = std::collections::VecDeque::from([seed]);
    let scale = pairs.iter().map(|p| p.norm()).fold(0.0, f64::max);
    while let Some(a) = queue.pop_front() {
        let va = values[a].clone().unwrap();
        // a vanishing value carries no sign information
        if crate::pairspace::dot(&va, &va).sqrt() <= 1e-12 * scale {
            continue;
        }
        for &(b, s) in &adj[a] {
            if values[b].is_none() {
                let pred: Vec<f64> = va.iter().map(|x| s * x).collect();
                let p = &pairs[b];
                let pick = if crate::pairspace::dist_sq(&p.a2, &pred) < crate::pairspace::dist_sq(&p.a1, &pred) {
                    p.a2.clone()
                } else {
                    p.a1.clone()
                };
                values[b] = Some(pick);
                queue.push_back(b);
            }
        }
    }
    let values = values.into_iter().map(|v| v.unwrap_or_else(|| vec![0.0; m])).collect();
    Ok(CoverField { grid, config: config.clone(), m, values })
}

/// The symmetric two-valued function `{±v}` on the matching polar grid.
pub fn to_two_valued(cf: &CoverField) -> Result<SampledField, MinimizerError> {
    let vals = cf.values.iter().map(|v| UnorderedPair::symmetric(v.clone())).collect();
    Ok(SampledField::from_values(cf.grid.polar_spec(), cf.m, vals, true)?)
}

/// Pattern-search settings for [`optimize_branch_points`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_evaluations: usize,
    pub initial_step: f64,
    pub min_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub config: BranchConfiguration,
    pub field: CoverField,
    pub energy: f64,
    /// Energy after every accepted step, starting with the initial configuration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    /// Energy of the unbranched solve when the boundary selection is periodic.
    pub unbranched_energy: Option<f64>,
    /// The branched optimum does not beat the unbranched solve by 1e-3 relative.
    pub degenerate: bool,
}

/// Derivative-free coordinate pattern search over branch-point positions.
/// Trial moves of one step are evaluated in parallel; the best improving
/// move is accepted, otherwise the step is halved.
pub fn optimize_branch_points(
    boundary: &BoundaryData,
    grid: CoverGrid,
    initial: &BranchConfiguration,
    budget: SearchBudget,
) -> Result<OptimizeResult, MinimizerError> {
    let solve = |c: &BranchConfiguration| -> Result<(CoverField, f64), MinimizerError> {
        let (f, _) = solve_branched_laplace(boundary, c, grid)?;
        let e = energy(&f);
        Ok((f, e))
    };
    let (mut field, mut best) = solve(initial)?;
    let mut config = initial.clone();
    let mut trace = vec![best];
    let mut evaluations = 1;
    let mut step = budget.initial_step;
    let dim = config.params().len();
    while dim > 0 && step >= budget.min_step && evaluations < budget.max_evaluations {
        let base = config.params();
        let trials: Vec<BranchConfiguration> = (0..2 * dim)
            .map(|t| {
                let mut p = base.clone();
                p[t / 2] += if t % 2 == 0 { step } else { -step };
                config.with_params(&p)
            })
            .filter(|c| c.validate(grid.radius * 0.98).is_ok())
            .collect();
        evaluations += trials.len();
        let results: Vec<Option<(CoverField, f64)>> = trials.par_iter().map(|c| solve(c).ok()).collect();
        let winner = results
            .into_iter()
            .zip(trials)
            .filter_map(|(r, c)| r.map(|(f, e)| (f, e, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match winner {
            Some((f, e, c)) if e < best => {
                field = f;
                best = e;
                config = c;
                trace.push(e);
            }
            _ => step *= 0.5,
        }
    }
    let unbranched_energy = if boundary.holonomy()? > 0.0 {
        Some(solve(&BranchConfiguration::Unbranched)?.1)
    } else {
        None
    };
    let degenerate = matches!(unbranched_energy, Some(e0) if best >= e0 * (1.0 - 1e-3));
    Ok(OptimizeResult { config, field, energy: best, trace, evaluations, unbranched_energy, degenerate })
}

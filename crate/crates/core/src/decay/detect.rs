//! Branch points from pairing holonomy around grid faces, coincidence points
//! from small symmetric part and gradient, frequency estimates per
//! candidate, the axis gap probe, and stratum labels from blow-ups.

use super::{DecayError, SymmetricComponent};
use crate::fields::{PairGradient, Transformed, TwoValuedField};
use crate::frequency::{energy_and_height, frequency_at_point};
use crate::pairspace::{continuous_selection, UnorderedPair};
use crate::profiles::CylindricalProfile;
use crate::quadrature::QuadLevel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub center: Vec<f64>,
    pub half_width: f64,
    /// Cells per axis; an even value is raised by one so the center is a
    /// cell center.
    pub cells: usize,
    /// Halvings applied to a flagged face to localize its branch point.
    pub refine_depth: usize,
    /// Samples per edge of a holonomy loop.
    pub loop_samples: usize,
    /// Largest radius of the frequency estimate; defaults to a quarter of
    /// the half width, capped by the distance to other candidates.
    pub freq_rho0: Option<f64>,
    pub freq_count: usize,
    pub freq_level: QuadLevel,
    /// Candidates with frequency below `1/2 - tol` are discarded.
    pub tol: f64,
    /// Also search for coincidence points without branching.
    pub coincidence: bool,
}

impl DetectOptions {
    pub fn new(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            half_width: 1.0,
            cells: if n == 2 { 41 } else { 13 },
            refine_depth: 10,
            loop_samples: 8,
            freq_rho0: None,
            freq_count: 6,
            freq_level: QuadLevel::MEDIUM,
            tol: 0.02,
            coincidence: true,
        }
    }

    fn cell_count(&self) -> usize {
        if self.cells % 2 == 0 {
            self.cells + 1
        } else {
            self.cells
        }
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.half_width / self.cell_count() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateKind {
    /// Nontrivial pairing holonomy around the point.
    Branch,
    /// `u_1 = u_2` and `Du_1 = Du_2` without branching.
    Coincidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Vec<f64>,
    pub kind: CandidateKind,
    pub frequency: f64,
    pub frequency_uncertainty: f64,
    pub low_confidence: bool,
    /// `|u_s|` at the candidate.
    pub sym_norm: f64,
    /// `|Du_s|` at the candidate; `None` where the gradient is singular.
    pub sym_gradient_norm: Option<f64>,
    pub branch_evidence: bool,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularReport {
    pub n: usize,
    pub candidates: Vec<Candidate>,
    /// Pairs of candidates on adjacent faces of one cluster.
    pub links: Vec<(usize, usize)>,
    pub cluster_sizes: Vec<usize>,
    pub cell_size: f64,
    /// Candidates removed for frequency below `1/2 - tol`.
    pub discarded: usize,
}

impl SingularReport {
    pub fn branch_points(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.kind == CandidateKind::Branch)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Closed square loop `origin -> +size e_a -> +size e_b -> back`.
fn square_loop(origin: &[f64], a: usize, b: usize, size: f64, per_edge: usize) -> Vec<Vec<f64>> {
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
    let mut pts = Vec::with_capacity(4 * per_edge + 1);
    for w in corners.windows(2) {
        for i in 0..per_edge {
            let t = i as f64 / per_edge as f64;
            let mut p = origin.to_vec();
            p[a] += size * (w[0].0 + t * (w[1].0 - w[0].0));
            p[b] += size * (w[0].1 + t * (w[1].1 - w[0].1));
            pts.push(p);
        }
    }
    pts.push(origin.to_vec());
    pts
}

/// `Some(true)` when following one entry around the closed loop ends on the
/// other entry. The walk starts where the entries are furthest apart, so the
/// first step is never taken across a crossing. `None` when the entries
/// coincide everywhere on the loop.
fn holonomy(pairs: &[UnorderedPair]) -> Option<bool> {
    let open = &pairs[..pairs.len() - 1];
    let gap = |p: &UnorderedPair| p.a1.iter().zip(&p.a2).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (start, widest) = open.iter().map(gap).enumerate().fold((0, 0.0), |b, (i, g)| if g > b.1 { (i, g) } else { b });
    let scale = pairs.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if widest <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let walk: Vec<UnorderedPair> = open[start..].iter().chain(&open[..=start]).cloned().collect();
    let sel = continuous_selection(&walk);
    let last = &walk[walk.len() - 1];
    let end = &sel[sel.len() - 1];
    let other = if end == &last.a1 { &last.a2 } else { &last.a1 };
    Some(dist(end, &sel[0]) > dist(other, &sel[0]))
}

/// Holonomy from values and gradients: each step takes the entry closest to
/// the first-order Taylor prediction from the previous choice, with the
/// gradient mismatch as a tie-breaker. Unlike value extrapolation this
/// follows entries through the corners of a polygonal loop.
fn holonomy_with_gradient(pts: &[Vec<f64>], pairs: &[UnorderedPair], grads: &[PairGradient]) -> Option<bool> {
    let len = pairs.len() - 1;
    let gap = |p: &UnorderedPair| p.a1.iter().zip(&p.a2).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (start, widest) = pairs[..len].iter().map(gap).enumerate().fold((0, 0.0), |b, (i, g)| if g > b.1 { (i, g) } else { b });
    let scale = pairs.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if widest <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let n = pts[0].len();
    let m = pairs[0].dim();
    let (mut v, mut g) = (pairs[start].a1.clone(), grads[start].g1.clone());
    let first = v.clone();
    let mut prev = start;
    for step in 1..=len {
        let i = (start + step) % len;
        let dx: Vec<f64> = pts[i].iter().zip(&pts[prev]).map(|(a, b)| a - b).collect();
        let h2: f64 = dx.iter().map(|d| d * d).sum();
        let pred: Vec<f64> = (0..m).map(|k| v[k] + (0..n).map(|j| g[k * n + j] * dx[j]).sum::<f64>()).collect();
        let cost = |a: &[f64], ga: &[f64]| dist_sq(a, &pred) + h2 * dist_sq(ga, &g);
        let (p, gr) = (&pairs[i], &grads[i]);
        if cost(&p.a2, &gr.g2) < cost(&p.a1, &gr.g1) {
            v = p.a2.clone();
            g = gr.g2.clone();
        } else {
            v = p.a1.clone();
            g = gr.g1.clone();
        }
        prev = i;
    }
    let last = &pairs[start];
    let other = if v == last.a1 { &last.a2 } else { &last.a1 };
    Some(dist(&v, &first) > dist(other, &first))
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn square_holonomy<F: TwoValuedField + ?Sized>(
    u: &F,
    origin: &[f64],
    a: usize,
    b: usize,
    size: f64,
    per_edge: usize,
) -> Option<bool> {
    let pts = square_loop(origin, a, b, size, per_edge);
    let evals: Result<Vec<(UnorderedPair, PairGradient)>, _> = pts.iter().map(|p| u.eval_with_gradient(p)).collect();
    match evals {
        Ok(ev) => {
            let (pairs, grads): (Vec<_>, Vec<_>) = ev.into_iter().unzip();
            holonomy_with_gradient(&pts, &pairs, &grads)
        }
        Err(_) => holonomy(&pts.iter().map(|p| u.eval(p)).collect::<Vec<_>>()),
    }
}

/// Center of the sub-square that keeps nontrivial holonomy after `depth`
/// halvings; stops early when no single quarter is flagged.
fn refine_square<F: TwoValuedField + ?Sized>(
    u: &F,
    origin: &[f64],
    a: usize,
    b: usize,
    size: f64,
    depth: usize,
    per_edge: usize,
) -> Vec<f64> {
    let mut o = origin.to_vec();
    let mut s = size;
    for _ in 0..depth {
        let h = s / 2.0;
        let flagged: Vec<Vec<f64>> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|(i, j)| {
                let mut q = o.clone();
                q[a] += i * h;
                q[b] += j * h;
                q
            })
            .filter(|q| square_holonomy(u, q, a, b, h, per_edge) == Some(true))
            .collect();
        if flagged.len() != 1 {
            break;
        }
        o = flagged[0].clone();
        s = h;
    }
    o[a] += s / 2.0;
    o[b] += s / 2.0;
    o
}

struct Faces {
    origins: Vec<(Vec<f64>, usize, usize)>,
}

fn grid_faces(opts: &DetectOptions, n: usize) -> Faces {
    let nc = opts.cell_count();
    let h = opts.cell_size();
    let lo: Vec<f64> = opts.center.iter().map(|c| c - opts.half_width).collect();
    let mut origins = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            // index ranges: 0..nc along a and b, 0..=nc along the others
            let ranges: Vec<usize> = (0..n).map(|d| if d == a || d == b { nc } else { nc + 1 }).collect();
            let total: usize = ranges.iter().product();
            for flat in 0..total {
                let mut rem = flat;
                let mut p = vec![0.0; n];
                for d in 0..n {
                    let i = rem % ranges[d];
                    rem /= ranges[d];
                    p[d] = lo[d] + i as f64 * h;
                }
                origins.push((p, a, b));
            }
        }
    }
    Faces { origins }
}

fn union_find_clusters(points: &[Vec<f64>], radius: f64) -> (Vec<usize>, Vec<(usize, usize)>) {
    let k = points.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let nx = p[j];
            p[j] = r;
            j = nx;
        }
        r
    }
    let mut links = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            if dist(&points[i], &points[j]) <= radius {
                links.push((i, j));
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; k];
    let mut next = 0;
    let mut out = vec![0; k];
    for i in 0..k {
        let r = root(&mut parent, i);
        if labels[r] == usize::MAX {
            labels[r] = next;
            next += 1;
        }
        out[i] = labels[r];
    }
    (out, links)
}

fn sym_norms<F: TwoValuedField + ?Sized>(u: &F, x: &[f64]) -> (f64, f64) {
    let s = u.eval(x).a1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let g = u.eval_gradient(x).map(|g| g.g1.iter().map(|v| v * v).sum::<f64>().sqrt()).unwrap_or(f64::INFINITY);
    (s, g)
}

/// Candidate branch and coincidence points of `u` on a cube grid. Branch
/// points are faces whose boundary loop swaps the two entries of the
/// symmetric part, refined by repeated halving; coincidence points are local
/// minima of `|u_s|/S + |Du_s|/G` below resolution-scaled thresholds, where
/// `S` is the largest `|u_s|` and `G` the 90th percentile of `|Du_s|` on the
/// grid. Every candidate carries a frequency estimate of the symmetric part.
pub fn detect_branch_set<F: TwoValuedField + ?Sized>(u: &F, opts: &DetectOptions) -> Result<SingularReport, DecayError> {
    let n = u.dim();
    if opts.center.len() != n || !(opts.half_width > 0.0) || opts.cells < 2 || opts.loop_samples < 2 {
        return Err(DecayError::InvalidInput("detection grid is malformed".into()));
    }
    let sym = SymmetricComponent(u);
    let h = opts.cell_size();
    let faces = grid_faces(opts, n);
    let flagged: Vec<&(Vec<f64>, usize, usize)> = faces
        .origins
        .par_iter()
        .filter(|(o, a, b)| square_holonomy(&sym, o, *a, *b, h, opts.loop_samples) == Some(true))
        .collect();
    let positions: Vec<Vec<f64>> = flagged
        .par_iter()
        .map(|(o, a, b)| refine_square(&sym, o, *a, *b, h, opts.refine_depth, opts.loop_samples))
        .collect();
    let (clusters, links) = union_find_clusters(&positions, 1.5 * h);

    let mut cands: Vec<(Vec<f64>, CandidateKind, usize)> =
        positions.iter().zip(&clusters).map(|(p, c)| (p.clone(), CandidateKind::Branch, *c)).collect();
    let n_clusters = clusters.iter().map(|c| c + 1).max().unwrap_or(0);

    if opts.coincidence {
        let nc = opts.cell_count();
        let lo: Vec<f64> = opts.center.iter().map(|c| c - opts.half_width).collect();
        let total = (nc + 1).pow(n as u32);
        let node = |flat: usize| -> Vec<f64> {
            let mut rem = flat;
            (0..n)
                .map(|d| {
                    let i = rem % (nc + 1);
                    rem /= nc + 1;
                    lo[d] + i as f64 * h
                })
                .collect()
        };
        let vals: Vec<(f64, f64)> = (0..total).into_par_iter().map(|i| sym_norms(&sym, &node(i))).collect();
        let s_max = vals.iter().map(|v| v.0).fold(0.0, f64::max);
        let mut gs: Vec<f64> = vals.iter().map(|v| v.1).filter(|g| g.is_finite()).collect();
        gs.sort_by(|a, b| a.total_cmp(b));
        let g_ref = gs.get(gs.len() * 9 / 10).copied().unwrap_or(0.0);
        if s_max > 0.0 && g_ref > 0.0 {
            let rel = h / opts.half_width;
            let q = |x: &[f64]| {
                let (s, g) = sym_norms(&sym, x);
                s / s_max + g / g_ref
            };
            let mut found: Vec<Vec<f64>> = Vec::new();
            for i in 0..total {
                let (s, g) = vals[i];
                if !(s <= rel * s_max && g <= 2.0 * rel * g_ref) {
                    continue;
                }
                let x = node(i);
                if positions.iter().any(|p| dist(p, &x) <= 1.5 * h) {
                    continue;
                }
                let qi = s / s_max + g / g_ref;
                let mut is_min = true;
                let mut rem = i;
                let mut stride = 1;
                for _ in 0..n {
                    let idx = rem % (nc + 1);
                    rem /= nc + 1;
                    for (ok, j) in [(idx > 0, i.wrapping_sub(stride)), (idx < nc, i + stride)] {
                        if ok {
                            let (sj, gj) = vals[j];
                            if sj / s_max + gj / g_ref < qi {
                                is_min = false;
                            }
                        }
                    }
                    stride *= nc + 1;
                }
                if !is_min {
                    continue;
                }
                // compass search from the node
                let mut xb = x;
                let mut qb = qi;
                let mut step = h / 2.0;
                let min_step = h * 0.5f64.powi(opts.refine_depth as i32);
                while step >= min_step {
                    let mut moved = false;
                    for d in 0..n {
                        for sgn in [-1.0, 1.0] {
                            let mut y = xb.clone();
                            y[d] += sgn * step;
                            let qy = q(&y);
                            if qy < qb {
                                xb = y;
                                qb = qy;
                                moved = true;
                            }
                        }
                    }
                    if !moved {
                        step /= 2.0;
                    }
                }
                if !found.iter().any(|p| dist(p, &xb) <= h / 2.0) {
                    found.push(xb);
                }
            }
            for (j, p) in found.into_iter().enumerate() {
                cands.push((p, CandidateKind::Coincidence, n_clusters + j));
            }
        }
    }

    let rho_default = opts.freq_rho0.unwrap_or(opts.half_width / 4.0);
    let estimates: Vec<Result<Candidate, DecayError>> = cands
        .par_iter()
        .map(|(p, kind, cl)| {
            let nearest = cands
                .iter()
                .filter(|(_, _, c2)| c2 != cl)
                .map(|(q, _, _)| dist(p, q))
                .fold(f64::INFINITY, f64::min);
            let rho0 = rho_default.min(0.45 * nearest);
            let est = frequency_at_point(&sym, p, rho0, opts.freq_count, opts.freq_level)?;
            let (s, g) = sym_norms(&sym, p);
            let branch_evidence = match kind {
                CandidateKind::Branch => true,
                CandidateKind::Coincidence => (0..n).any(|a| {
                    ((a + 1)..n).any(|b| {
                        let mut o = p.clone();
                        o[a] -= h / 8.0;
                        o[b] -= h / 8.0;
                        square_holonomy(&sym, &o, a, b, h / 4.0, opts.loop_samples) == Some(true)
                    })
                }),
            };
            Ok(Candidate {
                position: p.clone(),
                kind: *kind,
                frequency: est.value,
                frequency_uncertainty: est.uncertainty,
                low_confidence: est.low_confidence,
                sym_norm: s,
                sym_gradient_norm: g.is_finite().then_some(g),
                branch_evidence,
                cluster: *cl,
            })
        })
        .collect();
    let mut candidates = Vec::new();
    let mut keep = Vec::new();
    let mut discarded = 0;
    for (i, e) in estimates.into_iter().enumerate() {
        let c = e?;
        if c.frequency < 0.5 - opts.tol {
            discarded += 1;
        } else {
            keep.push(i);
            candidates.push(c);
        }
    }
    let remap = |i: usize| keep.iter().position(|&k| k == i);
    let links: Vec<(usize, usize)> =
        links.into_iter().filter_map(|(a, b)| Some((remap(a)?, remap(b)?))).collect();
    let mut cluster_sizes = vec![0; candidates.iter().map(|c| c.cluster + 1).max().unwrap_or(0)];
    for c in &candidates {
        cluster_sizes[c.cluster] += 1;
    }
    Ok(SingularReport { n, candidates, links, cluster_sizes, cell_size: h, discarded })
}

/// An axis point `y0` with `|y0| <= 1/2` such that no candidate of frequency
/// at least `alpha - 3 * uncertainty` lies within `delta0` of `(0, y0)` in
/// the frame of `axis`. Linked candidates count as the segment joining
/// them. Axis points are scanned in lexicographic order with spacing
/// `delta0 / 2`; for `n = 2` the axis is the single point `0`.
pub fn gap_probe(report: &SingularReport, axis: &CylindricalProfile, delta0: f64, alpha: f64) -> Option<Vec<f64>> {
    let n = report.n;
    let d = n - 2;
    let high: Vec<bool> =
        report.candidates.iter().map(|c| c.frequency >= alpha - 3.0 * c.frequency_uncertainty).collect();
    let local: Vec<Vec<f64>> = report.candidates.iter().map(|c| axis.frame(&c.position)).collect();
    let steps = (0.5 / (delta0 / 2.0)).floor() as i64;
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for g in &grid {
            for i in -steps..=steps {
                let mut p = g.clone();
                p.push(i as f64 * delta0 / 2.0);
                next.push(p);
            }
        }
        grid = next;
    }
    grid.retain(|y| y.iter().map(|v| v * v).sum::<f64>() <= 0.25 + 1e-12);
    let seg_dist = |p: &[f64], a: &[f64], b: &[f64]| -> f64 {
        let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
        let l2: f64 = ab.iter().map(|v| v * v).sum();
        let t = if l2 > 0.0 { (ab.iter().zip(&ap).map(|(x, y)| x * y).sum::<f64>() / l2).clamp(0.0, 1.0) } else { 0.0 };
        let q: Vec<f64> = a.iter().zip(&ab).map(|(x, y)| x + t * y).collect();
        dist(p, &q)
    };
    grid.into_iter().find(|y| {
        let mut x = vec![0.0, 0.0];
        x.extend_from_slice(y);
        let points_free = local.iter().zip(&high).all(|(p, &hi)| !hi || dist(p, &x) >= delta0);
        let segs_free = report
            .links
            .iter()
            .all(|&(a, b)| !(high[a] && high[b]) || seg_dist(&x, &local[a], &local[b]) >= delta0);
        points_free && segs_free
    })
}

/// `X -> u_s(Z + rho X)` for every candidate `Z`.
pub fn rescaled_blowups<'a, F: TwoValuedField + ?Sized>(
    u: &'a F,
    report: &SingularReport,
    rho: f64,
) -> Vec<Transformed<SymmetricComponent<&'a F>>> {
    report
        .candidates
        .iter()
        .map(|c| Transformed::new(SymmetricComponent(u), c.position.clone(), rho, 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifyOptions {
    /// Distance of the shifted centers.
    pub shift: f64,
    /// Radius at which frequencies are compared.
    pub radius: f64,
    pub tol: f64,
    pub level: QuadLevel,
}

impl Default for StratifyOptions {
    fn default() -> Self {
        Self { shift: 0.5, radius: 0.25, tol: 0.05, level: QuadLevel::MEDIUM }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stratum {
    /// Dimension of the translation-invariance set of the blow-up.
    Level(usize),
    /// Opposite shifts disagree, or the invariance set is too large for a
    /// branch blow-up.
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumLabel {
    pub candidate: usize,
    pub stratum: Stratum,
    pub invariant_directions: Vec<Vec<f64>>,
    pub frequency_at_center: f64,
    /// `(direction, N at +shift, N at -shift)`.
    pub shifted: Vec<(Vec<f64>, f64, f64)>,
}

fn frame_directions(report: &SingularReport, i: usize) -> Vec<Vec<f64>> {
    let n = report.n;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let nbrs: Vec<usize> = report
        .links
        .iter()
        .filter_map(|&(a, b)| if a == i { Some(b) } else if b == i { Some(a) } else { None })
        .collect();
    if let Some(&j) = nbrs.first() {
        let (p, q) = if nbrs.len() >= 2 { (nbrs[0], nbrs[1]) } else { (i, j) };
        let t: Vec<f64> = report.candidates[q].position.iter().zip(&report.candidates[p].position).map(|(a, b)| a - b).collect();
        let l = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if l > 0.0 {
            dirs.push(t.iter().map(|v| v / l).collect());
        }
    }
    for e in 0..n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for d in &dirs {
            let p: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            for (vi, di) in v.iter_mut().zip(d) {
                *vi -= p * di;
            }
        }
        let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if l > 1e-6 && dirs.len() < n {
            dirs.push(v.iter().map(|x| x / l).collect());
        }
    }
    dirs
}

/// Estimates the invariance set `S(phi)` of each blow-up by comparing its
/// frequency at the origin with the frequency at `+-shift` along a frame
/// made of the local direction of the candidate's cluster, completed by
/// coordinate directions.
pub fn stratify<B: TwoValuedField>(
    report: &SingularReport,
    blowups: &[B],
    opts: &StratifyOptions,
) -> Result<Vec<StratumLabel>, DecayError> {
    if blowups.len() != report.candidates.len() {
        return Err(DecayError::InvalidInput("one blow-up per candidate is required".into()));
    }
    let n = report.n;
    let freq = |b: &B, y: &[f64]| -> Result<f64, DecayError> {
        let (d, h) = energy_and_height(b, y, opts.radius, opts.level);
        if !(h > 0.0) {
            return Err(DecayError::InvalidInput("blow-up vanishes on a test sphere".into()));
        }
        Ok(d / h)
    };
    (0..report.candidates.len())
        .map(|i| {
            let b = &blowups[i];
            let n0 = freq(b, &vec![0.0; n])?;
            let mut invariant = Vec::new();
            let mut shifted = Vec::new();
            let mut ambiguous = false;
            for dir in frame_directions(report, i) {
                let plus: Vec<f64> = dir.iter().map(|v| v * opts.shift).collect();
                let minus: Vec<f64> = dir.iter().map(|v| -v * opts.shift).collect();
                let (np, nm) = (freq(b, &plus)?, freq(b, &minus)?);
                let (okp, okm) = ((np - n0).abs() <= opts.tol, (nm - n0).abs() <= opts.tol);
                if okp && okm {
                    invariant.push(dir.clone());
                } else if okp != okm {
                    ambiguous = true;
                }
                shifted.push((dir, np, nm));
            }
            let stratum = if ambiguous || invariant.len() > n - 2 { Stratum::Ambiguous } else { Stratum::Level(invariant.len()) };
            Ok(StratumLabel { candidate: i, stratum, invariant_directions: invariant, frequency_at_center: n0, shifted })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AnalyticTwoValuedField, BranchCoefficient};
    use num_complex::Complex64;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn model_solution_has_one_candidate_at_the_origin() {
        let u = AnalyticTwoValuedField::cylindrical(2, vec![one()], 1).unwrap();
        let rep = detect_branch_set(&u, &DetectOptions::new(2)).unwrap();
        let b: Vec<&Candidate> = rep.branch_points().collect();
        assert_eq!(b.len(), 1, "{rep:?}");
        assert!(dist(&b[0].position, &[0.0, 0.0]) < rep.cell_size);
        assert!((b[0].frequency - 0.5).abs() < 0.02);
        assert_eq!(rep.candidates.len(), 1);
    }

    #[test]
    fn two_point_branch_is_found_and_isolated() {
        for t in [0.1, 0.3] {
            let u = AnalyticTwoValuedField::two_point_branch(2, t).unwrap();
            let rep = detect_branch_set(&u, &DetectOptions::new(2)).unwrap();
            let mut b: Vec<&Candidate> = rep.branch_points().collect();
            b.sort_by(|p, q| p.position[0].total_cmp(&q.position[0]));
            assert_eq!(b.len(), 2, "t={t}: {rep:?}");
            for (c, x) in b.iter().zip([-t, t]) {
                assert!(dist(&c.position, &[x, 0.0]) < rep.cell_size, "{:?}", c.position);
                assert!((c.frequency - 0.5).abs() <= 0.02, "t={t}: N = {}", c.frequency);
            }
            assert!(rep.cluster_sizes.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn coincidence_without_branching() {
        // {+-Re z^2}: u_s and Du_s vanish at 0 with trivial holonomy
        let u = AnalyticTwoValuedField::cylindrical(2, vec![one()], 4).unwrap();
        let rep = detect_branch_set(&u, &DetectOptions::new(2)).unwrap();
        assert_eq!(rep.branch_points().count(), 0);
        let c = &rep.candidates;
        assert_eq!(c.len(), 1, "{rep:?}");
        assert_eq!(c[0].kind, CandidateKind::Coincidence);
        assert!(!c[0].branch_evidence);
        assert!(c[0].sym_norm < 1e-6 && c[0].sym_gradient_norm.unwrap() < 1e-3);
        assert!(dist(&c[0].position, &[0.0, 0.0]) < 1e-3);
        assert!((c[0].frequency - 2.0).abs() < 0.02);
    }

    #[test]
    fn cylindrical_axis_in_three_dimensions() {
        let u = AnalyticTwoValuedField::cylindrical(3, vec![one()], 1).unwrap();
        let mut opts = DetectOptions::new(3);
        opts.freq_level = QuadLevel::COARSE;
        let rep = detect_branch_set(&u, &opts).unwrap();
        assert!(rep.branch_points().count() >= 12);
        for c in rep.branch_points() {
            assert!(c.position[0].hypot(c.position[1]) < 1e-3, "{:?}", c.position);
            assert!((c.frequency - 0.5).abs() < 0.02);
        }
        assert_eq!(rep.cluster_sizes.len(), 1);
        let phi = CylindricalProfile::new(3, vec![one()], 1).unwrap();
        assert_eq!(gap_probe(&rep, &phi, 1.0 / 16.0, 0.5), None);

        let blow = rescaled_blowups(&u, &rep, 0.1);
        let labels = stratify(&rep, &blow[..3], &StratifyOptions::default());
        assert!(labels.is_err());
        let labels = stratify(&rep, &blow, &StratifyOptions { level: QuadLevel::COARSE, ..Default::default() }).unwrap();
        assert!(labels.iter().all(|l| l.stratum == Stratum::Level(1)), "{:?}", labels[0]);
    }

    #[test]
    fn tilted_branch_line_leaves_an_axis_gap() {
        // branch set {x1 + i x2 = x3}, far from the x3 axis away from 0
        let u = AnalyticTwoValuedField::branch_polynomial(
            3,
            vec![one()],
            vec![BranchCoefficient { constant: Complex64::new(0.0, 0.0), axis_slope: -one() }, BranchCoefficient::constant(one())],
        )
        .unwrap();
        let mut opts = DetectOptions::new(3);
        opts.freq_level = QuadLevel::COARSE;
        opts.coincidence = false;
        let rep = detect_branch_set(&u, &opts).unwrap();
        assert!(rep.branch_points().count() > 0);
        let phi = CylindricalProfile::new(3, vec![one()], 1).unwrap();
        let y0 = gap_probe(&rep, &phi, 1.0 / 16.0, 0.5).expect("witness");
        assert!(y0[0].abs() > 1.0 / 16.0);
    }

    #[test]
    fn empty_report_gives_first_axis_point() {
        let rep = SingularReport { n: 3, candidates: vec![], links: vec![], cluster_sizes: vec![], cell_size: 0.1, discarded: 0 };
        let phi = CylindricalProfile::new(3, vec![one()], 1).unwrap();
        assert_eq!(gap_probe(&rep, &phi, 0.125, 0.5), Some(vec![-0.5]));
        let rep2 = SingularReport { n: 2, ..rep };
        let phi2 = CylindricalProfile::new(2, vec![one()], 1).unwrap();
        assert_eq!(gap_probe(&rep2, &phi2, 0.125, 0.5), Some(vec![]));
    }

    #[test]
    fn planar_branch_point_is_isolated_stratum() {
        let u = AnalyticTwoValuedField::two_point_branch(2, 0.3).unwrap();
        let rep = detect_branch_set(&u, &DetectOptions::new(2)).unwrap();
        let blow = rescaled_blowups(&u, &rep, 0.02);
        let labels = stratify(&rep, &blow, &StratifyOptions::default()).unwrap();
        assert_eq!(labels.len(), 2);
        assert!(labels.iter().all(|l| l.stratum == Stratum::Level(0)), "{labels:?}");
    }

    #[test]
    fn branch_set_tip_is_ambiguous() {
        // P = z^2 + x3: two arcs of branch points meeting at the origin,
        // where the blow-up depends on x3 alone
        let u = AnalyticTwoValuedField::branch_polynomial(
            3,
            vec![one()],
            vec![
                BranchCoefficient { constant: Complex64::new(0.0, 0.0), axis_slope: one() },
                BranchCoefficient::constant(Complex64::new(0.0, 0.0)),
                BranchCoefficient::constant(one()),
            ],
        )
        .unwrap();
        let tip = Candidate {
            position: vec![0.0; 3],
            kind: CandidateKind::Branch,
            frequency: 0.5,
            frequency_uncertainty: 0.0,
            low_confidence: false,
            sym_norm: 0.0,
            sym_gradient_norm: None,
            branch_evidence: true,
            cluster: 0,
        };
        let rep = SingularReport { n: 3, candidates: vec![tip], links: vec![], cluster_sizes: vec![1], cell_size: 0.1, discarded: 0 };
        let blow = rescaled_blowups(&u, &rep, 1e-4);
        let labels = stratify(&rep, &blow, &StratifyOptions { level: QuadLevel::COARSE, ..Default::default() }).unwrap();
        assert_eq!(labels[0].stratum, Stratum::Ambiguous, "{labels:?}");
    }
}

use super::{FieldError, PairGradient, TwoValuedField};
use crate::pairspace::{optimal_pairing, Pairing, UnorderedPair};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

const HEADER: &str = "# branchlab sampled-field v1";

/// Structured sample locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    /// n = 2 only. Node 0 is the center; ring `i` (1-based) has radius
    /// `radius * (i / n_r)^grading` and `n_theta` equally spaced angles from 0.
    Polar { radius: f64, n_r: usize, n_theta: usize, grading: f64 },
    /// The box `[-half_width, half_width]^n` with `per_axis` nodes per axis.
    /// The domain ball has radius `half_width * sqrt(n)`.
    Cartesian { n: usize, half_width: f64, per_axis: usize },
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        match self {
            GridSpec::Polar { .. } => 2,
            GridSpec::Cartesian { n, .. } => *n,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            GridSpec::Polar { n_r, n_theta, .. } => 1 + n_r * n_theta,
            GridSpec::Cartesian { n, per_axis, .. } => per_axis.pow(n as u32),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Radius of the closed ball containing every node.
    pub fn domain_radius(&self) -> f64 {
        match *self {
            GridSpec::Polar { radius, .. } => radius,
            GridSpec::Cartesian { n, half_width, .. } => half_width * (n as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<(), FieldError> {
        let bad = |s: &str| Err(FieldError::InvalidSpec(s.into()));
        match *self {
            GridSpec::Polar { radius, n_r, n_theta, grading } => {
                if !(radius > 0.0) || n_r < 2 || n_theta < 4 || !(grading >= 1.0) {
                    return bad("polar grid needs radius > 0, n_r >= 2, n_theta >= 4, grading >= 1");
                }
            }
            GridSpec::Cartesian { n, half_width, per_axis } => {
                if !(2..=3).contains(&n) || !(half_width > 0.0) || per_axis < 3 {
                    return bad("cartesian grid needs n in 2..=3, half_width > 0, per_axis >= 3");
                }
            }
        }
        Ok(())
    }

    /// Polar ring radius `r_i`, with `r_0 = 0`.
    fn ring_radius(&self, i: usize) -> f64 {
        match *self {
            GridSpec::Polar { radius, n_r, grading, .. } => radius * (i as f64 / n_r as f64).powf(grading),
            _ => unreachable!(),
        }
    }

    fn node_coords(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(self.len() * n);
        match *self {
            GridSpec::Polar { n_r, n_theta, .. } => {
                out.extend([0.0, 0.0]);
                for i in 1..=n_r {
                    let r = self.ring_radius(i);
                    for j in 0..n_theta {
                        let th = 2.0 * PI * j as f64 / n_theta as f64;
                        out.extend([r * th.cos(), r * th.sin()]);
                    }
                }
            }
            GridSpec::Cartesian { n, half_width, per_axis } => {
                let h = 2.0 * half_width / (per_axis - 1) as f64;
                for idx in 0..self.len() {
                    let mut rem = idx;
                    for _ in 0..n {
                        out.push(-half_width + h * (rem % per_axis) as f64);
                        rem /= per_axis;
                    }
                }
            }
        }
        out
    }

    fn neighbors(&self, idx: usize) -> Vec<usize> {
        match *self {
            GridSpec::Polar { n_r, n_theta, .. } => {
                if idx == 0 {
                    return (1..=n_theta).collect();
                }
                let i = 1 + (idx - 1) / n_theta;
                let j = (idx - 1) % n_theta;
                let at = |i: usize, j: usize| 1 + (i - 1) * n_theta + j;
                let mut v = vec![at(i, (j + 1) % n_theta), at(i, (j + n_theta - 1) % n_theta)];
                v.push(if i == 1 { 0 } else { at(i - 1, j) });
                if i < n_r {
                    v.push(at(i + 1, j));
                }
                v
            }
            GridSpec::Cartesian { n, per_axis, .. } => {
                let mut v = Vec::new();
                let mut stride = 1;
                for _ in 0..n {
                    let c = (idx / stride) % per_axis;
                    if c > 0 {
                        v.push(idx - stride);
                    }
                    if c + 1 < per_axis {
                        v.push(idx + stride);
                    }
                    stride *= per_axis;
                }
                v
            }
        }
    }

    /// Node from which pairing propagation starts: outer ring or a box corner.
    fn seed(&self) -> usize {
        match *self {
            GridSpec::Polar { n_r, n_theta, .. } => 1 + (n_r - 1) * n_theta,
            GridSpec::Cartesian { .. } => 0,
        }
    }
}

/// A two-valued field tabulated on a structured grid.
///
/// Stored pairs follow a locally continuous ordering obtained by
/// breadth-first pairing propagation; evaluation interpolates with the corner
/// values aligned to each other, so storage order never leaks.
#[derive(Debug, Clone)]
pub struct SampledField {
    grid: GridSpec,
    m: usize,
    coords: Vec<f64>,
    values: Vec<UnorderedPair>,
    gradients: Vec<PairGradient>,
    symmetric: bool,
}

fn align(p: &UnorderedPair, g: &PairGradient, reference: &UnorderedPair) -> (UnorderedPair, PairGradient) {
    match optimal_pairing(reference, p).expect("sampled values share a dimension") {
        Pairing::Identity => (p.clone(), g.clone()),
        Pairing::Swap => (p.swapped(), g.swapped()),
    }
}

fn aligned_value(p: &UnorderedPair, reference: &UnorderedPair) -> UnorderedPair {
    p.aligned_to(reference).expect("sampled values share a dimension")
}

/// Weighted sums of aligned corner data.
fn blend(corners: &[(f64, UnorderedPair, PairGradient)]) -> (UnorderedPair, PairGradient) {
    let reference = corners
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|c| c.1.clone())
        .expect("at least one corner");
    let m = reference.dim();
    let mn = corners[0].2.g1.len();
    let mut val = UnorderedPair::zero(m);
    let mut grad = PairGradient { g1: vec![0.0; mn], g2: vec![0.0; mn] };
    for (w, p, g) in corners {
        if *w == 0.0 {
            continue;
        }
        let (p, g) = align(p, g, &reference);
        for k in 0..m {
            val.a1[k] += w * p.a1[k];
            val.a2[k] += w * p.a2[k];
        }
        for k in 0..mn {
            grad.g1[k] += w * g.g1[k];
            grad.g2[k] += w * g.g2[k];
        }
    }
    (val, grad)
}

impl SampledField {
    /// Tabulates `u` at the grid nodes (in parallel).
    pub fn sample<F: TwoValuedField + ?Sized>(u: &F, grid: GridSpec) -> Result<Self, FieldError> {
        grid.validate()?;
        if u.dim() != grid.dim() {
            return Err(FieldError::InvalidSpec(format!(
                "field dimension {} does not match grid dimension {}",
                u.dim(),
                grid.dim()
            )));
        }
        let n = grid.dim();
        let coords = grid.node_coords();
        let values: Vec<UnorderedPair> = coords.par_chunks(n).map(|x| u.eval(x)).collect();
        let symmetric = values.iter().all(|p| p.is_symmetric(1e-12 * (1.0 + p.norm())));
        Self::build(grid, u.codim(), coords, values, symmetric)
    }

    /// Builds a field from node values in grid order.
    pub fn from_values(grid: GridSpec, m: usize, values: Vec<UnorderedPair>, symmetric: bool) -> Result<Self, FieldError> {
        grid.validate()?;
        if values.len() != grid.len() || values.iter().any(|p| p.dim() != m) {
            return Err(FieldError::InvalidSpec("value count or dimension does not match grid".into()));
        }
        if symmetric && !values.iter().all(|p| p.is_symmetric(1e-12 * (1.0 + p.norm()))) {
            return Err(FieldError::InvalidSpec("symmetric flag set but a stored pair is not symmetric".into()));
        }
        let coords = grid.node_coords();
        Self::build(grid, m, coords, values, symmetric)
    }

    fn build(grid: GridSpec, m: usize, coords: Vec<f64>, mut values: Vec<UnorderedPair>, symmetric: bool) -> Result<Self, FieldError> {
        // breadth-first pairing propagation
        let mut seen = vec![false; values.len()];
        let mut queue = VecDeque::from([grid.seed()]);
        seen[grid.seed()] = true;
        while let Some(i) = queue.pop_front() {
            for j in grid.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    values[j] = aligned_value(&values[j], &values[i]);
                    queue.push_back(j);
                }
            }
        }
        let mut f = Self { grid, m, coords, values, gradients: Vec::new(), symmetric };
        f.gradients = (0..f.values.len()).into_par_iter().map(|i| f.nodal_gradient(i)).collect();
        Ok(f)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let n = self.grid.dim();
        &self.coords[i * n..(i + 1) * n]
    }

    pub fn value(&self, i: usize) -> &UnorderedPair {
        &self.values[i]
    }

    pub fn values(&self) -> &[UnorderedPair] {
        &self.values
    }

    /// Central-difference derivative at node `i`, aligned with `value(i)`.
    pub fn node_gradient(&self, i: usize) -> &PairGradient {
        &self.gradients[i]
    }

    /// Difference `(value(j) - value(i))` with `j` aligned to `i`, per sheet.
    fn diff(&self, i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
        let a = &self.values[i];
        let b = aligned_value(&self.values[j], a);
        (
            b.a1.iter().zip(&a.a1).map(|(x, y)| x - y).collect(),
            b.a2.iter().zip(&a.a2).map(|(x, y)| x - y).collect(),
        )
    }

    fn nodal_gradient(&self, idx: usize) -> PairGradient {
        let n = self.grid.dim();
        let m = self.m;
        let mut g = PairGradient::zeros(m, n);
        match self.grid {
            GridSpec::Polar { n_r, n_theta, .. } => {
                let at = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * n_theta + j };
                if idx == 0 {
                    // differences across diameters along the two axes when available
                    let quarter = n_theta / 4;
                    if n_theta % 4 == 0 {
                        let r1 = self.grid.ring_radius(1);
                        for (axis, j) in [(0usize, 0usize), (1, quarter)] {
                            let (p1, p2) = self.diff(0, at(1, j));
                            let (q1, q2) = self.diff(0, at(1, j + 2 * quarter));
                            for k in 0..m {
                                g.g1[k * n + axis] = (p1[k] - q1[k]) / (2.0 * r1);
                                g.g2[k * n + axis] = (p2[k] - q2[k]) / (2.0 * r1);
                            }
                        }
                    }
                    return g;
                }
                let i = 1 + (idx - 1) / n_theta;
                let j = (idx - 1) % n_theta;
                let r = |i: usize| self.grid.ring_radius(i);
                let ri = r(i);
                // radial derivative: three-point formula on a nonuniform grid
                let (dr1, dr2) = if i < n_r {
                    let (hm, hp) = (ri - r(i - 1), r(i + 1) - ri);
                    let (m1, m2) = self.diff(idx, at(i - 1, j));
                    let (p1, p2) = self.diff(idx, at(i + 1, j));
                    let f = |dm: f64, dp: f64| (hm * hm * dp - hp * hp * dm) / (hm * hp * (hm + hp));
                    ((0..m).map(|k| f(m1[k], p1[k])).collect::<Vec<_>>(), (0..m).map(|k| f(m2[k], p2[k])).collect::<Vec<_>>())
                } else {
                    let (h1, h2) = (ri - r(i - 1), ri - r(i - 2));
                    let (a1, a2) = self.diff(idx, at(i - 1, j));
                    let (b1, b2) = self.diff(idx, at(i - 2, j));
                    // one-sided second order: u' = -(h2^2 d1 - h1^2 d2) / (h1 h2 (h2 - h1))
                    let f = |d1: f64, d2: f64| -(h2 * h2 * d1 - h1 * h1 * d2) / (h1 * h2 * (h2 - h1));
                    ((0..m).map(|k| f(a1[k], b1[k])).collect(), (0..m).map(|k| f(a2[k], b2[k])).collect())
                };
                let dth = 2.0 * PI / n_theta as f64;
                let (p1, p2) = self.diff(idx, at(i, (j + 1) % n_theta));
                let (q1, q2) = self.diff(idx, at(i, (j + n_theta - 1) % n_theta));
                let th = j as f64 * dth;
                let (st, ct) = th.sin_cos();
                for k in 0..m {
                    for (gs, dr, p, q) in [(&mut g.g1, &dr1, &p1, &q1), (&mut g.g2, &dr2, &p2, &q2)] {
                        let dt = (p[k] - q[k]) / (2.0 * dth * ri);
                        gs[k * n] = ct * dr[k] - st * dt;
                        gs[k * n + 1] = st * dr[k] + ct * dt;
                    }
                }
            }
            GridSpec::Cartesian { half_width, per_axis, .. } => {
                let h = 2.0 * half_width / (per_axis - 1) as f64;
                let mut stride = 1;
                for axis in 0..n {
                    let c = (idx / stride) % per_axis;
                    let (lo, hi, denom) = if c == 0 {
                        (idx, idx + stride, h)
                    } else if c + 1 == per_axis {
                        (idx - stride, idx, h)
                    } else {
                        (idx - stride, idx + stride, 2.0 * h)
                    };
                    let (a1, a2) = self.diff(idx, hi);
                    let (b1, b2) = self.diff(idx, lo);
                    for k in 0..m {
                        g.g1[k * n + axis] = (a1[k] - b1[k]) / denom;
                        g.g2[k * n + axis] = (a2[k] - b2[k]) / denom;
                    }
                    stride *= per_axis;
                }
            }
        }
        g
    }

    fn corner(&self, i: usize, w: f64) -> (f64, UnorderedPair, PairGradient) {
        (w, self.values[i].clone(), self.gradients[i].clone())
    }

    fn interpolate(&self, x: &[f64]) -> (UnorderedPair, PairGradient) {
        match self.grid {
            GridSpec::Polar { radius, n_r, n_theta, grading } => {
                let r = x[0].hypot(x[1]).min(radius);
                let mut th = x[1].atan2(x[0]);
                if th < 0.0 {
                    th += 2.0 * PI;
                }
                let dth = 2.0 * PI / n_theta as f64;
                let s = (th / dth).min(n_theta as f64 - 1e-12);
                let j0 = s.floor() as usize;
                let j1 = (j0 + 1) % n_theta;
                let ft = s - j0 as f64;
                // ring index from the inverse of the grading map
                let i0 = (((r / radius).powf(1.0 / grading) * n_r as f64).floor() as usize).min(n_r - 1);
                let (ra, rb) = (self.grid.ring_radius(i0), self.grid.ring_radius(i0 + 1));
                let fr = ((r - ra) / (rb - ra)).clamp(0.0, 1.0);
                let at = |i: usize, j: usize| 1 + (i - 1) * n_theta + j;
                if i0 == 0 {
                    // inner disc: the linear interpolant between the center and ring 1
                    let ring = blend(&[self.corner(at(1, j0), 1.0 - ft), self.corner(at(1, j1), ft)]);
                    let c = aligned_value(&self.values[0], &ring.0);
                    let val = UnorderedPair::new(
                        (0..self.m).map(|k| c.a1[k] + fr * (ring.0.a1[k] - c.a1[k])).collect(),
                        (0..self.m).map(|k| c.a2[k] + fr * (ring.0.a2[k] - c.a2[k])).collect(),
                    );
                    let (pa, pb) = (aligned_value(&self.values[at(1, j0)], &ring.0), aligned_value(&self.values[at(1, j1)], &ring.0));
                    let (st, ct) = th.sin_cos();
                    let mut g = PairGradient::zeros(self.m, 2);
                    for k in 0..self.m {
                        for (gs, ring_v, cv, a, b) in [
                            (&mut g.g1, ring.0.a1[k], c.a1[k], pa.a1[k], pb.a1[k]),
                            (&mut g.g2, ring.0.a2[k], c.a2[k], pa.a2[k], pb.a2[k]),
                        ] {
                            let dr = (ring_v - cv) / rb;
                            let dt = (b - a) / (dth * rb);
                            gs[2 * k] = ct * dr - st * dt;
                            gs[2 * k + 1] = st * dr + ct * dt;
                        }
                    }
                    return (val, g);
                }
                blend(&[
                    self.corner(at(i0, j0), (1.0 - fr) * (1.0 - ft)),
                    self.corner(at(i0, j1), (1.0 - fr) * ft),
                    self.corner(at(i0 + 1, j0), fr * (1.0 - ft)),
                    self.corner(at(i0 + 1, j1), fr * ft),
                ])
            }
            GridSpec::Cartesian { n, half_width, per_axis } => {
                let h = 2.0 * half_width / (per_axis - 1) as f64;
                let mut base = 0;
                let mut stride = 1;
                let mut fr = [0.0; 3];
                let mut strides = [0usize; 3];
                for axis in 0..n {
                    let s = ((x[axis] + half_width) / h).clamp(0.0, (per_axis - 1) as f64);
                    let c = (s.floor() as usize).min(per_axis - 2);
                    fr[axis] = s - c as f64;
                    base += c * stride;
                    strides[axis] = stride;
                    stride *= per_axis;
                }
                let corners: Vec<_> = (0..1usize << n)
                    .map(|mask| {
                        let mut idx = base;
                        let mut w = 1.0;
                        for axis in 0..n {
                            if mask >> axis & 1 == 1 {
                                idx += strides[axis];
                                w *= fr[axis];
                            } else {
                                w *= 1.0 - fr[axis];
                            }
                        }
                        self.corner(idx, w)
                    })
                    .collect();
                blend(&corners)
            }
        }
    }

    /// Serializes to the text container: header lines, then one row per node
    /// with coordinates, `a1`, `a2`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "# n={} m={} symmetric={}", self.grid.dim(), self.m, self.symmetric).unwrap();
        match self.grid {
            GridSpec::Polar { radius, n_r, n_theta, grading } => {
                writeln!(s, "# grid=polar radius={radius:e} n_r={n_r} n_theta={n_theta} grading={grading:e}").unwrap()
            }
            GridSpec::Cartesian { n, half_width, per_axis } => {
                writeln!(s, "# grid=cartesian n={n} half_width={half_width:e} per_axis={per_axis}").unwrap()
            }
        }
        for (i, p) in self.values.iter().enumerate() {
            let row: Vec<String> = self.node(i).iter().chain(&p.a1).chain(&p.a2).map(|v| format!("{v:e}")).collect();
            writeln!(s, "{}", row.join(",")).unwrap();
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self, FieldError> {
        let perr = |s: String| FieldError::Parse(s);
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(perr("missing header".into()));
        }
        let kv = |line: Option<&str>| -> Result<Vec<(String, String)>, FieldError> {
            let line = line.and_then(|l| l.strip_prefix("# ")).ok_or_else(|| perr("truncated header".into()))?;
            line.split_whitespace()
                .map(|t| {
                    t.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| perr(format!("bad header token {t}")))
                })
                .collect()
        };
        let get = |kv: &[(String, String)], key: &str| -> Result<String, FieldError> {
            kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).ok_or_else(|| perr(format!("missing {key}")))
        };
        fn num<T: std::str::FromStr>(s: String) -> Result<T, FieldError> {
            s.parse().map_err(|_| FieldError::Parse(format!("bad number {s}")))
        }
        let meta = kv(lines.next())?;
        let n: usize = num(get(&meta, "n")?)?;
        let m: usize = num(get(&meta, "m")?)?;
        let symmetric: bool = num(get(&meta, "symmetric")?)?;
        let gl = kv(lines.next())?;
        let grid = match get(&gl, "grid")?.as_str() {
            "polar" => GridSpec::Polar {
                radius: num(get(&gl, "radius")?)?,
                n_r: num(get(&gl, "n_r")?)?,
                n_theta: num(get(&gl, "n_theta")?)?,
                grading: num(get(&gl, "grading")?)?,
            },
            "cartesian" => GridSpec::Cartesian {
                n: num(get(&gl, "n")?)?,
                half_width: num(get(&gl, "half_width")?)?,
                per_axis: num(get(&gl, "per_axis")?)?,
            },
            g => return Err(perr(format!("unknown grid {g}"))),
        };
        grid.validate()?;
        if grid.dim() != n {
            return Err(perr("grid dimension disagrees with n".into()));
        }
        let expected = grid.node_coords();
        let mut values = Vec::with_capacity(grid.len());
        for (row, line) in lines.enumerate() {
            let v: Vec<f64> = line.split(',').map(|t| num(t.to_string())).collect::<Result<_, _>>()?;
            if v.len() != n + 2 * m || row >= grid.len() {
                return Err(perr(format!("row {row} has the wrong shape")));
            }
            if v[..n] != expected[row * n..(row + 1) * n] {
                return Err(perr(format!("row {row} coordinates do not match the grid")));
            }
            values.push(UnorderedPair::new(v[n..n + m].to_vec(), v[n + m..].to_vec()));
        }
        if values.len() != grid.len() {
            return Err(perr(format!("expected {} rows, found {}", grid.len(), values.len())));
        }
        Self::from_values(grid, m, values, symmetric)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), FieldError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| FieldError::Io(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path).map_err(|e| FieldError::Io(e.to_string()))?;
        Self::from_csv_str(&text)
    }
}

impl TwoValuedField for SampledField {
    fn dim(&self) -> usize {
        self.grid.dim()
    }
    fn codim(&self) -> usize {
        self.m
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        self.interpolate(x).0
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        Ok(self.interpolate(x))
    }
}

//! Compressed sparse rows and Jacobi-preconditioned conjugate gradients.

use crate::quadrature::pairwise_sum;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("conjugate gradients stopped after {iterations} iterations with relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix has a non-positive diagonal entry at row {0}")]
    NotPositiveDefinite(usize),
}

/// Square matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.par_iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// `|b - Ax| / |b|`
    pub residual: f64,
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from `x0`,
/// until `|b - Ax| <= tol |b|`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, CgStats), LinalgError> {
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(LinalgError::NotPositiveDefinite(i));
    }
    let mut x = x0.map_or_else(|| vec![0.0; a.n], <[f64]>::to_vec);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; a.n], CgStats { iterations: 0, residual: 0.0 }));
    }
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rn = dot(&r, &r).sqrt() / bnorm;
        if rn <= tol {
            return Ok((x, CgStats { iterations: it, residual: rn }));
        }
        let ap = a.mul_vec(&p);
        let step = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, ap)| *r -= step * ap);
        z.par_iter_mut().zip(&r).zip(&diag).for_each(|((z, r), d)| *z = r / d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    let residual = dot(&r, &r).sqrt() / bnorm;
    if residual <= tol {
        return Ok((x, CgStats { iterations: max_iter, residual }));
    }
    Err(LinalgError::NotConverged { iterations: max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (1, 1, 4.0)]);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(a.diagonal(), vec![3.0, 4.0]);
    }

    #[test]
    fn solves_tridiagonal_system() {
        // -u'' = 0 with u(0) = 0, u(n+1) = 1 folded into the right-hand side
        let n = 50;
        let a = laplacian_1d(n);
        let mut b = vec![0.0; n];
        b[n - 1] = 1.0;
        let (x, st) = conjugate_gradient(&a, &b, None, 1e-12, 1000).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - (i + 1) as f64 / (n + 1) as f64).abs() < 1e-10);
        }
        assert!(st.residual <= 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let a = laplacian_1d(200);
        let b = vec![1.0; 200];
        assert!(matches!(conjugate_gradient(&a, &b, None, 1e-14, 3), Err(LinalgError::NotConverged { .. })));
    }

    #[test]
    fn rejects_indefinite_diagonal() {
        let a = CsrMatrix::from_triplets(1, vec![(0, 0, -1.0)]);
        assert_eq!(conjugate_gradient(&a, &[1.0], None, 1e-10, 10), Err(LinalgError::NotPositiveDefinite(0)));
    }
}

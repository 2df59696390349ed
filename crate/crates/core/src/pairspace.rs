//! Unordered pairs of vectors in R^m, the metric between them, and the
//! average/symmetric split of two-valued data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Which pairing of two stored pairs attains the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    /// a1 <-> b1, a2 <-> b2
    Identity,
    /// a1 <-> b2, a2 <-> b1
    Swap,
}

/// A point of the space of unordered pairs `{a1, a2}` with `a1, a2 in R^m`.
///
/// The two entries are stored in some order; equality and the metric quotient
/// by swapping them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnorderedPair {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl UnorderedPair {
    pub fn new(a1: Vec<f64>, a2: Vec<f64>) -> Self {
        assert_eq!(a1.len(), a2.len(), "pair entries must share a dimension");
        Self { a1, a2 }
    }

    /// `{v, -v}`.
    pub fn symmetric(v: Vec<f64>) -> Self {
        let neg = v.iter().map(|x| -x).collect();
        Self { a1: v, a2: neg }
    }

    /// `{0, 0}` in R^m.
    pub fn zero(m: usize) -> Self {
        Self { a1: vec![0.0; m], a2: vec![0.0; m] }
    }

    /// `{h + s, h - s}`.
    pub fn from_average_symmetric(h: &[f64], s: &[f64]) -> Self {
        let a1 = h.iter().zip(s).map(|(h, s)| h + s).collect();
        let a2 = h.iter().zip(s).map(|(h, s)| h - s).collect();
        Self { a1, a2 }
    }

    pub fn dim(&self) -> usize {
        self.a1.len()
    }

    /// `|a|^2 = |a1|^2 + |a2|^2`.
    pub fn norm_sq(&self) -> f64 {
        dot(&self.a1, &self.a1) + dot(&self.a2, &self.a2)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// The entries in the opposite storage order.
    pub fn swapped(&self) -> Self {
        Self { a1: self.a2.clone(), a2: self.a1.clone() }
    }

    /// Reorders storage so that the returned pair is aligned with `reference`
    /// under `optimal_pairing`.
    pub fn aligned_to(&self, reference: &UnorderedPair) -> Result<Self, PairError> {
        Ok(match optimal_pairing(reference, self)? {
            Pairing::Identity => self.clone(),
            Pairing::Swap => self.swapped(),
        })
    }

    /// Whether `a1 + a2 = 0` up to `tol` (absolute, per component).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.a1.iter().zip(&self.a2).all(|(x, y)| (x + y).abs() <= tol)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a1: self.a1.iter().map(|x| x * s).collect(),
            a2: self.a2.iter().map(|x| x * s).collect(),
        }
    }
}

impl PartialEq for UnorderedPair {
    fn eq(&self, other: &Self) -> bool {
        (self.a1 == other.a1 && self.a2 == other.a2)
            || (self.a1 == other.a2 && self.a2 == other.a1)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Follows one entry of each pair along a sampled curve. At every step the
/// entry closest to the linear extrapolation of the two previous choices is
/// taken, so transversal crossings of the two entries are followed.
pub fn continuous_selection(pairs: &[UnorderedPair]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    for p in pairs {
        let pick = match out.len() {
            0 => p.a1.clone(),
            l => {
                let pred: Vec<f64> = if l == 1 {
                    out[0].clone()
                } else {
                    out[l - 1].iter().zip(&out[l - 2]).map(|(a, b)| 2.0 * a - b).collect()
                };
                if dist_sq(&p.a2, &pred) < dist_sq(&p.a1, &pred) {
                    p.a2.clone()
                } else {
                    p.a1.clone()
                }
            }
        };
        out.push(pick);
    }
    out
}

fn check_dims(a: &UnorderedPair, b: &UnorderedPair) -> Result<(), PairError> {
    if a.dim() != b.dim() {
        return Err(PairError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(())
}

/// Squared costs of the identity and swapped pairings.
fn pairing_costs(a: &UnorderedPair, b: &UnorderedPair) -> (f64, f64) {
    let id = dist_sq(&a.a1, &b.a1) + dist_sq(&a.a2, &b.a2);
    let sw = dist_sq(&a.a1, &b.a2) + dist_sq(&a.a2, &b.a1);
    (id, sw)
}

/// Squared metric `G(a, b)^2`.
pub fn metric_g_sq(a: &UnorderedPair, b: &UnorderedPair) -> Result<f64, PairError> {
    check_dims(a, b)?;
    let (id, sw) = pairing_costs(a, b);
    Ok(id.min(sw))
}

/// `G(a, b) = min over pairings of sqrt(|a_i - b_{p(i)}|^2 summed)`.
pub fn metric_g(a: &UnorderedPair, b: &UnorderedPair) -> Result<f64, PairError> {
    metric_g_sq(a, b).map(f64::sqrt)
}

/// The pairing attaining `G(a, b)`; ties resolve to `Identity`.
pub fn optimal_pairing(a: &UnorderedPair, b: &UnorderedPair) -> Result<Pairing, PairError> {
    check_dims(a, b)?;
    let (id, sw) = pairing_costs(a, b);
    Ok(if sw < id { Pairing::Swap } else { Pairing::Identity })
}

/// `a = {avg + s, avg - s}` with `avg = (a1 + a2)/2` and `s = (a1 - a2)/2`.
pub fn decompose(a: &UnorderedPair) -> (Vec<f64>, UnorderedPair) {
    let avg: Vec<f64> = a.a1.iter().zip(&a.a2).map(|(x, y)| 0.5 * (x + y)).collect();
    let s: Vec<f64> = a.a1.iter().zip(&a.a2).map(|(x, y)| 0.5 * (x - y)).collect();
    (avg, UnorderedPair::symmetric(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(a1: &[f64], a2: &[f64]) -> UnorderedPair {
        UnorderedPair::new(a1.to_vec(), a2.to_vec())
    }

    #[test]
    fn identical_pairs_have_zero_distance() {
        let p = pair(&[0.3, -1.2], &[0.3, -1.2]);
        assert_eq!(metric_g(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_pair_to_origin() {
        let v = [1.5, -2.0, 0.25];
        let a = UnorderedPair::symmetric(v.to_vec());
        let d = metric_g(&a, &UnorderedPair::zero(3)).unwrap();
        let norm_v = (dot(&v, &v)).sqrt();
        assert!((d - 2f64.sqrt() * norm_v).abs() < 1e-15);
    }

    #[test]
    fn two_pairings_enumerated() {
        let a = pair(&[1.0, 0.0], &[0.0, 1.0]);
        let b = pair(&[0.0, 1.0], &[2.0, 0.0]);
        // identity: |(1,-1)|^2 + |(-2,1)|^2 = 2 + 5; swap: |(-1,0)|^2 + |(0,0)|^2 = 1
        let brute = (2.0f64 + 5.0).min(1.0).sqrt();
        assert_eq!(metric_g(&a, &b).unwrap(), brute);
        assert_eq!(optimal_pairing(&a, &b).unwrap(), Pairing::Swap);
    }

    #[test]
    fn pairing_of_stored_orders() {
        let a = UnorderedPair::symmetric(vec![0.4, 0.7]);
        assert_eq!(optimal_pairing(&a, &a).unwrap(), Pairing::Identity);
        assert_eq!(optimal_pairing(&a, &a.swapped()).unwrap(), Pairing::Swap);
    }

    #[test]
    fn ties_resolve_to_identity() {
        let a = UnorderedPair::symmetric(vec![1.0]);
        let b = UnorderedPair::zero(1);
        assert_eq!(optimal_pairing(&a, &b).unwrap(), Pairing::Identity);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = UnorderedPair::zero(2);
        let b = UnorderedPair::zero(3);
        assert_eq!(
            metric_g(&a, &b),
            Err(PairError::DimensionMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn decompose_examples() {
        let v = vec![0.5, -3.0];
        let (avg, s) = decompose(&pair(&v, &v));
        assert_eq!(avg, v);
        assert_eq!(s, UnorderedPair::zero(2));

        let (avg, s) = decompose(&UnorderedPair::symmetric(v.clone()));
        assert_eq!(avg, vec![0.0, 0.0]);
        assert_eq!(s, UnorderedPair::symmetric(v));

        let (avg, s) = decompose(&pair(&[3.0, 1.0], &[1.0, 1.0]));
        assert_eq!(avg, vec![2.0, 1.0]);
        assert_eq!(s, UnorderedPair::symmetric(vec![1.0, 0.0]));
    }

    fn arb_pair(m: usize) -> impl Strategy<Value = UnorderedPair> {
        (
            prop::collection::vec(-10.0f64..10.0, m),
            prop::collection::vec(-10.0f64..10.0, m),
        )
            .prop_map(|(a, b)| UnorderedPair::new(a, b))
    }

    proptest! {
        #[test]
        fn metric_axioms(a in arb_pair(3), b in arb_pair(3), c in arb_pair(3)) {
            let ab = metric_g(&a, &b).unwrap();
            let ba = metric_g(&b, &a).unwrap();
            let bc = metric_g(&b, &c).unwrap();
            let ac = metric_g(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(metric_g(&a, &a.swapped()).unwrap(), 0.0);
            if ab == 0.0 { prop_assert!(a == b); }
        }

        #[test]
        fn norm_is_distance_to_origin(a in arb_pair(2)) {
            let d = metric_g_sq(&a, &UnorderedPair::zero(2)).unwrap();
            prop_assert_eq!(d, a.norm_sq());
            prop_assert_eq!(a.norm_sq(), a.swapped().norm_sq());
        }

        #[test]
        fn pairing_matches_brute_force(a in arb_pair(2), b in arb_pair(2)) {
            let (id, sw) = pairing_costs(&a, &b);
            let expected = if sw < id { Pairing::Swap } else { Pairing::Identity };
            prop_assert_eq!(optimal_pairing(&a, &b).unwrap(), expected);
        }

        #[test]
        fn decompose_recompose(a in prop::collection::vec(-1e3f64..1e3, 3),
                               b in prop::collection::vec(-1e3f64..1e3, 3)) {
            // dyadic inputs make the halving and re-addition exact
            let a: Vec<f64> = a.iter().map(|x| (x * 64.0).round() / 64.0).collect();
            let b: Vec<f64> = b.iter().map(|x| (x * 64.0).round() / 64.0).collect();
            let p = UnorderedPair::new(a, b);
            let (avg, s) = decompose(&p);
            prop_assert!(s.is_symmetric(0.0));
            let back = UnorderedPair::from_average_symmetric(&avg, &s.a1);
            prop_assert_eq!(back.a1, p.a1);
            prop_assert_eq!(back.a2, p.a2);
        }
    }
}

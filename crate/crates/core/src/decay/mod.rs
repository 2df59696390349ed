//! Branch-set detection, the gap/decay iteration across scales, and tangent
//! extraction at branch points.

mod detect;
mod iteration;
mod tangent;

pub use detect::{
    detect_branch_set, gap_probe, rescaled_blowups, stratify, Candidate, CandidateKind, DetectOptions, SingularReport,
    StratifyOptions, Stratum, StratumLabel,
};
pub use iteration::{
    decay_step, iterate, pinching_check, DecayOptions, DecayRun, DecayStepRecord, PinchingOptions, PinchingReport,
    StepOutcome, StepResult, StopReason,
};
pub use tangent::{fit_average, harmonic_basis, HarmonicFit, HarmonicPolynomial, TangentOptions, TangentResult, tangent_expansion};

use crate::fields::{FieldError, PairGradient, TwoValuedField};
use crate::frequency::FrequencyError;
use crate::pairspace::UnorderedPair;
use crate::profiles::ProfileError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecayError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("not a branch point: fitted coefficient has norm {0:e}")]
    NotABranchPoint(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
}

/// The symmetric part `{+-(u_1 - u_2)/2}` of a field.
#[derive(Debug, Clone)]
pub struct SymmetricComponent<F>(pub F);

impl<F: TwoValuedField> TwoValuedField for SymmetricComponent<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn codim(&self) -> usize {
        self.0.codim()
    }
    fn eval(&self, x: &[f64]) -> UnorderedPair {
        let p = self.0.eval(x);
        UnorderedPair::symmetric(p.a1.iter().zip(&p.a2).map(|(a, b)| 0.5 * (a - b)).collect())
    }
    fn eval_with_gradient(&self, x: &[f64]) -> Result<(UnorderedPair, PairGradient), FieldError> {
        let (p, g) = self.0.eval_with_gradient(x)?;
        let s: Vec<f64> = p.a1.iter().zip(&p.a2).map(|(a, b)| 0.5 * (a - b)).collect();
        let gs: Vec<f64> = g.g1.iter().zip(&g.g2).map(|(a, b)| 0.5 * (a - b)).collect();
        let neg: Vec<f64> = gs.iter().map(|v| -v).collect();
        Ok((UnorderedPair::symmetric(s), PairGradient { g1: gs, g2: neg }))
    }
}

/// Least-squares slope of `log y` against `log x` over the middle two thirds
/// of the points with positive values (all of them when fewer than six).
pub(crate) fn middle_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let pts: &[(f64, f64)] = if pts.len() >= 6 {
        let cut = pts.len() / 6;
        &pts[cut..pts.len() - cut]
    } else {
        &pts
    };
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

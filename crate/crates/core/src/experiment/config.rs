//! Versioned experiment configuration and its validation.

use crate::decay::DetectOptions;
use crate::fields::{AnalyticTwoValuedField, AngularMode, BranchCoefficient, Monomial, SampledField, TwoValuedField};
use crate::minimizer::{BranchConfiguration, SearchBudget};
use crate::profiles::CylindricalProfile;
use crate::quadrature::QuadLevel;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// A complex number as `[re, im]`.
pub type ComplexSpec = [f64; 2];

fn cplx(v: &[ComplexSpec]) -> Vec<Complex64> {
    v.iter().map(|c| Complex64::new(c[0], c[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Seed of every randomized part of the experiment.
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory; relative paths resolve against the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub field: FieldSpec,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub c: Vec<ComplexSpec>,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchCoefficientSpec {
    pub constant: ComplexSpec,
    #[serde(default)]
    pub axis_slope: ComplexSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    CylindricalPower {
        n: usize,
        c: Vec<ComplexSpec>,
        k: u32,
        #[serde(default)]
        average: Vec<Monomial>,
    },
    PowerSum {
        n: usize,
        terms: Vec<PowerTerm>,
        #[serde(default)]
        average: Vec<Monomial>,
    },
    BranchPolynomial {
        n: usize,
        c: Vec<ComplexSpec>,
        coeffs: Vec<BranchCoefficientSpec>,
        #[serde(default)]
        average: Vec<Monomial>,
    },
    TwoPointBranch {
        n: usize,
        t: f64,
        #[serde(default)]
        average: Vec<Monomial>,
    },
    CustomAveragePlusSymmetric {
        n: usize,
        m: usize,
        #[serde(default)]
        average: Vec<Monomial>,
        #[serde(default)]
        modes: Vec<AngularMode>,
    },
    /// A sampled field in the CSV container format.
    Sampled { path: PathBuf },
}

impl FieldSpec {
    pub fn dim(&self) -> Option<usize> {
        match self {
            FieldSpec::CylindricalPower { n, .. }
            | FieldSpec::PowerSum { n, .. }
            | FieldSpec::BranchPolynomial { n, .. }
            | FieldSpec::TwoPointBranch { n, .. }
            | FieldSpec::CustomAveragePlusSymmetric { n, .. } => Some(*n),
            FieldSpec::Sampled { .. } => None,
        }
    }

    /// The analytic field, or `None` for sampled fields.
    pub fn analytic(&self) -> Result<Option<AnalyticTwoValuedField>, ConfigError> {
        let err = |e: crate::fields::FieldError| ConfigError::invalid("field", e.to_string());
        let with_avg = |f: AnalyticTwoValuedField, avg: &Vec<Monomial>| {
            if avg.is_empty() {
                Ok(f)
            } else {
                f.with_average(avg.clone()).map_err(err)
            }
        };
        Ok(Some(match self {
            FieldSpec::CylindricalPower { n, c, k, average } => {
                with_avg(AnalyticTwoValuedField::cylindrical(*n, cplx(c), *k).map_err(err)?, average)?
            }
            FieldSpec::PowerSum { n, terms, average } => {
                let t = terms.iter().map(|t| (cplx(&t.c), t.k)).collect();
                with_avg(AnalyticTwoValuedField::power_sum(*n, t).map_err(err)?, average)?
            }
            FieldSpec::BranchPolynomial { n, c, coeffs, average } => {
                let co = coeffs
                    .iter()
                    .map(|b| BranchCoefficient {
                        constant: Complex64::new(b.constant[0], b.constant[1]),
                        axis_slope: Complex64::new(b.axis_slope[0], b.axis_slope[1]),
                    })
                    .collect();
                with_avg(AnalyticTwoValuedField::branch_polynomial(*n, cplx(c), co).map_err(err)?, average)?
            }
            FieldSpec::TwoPointBranch { n, t, average } => {
                with_avg(AnalyticTwoValuedField::two_point_branch(*n, *t).map_err(err)?, average)?
            }
            FieldSpec::CustomAveragePlusSymmetric { n, m, average, modes } => {
                let f = AnalyticTwoValuedField::from_modes(*n, *m, modes.clone()).map_err(err)?;
                with_avg(f, average)?
            }
            FieldSpec::Sampled { .. } => return Ok(None),
        }))
    }

    /// Builds the field, reading sampled data relative to `base`.
    pub fn build(&self, base: &Path) -> Result<Box<dyn TwoValuedField>, ConfigError> {
        if let FieldSpec::Sampled { path } = self {
            let p = base.join(path);
            let f = SampledField::read_csv(&p).map_err(|e| ConfigError::invalid("field.path", e.to_string()))?;
            return Ok(Box::new(f));
        }
        Ok(Box::new(self.analytic()?.expect("analytic spec")))
    }

    /// Leading profile `(c, k)` implied by the spec, when there is one.
    pub fn leading_profile(&self) -> Option<(Vec<Complex64>, u32)> {
        match self {
            FieldSpec::CylindricalPower { c, k, .. } => Some((cplx(c), *k)),
            FieldSpec::PowerSum { terms, .. } => terms.iter().min_by_key(|t| t.k).map(|t| (cplx(&t.c), t.k)),
            FieldSpec::BranchPolynomial { c, .. } => Some((cplx(c), 1)),
            _ => None,
        }
    }

    /// A power-sum spec with every term except the lowest-order one scaled by `t`.
    pub fn perturbation_scaled(&self, t: f64) -> Option<FieldSpec> {
        match self {
            FieldSpec::PowerSum { n, terms, average } => {
                let kmin = terms.iter().map(|x| x.k).min()?;
                let terms = terms
                    .iter()
                    .map(|x| PowerTerm {
                        c: if x.k == kmin { x.c.clone() } else { x.c.iter().map(|c| [c[0] * t, c[1] * t]).collect() },
                        k: x.k,
                    })
                    .collect();
                Some(FieldSpec::PowerSum { n: *n, terms, average: average.clone() })
            }
            _ => None,
        }
    }
}

/// Quadrature level by name (`coarse`, `medium`, `fine`) or explicit sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSpec {
    Named(LevelName),
    Explicit(QuadLevel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelName {
    Coarse,
    Medium,
    Fine,
}

impl Default for LevelSpec {
    fn default() -> Self {
        LevelSpec::Named(LevelName::Medium)
    }
}

impl LevelSpec {
    pub fn level(&self) -> QuadLevel {
        match self {
            LevelSpec::Named(LevelName::Coarse) => QuadLevel::COARSE,
            LevelSpec::Named(LevelName::Medium) => QuadLevel::MEDIUM,
            LevelSpec::Named(LevelName::Fine) => QuadLevel::FINE,
            LevelSpec::Explicit(l) => *l,
        }
    }
}

/// A profile given explicitly: `c`, `k`, and optionally the skew matrix `a`
/// (row-major) and center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub c: Vec<ComplexSpec>,
    pub k: u32,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl ProfileSpec {
    pub fn build(&self, n: usize) -> Result<CylindricalProfile, ConfigError> {
        let a = self.a.clone().unwrap_or_else(|| vec![0.0; n * n]);
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; n]);
        CylindricalProfile::with_frame(n, cplx(&self.c), self.k, a, center)
            .map_err(|e| ConfigError::invalid("experiment.profile", e.to_string()))
    }
}

fn default_level() -> LevelSpec {
    LevelSpec::default()
}
fn default_radii() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_ratios() -> Vec<f64> {
    vec![0.5, 0.25]
}
fn default_tol() -> f64 {
    1e-6
}
fn default_doubling_tol() -> f64 {
    1e-8
}
fn default_pythagoras_tol() -> f64 {
    1e-10
}
fn default_rho_min() -> f64 {
    0.05
}
fn default_rho_max() -> f64 {
    0.9
}
fn default_count() -> usize {
    24
}
fn default_slack() -> f64 {
    1e-8
}
fn default_grids() -> Vec<[usize; 2]> {
    vec![[8, 32], [16, 64], [32, 128]]
}
fn default_boundary_samples() -> usize {
    1024
}
fn default_radius() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    0.125
}
fn default_j_max() -> usize {
    4
}
fn default_tilt() -> f64 {
    0.3
}
fn default_scales() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625]
}
fn default_spectral_theta() -> f64 {
    0.0625
}
fn default_sigma() -> f64 {
    0.5
}
fn default_max_half_freq() -> usize {
    8
}
fn default_corollary_gamma() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.05
}
fn default_half_width() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    /// Ratios `sigma / rho` of the doubling check.
    #[serde(default = "default_ratios")]
    pub doubling_ratios: Vec<f64>,
    /// Expected constant value of `N`.
    #[serde(default)]
    pub expected: Option<f64>,
    /// Relative tolerance on `N` against `expected`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Relative tolerance of the doubling equality for homogeneous fields.
    #[serde(default = "default_doubling_tol")]
    pub doubling_tol: f64,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_rho_min")]
    pub rho_min: f64,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Additional random stationary power-sum fields drawn from the seed.
    #[serde(default)]
    pub random_fields: usize,
    /// Homogeneity used for the radial identity table; omitted when unset.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Absolute tolerance of the radial identity.
    #[serde(default = "default_tol")]
    pub identity_tol: f64,
    /// The configured field is a control expected to violate monotonicity.
    #[serde(default)]
    pub negative_control: bool,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeParams {
    /// `[n_r, n_theta]` per refinement.
    #[serde(default = "default_grids")]
    pub grids: Vec<[usize; 2]>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
    #[serde(default = "default_branch_config")]
    pub configuration: BranchConfiguration,
    /// Branch-point search on the finest grid.
    #[serde(default)]
    pub search: Option<SearchBudget>,
    /// Frequency window expected at the center of the finest solution.
    #[serde(default)]
    pub expected_frequency: Option<[f64; 2]>,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

fn default_branch_config() -> BranchConfiguration {
    BranchConfiguration::Single([0.0, 0.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayExpectations {
    /// Expected per-step ratio is `theta^ratio_exponent`.
    #[serde(default)]
    pub ratio_exponent: Option<f64>,
    #[serde(default)]
    pub ratio_tol: Option<f64>,
    #[serde(default)]
    pub c: Option<Vec<ComplexSpec>>,
    #[serde(default)]
    pub c_tol: Option<f64>,
    /// Expected slope of the L2 remainder table.
    #[serde(default)]
    pub l2_slope: Option<f64>,
    #[serde(default)]
    pub slope_tol: Option<f64>,
    /// Bound on the excess between limits from different scale ratios.
    #[serde(default)]
    pub uniqueness_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub guess: Option<ProfileSpec>,
    /// Scale ratios; the first drives the tables, the rest test uniqueness.
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_tilt")]
    pub tilt_bound: f64,
    #[serde(default)]
    pub gap_check: bool,
    #[serde(default = "default_true")]
    pub tangent: bool,
    #[serde(default)]
    pub expect: Option<DecayExpectations>,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

fn default_thetas() -> Vec<f64> {
    vec![default_theta()]
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    /// Fit the profile to the field before lifting.
    #[serde(default = "default_true")]
    pub fit: bool,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_spectral_theta")]
    pub theta: f64,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_max_half_freq")]
    pub max_half_freq: usize,
    /// Evaluate the small-radius boundary term (alpha = 1/2, n >= 3).
    #[serde(default)]
    pub boundary_term: bool,
    /// Absolute tolerance of the boundary term.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_pythagoras_tol")]
    pub pythagoras_tol: f64,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorollaryParamsSpec {
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    /// High-frequency points; defaults to the profile center.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_corollary_gamma")]
    pub gamma: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Scales applied to the higher-order power-sum terms.
    #[serde(default)]
    pub perturbation_scales: Vec<f64>,
    /// Largest allowed max/min ratio across the perturbation family.
    #[serde(default = "default_spread")]
    pub max_spread: f64,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

fn default_spread() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default)]
    pub cells: Option<usize>,
    #[serde(default)]
    pub guess: Option<ProfileSpec>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: LevelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Frequency(FrequencyParams),
    Monotonicity(MonotonicityParams),
    Minimize(MinimizeParams),
    Decay(DecayParams),
    Spectral(SpectralParams),
    Corollaries(CorollaryParamsSpec),
    FullPipeline(PipelineParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Frequency(_) => "frequency",
            Experiment::Monotonicity(_) => "monotonicity",
            Experiment::Minimize(_) => "minimize",
            Experiment::Decay(_) => "decay",
            Experiment::Spectral(_) => "spectral",
            Experiment::Corollaries(_) => "corollaries",
            Experiment::FullPipeline(_) => "full-pipeline",
        }
    }
}

/// A configuration problem, with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub error: String,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self { error: "config".into(), key: key.into(), message: message.into() }
    }

    /// Machine-readable form.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain strings serialize")
    }
}

/// Parses a config, reporting the path of the first offending key.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        let named = msg.split('`').nth(1).filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"));
        let key = match (path.as_str(), named) {
            (".", Some(f)) => f.to_string(),
            (p, Some(f)) if msg.starts_with("unknown field") || msg.starts_with("missing field") => {
                if p.ends_with(f) {
                    p.to_string()
                } else {
                    format!("{p}.{f}")
                }
            }
            (".", None) => "$".to_string(),
            (p, _) => p.to_string(),
        };
        ConfigError::invalid(&key, msg)
    })?;
    Ok(cfg)
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
    }
}

fn theta_ok(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 0.25 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("scale ratio must lie in (0, 1/4), got {v}")))
    }
}

fn point_ok(key: &str, p: &Option<Vec<f64>>, n: usize) -> Result<(), ConfigError> {
    match p {
        Some(v) if v.len() != n => Err(ConfigError::invalid(key, format!("expected {n} coordinates, got {}", v.len()))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Checks every invariant that does not need numerical work; returns the
    /// ambient dimension.
    pub fn validate(&self, base: &Path) -> Result<usize, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let n = match &self.field {
            FieldSpec::Sampled { path } => {
                let p = base.join(path);
                if !p.is_file() {
                    return Err(ConfigError::invalid("field.path", format!("{} does not exist", p.display())));
                }
                self.field.build(base)?.dim()
            }
            f => {
                f.analytic()?;
                f.dim().expect("analytic")
            }
        };
        let lvl = |key: &str, l: &LevelSpec| -> Result<(), ConfigError> {
            let q = l.level();
            if q.radial < 2 || q.polar < 2 || q.azimuth < 4 {
                return Err(ConfigError::invalid(key, "quadrature sizes too small"));
            }
            Ok(())
        };
        match &self.experiment {
            Experiment::Frequency(p) => {
                point_ok("experiment.center", &p.center, n)?;
                if p.radii.is_empty() {
                    return Err(ConfigError::invalid("experiment.radii", "need at least one radius"));
                }
                for r in &p.radii {
                    positive("experiment.radii", *r)?;
                }
                for r in &p.doubling_ratios {
                    if !(*r > 0.0 && *r <= 1.0) {
                        return Err(ConfigError::invalid("experiment.doubling_ratios", "ratios must lie in (0, 1]"));
                    }
                }
                positive("experiment.tol", p.tol)?;
                lvl("experiment.level", &p.level)?;
            }
            Experiment::Monotonicity(p) => {
                point_ok("experiment.center", &p.center, n)?;
                positive("experiment.rho_min", p.rho_min)?;
                if !(p.rho_max > p.rho_min) {
                    return Err(ConfigError::invalid("experiment.rho_max", "must exceed rho_min"));
                }
                if p.count < 3 {
                    return Err(ConfigError::invalid("experiment.count", "need at least 3 radii"));
                }
                positive("experiment.slack", p.slack)?;
                lvl("experiment.level", &p.level)?;
            }
            Experiment::Minimize(p) => {
                if n != 2 {
                    return Err(ConfigError::invalid("field.n", "minimization runs in n = 2"));
                }
                if p.grids.is_empty() {
                    return Err(ConfigError::invalid("experiment.grids", "need at least one grid"));
                }
                for g in &p.grids {
                    if g[0] < 3 || g[1] < 8 || g[1] % 4 != 0 {
                        return Err(ConfigError::invalid(
                            "experiment.grids",
                            "need n_r >= 3 and n_theta >= 8 divisible by 4",
                        ));
                    }
                }
                positive("experiment.radius", p.radius)?;
                lvl("experiment.level", &p.level)?;
            }
            Experiment::Decay(p) => {
                point_ok("experiment.center", &p.center, n)?;
                if p.thetas.is_empty() {
                    return Err(ConfigError::invalid("experiment.thetas", "need at least one scale ratio"));
                }
                for t in &p.thetas {
                    theta_ok("experiment.thetas", *t)?;
                }
                if let Some(d) = p.delta0 {
                    positive("experiment.delta0", d)?;
                }
                positive("experiment.tilt_bound", p.tilt_bound)?;
                if p.guess.is_none() && self.field.leading_profile().is_none() {
                    return Err(ConfigError::invalid("experiment.guess", "required for this field kind"));
                }
                if let Some(e) = &p.expect {
                    for (k, v) in [("ratio_tol", e.ratio_tol), ("c_tol", e.c_tol), ("slope_tol", e.slope_tol), ("uniqueness_tol", e.uniqueness_tol)] {
                        if let Some(v) = v {
                            positive(&format!("experiment.expect.{k}"), v)?;
                        }
                    }
                }
                lvl("experiment.level", &p.level)?;
            }
            Experiment::Spectral(p) => {
                if n < 2 {
                    return Err(ConfigError::invalid("field.n", "need n >= 2"));
                }
                if p.profile.is_none() && self.field.leading_profile().is_none() {
                    return Err(ConfigError::invalid("experiment.profile", "required for this field kind"));
                }
                for s in &p.scales {
                    if !(*s > 0.0 && *s <= 1.0) {
                        return Err(ConfigError::invalid("experiment.scales", "scales must lie in (0, 1]"));
                    }
                }
                if !(p.theta > 0.0 && p.theta < 1.0) {
                    return Err(ConfigError::invalid("experiment.theta", "must lie in (0, 1)"));
                }
                if !(p.sigma > 0.0 && p.sigma < 1.0) {
                    return Err(ConfigError::invalid("experiment.sigma", "must lie in (0, 1)"));
                }
                positive("experiment.tol", p.tol)?;
                lvl("experiment.level", &p.level)?;
            }
            Experiment::Corollaries(p) => {
                if p.profile.is_none() && self.field.leading_profile().is_none() {
                    return Err(ConfigError::invalid("experiment.profile", "required for this field kind"));
                }
                for z in &p.points {
                    point_ok("experiment.points", &Some(z.clone()), n)?;
                }
                positive("experiment.gamma", p.gamma)?;
                positive("experiment.delta", p.delta)?;
                positive("experiment.max_spread", p.max_spread)?;
                if !(p.sigma > 0.0 && p.sigma < 1.0) {
                    return Err(ConfigError::invalid("experiment.sigma", "must lie in (0, 1)"));
                }
                if !p.perturbation_scales.is_empty() && self.field.perturbation_scaled(1.0).is_none() {
                    return Err(ConfigError::invalid("experiment.perturbation_scales", "needs a power-sum field"));
                }
                for t in &p.perturbation_scales {
                    positive("experiment.perturbation_scales", *t)?;
                }
                lvl("experiment.level", &p.level)?;
            }
            Experiment::FullPipeline(p) => {
                point_ok("experiment.center", &p.center, n)?;
                positive("experiment.half_width", p.half_width)?;
                theta_ok("experiment.theta", p.theta)?;
                if p.guess.is_none() && self.field.leading_profile().is_none() {
                    return Err(ConfigError::invalid("experiment.guess", "required for this field kind"));
                }
                lvl("experiment.level", &p.level)?;
            }
        }
        Ok(n)
    }
}

impl PipelineParams {
    pub fn detect_options(&self, n: usize, center: &[f64]) -> DetectOptions {
        let mut o = DetectOptions::new(n);
        o.center = center.to_vec();
        o.half_width = self.half_width;
        if let Some(c) = self.cells {
            o.cells = c;
        }
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> &'static Path {
        Path::new(".")
    }

    const MIN: &str = r#"{"schema_version": 1, "field": {"kind": "cylindrical-power", "n": 3, "c": [[1, 0]], "k": 3},
        "experiment": {"kind": "frequency"}}"#;

    #[test]
    fn defaults_fill_in_and_round_trip() {
        let cfg = parse_config(MIN).unwrap();
        assert_eq!(cfg.validate(base()).unwrap(), 3);
        let Experiment::Frequency(p) = &cfg.experiment else { panic!() };
        assert_eq!(p.radii, vec![0.25, 0.5, 1.0]);
        assert_eq!(p.level.level(), QuadLevel::MEDIUM);
        let back = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn explicit_and_named_levels() {
        let text = MIN.replace(r#""kind": "frequency""#, r#""kind": "frequency", "level": {"radial": 8, "polar": 4, "azimuth": 16}"#);
        let Experiment::Frequency(p) = parse_config(&text).unwrap().experiment else { panic!() };
        assert_eq!(p.level.level(), QuadLevel { radial: 8, polar: 4, azimuth: 16 });
        let text = MIN.replace(r#""kind": "frequency""#, r#""kind": "frequency", "level": "fine""#);
        let Experiment::Frequency(p) = parse_config(&text).unwrap().experiment else { panic!() };
        assert_eq!(p.level.level(), QuadLevel::FINE);
    }

    #[test]
    fn error_keys_point_at_the_offender() {
        let e = parse_config(&MIN.replace(r#""k": 3"#, r#""k": 3, "kk": 1"#)).unwrap_err();
        assert_eq!(e.key, "field.kk");
        // tagged variants are buffered, so type errors stop at the variant
        let e = parse_config(&MIN.replace(r#""c": [[1, 0]]"#, r#""c": [[1, "x"]]"#)).unwrap_err();
        assert_eq!(e.key, "field");
        let e = parse_config(&MIN.replace(r#""schema_version": 1"#, r#""schema_version": "one""#)).unwrap_err();
        assert_eq!(e.key, "schema_version");
        let e = parse_config(&MIN.replace(r#""schema_version": 1, "#, "")).unwrap_err();
        assert_eq!(e.key, "schema_version");
        let e = parse_config("[]").unwrap_err();
        assert_eq!(e.error, "config");
    }

    #[test]
    fn validation_rejects_bad_values() {
        let check = |text: String, key: &str| {
            let cfg = parse_config(&text).unwrap();
            assert_eq!(cfg.validate(base()).unwrap_err().key, key, "{text}");
        };
        check(MIN.replace(r#""schema_version": 1"#, r#""schema_version": 2"#), "schema_version");
        check(MIN.replace(r#""kind": "frequency""#, r#""kind": "frequency", "tol": 0"#), "experiment.tol");
        check(MIN.replace(r#""kind": "frequency""#, r#""kind": "frequency", "center": [0, 0]"#), "experiment.center");
        check(MIN.replace(r#""kind": "frequency""#, r#""kind": "decay", "thetas": [0.0]"#), "experiment.thetas");
    }
}

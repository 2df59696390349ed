//! Numerical laboratory for two-valued harmonic and Dirichlet-minimizing
//! functions: unordered-pair fields, frequency functions, cylindrical
//! profiles, branched covers, and the excess-decay iteration.

pub mod fields;
pub mod pairspace;
pub mod quadrature;
pub mod frequency;
pub mod linalg;
pub mod minimizer;
pub mod profiles;
pub mod spectral;
pub mod decay;
pub mod experiment;

//! Numerical verification of the asymptotic large sieve.

pub mod arith;
pub mod bilinear;
pub mod characters;
pub mod coeffs;
pub mod delta;
pub mod numerics;
pub mod sieve_checks;
pub mod weights;

pub use arith::{ArithError, Sieve};
pub use bilinear::{
    BilinearConfig, BilinearError, ExperimentTable, ExperimentTemplate, PiecesReport, Regime, SpecialShapeConfig,
};
pub use characters::{CharacterError, CharacterGroup, DirichletCharacter};
pub use coeffs::{CoeffError, CoefficientSequence, LCoefficients, MollifierCoefficients, MollifierWeight};
pub use delta::{DeltaEngine, DeltaError, DeltaParams, DeltaReport, PsiArgument};
pub use numerics::Tolerance;
pub use sieve_checks::{CheckKind, SieveCheckResult, SieveError, SuiteConfig, SuiteSummary, VectorSource};
pub use weights::{LocalizedTestFunction, RampTestFunction, SmoothCutoff, SpecialTestFunction, TestFunction};

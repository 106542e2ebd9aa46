//! Products of random SL(2,ℝ) matrices close to the identity.
//!
//! The transfer matrices are of the form `exp(λP + λ²Q(λ))` with `(P, Q)` drawn
//! from a finite-support [`Ensemble`]. The crate provides
//!
//! - exact sl(2)/SL(2) arithmetic and ensemble moments ([`sl2`]),
//! - the projective dynamics on the half circle `[0, π)` ([`circle`]),
//! - Monte Carlo estimators for the Lyapunov exponent, its CLT variance, the
//!   invariant measure and Birkhoff/correlation sums ([`mc`]),
//! - perturbative predictions for elliptic, hyperbolic and centered
//!   anomalies, including a Fourier–Galerkin solver for the stationary
//!   density of the centered diffusion ([`perturbation`]),
//! - the harmonic chain, Anderson band edge and Kronig–Penney reductions
//!   ([`models`]),
//! - a configuration-driven experiment runner ([`cli`]).

pub mod circle;
pub mod cli;
pub mod error;
pub mod fourier;
pub mod mc;
pub mod models;
pub mod perturbation;
pub mod rng;
pub mod sl2;

pub use circle::{Angle, BasisChange, BasisLabel};
pub use error::{Error, Result};
pub use fourier::FourierDensity;
pub use mc::{ChainConfig, Estimate, Histogram};
pub use perturbation::{AnomalyClass, AnomalyKind, PredictionReport};
pub use sl2::{Atom, Ensemble, MomentTable, QPolynomial, TracelessGenerator, Unimodular2x2};

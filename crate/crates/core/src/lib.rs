//! Solver for static, spherically symmetric mixed boson-fermion stars in
//! scalar-tensor gravity with a massive dilaton.
//!
//! The reduced dimensionless field equations form a nonlinear two-parameter
//! eigenvalue problem with an unknown internal boundary (the fermionic surface
//! radius `R_s`) and the boson frequency `Omega`, closed by an interface value
//! `phi_s` of the dilaton. After the Landau rescaling `x = r / R_s`, the
//! problem splits into a 7-component interior system on `[0, 1]` and a
//! 6-component exterior system on `[1, X_inf]`, matched at `x = 1`.
//!
//! The main driver ([`canm`]) is a damped Newton continuation: each iteration
//! solves four linear boundary value problems per domain with a shared
//! factorization (s/u/v/w decomposition), a 3x3 matching system for the
//! spectral increments, and an Ermakov-Kalitkin step-size choice. Linear
//! BVPs are discretized by fourth-order cubic Hermite spline collocation
//! ([`collocation`]). An independent adaptive-RK shooting solver ([`oracle`])
//! cross-validates the collocation path, and [`observables`] integrates
//! masses and binding energy over converged profiles.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); concrete f64 aliases are exported at the crate root.

pub mod canm;
pub mod collocation;
mod dense;
pub mod error;
pub(crate) mod layout;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod scalar;
pub mod solution;
pub mod sweep;

pub use error::Error;
pub use scalar::Real;

/// Default scalar type used by the CLI and the acceptance suite.
pub type Scalar = f64;

pub type ModelParams64 = model::ModelParams<f64>;
pub type SpectralTriple64 = model::SpectralTriple<f64>;
pub type CanmConfig64 = canm::CanmConfig<f64>;
pub type Solution64 = solution::Solution<f64>;
pub type Observables64 = observables::Observables<f64>;

pub type ModelParams32 = model::ModelParams<f32>;
pub type CanmConfig32 = canm::CanmConfig<f32>;

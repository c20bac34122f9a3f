//! Converged output record: profiles, spectral triple, observables and
//! convergence diagnostics.

use serde::Serialize;

use crate::collocation::HermiteGridFunction;
use crate::model::{ModelParams, SpectralTriple};
use crate::observables::Observables;
use crate::scalar::Real;

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord<T> {
    pub k: usize,
    /// Residual at tau = 0 (current defect).
    pub delta0: T,
    /// Residual at the full step tau = 1.
    pub delta1: T,
    /// Accepted Ermakov-Kalitkin step.
    pub tau: T,
    /// Residual after the accepted update, delta(tau).
    pub delta_tau: T,
    pub frozen: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_delta: T,
    pub iteration_log: Vec<IterationRecord<T>>,
    /// Iteration at which the frozen-Jacobian regime engaged, if it did.
    pub froze_at: Option<usize>,
    pub factorizations: usize,
    pub warnings: Vec<String>,
}

impl<T: Real> ConvergenceReport<T> {
    pub fn tau_history(&self) -> Vec<T> {
        self.iteration_log.iter().map(|r| r.tau).collect()
    }

    pub fn delta_history(&self) -> Vec<T> {
        self.iteration_log.iter().map(|r| r.delta_tau).collect()
    }
}

/// A converged (or attempted) solve: profiles on both domains plus the
/// spectral unknowns, post-processed observables and the iteration report.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub params: ModelParams<T>,
    pub spectral: SpectralTriple<T>,
    pub inner: HermiteGridFunction<T>,
    pub outer: HermiteGridFunction<T>,
    pub x_inf: T,
    pub observables: Observables<T>,
    pub report: ConvergenceReport<T>,
}

impl<T: Real> Solution<T> {
    /// Component names of the interior profile table.
    pub fn inner_names(&self) -> &'static [&'static str] {
        if self.spectral.omega.is_some() {
            &["lambda", "nu", "phi", "xi", "sigma", "eta", "mu"]
        } else {
            &["lambda", "nu", "phi", "xi", "mu"]
        }
    }

    /// Component names of the exterior profile table.
    pub fn outer_names(&self) -> &'static [&'static str] {
        if self.spectral.omega.is_some() {
            &["lambda", "nu", "phi", "xi", "sigma", "eta"]
        } else {
            &["lambda", "nu", "phi", "xi"]
        }
    }

    pub fn is_pure_fermion(&self) -> bool {
        self.spectral.omega.is_none()
    }
}

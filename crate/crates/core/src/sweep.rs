//! Warm-started parameter sweeps for the configuration diagrams.

use serde::Serialize;

use crate::canm::{pure_fermion_solve, solve, CanmConfig};
use crate::model::{ModelParams, SpectralTriple};
use crate::observables::Observables;
use crate::scalar::Real;
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    MuC,
    SigmaC,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::MuC => "mu_c",
            SweepParam::SigmaC => "sigma_c",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSpec<T> {
    pub param: SweepParam,
    pub start: T,
    pub stop: T,
    pub count: usize,
    pub warm_start: bool,
    /// Maximum step halvings used to bridge a non-converged point.
    pub max_halvings: usize,
}

impl<T: Real> SweepSpec<T> {
    pub fn new(param: SweepParam, start: T, stop: T, count: usize, warm_start: bool) -> Self {
        Self { param, start, stop, count, warm_start, max_halvings: 3 }
    }

    pub fn values(&self) -> Vec<T> {
        if self.count <= 1 {
            return vec![self.start];
        }
        let n = T::from_usize(self.count - 1).unwrap();
        (0..self.count)
            .map(|k| self.start + (self.stop - self.start) * T::from_usize(k).unwrap() / n)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint<T> {
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
    pub halvings: usize,
    pub residual: Option<T>,
    pub spectral: Option<SpectralTriple<T>>,
    pub observables: Option<Observables<T>>,
    /// Set when the spectral data jumps against the local trend (possible
    /// branch change without an intervening failure).
    pub jump: bool,
}

#[derive(Debug, Clone)]
pub struct SweepTable<T> {
    pub param: SweepParam,
    pub points: Vec<SweepPoint<T>>,
}

fn with_value<T: Real>(base: &ModelParams<T>, param: SweepParam, v: T) -> ModelParams<T> {
    let mut p = *base;
    match param {
        SweepParam::MuC => p.mu_c = v,
        SweepParam::SigmaC => p.sigma_c = v,
    }
    p
}

fn solve_point<T: Real>(
    params: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    warm: Option<&Solution<T>>,
) -> crate::error::Result<Solution<T>> {
    // Warm starts cannot cross the mixed/pure-fermion boundary.
    let warm = warm.filter(|s| s.is_pure_fermion() == (params.sigma_c == T::zero()));
    if params.sigma_c == T::zero() {
        pure_fermion_solve(params, cfg, warm)
    } else {
        solve(params, cfg, warm)
    }
}

/// Run the sweep; per-point failures are recorded, never fatal.
pub fn run_sweep<T: Real>(
    base: &ModelParams<T>,
    cfg: &CanmConfig<T>,
    spec: &SweepSpec<T>,
) -> SweepTable<T> {
    let mut points = Vec::with_capacity(spec.count);
    let mut prev: Option<(T, Solution<T>)> = None;
    for v in spec.values() {
        let params = with_value(base, spec.param, v);
        let warm = if spec.warm_start { prev.as_ref().map(|(_, s)| s) } else { None };
        let mut halvings = 0usize;
        let mut outcome = solve_point(&params, cfg, warm);

        // Bridge a failed warm-started point through intermediate values.
        if outcome.is_err() && spec.warm_start && prev.is_some() {
            let v_from = prev.as_ref().unwrap().0;
            'bridge: while halvings < spec.max_halvings {
                halvings += 1;
                let pieces = 1usize << halvings;
                let mut carrier = prev.as_ref().map(|(_, s)| s.clone());
                let mut ok = true;
                for k in 1..=pieces {
                    let frac = T::from_usize(k).unwrap() / T::from_usize(pieces).unwrap();
                    let vm = v_from + (v - v_from) * frac;
                    let pm = with_value(base, spec.param, vm);
                    match solve_point(&pm, cfg, carrier.as_ref()) {
                        Ok(s) => carrier = Some(s),
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    outcome = Ok(carrier.unwrap());
                    break 'bridge;
                }
            }
        }

        match outcome {
            Ok(sol) => {
                points.push(SweepPoint {
                    value: v,
                    converged: true,
                    iterations: sol.report.iterations,
                    halvings,
                    residual: Some(sol.report.final_delta),
                    spectral: Some(sol.spectral),
                    observables: Some(sol.observables),
                    jump: false,
                });
                prev = Some((v, sol));
            }
            Err(e) => {
                let residual = match &e {
                    crate::error::Error::NonConvergence { last_residual, .. } => {
                        T::from_f64(*last_residual)
                    }
                    _ => None,
                };
                points.push(SweepPoint {
                    value: v,
                    converged: false,
                    iterations: 0,
                    halvings,
                    residual,
                    spectral: None,
                    observables: None,
                    jump: false,
                });
            }
        }
    }
    flag_jumps(&mut points);
    SweepTable { param: spec.param, points }
}

/// Mark converged points whose radius step departs from the local trend by
/// more than a factor of five (with an absolute floor).
fn flag_jumps<T: Real>(points: &mut [SweepPoint<T>]) {
    let radii: Vec<Option<T>> = points
        .iter()
        .map(|p| p.spectral.as_ref().map(|s| s.r_s))
        .collect();
    for k in 2..points.len() {
        if let (Some(a), Some(b), Some(c)) = (radii[k - 2], radii[k - 1], radii[k]) {
            if points[k - 1].converged && points[k].converged && points[k - 2].converged {
                let prev_step = (b - a).abs();
                let step = (c - b).abs();
                if step > T::c(5.0) * prev_step + T::c(1e-3) {
                    points[k].jump = true;
                }
            }
        }
    }
}

//! File emission: profile tables, sweep tables (canonical 17-significant-
//! digit decimal formatting, bit-exact on re-read) and JSON summaries.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use dilstar::solution::Solution;
use dilstar::sweep::SweepTable;

/// Canonical float formatting: 17 significant digits, scientific.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Interior profile table (x, r, lambda, nu, phi, xi, sigma, eta, mu).
/// Pure-fermion solutions emit zero sigma/eta columns so the schema is
/// uniform.
pub fn write_profiles_inner(path: &Path, sol: &Solution<f64>) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "x,r,lambda,nu,phi,xi,sigma,eta,mu")?;
    let r_s = sol.spectral.r_s;
    let pure = sol.is_pure_fermion();
    let g = &sol.inner;
    for j in 0..g.n_nodes() {
        let x = g.mesh().nodes()[j];
        let row: Vec<f64> = if pure {
            vec![
                x,
                r_s * x,
                g.value(j, 0),
                g.value(j, 1),
                g.value(j, 2),
                g.value(j, 3),
                0.0,
                0.0,
                g.value(j, 4),
            ]
        } else {
            let mut row = vec![x, r_s * x];
            row.extend((0..7).map(|c| g.value(j, c)));
            row
        };
        writeln!(f, "{}", row.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(","))?;
    }
    Ok(())
}

/// Exterior profile table (x, r, lambda, nu, phi, xi, sigma, eta).
pub fn write_profiles_outer(path: &Path, sol: &Solution<f64>) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "x,r,lambda,nu,phi,xi,sigma,eta")?;
    let r_s = sol.spectral.r_s;
    let pure = sol.is_pure_fermion();
    let g = &sol.outer;
    for j in 0..g.n_nodes() {
        let x = g.mesh().nodes()[j];
        let row: Vec<f64> = if pure {
            vec![
                x,
                r_s * x,
                g.value(j, 0),
                g.value(j, 1),
                g.value(j, 2),
                g.value(j, 3),
                0.0,
                0.0,
            ]
        } else {
            let mut row = vec![x, r_s * x];
            row.extend((0..6).map(|c| g.value(j, c)));
            row
        };
        writeln!(f, "{}", row.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(","))?;
    }
    Ok(())
}

#[derive(Serialize)]
pub struct OracleSummary {
    #[serde(rename = "R_s")]
    pub r_s: f64,
    #[serde(rename = "Omega")]
    pub omega: Option<f64>,
    pub phi_s: f64,
    #[serde(rename = "dR_s_rel")]
    pub d_r_s_rel: f64,
    #[serde(rename = "dOmega")]
    pub d_omega: Option<f64>,
    pub mismatch_norm: f64,
}

#[derive(Serialize)]
pub struct Summary {
    #[serde(rename = "R_s")]
    pub r_s: f64,
    #[serde(rename = "Omega")]
    pub omega: Option<f64>,
    pub phi_s: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "M_RB")]
    pub m_rb: f64,
    #[serde(rename = "M_RF")]
    pub m_rf: f64,
    #[serde(rename = "E_b")]
    pub e_b: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub x_inf: f64,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

impl Summary {
    pub fn from_solution(sol: &Solution<f64>) -> Self {
        Self {
            r_s: sol.spectral.r_s,
            omega: sol.spectral.omega,
            phi_s: sol.spectral.phi_s,
            m: sol.observables.m_total,
            m_rb: sol.observables.m_rb,
            m_rf: sol.observables.m_rf,
            e_b: sol.observables.e_b,
            iterations: sol.report.iterations,
            residual: sol.report.final_delta,
            converged: sol.report.converged,
            x_inf: sol.x_inf,
            warnings: sol.report.warnings.clone(),
            oracle: None,
        }
    }
}

pub fn write_summary(path: &Path, summary: &Summary) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(summary).expect("summary serialization");
    f.write_all(text.as_bytes())?;
    writeln!(f)
}

/// Sweep table: swept value, spectral data, observables, convergence flag.
pub fn write_sweep(path: &Path, table: &SweepTable<f64>) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "{},R_s,Omega,phi_s,M,M_RB,M_RF,E_b,converged,iterations",
        table.param.name()
    )?;
    for p in &table.points {
        let spectral = p.spectral.as_ref();
        let obs = p.observables.as_ref();
        let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt(p.value),
            opt(spectral.map(|s| s.r_s)),
            opt(spectral.and_then(|s| s.omega)),
            opt(spectral.map(|s| s.phi_s)),
            opt(obs.map(|o| o.m_total)),
            opt(obs.map(|o| o.m_rb)),
            opt(obs.map(|o| o.m_rf)),
            opt(obs.map(|o| o.e_b)),
            p.converged,
            p.iterations
        )?;
    }
    Ok(())
}

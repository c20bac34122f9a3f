//! Command-line driver: single solves and warm-started parameter sweeps of
//! the boson-fermion star solver, with CSV/JSON/SVG emission and optional
//! verification against the shooting path.

mod config;
mod emit;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Emit, RawConfig, RunConfig};
use dilstar::canm::{pure_fermion_solve, solve};
use dilstar::error::Error;
use dilstar::oracle::{shoot_solve, OracleConfig, ShootTrial};
use dilstar::solution::Solution;
use dilstar::sweep::{run_sweep, SweepSpec};

#[derive(Parser)]
#[command(name = "dilstar", version, about = "Mixed boson-fermion star solver in massive-dilaton scalar-tensor gravity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single configuration and emit profiles and a summary.
    Solve(CommonArgs),
    /// Sweep mu_c or sigma_c with warm starts and emit the configuration
    /// diagrams.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value configuration file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dilaton-to-boson mass ratio gamma = m_D/m_B [default 0.1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Boson self-coupling Lambda [default 0].
    #[arg(long)]
    lambda_self: Option<f64>,
    /// Fermion scale parameter b [default 1].
    #[arg(long)]
    b: Option<f64>,
    /// Central boson amplitude sigma_c (0 selects the pure-fermion solver).
    #[arg(long)]
    sigma_c: Option<f64>,
    /// Central Fermi momentum mu_c (> 0).
    #[arg(long)]
    mu_c: Option<f64>,
    /// Outer truncation in scaled units x = r/R_s [default 40/R_s,0].
    #[arg(long)]
    x_inf: Option<f64>,
    /// Interior mesh cells [default 200].
    #[arg(long)]
    cells_inner: Option<usize>,
    /// Exterior mesh cells [default 400].
    #[arg(long)]
    cells_outer: Option<usize>,
    /// Termination threshold, accepted range [1e-12, 1e-8] [default 1e-10].
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration budget [default 50].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Far-field closure at x_inf: dirichlet | robin [default robin].
    #[arg(long)]
    farfield: Option<String>,
    /// Swept parameter: mu_c | sigma_c (sweep subcommand).
    #[arg(long)]
    sweep_param: Option<String>,
    /// Sweep range lo:hi (sweep subcommand).
    #[arg(long)]
    sweep_range: Option<String>,
    /// Number of sweep points [default 20].
    #[arg(long)]
    sweep_count: Option<usize>,
    /// Warm-start sweep points from the previous converged point [default true].
    #[arg(long)]
    warm_start: Option<bool>,
    /// Cross-check the solution against the shooting integrator and append
    /// the deltas to the summary.
    #[arg(long, default_value_t = false)]
    verify: bool,
    /// Output directory [default `out`].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated outputs: csv,json,svg [default csv,json].
    #[arg(long)]
    emit: Option<String>,
}

fn collect(args: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut raw = RawConfig::default();
    if let Some(path) = &args.config {
        raw.load_file(path)?;
    }
    macro_rules! flag {
        ($key:literal, $val:expr) => {
            if let Some(v) = &$val {
                raw.set_flag($key, v.to_string())?;
            }
        };
    }
    flag!("gamma", args.gamma);
    flag!("lambda-self", args.lambda_self);
    flag!("b", args.b);
    flag!("sigma-c", args.sigma_c);
    flag!("mu-c", args.mu_c);
    flag!("x-inf", args.x_inf);
    flag!("cells-inner", args.cells_inner);
    flag!("cells-outer", args.cells_outer);
    flag!("eps", args.eps);
    flag!("max-iter", args.max_iter);
    flag!("farfield", args.farfield);
    flag!("sweep-param", args.sweep_param);
    flag!("sweep-range", args.sweep_range);
    flag!("sweep-count", args.sweep_count);
    flag!("warm-start", args.warm_start);
    if args.verify {
        raw.set_flag("verify", "true".into())?;
    }
    flag!("out-dir", args.out_dir.as_ref().map(|p| p.display().to_string()));
    flag!("emit", args.emit);
    raw.resolve()
}

fn solve_config(cfg: &RunConfig) -> Result<Solution<f64>, Error> {
    if cfg.params.sigma_c == 0.0 {
        pure_fermion_solve(&cfg.params, &cfg.solver, None)
    } else {
        solve(&cfg.params, &cfg.solver, None)
    }
}

fn emit_single(cfg: &RunConfig, sol: &Solution<f64>) -> std::io::Result<()> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)?;
    if cfg.emit.contains(&Emit::Csv) {
        emit::write_profiles_inner(&dir.join("profiles_inner.csv"), sol)?;
        emit::write_profiles_outer(&dir.join("profiles_outer.csv"), sol)?;
    }
    if cfg.emit.contains(&Emit::Json) {
        let mut summary = emit::Summary::from_solution(sol);
        if cfg.verify {
            summary.oracle = verify_against_oracle(cfg, sol);
        }
        emit::write_summary(&dir.join("summary.json"), &summary)?;
    }
    if cfg.emit.contains(&Emit::Svg) {
        emit_profile_plots(dir, sol)?;
    }
    Ok(())
}

fn profile_series(
    sol: &Solution<f64>,
    comp_inner: Option<usize>,
    comp_outer: Option<usize>,
) -> Vec<(f64, f64)> {
    let r_s = sol.spectral.r_s;
    let mut pts = Vec::new();
    if let Some(c) = comp_inner {
        for j in 0..sol.inner.n_nodes() {
            pts.push((r_s * sol.inner.mesh().nodes()[j], sol.inner.value(j, c)));
        }
    }
    if let Some(c) = comp_outer {
        for j in 1..sol.outer.n_nodes() {
            pts.push((r_s * sol.outer.mesh().nodes()[j], sol.outer.value(j, c)));
        }
    }
    pts
}

fn emit_profile_plots(dir: &Path, sol: &Solution<f64>) -> std::io::Result<()> {
    let pure = sol.is_pure_fermion();
    let mu_inner = if pure { 4 } else { 6 };
    let sigma = if pure { Vec::new() } else { profile_series(sol, Some(4), Some(4)) };
    let phi = profile_series(sol, Some(2), Some(2));
    let nu = profile_series(sol, Some(1), Some(1));
    let mu = profile_series(sol, Some(mu_inner), None);
    svg::line_plot(
        &dir.join("plot_sigma.svg"),
        "Boson amplitude",
        "r",
        "sigma",
        &[svg::Series { label: "sigma", points: &sigma, color: "#1f77b4" }],
    )?;
    svg::line_plot(
        &dir.join("plot_phi.svg"),
        "Dilaton",
        "r",
        "phi",
        &[svg::Series { label: "phi", points: &phi, color: "#d62728" }],
    )?;
    svg::line_plot(
        &dir.join("plot_nu.svg"),
        "Metric potential",
        "r",
        "nu",
        &[svg::Series { label: "nu", points: &nu, color: "#2ca02c" }],
    )?;
    svg::line_plot(
        &dir.join("plot_mu.svg"),
        "Fermi momentum",
        "r",
        "mu",
        &[svg::Series { label: "mu", points: &mu, color: "#9467bd" }],
    )
}

fn verify_against_oracle(cfg: &RunConfig, sol: &Solution<f64>) -> Option<emit::OracleSummary> {
    let ocfg = OracleConfig::new(sol.x_inf, cfg.solver.far_field);
    match shoot_solve(&cfg.params, &ShootTrial::from_solution(sol), &ocfg) {
        Ok((trial, shot)) => {
            let mismatch_norm = shot.mismatch.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Some(emit::OracleSummary {
                r_s: trial.triple.r_s,
                omega: trial.triple.omega,
                phi_s: trial.triple.phi_s,
                d_r_s_rel: ((trial.triple.r_s - sol.spectral.r_s) / sol.spectral.r_s).abs(),
                d_omega: trial
                    .triple
                    .omega
                    .zip(sol.spectral.omega)
                    .map(|(a, b)| (a - b).abs()),
                mismatch_norm,
            })
        }
        Err(e) => {
            eprintln!("verify: oracle failed: {e}");
            None
        }
    }
}

fn run_single(cfg: &RunConfig) -> ExitCode {
    match solve_config(cfg) {
        Ok(sol) => {
            if let Err(e) = emit_single(cfg, &sol) {
                eprintln!("i/o error: {e}");
                return ExitCode::from(1);
            }
            println!(
                "converged in {} iterations: R_s = {:.12}, Omega = {}, phi_s = {:.12}",
                sol.report.iterations,
                sol.spectral.r_s,
                sol.spectral
                    .omega
                    .map(|v| format!("{v:.12}"))
                    .unwrap_or_else(|| "absent (pure fermion)".into()),
                sol.spectral.phi_s
            );
            println!(
                "M = {:.12}, M_RB = {:.12}, M_RF = {:.12}, E_b = {:.12}, residual = {:e}",
                sol.observables.m_total,
                sol.observables.m_rb,
                sol.observables.m_rf,
                sol.observables.e_b,
                sol.report.final_delta
            );
            ExitCode::SUCCESS
        }
        Err(e @ Error::NonConvergence { .. }) => {
            eprintln!("solver did not converge: {e}");
            // Partial diagnostics still go out.
            if let Error::NonConvergence { iterations, last_residual, history } = &e {
                let dir = &cfg.out_dir;
                if std::fs::create_dir_all(dir).is_ok() {
                    let diag = serde_json::json!({
                        "converged": false,
                        "iterations": iterations,
                        "residual": last_residual,
                        "residual_history": history,
                    });
                    let _ = std::fs::write(
                        dir.join("summary.json"),
                        serde_json::to_string_pretty(&diag).unwrap() + "\n",
                    );
                }
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("solver error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_sweep_cmd(cfg: &RunConfig) -> ExitCode {
    let Some(param) = cfg.sweep_param else {
        eprintln!("configuration error: sweep requires sweep-param");
        return ExitCode::from(3);
    };
    let Some((lo, hi)) = cfg.sweep_range else {
        eprintln!("configuration error: sweep requires sweep-range lo:hi");
        return ExitCode::from(3);
    };
    let spec = SweepSpec::new(param, lo, hi, cfg.sweep_count, cfg.warm_start);
    let table = run_sweep(&cfg.params, &cfg.solver, &spec);
    let converged = table.points.iter().filter(|p| p.converged).count();
    println!("sweep finished: {converged}/{} points converged", table.points.len());
    for p in table.points.iter().filter(|p| !p.converged) {
        println!("  not converged: {} = {:.6}", table.param.name(), p.value);
    }

    let dir = &cfg.out_dir;
    if let Err(e) = std::fs::create_dir_all(dir) {
        eprintln!("i/o error: {e}");
        return ExitCode::from(1);
    }
    if cfg.emit.contains(&Emit::Csv) {
        if let Err(e) = emit::write_sweep(&dir.join("sweep.csv"), &table) {
            eprintln!("i/o error: {e}");
            return ExitCode::from(1);
        }
    }
    if cfg.emit.contains(&Emit::Svg) {
        let m_pts: Vec<(f64, f64)> = table
            .points
            .iter()
            .filter_map(|p| p.observables.as_ref().map(|o| (p.value, o.m_total)))
            .collect();
        let mrf_pts: Vec<(f64, f64)> = table
            .points
            .iter()
            .filter_map(|p| p.observables.as_ref().map(|o| (p.value, o.m_rf)))
            .collect();
        let bind_pts: Vec<(f64, f64)> = table
            .points
            .iter()
            .filter_map(|p| p.observables.as_ref().map(|o| (o.m_rf, o.e_b)))
            .collect();
        let name = table.param.name();
        let res = svg::line_plot(
            &dir.join("sweep_mass.svg"),
            "Star mass and fermion rest mass",
            name,
            "mass",
            &[
                svg::Series { label: "M", points: &m_pts, color: "#1f77b4" },
                svg::Series { label: "M_RF", points: &mrf_pts, color: "#d62728" },
            ],
        )
        .and_then(|_| {
            svg::line_plot(
                &dir.join("sweep_binding.svg"),
                "Binding energy diagram",
                "M_RF",
                "E_b",
                &[svg::Series { label: "E_b", points: &bind_pts, color: "#2ca02c" }],
            )
        });
        if let Err(e) = res {
            eprintln!("i/o error: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, is_sweep) = match &cli.command {
        Command::Solve(a) => (a, false),
        Command::Sweep(a) => (a, true),
    };
    let cfg = match collect(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(3);
        }
    };
    if is_sweep {
        run_sweep_cmd(&cfg)
    } else {
        run_single(&cfg)
    }
}

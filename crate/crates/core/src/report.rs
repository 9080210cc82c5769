//! Experiment orchestration and file emission.
//!
//! All artifacts are plain CSV and JSON with floats printed to 17 significant
//! digits, so identical configurations produce byte-identical files. Every
//! emitted surface carries its own certificate in `meta.json`: quadratic-root
//! residuals, complementarity residuals and boundary diagnostics. A run exits
//! cleanly only when those gates pass.

use crate::boundaries::{self, FreeBoundaries};
use crate::dp::{self, DpConfig};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, Regime};
use crate::sim::{self, SimConfig, Strategy};
use crate::solver::{self, ComplementarityReport, SolverGrid, SolverOptions, ValueSurface};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Which experiment a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Solve,
    Boundaries,
    Simulate,
    Verify,
    Figures,
}

/// Flat run configuration: the JSON config-file schema and the CLI flag set
/// share this shape. Unset fields take defaults at resolution time.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub r: Option<f64>,
    pub cbar: Option<f64>,
    pub b: Option<f64>,
    pub nx: Option<usize>,
    pub nc: Option<usize>,
    pub xmax: Option<f64>,
    /// Experiment-level tolerance: the DP value-iteration tolerance for
    /// `verify`; unused elsewhere.
    pub tol: Option<f64>,
    pub rho: Option<f64>,
    pub tol_fix: Option<f64>,
    pub tol_obstacle: Option<f64>,
    /// Free-boundary gap threshold as a fraction of `cbar / r`.
    pub eps_fb: Option<f64>,
    pub x0: Option<f64>,
    pub c0: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub strategy: Option<String>,
    pub antithetic: Option<bool>,
    pub bridge: Option<bool>,
    pub trace: Option<usize>,
    pub tail_epsilon: Option<f64>,
    pub dp_xmax: Option<f64>,
    pub dp_dx: Option<f64>,
    pub dp_dt: Option<f64>,
    pub dp_mlevels: Option<usize>,
    pub dp_actions: Option<usize>,
    /// Re-solve at halved resolutions and report the sup-norm change.
    pub richardson: Option<bool>,
    pub out: Option<PathBuf>,
}

impl RawConfig {
    /// Field-wise merge; `self` (flags) wins over `fallback` (config file).
    pub fn or(self, fallback: RawConfig) -> RawConfig {
        macro_rules! pick {
            ($($f:ident),*) => {
                RawConfig { $($f: self.$f.or(fallback.$f)),* }
            };
        }
        pick!(
            mu, sigma, r, cbar, b, nx, nc, xmax, tol, rho, tol_fix, tol_obstacle, eps_fb, x0,
            c0, dt, horizon, paths, seed, strategy, antithetic, bridge, trace, tail_epsilon,
            dp_xmax, dp_dx, dp_dt, dp_mlevels, dp_actions, richardson, out
        )
    }

    /// Parses a config file: JSON when it starts with `{`, otherwise flat
    /// `key=value` lines (`#` comments allowed).
    pub fn from_file(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad JSON config: {e}")));
        }
        let mut map = serde_json::Map::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let json = if let Ok(u) = value.parse::<u64>() {
                serde_json::json!(u)
            } else if let Ok(f) = value.parse::<f64>() {
                serde_json::json!(f)
            } else if let Ok(b) = value.parse::<bool>() {
                serde_json::json!(b)
            } else {
                serde_json::json!(value)
            };
            map.insert(key.to_string(), json);
        }
        serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(format!("bad config key: {e}")))
    }
}

/// Fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: ModelParams,
    pub grid: Option<SolverGrid>,
    pub solver_options: SolverOptions,
    pub eps_fb_factor: f64,
    pub sim: SimConfig,
    pub strategy: Strategy,
    pub dp: DpConfig,
    pub dp_tol: f64,
    pub richardson: bool,
    pub out: PathBuf,
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    if let Some(rate) = s.strip_prefix("constant:") {
        let a: f64 = rate
            .parse()
            .map_err(|_| Error::Config(format!("bad constant rate {rate:?}")))?;
        return Ok(Strategy::ConstantRate(a));
    }
    match s {
        "optimal" => Ok(Strategy::Optimal),
        "boundary" => Ok(Strategy::BoundaryCase),
        "ratchet_greedy" => Ok(Strategy::RatchetGreedy),
        "unconstrained_barrier" => Ok(Strategy::UnconstrainedBarrier),
        other => Err(Error::Config(format!(
            "unknown strategy {other:?}; expected optimal | boundary | constant:<a> | \
             ratchet_greedy | unconstrained_barrier"
        ))),
    }
}

impl RunConfig {
    pub fn resolve(experiment: Experiment, raw: RawConfig) -> Result<RunConfig> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Config(format!("missing required parameter --{name}")))
        };
        // the figures experiment reproduces the reference study and defaults
        // to its parameter set
        let (mu, sigma, r, cbar, b);
        if experiment == Experiment::Figures {
            mu = raw.mu.unwrap_or(0.3);
            sigma = raw.sigma.unwrap_or(0.3);
            r = raw.r.unwrap_or(0.05);
            cbar = raw.cbar.unwrap_or(0.3);
            b = raw.b.unwrap_or(0.6);
        } else {
            mu = need("mu", raw.mu)?;
            sigma = need("sigma", raw.sigma)?;
            r = need("r", raw.r)?;
            cbar = need("cbar", raw.cbar)?;
            b = need("b", raw.b)?;
        }
        let params = ModelParams::new(mu, sigma, r, cbar, b)
            .map_err(|e| Error::Config(e.to_string()))?;
        let grid = match (raw.xmax, raw.nx, raw.nc) {
            (None, None, None) => None,
            (xmax, nx, nc) => Some(SolverGrid {
                x_max: xmax.unwrap_or(0.0), // 0 means "use the default for the model"
                nx: nx.unwrap_or(4000),
                nc: nc.unwrap_or(300),
            }),
        };
        let solver_options = SolverOptions {
            rho: raw.rho,
            tol_fix: raw.tol_fix,
            tol_obstacle: raw.tol_obstacle,
            max_iter: None,
        };
        let sim = SimConfig {
            x0: raw.x0.unwrap_or(1.0),
            c0: raw.c0.unwrap_or(cbar),
            dt: raw.dt.unwrap_or(1e-3),
            horizon: raw.horizon.unwrap_or(0.0),
            n_paths: raw.paths.unwrap_or(10_000),
            seed: raw.seed.unwrap_or(42),
            antithetic: raw.antithetic.unwrap_or(false),
            bridge: raw.bridge.unwrap_or(true),
            tail_epsilon: raw.tail_epsilon.unwrap_or(1e-6),
            trace_paths: raw.trace.unwrap_or(0),
        };
        let strategy = parse_strategy(raw.strategy.as_deref().unwrap_or("optimal"))?;
        let dp = DpConfig {
            x_max: raw.dp_xmax.unwrap_or(10.0),
            dx: raw.dp_dx.unwrap_or(0.05),
            dt: raw.dp_dt.unwrap_or(1e-3),
            m_levels: raw.dp_mlevels.unwrap_or(30),
            actions: raw.dp_actions.unwrap_or(8),
            max_sweeps: 2_000_000,
        };
        Ok(RunConfig {
            experiment,
            params,
            grid,
            solver_options,
            eps_fb_factor: raw.eps_fb.unwrap_or(1e-8),
            sim,
            strategy,
            dp,
            dp_tol: raw.tol.unwrap_or(2.5e-7),
            richardson: raw.richardson.unwrap_or(false),
            out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    fn grid_for(&self, model: &Model) -> SolverGrid {
        match self.grid {
            Some(g) if g.x_max > 0.0 => g,
            Some(g) => SolverGrid {
                x_max: SolverGrid::default_for(model).x_max,
                ..g
            },
            None => SolverGrid::default_for(model),
        }
    }
}

/// Formats a float with 17 significant digits.
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// `x,c,v,vx,obstacle_active,d` with one row per grid node.
pub fn surface_csv(s: &ValueSurface) -> String {
    let mut out = String::with_capacity(64 * (s.nc() + 1) * (s.nx() + 1));
    out.push_str("x,c,v,vx,obstacle_active,d\n");
    for i in 0..=s.nc() {
        for j in 0..=s.nx() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f(s.x_nodes[j]),
                fmt_f(s.c_levels[i]),
                fmt_f(s.v[i][j]),
                fmt_f(s.vx[i][j]),
                u8::from(s.obstacle_active[i][j]),
                fmt_f(s.active_d[i][j]),
            );
        }
    }
    out
}

/// `c,X,Y` per level on which the switching boundary is defined.
pub fn boundaries_csv(fb: &FreeBoundaries) -> String {
    let mut out = String::from("c,X,Y\n");
    for i in 0..fb.x_of_c.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f(fb.c_levels[i]),
            fmt_f(fb.x_of_c[i]),
            fmt_f(fb.y_of_c[i]),
        );
    }
    out
}

fn trace_csv(traces: &[sim::PathTrace]) -> String {
    let mut out = String::from("path,t,X,M,C\n");
    for (k, tr) in traces.iter().enumerate() {
        for i in 0..tr.t.len() {
            let _ = writeln!(
                out,
                "{k},{},{},{},{}",
                fmt_f(tr.t[i]),
                fmt_f(tr.x[i]),
                fmt_f(tr.max_rate[i]),
                fmt_f(tr.rate[i]),
            );
        }
    }
    out
}

#[derive(Serialize)]
struct SolverDiagnostics {
    iterations_total: usize,
    iterations_max: usize,
    complementarity: ComplementarityReport,
    max_abs_level_difference: f64,
    x_max_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    refinement: Option<RefinementEstimate>,
}

#[derive(Serialize)]
struct RefinementEstimate {
    sup_change_halved_nx: f64,
    sup_change_halved_nc: f64,
}

#[derive(Serialize)]
struct BoundaryDiagnostics {
    x_monotonicity_violations: usize,
    max_adjacent_jump_x: f64,
    max_adjacent_jump_y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_top_minus_y0: Option<f64>,
}

#[derive(Serialize)]
struct Tolerances {
    rho: f64,
    tol_fix: f64,
    tol_obstacle: f64,
    eps_fb: f64,
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'static str,
    experiment: Experiment,
    params: &'a ModelParams,
    regime: &'static str,
    derived: &'a crate::model::DerivedConstants,
    quadratic_residuals: [f64; 5],
    coefficient_identity_residual: f64,
    tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<SolverGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundaries: Option<BoundaryDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<&'a SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dp: Option<&'a DpConfig>,
}

struct SolveOutput {
    surface: ValueSurface,
    fb: FreeBoundaries,
    solver_diag: SolverDiagnostics,
    boundary_diag: BoundaryDiagnostics,
}

/// Solve + extract + gate.
fn solved_run(cfg: &RunConfig, model: &Model) -> Result<SolveOutput> {
    let grid = cfg.grid_for(model);
    let (surface, fb) =
        boundaries::solve_and_extract(model, &grid, &cfg.solver_options, cfg.eps_fb_factor)?;
    let comp = surface.complementarity(model);
    let resolved = cfg.solver_options.resolve(&model.params, surface.grid.nx);

    // invariant gates: an artifact that fails these is not emitted as clean
    let scale = model.params.value_scale();
    let inactive_gate = 1e-6 * model.params.cbar.max(1.0);
    // the free boundary sits between nodes, so the node pinned onto the
    // obstacle next to it carries a residual of order dc * dx (coefficient
    // around twelve observed at the default grid; twice that for headroom)
    let active_gate = inactive_gate
        + 25.0 * surface.grid.dc(model.params.cbar) * surface.grid.dx();
    if comp.max_obstacle_dip > resolved.tol_obstacle {
        return Err(Error::Gate(format!(
            "obstacle dip {} above tolerance {}",
            comp.max_obstacle_dip, resolved.tol_obstacle
        )));
    }
    if comp.max_inactive_residual > inactive_gate || comp.min_active_residual < -active_gate {
        return Err(Error::Gate(format!(
            "complementarity residuals ({}, {}) outside gates ({}, {})",
            comp.max_inactive_residual, comp.min_active_residual, inactive_gate, active_gate
        )));
    }
    for row in &surface.v {
        for &v in row {
            if !(-1e-12..=scale + 1e-10).contains(&v) {
                return Err(Error::Gate(format!("value {v} outside [0, cbar/r]")));
            }
        }
    }
    if model.regime == Regime::Complicated {
        for i in 0..fb.x_of_c.len() {
            if !(fb.y_of_c[i] > 0.0 && fb.y_of_c[i] < fb.x_of_c[i]) {
                return Err(Error::Gate(format!(
                    "boundary ordering broken at level {i}: Y = {}, X = {}",
                    fb.y_of_c[i], fb.x_of_c[i]
                )));
            }
        }
    }

    let refinement = if cfg.richardson {
        Some(refinement_estimate(model, &surface.grid, &cfg.solver_options)?)
    } else {
        None
    };
    let (jump_x, jump_y) = fb.max_adjacent_jumps();
    let solver_diag = SolverDiagnostics {
        iterations_total: surface.iterations.iter().sum(),
        iterations_max: surface.iterations.iter().copied().max().unwrap_or(0),
        complementarity: comp,
        max_abs_level_difference: surface.max_abs_level_difference(),
        x_max_used: surface.grid.x_max,
        refinement,
    };
    let boundary_diag = BoundaryDiagnostics {
        x_monotonicity_violations: fb.x_monotonicity_violations,
        max_adjacent_jump_x: jump_x,
        max_adjacent_jump_y: jump_y,
        y_top_minus_y0: fb.y0_ref.map(|y0| fb.y_of_c[0] - y0),
    };
    Ok(SolveOutput {
        surface,
        fb,
        solver_diag,
        boundary_diag,
    })
}

/// Simple regime: sample the closed form instead of recursing.
fn closed_form_run(cfg: &RunConfig, model: &Model) -> Result<SolveOutput> {
    let grid = cfg.grid_for(model);
    let surface = solver::closed_form_surface(model, &grid)?;
    let fb = boundaries::extract(&surface, model, cfg.eps_fb_factor * model.params.value_scale())?;
    let (jump_x, jump_y) = fb.max_adjacent_jumps();
    Ok(SolveOutput {
        solver_diag: SolverDiagnostics {
            iterations_total: 0,
            iterations_max: 0,
            complementarity: surface.complementarity(model),
            max_abs_level_difference: surface.max_abs_level_difference(),
            x_max_used: grid.x_max,
            refinement: None,
        },
        boundary_diag: BoundaryDiagnostics {
            x_monotonicity_violations: fb.x_monotonicity_violations,
            max_adjacent_jump_x: jump_x,
            max_adjacent_jump_y: jump_y,
            y_top_minus_y0: None,
        },
        surface,
        fb,
    })
}

fn refinement_estimate(
    model: &Model,
    grid: &SolverGrid,
    options: &SolverOptions,
) -> Result<RefinementEstimate> {
    let full = solver::solve_system(model, grid, options)?;
    let half_nx = solver::solve_system(
        model,
        &SolverGrid::new(grid.x_max, grid.nx / 2, grid.nc),
        options,
    )?;
    let half_nc = solver::solve_system(
        model,
        &SolverGrid::new(grid.x_max, grid.nx, (grid.nc / 2).max(1)),
        options,
    )?;
    let mut dnx = 0.0f64;
    for i in 0..=grid.nc {
        for j in 0..=grid.nx / 2 {
            dnx = dnx.max((full.v[i][2 * j] - half_nx.v[i][j]).abs());
        }
    }
    let mut dnc = 0.0f64;
    for i in 0..=(grid.nc / 2).max(1) {
        let i_full = (2 * i).min(grid.nc);
        for j in 0..=grid.nx {
            dnc = dnc.max((full.v[i_full][j] - half_nc.v[i][j]).abs());
        }
    }
    Ok(RefinementEstimate {
        sup_change_halved_nx: dnx,
        sup_change_halved_nc: dnc,
    })
}

fn meta_for<'a>(
    cfg: &'a RunConfig,
    model: &'a Model,
    grid: Option<SolverGrid>,
    solver: Option<SolverDiagnostics>,
    boundaries: Option<BoundaryDiagnostics>,
    sim: Option<&'a SimConfig>,
    dp: Option<&'a DpConfig>,
) -> Meta<'a> {
    let resolved = cfg.solver_options.resolve(&model.params, grid.map_or(4000, |g| g.nx));
    Meta {
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment,
        params: &model.params,
        regime: match model.regime {
            Regime::Simple => "simple",
            Regime::Complicated => "complicated",
        },
        derived: &model.consts,
        quadratic_residuals: model.consts.quadratic_residuals(&model.params),
        coefficient_identity_residual: model.consts.coefficient_identity_residual(),
        tolerances: Tolerances {
            rho: resolved.rho,
            tol_fix: resolved.tol_fix,
            tol_obstacle: resolved.tol_obstacle,
            eps_fb: cfg.eps_fb_factor * model.params.value_scale(),
        },
        grid,
        solver,
        boundaries,
        sim,
        dp,
    }
}

fn emit_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

/// Executes one experiment, emitting its artifact files; returns their paths.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = Model::new(cfg.params)?;
    let out = &cfg.out;
    let mut files = Vec::new();
    match cfg.experiment {
        Experiment::Solve | Experiment::Boundaries => {
            let solved = if model.regime == Regime::Simple {
                eprintln!("simple regime: closed form, emitting the analytic surface");
                closed_form_run(cfg, &model)?
            } else {
                solved_run(cfg, &model)?
            };
            let SolveOutput { surface, fb, solver_diag, boundary_diag } = solved;
            let meta = meta_for(
                cfg,
                &model,
                Some(surface.grid),
                Some(solver_diag),
                Some(boundary_diag),
                None,
                None,
            );
            if cfg.experiment == Experiment::Solve {
                let p = out.join("surface.csv");
                write_file(&p, &surface_csv(&surface))?;
                files.push(p);
            }
            let p = out.join("boundaries.csv");
            write_file(&p, &boundaries_csv(&fb))?;
            files.push(p);
            let p = out.join("meta.json");
            emit_json(&p, &meta)?;
            files.push(p);
        }
        Experiment::Simulate => {
            let (outcome, traces) = match cfg.strategy {
                Strategy::Optimal => {
                    if model.regime == Regime::Simple {
                        // the optimum is the constant full rate
                        let o = sim::simulate_comparison(
                            &model,
                            Strategy::ConstantRate(model.params.cbar),
                            &cfg.sim,
                        )?;
                        (o, Vec::new())
                    } else {
                        let solved = solved_run(cfg, &model)?;
                        sim::simulate_optimal_traced(&model, &solved.surface, &solved.fb, &cfg.sim)?
                    }
                }
                s => (sim::simulate_comparison(&model, s, &cfg.sim)?, Vec::new()),
            };
            let scale = model.params.value_scale();
            if !(0.0..=scale + 3.0 * outcome.stderr + 1e-12).contains(&outcome.estimate) {
                return Err(Error::Gate(format!(
                    "estimate {} outside [0, cbar/r + 3 stderr]",
                    outcome.estimate
                )));
            }
            let p = out.join("sim.json");
            emit_json(&p, &outcome)?;
            files.push(p);
            if !traces.is_empty() {
                let p = out.join("trace.csv");
                write_file(&p, &trace_csv(&traces))?;
                files.push(p);
            }
            let meta = meta_for(cfg, &model, None, None, None, Some(&cfg.sim), None);
            let p = out.join("meta.json");
            emit_json(&p, &meta)?;
            files.push(p);
        }
        Experiment::Verify => {
            let solved = solved_run(cfg, &model)?;
            let inst = dp::DpInstance::new(&model.params, &cfg.dp)?;
            let table = dp::value_iteration(&inst, cfg.dp_tol)?;
            let report = dp::compare_surfaces(&table, &solved.surface);
            let p = out.join("verify.json");
            emit_json(&p, &report)?;
            files.push(p);
            let meta = meta_for(
                cfg,
                &model,
                Some(solved.surface.grid),
                Some(solved.solver_diag),
                Some(solved.boundary_diag),
                None,
                Some(&cfg.dp),
            );
            let p = out.join("meta.json");
            emit_json(&p, &meta)?;
            files.push(p);
        }
        Experiment::Figures => {
            files.extend(run_figures(cfg, out)?);
        }
    }
    Ok(files)
}

/// The four-drawdown study: one sub-run per `b`, plus an overlay CSV of both
/// boundaries across `b` on the shared level grid.
fn run_figures(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let bs = [0.4, 0.6, 0.8, 1.0];
    let labels = ["b04", "b06", "b08", "b10"];
    let sub_results: Vec<Result<(Vec<PathBuf>, FreeBoundaries)>> = bs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(&b, label)| {
            let sub = RunConfig {
                experiment: Experiment::Solve,
                params: ModelParams::new(cfg.params.mu, cfg.params.sigma, cfg.params.r, cfg.params.cbar, b)?,
                out: out.join(label),
                ..cfg.clone()
            };
            let model = Model::new(sub.params)?;
            let solved = solved_run(&sub, &model)?;
            let mut files = Vec::new();
            let p = sub.out.join("surface.csv");
            write_file(&p, &surface_csv(&solved.surface))?;
            files.push(p);
            let p = sub.out.join("boundaries.csv");
            write_file(&p, &boundaries_csv(&solved.fb))?;
            files.push(p);
            let meta = meta_for(
                &sub,
                &model,
                Some(solved.surface.grid),
                Some(solved.solver_diag),
                Some(solved.boundary_diag),
                None,
                None,
            );
            let p = sub.out.join("meta.json");
            emit_json(&p, &meta)?;
            files.push(p);
            Ok((files, solved.fb))
        })
        .collect();

    let mut files = Vec::new();
    let mut curves = Vec::new();
    for r in sub_results {
        let (f, fb) = r?;
        files.extend(f);
        curves.push(fb);
    }
    // overlay across b at the shared levels
    let n = curves.iter().map(|fb| fb.x_of_c.len()).min().unwrap_or(0);
    let mut csv = String::from("c,X_b04,Y_b04,X_b06,Y_b06,X_b08,Y_b08,X_b10,Y_b10\n");
    for i in 0..n {
        let mut row = fmt_f(curves[0].c_levels[i]);
        for fb in &curves {
            let _ = write!(row, ",{},{}", fmt_f(fb.x_of_c[i]), fmt_f(fb.y_of_c[i]));
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    let p = out.join("comparison.csv");
    write_file(&p, &csv)?;
    files.push(p);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_parsing_and_merge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nmu=0.3\nsigma = 0.3\nr=0.05\ncbar=0.3\nb=0.6\nnx=500\nseed=7\n").unwrap();
        let file_cfg = RawConfig::from_file(&path).unwrap();
        assert_eq!(file_cfg.mu, Some(0.3));
        assert_eq!(file_cfg.nx, Some(500));
        assert_eq!(file_cfg.seed, Some(7));
        // flags override the file
        let flags = RawConfig { nx: Some(800), ..RawConfig::default() };
        let merged = flags.or(file_cfg);
        assert_eq!(merged.nx, Some(800));
        assert_eq!(merged.mu, Some(0.3));
        let rc = RunConfig::resolve(Experiment::Solve, merged).unwrap();
        assert_eq!(rc.params.b, 0.6);
        assert_eq!(rc.grid.unwrap().nx, 800);
    }

    #[test]
    fn json_config_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"mu":0.1,"sigma":0.8,"r":0.08,"cbar":0.1,"b":0.5,"nc":20}"#)
            .unwrap();
        let cfg = RawConfig::from_file(&path).unwrap();
        assert_eq!(cfg.nc, Some(20));
        assert!(RawConfig::from_file(&path).unwrap().tol.is_none());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "mu=0.3\nnot_a_key=1\n").unwrap();
        assert!(matches!(RawConfig::from_file(&path), Err(Error::Config(_))));
    }

    #[test]
    fn missing_parameter_is_a_config_error() {
        let raw = RawConfig { mu: Some(0.3), ..RawConfig::default() };
        assert!(matches!(
            RunConfig::resolve(Experiment::Solve, raw),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(parse_strategy("optimal").unwrap(), Strategy::Optimal);
        assert_eq!(parse_strategy("constant:0.25").unwrap(), Strategy::ConstantRate(0.25));
        assert!(parse_strategy("nope").is_err());
    }

    #[test]
    fn solve_run_emits_selfcertifying_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let raw = RawConfig {
            mu: Some(0.3),
            sigma: Some(0.3),
            r: Some(0.05),
            cbar: Some(0.3),
            b: Some(0.6),
            nx: Some(600),
            nc: Some(40),
            xmax: Some(6.0),
            out: Some(dir.path().to_path_buf()),
            ..RawConfig::default()
        };
        let cfg = RunConfig::resolve(Experiment::Solve, raw).unwrap();
        let files = run(&cfg).unwrap();
        assert_eq!(files.len(), 3);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["regime"], "complicated");
        assert!(meta["solver"]["complementarity"]["max_inactive_residual"]
            .as_f64()
            .unwrap()
            .abs()
            < 1e-6);
        let surface = std::fs::read_to_string(dir.path().join("surface.csv")).unwrap();
        assert!(surface.starts_with("x,c,v,vx,obstacle_active,d\n"));
        assert_eq!(surface.lines().count(), 1 + 601 * 41);
    }

    #[test]
    fn richardson_estimates_land_in_meta() {
        let dir = tempfile::tempdir().unwrap();
        let raw = RawConfig {
            mu: Some(0.3),
            sigma: Some(0.3),
            r: Some(0.05),
            cbar: Some(0.3),
            b: Some(0.6),
            nx: Some(400),
            nc: Some(20),
            xmax: Some(6.0),
            richardson: Some(true),
            out: Some(dir.path().to_path_buf()),
            ..RawConfig::default()
        };
        let cfg = RunConfig::resolve(Experiment::Boundaries, raw).unwrap();
        run(&cfg).unwrap();
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
                .unwrap();
        let refinement = &meta["solver"]["refinement"];
        let dnx = refinement["sup_change_halved_nx"].as_f64().unwrap();
        let dnc = refinement["sup_change_halved_nc"].as_f64().unwrap();
        assert!(dnx > 0.0 && dnx < 0.01, "halved-nx change {dnx}");
        assert!(dnc > 0.0 && dnc < 0.5, "halved-nc change {dnc}");
    }

    #[test]
    fn simple_regime_solve_short_circuits() {
        let dir = tempfile::tempdir().unwrap();
        let raw = RawConfig {
            mu: Some(0.1),
            sigma: Some(0.8),
            r: Some(0.08),
            cbar: Some(0.1),
            b: Some(0.5),
            nx: Some(200),
            nc: Some(10),
            xmax: Some(20.0),
            out: Some(dir.path().to_path_buf()),
            ..RawConfig::default()
        };
        let cfg = RunConfig::resolve(Experiment::Solve, raw).unwrap();
        run(&cfg).unwrap();
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["regime"], "simple");
        assert_eq!(meta["solver"]["iterations_total"], 0);
    }
}

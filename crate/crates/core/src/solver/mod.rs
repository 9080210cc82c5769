//! Finite-difference solver for the recursive family of single-obstacle ODEs.
//!
//! Payout levels `c_i = cbar (nc - i) / nc` decrease from `cbar` to zero. Row
//! zero of the value surface is the sampled closed form of the boundary case;
//! every later row solves
//!
//! ```text
//! min{ -L v_i - c_i T v_i ,  v_i - v_{i-1} } = 0,   v_i(0) = 0,
//! ```
//!
//! with a Dirichlet far condition at `x_max`. The bang-bang control
//! `d in {b, 1}` inside `T` is resolved by policy iteration and the obstacle
//! by penalization, so each sweep is one tridiagonal solve.

mod tridiag;

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, Regime};
use serde::{Deserialize, Serialize};

/// Discretization of the `(x, c)` rectangle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverGrid {
    /// Truncation point of the surplus axis.
    pub x_max: f64,
    /// Number of spatial intervals.
    pub nx: usize,
    /// Number of payout levels below `cbar` (rows are `0..=nc`).
    pub nc: usize,
}

impl SolverGrid {
    pub fn new(x_max: f64, nx: usize, nc: usize) -> Self {
        SolverGrid { x_max, nx, nc }
    }

    /// Default grid for production runs: the truncation point covers the
    /// barrier switch point, three free-point lengths and twenty diffusion
    /// lengths, whichever is largest.
    pub fn default_for(model: &Model) -> Self {
        let p = &model.params;
        let mut x_max = (2.0 * model.consts.x_infty).max(20.0 * p.sigma * p.sigma / p.mu);
        if let Some(y0) = model.consts.y0 {
            x_max = x_max.max(3.0 * y0);
        }
        SolverGrid::new(x_max, 4000, 300)
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.nx as f64
    }

    pub fn dc(&self, cbar: f64) -> f64 {
        cbar / self.nc as f64
    }

    pub fn x_at(&self, j: usize) -> f64 {
        self.x_max * j as f64 / self.nx as f64
    }

    /// Level `i` payout rate, decreasing from `cbar` (i = 0) to `0` (i = nc).
    pub fn c_level(&self, i: usize, cbar: f64) -> f64 {
        cbar * (self.nc - i) as f64 / self.nc as f64
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if self.x_max <= 0.0 || self.x_max.is_nan() || self.nx < 100 || self.nc == 0 {
            return Err(Error::Config(format!(
                "grid needs x_max > 0, nx >= 100, nc >= 1 (got x_max={}, nx={}, nc={})",
                self.x_max, self.nx, self.nc
            )));
        }
        if self.x_max <= model.consts.x_infty {
            return Err(Error::Config(format!(
                "x_max = {} must exceed the barrier switch point {}",
                self.x_max, model.consts.x_infty
            )));
        }
        if let Some(y0) = model.consts.y0 {
            if self.x_max <= 3.0 * y0 {
                return Err(Error::Config(format!(
                    "x_max = {} must exceed three free-point lengths {}",
                    self.x_max,
                    3.0 * y0
                )));
            }
        }
        Ok(())
    }
}

/// Solver knobs. `None` fields fall back to scale-aware defaults.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Penalty parameter; default `1e7 * r`.
    pub rho: Option<f64>,
    /// Fixed-point stopping tolerance; default `1e-10 * cbar / r`.
    pub tol_fix: Option<f64>,
    /// Largest tolerated dip below the obstacle; default `1e-6 * cbar / r`.
    pub tol_obstacle: Option<f64>,
    /// Sweep budget per level. The default, `nx + 200`, covers the worst
    /// case of a cold start: when the active set must shrink, the free
    /// front advances one cell per sweep.
    pub max_iter: Option<usize>,
}


#[derive(Debug, Clone, Copy)]
pub(crate) struct ResolvedOptions {
    pub rho: f64,
    pub tol_fix: f64,
    pub tol_obstacle: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub(crate) fn resolve(&self, p: &ModelParams, nx: usize) -> ResolvedOptions {
        ResolvedOptions {
            rho: self.rho.unwrap_or(1e7 * p.r),
            tol_fix: self.tol_fix.unwrap_or(1e-10 * p.value_scale()),
            tol_obstacle: self.tol_obstacle.unwrap_or(1e-6 * p.value_scale()),
            max_iter: self.max_iter.unwrap_or(nx + 200),
        }
    }
}

/// One converged obstacle level.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    /// Node values, length `nx + 1`.
    pub v: Vec<f64>,
    /// Bang-bang control per node, `b` or `1`.
    pub active_d: Vec<f64>,
    /// True where the obstacle `v_prev` binds.
    pub obstacle_active: Vec<bool>,
    /// Sweeps used by the fixed-point loop.
    pub iterations: usize,
}

/// Solves one single-obstacle level.
///
/// `v_prev` is the obstacle row (length `nx + 1`), `far_value` the Dirichlet
/// value at `x_max`. For recursion levels the far value is `v_prev[nx]`
/// because the obstacle binds there; for a base-equation solve it is the
/// asymptotic value of the closed form.
pub fn solve_obstacle_level(
    model: &Model,
    grid: &SolverGrid,
    level: usize,
    c_i: f64,
    v_prev: &[f64],
    far_value: f64,
    options: &SolverOptions,
) -> Result<LevelSolution> {
    solve_obstacle_level_from(model, grid, level, c_i, v_prev, far_value, options, None)
}

/// The level solve with an optional starting active set; the recursion seeds
/// each level with the previous level's converged set, since free points move
/// only a few cells between adjacent levels.
#[allow(clippy::too_many_arguments)]
fn solve_obstacle_level_from(
    model: &Model,
    grid: &SolverGrid,
    level: usize,
    c_i: f64,
    v_prev: &[f64],
    far_value: f64,
    options: &SolverOptions,
    active_init: Option<&[bool]>,
) -> Result<LevelSolution> {
    let opts = options.resolve(&model.params, grid.nx);
    let p = &model.params;
    let nx = grid.nx;
    assert_eq!(v_prev.len(), nx + 1, "obstacle row must have nx + 1 nodes");
    if !(0.0..=p.cbar + 1e-12).contains(&c_i) {
        return Err(Error::Domain(format!("level rate {c_i} outside [0, {}]", p.cbar)));
    }

    let dx = grid.dx();
    let sigma2 = p.sigma * p.sigma;
    let half = 0.5 * sigma2 / (dx * dx);
    let n_int = nx - 1;

    // Row coefficients of -sigma^2/2 v'' - a v' + r v at effective drift `a`.
    // Central drift differencing keeps second order and still yields an
    // M-matrix whenever |a| dx <= sigma^2; otherwise fall back to upwind.
    let row = |a: f64| -> (f64, f64, f64) {
        if a.abs() * dx <= sigma2 {
            (-half + a / (2.0 * dx), 2.0 * half + p.r, -half - a / (2.0 * dx))
        } else if a >= 0.0 {
            (-half, 2.0 * half + a / dx + p.r, -half - a / dx)
        } else {
            (-half + a / dx, 2.0 * half - a / dx + p.r, -half)
        }
    };
    // Iterate slope at interior node j using the same stencil the row uses.
    let slope = |v: &[f64], j: usize, a: f64| -> f64 {
        if a.abs() * dx <= sigma2 {
            (v[j + 1] - v[j - 1]) / (2.0 * dx)
        } else if a >= 0.0 {
            (v[j + 1] - v[j]) / dx
        } else {
            (v[j] - v[j - 1]) / dx
        }
    };

    let mut v = v_prev.to_vec();
    v[0] = 0.0;
    v[nx] = far_value;

    // Initial policy from central slopes of the starting iterate; ties take
    // the full payout.
    let mut policy = vec![1.0f64; n_int];
    for j in 1..nx {
        let s = (v[j + 1] - v[j - 1]) / (2.0 * dx);
        policy[j - 1] = if s <= 1.0 { 1.0 } else { p.b };
    }
    let mut active = match active_init {
        Some(init) => init[1..nx].to_vec(),
        None => vec![false; n_int],
    };

    let mut sub = vec![0.0f64; n_int - 1];
    let mut diag = vec![0.0f64; n_int];
    let mut sup = vec![0.0f64; n_int - 1];
    let mut rhs = vec![0.0f64; n_int];
    let mut scratch = vec![0.0f64; n_int];

    let mut last_delta = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        for idx in 0..n_int {
            let j = idx + 1;
            let d = policy[idx];
            let a = p.mu - c_i * d;
            let (lo, mid, hi) = row(a);
            let mut m = mid;
            let mut b_rhs = c_i * d;
            if active[idx] {
                m += opts.rho;
                b_rhs += opts.rho * v_prev[j];
            }
            diag[idx] = m;
            rhs[idx] = b_rhs;
            if idx > 0 {
                sub[idx - 1] = lo;
            }
            // v(0) = 0 contributes nothing to the first row.
            if idx + 1 < n_int {
                sup[idx] = hi;
            } else {
                rhs[idx] -= hi * far_value;
            }
        }
        tridiag::solve_in_place(&sub, &diag, &sup, &mut rhs, &mut scratch);

        let mut delta = 0.0f64;
        for idx in 0..n_int {
            delta = delta.max((rhs[idx] - v[idx + 1]).abs());
            v[idx + 1] = rhs[idx];
        }

        let mut stable = true;
        for idx in 0..n_int {
            let j = idx + 1;
            let a_old = p.mu - c_i * policy[idx];
            let s = slope(&v, j, a_old);
            let d_new = if s <= 1.0 { 1.0 } else { p.b };
            let act_new = v[j] < v_prev[j];
            if d_new != policy[idx] || act_new != active[idx] {
                stable = false;
            }
            policy[idx] = d_new;
            active[idx] = act_new;
        }

        last_delta = delta;
        if delta <= opts.tol_fix && stable {
            let mut worst = 0.0f64;
            for j in 0..=nx {
                worst = worst.max(v_prev[j] - v[j]);
            }
            if worst > opts.tol_obstacle {
                return Err(Error::ObstacleViolation {
                    level,
                    worst,
                    tol: opts.tol_obstacle,
                });
            }
            // The finite penalty leaves a dip of (residual / rho) below the
            // obstacle on binding nodes. One exact solve at the converged
            // policy, with binding rows pinned to the obstacle, lands rows on
            // their predecessor exactly and zeroes the equation residual on
            // the free nodes.
            for idx in 0..n_int {
                let j = idx + 1;
                if active[idx] {
                    diag[idx] = 1.0;
                    rhs[idx] = v_prev[j];
                    if idx > 0 {
                        sub[idx - 1] = 0.0;
                    }
                    if idx + 1 < n_int {
                        sup[idx] = 0.0;
                    }
                } else {
                    let d = policy[idx];
                    let a = p.mu - c_i * d;
                    let (lo, mid, hi) = row(a);
                    diag[idx] = mid;
                    rhs[idx] = c_i * d;
                    if idx > 0 {
                        sub[idx - 1] = lo;
                    }
                    if idx + 1 < n_int {
                        sup[idx] = hi;
                    } else {
                        rhs[idx] -= hi * far_value;
                    }
                }
            }
            tridiag::solve_in_place(&sub, &diag, &sup, &mut rhs, &mut scratch);
            v[1..=n_int].copy_from_slice(&rhs[..n_int]);
            let mut active_d = vec![1.0; nx + 1];
            let mut obstacle_active = vec![false; nx + 1];
            active_d[1..=n_int].copy_from_slice(&policy[..n_int]);
            obstacle_active[1..=n_int].copy_from_slice(&active[..n_int]);
            // Boundary nodes carry their neighbour's control; the far node
            // sits inside the binding region by construction.
            active_d[0] = active_d[1];
            active_d[nx] = active_d[nx - 1];
            obstacle_active[nx] = obstacle_active[nx - 1];
            return Ok(LevelSolution {
                v,
                active_d,
                obstacle_active,
                iterations: iter,
            });
        }
    }

    Err(Error::NonConvergence {
        level,
        iterations: opts.max_iter,
        last_delta,
    })
}

/// Discrete value surface over the `(x, c)` grid.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub grid: SolverGrid,
    pub params: ModelParams,
    /// `x` nodes, length `nx + 1`.
    pub x_nodes: Vec<f64>,
    /// Payout levels, length `nc + 1`, decreasing from `cbar` to `0`.
    pub c_levels: Vec<f64>,
    /// Values per level, `(nc + 1) x (nx + 1)`.
    pub v: Vec<Vec<f64>>,
    /// Central-difference spatial slope field, same shape as `v`.
    pub vx: Vec<Vec<f64>>,
    /// Bang-bang control per node.
    pub active_d: Vec<Vec<f64>>,
    /// Obstacle indicator per node; row 0 has no obstacle.
    pub obstacle_active: Vec<Vec<bool>>,
    /// Fixed-point sweeps per level (0 for the sampled row 0).
    pub iterations: Vec<usize>,
}

/// Cell index and fraction along a uniform axis, snapping onto nodes within
/// `tol` so node queries reproduce stored values exactly.
fn axis_locate(t: f64, step: f64, n: usize, tol: f64) -> (usize, f64) {
    let raw = t / step;
    let near = raw.round();
    if (t - near * step).abs() <= tol {
        let k = (near.max(0.0) as usize).min(n);
        return if k == n { (n - 1, 1.0) } else { (k, 0.0) };
    }
    let k = (raw as usize).min(n - 1);
    (k, (raw - k as f64).clamp(0.0, 1.0))
}

fn central_slopes(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    let mut vx = vec![0.0; n];
    vx[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
    for j in 1..n - 1 {
        vx[j] = (v[j + 1] - v[j - 1]) / (2.0 * dx);
    }
    vx[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
    vx
}

impl ValueSurface {
    pub fn nc(&self) -> usize {
        self.grid.nc
    }

    pub fn nx(&self) -> usize {
        self.grid.nx
    }

    /// Bilinear interpolation over the `(x, c)` grid; exact at nodes.
    pub fn interpolate(&self, x: f64, c: f64) -> Result<f64> {
        self.bilinear(&self.v, x, c)
    }

    /// Bilinear interpolation of the slope field.
    pub fn interpolate_vx(&self, x: f64, c: f64) -> Result<f64> {
        self.bilinear(&self.vx, x, c)
    }

    fn bilinear(&self, field: &[Vec<f64>], x: f64, c: f64) -> Result<f64> {
        let p = &self.params;
        let tol_x = 1e-9 * self.grid.x_max;
        let tol_c = 1e-9 * p.cbar;
        if !(-tol_x..=self.grid.x_max + tol_x).contains(&x) {
            return Err(Error::Domain(format!(
                "x = {x} outside the grid [0, {}]",
                self.grid.x_max
            )));
        }
        if !(-tol_c..=p.cbar + tol_c).contains(&c) {
            return Err(Error::Domain(format!("c = {c} outside [0, {}]", p.cbar)));
        }
        let x = x.clamp(0.0, self.grid.x_max);
        let c = c.clamp(0.0, p.cbar);
        // Levels decrease in c, so the level index grows as c falls.
        let (j, tx) = axis_locate(x, self.grid.dx(), self.grid.nx, 1e-12 * self.grid.x_max);
        let (i, tc) = axis_locate(p.cbar - c, self.grid.dc(p.cbar), self.grid.nc, 1e-12 * p.cbar);
        let lo = field[i][j] * (1.0 - tx) + field[i][j + 1] * tx;
        let hi = field[i + 1][j] * (1.0 - tx) + field[i + 1][j + 1] * tx;
        Ok(lo * (1.0 - tc) + hi * tc)
    }

    /// Scaled consecutive-level differences `(v_i - v_{i-1}) / dc`,
    /// `nc x (nx + 1)`.
    pub fn level_difference_field(&self) -> Vec<Vec<f64>> {
        let dc = self.grid.dc(self.params.cbar);
        (1..=self.nc())
            .map(|i| {
                (0..=self.nx())
                    .map(|j| (self.v[i][j] - self.v[i - 1][j]) / dc)
                    .collect()
            })
            .collect()
    }

    /// Largest absolute entry of the level-difference field.
    pub fn max_abs_level_difference(&self) -> f64 {
        self.level_difference_field()
            .iter()
            .flatten()
            .fold(0.0f64, |acc, u| acc.max(u.abs()))
    }

    /// Re-evaluates the discrete complementarity system on the stored
    /// solution so every emitted surface is self-certifying.
    pub fn complementarity(&self, model: &Model) -> ComplementarityReport {
        let p = &model.params;
        let dx = self.grid.dx();
        let sigma2 = p.sigma * p.sigma;
        let mut max_inactive = 0.0f64;
        let mut min_active = f64::INFINITY;
        let mut max_dip = 0.0f64;
        for i in 1..=self.nc() {
            let c_i = self.c_levels[i];
            for j in 1..self.nx() {
                let d = self.active_d[i][j];
                let a = p.mu - c_i * d;
                let (vm, v0, vp) = (self.v[i][j - 1], self.v[i][j], self.v[i][j + 1]);
                let vxx = (vp - 2.0 * v0 + vm) / (dx * dx);
                let vx = if a.abs() * dx <= sigma2 {
                    (vp - vm) / (2.0 * dx)
                } else if a >= 0.0 {
                    (vp - v0) / dx
                } else {
                    (v0 - vm) / dx
                };
                let res = -(0.5 * sigma2 * vxx) - a * vx + p.r * v0 - c_i * d;
                if self.obstacle_active[i][j] {
                    min_active = min_active.min(res);
                } else {
                    max_inactive = max_inactive.max(res.abs());
                }
                max_dip = max_dip.max(self.v[i - 1][j] - self.v[i][j]);
            }
        }
        if min_active == f64::INFINITY {
            min_active = 0.0;
        }
        ComplementarityReport {
            max_inactive_residual: max_inactive,
            min_active_residual: min_active,
            max_obstacle_dip: max_dip,
        }
    }
}

/// Discrete complementarity certificate of a solved surface.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplementarityReport {
    /// Largest |residual| where the equation is supposed to hold.
    pub max_inactive_residual: f64,
    /// Smallest residual where the obstacle binds (should be >= -tol).
    pub min_active_residual: f64,
    /// Largest dip of a row below its obstacle row.
    pub max_obstacle_dip: f64,
}

/// Samples the closed form onto the grid (simple regime: every level equals
/// the boundary-case value).
pub fn closed_form_surface(model: &Model, grid: &SolverGrid) -> Result<ValueSurface> {
    grid.validate(model)?;
    let nx = grid.nx;
    let nc = grid.nc;
    let x_nodes: Vec<f64> = (0..=nx).map(|j| grid.x_at(j)).collect();
    let c_levels: Vec<f64> = (0..=nc).map(|i| grid.c_level(i, model.params.cbar)).collect();
    let row: Vec<f64> = x_nodes
        .iter()
        .map(|&x| model.boundary_value(x))
        .collect::<Result<_>>()?;
    let d_row: Vec<f64> = x_nodes
        .iter()
        .map(|&x| {
            let s = model.boundary_value_dx(x)?;
            Ok(if s <= 1.0 { 1.0 } else { model.params.b })
        })
        .collect::<Result<_>>()?;
    let vx_row = central_slopes(&row, grid.dx());
    let mut obstacle_active = vec![vec![true; nx + 1]; nc + 1];
    obstacle_active[0] = vec![false; nx + 1];
    Ok(ValueSurface {
        grid: *grid,
        params: model.params,
        x_nodes,
        c_levels,
        v: vec![row; nc + 1],
        vx: vec![vx_row; nc + 1],
        active_d: vec![d_row; nc + 1],
        obstacle_active,
        iterations: vec![0; nc + 1],
    })
}

/// Runs the level recursion regardless of regime: row 0 is the sampled
/// closed form, each later row solves its obstacle problem against the row
/// above.
pub fn solve_system_recursive(
    model: &Model,
    grid: &SolverGrid,
    options: &SolverOptions,
) -> Result<ValueSurface> {
    grid.validate(model)?;
    let nx = grid.nx;
    let nc = grid.nc;
    let dx = grid.dx();
    let x_nodes: Vec<f64> = (0..=nx).map(|j| grid.x_at(j)).collect();
    let c_levels: Vec<f64> = (0..=nc).map(|i| grid.c_level(i, model.params.cbar)).collect();

    let row0: Vec<f64> = x_nodes
        .iter()
        .map(|&x| model.boundary_value(x))
        .collect::<Result<_>>()?;
    let d0: Vec<f64> = x_nodes
        .iter()
        .map(|&x| {
            let s = model.boundary_value_dx(x)?;
            Ok(if s <= 1.0 { 1.0 } else { model.params.b })
        })
        .collect::<Result<_>>()?;

    let mut v = Vec::with_capacity(nc + 1);
    let mut vx = Vec::with_capacity(nc + 1);
    let mut active_d = Vec::with_capacity(nc + 1);
    let mut obstacle_active = Vec::with_capacity(nc + 1);
    let mut iterations = Vec::with_capacity(nc + 1);

    vx.push(central_slopes(&row0, dx));
    v.push(row0);
    active_d.push(d0);
    obstacle_active.push(vec![false; nx + 1]);
    iterations.push(0);

    for i in 1..=nc {
        let far = v[i - 1][nx];
        let warm = if i > 1 { Some(&obstacle_active[i - 1][..]) } else { None };
        let lvl = solve_obstacle_level_from(
            model,
            grid,
            i,
            c_levels[i],
            &v[i - 1],
            far,
            options,
            warm,
        )?;
        vx.push(central_slopes(&lvl.v, dx));
        v.push(lvl.v);
        active_d.push(lvl.active_d);
        obstacle_active.push(lvl.obstacle_active);
        iterations.push(lvl.iterations);
    }

    Ok(ValueSurface {
        grid: *grid,
        params: model.params,
        x_nodes,
        c_levels,
        v,
        vx,
        active_d,
        obstacle_active,
        iterations,
    })
}

/// Solves the value surface, short-circuiting the simple regime to its closed
/// form.
pub fn solve_system(model: &Model, grid: &SolverGrid, options: &SolverOptions) -> Result<ValueSurface> {
    match model.regime {
        Regime::Simple => closed_form_surface(model, grid),
        Regime::Complicated => solve_system_recursive(model, grid, options),
    }
}

//! Free-boundary extraction and the equivalent payout rates.
//!
//! Two curves split the state space. The switching boundary is where raising
//! the running maximum stops costing value: level `i` meets level `i - 1`
//! beyond a free point `x_i`, and the curve collects those points. The
//! converting boundary is where the marginal value of surplus crosses one,
//! splitting minimum-payout from maximum-payout states.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::solver::{solve_system, SolverGrid, SolverOptions, ValueSurface};
use serde::Serialize;

/// Sampled free boundaries of a solved surface.
#[derive(Debug, Clone, Serialize)]
pub struct FreeBoundaries {
    /// Payout levels of the surface, decreasing, length `nc + 1`.
    pub c_levels: Vec<f64>,
    /// Per-level free points `x_i`, `i = 1..=nc`: the first node beyond which
    /// row `i` sticks to row `i - 1`.
    pub x_free: Vec<f64>,
    /// Switching boundary sampled at every level `0..=nc`: level `i >= 1`
    /// takes its own free point (raising the rate is free beyond it); the top
    /// level takes the limit from below.
    pub x_of_c: Vec<f64>,
    /// Converting boundary sampled at every level `0..=nc`.
    pub y_of_c: Vec<f64>,
    /// Analytic free point of the boundary case, for cross-checks.
    pub y0_ref: Option<f64>,
    /// Value-gap threshold used by the extraction and the rate scans.
    pub eps_fb: f64,
    /// Count of adjacent-level decreases of the switching boundary. The curve
    /// is conjectured monotone but not proved, so violations are reported,
    /// never asserted.
    pub x_monotonicity_violations: usize,
}

/// Default value-gap threshold: `1e-8` of the value scale `cbar / r`.
pub fn default_eps_fb(surface: &ValueSurface) -> f64 {
    1e-8 * surface.params.value_scale()
}

/// Finds the per-level free points and the switching boundary.
///
/// The free point of level `i` is the smallest grid `x` from which the gap
/// `v_i - v_{i-1}` stays within `eps_fb` for every larger node. Errors with
/// `NotFound` if some row never closes onto its predecessor below `x_max`,
/// which signals a too-small truncation.
pub fn extract_switching_boundary(
    surface: &ValueSurface,
    eps_fb: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if eps_fb <= 0.0 {
        return Err(Error::Config(format!("eps_fb must be > 0, got {eps_fb}")));
    }
    let nx = surface.nx();
    let mut x_free = Vec::with_capacity(surface.nc());
    for i in 1..=surface.nc() {
        // Scan from the right: the free point sits just past the last node
        // with a strict gap.
        let mut last_strict: Option<usize> = None;
        for j in (0..=nx).rev() {
            if surface.v[i][j] - surface.v[i - 1][j] > eps_fb {
                last_strict = Some(j);
                break;
            }
        }
        let xi = match last_strict {
            None => surface.x_nodes[0],
            Some(j) if j == nx => {
                return Err(Error::NotFound(format!(
                    "row {i} never meets row {} below x_max = {}; increase the truncation",
                    i - 1,
                    surface.grid.x_max
                )))
            }
            Some(j) => surface.x_nodes[j + 1],
        };
        x_free.push(xi);
    }
    // Level i's entry is its own free point: beyond it the value coincides
    // with the next-higher payout level, so the running maximum may be raised
    // for free. The top level has no higher neighbour and takes the limit.
    let x_of_c: Vec<f64> = std::iter::once(x_free[0])
        .chain(x_free.iter().copied())
        .collect();
    Ok((x_free, x_of_c))
}

/// Finds the converting boundary: per level, the first crossing of the slope
/// field below one, refined by inverse linear interpolation.
pub fn extract_converting_boundary(surface: &ValueSurface) -> Result<Vec<f64>> {
    let mut y_of_c = Vec::with_capacity(surface.nc() + 1);
    for i in 0..=surface.nc() {
        let row = &surface.vx[i];
        let found = row.iter().position(|&s| s <= 1.0);
        let j = found.ok_or_else(|| {
            Error::NotFound(format!(
                "slope stays above 1 on the whole row at level {i}; solver defect"
            ))
        })?;
        if j == 0 {
            y_of_c.push(0.0);
        } else {
            let (s0, s1) = (row[j - 1], row[j]);
            let frac = if s0 > s1 { (s0 - 1.0) / (s0 - s1) } else { 1.0 };
            y_of_c.push(surface.x_nodes[j - 1] + frac * surface.grid.dx());
        }
    }
    Ok(y_of_c)
}

/// Extracts both boundaries and the diagnostics bundle.
pub fn extract(surface: &ValueSurface, model: &Model, eps_fb: f64) -> Result<FreeBoundaries> {
    let (x_free, x_of_c) = extract_switching_boundary(surface, eps_fb)?;
    let y_of_c = extract_converting_boundary(surface)?;
    let violations = x_of_c
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12) // levels are ordered by decreasing c
        .count();
    Ok(FreeBoundaries {
        c_levels: surface.c_levels.clone(),
        x_free,
        x_of_c,
        y_of_c,
        y0_ref: model.consts.y0,
        eps_fb,
        x_monotonicity_violations: violations,
    })
}

impl FreeBoundaries {
    /// Converting boundary at an arbitrary rate, linearly interpolated
    /// between levels and clamped at the ends.
    pub fn converting_at(&self, c: f64) -> f64 {
        interp_levels(&self.c_levels, &self.y_of_c, c)
    }

    /// Switching boundary at an arbitrary rate.
    pub fn switching_at(&self, c: f64) -> f64 {
        interp_levels(&self.c_levels, &self.x_of_c, c)
    }

    pub fn max_switching(&self) -> f64 {
        self.x_of_c.iter().fold(0.0f64, |a, &x| a.max(x))
    }

    /// Largest adjacent-level jump of each curve, for continuity gates.
    pub fn max_adjacent_jumps(&self) -> (f64, f64) {
        let jump = |v: &[f64]| {
            v.windows(2)
                .fold(0.0f64, |a, w| a.max((w[1] - w[0]).abs()))
        };
        (jump(&self.x_of_c), jump(&self.y_of_c))
    }
}

fn interp_levels(c_levels: &[f64], values: &[f64], c: f64) -> f64 {
    debug_assert_eq!(c_levels.len(), values.len());
    let n = values.len();
    // levels decrease with index
    if c >= c_levels[0] {
        return values[0];
    }
    if c <= c_levels[n - 1] {
        return values[n - 1];
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if c_levels[mid] >= c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = (c_levels[lo] - c) / (c_levels[lo] - c_levels[hi]);
    values[lo] * (1.0 - t) + values[hi] * t
}

/// Row value at an off-grid `x` by linear interpolation.
fn row_at(surface: &ValueSurface, i: usize, x: f64) -> f64 {
    let dx = surface.grid.dx();
    let j = ((x / dx) as usize).min(surface.nx() - 1);
    let t = (x - surface.x_nodes[j]) / dx;
    surface.v[i][j] * (1.0 - t) + surface.v[i][j + 1] * t
}

fn level_below(surface: &ValueSurface, c: f64) -> usize {
    // largest index i with c_level(i) >= c ... indices grow as c falls
    let cbar = surface.params.cbar;
    let dc = surface.grid.dc(cbar);
    (((cbar - c) / dc).floor() as usize).min(surface.nc())
}

/// The largest payout level at or above `c` whose value at `x` coincides with
/// the value at `(x, c)`, within `eps_fb`. Drives the running-maximum update
/// of the optimal strategy.
pub fn equivalent_max_rate(surface: &ValueSurface, x: f64, c: f64, eps_fb: f64) -> f64 {
    let c = c.clamp(0.0, surface.params.cbar);
    // Every row vanishes at the origin, so the scan reads the gap at the
    // first interior node instead.
    let x_eval = x.clamp(0.0, surface.grid.x_max).max(surface.grid.dx());
    let i_here = level_below(surface, c);
    let here = if (surface.c_levels[i_here] - c).abs() < 1e-14 * surface.params.cbar.max(1.0) {
        row_at(surface, i_here, x_eval)
    } else {
        surface.interpolate(x_eval, c).unwrap_or_else(|_| row_at(surface, i_here, x_eval))
    };
    let mut best = c;
    for i in (0..=i_here).rev() {
        if surface.c_levels[i] < c {
            continue;
        }
        if (here - row_at(surface, i, x_eval)).abs() <= eps_fb {
            best = surface.c_levels[i];
        } else {
            break;
        }
    }
    best.max(c)
}

/// Mirror scan downward: the smallest level at or below `c` sharing the value
/// at `(x, c)`.
pub fn equivalent_min_rate(surface: &ValueSurface, x: f64, c: f64, eps_fb: f64) -> f64 {
    let c = c.clamp(0.0, surface.params.cbar);
    let x_eval = x.clamp(0.0, surface.grid.x_max).max(surface.grid.dx());
    let i_start = level_below(surface, c);
    let here = surface
        .interpolate(x_eval, c)
        .unwrap_or_else(|_| row_at(surface, i_start, x_eval));
    let mut best = c;
    for i in i_start..=surface.nc() {
        if surface.c_levels[i] > c {
            continue;
        }
        if (row_at(surface, i, x_eval) - here).abs() <= eps_fb {
            best = surface.c_levels[i];
        } else {
            break;
        }
    }
    best.min(c)
}

/// Solves and extracts with a truncation guard: if the switching boundary
/// comes within 10% of `x_max` (or some row never closes), the domain is
/// doubled, keeping `dx` fixed, and the solve repeats.
pub fn solve_and_extract(
    model: &Model,
    grid: &SolverGrid,
    options: &SolverOptions,
    eps_fb_factor: f64,
) -> Result<(ValueSurface, FreeBoundaries)> {
    let mut grid = *grid;
    for _ in 0..4 {
        let surface = solve_system(model, &grid, options)?;
        let eps = eps_fb_factor * model.params.value_scale();
        match extract(&surface, model, eps) {
            Ok(fb) if fb.max_switching() <= 0.9 * grid.x_max => return Ok((surface, fb)),
            Ok(_) | Err(Error::NotFound(_)) => {
                grid = SolverGrid::new(2.0 * grid.x_max, 2 * grid.nx, grid.nc);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NotFound(format!(
        "switching boundary still crowds x_max = {} after repeated doubling",
        grid.x_max
    )))
}

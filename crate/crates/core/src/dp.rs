//! Brute-force verifier: a discrete-time, discrete-state Markov decision
//! process approximation of the payout problem, solved by plain value
//! iteration.
//!
//! The state is `(x, M)` on a coarse product grid. Per step the insurer picks
//! a payout rate from a small action set spanning `[b M, cbar]`; picking a
//! rate above `M` snaps the maximum up to the nearest level at or above it (a
//! one-sided downward bias). Surplus moves by a trinomial step matched to the
//! drift `mu - a` and variance `sigma^2 dt` exactly. Nothing here reuses the
//! ODE solver's discretization; independence is the point.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solver::ValueSurface;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Oracle discretization knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DpConfig {
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    /// Number of running-maximum levels spanning `[0, cbar]`.
    pub m_levels: usize,
    /// Action-set size per level.
    pub actions: usize,
    pub max_sweeps: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            x_max: 10.0,
            dx: 0.05,
            dt: 1e-3,
            m_levels: 30,
            actions: 8,
            max_sweeps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ActionSpec {
    reward_rate: f64,
    next_m: usize,
    p_up: f64,
    p_mid: f64,
    p_down: f64,
}

/// Precomputed MDP: grids, per-level action specs, and the step discount.
#[derive(Debug, Clone)]
pub struct DpInstance {
    pub x_nodes: Vec<f64>,
    pub m_levels: Vec<f64>,
    pub dt: f64,
    beta: f64,
    actions: Vec<Vec<ActionSpec>>,
    max_sweeps: usize,
}

impl DpInstance {
    pub fn new(p: &ModelParams, cfg: &DpConfig) -> Result<Self> {
        p.validate()?;
        if cfg.dx <= 0.0 || cfg.dt <= 0.0 || cfg.x_max <= cfg.dx {
            return Err(Error::Config("dp grid needs dx > 0, dt > 0, x_max > dx".into()));
        }
        if cfg.m_levels == 0 || cfg.actions < 2 {
            return Err(Error::Config("dp needs m_levels >= 1 and actions >= 2".into()));
        }
        let nx = (cfg.x_max / cfg.dx).round() as usize;
        let x_nodes: Vec<f64> = (0..=nx).map(|i| i as f64 * cfg.dx).collect();
        let m_levels: Vec<f64> = if cfg.m_levels == 1 {
            vec![p.cbar]
        } else {
            (0..cfg.m_levels)
                .map(|j| p.cbar * j as f64 / (cfg.m_levels - 1) as f64)
                .collect()
        };
        let sigma2 = p.sigma * p.sigma;
        let mut actions = Vec::with_capacity(m_levels.len());
        for (mi, &m) in m_levels.iter().enumerate() {
            let lo = p.b * m;
            let span = p.cbar - lo;
            let mut specs = Vec::new();
            for k in 0..cfg.actions {
                let a = if span <= 0.0 {
                    p.cbar
                } else {
                    lo + span * k as f64 / (cfg.actions - 1) as f64
                };
                let drift = p.mu - a;
                // step restriction keeping the trinomial weights in [0, 1]
                if cfg.dt > cfg.dx * cfg.dx / (sigma2 + drift.abs() * cfg.dx) {
                    return Err(Error::Config(format!(
                        "dt = {} violates dt <= dx^2 / (sigma^2 + |mu - a| dx) at a = {a}",
                        cfg.dt
                    )));
                }
                let var_term = (sigma2 * cfg.dt + drift * drift * cfg.dt * cfg.dt)
                    / (cfg.dx * cfg.dx);
                let drift_term = drift * cfg.dt / cfg.dx;
                let p_up = 0.5 * (var_term + drift_term);
                let p_down = 0.5 * (var_term - drift_term);
                let p_mid = 1.0 - p_up - p_down;
                if p_up < 0.0 || p_down < 0.0 || p_mid < 0.0 {
                    return Err(Error::Config(format!(
                        "trinomial probabilities leave [0, 1] at a = {a}: ({p_up}, {p_mid}, {p_down})"
                    )));
                }
                let next_m = if a <= m + 1e-12 {
                    mi
                } else {
                    // snap the new maximum to the nearest level at or above a
                    m_levels
                        .iter()
                        .position(|&lvl| lvl >= a - 1e-12)
                        .unwrap_or(m_levels.len() - 1)
                };
                specs.push(ActionSpec {
                    reward_rate: a,
                    next_m,
                    p_up,
                    p_mid,
                    p_down,
                });
                if span <= 0.0 {
                    break; // degenerate action set at m = cbar with b = 1
                }
            }
            actions.push(specs);
        }
        Ok(DpInstance {
            x_nodes,
            m_levels,
            dt: cfg.dt,
            beta: (-p.r * cfg.dt).exp(),
            actions,
            max_sweeps: cfg.max_sweeps,
        })
    }

    fn bellman_row(&self, table: &[f64], mi: usize, out: &mut [f64]) {
        let nx = self.x_nodes.len();
        out[0] = 0.0; // absorbing, zero reward
        for j in 1..nx {
            let mut best = f64::NEG_INFINITY;
            for spec in &self.actions[mi] {
                let row = &table[spec.next_m * nx..(spec.next_m + 1) * nx];
                let up = if j + 1 < nx { row[j + 1] } else { row[j] };
                let cont = spec.p_up * up + spec.p_mid * row[j] + spec.p_down * row[j - 1];
                let q = spec.reward_rate * self.dt + self.beta * cont;
                if q > best {
                    best = q;
                }
            }
            out[j] = best;
        }
    }

    /// One full Jacobi application of the Bellman operator.
    fn sweep(&self, table: &[f64], next: &mut [f64]) -> f64 {
        let nx = self.x_nodes.len();
        next.par_chunks_mut(nx)
            .enumerate()
            .map(|(mi, out)| {
                self.bellman_row(table, mi, out);
                let row = &table[mi * nx..(mi + 1) * nx];
                out.iter()
                    .zip(row)
                    .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
            })
            .reduce(|| 0.0f64, f64::max)
    }
}

/// Converged DP table over `(x, M)`.
#[derive(Debug, Clone)]
pub struct DpTable {
    pub x_nodes: Vec<f64>,
    pub m_levels: Vec<f64>,
    /// Row-major `(m, x)` values.
    pub v: Vec<f64>,
    pub sweeps: usize,
    /// Sup-norm Bellman residual of the returned table.
    pub residual: f64,
}

impl DpTable {
    pub fn value(&self, mi: usize, j: usize) -> f64 {
        self.v[mi * self.x_nodes.len() + j]
    }
}

/// Jacobi value iteration to a sup-norm update below `tol`.
pub fn value_iteration(inst: &DpInstance, tol: f64) -> Result<DpTable> {
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::Config(format!("tol must be positive, got {tol}")));
    }
    let nx = inst.x_nodes.len();
    let n = nx * inst.m_levels.len();
    let mut table = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    for sweep in 1..=inst.max_sweeps {
        let delta = inst.sweep(&table, &mut next);
        std::mem::swap(&mut table, &mut next);
        if delta <= tol {
            // one more application measures the residual of what we return
            let residual = inst.sweep(&table, &mut next);
            return Ok(DpTable {
                x_nodes: inst.x_nodes.clone(),
                m_levels: inst.m_levels.clone(),
                v: table,
                sweeps: sweep,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        level: 0,
        iterations: inst.max_sweeps,
        last_delta: f64::NAN,
    })
}

/// Gap report between the DP table and a solver surface.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub max_rel_gap: f64,
    pub mean_rel_gap: f64,
    /// `(x, m)` of the worst node.
    pub worst_node: (f64, f64),
    /// Bellman residual of the DP table.
    pub residual: f64,
    /// Number of interior nodes compared.
    pub nodes: usize,
}

/// Interpolates the solver surface at interior DP nodes and reports relative
/// gaps. Interior means `x` at least `0.25` from the absorbing edge, half a
/// unit from the DP truncation, and inside the surface domain.
pub fn compare_surfaces(table: &DpTable, surface: &ValueSurface) -> GapReport {
    let scale = surface.params.value_scale();
    let floor = 1e-2 * scale;
    let x_hi = (table.x_nodes.last().copied().unwrap() - 0.5).min(surface.grid.x_max);
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut worst = (0.0, 0.0);
    let mut count = 0usize;
    for (mi, &m) in table.m_levels.iter().enumerate() {
        for (j, &x) in table.x_nodes.iter().enumerate() {
            if x < 0.25 || x > x_hi {
                continue;
            }
            let pde = match surface.interpolate(x, m) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let rel = (table.value(mi, j) - pde).abs() / pde.abs().max(floor);
            sum_rel += rel;
            count += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = (x, m);
            }
        }
    }
    GapReport {
        max_rel_gap: max_rel,
        mean_rel_gap: if count > 0 { sum_rel / count as f64 } else { f64::NAN },
        worst_node: worst,
        residual: table.residual,
        nodes: count,
    }
}

//! Monte Carlo verification of the computed value function.
//!
//! Paths follow `dX = (mu - C) dt + sigma dW` with ruin at zero. The optimal
//! feedback strategy raises the running maximum payout to its equivalent
//! maximum rate whenever the surplus makes a new high, and pays the full rate
//! above the converting boundary, the drawdown floor below it. Comparison
//! heuristics give the suboptimality direction.
//!
//! Paths are independent: path `k` draws from stream `k` of a counter-mode
//! generator seeded once, so results are identical no matter how the paths
//! are scheduled across threads.

use crate::boundaries::FreeBoundaries;
use crate::error::{Error, Result};
use crate::model::{Model, Regime};
use crate::solver::ValueSurface;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Monte Carlo run configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// Initial surplus.
    pub x0: f64,
    /// Initial running-maximum payout rate.
    pub c0: f64,
    /// Euler step.
    pub dt: f64,
    /// Simulated horizon; must cover at least `100 / r` so the truncation
    /// bias `e^{-r horizon} cbar / r` is negligible.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Pair paths with sign-flipped increments.
    pub antithetic: bool,
    /// Brownian-bridge correction for ruin inside a step.
    pub bridge: bool,
    /// Stop accruing once the discount factor falls below this value; the
    /// remaining contribution is bounded by `tail_epsilon * cbar / r`.
    pub tail_epsilon: f64,
    /// Record the full `(t, X, M, C)` trajectory of this many leading paths.
    pub trace_paths: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            x0: 1.0,
            c0: 0.0,
            dt: 1e-3,
            horizon: 0.0, // resolved against r at validation
            n_paths: 10_000,
            seed: 42,
            antithetic: false,
            bridge: true,
            tail_epsilon: 1e-6,
            trace_paths: 0,
        }
    }
}

impl SimConfig {
    /// Fills the horizon default (`100 / r`) and validates against the model.
    pub fn resolve(mut self, model: &Model) -> Result<Self> {
        let p = &model.params;
        if self.horizon == 0.0 {
            self.horizon = 100.0 / p.r;
        }
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon < 100.0 / p.r {
            return Err(Error::Config(format!(
                "horizon {} is below 100 / r = {}",
                self.horizon,
                100.0 / p.r
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::Config("antithetic pairing needs an even n_paths".into()));
        }
        if self.x0 < 0.0 || !self.x0.is_finite() {
            return Err(Error::Config(format!("x0 must be finite and >= 0, got {}", self.x0)));
        }
        if !(0.0..=p.cbar).contains(&self.c0) {
            return Err(Error::Config(format!("c0 must lie in [0, {}], got {}", p.cbar, self.c0)));
        }
        if !(0.0..1.0).contains(&self.tail_epsilon) {
            return Err(Error::Config("tail_epsilon must lie in [0, 1)".into()));
        }
        Ok(self)
    }
}

/// Aggregate of one Monte Carlo run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Mean discounted payout.
    pub estimate: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    /// Fraction of paths ruined before the simulation stopped (horizon or
    /// discount cutoff).
    pub ruin_fraction: f64,
    /// Mean ruin time over ruined paths; `None` when no path ruined.
    pub mean_ruin_time: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

/// One recorded trajectory, step granular.
#[derive(Debug, Clone, Default)]
pub struct PathTrace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub max_rate: Vec<f64>,
    pub rate: Vec<f64>,
}

/// Named payout strategies the simulator can drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Feedback strategy from the solved surface: running-maximum update via
    /// the equivalent maximum rate, payout switched at the converting
    /// boundary.
    Optimal,
    /// Closed-form boundary-case strategy: full rate at or above the free
    /// point, drawdown floor below.
    BoundaryCase,
    /// Constant payout rate.
    ConstantRate(f64),
    /// Ratchets the payout to `cbar * min(1, x / x_ref)` and never lets it
    /// fall.
    RatchetGreedy,
    /// Full rate above the barrier switch point, nothing below; admissible
    /// only without a drawdown floor.
    UnconstrainedBarrier,
}

/// Payout rate of the optimal feedback strategy at surplus `x` and running
/// maximum rate `m`.
pub fn step_optimal(x: f64, m: f64, b: f64, fb: &FreeBoundaries) -> f64 {
    let indicator = if x >= fb.converting_at(m) { 1.0 } else { 0.0 };
    (b + (1.0 - b) * indicator) * m
}

trait PayoutPolicy: Clone + Send + Sync {
    /// Called once per step with the current surplus and the running maximum
    /// of the surplus; returns the payout rate and maintains the running
    /// maximum payout internally.
    fn rate(&mut self, x: f64, run_max_x: f64) -> f64;
    fn max_rate(&self) -> f64;
}

#[derive(Clone)]
struct OptimalPolicy<'a> {
    surface: &'a ValueSurface,
    fb: &'a FreeBoundaries,
    b: f64,
    eps: f64,
    level: usize,
    on_grid: bool,
    m: f64,
    y_thresh: f64,
    last_max: f64,
}

impl<'a> OptimalPolicy<'a> {
    fn new(surface: &'a ValueSurface, fb: &'a FreeBoundaries, b: f64, c0: f64) -> Self {
        let cbar = surface.params.cbar;
        let dc = surface.grid.dc(cbar);
        // index of the lowest level at or above c0
        let level = (((cbar - c0) / dc).floor() as usize).min(surface.nc());
        let on_grid = (surface.c_levels[level] - c0).abs() <= 1e-12 * cbar.max(1.0);
        let m = if on_grid { surface.c_levels[level] } else { c0 };
        OptimalPolicy {
            surface,
            fb,
            b,
            eps: fb.eps_fb,
            level,
            on_grid,
            m,
            y_thresh: fb.converting_at(m),
            last_max: f64::NEG_INFINITY,
        }
    }

    fn row_at(&self, i: usize, x: f64) -> f64 {
        let dx = self.surface.grid.dx();
        let j = ((x / dx) as usize).min(self.surface.nx() - 1);
        let t = (x - self.surface.x_nodes[j]) / dx;
        self.surface.v[i][j] * (1.0 - t) + self.surface.v[i][j + 1] * t
    }

    fn raise_to_equivalent_max(&mut self, run_max_x: f64) {
        let xe = run_max_x.clamp(self.surface.grid.dx(), self.surface.grid.x_max);
        let mut moved = false;
        if !self.on_grid {
            let here = self.surface.interpolate(xe, self.m).unwrap_or(f64::INFINITY);
            if here - self.row_at(self.level, xe) <= self.eps {
                self.on_grid = true;
                self.m = self.surface.c_levels[self.level];
                moved = true;
            }
        }
        if self.on_grid {
            while self.level > 0 {
                let gap = self.row_at(self.level, xe) - self.row_at(self.level - 1, xe);
                if gap <= self.eps {
                    self.level -= 1;
                    self.m = self.surface.c_levels[self.level];
                    moved = true;
                } else {
                    break;
                }
            }
        }
        if moved {
            self.y_thresh = self.fb.converting_at(self.m);
        }
    }
}

impl PayoutPolicy for OptimalPolicy<'_> {
    fn rate(&mut self, x: f64, run_max_x: f64) -> f64 {
        if run_max_x > self.last_max {
            self.last_max = run_max_x;
            self.raise_to_equivalent_max(run_max_x);
        }
        if x >= self.y_thresh {
            self.m
        } else {
            self.b * self.m
        }
    }

    fn max_rate(&self) -> f64 {
        self.m
    }
}

#[derive(Clone)]
struct BoundaryCasePolicy {
    cbar: f64,
    b: f64,
    y0: f64,
    m: f64,
}

impl PayoutPolicy for BoundaryCasePolicy {
    fn rate(&mut self, x: f64, _run_max_x: f64) -> f64 {
        let c = if x >= self.y0 { self.cbar } else { self.b * self.cbar };
        self.m = self.m.max(c);
        c
    }

    fn max_rate(&self) -> f64 {
        self.m
    }
}

#[derive(Clone)]
struct ConstantPolicy {
    rate: f64,
    m: f64,
}

impl PayoutPolicy for ConstantPolicy {
    fn rate(&mut self, _x: f64, _run_max_x: f64) -> f64 {
        self.rate
    }

    fn max_rate(&self) -> f64 {
        self.m
    }
}

#[derive(Clone)]
struct RatchetGreedyPolicy {
    cbar: f64,
    x_ref: f64,
    m: f64,
}

impl PayoutPolicy for RatchetGreedyPolicy {
    fn rate(&mut self, x: f64, _run_max_x: f64) -> f64 {
        let target = self.cbar * (x / self.x_ref).min(1.0);
        self.m = self.m.max(target);
        self.m
    }

    fn max_rate(&self) -> f64 {
        self.m
    }
}

#[derive(Clone)]
struct BarrierPolicy {
    cbar: f64,
    threshold: f64,
    m: f64,
}

impl PayoutPolicy for BarrierPolicy {
    fn rate(&mut self, x: f64, _run_max_x: f64) -> f64 {
        let c = if x >= self.threshold { self.cbar } else { 0.0 };
        self.m = self.m.max(c);
        c
    }

    fn max_rate(&self) -> f64 {
        self.m
    }
}

struct PathResult {
    payout: f64,
    ruined: bool,
    ruin_time: f64,
}

fn run_one<P: PayoutPolicy>(
    model: &Model,
    cfg: &SimConfig,
    policy: &mut P,
    stream: u64,
    flip: bool,
    trace: Option<&mut PathTrace>,
) -> PathResult {
    let p = &model.params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let step_disc = (-p.r * dt).exp();
    let pay_weight = (1.0 - step_disc) / p.r;
    let sign = if flip { -1.0 } else { 1.0 };
    // bridge probability is negligible unless x_old * x_new is of the order
    // sigma^2 dt; 18.5 makes the skipped mass below 1e-16
    let bridge_guard = 18.5 * p.sigma * p.sigma * dt;

    let mut x = cfg.x0;
    let mut run_max = x;
    let mut t = 0.0;
    let mut disc = 1.0;
    let mut payout = 0.0;
    let mut trace = trace;

    if x <= 0.0 {
        return PathResult { payout: 0.0, ruined: true, ruin_time: 0.0 };
    }

    while t < cfg.horizon && disc > cfg.tail_epsilon {
        run_max = run_max.max(x);
        let c = policy.rate(x, run_max);
        if let Some(tr) = trace.as_deref_mut() {
            tr.t.push(t);
            tr.x.push(x);
            tr.max_rate.push(policy.max_rate());
            tr.rate.push(c);
        }
        let z: f64 = rng.sample(StandardNormal);
        let x_new = x + (p.mu - c) * dt + p.sigma * sqrt_dt * sign * z;
        if x_new <= 0.0 {
            payout += 0.5 * c * disc * pay_weight;
            return PathResult { payout, ruined: true, ruin_time: t + dt };
        }
        if cfg.bridge && x * x_new < bridge_guard {
            let p_hit = (-2.0 * x * x_new / (p.sigma * p.sigma * dt)).exp();
            let u: f64 = rng.random();
            if u < p_hit {
                payout += 0.5 * c * disc * pay_weight;
                return PathResult { payout, ruined: true, ruin_time: t + 0.5 * dt };
            }
        }
        payout += c * disc * pay_weight;
        x = x_new;
        t += dt;
        disc *= step_disc;
    }
    // telescoping discount sum keeps every path below the perpetuity value
    debug_assert!(payout <= p.cbar / p.r * (1.0 + 1e-9));
    PathResult { payout, ruined: false, ruin_time: f64::NAN }
}

fn aggregate(results: &[PathResult], cfg: &SimConfig) -> SimOutcome {
    // payouts per independent sampling unit: antithetic pairs average first
    let units: Vec<f64> = if cfg.antithetic {
        results
            .chunks(2)
            .map(|pair| 0.5 * (pair[0].payout + pair[1].payout))
            .collect()
    } else {
        results.iter().map(|r| r.payout).collect()
    };
    let n = units.len() as f64;
    let mean = neumaier_sum(&units) / n;
    let var = if units.len() > 1 {
        let sq: Vec<f64> = units.iter().map(|u| (u - mean) * (u - mean)).collect();
        neumaier_sum(&sq) / (n - 1.0)
    } else {
        0.0
    };
    let stderr = (var / n).sqrt();
    let ruined: Vec<&PathResult> = results.iter().filter(|r| r.ruined).collect();
    let ruin_fraction = ruined.len() as f64 / results.len() as f64;
    let mean_ruin_time = if ruined.is_empty() {
        None
    } else {
        let times: Vec<f64> = ruined.iter().map(|r| r.ruin_time).collect();
        Some(neumaier_sum(&times) / times.len() as f64)
    };
    SimOutcome {
        estimate: mean,
        stderr,
        ruin_fraction,
        mean_ruin_time,
        n_paths: results.len(),
        seed: cfg.seed,
    }
}

/// Compensated sequential sum; independent of any parallel schedule.
fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn run_paths<P: PayoutPolicy>(
    model: &Model,
    cfg: &SimConfig,
    policy: &P,
) -> (Vec<PathResult>, Vec<PathTrace>) {
    let results: Vec<PathResult> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let (stream, flip) = if cfg.antithetic {
                ((k / 2 + 1) as u64, k % 2 == 1)
            } else {
                ((k + 1) as u64, false)
            };
            let mut pol = policy.clone();
            run_one(model, cfg, &mut pol, stream, flip, None)
        })
        .collect();
    // traces re-run the leading paths; cheap relative to the full set
    let traces: Vec<PathTrace> = (0..cfg.trace_paths.min(cfg.n_paths))
        .map(|k| {
            let (stream, flip) = if cfg.antithetic {
                ((k / 2 + 1) as u64, k % 2 == 1)
            } else {
                ((k + 1) as u64, false)
            };
            let mut pol = policy.clone();
            let mut tr = PathTrace::default();
            run_one(model, cfg, &mut pol, stream, flip, Some(&mut tr));
            tr
        })
        .collect();
    (results, traces)
}

/// Simulates the optimal feedback strategy against a solved surface.
pub fn simulate_optimal(
    model: &Model,
    surface: &ValueSurface,
    fb: &FreeBoundaries,
    cfg: &SimConfig,
) -> Result<SimOutcome> {
    Ok(simulate_optimal_traced(model, surface, fb, cfg)?.0)
}

pub fn simulate_optimal_traced(
    model: &Model,
    surface: &ValueSurface,
    fb: &FreeBoundaries,
    cfg: &SimConfig,
) -> Result<(SimOutcome, Vec<PathTrace>)> {
    let cfg = cfg.resolve(model)?;
    if cfg.x0 > 0.5 * surface.grid.x_max {
        return Err(Error::Config(format!(
            "x0 = {} exceeds half the solved domain {}",
            cfg.x0, surface.grid.x_max
        )));
    }
    let policy = OptimalPolicy::new(surface, fb, model.params.b, cfg.c0);
    let (results, traces) = run_paths(model, &cfg, &policy);
    Ok((aggregate(&results, &cfg), traces))
}

/// Simulates the closed-form boundary-case strategy (full rate at or above
/// the free point). In the simple regime this is the constant full rate.
pub fn simulate_boundary_case(model: &Model, cfg: &SimConfig) -> Result<SimOutcome> {
    let cfg = cfg.resolve(model)?;
    let p = &model.params;
    let y0 = match model.regime {
        Regime::Simple => 0.0,
        Regime::Complicated => model.free_point()?,
    };
    let policy = BoundaryCasePolicy { cbar: p.cbar, b: p.b, y0, m: cfg.c0 };
    let (results, _) = run_paths(model, &cfg, &policy);
    Ok(aggregate(&results, &cfg))
}

/// Simulates a comparison heuristic, rejecting inadmissible ones.
pub fn simulate_comparison(model: &Model, strategy: Strategy, cfg: &SimConfig) -> Result<SimOutcome> {
    let cfg = cfg.resolve(model)?;
    let p = &model.params;
    match strategy {
        Strategy::ConstantRate(a) => {
            if a > p.cbar + 1e-12 || a < 0.0 {
                return Err(Error::Admissibility(format!(
                    "constant rate {a} outside [0, {}]",
                    p.cbar
                )));
            }
            if a < p.b * cfg.c0 - 1e-12 {
                return Err(Error::Admissibility(format!(
                    "constant rate {a} below the drawdown floor b * c0 = {}",
                    p.b * cfg.c0
                )));
            }
            let policy = ConstantPolicy { rate: a, m: cfg.c0.max(a) };
            let (results, _) = run_paths(model, &cfg, &policy);
            Ok(aggregate(&results, &cfg))
        }
        Strategy::RatchetGreedy => {
            let x_ref = model.consts.y0.unwrap_or(model.consts.x_infty);
            let policy = RatchetGreedyPolicy { cbar: p.cbar, x_ref, m: cfg.c0 };
            let (results, _) = run_paths(model, &cfg, &policy);
            Ok(aggregate(&results, &cfg))
        }
        Strategy::UnconstrainedBarrier => {
            if p.b > 0.0 {
                return Err(Error::Admissibility(
                    "the unconstrained barrier pays nothing below its threshold, \
                     which violates a positive drawdown floor"
                        .into(),
                ));
            }
            let policy = BarrierPolicy {
                cbar: p.cbar,
                threshold: model.consts.x_infty,
                m: cfg.c0,
            };
            let (results, _) = run_paths(model, &cfg, &policy);
            Ok(aggregate(&results, &cfg))
        }
        Strategy::BoundaryCase => simulate_boundary_case(model, &cfg),
        Strategy::Optimal => Err(Error::Config(
            "the optimal strategy needs a solved surface; call simulate_optimal".into(),
        )),
    }
}

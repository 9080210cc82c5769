//! Market parameters, derived constants and the closed-form solutions.
//!
//! The surplus follows `dX = (mu - C) dt + sigma dW` and dividends are paid at
//! rate `C` constrained to `[b * M, cbar]` where `M` is the running maximum of
//! `C`. Everything here is a pure function of the five primitive parameters:
//! the roots of the characteristic quadratics, the value of the top payout
//! level (the boundary case), the simple-regime value, and the barrier
//! super-solution used as an upper bound by the recursion solver.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Primitive market and constraint parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drift rate of the surplus before dividends (per unit time).
    pub mu: f64,
    /// Volatility rate (per sqrt time), strictly positive.
    pub sigma: f64,
    /// Discount rate (per unit time), strictly positive.
    pub r: f64,
    /// Maximum allowed dividend payout rate, in `(0, mu]`.
    pub cbar: f64,
    /// Drawdown proportion in `[0, 1]`; the payout rate may never fall below
    /// `b` times its historical maximum.
    pub b: f64,
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, r: f64, cbar: f64, b: f64) -> Result<Self> {
        let p = ModelParams { mu, sigma, r, cbar, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !self.mu.is_finite() || !self.sigma.is_finite() || !self.r.is_finite()
            || !self.cbar.is_finite() || !self.b.is_finite()
        {
            return bad("all parameters must be finite".into());
        }
        if self.sigma <= 0.0 {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if self.r <= 0.0 {
            return bad(format!("r must be > 0, got {}", self.r));
        }
        if self.cbar <= 0.0 || self.cbar > self.mu {
            return bad(format!(
                "cbar must lie in (0, mu] = (0, {}], got {}",
                self.mu, self.cbar
            ));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return bad(format!("b must lie in [0, 1], got {}", self.b));
        }
        Ok(())
    }

    /// Upper bound `cbar / r` on every value in the problem.
    pub fn value_scale(&self) -> f64 {
        self.cbar / self.r
    }
}

/// Which of the two qualitative cases the parameters fall into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `2 mu cbar <= sigma^2 r`: the value function is a single exponential,
    /// independent of the running maximum, and paying at `cbar` is optimal.
    Simple,
    /// `2 mu cbar > sigma^2 r`: two free boundaries appear and the value
    /// function genuinely depends on the running maximum.
    Complicated,
}

/// Classifies the regime by the primitive test `2 mu cbar <= sigma^2 r`.
///
/// Equivalently `cbar * gamma <= r`; the two tests agree for all valid
/// parameters.
pub fn classify_regime(p: &ModelParams) -> Regime {
    if 2.0 * p.mu * p.cbar <= p.sigma * p.sigma * p.r {
        Regime::Simple
    } else {
        Regime::Complicated
    }
}

/// Roots and coefficients of the closed forms, all derived from [`ModelParams`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Positive root of `-sigma^2/2 g^2 + (mu - cbar) g + r = 0`.
    pub gamma: f64,
    /// Positive root of `-sigma^2/2 l^2 - (mu - b cbar) l + r = 0`.
    pub lambda1: f64,
    /// Positive root of `-sigma^2/2 l^2 + (mu - b cbar) l + r = 0`.
    pub lambda2: f64,
    /// Coefficient of the growing exponential in the two-piece value.
    pub k1: f64,
    /// Coefficient of the decaying exponential; positive in the complicated
    /// regime.
    pub k2: f64,
    /// Free point of the boundary case; present only in the complicated
    /// regime.
    pub y0: Option<f64>,
    /// Positive root of `-sigma^2/2 t^2 + mu t + r = 0`.
    pub theta1: f64,
    /// Positive root of `-sigma^2/2 t^2 - mu t + r = 0`.
    pub theta2: f64,
    /// Switch point of the barrier super-solution.
    pub x_infty: f64,
    /// Barrier coefficient below the switch point.
    pub kbar1: f64,
    /// Barrier offset above the switch point.
    pub kbar2: f64,
}

impl DerivedConstants {
    pub fn derive(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        let s2 = p.sigma * p.sigma;
        let gamma = ((p.mu - p.cbar).powi(2) + 2.0 * s2 * p.r).sqrt() + (p.mu - p.cbar);
        let gamma = gamma / s2;
        let disc = ((p.mu - p.b * p.cbar).powi(2) + 2.0 * s2 * p.r).sqrt();
        let lambda1 = (disc - (p.mu - p.b * p.cbar)) / s2;
        let lambda2 = (disc + (p.mu - p.b * p.cbar)) / s2;
        let spread = (1.0 - p.b) * p.cbar / p.r - 1.0 / gamma;
        let k1 = (1.0 + lambda2 * spread) / (lambda1 + lambda2);
        let k2 = (1.0 - lambda1 * spread) / (lambda1 + lambda2);

        let bdisc = (p.mu * p.mu + 2.0 * s2 * p.r).sqrt();
        let theta1 = (p.mu + bdisc) / s2;
        let theta2 = (-p.mu + bdisc) / s2;
        let x_infty = 2.0 / (theta1 + theta2) * (theta1 / theta2).ln();
        let kbar1 = 1.0 / (theta2 * (theta2 * x_infty).exp() + theta1 * (-theta1 * x_infty).exp());
        // Continuity of the barrier at the switch point pins the offset.
        let kbar2 = kbar1 * ((theta2 * x_infty).exp() - (-theta1 * x_infty).exp()) - x_infty;

        let y0 = match classify_regime(p) {
            Regime::Simple => None,
            Regime::Complicated => Some(solve_free_point(p, k1, k2, lambda1, lambda2)?),
        };

        Ok(DerivedConstants {
            gamma,
            lambda1,
            lambda2,
            k1,
            k2,
            y0,
            theta1,
            theta2,
            x_infty,
            kbar1,
            kbar2,
        })
    }

    /// Residuals of the five characteristic quadratics at the stored roots.
    pub fn quadratic_residuals(&self, p: &ModelParams) -> [f64; 5] {
        let s2h = 0.5 * p.sigma * p.sigma;
        [
            -s2h * self.gamma * self.gamma + (p.mu - p.cbar) * self.gamma + p.r,
            -s2h * self.lambda1 * self.lambda1 - (p.mu - p.b * p.cbar) * self.lambda1 + p.r,
            -s2h * self.lambda2 * self.lambda2 + (p.mu - p.b * p.cbar) * self.lambda2 + p.r,
            -s2h * self.theta1 * self.theta1 + p.mu * self.theta1 + p.r,
            -s2h * self.theta2 * self.theta2 - p.mu * self.theta2 + p.r,
        ]
    }

    /// Residual of the identity `lambda1 k1 + lambda2 k2 = 1`.
    pub fn coefficient_identity_residual(&self) -> f64 {
        self.lambda1 * self.k1 + self.lambda2 * self.k2 - 1.0
    }
}

/// Root of `f(y) = k1 e^{-l1 y} - k2 e^{l2 y} + b cbar / r` on `(0, inf)`.
///
/// `f` is strictly decreasing with `f(0) = cbar/r - 1/gamma > 0` in the
/// complicated regime, so a doubling bracket plus bisection cannot fail; two
/// Newton steps polish the bisection result.
fn solve_free_point(p: &ModelParams, k1: f64, k2: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    let shift = p.b * p.cbar / p.r;
    let f = |y: f64| k1 * (-lambda1 * y).exp() - k2 * (lambda2 * y).exp() + shift;
    let fd = |y: f64| -lambda1 * k1 * (-lambda1 * y).exp() - lambda2 * k2 * (lambda2 * y).exp();

    if f(0.0) <= 0.0 {
        // Cannot occur for valid complicated-regime inputs.
        return Err(Error::NoRoot(format!(
            "free-point bracket failed: f(0) = {} <= 0",
            f(0.0)
        )));
    }
    let mut hi = 1.0;
    while f(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e18 {
            return Err(Error::NoRoot("free-point bracket failed: f stays positive".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..2 {
        y -= f(y) / fd(y);
    }
    Ok(y)
}

/// Bundles parameters, regime and derived constants; every closed form hangs
/// off this.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub params: ModelParams,
    pub regime: Regime,
    pub consts: DerivedConstants,
    /// Residual of the two-piece value at the origin (root-finding leaves a
    /// few ulps); subtracted so the boundary condition holds exactly.
    origin_defect: f64,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let consts = DerivedConstants::derive(&params)?;
        let origin_defect = match consts.y0 {
            Some(y0) => {
                consts.k1 * (-consts.lambda1 * y0).exp() - consts.k2 * (consts.lambda2 * y0).exp()
                    + params.b * params.cbar / params.r
            }
            None => 0.0,
        };
        Ok(Model {
            params,
            regime: classify_regime(&params),
            consts,
            origin_defect,
        })
    }

    fn check_nonneg(x: f64) -> Result<()> {
        if x < 0.0 || !x.is_finite() {
            return Err(Error::Domain(format!("x must be finite and >= 0, got {x}")));
        }
        Ok(())
    }

    /// Free point of the boundary case; errors in the simple regime.
    pub fn free_point(&self) -> Result<f64> {
        self.consts
            .y0
            .ok_or_else(|| Error::NoRoot("no free point in the simple regime".into()))
    }

    /// Value of the boundary case (running maximum pinned at `cbar`).
    pub fn boundary_value(&self, x: f64) -> Result<f64> {
        Self::check_nonneg(x)?;
        let p = &self.params;
        let d = &self.consts;
        match self.regime {
            Regime::Simple => Ok(p.cbar / p.r * (1.0 - (-d.gamma * x).exp())),
            Regime::Complicated => {
                let y0 = self.free_point()?;
                if x <= y0 {
                    Ok(d.k1 * (d.lambda1 * (x - y0)).exp() - d.k2 * (-d.lambda2 * (x - y0)).exp()
                        + p.b * p.cbar / p.r
                        - self.origin_defect)
                } else {
                    Ok(-(-d.gamma * (x - y0)).exp() / d.gamma + p.cbar / p.r)
                }
            }
        }
    }

    /// First derivative of the boundary-case value.
    pub fn boundary_value_dx(&self, x: f64) -> Result<f64> {
        Self::check_nonneg(x)?;
        let p = &self.params;
        let d = &self.consts;
        match self.regime {
            Regime::Simple => Ok(p.cbar * d.gamma / p.r * (-d.gamma * x).exp()),
            Regime::Complicated => {
                let y0 = self.free_point()?;
                if x <= y0 {
                    Ok(d.lambda1 * d.k1 * (d.lambda1 * (x - y0)).exp()
                        + d.lambda2 * d.k2 * (-d.lambda2 * (x - y0)).exp())
                } else {
                    Ok((-d.gamma * (x - y0)).exp())
                }
            }
        }
    }

    /// Second derivative of the boundary-case value.
    pub fn boundary_value_dxx(&self, x: f64) -> Result<f64> {
        Self::check_nonneg(x)?;
        let p = &self.params;
        let d = &self.consts;
        match self.regime {
            Regime::Simple => Ok(-p.cbar * d.gamma * d.gamma / p.r * (-d.gamma * x).exp()),
            Regime::Complicated => {
                let y0 = self.free_point()?;
                if x <= y0 {
                    Ok(d.lambda1 * d.lambda1 * d.k1 * (d.lambda1 * (x - y0)).exp()
                        - d.lambda2 * d.lambda2 * d.k2 * (-d.lambda2 * (x - y0)).exp())
                } else {
                    Ok(-d.gamma * (-d.gamma * (x - y0)).exp())
                }
            }
        }
    }

    /// Simple-regime value, independent of the running maximum `c`.
    pub fn simple_value(&self, x: f64, c: f64) -> Result<f64> {
        if self.regime != Regime::Simple {
            return Err(Error::Regime(
                "simple-case value requested in the complicated regime".into(),
            ));
        }
        Self::check_nonneg(x)?;
        if !(0.0..=self.params.cbar).contains(&c) {
            return Err(Error::Domain(format!(
                "c must lie in [0, {}], got {c}",
                self.params.cbar
            )));
        }
        Ok(self.params.cbar / self.params.r * (1.0 - (-self.consts.gamma * x).exp()))
    }

    /// Barrier super-solution: dominates every level of the recursion and has
    /// slope >= 1 everywhere.
    pub fn barrier_value(&self, x: f64) -> Result<f64> {
        Self::check_nonneg(x)?;
        let d = &self.consts;
        if x < d.x_infty {
            Ok(d.kbar1 * ((d.theta2 * x).exp() - (-d.theta1 * x).exp()))
        } else {
            Ok(d.kbar2 + x)
        }
    }

    /// First derivative of the barrier super-solution.
    pub fn barrier_value_dx(&self, x: f64) -> Result<f64> {
        Self::check_nonneg(x)?;
        let d = &self.consts;
        if x < d.x_infty {
            Ok(d.kbar1 * (d.theta2 * (d.theta2 * x).exp() + d.theta1 * (-d.theta1 * x).exp()))
        } else {
            Ok(1.0)
        }
    }

    /// Optimal payout rate of the boundary case at surplus `x`.
    pub fn boundary_strategy_rate(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.regime {
            Regime::Simple => p.cbar,
            Regime::Complicated => {
                let y0 = self.consts.y0.expect("complicated regime has a free point");
                if x >= y0 {
                    p.cbar
                } else {
                    p.b * p.cbar
                }
            }
        }
    }

    /// The gradient-constraint term `max_{d in [b,1]} d (1 - vx)`.
    pub fn gradient_constraint(&self, vx: f64) -> f64 {
        let b = self.params.b;
        b * (1.0 - vx) + (1.0 - b) * (1.0 - vx).max(0.0)
    }

    /// Residual of the stationarity operator at payout level `c`:
    /// `-(sigma^2/2 vxx + mu vx - r v) - c T(vx)`.
    pub fn hjb_residual(&self, c: f64, v: f64, vx: f64, vxx: f64) -> f64 {
        let p = &self.params;
        -(0.5 * p.sigma * p.sigma * vxx + p.mu * vx - p.r * v) - c * self.gradient_constraint(vx)
    }
}

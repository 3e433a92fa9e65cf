//! Constants appearing in the controller's guarantees.
//!
//! Everything here is a closed-form function of the bounds, the controller
//! knobs and (optionally) the Slater margin. Penalty-dependent quantities are
//! evaluated on the reweighted process `w * Y`, so the bounds `y_min`, `y_max`,
//! `c` and the margin `s` are all scaled by `w` first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, AlgoParams, Bounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Constant term of the per-task drift bound.
    pub b: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub rho: Option<f64>,
    pub d: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Optimal ratio used for `d2`; `None` means `d2` was evaluated at the
    /// upper bound `r_max / t_min`.
    pub theta_star_hint: Option<f64>,
}

impl DerivedConstants {
    /// Deterministic upper bound on the duration queue: `v (beta1 + beta2)`.
    pub fn j_bound(&self, v: f64) -> f64 {
        v * (self.beta1 + self.beta2)
    }

    /// Recomputes `d2` for a known optimal ratio.
    pub fn with_theta_star(mut self, bounds: &Bounds, params: &AlgoParams, theta_star: f64) -> Self {
        self.d2 = d2(bounds, params, &self, theta_star);
        self.theta_star_hint = Some(theta_star);
        self
    }

    /// Additive gap in the reward guarantee over any `m` consecutive tasks:
    /// `d1/v + v d2/m + (r_max/t_min)/m`.
    pub fn reward_gap(&self, bounds: &Bounds, v: f64, m: f64) -> f64 {
        self.d1 / v + v * self.d2 / m + (bounds.r_max / bounds.t_min) / m
    }
}

pub fn derive_constants(
    bounds: &Bounds,
    params: &AlgoParams,
    slater_s: Option<f64>,
) -> Result<DerivedConstants> {
    bounds.validate()?;
    params.validate(bounds.n())?;
    if let Some(s) = slater_s {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParams(format!(
                "Slater margin must be positive and finite, got {s}"
            )));
        }
        if bounds.n() == 0 {
            return Err(Error::InvalidParams(
                "a Slater margin needs at least one penalty process".into(),
            ));
        }
    }

    let eb = bounds.weighted(params.w);
    let (t_min, t_max, r_max, c) = (eb.t_min, eb.t_max, eb.r_max, eb.c);
    let (v, alpha) = (params.v, params.alpha);

    let gamma_min = 1.0 / t_max;
    let gamma_max = 1.0 / t_min;
    let b = 0.5 * (c * c + (t_max - t_min) * (t_max - t_min));
    let qy: f64 = params.q.iter().zip(&eb.y_min).map(|(q, y)| q * y).sum();
    let beta1 = (1.0 + r_max + qy) / t_min;
    let steps = (alpha * v * gamma_max * (gamma_max - gamma_min)).ceil();
    let beta2 = (1.0 / v) * steps * (t_max - t_min);

    let (c1, c2) = fine_tuning_terms(bounds);

    let mut out = DerivedConstants {
        gamma_min,
        gamma_max,
        b,
        beta1,
        beta2,
        d0: 0.0,
        d1: 0.0,
        d2: 0.0,
        lambda: None,
        eta: None,
        rho: None,
        d: None,
        c1,
        c2,
        theta_star_hint: None,
    };

    let q_norm = norm(&params.q);
    let spread = r_max + c * q_norm + (t_max - t_min) * (beta1 + beta2);
    out.d1 = (b + (1.0 / (2.0 * gamma_min * gamma_min * alpha)) * spread * spread) / t_min;
    out.d2 = d2(bounds, params, &out, r_max / t_min);
    out.d0 = 2.0 * r_max + 2.0 * (beta1 + beta2) * (t_max - t_min) + c * c / v;

    if let Some(raw_s) = slater_s {
        let s = raw_s * params.w;
        if s > c * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!(
                "Slater margin {s} exceeds the penalty norm bound c = {c}"
            )));
        }
        let lambda = (v * out.d0 / s - s / 4.0).max(s / 2.0);
        let eta = (s / 2.0) / (c * c + c * s / 6.0);
        let rho = 1.0 - eta * s / 4.0;
        let d = ((eta * c).exp() - rho) * (eta * lambda).exp() / (1.0 - rho);
        out.lambda = Some(lambda);
        out.eta = Some(eta);
        out.rho = Some(rho);
        out.d = Some(d);
    }
    Ok(out)
}

fn d2(bounds: &Bounds, params: &AlgoParams, k: &DerivedConstants, theta: f64) -> f64 {
    let q_norm = norm(&params.q);
    let beta = k.beta1 + k.beta2;
    let width = k.gamma_max - k.gamma_min;
    (0.5 * q_norm * q_norm + 0.5 * beta * beta + (params.alpha / 2.0) * width * width + theta * beta)
        / bounds.t_min
}

/// `(c1, c2)` of the fine-tuned stepsize ratio.
pub fn fine_tuning_terms(bounds: &Bounds) -> (f64, f64) {
    let (t_min, t_max, r_max) = (bounds.t_min, bounds.t_max, bounds.r_max);
    let c1 = r_max + (t_max - t_min) * (1.0 + r_max) / t_min;
    let c2 = ((t_max - t_min) / t_min) * (t_max / t_min + t_min / t_max - 2.0);
    (c1, c2)
}

/// `alpha = c1 / max(c2, 1/2)`, the value minimizing the non-vanishing
/// part of the reward gap when `n = 0`.
pub fn tune_alpha(bounds: &Bounds) -> Result<f64> {
    bounds.validate()?;
    let (c1, c2) = fine_tuning_terms(bounds);
    Ok(c1 / c2.max(0.5))
}

/// Per-penalty cap multiplier `q1 = 2 d0 / s` with every `q_i = q1`.
///
/// `d0` is evaluated with `q = 0`: through `beta1` it otherwise depends on
/// `q` itself and the inequality `q1 >= 2 d0(q1) / s` generally has no
/// solution.
pub fn constraint_cap(bounds: &Bounds, v: f64, alpha: f64, w: f64, slater_s: f64) -> Result<Vec<f64>> {
    let n = bounds.n();
    let probe = AlgoParams::new(v, alpha, vec![0.0; n]).with_weight(w);
    let k = derive_constants(bounds, &probe, Some(slater_s))?;
    let q1 = 2.0 * k.d0 / (slater_s * w);
    Ok(vec![q1; n])
}
